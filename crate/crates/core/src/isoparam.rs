//! Time-dependent isoparametric mapping.
//!
//! On every slab the undeformed (piecewise linear) geometry is pushed
//! towards the zero set of a higher-order interpolant `phi_h` by a
//! continuous `P^{q_s}` displacement field given at the `q_t + 1`
//! Gauss-Lobatto times of the slab and interpolated in between. The time
//! coordinate is left untouched.

use std::sync::Arc;

use crate::basis::Lagrange1d;
use crate::error::{Error, Result};
use crate::levelset::{ActiveSets, LevelsetField, SlabLevelsetLin};
use crate::mesh::{BackgroundMesh, LagrangeNodes};
use crate::quadrature::{triangle_rule, RuleTag};

/// Smallest admissible determinant of the spatial mapping Jacobian.
pub const MIN_DET: f64 = 1e-12;

const ROOT_TOL: f64 = 1e-13;

/// Nodal `P^{q_s}` interpolant of `phi` at a set of slab times.
#[derive(Clone, Debug)]
pub struct HoLevelset {
    pub taus: Vec<f64>,
    /// `values[j][node]` at reference time `taus[j]`.
    pub values: Vec<Vec<f64>>,
}

fn slab_time(t_start: f64, dt: f64, tau: f64) -> f64 {
    if tau == 1.0 {
        t_start + dt
    } else {
        t_start + tau * dt
    }
}

/// Lagrange interpolation of `phi(., t_j)` on the global nodes at each `tau_j`.
pub fn interpolate_ho_levelset<L: LevelsetField + ?Sized>(
    phi: &L,
    nodes: &LagrangeNodes,
    t_start: f64,
    dt: f64,
    taus: &[f64],
) -> HoLevelset {
    let values = taus
        .iter()
        .map(|&tau| {
            let t = slab_time(t_start, dt, tau);
            nodes.coords.iter().map(|&x| phi.phi(x, t)).collect()
        })
        .collect();
    HoLevelset {
        taus: taus.to_vec(),
        values,
    }
}

impl HoLevelset {
    /// Value of the interpolant on element `e` at reference point `xi`, time node `j`.
    pub fn eval(&self, nodes: &LagrangeNodes, e: usize, xi: [f64; 2], j: usize) -> f64 {
        let (v, _) = nodes.basis.eval::<f64>(xi);
        nodes.element_nodes[e]
            .iter()
            .zip(&v)
            .map(|(&g, b)| self.values[j][g] * b)
            .sum()
    }
}

/// Result of evaluating the mapping at one space-time reference point.
#[derive(Clone, Copy, Debug)]
pub struct MappingEval {
    /// Mapped physical point `Theta(xi, t)`.
    pub x: [f64; 2],
    /// `d Theta / d x_lin`, the Jacobian with respect to the undeformed position.
    pub jac: [[f64; 2]; 2],
    /// `d Theta / d xi` with respect to reference-triangle coordinates.
    pub jac_ref: [[f64; 2]; 2],
    /// Mesh velocity `d_t Theta`.
    pub vel: [f64; 2],
    /// `det(jac)`.
    pub det: f64,
}

impl MappingEval {
    /// Physical gradient from a reference gradient: `jac_ref^{-T} g`.
    #[inline]
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let j = &self.jac_ref;
        let d = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        [
            (j[1][1] * g[0] - j[1][0] * g[1]) / d,
            (-j[0][1] * g[0] + j[0][0] * g[1]) / d,
        ]
    }
}

/// Unit normal `n_h = J^{-T} n_lin / |J^{-T} n_lin|` of the mapped interface and
/// the surface measure factor `det J |J^{-T} n_lin|`.
pub fn discrete_normal(map: &MappingEval, n_lin: [f64; 2]) -> ([f64; 2], f64) {
    let j = &map.jac;
    // J^{-T} n = cof(J) n / det J
    let m = [
        (j[1][1] * n_lin[0] - j[1][0] * n_lin[1]) / map.det,
        (-j[0][1] * n_lin[0] + j[0][0] * n_lin[1]) / map.det,
    ];
    let norm = (m[0] * m[0] + m[1] * m[1]).sqrt();
    ([m[0] / norm, m[1] / norm], map.det * norm)
}

/// Unit normal of the undeformed interface from a reference level-set gradient.
pub fn linear_normal(mesh: &BackgroundMesh, e: usize, ref_grad: [f64; 2]) -> [f64; 2] {
    let g = mesh.affine(e).push_gradient(ref_grad);
    let n = (g[0] * g[0] + g[1] * g[1]).sqrt();
    [g[0] / n, g[1] / n]
}

/// Displacement field of one slab.
#[derive(Clone, Debug)]
pub struct SlabDeformation {
    pub q_s: usize,
    pub q_t: usize,
    pub t_start: f64,
    pub dt: f64,
    time_basis: Lagrange1d<f64>,
    nodes: Arc<LagrangeNodes>,
    /// `disp[j][node]`; empty for the identity mapping.
    disp: Vec<Vec<[f64; 2]>>,
    support: Vec<bool>,
    /// Nodes where the root search found no sign change (left undisplaced).
    pub root_failures: usize,
}

impl SlabDeformation {
    /// The identity mapping.
    pub fn identity(
        nodes: Arc<LagrangeNodes>,
        n_elements: usize,
        q_t: usize,
        t_start: f64,
        dt: f64,
    ) -> Self {
        Self {
            q_s: nodes.order,
            q_t,
            t_start,
            dt,
            time_basis: Lagrange1d::lobatto(q_t + 1),
            nodes,
            disp: Vec::new(),
            support: vec![false; n_elements],
            root_failures: 0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.disp.is_empty()
    }

    pub fn in_support(&self, e: usize) -> bool {
        self.support[e]
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    /// Nodal displacement at time node `j`.
    pub fn nodal_displacement(&self, j: usize, node: usize) -> [f64; 2] {
        if self.disp.is_empty() {
            [0.0; 2]
        } else {
            self.disp[j][node]
        }
    }

    pub fn time_nodes(&self) -> &[f64] {
        self.time_basis.nodes()
    }

    pub fn nodes(&self) -> &Arc<LagrangeNodes> {
        &self.nodes
    }

    /// Evaluates `Theta`, its Jacobians and the mesh velocity on element `e`
    /// at reference point `xi` and reference time `tau`.
    pub fn eval_mapping(
        &self,
        mesh: &BackgroundMesh,
        e: usize,
        xi: [f64; 2],
        tau: f64,
    ) -> Result<MappingEval> {
        let m = self.eval_extended(mesh, e, xi, tau);
        if m.det <= MIN_DET {
            return Err(Error::MappingDegenerate { element: e, det: m.det });
        }
        Ok(m)
    }

    /// Reference point of element `e` at which the polynomially extended
    /// mapping hits `x` at time `tau`. `None` if Newton fails or the
    /// extension folds.
    pub fn invert(&self, mesh: &BackgroundMesh, e: usize, x: [f64; 2], tau: f64) -> Option<[f64; 2]> {
        let mut xi = mesh.affine(e).pull_back(x);
        if self.disp.is_empty() || !self.support[e] {
            return Some(xi);
        }
        for _ in 0..30 {
            let m = self.eval_extended(mesh, e, xi, tau);
            if m.det <= MIN_DET {
                return None;
            }
            let r = [m.x[0] - x[0], m.x[1] - x[1]];
            if r[0].abs() + r[1].abs() < 1e-14 * mesh.h {
                return Some(xi);
            }
            let j = m.jac_ref;
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            xi = [
                xi[0] - (j[1][1] * r[0] - j[0][1] * r[1]) / det,
                xi[1] - (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
            ];
        }
        None
    }

    /// Like [`Self::eval_mapping`] but without the orientation check, so the
    /// element polynomial may be evaluated outside its element.
    pub fn eval_extended(&self, mesh: &BackgroundMesh, e: usize, xi: [f64; 2], tau: f64) -> MappingEval {
        let aff = mesh.affine(e);
        let x_lin = aff.apply(xi);
        if self.disp.is_empty() || !self.support[e] {
            return MappingEval {
                x: x_lin,
                jac: [[1.0, 0.0], [0.0, 1.0]],
                jac_ref: aff.mat,
                vel: [0.0, 0.0],
                det: 1.0,
            };
        }
        let (nv, ng) = self.nodes.basis.eval::<f64>(xi);
        let lt = self.time_basis.values(tau);
        let dlt = self.time_basis.derivatives(tau);
        let mut d = [0.0; 2];
        let mut dd = [[0.0; 2]; 2];
        let mut v = [0.0; 2];
        for (j, disp_j) in self.disp.iter().enumerate() {
            let mut dj = [0.0; 2];
            let mut ddj = [[0.0; 2]; 2];
            for (i, &g) in self.nodes.element_nodes[e].iter().enumerate() {
                let u = disp_j[g];
                if u == [0.0, 0.0] {
                    continue;
                }
                for r in 0..2 {
                    dj[r] += u[r] * nv[i];
                    ddj[r][0] += u[r] * ng[i][0];
                    ddj[r][1] += u[r] * ng[i][1];
                }
            }
            for r in 0..2 {
                d[r] += lt[j] * dj[r];
                v[r] += dlt[j] * dj[r] / self.dt;
                dd[r][0] += lt[j] * ddj[r][0];
                dd[r][1] += lt[j] * ddj[r][1];
            }
        }
        let jac_ref = [
            [aff.mat[0][0] + dd[0][0], aff.mat[0][1] + dd[0][1]],
            [aff.mat[1][0] + dd[1][0], aff.mat[1][1] + dd[1][1]],
        ];
        // jac = jac_ref * A^{-1}
        let inv = aff.inv;
        let jac = [
            [
                jac_ref[0][0] * inv[0][0] + jac_ref[0][1] * inv[1][0],
                jac_ref[0][0] * inv[0][1] + jac_ref[0][1] * inv[1][1],
            ],
            [
                jac_ref[1][0] * inv[0][0] + jac_ref[1][1] * inv[1][0],
                jac_ref[1][0] * inv[0][1] + jac_ref[1][1] * inv[1][1],
            ],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        MappingEval {
            x: [x_lin[0] + d[0], x_lin[1] + d[1]],
            jac,
            jac_ref,
            vel: v,
            det,
        }
    }
}

/// Solves `f(alpha) = 0` with Newton, falling back to bisection inside
/// `[-cap, cap]`. Returns `None` if no root is bracketed.
fn find_step<F: Fn(f64) -> (f64, f64)>(f: F, cap: f64) -> Option<f64> {
    let mut a = 0.0;
    for _ in 0..40 {
        let (val, der) = f(a);
        if val == 0.0 {
            return Some(a);
        }
        if der == 0.0 || !der.is_finite() {
            break;
        }
        let step = val / der;
        a -= step;
        if a.abs() > cap || !a.is_finite() {
            break;
        }
        if step.abs() < ROOT_TOL {
            return Some(a);
        }
    }
    let f0 = f(0.0).0;
    let (mut lo, mut hi) = {
        let fp = f(cap).0;
        let fm = f(-cap).0;
        if f0 * fp <= 0.0 {
            (0.0, cap)
        } else if f0 * fm <= 0.0 {
            (-cap, 0.0)
        } else {
            return None;
        }
    };
    let mut flo = f(lo).0;
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid).0;
        if flo * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Builds the displacement field of a slab.
///
/// At each time node and each Lagrange node of every surface-active element
/// the node is moved along the normalised element gradient of `phi_h` until
/// `phi_h(x + d) = phi_lin(x)`. Candidates from different elements are
/// averaged; nodes outside the surface-active elements stay fixed, which
/// blends the displacement to zero over one element layer.
pub fn build_slab_deformation<L: LevelsetField + ?Sized>(
    phi: &L,
    mesh: &BackgroundMesh,
    nodes: Arc<LagrangeNodes>,
    slab: &SlabLevelsetLin,
    active: &ActiveSets,
    q_t: usize,
) -> Result<SlabDeformation> {
    let mut def = SlabDeformation::identity(nodes.clone(), mesh.n_elements(), q_t, slab.t_start, slab.dt);
    if nodes.order < 2 {
        return Ok(def);
    }
    let taus: Vec<f64> = def.time_basis.nodes().to_vec();
    let cap = 0.5 * mesh.h;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &mesh.vertices {
        for r in 0..2 {
            lo[r] = lo[r].min(v[r]);
            hi[r] = hi[r].max(v[r]);
        }
    }
    let surf = active.surface_elements();
    let ho = interpolate_ho_levelset(phi, &nodes, slab.t_start, slab.dt, &taus);
    let basis = &nodes.basis;
    let n_loc = basis.len();
    let mut disp = Vec::with_capacity(taus.len());
    let mut failures = 0;
    for (j, &tau) in taus.iter().enumerate() {
        let mut sum = vec![[0.0; 2]; nodes.len()];
        let mut count = vec![0u32; nodes.len()];
        for &e in &surf {
            let aff = mesh.affine(e);
            let lin = slab.element_values(e, tau);
            let coeffs: Vec<f64> = nodes.element_nodes[e].iter().map(|&g| ho.values[j][g]).collect();
            let mut vals = vec![0.0; n_loc];
            let mut grads = vec![[0.0; 2]; n_loc];
            let eval = |xi: [f64; 2], vals: &mut [f64], grads: &mut [[f64; 2]]| {
                basis.eval_into(xi, vals, grads);
                let mut v = 0.0;
                let mut g = [0.0; 2];
                for k in 0..n_loc {
                    v += coeffs[k] * vals[k];
                    g[0] += coeffs[k] * grads[k][0];
                    g[1] += coeffs[k] * grads[k][1];
                }
                (v, g)
            };
            for (i, &g) in nodes.element_nodes[e].iter().enumerate() {
                let xi = basis.node::<f64>(i);
                let target = lin[0] * (1.0 - xi[0] - xi[1]) + lin[1] * xi[0] + lin[2] * xi[1];
                let (_, gref) = eval(xi, &mut vals, &mut grads);
                let gphys = aff.push_gradient(gref);
                let gn = (gphys[0] * gphys[0] + gphys[1] * gphys[1]).sqrt();
                if gn == 0.0 {
                    failures += 1;
                    count[g] += 1;
                    continue;
                }
                let dir = [gphys[0] / gn, gphys[1] / gn];
                // reference-space direction A^{-1} dir
                let rdir = [
                    aff.inv[0][0] * dir[0] + aff.inv[0][1] * dir[1],
                    aff.inv[1][0] * dir[0] + aff.inv[1][1] * dir[1],
                ];
                let mut vals2 = vec![0.0; n_loc];
                let mut grads2 = vec![[0.0; 2]; n_loc];
                let f = |a: f64| {
                    let p = [xi[0] + a * rdir[0], xi[1] + a * rdir[1]];
                    let mut vv = vals2.clone();
                    let mut gg = grads2.clone();
                    let (v, gr) = eval(p, &mut vv, &mut gg);
                    (v - target, gr[0] * rdir[0] + gr[1] * rdir[1])
                };
                let alpha = match find_step(f, cap) {
                    Some(a) => a,
                    None => {
                        failures += 1;
                        0.0
                    }
                };
                vals2.clear();
                grads2.clear();
                sum[g][0] += alpha * dir[0];
                sum[g][1] += alpha * dir[1];
                count[g] += 1;
            }
        }
        let mut d: Vec<[f64; 2]> = sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| if c > 0 { [s[0] / c as f64, s[1] / c as f64] } else { [0.0; 2] })
            .collect();
        // nodes on the outer boundary may only slide along it
        for (g, x) in nodes.coords.iter().enumerate() {
            for r in 0..2 {
                if x[r] <= lo[r] + 1e-12 || x[r] >= hi[r] - 1e-12 {
                    d[g][r] = 0.0;
                }
            }
        }
        disp.push(d);
    }
    if failures > 0 {
        log::warn!("isoparametric root search failed at {failures} node(s); left undisplaced");
    }
    let mut support = vec![false; mesh.n_elements()];
    for (e, local) in nodes.element_nodes.iter().enumerate() {
        support[e] = local
            .iter()
            .any(|&g| disp.iter().any(|d| d[g] != [0.0, 0.0]));
    }
    def.disp = disp;
    def.support = support;
    def.root_failures = failures;
    limit_folding(&mut def, mesh);
    Ok(def)
}

/// Halves the displacement around elements whose mapping folds until every
/// element is positively oriented. Only coarse meshes are affected.
fn limit_folding(def: &mut SlabDeformation, mesh: &BackgroundMesh) {
    let rule = triangle_rule::<f64>(2 * def.q_s, RuleTag::Patch);
    let mut probes: Vec<[f64; 2]> = rule.iter().map(|(xi, _)| xi).collect();
    probes.extend((0..def.nodes.basis.len()).map(|i| def.nodes.basis.node::<f64>(i)));
    let taus: Vec<f64> = (0..=2 * def.q_t + 2).map(|k| k as f64 / (2 * def.q_t + 2) as f64).collect();
    let elems: Vec<usize> = (0..mesh.n_elements()).filter(|&e| def.support[e]).collect();
    let mut limited = 0;
    for _ in 0..30 {
        let bad: Vec<usize> = elems
            .iter()
            .copied()
            .filter(|&e| {
                taus.iter()
                    .any(|&tau| probes.iter().any(|&xi| def.eval_extended(mesh, e, xi, tau).det <= 0.05))
            })
            .collect();
        if bad.is_empty() {
            break;
        }
        limited += bad.len();
        for e in bad {
            for &g in &def.nodes.element_nodes[e] {
                for d in def.disp.iter_mut() {
                    d[g] = [0.5 * d[g][0], 0.5 * d[g][1]];
                }
            }
        }
    }
    if limited > 0 {
        log::warn!("isoparametric displacement limited on {limited} element(s)");
    }
}
