//! Variational forms of one slab, assembled element by element.
//!
//! Local blocks are computed in parallel and reduced in element order, so the
//! triplet list (and therefore the solution) does not depend on the thread count.

use rayon::prelude::*;

use crate::cut_quadrature::{slab_full_rule, slice_rule, SlabRule};
use crate::error::{Error, Result};
use crate::isoparam::{discrete_normal, linear_normal, MappingEval, SlabDeformation};
use crate::mesh::BackgroundMesh;
use crate::model::{ModelData, ModelParams};
use crate::quadrature::{gauss_legendre, gauss_points_for_degree, triangle_rule, RuleTag};
use crate::slab::SlabData;
use crate::solver::SystemMatrix;
use crate::space::{eval_basis, mapped_eval, BasisEval, Component, DiscreteFunction, EvalScratch, MappedEval};

/// Dense local contribution on a list of global dofs.
#[derive(Clone, Debug, Default)]
pub struct LocalBlock {
    pub dofs: Vec<usize>,
    /// Row-major, rows are test functions.
    pub mat: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl LocalBlock {
    fn new(dofs: Vec<usize>) -> Self {
        let n = dofs.len();
        Self {
            dofs,
            mat: vec![0.0; n * n],
            rhs: vec![0.0; n],
        }
    }

    #[inline]
    fn add(&mut self, a: usize, b: usize, v: f64) {
        let n = self.dofs.len();
        self.mat[a * n + b] += v;
    }
}

/// Triplet list plus right-hand side of a slab system.
#[derive(Clone, Debug)]
pub struct SlabSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl SlabSystem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            triplets: Vec::new(),
            rhs: vec![0.0; n],
        }
    }

    pub fn add_blocks(&mut self, blocks: &[LocalBlock]) {
        for b in blocks {
            let n = b.dofs.len();
            for (a, &ra) in b.dofs.iter().enumerate() {
                self.rhs[ra] += b.rhs[a];
                if b.mat.is_empty() {
                    continue;
                }
                for (c, &rc) in b.dofs.iter().enumerate() {
                    let v = b.mat[a * n + c];
                    if v != 0.0 {
                        self.triplets.push((ra, rc, v));
                    }
                }
            }
        }
    }

    pub fn matrix(&self) -> Result<SystemMatrix> {
        SystemMatrix::from_triplets(self.n, &self.triplets)
    }
}

fn par_blocks<F>(elements: &[usize], f: F) -> Result<Vec<LocalBlock>>
where
    F: Fn(usize) -> Result<Option<LocalBlock>> + Sync + Send,
{
    let out = elements.par_iter().map(|&e| f(e)).collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().flatten().collect())
}

/// One quadrature point of a mapped space-time rule.
#[derive(Clone, Copy, Debug)]
pub struct MappedPoint {
    pub xi: [f64; 2],
    pub tau: f64,
    pub t: f64,
    /// Weight including time weight and the mapped measure factor.
    pub weight: f64,
    pub map: MappingEval,
    /// Discrete normal (interface and normal-stabilisation points only).
    pub normal: [f64; 2],
}

fn volume_points(slab: &SlabData, mesh: &BackgroundMesh, e: usize, rule: &SlabRule) -> Result<Vec<MappedPoint>> {
    let mut out = Vec::new();
    for s in &rule.slices {
        let t = slab.time_at(s.tau);
        for (xi, w) in s.rule.iter() {
            let map = slab.deformation.eval_mapping(mesh, e, xi, s.tau)?;
            out.push(MappedPoint {
                xi,
                tau: s.tau,
                t,
                weight: w * s.time_weight * map.det,
                map,
                normal: [0.0; 2],
            });
        }
    }
    Ok(out)
}

fn surface_points(slab: &SlabData, mesh: &BackgroundMesh, e: usize, rule: &SlabRule) -> Result<Vec<MappedPoint>> {
    let mut out = Vec::new();
    for s in &rule.slices {
        if s.rule.is_empty() {
            continue;
        }
        let t = slab.time_at(s.tau);
        let n_lin = linear_normal(mesh, e, s.ref_grad);
        for (xi, w) in s.rule.iter() {
            let map = slab.deformation.eval_mapping(mesh, e, xi, s.tau)?;
            let (normal, fac) = discrete_normal(&map, n_lin);
            out.push(MappedPoint {
                xi,
                tau: s.tau,
                t,
                weight: w * s.time_weight * fac,
                map,
                normal,
            });
        }
    }
    Ok(out)
}

/// Full-element points with the normal extended by `J_ref^{-T} grad phi_lin`.
fn stabilisation_points(slab: &SlabData, mesh: &BackgroundMesh, e: usize) -> Result<Vec<MappedPoint>> {
    let rule = slab_full_rule(mesh, e, &slab.levelset, slab.disc.order_s(), slab.disc.n_time());
    let mut out = Vec::new();
    for s in &rule.slices {
        let t = slab.time_at(s.tau);
        for (xi, w) in s.rule.iter() {
            let map = slab.deformation.eval_mapping(mesh, e, xi, s.tau)?;
            let g = map.push_gradient(s.ref_grad);
            let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
            let normal = if gn > 0.0 { [g[0] / gn, g[1] / gn] } else { [0.0; 2] };
            out.push(MappedPoint {
                xi,
                tau: s.tau,
                t,
                weight: w * s.time_weight * map.det,
                map,
                normal,
            });
        }
    }
    Ok(out)
}

struct Evaluator<'a> {
    slab: &'a SlabData,
    component: Component,
    scratch: EvalScratch,
    basis: BasisEval,
    mapped: MappedEval,
}

impl<'a> Evaluator<'a> {
    fn new(slab: &'a SlabData, component: Component) -> Self {
        let sp = match component {
            Component::Bulk => &slab.space.bulk,
            Component::Surface => &slab.space.surf,
        };
        Self {
            slab,
            component,
            scratch: EvalScratch::new(sp),
            basis: BasisEval::default(),
            mapped: MappedEval::default(),
        }
    }

    fn at(&mut self, p: &MappedPoint) -> &MappedEval {
        let sp = match self.component {
            Component::Bulk => &self.slab.space.bulk,
            Component::Surface => &self.slab.space.surf,
        };
        eval_basis(sp, p.xi, p.tau, &mut self.scratch, &mut self.basis);
        mapped_eval(&self.basis, &p.map, self.slab.dt, &mut self.mapped);
        &self.mapped
    }
}

fn elements_with(rules: &[Option<SlabRule>]) -> Vec<usize> {
    rules
        .iter()
        .enumerate()
        .filter_map(|(e, r)| r.as_ref().filter(|r| !r.is_empty()).map(|_| e))
        .collect()
}

/// `scale * [(d_t u + w . grad u, v) + k_B (grad u, grad v)]` over the mapped bulk slab.
pub fn assemble_bulk_form<M: ModelData + ?Sized>(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    model: &M,
    k_b: f64,
    scale: f64,
) -> Result<Vec<LocalBlock>> {
    let elems = elements_with(&slab.vol_rules);
    par_blocks(&elems, |e| {
        let rule = slab.vol_rules[e].as_ref().unwrap();
        let pts = volume_points(slab, mesh, e, rule)?;
        let mut blk = LocalBlock::new(slab.space.element_dofs(e, Component::Bulk));
        let n = blk.dofs.len();
        let mut ev = Evaluator::new(slab, Component::Bulk);
        for p in &pts {
            let m = ev.at(p);
            let w = model.velocity(p.map.x, p.t);
            let wt = scale * p.weight;
            for b in 0..n {
                let conv = m.dt[b] + w[0] * m.grads[b][0] + w[1] * m.grads[b][1];
                for a in 0..n {
                    let diff = m.grads[a][0] * m.grads[b][0] + m.grads[a][1] * m.grads[b][1];
                    blk.add(a, b, wt * (conv * m.values[a] + k_b * diff));
                }
            }
        }
        Ok(Some(blk))
    })
}

/// `div_Gamma w = tr(P grad w)`.
pub fn surface_divergence(jac: [[f64; 2]; 2], n: [f64; 2]) -> f64 {
    let tr = jac[0][0] + jac[1][1];
    let nn = n[0] * (jac[0][0] * n[0] + jac[0][1] * n[1]) + n[1] * (jac[1][0] * n[0] + jac[1][1] * n[1]);
    tr - nn
}

#[inline]
fn project(g: [f64; 2], n: [f64; 2]) -> [f64; 2] {
    let d = g[0] * n[0] + g[1] * n[1];
    [g[0] - d * n[0], g[1] - d * n[1]]
}

/// `scale * [(d_t u + w . grad u + u div_Gamma w, v) + k_S (grad_Gamma u, grad_Gamma v)]`
/// over the mapped space-time interface.
pub fn assemble_surface_form<M: ModelData + ?Sized>(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    model: &M,
    k_s: f64,
    scale: f64,
) -> Result<Vec<LocalBlock>> {
    let elems = elements_with(&slab.surf_rules);
    par_blocks(&elems, |e| {
        let rule = slab.surf_rules[e].as_ref().unwrap();
        let pts = surface_points(slab, mesh, e, rule)?;
        let mut blk = LocalBlock::new(slab.space.element_dofs(e, Component::Surface));
        let n = blk.dofs.len();
        let mut ev = Evaluator::new(slab, Component::Surface);
        let mut pg = vec![[0.0; 2]; n];
        for p in &pts {
            let m = ev.at(p);
            let w = model.velocity(p.map.x, p.t);
            let div = surface_divergence(model.velocity_jacobian(p.map.x, p.t), p.normal);
            let wt = scale * p.weight;
            for a in 0..n {
                pg[a] = project(m.grads[a], p.normal);
            }
            for b in 0..n {
                let conv = m.dt[b] + w[0] * m.grads[b][0] + w[1] * m.grads[b][1] + div * m.values[b];
                for a in 0..n {
                    let diff = pg[a][0] * pg[b][0] + pg[a][1] * pg[b][1];
                    blk.add(a, b, wt * (conv * m.values[a] + k_s * diff));
                }
            }
        }
        Ok(Some(blk))
    })
}

/// Henry coupling `(b_B u_B - b_S u_S, b_B v_B - b_S v_S)` on the space-time interface.
pub fn assemble_coupling(slab: &SlabData, mesh: &BackgroundMesh, params: &ModelParams) -> Result<Vec<LocalBlock>> {
    let elems = elements_with(&slab.surf_rules);
    par_blocks(&elems, |e| {
        let rule = slab.surf_rules[e].as_ref().unwrap();
        let pts = surface_points(slab, mesh, e, rule)?;
        let mut dofs = slab.space.element_dofs(e, Component::Bulk);
        let nb = dofs.len();
        dofs.extend(slab.space.element_dofs(e, Component::Surface));
        let mut blk = LocalBlock::new(dofs);
        let n = blk.dofs.len();
        let mut evb = Evaluator::new(slab, Component::Bulk);
        let mut evs = Evaluator::new(slab, Component::Surface);
        let mut c = vec![0.0; n];
        for p in &pts {
            let mb = evb.at(p);
            for a in 0..nb {
                c[a] = params.b_b * mb.values[a];
            }
            let ms = evs.at(p);
            for a in nb..n {
                c[a] = -params.b_s * ms.values[a - nb];
            }
            for a in 0..n {
                for b in 0..n {
                    blk.add(a, b, p.weight * c[a] * c[b]);
                }
            }
        }
        Ok(Some(blk))
    })
}

/// Langmuir term `b_BS (u_B u_S, b_S v_S - b_B v_B)` at the state `u`.
///
/// Returns blocks whose `rhs` holds the residual contribution and whose
/// `mat` holds its exact derivative.
pub fn assemble_langmuir(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    params: &ModelParams,
    u: &[f64],
) -> Result<Vec<LocalBlock>> {
    if params.b_bs == 0.0 {
        return Ok(Vec::new());
    }
    let elems = elements_with(&slab.surf_rules);
    par_blocks(&elems, |e| {
        let rule = slab.surf_rules[e].as_ref().unwrap();
        let pts = surface_points(slab, mesh, e, rule)?;
        let mut dofs = slab.space.element_dofs(e, Component::Bulk);
        let nb = dofs.len();
        dofs.extend(slab.space.element_dofs(e, Component::Surface));
        let mut blk = LocalBlock::new(dofs);
        let n = blk.dofs.len();
        let mut evb = Evaluator::new(slab, Component::Bulk);
        let mut evs = Evaluator::new(slab, Component::Surface);
        let mut vals = vec![0.0; n];
        let mut test = vec![0.0; n];
        for p in &pts {
            let mb = evb.at(p);
            vals[..nb].copy_from_slice(&mb.values);
            let ms = evs.at(p);
            vals[nb..].copy_from_slice(&ms.values);
            let mut ub = 0.0;
            let mut us = 0.0;
            for a in 0..n {
                if a < nb {
                    ub += u[blk.dofs[a]] * vals[a];
                    test[a] = -params.b_b * vals[a];
                } else {
                    us += u[blk.dofs[a]] * vals[a];
                    test[a] = params.b_s * vals[a];
                }
            }
            let wt = params.b_bs * p.weight;
            for a in 0..n {
                blk.rhs[a] += wt * ub * us * test[a];
                for b in 0..n {
                    let d = if b < nb { vals[b] * us } else { ub * vals[b] };
                    blk.add(a, b, wt * test[a] * d);
                }
            }
        }
        Ok(Some(blk))
    })
}

/// `gamma_S (n_h . grad u, n_h . grad v)` over the mapped surface-active elements.
pub fn assemble_normal_grad_stab(slab: &SlabData, mesh: &BackgroundMesh, gamma_s: f64) -> Result<Vec<LocalBlock>> {
    let elems = slab.active.surface_elements();
    par_blocks(&elems, |e| {
        let pts = stabilisation_points(slab, mesh, e)?;
        let mut blk = LocalBlock::new(slab.space.element_dofs(e, Component::Surface));
        let n = blk.dofs.len();
        let mut ev = Evaluator::new(slab, Component::Surface);
        let mut dn = vec![0.0; n];
        for p in &pts {
            let m = ev.at(p);
            for a in 0..n {
                dn[a] = m.grads[a][0] * p.normal[0] + m.grads[a][1] * p.normal[1];
            }
            for a in 0..n {
                for b in 0..n {
                    blk.add(a, b, gamma_s * p.weight * dn[a] * dn[b]);
                }
            }
        }
        Ok(Some(blk))
    })
}

/// Temporal mass matrix `int_0^1 l_i l_j` of the Lobatto basis.
fn time_mass(slab: &SlabData) -> Vec<Vec<f64>> {
    let tb = &slab.space.bulk.time_basis;
    let nt = tb.len();
    let (x, w) = gauss_legendre::<f64>(nt + 1);
    let mut m = vec![vec![0.0; nt]; nt];
    for (&xq, &wq) in x.iter().zip(&w) {
        let l = tb.values(xq);
        for i in 0..nt {
            for j in 0..nt {
                m[i][j] += wq * l[i] * l[j];
            }
        }
    }
    m
}

/// Direct ghost penalty `gamma_B / h^2 (1 + dt / h) int_{I_n} int_{omega_F} [u][v]`.
///
/// The jump at a point of one patch element is the difference between the
/// element's own function and the extension of the neighbour's function. On
/// deformed patches the neighbour is evaluated at the same physical point by
/// inverting its polynomially extended mapping.
pub fn assemble_ghost_penalty(slab: &SlabData, mesh: &BackgroundMesh, gamma_b: f64) -> Result<Vec<LocalBlock>> {
    let sp = &slab.space.bulk;
    let nodes = &sp.nodes;
    let nt = sp.n_time();
    let h = mesh.h;
    let scale = gamma_b / (h * h) * (1.0 + slab.dt / h) * slab.dt;
    let mt = time_mass(slab);
    let rule = triangle_rule::<f64>(2 * sp.k_s + 2, RuleTag::Patch);
    let (tq, tw) = gauss_legendre::<f64>(slab.disc.n_time());
    let facets: Vec<usize> = slab.active.facets.clone();
    par_blocks(&facets, |f| {
        let [ea, eb] = mesh.facets[f].elements;
        // union of spatial nodes of the patch
        let mut ranks: Vec<usize> = Vec::new();
        let mut loc = [Vec::new(), Vec::new()];
        for (k, &el) in [ea, eb].iter().enumerate() {
            for &g in &nodes.element_nodes[el] {
                let r = sp.spatial_rank(g).ok_or(Error::InvalidConfig("ghost-penalty element inactive".into()))?;
                let idx = match ranks.iter().position(|&q| q == r) {
                    Some(i) => i,
                    None => {
                        ranks.push(r);
                        ranks.len() - 1
                    }
                };
                loc[k].push(idx);
            }
        }
        let ns = ranks.len();
        let nl = nodes.basis.len();
        let mut jump = vec![0.0; ns];
        let (mut v1, mut g1) = (vec![0.0; nl], vec![[0.0; 2]; nl]);
        let (mut v2, mut g2) = (vec![0.0; nl], vec![[0.0; 2]; nl]);
        let dofs: Vec<usize> = ranks.iter().flat_map(|&r| (0..nt).map(move |j| r * nt + j)).collect();
        let mut blk = LocalBlock::new(dofs);
        let deformed = slab.deformation.in_support(ea) || slab.deformation.in_support(eb);
        // time-independent patch matrix on undeformed patches, one per time node otherwise
        let times: Vec<(f64, f64)> = if deformed {
            tq.iter().copied().zip(tw.iter().copied()).collect()
        } else {
            vec![(0.0, 1.0)]
        };
        for &(tau, wt_tau) in &times {
            let mut s = vec![0.0; ns * ns];
            for (home, other) in [(0usize, 1usize), (1, 0)] {
                let eh = [ea, eb][home];
                let eo = [ea, eb][other];
                let ah = mesh.affine(eh);
                let ao = mesh.affine(eo);
                for (xi, w) in rule.iter() {
                    let (xo, det) = if deformed {
                        let m = slab.deformation.eval_mapping(mesh, eh, xi, tau)?;
                        let xo = slab
                            .deformation
                            .invert(mesh, eo, m.x, tau)
                            .unwrap_or_else(|| ao.pull_back(ah.apply(xi)));
                        (xo, m.det)
                    } else {
                        (ao.pull_back(ah.apply(xi)), 1.0)
                    };
                    nodes.basis.eval_into(xi, &mut v1, &mut g1);
                    nodes.basis.eval_into(xo, &mut v2, &mut g2);
                    jump.iter_mut().for_each(|j| *j = 0.0);
                    for i in 0..nl {
                        jump[loc[home][i]] += v1[i];
                        jump[loc[other][i]] -= v2[i];
                    }
                    let wt = w * ah.det.abs() * det;
                    for a in 0..ns {
                        if jump[a] == 0.0 {
                            continue;
                        }
                        for b in 0..ns {
                            s[a * ns + b] += wt * jump[a] * jump[b];
                        }
                    }
                }
            }
            let lt = sp.time_basis.values(tau);
            for a in 0..ns {
                for b in 0..ns {
                    let sv = s[a * ns + b];
                    if sv == 0.0 {
                        continue;
                    }
                    for i in 0..nt {
                        for j in 0..nt {
                            let tm = if deformed { wt_tau * lt[i] * lt[j] } else { mt[i][j] };
                            blk.add(a * nt + i, b * nt + j, scale * sv * tm);
                        }
                    }
                }
            }
        }
        Ok(Some(blk))
    })
}

/// Trace entering the slab at its start time.
#[derive(Clone, Copy, Debug)]
pub enum Incoming<'a> {
    /// Initial data of the model, evaluated at the mapped points.
    Initial,
    /// Solution of the previous slab at its end time, read at the same
    /// physical point through the previous slab's mapping.
    Previous {
        solution: &'a DiscreteFunction,
        deformation: &'a SlabDeformation,
    },
}

/// Upwind-in-time coupling: trace mass at the slab start and the incoming trace.
pub fn assemble_upwind<M: ModelData + ?Sized>(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    model: &M,
    incoming: Incoming<'_>,
) -> Result<Vec<LocalBlock>> {
    let p = *model.params();
    let order = slab.disc.order_s();
    let bulk_el = slab.active.bulk_elements();
    let mut blocks = par_blocks(&bulk_el, |e| {
        let s = slice_rule(mesh, e, &slab.levelset, 0.0, RuleTag::SliceVol, order)?;
        if s.rule.is_empty() {
            return Ok(None);
        }
        let mut blk = LocalBlock::new(slab.space.element_dofs(e, Component::Bulk));
        let n = blk.dofs.len();
        let mut ev = Evaluator::new(slab, Component::Bulk);
        for (xi, w) in s.rule.iter() {
            let map = slab.deformation.eval_mapping(mesh, e, xi, 0.0)?;
            let pt = MappedPoint {
                xi,
                tau: 0.0,
                t: slab.t_start,
                weight: w * map.det,
                map,
                normal: [0.0; 2],
            };
            let old = match incoming {
                Incoming::Initial => model.initial_bulk(map.x),
                Incoming::Previous { solution, deformation } => {
                    let xo = deformation.invert(mesh, e, map.x, 1.0).unwrap_or(xi);
                    solution
                        .eval(Component::Bulk, e, xo, 1.0)
                        .ok_or(Error::TransferOutOfDomain { element: e })?
                }
            };
            let m = ev.at(&pt);
            let wt = p.b_b * pt.weight;
            for a in 0..n {
                blk.rhs[a] += wt * old * m.values[a];
                for b in 0..n {
                    blk.add(a, b, wt * m.values[a] * m.values[b]);
                }
            }
        }
        Ok(Some(blk))
    })?;
    let surf_el = slab.active.surface_elements();
    let surf = par_blocks(&surf_el, |e| {
        let s = slice_rule(mesh, e, &slab.levelset, 0.0, RuleTag::SliceIf, order)?;
        if s.rule.is_empty() {
            return Ok(None);
        }
        let n_lin = linear_normal(mesh, e, s.ref_grad);
        let mut blk = LocalBlock::new(slab.space.element_dofs(e, Component::Surface));
        let n = blk.dofs.len();
        let mut ev = Evaluator::new(slab, Component::Surface);
        for (xi, w) in s.rule.iter() {
            let map = slab.deformation.eval_mapping(mesh, e, xi, 0.0)?;
            let (normal, fac) = discrete_normal(&map, n_lin);
            let pt = MappedPoint {
                xi,
                tau: 0.0,
                t: slab.t_start,
                weight: w * fac,
                map,
                normal,
            };
            let old = match incoming {
                Incoming::Initial => model.initial_surface(map.x),
                Incoming::Previous { solution, deformation } => {
                    let xo = deformation.invert(mesh, e, map.x, 1.0).unwrap_or(xi);
                    solution
                        .eval(Component::Surface, e, xo, 1.0)
                        .ok_or(Error::TransferOutOfDomain { element: e })?
                }
            };
            let m = ev.at(&pt);
            let wt = p.b_s * pt.weight;
            for a in 0..n {
                blk.rhs[a] += wt * old * m.values[a];
                for b in 0..n {
                    blk.add(a, b, wt * m.values[a] * m.values[b]);
                }
            }
        }
        Ok(Some(blk))
    })?;
    blocks.extend(surf);
    Ok(blocks)
}

/// Right-hand side `b_B (f_B, v_B) + b_S (f_S, v_S) + b_B (g, v_B)_{outer boundary}`.
pub fn assemble_sources<M: ModelData + ?Sized>(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    model: &M,
) -> Result<Vec<LocalBlock>> {
    let p = *model.params();
    let bulk = elements_with(&slab.vol_rules);
    let mut blocks = par_blocks(&bulk, |e| {
        let pts = volume_points(slab, mesh, e, slab.vol_rules[e].as_ref().unwrap())?;
        let dofs = slab.space.element_dofs(e, Component::Bulk);
        let n = dofs.len();
        let mut blk = LocalBlock {
            dofs,
            mat: Vec::new(),
            rhs: vec![0.0; n],
        };
        let mut ev = Evaluator::new(slab, Component::Bulk);
        for pt in &pts {
            let f = model.source_bulk(pt.map.x, pt.t);
            if f == 0.0 {
                continue;
            }
            let m = ev.at(pt);
            for a in 0..n {
                blk.rhs[a] += p.b_b * pt.weight * f * m.values[a];
            }
        }
        Ok(Some(blk))
    })?;
    let surf = elements_with(&slab.surf_rules);
    blocks.extend(par_blocks(&surf, |e| {
        let pts = surface_points(slab, mesh, e, slab.surf_rules[e].as_ref().unwrap())?;
        let dofs = slab.space.element_dofs(e, Component::Surface);
        let n = dofs.len();
        let mut blk = LocalBlock {
            dofs,
            mat: Vec::new(),
            rhs: vec![0.0; n],
        };
        let mut ev = Evaluator::new(slab, Component::Surface);
        for pt in &pts {
            let f = model.source_surface(pt.map.x, pt.t);
            if f == 0.0 {
                continue;
            }
            let m = ev.at(pt);
            for a in 0..n {
                blk.rhs[a] += p.b_s * pt.weight * f * m.values[a];
            }
        }
        Ok(Some(blk))
    })?);
    blocks.extend(boundary_flux_blocks(slab, mesh, model)?);
    Ok(blocks)
}

const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

fn boundary_flux_blocks<M: ModelData + ?Sized>(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    model: &M,
) -> Result<Vec<LocalBlock>> {
    let p = *model.params();
    let bnd: Vec<(usize, usize)> = mesh
        .boundary_facets()
        .map(|(fid, f)| (fid, f.elements[0]))
        .filter(|&(_, e)| slab.active.bulk[e])
        .collect();
    let (tq, tw) = gauss_legendre::<f64>(slab.disc.n_time());
    let (sq, sw) = gauss_legendre::<f64>(gauss_points_for_degree(slab.disc.order_s()));
    let idx: Vec<usize> = (0..bnd.len()).collect();
    par_blocks(&idx, |k| {
        let (fid, e) = bnd[k];
        let i = mesh.element_facets[e].iter().position(|&f| f == fid).unwrap();
        let (ia, ib) = ((i + 1) % 3, (i + 2) % 3);
        let (ra, rb) = (REF_VERTICES[ia], REF_VERTICES[ib]);
        let verts = mesh.element_vertices(e);
        let (pa, pb, pc) = (verts[ia], verts[ib], verts[i]);
        let tv = [pb[0] - pa[0], pb[1] - pa[1]];
        let mut nrm = [tv[1], -tv[0]];
        let ln = (nrm[0] * nrm[0] + nrm[1] * nrm[1]).sqrt();
        nrm = [nrm[0] / ln, nrm[1] / ln];
        if nrm[0] * (pc[0] - pa[0]) + nrm[1] * (pc[1] - pa[1]) > 0.0 {
            nrm = [-nrm[0], -nrm[1]];
        }
        let dofs = slab.space.element_dofs(e, Component::Bulk);
        let n = dofs.len();
        let mut blk = LocalBlock {
            dofs,
            mat: Vec::new(),
            rhs: vec![0.0; n],
        };
        let mut ev = Evaluator::new(slab, Component::Bulk);
        let mut any = false;
        for (&tau, &wt) in tq.iter().zip(&tw) {
            let phis = slab.levelset.element_values_perturbed(e, tau);
            let (fa, fb) = (phis[ia], phis[ib]);
            let (s0, s1) = if fa < 0.0 && fb < 0.0 {
                (0.0, 1.0)
            } else if fa >= 0.0 && fb >= 0.0 {
                continue;
            } else {
                let s = fa / (fa - fb);
                if fa < 0.0 {
                    (0.0, s)
                } else {
                    (s, 1.0)
                }
            };
            let t = slab.time_at(tau);
            for (&sq_, &sw_) in sq.iter().zip(&sw) {
                let s = s0 + (s1 - s0) * sq_;
                let xi = [ra[0] + s * (rb[0] - ra[0]), ra[1] + s * (rb[1] - ra[1])];
                let map = slab.deformation.eval_mapping(mesh, e, xi, tau)?;
                let d = [rb[0] - ra[0], rb[1] - ra[1]];
                let j = map.jac_ref;
                let dx = [j[0][0] * d[0] + j[0][1] * d[1], j[1][0] * d[0] + j[1][1] * d[1]];
                let meas = (dx[0] * dx[0] + dx[1] * dx[1]).sqrt() * (s1 - s0);
                let g = model.boundary_flux(map.x, t, nrm);
                if g == 0.0 {
                    continue;
                }
                any = true;
                let pt = MappedPoint {
                    xi,
                    tau,
                    t,
                    weight: wt * slab.dt * sw_ * meas,
                    map,
                    normal: nrm,
                };
                let m = ev.at(&pt);
                for a in 0..n {
                    blk.rhs[a] += p.b_b * pt.weight * g * m.values[a];
                }
            }
        }
        Ok(any.then_some(blk))
    })
}

/// Linear part of the slab system:
/// `b_B B_b + b_S B_s + B_upw + J + B_coup` and `f_upw + sources`.
pub fn assemble_slab_system<M: ModelData + ?Sized>(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    model: &M,
    incoming: Incoming<'_>,
) -> Result<SlabSystem> {
    let p = *model.params();
    let mut sys = SlabSystem::new(slab.space.n_dofs());
    sys.add_blocks(&assemble_bulk_form(slab, mesh, model, p.k_b, p.b_b)?);
    sys.add_blocks(&assemble_surface_form(slab, mesh, model, p.k_s, p.b_s)?);
    sys.add_blocks(&assemble_upwind(slab, mesh, model, incoming)?);
    sys.add_blocks(&assemble_ghost_penalty(slab, mesh, p.gamma_b)?);
    sys.add_blocks(&assemble_normal_grad_stab(slab, mesh, p.gamma_s)?);
    sys.add_blocks(&assemble_coupling(slab, mesh, &p)?);
    sys.add_blocks(&assemble_sources(slab, mesh, model)?);
    Ok(sys)
}

/// Residual `F(u) = A u - rhs + N(u)` and Jacobian `DF(u) = A + DN(u)`.
pub fn residual_and_jacobian(
    linear: &SlabSystem,
    slab: &SlabData,
    mesh: &BackgroundMesh,
    params: &ModelParams,
    u: &[f64],
) -> Result<(Vec<f64>, SystemMatrix)> {
    let a = linear.matrix()?;
    let nl = assemble_langmuir(slab, mesh, params, u)?;
    let mut r = a.apply(u);
    for (ri, bi) in r.iter_mut().zip(&linear.rhs) {
        *ri -= bi;
    }
    if nl.is_empty() {
        return Ok((r, a));
    }
    let mut jac = SlabSystem {
        n: linear.n,
        triplets: linear.triplets.clone(),
        rhs: vec![0.0; linear.n],
    };
    jac.add_blocks(&nl);
    for (ri, ni) in r.iter_mut().zip(&jac.rhs) {
        *ri += ni;
    }
    Ok((r, jac.matrix()?))
}

/// Residual only.
pub fn residual(
    linear: &SlabSystem,
    slab: &SlabData,
    mesh: &BackgroundMesh,
    params: &ModelParams,
    u: &[f64],
) -> Result<Vec<f64>> {
    let a = linear.matrix()?;
    let mut r = a.apply(u);
    for (ri, bi) in r.iter_mut().zip(&linear.rhs) {
        *ri -= bi;
    }
    let mut nl = SlabSystem::new(linear.n);
    nl.add_blocks(&assemble_langmuir(slab, mesh, params, u)?);
    for (ri, ni) in r.iter_mut().zip(&nl.rhs) {
        *ri += ni;
    }
    Ok(r)
}
