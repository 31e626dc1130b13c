//! Tensor-product space-time finite element spaces on active elements.

use std::sync::Arc;

use crate::basis::Lagrange1d;
use crate::error::{Error, Result};
use crate::isoparam::MappingEval;
use crate::levelset::ActiveSets;
use crate::mesh::LagrangeNodes;

const NONE: usize = usize::MAX;

/// `V_h^{k_s} (x) P^{k_t}(I_n)` restricted to a set of active elements.
///
/// Global dof of spatial rank `r` and temporal node `j` is `r * (k_t + 1) + j`;
/// spatial ranks follow the lexicographic node order of [`LagrangeNodes`].
#[derive(Clone, Debug)]
pub struct SpaceTimeSpace {
    pub k_s: usize,
    pub k_t: usize,
    pub nodes: Arc<LagrangeNodes>,
    pub time_basis: Lagrange1d<f64>,
    pub active: Vec<bool>,
    rank: Vec<usize>,
    n_spatial: usize,
}

impl SpaceTimeSpace {
    pub fn new(nodes: Arc<LagrangeNodes>, k_t: usize, active: Vec<bool>) -> Self {
        let mut used = vec![false; nodes.len()];
        for (e, local) in nodes.element_nodes.iter().enumerate() {
            if active[e] {
                for &g in local {
                    used[g] = true;
                }
            }
        }
        let mut rank = vec![NONE; nodes.len()];
        let mut n_spatial = 0;
        for (g, &u) in used.iter().enumerate() {
            if u {
                rank[g] = n_spatial;
                n_spatial += 1;
            }
        }
        Self {
            k_s: nodes.order,
            k_t,
            time_basis: Lagrange1d::lobatto(k_t + 1),
            nodes,
            active,
            rank,
            n_spatial,
        }
    }

    pub fn n_time(&self) -> usize {
        self.k_t + 1
    }

    pub fn n_spatial(&self) -> usize {
        self.n_spatial
    }

    pub fn n_dofs(&self) -> usize {
        self.n_spatial * self.n_time()
    }

    pub fn n_local(&self) -> usize {
        self.nodes.basis.len() * self.n_time()
    }

    pub fn is_active(&self, e: usize) -> bool {
        self.active[e]
    }

    /// Spatial rank of a global Lagrange node, if it carries dofs.
    pub fn spatial_rank(&self, node: usize) -> Option<usize> {
        let r = self.rank[node];
        (r != NONE).then_some(r)
    }

    /// Global dofs of an active element, local index `i * (k_t + 1) + j`.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        debug_assert!(self.active[e]);
        let nt = self.n_time();
        let mut out = Vec::with_capacity(self.n_local());
        for &g in &self.nodes.element_nodes[e] {
            let r = self.rank[g];
            for j in 0..nt {
                out.push(r * nt + j);
            }
        }
        out
    }
}

/// Reference-configuration basis data at one point.
#[derive(Clone, Debug, Default)]
pub struct BasisEval {
    pub values: Vec<f64>,
    /// Gradients in reference-triangle coordinates.
    pub ref_grads: Vec<[f64; 2]>,
    /// Derivatives with respect to the reference time `tau`.
    pub dtau: Vec<f64>,
}

/// Basis data mapped to the physical configuration.
#[derive(Clone, Debug, Default)]
pub struct MappedEval {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    /// Time derivative at fixed physical position.
    pub dt: Vec<f64>,
}

/// Scratch buffers for basis evaluation.
#[derive(Clone, Debug)]
pub struct EvalScratch {
    sv: Vec<f64>,
    sg: Vec<[f64; 2]>,
    tv: Vec<f64>,
    td: Vec<f64>,
}

impl EvalScratch {
    pub fn new(space: &SpaceTimeSpace) -> Self {
        let ns = space.nodes.basis.len();
        let nt = space.n_time();
        Self {
            sv: vec![0.0; ns],
            sg: vec![[0.0; 2]; ns],
            tv: vec![0.0; nt],
            td: vec![0.0; nt],
        }
    }
}

/// Tensor-product basis values `L_i(xi) l_j(tau)` and derivatives.
pub fn eval_basis(space: &SpaceTimeSpace, xi: [f64; 2], tau: f64, s: &mut EvalScratch, out: &mut BasisEval) {
    space.nodes.basis.eval_into(xi, &mut s.sv, &mut s.sg);
    space.time_basis.values_into(tau, &mut s.tv);
    space.time_basis.derivatives_into(tau, &mut s.td);
    let n = space.n_local();
    out.values.resize(n, 0.0);
    out.ref_grads.resize(n, [0.0; 2]);
    out.dtau.resize(n, 0.0);
    let nt = space.n_time();
    for i in 0..s.sv.len() {
        for j in 0..nt {
            let k = i * nt + j;
            out.values[k] = s.sv[i] * s.tv[j];
            out.ref_grads[k] = [s.sg[i][0] * s.tv[j], s.sg[i][1] * s.tv[j]];
            out.dtau[k] = s.sv[i] * s.td[j];
        }
    }
}

/// Chain rule through the mapping: `grad u = J_ref^{-T} grad_xi u` and
/// `d_t u|_x = d_tau u / dt - grad u . V`.
pub fn mapped_eval(basis: &BasisEval, map: &MappingEval, dt: f64, out: &mut MappedEval) {
    let n = basis.values.len();
    out.values.clear();
    out.values.extend_from_slice(&basis.values);
    out.grads.resize(n, [0.0; 2]);
    out.dt.resize(n, 0.0);
    for k in 0..n {
        let g = map.push_gradient(basis.ref_grads[k]);
        out.grads[k] = g;
        out.dt[k] = basis.dtau[k] / dt - (g[0] * map.vel[0] + g[1] * map.vel[1]);
    }
}

/// Bulk space on the bulk-active elements plus surface space on the
/// surface-active elements, stacked as `[bulk | surface]`.
#[derive(Clone, Debug)]
pub struct CoupledSpace {
    pub bulk: SpaceTimeSpace,
    pub surf: SpaceTimeSpace,
}

impl CoupledSpace {
    pub fn offset(&self) -> usize {
        self.bulk.n_dofs()
    }

    pub fn n_dofs(&self) -> usize {
        self.bulk.n_dofs() + self.surf.n_dofs()
    }

    /// Stacked dofs of element `e`: bulk dofs (if active) then surface dofs (if active).
    pub fn element_dofs(&self, e: usize, component: Component) -> Vec<usize> {
        match component {
            Component::Bulk => self.bulk.element_dofs(e),
            Component::Surface => {
                let off = self.offset();
                self.surf.element_dofs(e).into_iter().map(|d| d + off).collect()
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Bulk,
    Surface,
}

pub fn build_coupled_space(
    active: &ActiveSets,
    nodes: Arc<LagrangeNodes>,
    k_t: usize,
) -> Result<CoupledSpace> {
    if !active.bulk.iter().any(|&b| b) {
        return Err(Error::EmptyActiveSet);
    }
    Ok(CoupledSpace {
        bulk: SpaceTimeSpace::new(nodes.clone(), k_t, active.bulk.clone()),
        surf: SpaceTimeSpace::new(nodes, k_t, active.surface.clone()),
    })
}

/// Coefficient vector on a coupled space.
#[derive(Clone, Debug)]
pub struct DiscreteFunction {
    pub space: Arc<CoupledSpace>,
    pub coeffs: Vec<f64>,
}

impl DiscreteFunction {
    pub fn zeros(space: Arc<CoupledSpace>) -> Self {
        let n = space.n_dofs();
        Self {
            space,
            coeffs: vec![0.0; n],
        }
    }

    pub fn bulk(&self) -> &[f64] {
        &self.coeffs[..self.space.offset()]
    }

    pub fn surface(&self) -> &[f64] {
        &self.coeffs[self.space.offset()..]
    }

    /// Value of one component on element `e` at reference point `(xi, tau)`;
    /// `None` if the element is inactive for that component.
    pub fn eval(&self, component: Component, e: usize, xi: [f64; 2], tau: f64) -> Option<f64> {
        let (sp, c) = match component {
            Component::Bulk => (&self.space.bulk, self.bulk()),
            Component::Surface => (&self.space.surf, self.surface()),
        };
        if !sp.is_active(e) {
            return None;
        }
        let (sv, _) = sp.nodes.basis.eval::<f64>(xi);
        let tv = sp.time_basis.values(tau);
        let nt = sp.n_time();
        let mut u = 0.0;
        for (i, &g) in sp.nodes.element_nodes[e].iter().enumerate() {
            let r = sp.spatial_rank(g).unwrap();
            for j in 0..nt {
                u += c[r * nt + j] * sv[i] * tv[j];
            }
        }
        Some(u)
    }

    /// Nodal values of one component at reference time `tau`, indexed by spatial rank.
    pub fn time_trace(&self, component: Component, tau: f64) -> Vec<f64> {
        let (sp, c) = match component {
            Component::Bulk => (&self.space.bulk, self.bulk()),
            Component::Surface => (&self.space.surf, self.surface()),
        };
        let tv = sp.time_basis.values(tau);
        let nt = sp.n_time();
        (0..sp.n_spatial())
            .map(|r| (0..nt).map(|j| c[r * nt + j] * tv[j]).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_mesh, BackgroundMesh};

    fn space_on(mesh: &BackgroundMesh, k_s: usize, k_t: usize, active: Vec<bool>) -> SpaceTimeSpace {
        SpaceTimeSpace::new(Arc::new(LagrangeNodes::new(mesh, k_s)), k_t, active)
    }

    #[test]
    fn dof_counts() {
        let mesh = build_structured_mesh(1.0);
        let mut one = vec![false; 2];
        one[0] = true;
        assert_eq!(space_on(&mesh, 1, 1, one.clone()).n_dofs(), 6);
        assert_eq!(space_on(&mesh, 1, 1, vec![true; 2]).n_dofs(), 8);
        assert_eq!(space_on(&mesh, 2, 3, one).n_local(), 24);
    }

    #[test]
    fn partition_of_unity() {
        let mesh = build_structured_mesh(0.5);
        let sp = space_on(&mesh, 2, 2, vec![true; mesh.n_elements()]);
        let mut s = EvalScratch::new(&sp);
        let mut b = BasisEval::default();
        eval_basis(&sp, [0.2, 0.3], 0.7, &mut s, &mut b);
        let sum: f64 = b.values.iter().sum();
        let gs = b.ref_grads.iter().fold([0.0, 0.0], |a, g| [a[0] + g[0], a[1] + g[1]]);
        let ds: f64 = b.dtau.iter().sum();
        assert!((sum - 1.0).abs() < 1e-13);
        assert!(gs[0].abs() < 1e-12 && gs[1].abs() < 1e-12 && ds.abs() < 1e-12);
    }

    #[test]
    fn monotone_dof_count() {
        let mesh = build_structured_mesh(0.25);
        let n = mesh.n_elements();
        let small: Vec<bool> = (0..n).map(|e| e % 3 == 0).collect();
        let large: Vec<bool> = (0..n).map(|e| e % 3 == 0 || e % 5 == 0).collect();
        assert!(space_on(&mesh, 2, 1, small).n_dofs() <= space_on(&mesh, 2, 1, large).n_dofs());
    }
}
