//! Per-slab geometry, quadrature and spaces.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cut_quadrature::{slab_surface_rule, slab_volume_rule, SlabRule};
use crate::error::{Error, Result};
use crate::isoparam::{build_slab_deformation, SlabDeformation};
use crate::levelset::{classify_slab, interpolate_slab_levelset, uniform_samples, ActiveSets, SlabLevelsetLin};
use crate::mesh::{BackgroundMesh, LagrangeNodes};
use crate::model::ModelData;
use crate::quadrature::gauss_legendre;
use crate::space::{build_coupled_space, CoupledSpace};

/// Discretisation orders and geometry knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discretization {
    pub k_s: usize,
    pub k_t: usize,
    /// Spatial order of the isoparametric mapping.
    pub q_s: usize,
    /// Temporal order of the isoparametric mapping.
    pub q_t: usize,
    /// Temporal order of the piecewise linear level set.
    pub q_ls: usize,
    /// Safety-strip factor: bulk elements within `c_delta |w|_inf dt` of the domain are kept.
    pub c_delta: f64,
    /// Number of uniform sign samples per slab (default `2 q_ls + 5`).
    pub n_samples: Option<usize>,
}

impl Discretization {
    /// All orders equal to `k`.
    pub fn uniform(k: usize) -> Self {
        Self {
            k_s: k,
            k_t: k,
            q_s: k,
            q_t: k,
            q_ls: k,
            c_delta: 1.0,
            n_samples: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_s == 0 || self.k_s > 6 || self.q_s == 0 || self.q_s > 4 {
            return Err(Error::InvalidConfig(format!(
                "unsupported spatial orders k_s = {}, q_s = {}",
                self.k_s, self.q_s
            )));
        }
        if self.q_t == 0 || self.q_ls == 0 {
            return Err(Error::InvalidConfig("temporal geometry orders must be >= 1".into()));
        }
        if self.c_delta < 0.0 {
            return Err(Error::InvalidConfig("c_delta must be non-negative".into()));
        }
        Ok(())
    }

    /// Spatial quadrature degree.
    pub fn order_s(&self) -> usize {
        2 * self.k_s + 2
    }

    /// Number of Gauss points in time.
    pub fn n_time(&self) -> usize {
        self.k_t + self.q_t + 2
    }

    pub fn samples(&self) -> usize {
        self.n_samples.unwrap_or(2 * self.q_ls + 5)
    }
}

/// Everything needed to assemble one slab.
#[derive(Debug)]
pub struct SlabData {
    pub index: usize,
    pub t_start: f64,
    pub dt: f64,
    pub disc: Discretization,
    pub levelset: SlabLevelsetLin,
    pub active: ActiveSets,
    pub deformation: SlabDeformation,
    pub space: Arc<CoupledSpace>,
    /// Space-time bulk rule per bulk-active element.
    pub vol_rules: Vec<Option<SlabRule>>,
    /// Space-time interface rule per surface-active element.
    pub surf_rules: Vec<Option<SlabRule>>,
}

/// Maximum speed of the flow over the mesh vertices at the slab ends.
fn max_speed<M: ModelData + ?Sized>(model: &M, mesh: &BackgroundMesh, t0: f64, t1: f64) -> f64 {
    let mut m: f64 = 0.0;
    for &t in &[t0, 0.5 * (t0 + t1), t1] {
        for v in &mesh.vertices {
            let w = model.velocity(*v, t);
            m = m.max((w[0] * w[0] + w[1] * w[1]).sqrt());
        }
    }
    m
}

/// Shared mesh-level data reused by all slabs.
#[derive(Clone, Debug)]
pub struct MeshContext {
    pub mesh: Arc<BackgroundMesh>,
    pub space_nodes: Arc<LagrangeNodes>,
    pub geom_nodes: Arc<LagrangeNodes>,
}

impl MeshContext {
    pub fn new(mesh: BackgroundMesh, disc: &Discretization) -> Self {
        let space_nodes = Arc::new(LagrangeNodes::new(&mesh, disc.k_s));
        let geom_nodes = if disc.q_s == disc.k_s {
            space_nodes.clone()
        } else {
            Arc::new(LagrangeNodes::new(&mesh, disc.q_s))
        };
        Self {
            mesh: Arc::new(mesh),
            space_nodes,
            geom_nodes,
        }
    }
}

pub fn build_slab<M: ModelData + ?Sized>(
    model: &M,
    ctx: &MeshContext,
    disc: &Discretization,
    index: usize,
    t_start: f64,
    t_end: f64,
) -> Result<SlabData> {
    let mesh = &*ctx.mesh;
    let dt = t_end - t_start;
    let levelset = interpolate_slab_levelset(model, mesh, t_start, t_end, disc.q_ls);
    let mut samples = uniform_samples(disc.samples());
    samples.extend(gauss_legendre::<f64>(disc.n_time()).0);
    let strip = disc.c_delta * max_speed(model, mesh, t_start, t_end) * dt;
    let active = classify_slab(&levelset, mesh, &samples, strip)?;
    let deformation = build_slab_deformation(model, mesh, ctx.geom_nodes.clone(), &levelset, &active, disc.q_t)?;
    let space = Arc::new(build_coupled_space(&active, ctx.space_nodes.clone(), disc.k_t)?);
    let order_s = disc.order_s();
    let n_time = disc.n_time();
    let vol_rules = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            if active.bulk[e] {
                slab_volume_rule(mesh, e, &levelset, order_s, n_time).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let surf_rules = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            if active.surface[e] {
                slab_surface_rule(mesh, e, &levelset, order_s, n_time).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SlabData {
        index,
        t_start,
        dt,
        disc: *disc,
        levelset,
        active,
        deformation,
        space,
        vol_rules,
        surf_rules,
    })
}

impl SlabData {
    pub fn time_at(&self, tau: f64) -> f64 {
        self.levelset.time_at(tau)
    }
}
