//! Final-time errors and geometric measures of the mapped domains.

use rayon::prelude::*;

use crate::cut_quadrature::slice_rule;
use crate::error::Result;
use crate::isoparam::{discrete_normal, linear_normal};
use crate::mesh::BackgroundMesh;
use crate::model::ExactSolution;
use crate::quadrature::RuleTag;
use crate::slab::SlabData;
use crate::space::{Component, DiscreteFunction};

fn sum_over<F>(elements: &[usize], f: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    // ordered reduction keeps the result independent of the thread count
    let parts = elements.par_iter().map(|&e| f(e)).collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

/// `int_{Omega_h(t)} f(x, u_h)` and `int_{Gamma_h(t)} g(x, u_h)` at reference time `tau`.
pub fn slice_integrals<FB, FS>(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    tau: f64,
    bulk: FB,
    surf: FS,
) -> Result<(f64, f64)>
where
    FB: Fn(usize, [f64; 2], [f64; 2]) -> f64 + Sync + Send,
    FS: Fn(usize, [f64; 2], [f64; 2]) -> f64 + Sync + Send,
{
    let order = slab.disc.order_s();
    let be = slab.active.bulk_elements();
    let ib = sum_over(&be, |e| {
        let s = slice_rule(mesh, e, &slab.levelset, tau, RuleTag::SliceVol, order)?;
        let mut acc = 0.0;
        for (xi, w) in s.rule.iter() {
            let m = slab.deformation.eval_mapping(mesh, e, xi, tau)?;
            acc += w * m.det * bulk(e, xi, m.x);
        }
        Ok(acc)
    })?;
    let se = slab.active.surface_elements();
    let is = sum_over(&se, |e| {
        let s = slice_rule(mesh, e, &slab.levelset, tau, RuleTag::SliceIf, order)?;
        if s.rule.is_empty() {
            return Ok(0.0);
        }
        let n_lin = linear_normal(mesh, e, s.ref_grad);
        let mut acc = 0.0;
        for (xi, w) in s.rule.iter() {
            let m = slab.deformation.eval_mapping(mesh, e, xi, tau)?;
            let (_, fac) = discrete_normal(&m, n_lin);
            acc += w * fac * surf(e, xi, m.x);
        }
        Ok(acc)
    })?;
    Ok((ib, is))
}

/// `(area(Omega_h), length(Gamma_h))` at reference time `tau`.
pub fn slice_measures(slab: &SlabData, mesh: &BackgroundMesh, tau: f64) -> Result<(f64, f64)> {
    slice_integrals(slab, mesh, tau, |_, _, _| 1.0, |_, _, _| 1.0)
}

/// `L^2` errors of bulk and surface components at the end of the slab.
pub fn compute_final_errors<E: ExactSolution + ?Sized>(
    slab: &SlabData,
    mesh: &BackgroundMesh,
    sol: &DiscreteFunction,
    exact: &E,
) -> Result<(f64, f64)> {
    let t = slab.t_start + slab.dt;
    let (eb, es) = slice_integrals(
        slab,
        mesh,
        1.0,
        |e, xi, x| {
            let d = sol.eval(Component::Bulk, e, xi, 1.0).unwrap_or(0.0) - exact.bulk(x, t);
            d * d
        },
        |e, xi, x| {
            let d = sol.eval(Component::Surface, e, xi, 1.0).unwrap_or(0.0) - exact.surface(x, t);
            d * d
        },
    )?;
    Ok((eb.max(0.0).sqrt(), es.max(0.0).sqrt()))
}
