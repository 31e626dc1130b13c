//! Quadrature on cut elements.
//!
//! At a fixed time the level-set interpolant is linear on each element, so
//! the negative part is a triangle or quadrilateral and the interface a
//! straight segment; both are integrated exactly by mapped Gauss rules.
//! Slab integrals are iterated: a Gauss rule in time, and at every time node
//! the spatial cut rule for the level set frozen at that time.

use crate::error::{Error, Result};
use crate::levelset::{SlabLevelsetLin, ZERO_SHIFT};
use crate::mesh::BackgroundMesh;
use crate::quadrature::{gauss_legendre, gauss_points_for_degree, triangle_rule, QuadRule, RuleTag};
use crate::scalar::Real;

const REF_VERTICES: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

fn lerp<T: Real>(a: [T; 2], b: [T; 2], s: T) -> [T; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

fn ref_vertex<T: Real>(i: usize) -> [T; 2] {
    [T::lit(REF_VERTICES[i][0]), T::lit(REF_VERTICES[i][1])]
}

/// Gradient of the linear interpolant of `phis` on the reference triangle.
pub fn linear_gradient<T: Real>(phis: [T; 3]) -> [T; 2] {
    [phis[1] - phis[0], phis[2] - phis[0]]
}

/// Maps `base` (a reference-triangle rule) onto the triangle `tri`.
fn push_rule<T: Real>(base: &QuadRule<T>, tri: [[T; 2]; 3], out: &mut QuadRule<T>) {
    let e1 = [tri[1][0] - tri[0][0], tri[1][1] - tri[0][1]];
    let e2 = [tri[2][0] - tri[0][0], tri[2][1] - tri[0][1]];
    let det = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    if det == T::zero() {
        return;
    }
    for (p, w) in base.iter() {
        out.points.push([
            tri[0][0] + e1[0] * p[0] + e2[0] * p[1],
            tri[0][1] + e1[1] * p[0] + e2[1] * p[1],
        ]);
        out.weights.push(w * det);
    }
}

/// Quadrature for the region `{phi_lin < 0}` (`VolNeg`) or the segment
/// `{phi_lin = 0}` (`Interface`) of the reference triangle, where `phi_lin`
/// is the linear interpolant of the vertex values `phis`. Exact for
/// polynomials of degree `<= order`.
///
/// Vertex values must be nonzero: callers apply [`crate::levelset::perturb`].
pub fn cut_triangle_rule<T: Real>(phis: [T; 3], tag: RuleTag, order: usize) -> Result<QuadRule<T>> {
    let tol = T::lit(ZERO_SHIFT);
    if phis.iter().all(|p| p.abs() < tol) {
        return Err(Error::DegenerateCut);
    }
    let neg: Vec<bool> = phis.iter().map(|&p| p < T::zero()).collect();
    let n_neg = neg.iter().filter(|&&n| n).count();
    let mut out = QuadRule::empty(tag);
    match tag {
        RuleTag::VolNeg | RuleTag::SliceVol | RuleTag::Patch => {
            if n_neg == 0 {
                return Ok(out);
            }
            let base = triangle_rule::<T>(order, tag);
            if n_neg == 3 {
                return Ok(QuadRule { tag, ..base });
            }
            // clip the reference triangle against {phi < 0}
            let mut poly: Vec<[T; 2]> = Vec::with_capacity(4);
            for i in 0..3 {
                let j = (i + 1) % 3;
                if neg[i] {
                    poly.push(ref_vertex(i));
                }
                if neg[i] != neg[j] {
                    let s = phis[i] / (phis[i] - phis[j]);
                    poly.push(lerp(ref_vertex(i), ref_vertex(j), s));
                }
            }
            for k in 1..poly.len() - 1 {
                push_rule(&base, [poly[0], poly[k], poly[k + 1]], &mut out);
            }
            Ok(out)
        }
        RuleTag::Interface | RuleTag::SliceIf => {
            if n_neg == 0 || n_neg == 3 {
                return Ok(out);
            }
            let mut ends: Vec<[T; 2]> = Vec::with_capacity(2);
            for i in 0..3 {
                let j = (i + 1) % 3;
                if neg[i] != neg[j] {
                    let s = phis[i] / (phis[i] - phis[j]);
                    ends.push(lerp(ref_vertex(i), ref_vertex(j), s));
                }
            }
            debug_assert_eq!(ends.len(), 2);
            let len = ((ends[1][0] - ends[0][0]).powi(2) + (ends[1][1] - ends[0][1]).powi(2)).sqrt();
            let (x, w) = gauss_legendre::<T>(gauss_points_for_degree(order));
            for (&s, &ws) in x.iter().zip(&w) {
                out.points.push(lerp(ends[0], ends[1], s));
                out.weights.push(ws * len);
            }
            Ok(out)
        }
    }
}

/// Spatial rule at one time node of a slab rule.
#[derive(Clone, Debug)]
pub struct SliceRule {
    /// Reference time in `[0, 1]`.
    pub tau: f64,
    /// Time weight including the slab length (`1` for pure slice rules).
    pub time_weight: f64,
    /// Points in reference-triangle coordinates; weights measure area (or arc
    /// length) in the undeformed physical element.
    pub rule: QuadRule<f64>,
    /// Reference gradient of the linear level set at `tau`.
    pub ref_grad: [f64; 2],
}

/// Iterated space-time rule on one element.
#[derive(Clone, Debug, Default)]
pub struct SlabRule {
    pub slices: Vec<SliceRule>,
}

impl SlabRule {
    pub fn is_empty(&self) -> bool {
        self.slices.iter().all(|s| s.rule.is_empty())
    }

    /// Integral of `1` in the undeformed configuration.
    pub fn measure(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| s.time_weight * s.rule.total_weight())
            .sum()
    }

    /// Integrates `f(xi, tau)` over the undeformed configuration.
    pub fn integrate<F: FnMut([f64; 2], f64) -> f64>(&self, mut f: F) -> f64 {
        self.slices
            .iter()
            .map(|s| s.time_weight * s.rule.integrate(|p| f(p, s.tau)))
            .sum()
    }
}

/// Cut rule in reference coordinates with weights rescaled to the
/// undeformed physical element.
pub fn element_cut_rule(
    mesh: &BackgroundMesh,
    e: usize,
    phis: [f64; 3],
    tag: RuleTag,
    order: usize,
) -> Result<QuadRule<f64>> {
    let mut rule = cut_triangle_rule(phis, tag, order)?;
    let aff = mesh.affine(e);
    let scale = match tag {
        RuleTag::Interface | RuleTag::SliceIf => {
            let g = linear_gradient(phis);
            // reference tangent of the segment
            let t = [-g[1], g[0]];
            let tn = (t[0] * t[0] + t[1] * t[1]).sqrt();
            let pt = aff.push_vector([t[0] / tn, t[1] / tn]);
            (pt[0] * pt[0] + pt[1] * pt[1]).sqrt()
        }
        _ => aff.det.abs(),
    };
    for w in &mut rule.weights {
        *w *= scale;
    }
    Ok(rule)
}

fn slab_rule(
    mesh: &BackgroundMesh,
    e: usize,
    slab: &SlabLevelsetLin,
    tag: RuleTag,
    order_s: usize,
    n_time: usize,
) -> Result<SlabRule> {
    let (taus, wts) = gauss_legendre::<f64>(n_time);
    let mut slices = Vec::with_capacity(n_time);
    for (&tau, &wt) in taus.iter().zip(&wts) {
        let phis = slab.element_values_perturbed(e, tau);
        let rule = element_cut_rule(mesh, e, phis, tag, order_s)?;
        slices.push(SliceRule {
            tau,
            time_weight: wt * slab.dt,
            rule,
            ref_grad: linear_gradient(phis),
        });
    }
    Ok(SlabRule { slices })
}

/// `int_{I_n} int_{Omega_lin(t) cap T}` with `n_time` Gauss points in time.
pub fn slab_volume_rule(
    mesh: &BackgroundMesh,
    e: usize,
    slab: &SlabLevelsetLin,
    order_s: usize,
    n_time: usize,
) -> Result<SlabRule> {
    slab_rule(mesh, e, slab, RuleTag::VolNeg, order_s, n_time)
}

/// `int_{I_n} int_{Gamma_lin(t) cap T} ds dt` with `n_time` Gauss points in time.
pub fn slab_surface_rule(
    mesh: &BackgroundMesh,
    e: usize,
    slab: &SlabLevelsetLin,
    order_s: usize,
    n_time: usize,
) -> Result<SlabRule> {
    slab_rule(mesh, e, slab, RuleTag::Interface, order_s, n_time)
}

/// Full (uncut) element over the slab, for the normal-gradient stabilisation.
pub fn slab_full_rule(
    mesh: &BackgroundMesh,
    e: usize,
    slab: &SlabLevelsetLin,
    order_s: usize,
    n_time: usize,
) -> SlabRule {
    let (taus, wts) = gauss_legendre::<f64>(n_time);
    let mut base = triangle_rule::<f64>(order_s, RuleTag::Patch);
    let scale = mesh.affine(e).det.abs();
    for w in &mut base.weights {
        *w *= scale;
    }
    SlabRule {
        slices: taus
            .iter()
            .zip(&wts)
            .map(|(&tau, &wt)| SliceRule {
                tau,
                time_weight: wt * slab.dt,
                rule: base.clone(),
                ref_grad: linear_gradient(slab.element_values_perturbed(e, tau)),
            })
            .collect(),
    }
}

/// Spatial rule at the fixed reference time `tau` (`SliceVol` or `SliceIf`).
pub fn slice_rule(
    mesh: &BackgroundMesh,
    e: usize,
    slab: &SlabLevelsetLin,
    tau: f64,
    tag: RuleTag,
    order_s: usize,
) -> Result<SliceRule> {
    let phis = slab.element_values_perturbed(e, tau);
    let rule = element_cut_rule(mesh, e, phis, tag, order_s)?;
    Ok(SliceRule {
        tau,
        time_weight: 1.0,
        rule,
        ref_grad: linear_gradient(phis),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{interpolate_slab_levelset, LevelsetField};
    use crate::mesh::build_structured_mesh;

    #[test]
    fn uncut_patterns() {
        let r = cut_triangle_rule::<f64>([-1.0, -1.0, -1.0], RuleTag::VolNeg, 4).unwrap();
        assert!((r.total_weight() - 0.5).abs() < 1e-15);
        let r = cut_triangle_rule::<f64>([1.0, 1.0, 1.0], RuleTag::VolNeg, 4).unwrap();
        assert_eq!(r.total_weight(), 0.0);
        let r = cut_triangle_rule::<f64>([-1.0, -1.0, -1.0], RuleTag::Interface, 4).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn half_plane_cut() {
        // phi = x - 0.5
        let phis = [-0.5, 0.5, -0.5];
        let v = cut_triangle_rule::<f64>(phis, RuleTag::VolNeg, 3).unwrap();
        assert!((v.total_weight() - 0.375).abs() < 1e-15);
        let s = cut_triangle_rule::<f64>(phis, RuleTag::Interface, 3).unwrap();
        assert!((s.total_weight() - 0.5).abs() < 1e-15);
        for p in &s.points {
            assert!((p[0] - 0.5).abs() < 1e-15);
        }
        // int_{x<0.5} x dA = int_0^0.5 x (1 - x) dx = 1/8 - 1/24
        let m = v.integrate(|p| p[0]);
        assert!((m - (0.125 - 1.0 / 24.0)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cut_is_reported() {
        assert!(matches!(
            cut_triangle_rule::<f64>([0.0, 1e-15, -1e-16], RuleTag::VolNeg, 2),
            Err(Error::DegenerateCut)
        ));
    }

    #[test]
    fn weights_positive() {
        for phis in [[-0.3, 0.2, 0.7], [0.1, -2.0, -0.01], [1e-3, -1e-3, 5.0]] {
            for tag in [RuleTag::VolNeg, RuleTag::Interface] {
                let r = cut_triangle_rule(phis, tag, 6).unwrap();
                assert!(r.weights.iter().all(|&w| w > 0.0));
            }
        }
    }

    struct Plane;
    impl LevelsetField for Plane {
        fn phi(&self, x: [f64; 2], _t: f64) -> f64 {
            x[0] - 0.5
        }
        fn grad(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
            [1.0, 0.0]
        }
        fn dt(&self, _x: [f64; 2], _t: f64) -> f64 {
            0.0
        }
    }

    #[test]
    fn plane_slab_measures() {
        for h in [0.25, 0.15] {
            let mesh = build_structured_mesh(h);
            let dt = 0.125;
            let slab = interpolate_slab_levelset(&Plane, &mesh, 0.5, 0.5 + dt, 1);
            let (mut vol, mut len) = (0.0, 0.0);
            for e in 0..mesh.n_elements() {
                vol += slab_volume_rule(&mesh, e, &slab, 2, 3).unwrap().measure();
                len += slab_surface_rule(&mesh, e, &slab, 2, 3).unwrap().measure();
            }
            assert!((vol - 0.5 * dt).abs() < 1e-12, "h={h} vol={vol}");
            assert!((len - dt).abs() < 1e-12, "h={h} len={len}");
        }
    }

    #[test]
    fn uncut_element_slab_volume() {
        let mesh = build_structured_mesh(0.25);
        let slab = interpolate_slab_levelset(&Plane, &mesh, 0.0, 0.1, 2);
        // element 0 lies in x in [0, 0.25]
        let r = slab_volume_rule(&mesh, 0, &slab, 2, 4).unwrap();
        assert!((r.measure() - mesh.signed_area(0) * 0.1).abs() < 1e-15);
        let s = slab_surface_rule(&mesh, 0, &slab, 2, 4).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn single_time_point_matches_slice() {
        let mesh = build_structured_mesh(0.3);
        let slab = interpolate_slab_levelset(&Plane, &mesh, 0.0, 0.2, 1);
        for e in 0..mesh.n_elements() {
            let r = slab_volume_rule(&mesh, e, &slab, 3, 1).unwrap();
            let s = slice_rule(&mesh, e, &slab, 0.5, RuleTag::SliceVol, 3).unwrap();
            assert!((r.measure() - 0.2 * s.rule.total_weight()).abs() < 1e-15);
        }
    }
}
