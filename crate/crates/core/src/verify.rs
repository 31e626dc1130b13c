//! Self-checks run by the `verify` command and the acceptance tests.
//!
//! The cut-rule oracle integrates monomials over the clipped polygon with
//! Green's theorem and exact polynomial arithmetic, so it shares no code
//! with the quadrature it checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cut_quadrature::cut_triangle_rule;
use crate::error::Result;
use crate::forms::{assemble_slab_system, residual, residual_and_jacobian, surface_divergence, Incoming};
use crate::mesh::{build_structured_mesh, TimePartition};
use crate::model::ModelData;
use crate::postprocess::slice_measures;
use crate::problem::{ConstantPair, CouplingModel, ManufacturedProblem, RADIUS, T_FINAL};
use crate::quadrature::RuleTag;
use crate::slab::{build_slab, Discretization, MeshContext};
use crate::solver::norm2;
use crate::space::Component;
use crate::study::{level_dt, level_h, least_squares_eoc};
use crate::timestepping::{march, MarchConfig, NewtonConfig};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

// ---------------------------------------------------------------------------
// analytic polygon oracle

/// Coefficients of a univariate polynomial, lowest degree first.
type Poly = Vec<f64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut c = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    c
}

fn poly_pow(a: &Poly, n: usize) -> Poly {
    (0..n).fold(vec![1.0], |acc, _| poly_mul(&acc, a))
}

/// `int_0^1 p(s) ds`.
fn poly_integral01(p: &Poly) -> f64 {
    p.iter().enumerate().map(|(n, c)| c / (n + 1) as f64).sum()
}

/// `int_{p -> q} x^a y^b ds` along a straight segment.
pub fn segment_monomial(p: [f64; 2], q: [f64; 2], a: usize, b: usize) -> f64 {
    let x = vec![p[0], q[0] - p[0]];
    let y = vec![p[1], q[1] - p[1]];
    let len = (q[0] - p[0]).hypot(q[1] - p[1]);
    len * poly_integral01(&poly_mul(&poly_pow(&x, a), &poly_pow(&y, b)))
}

/// `int_P x^a y^b dA` over a counter-clockwise polygon, from
/// `oint x^{a+1} y^b / (a+1) dy`.
pub fn polygon_monomial(poly: &[[f64; 2]], a: usize, b: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let x = vec![p[0], q[0] - p[0]];
        let y = vec![p[1], q[1] - p[1]];
        let integrand = poly_mul(&poly_pow(&x, a + 1), &poly_pow(&y, b));
        acc += (q[1] - p[1]) * poly_integral01(&integrand);
    }
    acc / (a + 1) as f64
}

/// Shoelace area of a polygon (positive for counter-clockwise order).
pub fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (poly[i], poly[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
}

/// Sutherland-Hodgman clip of the reference triangle against
/// `{c0 + c1 x + c2 y < 0}`; also returns the interface segment.
pub fn clip_reference_triangle(c: [f64; 3]) -> (Vec<[f64; 2]>, Option<([f64; 2], [f64; 2])>) {
    let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let f = |p: [f64; 2]| c[0] + c[1] * p[0] + c[2] * p[1];
    let mut out = Vec::new();
    let mut cuts = Vec::new();
    for i in 0..3 {
        let (p, q) = (tri[i], tri[(i + 1) % 3]);
        let (fp, fq) = (f(p), f(q));
        if fp < 0.0 {
            out.push(p);
        }
        if (fp < 0.0) != (fq < 0.0) {
            let s = fp / (fp - fq);
            let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
            out.push(x);
            cuts.push(x);
        }
    }
    let seg = (cuts.len() == 2).then(|| (cuts[0], cuts[1]));
    (out, seg)
}

/// Largest absolute deviation of the cut volume and interface rules from the
/// polygon oracle over `n_sets` random linear level sets and all monomials
/// of degree `<= 2 k_s + 2`, `k_s` drawn from `1..=4`.
pub fn cut_rule_exactness(n_sets: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < n_sets {
        let phis: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        if phis.iter().any(|p| p.abs() < 1e-3) {
            continue;
        }
        let k_s: usize = rng.random_range(1..=4);
        let order = 2 * k_s + 2;
        let c = [phis[0], phis[1] - phis[0], phis[2] - phis[0]];
        let (poly, seg) = clip_reference_triangle(c);
        let vol = cut_triangle_rule(phis, RuleTag::VolNeg, order)?;
        let surf = cut_triangle_rule(phis, RuleTag::Interface, order)?;
        for a in 0..=order {
            for b in 0..=order - a {
                let m = |p: [f64; 2]| p[0].powi(a as i32) * p[1].powi(b as i32);
                let exact_v = if poly.len() >= 3 { polygon_monomial(&poly, a, b) } else { 0.0 };
                worst = worst.max((vol.integrate(m) - exact_v).abs());
                let exact_s = seg.map_or(0.0, |(p, q)| segment_monomial(p, q, a, b));
                worst = worst.max((surf.integrate(m) - exact_s).abs());
            }
        }
        done += 1;
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Langmuir Jacobian

/// Worst relative deviation `|(F(u+ew) - F(u-ew))/2e - DF(u) w| / |DF(u) w|`
/// over `n` random states and directions on the first slab of level 0.
pub fn langmuir_jacobian_fd(k: usize, n: usize, seed: u64) -> Result<f64> {
    let problem = ManufacturedProblem::new(CouplingModel::Langmuir);
    let disc = Discretization::uniform(k);
    let ctx = MeshContext::new(build_structured_mesh(level_h(0)), &disc);
    let slab = build_slab(&problem, &ctx, &disc, 0, 0.0, level_dt(0))?;
    let mesh = &*ctx.mesh;
    let sys = assemble_slab_system(&slab, mesh, &problem, Incoming::Initial)?;
    let p = *problem.params();
    let dim = slab.space.n_dofs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let u: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, jac) = residual_and_jacobian(&sys, &slab, mesh, &p, &u)?;
        let jw = jac.apply(&w);
        let shift = |s: f64| u.iter().zip(&w).map(|(a, b)| a + s * b).collect::<Vec<f64>>();
        let fp = residual(&sys, &slab, mesh, &p, &shift(eps))?;
        let fm = residual(&sys, &slab, mesh, &p, &shift(-eps))?;
        let diff: Vec<f64> = fp
            .iter()
            .zip(&fm)
            .zip(&jw)
            .map(|((a, b), j)| (a - b) / (2.0 * eps) - j)
            .collect();
        worst = worst.max(norm2(&diff) / norm2(&jw));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// geometry

/// `(|area - exact|, |length - exact|)` of the mapped domains at `t = 0` on level `i`.
pub fn geometry_errors(q: usize, i: usize) -> Result<(f64, f64)> {
    let problem = ManufacturedProblem::new(CouplingModel::Henry);
    let disc = Discretization::uniform(q);
    let ctx = MeshContext::new(build_structured_mesh(level_h(i)), &disc);
    let slab = build_slab(&problem, &ctx, &disc, 0, 0.0, level_dt(i))?;
    let (area, len) = slice_measures(&slab, &ctx.mesh, 0.0)?;
    let pi = std::f64::consts::PI;
    Ok((
        (area - (1.0 - pi * RADIUS * RADIUS)).abs(),
        (len - 2.0 * pi * RADIUS).abs(),
    ))
}

/// Least-squares EOCs of the area and length errors over the given levels.
pub fn geometry_eoc(q: usize, levels: &[usize]) -> Result<(f64, f64, Vec<(f64, f64)>)> {
    let errs = levels
        .iter()
        .map(|&i| geometry_errors(q, i))
        .collect::<Result<Vec<_>>>()?;
    let a: Vec<f64> = errs.iter().map(|e| e.0).collect();
    let l: Vec<f64> = errs.iter().map(|e| e.1).collect();
    Ok((
        least_squares_eoc(levels, &a).unwrap_or(f64::NAN),
        least_squares_eoc(levels, &l).unwrap_or(f64::NAN),
        errs,
    ))
}

// ---------------------------------------------------------------------------
// flow and constant states

/// Largest `|div_Gamma w|` for the rotation over random points and unit normals.
pub fn rotation_surface_divergence(n: usize, seed: u64) -> f64 {
    let problem = ManufacturedProblem::new(CouplingModel::Henry);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let jac = problem.velocity_jacobian(x, 0.0);
            surface_divergence(jac, [a.cos(), a.sin()]).abs()
        })
        .fold(0.0, f64::max)
}

/// Largest deviation of the final bulk and surface traces from `c`.
pub fn constant_pair_deviation(k: usize, i: usize, c: f64) -> Result<f64> {
    let problem = ConstantPair::new(c);
    let disc = Discretization::uniform(k);
    let ctx = MeshContext::new(build_structured_mesh(level_h(i)), &disc);
    let part = TimePartition::from_step(T_FINAL, level_dt(i));
    let cfg = MarchConfig {
        disc,
        newton: NewtonConfig::default(),
    };
    let (last, _) = march(&problem, &ctx, &cfg, &part)?;
    let dev = [Component::Bulk, Component::Surface]
        .iter()
        .flat_map(|&comp| last.solution.time_trace(comp, 1.0))
        .map(|v| (v - c).abs())
        .fold(0.0, f64::max);
    Ok(dev)
}

/// The quick checks of the `verify` command.
pub fn run_all() -> Vec<CheckResult> {
    let mut out = Vec::new();
    out.push(match cut_rule_exactness(200, 1) {
        Ok(e) => CheckResult::new("cut-rule exactness", e <= 1e-12, format!("max deviation {e:.2e} (tol 1e-12)")),
        Err(e) => CheckResult::new("cut-rule exactness", false, e.to_string()),
    });
    out.push(match langmuir_jacobian_fd(1, 20, 2) {
        Ok(e) => CheckResult::new("Langmuir Jacobian", e <= 1e-8, format!("max relative deviation {e:.2e} (tol 1e-8)")),
        Err(e) => CheckResult::new("Langmuir Jacobian", false, e.to_string()),
    });
    let d = rotation_surface_divergence(1000, 3);
    out.push(CheckResult::new("div_Gamma w", d <= 1e-12, format!("max {d:.2e} (tol 1e-12)")));
    for (q, levels, tol) in [(1usize, [1usize, 2, 3, 4], 1.8), (2, [0, 1, 2, 3], 2.6)] {
        out.push(match geometry_eoc(q, &levels) {
            Ok((ea, el, _)) => CheckResult::new(
                if q == 1 { "geometry q=1" } else { "geometry q=2" },
                ea >= tol && el >= tol,
                format!("EOC area {ea:.2} length {el:.2} (min {tol})"),
            ),
            Err(e) => CheckResult::new(if q == 1 { "geometry q=1" } else { "geometry q=2" }, false, e.to_string()),
        });
    }
    out.push(match constant_pair_deviation(1, 0, 0.7) {
        Ok(e) => CheckResult::new("constant pair", e <= 1e-8, format!("max deviation {e:.2e} (tol 1e-8)")),
        Err(e) => CheckResult::new("constant pair", false, e.to_string()),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_on_known_shapes() {
        let tri = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        assert!((polygon_monomial(&tri, 0, 0) - 0.5).abs() < 1e-15);
        assert!((shoelace(&tri) - 0.5).abs() < 1e-15);
        // int_T x dA = 1/6, int_T x y dA = 1/24
        assert!((polygon_monomial(&tri, 1, 0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((polygon_monomial(&tri, 1, 1) - 1.0 / 24.0).abs() < 1e-15);
        assert!((segment_monomial([0.0, 0.0], [2.0, 0.0], 2, 0) - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn clip_halves() {
        // x < 0.5
        let (poly, seg) = clip_reference_triangle([-0.5, 1.0, 0.0]);
        assert!((shoelace(&poly) - 0.375).abs() < 1e-15);
        let (p, q) = seg.unwrap();
        assert!(((p[0] - q[0]).hypot(p[1] - q[1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cut_rules_small_sample() {
        assert!(cut_rule_exactness(30, 9).unwrap() < 1e-12);
    }

    #[test]
    fn divergence_vanishes() {
        assert!(rotation_surface_divergence(100, 4) < 1e-12);
    }
}
