//! Property tests for the geometric kernels and algebraic invariants.

use proptest::prelude::*;
use stcutfem::basis::{Lagrange1d, TriangleLagrange};
use stcutfem::cut_quadrature::cut_triangle_rule;
use stcutfem::forms::surface_divergence;
use stcutfem::quadrature::{gauss_legendre, gauss_lobatto, triangle_rule, RuleTag};
use stcutfem::study::least_squares_eoc;
use stcutfem::verify::{clip_reference_triangle, polygon_monomial, segment_monomial, shoelace};

fn nonzero() -> impl Strategy<Value = f64> {
    prop_oneof![-1.0..-1e-3, 1e-3..1.0f64]
}

fn monomial(a: usize, b: usize) -> impl Fn([f64; 2]) -> f64 {
    move |p| p[0].powi(a as i32) * p[1].powi(b as i32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // negative parts of phi and -phi tile the triangle
    #[test]
    fn cut_volumes_complement(p0 in nonzero(), p1 in nonzero(), p2 in nonzero(), k in 1usize..=4) {
        let order = 2 * k + 2;
        let neg = cut_triangle_rule([p0, p1, p2], RuleTag::VolNeg, order).unwrap();
        let pos = cut_triangle_rule([-p0, -p1, -p2], RuleTag::VolNeg, order).unwrap();
        let full = triangle_rule::<f64>(order, RuleTag::Patch);
        for a in 0..=order {
            for b in 0..=order - a {
                let f = monomial(a, b);
                let s = neg.integrate(&f) + pos.integrate(&f);
                prop_assert!((s - full.integrate(&f)).abs() < 1e-13);
            }
        }
    }

    // both sides see the same interface
    #[test]
    fn interface_is_orientation_free(p0 in nonzero(), p1 in nonzero(), p2 in nonzero()) {
        let a = cut_triangle_rule([p0, p1, p2], RuleTag::Interface, 4).unwrap();
        let b = cut_triangle_rule([-p0, -p1, -p2], RuleTag::Interface, 4).unwrap();
        prop_assert!((a.total_weight() - b.total_weight()).abs() < 1e-14);
    }

    #[test]
    fn cut_rules_match_oracle(p0 in nonzero(), p1 in nonzero(), p2 in nonzero(), k in 1usize..=4) {
        let order = 2 * k + 2;
        let (poly, seg) = clip_reference_triangle([p0, p1 - p0, p2 - p0]);
        let vol = cut_triangle_rule([p0, p1, p2], RuleTag::VolNeg, order).unwrap();
        let surf = cut_triangle_rule([p0, p1, p2], RuleTag::Interface, order).unwrap();
        let area = if poly.len() >= 3 { shoelace(&poly) } else { 0.0 };
        prop_assert!((vol.total_weight() - area).abs() < 1e-14);
        for a in 0..=order {
            for b in 0..=order - a {
                let v = if poly.len() >= 3 { polygon_monomial(&poly, a, b) } else { 0.0 };
                prop_assert!((vol.integrate(monomial(a, b)) - v).abs() < 1e-12);
                let s = seg.map_or(0.0, |(p, q)| segment_monomial(p, q, a, b));
                prop_assert!((surf.integrate(monomial(a, b)) - s).abs() < 1e-12);
            }
        }
    }

    // tr(P A) = 0 for antisymmetric A and unit n
    #[test]
    fn antisymmetric_flow_is_tangentially_solenoidal(w in -10.0..10.0f64, angle in 0.0..6.3f64) {
        let d = surface_divergence([[0.0, w], [-w, 0.0]], [angle.cos(), angle.sin()]);
        prop_assert!(d.abs() < 1e-13);
    }

    #[test]
    fn lagrange_partition_of_unity(order in 1usize..=5, x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let xi = [x * (1.0 - y), y];
        let (v, g) = TriangleLagrange::new(order).eval::<f64>(xi);
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let gs = g.iter().fold([0.0, 0.0], |acc, d| [acc[0] + d[0], acc[1] + d[1]]);
        prop_assert!(gs[0].abs() < 1e-10 && gs[1].abs() < 1e-10);
        let l = Lagrange1d::<f64>::lobatto(order + 1);
        prop_assert!((l.values(x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lsq_eoc_recovers_slope(rate in 0.5..5.0f64, c in 1e-3..10.0f64) {
        let lv: Vec<usize> = (0..5).collect();
        let e: Vec<f64> = lv.iter().map(|&i| c * 2f64.powf(-rate * i as f64)).collect();
        prop_assert!((least_squares_eoc(&lv, &e).unwrap() - rate).abs() < 1e-10);
    }
}

#[test]
fn one_dimensional_rules_are_exact() {
    for n in 2..=8 {
        let (x, w) = gauss_legendre::<f64>(n);
        for d in 0..2 * n {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
            assert!((s - 1.0 / (d + 1) as f64).abs() < 1e-14, "gauss n={n} d={d}");
        }
        let (x, w) = gauss_lobatto::<f64>(n);
        assert_eq!((x[0], x[n - 1]), (0.0, 1.0));
        for d in 0..2 * n - 2 {
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
            assert!((s - 1.0 / (d + 1) as f64).abs() < 1e-14, "lobatto n={n} d={d}");
        }
    }
}

#[test]
fn generic_scalar_rules_in_single_precision() {
    let full = triangle_rule::<f32>(4, RuleTag::Patch);
    assert!((full.total_weight() - 0.5).abs() < 1e-6);
    let cut = cut_triangle_rule::<f32>([-0.5, 0.5, 0.5], RuleTag::VolNeg, 2).unwrap();
    assert!((cut.total_weight() - 0.125).abs() < 1e-6);
}
