//! Standard quadrature: Gauss-Legendre and Gauss-Lobatto on `[0, 1]`, and
//! collapsed-coordinate Gauss rules on the reference triangle
//! `(0,0), (1,0), (0,1)`.

use crate::scalar::Real;

/// What geometric measure a rule represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleTag {
    /// Region `{phi < 0}` of an element.
    VolNeg,
    /// Segment `{phi = 0}` of an element.
    Interface,
    /// Volume rule at a fixed time slice.
    SliceVol,
    /// Interface rule at a fixed time slice.
    SliceIf,
    /// Uncut element (stabilisation patches).
    Patch,
}

/// Spatial quadrature rule in reference-triangle coordinates.
#[derive(Clone, Debug)]
pub struct QuadRule<T> {
    pub points: Vec<[T; 2]>,
    pub weights: Vec<T>,
    pub tag: RuleTag,
}

impl<T: Real> QuadRule<T> {
    pub fn empty(tag: RuleTag) -> Self {
        Self {
            points: Vec::new(),
            weights: Vec::new(),
            tag,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().fold(T::zero(), |acc, &w| acc + w)
    }

    /// Integrates `f` against the rule.
    pub fn integrate<F: FnMut([T; 2]) -> T>(&self, mut f: F) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .fold(T::zero(), |acc, (&p, &w)| acc + w * f(p))
    }

    pub fn iter(&self) -> impl Iterator<Item = ([T; 2], T)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Legendre polynomial `P_n(x)` and its derivative on `[-1, 1]`.
fn legendre_with_derivative<T: Real>(n: usize, x: T) -> (T, T) {
    if n == 0 {
        return (T::one(), T::zero());
    }
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=n {
        let kf = T::from_usize_lossy(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = T::from_usize_lossy(n);
    // derivative from the recurrence; only evaluated away from the endpoints
    let dp = nf * (x * p1 - p0) / (x * x - T::one());
    (p1, dp)
}

/// `n`-point Gauss-Legendre rule on `[0, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one point");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let half = T::lit(0.5);
    let eps = T::epsilon() * T::lit(4.0);
    for i in 0..n.div_ceil(2) {
        // Tricomi-type initial guess, then Newton.
        let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut x = T::lit(guess);
        let mut dp = T::one();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x = x - dx;
            if dx.abs() <= eps {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = T::lit(2.0) / ((T::one() - x * x) * dp * dp);
        // map [-1,1] -> [0,1], x descending -> ascending
        nodes[i] = half * (T::one() - x);
        nodes[n - 1 - i] = half * (T::one() + x);
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = half;
    }
    (nodes, weights)
}

/// `n`-point Gauss-Lobatto rule on `[0, 1]` (endpoints included), exact for
/// degree `2n - 3`. `n == 1` degenerates to the midpoint rule.
pub fn gauss_lobatto<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "Gauss-Lobatto needs at least one point");
    if n == 1 {
        return (vec![T::lit(0.5)], vec![T::one()]);
    }
    let deg = n - 1;
    let degf = T::from_usize_lossy(deg);
    let half = T::lit(0.5);
    let eps = T::epsilon() * T::lit(4.0);
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    for i in 0..n.div_ceil(2) {
        let mut x = T::lit((std::f64::consts::PI * i as f64 / deg as f64).cos());
        if i > 0 {
            for _ in 0..100 {
                // Newton on (1 - x^2) P'_deg(x) via the Legendre recurrence
                let mut p_prev = T::one();
                let mut p = x;
                for k in 2..=deg {
                    let kf = T::from_usize_lossy(k);
                    let next =
                        ((T::lit(2.0) * kf - T::one()) * x * p - (kf - T::one()) * p_prev) / kf;
                    p_prev = p;
                    p = next;
                }
                let dx = (x * p - p_prev) / (T::from_usize_lossy(n) * p);
                x = x - dx;
                if dx.abs() <= eps {
                    break;
                }
            }
        }
        let (p, _) = if i == 0 {
            (T::one(), T::zero())
        } else {
            legendre_with_derivative(deg, x)
        };
        let w = T::lit(2.0) / (degf * (degf + T::one()) * p * p);
        nodes[i] = half * (T::one() - x);
        nodes[n - 1 - i] = half * (T::one() + x);
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    nodes[0] = T::zero();
    nodes[n - 1] = T::one();
    if n % 2 == 1 {
        nodes[n / 2] = half;
    }
    (nodes, weights)
}

/// Number of Gauss points needed to integrate degree `degree` exactly in 1D.
pub fn gauss_points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// Rule on the reference triangle exact for polynomials of total degree
/// `degree`, built from a Gauss tensor rule on the square through the
/// collapsed map `(u, v) -> (u, v (1 - u))`. All weights are positive.
pub fn triangle_rule<T: Real>(degree: usize, tag: RuleTag) -> QuadRule<T> {
    let (gu, wu) = gauss_legendre::<T>(gauss_points_for_degree(degree + 1));
    let (gv, wv) = gauss_legendre::<T>(gauss_points_for_degree(degree));
    let mut points = Vec::with_capacity(gu.len() * gv.len());
    let mut weights = Vec::with_capacity(gu.len() * gv.len());
    for (&u, &a) in gu.iter().zip(&wu) {
        for (&v, &b) in gv.iter().zip(&wv) {
            let s = T::one() - u;
            points.push([u, v * s]);
            weights.push(a * b * s);
        }
    }
    QuadRule {
        points,
        weights,
        tag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_triangle_exact(a: u32, b: u32) -> f64 {
        // int_T x^a y^b = a! b! / (a + b + 2)!
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        fact(a) * fact(b) / fact(a + b + 2)
    }

    #[test]
    fn gauss_legendre_integrates_to_degree() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre::<f64>(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
            assert!(w.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn gauss_lobatto_known_nodes() {
        let (x, w) = gauss_lobatto::<f64>(3);
        assert_eq!(x, vec![0.0, 0.5, 1.0]);
        assert!((w[0] - 1.0 / 6.0).abs() < 1e-15 && (w[1] - 2.0 / 3.0).abs() < 1e-15);
        let (x, w) = gauss_lobatto::<f64>(4);
        let r = 0.5 * (1.0 - 5f64.sqrt() / 5.0);
        assert!((x[1] - r).abs() < 1e-15);
        assert!((w[0] - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_lobatto_integrates_to_degree() {
        for n in 2..=8 {
            let (x, w) = gauss_lobatto::<f64>(n);
            for p in 0..=(2 * n - 3) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn triangle_rule_exact_for_monomials() {
        for degree in 0..=12 {
            let rule = triangle_rule::<f64>(degree, RuleTag::Patch);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let q = rule.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    assert!((q - monomial_triangle_exact(a, b)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn f32_rules_are_usable() {
        let rule = triangle_rule::<f32>(4, RuleTag::Patch);
        assert!((rule.total_weight() - 0.5).abs() < 1e-6);
        let (x, w) = gauss_lobatto::<f32>(5);
        let q: f32 = x.iter().zip(&w).map(|(x, w)| w * x.powi(6)).sum();
        assert!((q - 1.0 / 7.0).abs() < 1e-6);
    }
}
