//! Lagrange bases: 1D on arbitrary nodes (used in time) and equispaced
//! `P^k` on the reference triangle (used in space).

use crate::scalar::Real;

/// Lagrange basis on a set of distinct nodes in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Lagrange1d<T> {
    nodes: Vec<T>,
    denominators: Vec<T>,
}

impl<T: Real> Lagrange1d<T> {
    pub fn new(nodes: Vec<T>) -> Self {
        let denominators = (0..nodes.len())
            .map(|j| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != j)
                    .fold(T::one(), |acc, (_, &x)| acc * (nodes[j] - x))
            })
            .collect();
        Self {
            nodes,
            denominators,
        }
    }

    /// Basis on the `n`-point Gauss-Lobatto nodes of `[0, 1]`.
    pub fn lobatto(n: usize) -> Self {
        Self::new(crate::quadrature::gauss_lobatto::<T>(n).0)
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of all basis functions at `x`.
    pub fn values(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.values_into(x, &mut out);
        out
    }

    pub fn values_into(&self, x: T, out: &mut [T]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut p = T::one();
            for (m, &xm) in self.nodes.iter().enumerate() {
                if m != j {
                    p = p * (x - xm);
                }
            }
            *o = p / self.denominators[j];
        }
    }

    /// First derivatives of all basis functions at `x`.
    pub fn derivatives(&self, x: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.derivatives_into(x, &mut out);
        out
    }

    pub fn derivatives_into(&self, x: T, out: &mut [T]) {
        let n = self.len();
        for (j, o) in out.iter_mut().enumerate() {
            let mut sum = T::zero();
            for skip in 0..n {
                if skip == j {
                    continue;
                }
                let mut p = T::one();
                for (m, &xm) in self.nodes.iter().enumerate() {
                    if m != j && m != skip {
                        p = p * (x - xm);
                    }
                }
                sum = sum + p;
            }
            *o = sum / self.denominators[j];
        }
    }

    /// Interpolates nodal `coeffs` at `x`.
    pub fn interpolate(&self, coeffs: &[T], x: T) -> T {
        debug_assert_eq!(coeffs.len(), self.len());
        let mut total = T::zero();
        for (j, &c) in coeffs.iter().enumerate() {
            let mut p = T::one();
            for (m, &xm) in self.nodes.iter().enumerate() {
                if m != j {
                    p = p * (x - xm);
                }
            }
            total = total + c * p / self.denominators[j];
        }
        total
    }
}

/// Equispaced Lagrange basis of order `k` on the reference triangle.
///
/// Local node `i` sits at barycentric multi-index `multi[i] = (a0, a1, a2)`
/// with `a0 + a1 + a2 = k`, i.e. at `xi = (a1 / k, a2 / k)`. Nodes are
/// enumerated row by row in `a2`, then `a1`.
#[derive(Clone, Debug)]
pub struct TriangleLagrange {
    order: usize,
    multi: Vec<[usize; 3]>,
}

impl TriangleLagrange {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "triangle Lagrange order must be >= 1");
        let mut multi = Vec::with_capacity((order + 1) * (order + 2) / 2);
        for a2 in 0..=order {
            for a1 in 0..=(order - a2) {
                multi.push([order - a1 - a2, a1, a2]);
            }
        }
        Self { order, multi }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.multi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multi.is_empty()
    }

    pub fn multi_indices(&self) -> &[[usize; 3]] {
        &self.multi
    }

    /// Reference coordinates of local node `i`.
    pub fn node<T: Real>(&self, i: usize) -> [T; 2] {
        let k = T::from_usize_lossy(self.order);
        let m = self.multi[i];
        [T::from_usize_lossy(m[1]) / k, T::from_usize_lossy(m[2]) / k]
    }

    /// Values and reference gradients of all basis functions at `xi`.
    ///
    /// Uses the product form `prod_i prod_{j < a_i} (k lambda_i - j) / (j + 1)`
    /// which is a polynomial and therefore valid (as an extension) outside
    /// the triangle as well.
    pub fn eval_into<T: Real>(&self, xi: [T; 2], values: &mut [T], grads: &mut [[T; 2]]) {
        let k = T::from_usize_lossy(self.order);
        let lambda = [T::one() - xi[0] - xi[1], xi[0], xi[1]];
        // d lambda_i / d xi
        let dlambda = [[-T::one(), -T::one()], [T::one(), T::zero()], [T::zero(), T::one()]];
        // factor tables: f[i][a] = prod_{j<a} (k lambda_i - j)/(j+1), df = d/dlambda_i
        let mut f = [[T::zero(); 8]; 3];
        let mut df = [[T::zero(); 8]; 3];
        assert!(self.order < 8, "order too high for the factor table");
        for i in 0..3 {
            f[i][0] = T::one();
            df[i][0] = T::zero();
            for a in 1..=self.order {
                let j = T::from_usize_lossy(a - 1);
                let denom = T::from_usize_lossy(a);
                let lin = (k * lambda[i] - j) / denom;
                f[i][a] = f[i][a - 1] * lin;
                df[i][a] = df[i][a - 1] * lin + f[i][a - 1] * k / denom;
            }
        }
        for (n, m) in self.multi.iter().enumerate() {
            let v = [f[0][m[0]], f[1][m[1]], f[2][m[2]]];
            let d = [df[0][m[0]], df[1][m[1]], df[2][m[2]]];
            values[n] = v[0] * v[1] * v[2];
            let dl = [d[0] * v[1] * v[2], v[0] * d[1] * v[2], v[0] * v[1] * d[2]];
            let mut g = [T::zero(); 2];
            for i in 0..3 {
                g[0] = g[0] + dl[i] * dlambda[i][0];
                g[1] = g[1] + dl[i] * dlambda[i][1];
            }
            grads[n] = g;
        }
    }

    pub fn eval<T: Real>(&self, xi: [T; 2]) -> (Vec<T>, Vec<[T; 2]>) {
        let mut v = vec![T::zero(); self.len()];
        let mut g = vec![[T::zero(); 2]; self.len()];
        self.eval_into(xi, &mut v, &mut g);
        (v, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_basis_is_nodal() {
        for k in 1..=4 {
            let b = TriangleLagrange::new(k);
            assert_eq!(b.len(), (k + 1) * (k + 2) / 2);
            for i in 0..b.len() {
                let (v, _) = b.eval::<f64>(b.node(i));
                for (j, vj) in v.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((vj - expect).abs() < 1e-13, "k={k} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn triangle_basis_partition_of_unity() {
        for k in 1..=4 {
            let b = TriangleLagrange::new(k);
            for xi in [[0.1, 0.2], [0.7, 0.05], [1.3, -0.4]] {
                let (v, g) = b.eval::<f64>(xi);
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let gs = g.iter().fold([0.0, 0.0], |a, g| [a[0] + g[0], a[1] + g[1]]);
                assert!(gs[0].abs() < 1e-11 && gs[1].abs() < 1e-11);
            }
        }
    }

    #[test]
    fn triangle_gradient_matches_finite_difference() {
        let b = TriangleLagrange::new(3);
        let xi = [0.31, 0.27];
        let eps = 1e-6;
        let (_, g) = b.eval::<f64>(xi);
        let (vp, _) = b.eval::<f64>([xi[0] + eps, xi[1]]);
        let (vm, _) = b.eval::<f64>([xi[0] - eps, xi[1]]);
        for i in 0..b.len() {
            let fd = (vp[i] - vm[i]) / (2.0 * eps);
            assert!((fd - g[i][0]).abs() < 1e-7);
        }
    }

    #[test]
    fn lobatto_time_basis_is_kronecker() {
        let l = Lagrange1d::<f64>::lobatto(3);
        for (i, &x) in l.nodes().iter().enumerate() {
            let v = l.values(x);
            for (j, vj) in v.iter().enumerate() {
                assert!((vj - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let d = l.derivatives(0.3);
        assert!(d.iter().sum::<f64>().abs() < 1e-13);
    }

    #[test]
    fn lagrange_reproduces_polynomials() {
        let l = Lagrange1d::<f64>::lobatto(4);
        let f = |t: f64| 1.0 - 2.0 * t + 3.0 * t * t * t;
        let c: Vec<f64> = l.nodes().iter().map(|&t| f(t)).collect();
        for t in [0.0, 0.13, 0.5, 0.99] {
            assert!((l.interpolate(&c, t) - f(t)).abs() < 1e-13);
        }
    }
}
