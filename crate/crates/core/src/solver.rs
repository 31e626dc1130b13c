//! Sparse system storage and direct solves.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Square sparse matrix built from (row, col, value) triplets; duplicates add up.
#[derive(Clone, Debug)]
pub struct SystemMatrix {
    n: usize,
    mat: SparseColMat<usize, f64>,
}

impl SystemMatrix {
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let t: Vec<Triplet<usize, usize, f64>> = triplets
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::try_new_from_triplets(n, n, &t)
            .map_err(|e| Error::InvalidConfig(format!("sparse matrix construction: {e:?}")))?;
        Ok(Self { n, mat })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.mat.compute_nnz()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let cp = self.mat.col_ptr();
        let ri = self.mat.row_idx();
        let vals = self.mat.val();
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for k in cp[c]..cp[c + 1] {
                y[ri[k]] += vals[k] * xc;
            }
        }
        y
    }

    /// `1 / sqrt(|a_ii|)`, falling back to the largest entry of the column.
    fn equilibration(&self) -> Vec<f64> {
        let cp = self.mat.col_ptr();
        let ri = self.mat.row_idx();
        let vals = self.mat.val();
        (0..self.n)
            .map(|c| {
                let mut diag = 0.0f64;
                let mut big = 0.0f64;
                for k in cp[c]..cp[c + 1] {
                    big = big.max(vals[k].abs());
                    if ri[k] == c {
                        diag += vals[k];
                    }
                }
                let d = if diag.abs() > 0.0 { diag.abs() } else { big };
                if d > 0.0 && d.is_finite() {
                    1.0 / d.sqrt()
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// `diag(s) A diag(s)`.
    fn scaled(&self, s: &[f64]) -> Result<Self> {
        let cp = self.mat.col_ptr();
        let ri = self.mat.row_idx();
        let vals = self.mat.val();
        let mut t = Vec::with_capacity(vals.len());
        for c in 0..self.n {
            for k in cp[c]..cp[c + 1] {
                t.push((ri[k], c, s[ri[k]] * vals[k] * s[c]));
            }
        }
        Self::from_triplets(self.n, &t)
    }

    /// Dense copy, for small test systems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        let cp = self.mat.col_ptr();
        let ri = self.mat.row_idx();
        let vals = self.mat.val();
        for c in 0..self.n {
            for k in cp[c]..cp[c + 1] {
                d[ri[k]][c] += vals[k];
            }
        }
        d
    }

    /// Writes `row col value` lines.
    pub fn write_triplets<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let cp = self.mat.col_ptr();
        let ri = self.mat.row_idx();
        let vals = self.mat.val();
        for c in 0..self.n {
            for k in cp[c]..cp[c + 1] {
                writeln!(out, "{} {} {:e}", ri[k], c, vals[k])?;
            }
        }
        Ok(())
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const REL_TOL: f64 = 1e-10;
const ABS_TOL: f64 = 1e-12;
const REFINEMENT_STEPS: usize = 3;

/// Solves `A x = b` by sparse LU on the diagonally equilibrated system
/// `D A D y = D b`, `x = D y`, and checks the residual `|D (A x - b)|`.
///
/// Returns the solution and the relative residual.
pub fn solve_linear_system(a: &SystemMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    solve_linear_system_tol(a, b, REL_TOL)
}

/// Relative residual tolerance for the Newton corrections; the Newton
/// increment test decides convergence.
pub const NEWTON_LINEAR_TOL: f64 = 1e-6;

/// [`solve_linear_system`] with a custom relative residual tolerance.
pub fn solve_linear_system_tol(a: &SystemMatrix, b: &[f64], rel_tol: f64) -> Result<(Vec<f64>, f64)> {
    if b.len() != a.n {
        return Err(Error::InvalidConfig(format!(
            "right-hand side has length {} for a {}x{} system",
            b.len(),
            a.n,
            a.n
        )));
    }
    if a.n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // symmetric diagonal equilibration; tiny cut elements otherwise spoil the LU accuracy
    let scale = a.equilibration();
    let scaled = a.scaled(&scale)?;
    let lu = scaled
        .mat
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("LU factorization failed: {e:?}")))?;
    let solve = |v: &[f64]| {
        let rhs = Mat::<f64>::from_fn(a.n, 1, |i, _| scale[i] * v[i]);
        let sol = lu.solve(&rhs);
        (0..a.n).map(|i| scale[i] * sol[(i, 0)]).collect::<Vec<f64>>()
    };
    // residuals are measured row-scaled, like the factorized system
    let residual = |x: &[f64]| -> Vec<f64> {
        a.apply(x)
            .iter()
            .zip(b)
            .zip(&scale)
            .map(|((p, q), s)| s * (p - q))
            .collect()
    };
    let bn = norm2(&b.iter().zip(&scale).map(|(q, s)| s * q).collect::<Vec<f64>>());
    let mut x = solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite solution".into()));
    }
    let mut rn = norm2(&residual(&x));
    // a few steps of iterative refinement for ill-conditioned cut systems
    for _ in 0..REFINEMENT_STEPS {
        if rn <= REL_TOL * bn {
            break;
        }
        let dx = solve(&residual(&x).iter().zip(&scale).map(|(r, s)| r / s).collect::<Vec<f64>>());
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(p, q)| p - q).collect();
        let rtn = norm2(&residual(&trial));
        if !(rtn < rn) {
            break;
        }
        (x, rn) = (trial, rtn);
    }
    let rel = if bn > 0.0 { rn / bn } else { rn };
    let ok = if bn > 0.0 { rel <= rel_tol } else { rn <= ABS_TOL };
    if !ok {
        return Err(Error::SingularSystem(format!("residual check failed: {rel:e}")));
    }
    Ok((x, rel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_diagonal() {
        let a = SystemMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let (x, _) = solve_linear_system(&a, &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
        let a = SystemMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 4.0)]).unwrap();
        let (x, _) = solve_linear_system(&a, &[2.0, 8.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SystemMatrix::from_triplets(1, &[(0, 0, 1.0), (0, 0, 2.5)]).unwrap();
        assert_eq!(a.to_dense(), vec![vec![3.5]]);
    }

    #[test]
    fn random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 50;
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let mut v: f64 = (0..n).map(|k| m[k][i] * m[k][j]).sum();
                if i == j {
                    v += 1.0;
                }
                t.push((i, j, v));
            }
        }
        let a = SystemMatrix::from_triplets(n, &t).unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, rel) = solve_linear_system(&a, &b).unwrap();
        assert!(rel < 1e-10);
    }

    #[test]
    fn singular_is_reported() {
        let a = SystemMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(
            solve_linear_system(&a, &[1.0, 0.0]),
            Err(Error::SingularSystem(_))
        ));
    }
}
