//! Slab-by-slab marching with Newton iteration for the bilinear coupling.

use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::forms::{assemble_slab_system, residual_and_jacobian, Incoming, SlabSystem};
use crate::mesh::{BackgroundMesh, TimePartition};
use crate::model::ModelData;
use crate::slab::{build_slab, Discretization, MeshContext, SlabData};
use crate::solver::{norm2, solve_linear_system, solve_linear_system_tol, SystemMatrix, NEWTON_LINEAR_TOL};
use crate::space::{Component, CoupledSpace, DiscreteFunction};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Divergence is declared once an increment exceeds the first one by this factor.
    pub divergence_factor: f64,
    /// Step halving on residual increase.
    pub damped: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 25,
            divergence_factor: 1e6,
            damped: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonReport {
    /// Newton updates, not counting the final confirming solve.
    pub iterations: usize,
    pub final_increment: f64,
    pub linear_residual: f64,
}

/// Plain Newton `u <- u - DF(u)^{-1} F(u)` until `|w|_2 < tol`.
///
/// `eval(u)` returns `(F(u), DF(u))`. The last solve only confirms
/// convergence and is not counted as an iteration.
pub fn newton_iterate<F>(mut u: Vec<f64>, cfg: &NewtonConfig, slab: usize, mut eval: F) -> Result<(Vec<f64>, NewtonReport)>
where
    F: FnMut(&[f64]) -> Result<(Vec<f64>, SystemMatrix)>,
{
    let mut first: Option<f64> = None;
    let mut lin_res: f64 = 0.0;
    for solves in 1..=cfg.max_iter + 1 {
        let (r, jac) = eval(&u)?;
        let (w, rel) = match solve_linear_system_tol(&jac, &r, NEWTON_LINEAR_TOL) {
            Ok(v) => v,
            Err(Error::SingularSystem(msg)) if solves > 1 => {
                return Err(Error::NewtonDiverged {
                    slab,
                    iterations: solves - 1,
                    increment: f64::NAN,
                })
                .inspect_err(|_| log::warn!("Newton linear solve failed: {msg}"));
            }
            Err(e) => return Err(e),
        };
        lin_res = lin_res.max(rel);
        let inc = norm2(&w);
        log::debug!("slab {slab} solve {solves}: increment {inc:e} linear residual {rel:e}");
        if !inc.is_finite() {
            return Err(Error::NewtonDiverged {
                slab,
                iterations: solves,
                increment: inc,
            });
        }
        let base = *first.get_or_insert(inc.max(cfg.tol));
        if inc > cfg.divergence_factor * base {
            return Err(Error::NewtonDiverged {
                slab,
                iterations: solves,
                increment: inc,
            });
        }
        let mut lambda = 1.0;
        if cfg.damped && inc >= cfg.tol {
            let r0 = norm2(&r);
            for _ in 0..10 {
                let trial: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - lambda * b).collect();
                let (rt, _) = eval(&trial)?;
                if norm2(&rt) <= r0 {
                    break;
                }
                lambda *= 0.5;
            }
        }
        for (ui, wi) in u.iter_mut().zip(&w) {
            *ui -= lambda * wi;
        }
        if inc < cfg.tol {
            return Ok((
                u,
                NewtonReport {
                    iterations: (solves - 1).max(1),
                    final_increment: inc,
                    linear_residual: lin_res,
                },
            ));
        }
    }
    Err(Error::NewtonDiverged {
        slab,
        iterations: cfg.max_iter,
        increment: f64::NAN,
    })
}

/// Newton on a slab system with the bilinear coupling term.
pub fn newton_solve<M: ModelData + ?Sized>(
    linear: &SlabSystem,
    slab: &SlabData,
    mesh: &BackgroundMesh,
    model: &M,
    u0: Vec<f64>,
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, NewtonReport)> {
    let p = *model.params();
    newton_iterate(u0, cfg, slab.index, |u| residual_and_jacobian(linear, slab, mesh, &p, u))
}

/// Initial Newton guess: the incoming trace at each node, constant in time.
pub fn initial_guess<M: ModelData + ?Sized>(
    space: &CoupledSpace,
    prev: Option<&DiscreteFunction>,
    model: &M,
) -> Vec<f64> {
    let mut u = vec![0.0; space.n_dofs()];
    for (comp, sp, off) in [
        (Component::Bulk, &space.bulk, 0),
        (Component::Surface, &space.surf, space.offset()),
    ] {
        let nt = sp.n_time();
        let old_trace = prev.map(|f| f.time_trace(comp, 1.0));
        for (g, x) in sp.nodes.coords.iter().enumerate() {
            let Some(r) = sp.spatial_rank(g) else { continue };
            let v = match (prev, &old_trace) {
                (Some(f), Some(tr)) => {
                    let osp = match comp {
                        Component::Bulk => &f.space.bulk,
                        Component::Surface => &f.space.surf,
                    };
                    osp.spatial_rank(g).map(|ro| tr[ro]).unwrap_or(0.0)
                }
                _ => match comp {
                    Component::Bulk => model.initial_bulk(*x),
                    Component::Surface => model.initial_surface(*x),
                },
            };
            for j in 0..nt {
                u[off + r * nt + j] = v;
            }
        }
    }
    u
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlabStats {
    pub index: usize,
    pub newton_iterations: usize,
    pub final_increment: f64,
    pub linear_residual: f64,
    pub n_dofs: usize,
    pub root_failures: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MarchStats {
    pub slabs: Vec<SlabStats>,
}

impl MarchStats {
    pub fn max_newton(&self) -> usize {
        self.slabs.iter().map(|s| s.newton_iterations).max().unwrap_or(0)
    }

    pub fn max_dofs(&self) -> usize {
        self.slabs.iter().map(|s| s.n_dofs).max().unwrap_or(0)
    }

    pub fn max_increment(&self) -> f64 {
        self.slabs.iter().map(|s| s.final_increment).fold(0.0, f64::max)
    }
}

/// Solution of one slab together with its geometry.
#[derive(Debug)]
pub struct SlabSolution {
    pub slab: SlabData,
    pub solution: DiscreteFunction,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarchConfig {
    pub disc: Discretization,
    pub newton: NewtonConfig,
}

/// Solves a single slab given the incoming trace.
pub fn solve_slab<M: ModelData + ?Sized>(
    model: &M,
    ctx: &MeshContext,
    cfg: &MarchConfig,
    index: usize,
    t0: f64,
    t1: f64,
    prev: Option<&SlabSolution>,
) -> Result<(SlabSolution, SlabStats)> {
    let start = Instant::now();
    let mesh = &*ctx.mesh;
    let slab = build_slab(model, ctx, &cfg.disc, index, t0, t1)?;
    let incoming = match prev {
        Some(p) => Incoming::Previous {
            solution: &p.solution,
            deformation: &p.slab.deformation,
        },
        None => Incoming::Initial,
    };
    let sys = assemble_slab_system(&slab, mesh, model, incoming)?;
    let (coeffs, report) = if model.params().is_linear() {
        let (x, rel) = solve_linear_system(&sys.matrix()?, &sys.rhs)?;
        (
            x,
            NewtonReport {
                iterations: 1,
                final_increment: 0.0,
                linear_residual: rel,
            },
        )
    } else {
        let u0 = initial_guess(&slab.space, prev.map(|p| &p.solution), model);
        newton_solve(&sys, &slab, mesh, model, u0, &cfg.newton)?
    };
    let stats = SlabStats {
        index,
        newton_iterations: report.iterations,
        final_increment: report.final_increment,
        linear_residual: report.linear_residual,
        n_dofs: slab.space.n_dofs(),
        root_failures: slab.deformation.root_failures,
        wall_time: start.elapsed().as_secs_f64(),
    };
    log::debug!(
        "slab {index}: {} dofs, {} Newton iteration(s), {:.3}s",
        stats.n_dofs,
        stats.newton_iterations,
        stats.wall_time
    );
    let solution = DiscreteFunction {
        space: Arc::clone(&slab.space),
        coeffs,
    };
    Ok((SlabSolution { slab, solution }, stats))
}

/// Marches over all slabs of the partition and returns the last slab's solution.
pub fn march<M: ModelData + ?Sized>(
    model: &M,
    ctx: &MeshContext,
    cfg: &MarchConfig,
    partition: &TimePartition,
) -> Result<(SlabSolution, MarchStats)> {
    cfg.disc.validate()?;
    model.params().validate()?;
    let mut stats = MarchStats::default();
    let mut current: Option<SlabSolution> = None;
    for n in 1..=partition.n_slabs {
        let (t0, t1) = partition.slab(n);
        let (sol, st) = solve_slab(model, ctx, cfg, n, t0, t1, current.as_ref())?;
        stats.slabs.push(st);
        current = Some(sol);
    }
    let last = current.ok_or_else(|| Error::InvalidConfig("time partition has no slabs".into()))?;
    Ok((last, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_newton() {
        let mut iterates = Vec::new();
        let (u, rep) = newton_iterate(vec![2.0], &NewtonConfig::default(), 0, |u| {
            iterates.push(u[0]);
            Ok((vec![u[0] * u[0] - 1.0], SystemMatrix::from_triplets(1, &[(0, 0, 2.0 * u[0])])?))
        })
        .unwrap();
        assert!((u[0] - 1.0).abs() < 1e-14);
        assert!((iterates[1] - 1.25).abs() < 1e-15);
        assert!((iterates[2] - 1.025).abs() < 1e-15);
        assert!(rep.iterations <= 6);
    }

    #[test]
    fn linear_problem_takes_one_iteration() {
        let (u, rep) = newton_iterate(vec![0.0, 0.0], &NewtonConfig::default(), 0, |u| {
            let a = SystemMatrix::from_triplets(2, &[(0, 0, 2.0), (1, 1, 4.0), (0, 1, 1.0)])?;
            let mut r = a.apply(u);
            r[0] -= 3.0;
            r[1] -= 4.0;
            Ok((r, a))
        })
        .unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((u[1] - 1.0).abs() < 1e-14 && (u[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn divergence_is_reported() {
        // F(u) = u^2 + 1 has no real root
        let res = newton_iterate(vec![0.5], &NewtonConfig::default(), 3, |u| {
            Ok((vec![u[0] * u[0] + 1.0], SystemMatrix::from_triplets(1, &[(0, 0, 2.0 * u[0])])?))
        });
        assert!(matches!(res, Err(Error::NewtonDiverged { slab: 3, .. })));
    }
}
