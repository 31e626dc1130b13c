//! Refinement studies for the orbiting-hole test case.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{build_structured_mesh, TimePartition};
use crate::postprocess::compute_final_errors;
use crate::problem::{CouplingModel, ManufacturedProblem};
use crate::slab::{Discretization, MeshContext};
use crate::timestepping::{march, MarchConfig, MarchStats, NewtonConfig};

/// Mesh size of refinement level `i`.
pub fn level_h(i: usize) -> f64 {
    0.2 * 0.5f64.powi(i as i32)
}

/// Time step of refinement level `i`.
pub fn level_dt(i: usize) -> f64 {
    0.5f64.powi(i as i32 + 2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub model: CouplingModel,
    pub k: usize,
    pub i_min: usize,
    pub i_max: usize,
    pub newton: NewtonConfig,
    /// Single-threaded run.
    pub deterministic: bool,
}

impl StudyConfig {
    pub fn new(model: CouplingModel, k: usize, i_max: usize) -> Self {
        Self {
            model,
            k,
            i_min: 0,
            i_max,
            newton: NewtonConfig::default(),
            deterministic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.k) {
            return Err(Error::InvalidConfig(format!("k must be in 1..=4, got {}", self.k)));
        }
        if self.i_min > self.i_max {
            return Err(Error::InvalidConfig("i_min exceeds i_max".into()));
        }
        Ok(())
    }
}

/// One line of the study output. Errors are absent if Newton diverged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub i: usize,
    pub h: f64,
    pub dt: f64,
    pub err_bulk: Option<f64>,
    pub err_surf: Option<f64>,
    pub max_newton: usize,
    pub n_dofs: usize,
    pub runtime_s: f64,
}

/// Outcome of a single refinement level.
#[derive(Debug)]
pub struct LevelRun {
    pub row: ConvergenceRow,
    pub stats: MarchStats,
}

/// Runs one refinement level of the manufactured problem.
pub fn run_level(model: CouplingModel, k: usize, i: usize, newton: &NewtonConfig) -> Result<LevelRun> {
    let problem = ManufacturedProblem::new(model);
    let disc = Discretization::uniform(k);
    let start = Instant::now();
    let ctx = MeshContext::new(build_structured_mesh(level_h(i)), &disc);
    let part = TimePartition::from_step(crate::problem::T_FINAL, level_dt(i));
    let cfg = MarchConfig { disc, newton: *newton };
    let (last, stats) = march(&problem, &ctx, &cfg, &part)?;
    let (eb, es) = compute_final_errors(&last.slab, &ctx.mesh, &last.solution, &problem)?;
    Ok(LevelRun {
        row: ConvergenceRow {
            i,
            h: level_h(i),
            dt: level_dt(i),
            err_bulk: Some(eb),
            err_surf: Some(es),
            max_newton: stats.max_newton(),
            n_dofs: stats.max_dofs(),
            runtime_s: start.elapsed().as_secs_f64(),
        },
        stats,
    })
}

fn run_rows(cfg: &StudyConfig) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    for i in cfg.i_min..=cfg.i_max {
        let start = Instant::now();
        match run_level(cfg.model, cfg.k, i, &cfg.newton) {
            Ok(run) => {
                log::info!(
                    "i={i}: err_bulk={:.3e} err_surf={:.3e} max_newton={} ({:.1}s)",
                    run.row.err_bulk.unwrap_or(f64::NAN),
                    run.row.err_surf.unwrap_or(f64::NAN),
                    run.row.max_newton,
                    run.row.runtime_s
                );
                rows.push(run.row);
            }
            Err(Error::NewtonDiverged { slab, iterations, .. }) => {
                log::warn!("i={i}: Newton diverged on slab {slab}");
                rows.push(ConvergenceRow {
                    i,
                    h: level_h(i),
                    dt: level_dt(i),
                    err_bulk: None,
                    err_surf: None,
                    max_newton: iterations,
                    n_dofs: 0,
                    runtime_s: start.elapsed().as_secs_f64(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

/// Runs all levels `i_min..=i_max`. A level whose Newton iteration diverges is
/// recorded without errors and the study continues.
pub fn run_convergence_study(cfg: &StudyConfig) -> Result<Vec<ConvergenceRow>> {
    cfg.validate()?;
    if cfg.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        pool.install(|| run_rows(cfg))
    } else {
        run_rows(cfg)
    }
}

/// `log2(e_i / e_{i+1})` between consecutive entries.
pub fn eoc(errors: &[Option<f64>]) -> Vec<Option<f64>> {
    errors
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).log2()),
            _ => None,
        })
        .collect()
}

/// Least-squares slope of `-log2(err)` against the refinement level.
pub fn least_squares_eoc(levels: &[usize], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > 0.0 && e.is_finite())
        .map(|(&i, &e)| (i as f64, -e.log2()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Least-squares EOC of bulk and surface errors over the given level range.
pub fn study_eoc(rows: &[ConvergenceRow], i_from: usize, i_to: usize) -> (Option<f64>, Option<f64>) {
    let sel: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.i >= i_from && r.i <= i_to).collect();
    let fit = |f: &dyn Fn(&ConvergenceRow) -> Option<f64>| {
        let (lv, er): (Vec<usize>, Vec<f64>) = sel.iter().filter_map(|r| f(r).map(|e| (r.i, e))).unzip();
        least_squares_eoc(&lv, &er)
    };
    (fit(&|r| r.err_bulk), fit(&|r| r.err_surf))
}

pub fn write_csv<P: AsRef<Path>>(path: P, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Vec<ConvergenceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<ConvergenceRow>, _>>()?;
    Ok(rows)
}

/// Human-readable table with consecutive EOCs.
pub fn format_table(rows: &[ConvergenceRow]) -> String {
    let eb = eoc(&rows.iter().map(|r| r.err_bulk).collect::<Vec<_>>());
    let es = eoc(&rows.iter().map(|r| r.err_surf).collect::<Vec<_>>());
    let fmt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$e}"));
    let fe = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    let mut s = String::from("   i        h       dt    err_bulk   eoc    err_surf   eoc  newton    dofs\n");
    for (k, r) in rows.iter().enumerate() {
        let (ob, os) = if k == 0 { (None, None) } else { (eb[k - 1], es[k - 1]) };
        s.push_str(&format!(
            "{:>4} {:>8.5} {:>8.5} {:>11} {:>5} {:>11} {:>5} {:>7} {:>7}\n",
            r.i,
            r.h,
            r.dt,
            fmt(r.err_bulk, 3),
            fe(ob),
            fmt(r.err_surf, 3),
            fe(os),
            r.max_newton,
            r.n_dofs
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        assert_eq!(level_h(0), 0.2);
        assert_eq!(level_dt(0), 0.25);
        assert_eq!(TimePartition::from_step(0.5, level_dt(0)).n_slabs, 2);
    }

    #[test]
    fn synthetic_eoc_is_two() {
        let errs: Vec<Option<f64>> = (0..5).map(|i| Some(3.0 * 4f64.powi(-i))).collect();
        for v in eoc(&errs) {
            assert!((v.unwrap() - 2.0).abs() < 1e-14);
        }
        let lv: Vec<usize> = (0..5).collect();
        let e: Vec<f64> = errs.iter().map(|e| e.unwrap()).collect();
        assert!((least_squares_eoc(&lv, &e).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            ConvergenceRow {
                i: 0,
                h: 0.2,
                dt: 0.25,
                err_bulk: Some(1.5e-3),
                err_surf: Some(2.25e-2),
                max_newton: 1,
                n_dofs: 120,
                runtime_s: 0.5,
            },
            ConvergenceRow {
                i: 1,
                h: 0.1,
                dt: 0.125,
                err_bulk: None,
                err_surf: None,
                max_newton: 25,
                n_dofs: 0,
                runtime_s: 1.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rows.csv");
        write_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("i,h,dt,err_bulk,err_surf,max_newton,n_dofs,runtime_s\n"));
        assert_eq!(read_csv(&p).unwrap(), rows);
    }
}
