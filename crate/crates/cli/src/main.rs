use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stcutfem::problem::CouplingModel;
use stcutfem::study::{self, StudyConfig};
use stcutfem::timestepping::NewtonConfig;
use stcutfem::Error;

#[derive(Parser, Debug)]
#[command(name = "stcutfem", version, about = "Unfitted space-time FEM for coupled surface-bulk convection-diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refinement study over levels 0..=imax; writes study.csv into --out.
    Study {
        #[arg(long, value_parser = parse_model)]
        model: CouplingModel,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        k: u8,
        #[arg(long)]
        imax: usize,
        #[arg(long, default_value_t = 0)]
        imin: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Single-threaded run with bit-reproducible output.
        #[arg(long)]
        deterministic: bool,
        /// Halve Newton steps while the residual grows.
        #[arg(long)]
        damped_newton: bool,
    },
    /// Quadrature, mapping and derivative self-checks.
    Verify,
    /// One refinement level.
    Single {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        k: u8,
        #[arg(long)]
        i: usize,
        #[arg(long, value_parser = parse_model)]
        model: CouplingModel,
        #[arg(long)]
        damped_newton: bool,
    },
}

fn parse_model(s: &str) -> Result<CouplingModel, String> {
    s.parse()
}

fn newton(damped: bool) -> NewtonConfig {
    NewtonConfig {
        damped,
        ..NewtonConfig::default()
    }
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::NewtonDiverged { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Study {
            model,
            k,
            imax,
            imin,
            out,
            deterministic,
            damped_newton,
        } => {
            let cfg = StudyConfig {
                model,
                k: k as usize,
                i_min: imin,
                i_max: imax,
                newton: newton(damped_newton),
                deterministic,
            };
            let rows = match study::run_convergence_study(&cfg) {
                Ok(r) => r,
                Err(e) => return exit_for(&e),
            };
            if let Err(e) = std::fs::create_dir_all(&out) {
                return exit_for(&e.into());
            }
            let path = out.join("study.csv");
            if let Err(e) = study::write_csv(&path, &rows) {
                return exit_for(&e);
            }
            print!("{}", study::format_table(&rows));
            let (eb, es) = study::study_eoc(&rows, imin.max(1).min(imax), imax);
            let f = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.2}"));
            println!("least-squares EOC: bulk {} surface {}", f(eb), f(es));
            println!("wrote {}", path.display());
            if rows.iter().any(|r| r.err_bulk.is_none()) {
                eprintln!("Newton diverged on at least one level");
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Command::Verify => {
            let results = stcutfem::verify::run_all();
            let mut ok = true;
            for r in &results {
                println!("[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Single {
            k,
            i,
            model,
            damped_newton,
        } => match study::run_level(model, k as usize, i, &newton(damped_newton)) {
            Ok(run) => {
                let r = &run.row;
                println!("err_bulk   {:.6e}", r.err_bulk.unwrap_or(f64::NAN));
                println!("err_surf   {:.6e}", r.err_surf.unwrap_or(f64::NAN));
                println!("max_newton {}", r.max_newton);
                println!("n_dofs     {}", r.n_dofs);
                println!("runtime_s  {:.2}", r.runtime_s);
                ExitCode::SUCCESS
            }
            Err(e) => exit_for(&e),
        },
    }
}
