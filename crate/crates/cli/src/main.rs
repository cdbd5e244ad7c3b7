//! Command-line interface: solve scenarios, verify built-ins against their
//! closed forms, sweep parameters, search for optimal narratives, and emit
//! linearization reports.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 solver diagnostic.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use narratives_core::equilibrium::{SearchDagKind, SearchParams};
use narratives_core::report::{
    run_linearize, run_search, run_solve, run_sweep, run_verify, DistSpec,
};
use narratives_core::scenario::{load_scenario, BuiltinOverrides};
use narratives_core::{dag::CausalDag, Error};

#[derive(Parser)]
#[command(
    name = "narratives",
    about = "Beliefs from causal-model narratives and the equilibria they sustain",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DagArg {
    Lever,
    Collider,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario (builtin name or JSON file) for its equilibria.
    Solve {
        /// Builtin name (claim1, claim2, short-narratives, opportunity) or
        /// path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a builtin scenario against its closed-form oracle.
    Verify {
        /// Builtin name.
        builtin: String,
        /// Override the quadratic cost coefficient.
        #[arg(long)]
        k: Option<f64>,
        /// Override the policy-interval margin.
        #[arg(long)]
        eps: Option<f64>,
        /// Override the full-support regularization weight.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve across a parameter range and emit CSV.
    Sweep {
        #[arg(long)]
        scenario: String,
        /// Parameter to vary: k, mu, d_star, epsilon or delta.
        #[arg(long)]
        param: String,
        /// Inclusive range start:stop:step.
        #[arg(long)]
        range: String,
        /// CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximize the believed success probability over conditional families.
    SearchNarrative {
        #[arg(long, value_enum)]
        dag: DagArg,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        mu: f64,
        /// Action whose believed outcome is maximized (0 or 1).
        #[arg(long)]
        target: u8,
        /// Coarse grid step.
        #[arg(long)]
        grid: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce a perfect-DAG narrative to a linear chain and report the
    /// binarization deviation.
    Linearize {
        /// Path to a DAG JSON file: {"nodes":[...],"edges":[[i,j],...]}.
        #[arg(long)]
        dag: PathBuf,
        /// Path to a distribution spec: {"alpha":..,"mu":..,"q":[4 rows]}.
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(json: String, out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn parse_range(text: &str) -> Result<(f64, f64, f64), Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "range {text:?} must look like start:stop:step"
        )));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Config(format!("range component {p:?} is not a number")))
        })
        .collect::<Result<_, _>>()?;
    Ok((nums[0], nums[1], nums[2]))
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Solve { scenario, out } => {
            let config = load_scenario(&scenario)?;
            let report = run_solve(&config)?;
            let diagnostic = report.diagnostic.clone();
            emit(serde_json::to_string_pretty(&report)?, out.as_ref())?;
            if let Some(msg) = diagnostic {
                eprintln!("solver diagnostic: {msg}");
                return Ok(3);
            }
            eprintln!("found {} equilibrium solution(s)", report.solutions.len());
            Ok(0)
        }
        Command::Verify {
            builtin,
            k,
            eps,
            delta,
            out,
        } => {
            let overrides = BuiltinOverrides {
                k,
                epsilon: eps,
                delta,
                d_star: None,
            };
            let report = run_verify(&builtin, &overrides)?;
            for check in &report.checks {
                eprintln!(
                    "{} {}: |{} - {}| = {:.3e} (tol {:.1e})",
                    if check.pass { "PASS" } else { "FAIL" },
                    check.name,
                    check.actual,
                    check.expected,
                    check.delta,
                    check.tol
                );
            }
            let pass = report.pass;
            emit(serde_json::to_string_pretty(&report)?, out.as_ref())?;
            eprintln!(
                "{}: {}",
                report.builtin,
                if pass { "all checks passed" } else { "verification FAILED" }
            );
            Ok(if pass { 0 } else { 1 })
        }
        Command::Sweep {
            scenario,
            param,
            range,
            out,
        } => {
            let config = load_scenario(&scenario)?;
            let (start, stop, step) = parse_range(&range)?;
            let table = run_sweep(&config, &param, start, stop, step)?;
            std::fs::write(&out, table.to_csv())?;
            eprintln!("wrote {} rows to {}", table.rows.len(), out.display());
            Ok(0)
        }
        Command::SearchNarrative {
            dag,
            alpha,
            mu,
            target,
            grid,
            out,
        } => {
            let kind = match dag {
                DagArg::Lever => SearchDagKind::Lever,
                DagArg::Collider => SearchDagKind::Collider,
            };
            let mut params = SearchParams::default();
            if let Some(h) = grid {
                params.grid = h;
            }
            let report = run_search(kind, alpha, mu, target, &params)?;
            emit(serde_json::to_string_pretty(&report)?, out.as_ref())?;
            Ok(0)
        }
        Command::Linearize { dag, dist, out } => {
            let dag_text = std::fs::read_to_string(&dag)?;
            let dag: CausalDag = serde_json::from_str(&dag_text)
                .map_err(|e| Error::Config(format!("dag file: {e}")))?;
            let dist_text = std::fs::read_to_string(&dist)?;
            let dist: DistSpec = serde_json::from_str(&dist_text)
                .map_err(|e| Error::Config(format!("dist file: {e}")))?;
            let report = run_linearize(&dag, &dist)?;
            emit(serde_json::to_string_pretty(&report)?, out.as_ref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Solver(_) => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
