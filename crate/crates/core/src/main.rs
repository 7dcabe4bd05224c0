use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use psflow::config::RunConfig;
use psflow::pipeline;
use psflow::verify::{verify_artifacts, Status};
use psflow::{io, PsflowError};

#[derive(Parser)]
#[command(name = "psflow", version, about = "Prototype flow, intrinsic scaling and p-Sobolev flow diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true, env = "PSFLOW_OUT")]
    out: Option<PathBuf>,
    /// Seed for randomized probes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the prototype flow to extinction.
    SolvePrototype,
    /// Build the time map and the rescaled solution from a prototype run.
    Rescale,
    /// Run the volume-constrained flow directly.
    SolveDirect,
    /// Write the Talenti profile and, given a prototype run, the comparison check.
    Talenti,
    /// Evaluate every acceptance criterion against the artifacts.
    Verify,
    /// Superlevel-measure and positivity diagnostics on interior subdomains.
    PositivityReport,
}

fn exit_code(e: &PsflowError) -> u8 {
    match e {
        PsflowError::Config(_)
        | PsflowError::ParameterDomain(_)
        | PsflowError::Geometry(_)
        | PsflowError::DegenerateInitial(_) => 2,
        PsflowError::Incomplete(_)
        | PsflowError::Range(_)
        | PsflowError::DataIntegrity(_)
        | PsflowError::Format(_)
        | PsflowError::Io(_)
        | PsflowError::Csv(_)
        | PsflowError::Json(_) => 3,
        PsflowError::InvariantFailure(_) | PsflowError::IntegratorInconsistency(_) | PsflowError::StepFailure { .. } => 4,
    }
}

fn run(cli: &Cli) -> Result<u8, PsflowError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PsflowError::Config("--config is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    std::fs::create_dir_all(&out)?;
    let seed = cli.seed;
    match cli.command {
        Command::SolvePrototype => {
            let st = pipeline::cmd_solve_prototype(&cfg, &out, seed)?;
            println!(
                "extinction at s = {:.10e} after {} steps",
                st.extinction_time.unwrap_or(f64::NAN),
                st.accepted_steps()
            );
        }
        Command::Rescale => {
            let r = pipeline::cmd_rescale(&cfg, &out, seed)?;
            println!(
                "time map to t = {} ({} samples), route gap {:.2e}, constraint residual {:.2e}",
                r.map.t_max(),
                r.map.samples.len(),
                r.map.discrepancy,
                r.max_constraint_residual()
            );
        }
        Command::SolveDirect => {
            let d = pipeline::cmd_solve_direct(&cfg, &out, seed)?;
            let last = d.series.last().expect("series starts with the initial state");
            println!("direct flow to t = {}, lambda = {:.10e}", last.t, last.lambda);
        }
        Command::Talenti => match pipeline::cmd_talenti(&cfg, &out, seed)? {
            Some(s) => println!(
                "extinction bound {:.6e}, comparison excess {:.3e} (tol {:.3e})",
                s.extinction_bound, s.comparison.max_excess, s.comparison.tol
            ),
            None => println!("profile written; no prototype run to compare against"),
        },
        Command::PositivityReport => {
            let s = pipeline::cmd_positivity(&cfg, &out, seed)?;
            for r in &s.regions {
                println!(
                    "margin {}: {} records with hypotheses, min slack {:.3e}, interior floor {:.3e}",
                    r.margin_cells, r.records_with_hypotheses, r.min_slack, r.min_floor
                );
            }
        }
        Command::Verify => {
            let report = verify_artifacts(&cfg, &out, seed);
            let dir = out.join(pipeline::VERIFY_DIR);
            std::fs::create_dir_all(&dir)?;
            io::write_json(&dir.join("report.json"), &report)?;
            for c in &report.criteria {
                println!("{}", c.line());
            }
            if report.any(Status::Fail) {
                return Ok(4);
            }
            if report.any(Status::MissingInput) {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("psflow: cannot set thread count: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("psflow: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
