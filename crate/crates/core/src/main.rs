use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use criticalflow::experiments::{run_nu_sweep, ExperimentConfig};
use criticalflow::rundir::{
    analyze_functionals, analyze_snapshot, solve_to_dir, write_functionals, RunConfig, System,
};
use criticalflow::Result;

#[derive(Parser)]
#[command(name = "criticalflow", version, about = "Compressible and incompressible flow solvers with critical-norm diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Ins,
    Cns,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one system and write a trajectory directory.
    Solve {
        #[arg(long, value_enum)]
        system: SystemArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Besov block table of a snapshot, or the functionals of a run pair.
    Analyze {
        #[arg(long, conflicts_with_all = ["functionals", "cns", "ins"])]
        snapshot: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        /// Optional output file for the block table (stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, requires_all = ["cns", "ins"])]
        functionals: bool,
        #[arg(long)]
        cns: Option<PathBuf>,
        #[arg(long)]
        ins: Option<PathBuf>,
        /// Constant used in the smallness and bound diagnostics.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
    },
    /// Run a ν-sweep described by a TOML file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Cmd::Solve { system, config, out } => {
            let cfg = RunConfig::load(&config)?;
            let system = match system {
                SystemArg::Ins => System::Ins,
                SystemArg::Cns => System::Cns,
            };
            let m = solve_to_dir(system, &cfg, &out)?;
            eprintln!("wrote {} frames to {} in {:.2}s", m.frames.len(), out.display(), m.wall_s);
            Ok(true)
        }
        Cmd::Analyze { snapshot: Some(path), s, out, .. } => {
            let table = analyze_snapshot(&path, s)?;
            match out {
                Some(file) => std::fs::write(file, table)?,
                None => print!("{table}"),
            }
            Ok(true)
        }
        Cmd::Analyze { functionals: true, cns: Some(cns), ins: Some(ins), out, c, .. } => {
            let result = analyze_functionals(&cns, &ins, c)?;
            let dir = out.unwrap_or_else(|| PathBuf::from("."));
            let (csv, json) = write_functionals(&result, &dir)?;
            eprintln!("wrote {} and {}", csv.display(), json.display());
            Ok(true)
        }
        Cmd::Analyze { .. } => Err(criticalflow::FlowError::Config(
            "analyze needs --snapshot or --functionals --cns --ins".into(),
        )),
        Cmd::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let result = run_nu_sweep(&cfg)?;
            let failed = result.rows.iter().filter(|r| r.failed()).count();
            eprintln!("{} rows, {failed} failed", result.rows.len());
            match (&result.fit, &result.fit_note) {
                (Some(fit), _) => eprintln!(
                    "slope {:.4} (95% CI [{:.4}, {:.4}])",
                    fit.slope, fit.slope_ci[0], fit.slope_ci[1]
                ),
                (None, Some(note)) => eprintln!("no fit: {note}"),
                _ => {}
            }
            Ok(result.completed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
