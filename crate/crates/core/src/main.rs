use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lsvi_phe::harness::{
    emit_csv, emit_plots, parse_seeds, read_csv, run_sweep, ExperimentConfig, RunResult,
};
use lsvi_phe::Result;

#[derive(Debug, Parser)]
#[command(name = "lsvi-phe", version, about = "Perturbed-history exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the base agents of a configuration.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seeds; overrides `run.seeds`.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Run the Cartesian expansion of the configuration's sweep grid.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Render SVG plots from one or more result CSV files.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn experiment(
    config: PathBuf,
    out: Option<PathBuf>,
    seeds: Option<String>,
    expand: bool,
) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&config)?;
    if let Some(seeds) = seeds {
        cfg.run.seeds = parse_seeds(&seeds)?;
    }
    if let Some(out) = out {
        cfg.run.out_dir = out;
    }
    let result = run_sweep(&cfg, expand)?;
    let csv_path = cfg.run.out_dir.join("results.csv");
    emit_csv(&result, &csv_path)?;
    println!("wrote {}", csv_path.display());
    if cfg.run.plots {
        for path in emit_plots(&result, &cfg.run.out_dir)? {
            println!("wrote {}", path.display());
        }
    }
    for cell in result.summary() {
        if let (Some(last), Some(regret)) = (cell.value_exact.last(), cell.regret_cum.last()) {
            println!(
                "{} {} seeds={} final_value={:.4}±{:.4} regret={:.2}±{:.2}",
                cell.env, cell.params_json, cell.seeds, last.mean, last.stderr, regret.mean, regret.stderr
            );
        }
    }
    Ok(())
}

fn plot(csv: Vec<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let mut merged = RunResult::default();
    for path in &csv {
        merged.rows.extend(read_csv(path)?.rows);
    }
    let dir = out.unwrap_or_else(|| {
        csv[0]
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    for path in emit_plots(&merged, &dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, seeds } => experiment(config, out, seeds, false),
        Command::Sweep { config, out, seeds } => experiment(config, out, seeds, true),
        Command::Plot { csv, out } => plot(csv, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
