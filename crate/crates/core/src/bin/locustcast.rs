use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use locustcast::commands::{
    cmd_evaluate, cmd_heatmap, cmd_ingest, cmd_predict, cmd_synth, cmd_train, parse_month,
    synthetic_config,
};
use locustcast::report::RasterFormat;
use locustcast::synth::SynthScenario;
use locustcast::{Result, ToolkitConfig};

#[derive(Parser)]
#[command(
    name = "locustcast",
    version,
    about = "One-month-ahead locust swarm forecasting"
)]
struct Cli {
    /// TOML configuration file; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse observation exports into the cell-month table.
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train a model on the table's training split.
    Train,
    /// Score the checkpoint on the test split.
    Evaluate,
    /// Forecast every cell for one month (yyyy-mm).
    Predict {
        month: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write previous / truth / forecast rasters for one month (yyyy-mm).
    Heatmap {
        month: String,
        #[arg(long, default_value = "pgm")]
        format: String,
    },
    /// Generate a synthetic export with a drifting swarm blob.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 120)]
        months: u32,
        /// Also write a configuration matching the synthetic grid and dates.
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ToolkitConfig::load(p)?,
        None => ToolkitConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Ingest { inputs } => println!("{}", cmd_ingest(&inputs, &cfg)?),
        Command::Train => {
            let o = cmd_train(&cfg)?;
            println!(
                "trained on {} samples ({} validation), selected epoch {}; wrote {}",
                o.n_train,
                o.n_val,
                o.history.selected_epoch + 1,
                cfg.checkpoint_path.display()
            );
        }
        Command::Evaluate => print!("{}", cmd_evaluate(&cfg)?.to_text()),
        Command::Predict { month, out } => {
            let m = parse_month(&month)?;
            let out =
                out.unwrap_or_else(|| cfg.report_dir.join(format!("predict_{}.csv", m.yyyymm())));
            let preds = cmd_predict(&cfg, m, &out)?;
            println!(
                "{} cells forecast for {m}; wrote {}",
                preds.len(),
                out.display()
            );
        }
        Command::Heatmap { month, format } => {
            for p in cmd_heatmap(&cfg, parse_month(&month)?, RasterFormat::parse(&format)?)? {
                println!("{}", p.display());
            }
        }
        Command::Synth {
            out,
            months,
            write_config,
        } => {
            let scenario = SynthScenario {
                months,
                ..SynthScenario::default()
            };
            let n = cmd_synth(&scenario, cfg.seed, &out)?;
            println!("wrote {n} records to {}", out.display());
            if let Some(path) = write_config {
                synthetic_config(&scenario, &cfg)?.save(&path)?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
