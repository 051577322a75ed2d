//! Full pipeline on a synthetic drifting swarm: generate, ingest, train with
//! the default hyperparameters, evaluate on the last 24 months and compare
//! forecast hot spots with the truth.
//!
//!     cargo run --release --example end_to_end -- [out_dir]

use std::path::PathBuf;

use locustcast::commands::synthetic_end_to_end;
use locustcast::synth::SynthScenario;
use locustcast::ToolkitConfig;

fn main() -> locustcast::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("locustcast-e2e"));
    let run = synthetic_end_to_end(
        &SynthScenario::default(),
        0,
        &ToolkitConfig::default(),
        &out,
    )?;

    println!("{}\n", run.ingest);
    print!("{}", run.report.to_text());
    println!("\nforecast vs truth hot spot (Chebyshev distance):");
    for (month, d) in &run.argmax_distances {
        println!("  {month}  {d}");
    }
    println!("within 2 cells: {:.0}%", 100.0 * run.argmax_hit_rate(2));
    println!("outputs in {}", out.display());
    Ok(())
}
