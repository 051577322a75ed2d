//! Generates a synthetic observation export and aggregates it into the
//! cell-month feature table.
//!
//!     cargo run --example synth_and_ingest -- [out_dir]

use std::path::PathBuf;

use locustcast::commands::{cmd_ingest, cmd_synth, synthetic_config};
use locustcast::synth::SynthScenario;
use locustcast::ToolkitConfig;

fn main() -> locustcast::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("locustcast-ingest"));
    let scenario = SynthScenario::default();
    let cfg = synthetic_config(&scenario, &ToolkitConfig::default().with_output_dir(&out))?;

    let raw = out.join("synthetic.csv");
    let n = cmd_synth(&scenario, 7, &raw)?;
    println!("{n} synthetic records in {}", raw.display());

    let summary = cmd_ingest(&[raw], &cfg)?;
    println!("{summary}");
    println!("table: {}", cfg.table_path.display());
    Ok(())
}
