//! Trains a small model on a short synthetic history, reloads the saved
//! checkpoint and forecasts next month's swarm counts for every cell with
//! recent observations.

use locustcast::commands::{
    cmd_ingest, cmd_synth, cmd_train, load_model, load_table, synthetic_config,
};
use locustcast::eval::forecast_month;
use locustcast::grid::month_index;
use locustcast::synth::SynthScenario;
use locustcast::ToolkitConfig;

fn main() -> locustcast::Result<()> {
    let dir = std::env::temp_dir().join("locustcast-forecast");
    let scenario = SynthScenario {
        months: 60,
        ..SynthScenario::default()
    };
    let base = ToolkitConfig {
        epochs: 10,
        hidden_dim: 16,
        learning_rate: 1e-3,
        ..ToolkitConfig::default()
    };
    let cfg = synthetic_config(&scenario, &base.with_output_dir(&dir))?;

    let raw = dir.join("synthetic.csv");
    cmd_synth(&scenario, 3, &raw)?;
    cmd_ingest(&[raw], &cfg)?;
    cmd_train(&cfg)?;

    let ckpt = load_model(&cfg)?;
    let rows = load_table(&cfg)?;
    let month = month_index(2015, 6)?;
    let mut preds = forecast_month(&ckpt, &rows, month, cfg.window)?;
    preds.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("top forecast cells for {month}:");
    for (cell, v) in preds.iter().take(8) {
        let (lon, lat) = cfg.grid_spec()?.cell_center(*cell);
        println!("  {cell}  ({lon:.1}E, {lat:.1}N)  {v:.2} swarms in the 3x3 neighbourhood");
    }
    Ok(())
}
