//! Binarised macro precision/recall and density-bin recall on a handful of
//! hand-written predictions.

use locustcast::eval::{evaluate_predictions, DEFAULT_THRESHOLD};

fn main() -> locustcast::Result<()> {
    let predicted = [0.1, 0.7, 3.2, 0.4, 6.8, 0.0, 1.9, 0.6];
    let observed = [0, 1, 3, 1, 9, 0, 0, 2];
    let report = evaluate_predictions(&predicted, &observed, DEFAULT_THRESHOLD)?;
    print!("{}", report.to_text());
    println!();
    print!("{}", report.to_key_values());
    Ok(())
}
