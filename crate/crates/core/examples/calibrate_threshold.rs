//! Finds the threshold whose rule keeps the type I error at 5% for a null
//! setting, then checks it on a fresh batch.
//!
//! ```bash
//! cargo run --release --example calibrate_threshold
//! ```

use histbayes::simulation::{Method, Scenario};
use histbayes::{calibrate_threshold, run_power_study, AnalysisConfig};

fn main() -> Result<(), histbayes::Error> {
    let cfg = AnalysisConfig::simulation();
    let null = Scenario::similar_experiments(0.0, 1.5);
    let cal = calibrate_threshold(&null, 500, &cfg, 1)?;
    println!(
        "threshold {:.3} (95% interval {:.3} to {:.3})",
        cal.threshold, cal.interval.0, cal.interval.1
    );

    let check = run_power_study(&null, 500, &[Method::Bayes], &cfg, 2, Some(cal.threshold))?;
    for row in &check.rows {
        println!("{:<18} type I {:.1}%", row.method, 100.0 * row.rejection_rate);
    }
    Ok(())
}
