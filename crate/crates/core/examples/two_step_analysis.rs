//! One historical experiment only: the answer is the step-2 posterior.
//!
//! ```bash
//! cargo run --release --example two_step_analysis
//! ```

use histbayes::{run_two_step, AnalysisConfig, Experiment, RngStream};

fn main() -> Result<(), histbayes::Error> {
    let history = Experiment::from_values(
        "history",
        &[2.71, 3.40, 2.35, 3.02, 2.88, 3.51, 2.49, 3.12, 2.96, 2.67],
        &[3.95, 2.61, 4.88, 3.30, 5.12, 3.74, 2.45, 4.41, 3.87, 4.20],
    )?;
    let current = Experiment::from_values(
        "current",
        &[3.05, 2.58, 2.91, 3.37, 2.44, 3.19, 2.80, 2.99, 3.26, 2.73],
        &[4.62, 3.18, 5.40, 4.05, 2.97, 4.83, 3.66, 5.01, 4.27, 3.52],
    )?;

    let cfg = AnalysisConfig::default();
    let rng = RngStream::new(cfg.seed, 0);
    let result = run_two_step(&history, &current, &cfg, &rng)?;
    let p = result.final_posterior();
    println!("Pr(M1 | y) = {:.4} -> {:?}", p.pr_m1, result.decision);
    assert!(result.step3_posterior.is_none());
    Ok(())
}
