//! Rejection rates of every method for three similar experiments with a
//! 30% effect.
//!
//! ```bash
//! cargo run --release --example power_study
//! ```

use histbayes::simulation::{Method, Scenario};
use histbayes::{run_power_study, AnalysisConfig};

fn main() -> Result<(), histbayes::Error> {
    let cfg = AnalysisConfig::simulation();
    let methods = [Method::Welch, Method::PooledWelch, Method::Bayes];
    for sigma_t3 in [0.6, 1.5, 3.0] {
        let sc = Scenario::similar_experiments(0.3, sigma_t3);
        let study = run_power_study(&sc, 300, &methods, &cfg, 2024, Some(0.698))?;
        println!("sigma_t3 = {sigma_t3}");
        for row in &study.rows {
            println!(
                "  {:<18} {:>5.1}% ± {:.1}",
                row.method,
                100.0 * row.rejection_rate,
                100.0 * row.mc_stderr
            );
        }
    }
    Ok(())
}
