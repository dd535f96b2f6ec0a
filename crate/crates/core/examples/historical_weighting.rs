//! Down-weighting historical experiments makes their priors more diffuse.
//!
//! ```bash
//! cargo run --release --example historical_weighting
//! ```

use histbayes::simulation::{generate_scenario, Scenario};
use histbayes::{run_three_step, AnalysisConfig, RngStream};

fn main() -> Result<(), histbayes::Error> {
    // history with an effect, none in the experiment of interest
    let sc = Scenario::shifted_effects([0.3, 0.3, 0.0]);
    let [y1, y2, y3] = generate_scenario(&sc, &mut RngStream::new(5, 0))?;
    for w in [1.0, 0.5, 1.0 / 3.0] {
        let cfg = AnalysisConfig::default().with_weights(w, w);
        let r = run_three_step(&y1, &y2, &y3, &cfg, &RngStream::new(cfg.seed, 0))?;
        println!(
            "w = {w:.3}: Pr(M1|y) after y2 {:.3}, after y3 {:.3}",
            r.step2_posterior.pr_m1,
            r.final_posterior().pr_m1
        );
    }
    Ok(())
}
