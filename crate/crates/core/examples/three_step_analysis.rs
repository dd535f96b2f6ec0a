//! Full analysis of the bundled sample data: two historical experiments and
//! one experiment of interest.
//!
//! ```bash
//! cargo run --release --example three_step_analysis
//! ```

use std::path::Path;

use histbayes::cli::ingest_experiment;
use histbayes::{run_three_step, AnalysisConfig, RngStream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let load = |name: &str| ingest_experiment(&data.join(name)).map_err(|e| e.message);
    let (y1, y2, y3) = (load("exp1.csv")?, load("exp2.csv")?, load("exp3.csv")?);

    let cfg = AnalysisConfig::default();
    let result = run_three_step(&y1, &y2, &y3, &cfg, &RngStream::new(cfg.seed, 0))?;

    let s2 = result.step2_posterior;
    println!("after y2: Pr(M0|y) = {:.4}, Pr(M1|y) = {:.4}", s2.pr_m0, s2.pr_m1);
    let s3 = result.final_posterior();
    println!("after y3: Pr(M0|y) = {:.4}, Pr(M1|y) = {:.4}", s3.pr_m0, s3.pr_m1);
    println!("decision at {}: {:?}", cfg.threshold, result.decision);

    let lm = result.log_marginals;
    println!("log Pr(y2|M0) = {:.4}, log Pr(y2|M1) = {:.4}", lm.y2_m0, lm.y2_m1);
    for m in &result.diagnostics.mcmc {
        println!(
            "step {} sampler: acceptance {:.2}, sigma_c^2 ~ IG({:.2}, {:.2}), sigma_t^2 ~ IG({:.2}, {:.2})",
            m.step,
            m.acceptance_rate,
            m.fit_control.alpha_hat,
            m.fit_control.beta_hat,
            m.fit_treated.alpha_hat,
            m.fit_treated.beta_hat
        );
    }
    Ok(())
}
