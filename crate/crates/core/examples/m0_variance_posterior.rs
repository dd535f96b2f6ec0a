//! The equal-means model: sample the variance posterior after one
//! experiment, fit inverse gammas to the draws, then integrate the next
//! experiment's likelihood against the fitted prior.
//!
//! ```bash
//! cargo run --release --example m0_variance_posterior
//! ```

use histbayes::m0::{m0_first_step, m0_log_marginal};
use histbayes::{Experiment, McmcConfig, QuadConfig, RngStream};

fn main() -> Result<(), histbayes::Error> {
    let y1 = Experiment::from_values(
        "y1",
        &[2.71, 3.40, 2.35, 3.02, 2.88, 3.51, 2.49, 3.12, 2.96, 2.67],
        &[3.95, 2.61, 4.88, 3.30, 5.12, 3.74, 2.45, 4.41, 3.87, 4.20],
    )?
    .summary();
    let y2 = Experiment::from_values(
        "y2",
        &[3.05, 2.58, 2.91, 3.37, 2.44, 3.19, 2.80, 2.99, 3.26, 2.73],
        &[3.62, 2.18, 4.40, 3.05, 2.97, 3.83, 2.66, 4.01, 3.27, 3.52],
    )?
    .summary();

    let step = m0_first_step(&y1, &McmcConfig::analysis(), &RngStream::new(7, 0))?;
    let (c, t) = (step.prior.var_c, step.prior.var_t);
    println!(
        "{} draws, acceptance {:.2}, log-variance correlation {:.3}",
        step.mcmc.draws.len(),
        step.mcmc.acceptance_rate(),
        step.mcmc.log_correlation
    );
    println!("sigma_c^2 ~ IG({:.3}, {:.3})  residual {:.1e}", c.alpha_hat, c.beta_hat, c.residual);
    println!("sigma_t^2 ~ IG({:.3}, {:.3})  residual {:.1e}", t.alpha_hat, t.beta_hat, t.residual);

    let m = m0_log_marginal(&y2, &step.prior, &QuadConfig::default())?;
    println!(
        "log Pr(y2 | M0) = {:.6} (relative error {:.1e}, {} evaluations)",
        m.log_value, m.rel_error, m.evals
    );
    Ok(())
}
