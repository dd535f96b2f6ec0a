//! The different-means model is conjugate: normal-inverse-gamma priors per
//! arm, updated in closed form, with closed-form predictive densities.
//!
//! ```bash
//! cargo run --example conjugate_m1
//! ```

use histbayes::data::summarize;
use histbayes::m1::{m1_init, m1_log_marginal, m1_update};

fn main() -> Result<(), histbayes::Error> {
    let first = summarize(&[2.71, 3.40, 2.35, 3.02, 2.88, 3.51, 2.49, 3.12])?;
    let second = summarize(&[3.05, 2.58, 2.91, 3.37, 2.44, 3.19])?;

    // Jeffreys prior plus the first batch gives a proper prior
    let prior = m1_init(&first)?;
    println!("prior       {prior:?}");
    println!("log Pr(second batch) = {:.6}", m1_log_marginal(&prior, &second));

    let post = m1_update(&prior, &second);
    println!("posterior   {post:?}");

    // updating twice equals initializing on the pooled batch
    let pooled = m1_init(&first.pooled(&second))?;
    println!("pooled init {pooled:?}");
    Ok(())
}
