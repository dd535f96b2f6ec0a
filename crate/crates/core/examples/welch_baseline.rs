//! Frequentist baselines: Welch's test on one experiment and on pooled arms.
//!
//! ```bash
//! cargo run --example welch_baseline
//! ```

use histbayes::{pooled_welch_test, welch_test, Experiment, GroupSample};

fn main() -> Result<(), histbayes::Error> {
    let c = GroupSample::new(vec![1.0, 2.0, 3.0, 4.0, 5.0])?;
    let t = GroupSample::new(vec![2.0, 4.0, 6.0, 8.0, 10.0])?;
    let r = welch_test(&c, &t)?;
    println!("t = {:.4}, df = {:.4}, p = {:.4}", r.statistic, r.df, r.p_value);

    let exps = [
        Experiment::new("a", c.clone(), t.clone()),
        Experiment::from_values("b", &[1.5, 2.5, 3.5], &[5.0, 7.0, 9.0])?,
    ];
    let pooled = pooled_welch_test(&exps)?;
    println!("pooled: t = {:.4}, df = {:.4}, p = {:.4}", pooled.statistic, pooled.df, pooled.p_value);
    Ok(())
}
