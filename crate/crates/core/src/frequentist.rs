//! Welch's unequal-variance t test, on one experiment or on pooled arms.

use serde::{Deserialize, Serialize};

use crate::data::{summarize, Experiment, GroupSample, GroupSummary};
use crate::error::{Error, Result};
use crate::special::student_t_sf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    /// Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn welch_from_summaries(c: &GroupSummary, t: &GroupSummary) -> Result<TestResult> {
    if c.n < 2.0 || t.n < 2.0 {
        return Err(Error::InvalidSample(
            "each arm needs at least 2 observations".into(),
        ));
    }
    let vc = c.sample_variance() / c.n;
    let vt = t.sample_variance() / t.n;
    let se2 = vc + vt;
    if !(se2 > 0.0) {
        return Err(Error::DegenerateTest);
    }
    let statistic = (c.mean - t.mean) / se2.sqrt();
    let df = se2 * se2 / (vc * vc / (c.n - 1.0) + vt * vt / (t.n - 1.0));
    let p_value = (2.0 * student_t_sf(statistic.abs(), df)?).min(1.0);
    Ok(TestResult {
        statistic,
        df,
        p_value,
    })
}

/// Welch test of `mean(c) = mean(t)`; the statistic is `(c̄ − t̄)/se`.
pub fn welch_test(c: &GroupSample, t: &GroupSample) -> Result<TestResult> {
    welch_from_summaries(&c.summary(), &t.summary())
}

/// Welch test on all control arms concatenated against all treated arms.
pub fn pooled_welch_test(experiments: &[Experiment]) -> Result<TestResult> {
    if experiments.is_empty() {
        return Err(Error::InvalidSample(
            "pooled test needs at least one experiment".into(),
        ));
    }
    let gather = |f: fn(&Experiment) -> &GroupSample| -> Result<GroupSummary> {
        let values: Vec<f64> = experiments
            .iter()
            .flat_map(|e| f(e).values().iter().copied())
            .collect();
        summarize(&values)
    };
    welch_from_summaries(&gather(|e| &e.control)?, &gather(|e| &e.treated)?)
}
