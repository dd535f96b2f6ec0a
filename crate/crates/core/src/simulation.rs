//! Monte Carlo operating characteristics: rejection rates of the Welch tests
//! and of the Bayesian rule, and calibration of the Bayesian threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnalysisConfig, Experiment, GroupSample};
use crate::error::{Error, Result};
use crate::frequentist::{pooled_welch_test, welch_test};
use crate::sequential::run_three_step;
use crate::special::RngStream;

/// Gaussian data-generating setting for three experiments.
///
/// Experiment `i` has control arm `N(mu_c, sigma_c[i]²)` and treated arm
/// `N(mu_c (1 + deltas[i]), sigma_t[i]²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub mu_c: f64,
    /// Relative treatment effects.
    pub deltas: [f64; 3],
    pub sigma_c: [f64; 3],
    pub sigma_t: [f64; 3],
    /// `[n_control, n_treated]` per experiment.
    pub n_per_arm: [[usize; 2]; 3],
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            mu_c: 2.94,
            deltas: [0.0; 3],
            sigma_c: [0.6; 3],
            sigma_t: [1.5; 3],
            n_per_arm: [[10, 10]; 3],
        }
    }
}

impl Scenario {
    /// Similar experiments with common effect `delta`; only the treated sd of
    /// the experiment of interest varies.
    pub fn similar_experiments(delta: f64, sigma_t3: f64) -> Self {
        Self {
            deltas: [delta; 3],
            sigma_t: [1.5, 1.5, sigma_t3],
            ..Self::default()
        }
    }

    /// Effects that differ between experiments, treated sd 1.5 everywhere.
    pub fn shifted_effects(deltas: [f64; 3]) -> Self {
        Self {
            deltas,
            ..Self::default()
        }
    }

    /// Same setting with no effect anywhere.
    pub fn null_counterpart(&self) -> Self {
        Self {
            deltas: [0.0; 3],
            ..*self
        }
    }

    pub fn treated_mean(&self, i: usize) -> f64 {
        self.mu_c + self.mu_c * self.deltas[i]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu_c.is_finite() || self.deltas.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidConfig(
                "mu_c and deltas must be finite".into(),
            ));
        }
        if self
            .sigma_c
            .iter()
            .chain(&self.sigma_t)
            .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(Error::InvalidConfig(
                "standard deviations must be positive".into(),
            ));
        }
        if self.n_per_arm.iter().flatten().any(|n| *n < 2) {
            return Err(Error::InvalidConfig(
                "each arm needs at least 2 observations".into(),
            ));
        }
        Ok(())
    }
}

/// Draws the three experiments of one replication.
pub fn generate_scenario(sc: &Scenario, rng: &mut RngStream) -> Result<[Experiment; 3]> {
    sc.validate()?;
    let mut arm = |n: usize, mean: f64, sd: f64| -> Result<GroupSample> {
        GroupSample::new((0..n).map(|_| mean + sd * rng.standard_normal()).collect())
    };
    let mut make = |i: usize| -> Result<Experiment> {
        let control = arm(sc.n_per_arm[i][0], sc.mu_c, sc.sigma_c[i])?;
        let treated = arm(sc.n_per_arm[i][1], sc.treated_mean(i), sc.sigma_t[i])?;
        Ok(Experiment::new(
            format!("experiment {}", i + 1),
            control,
            treated,
        ))
    };
    Ok([make(0)?, make(1)?, make(2)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Welch test on the experiment of interest only.
    Welch,
    /// Welch test on all three experiments pooled.
    PooledWelch,
    /// Three-step Bayesian analysis.
    Bayes,
}

/// Outcome of one replication; `None` marks a method that failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub welch_p: Option<f64>,
    pub pooled_p: Option<f64>,
    pub pr_m1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub method: String,
    pub rejection_rate: f64,
    pub n_replications: usize,
    pub mc_stderr: f64,
    /// Rejection threshold: significance level for Welch rows, `p` for Bayesian rows.
    pub threshold: f64,
}

impl PowerRow {
    fn from_rejections(method: String, threshold: f64, rejections: usize, n: usize) -> Self {
        let r = if n == 0 {
            0.0
        } else {
            rejections as f64 / n as f64
        };
        Self {
            method,
            rejection_rate: r,
            n_replications: n,
            mc_stderr: if n == 0 {
                0.0
            } else {
                (r * (1.0 - r) / n as f64).sqrt()
            },
            threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStudy {
    pub rows: Vec<PowerRow>,
    /// Sorted by replication index.
    pub records: Vec<ReplicationRecord>,
    pub failures: usize,
}

impl PowerStudy {
    pub fn row(&self, method: &str) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Rejection rate of the rule `pr_m1 > threshold` over successful replications.
    pub fn bayes_rate(&self, threshold: f64) -> PowerRow {
        bayes_row(&self.records, threshold)
    }
}

/// Significance level of the Welch tests.
pub const WELCH_ALPHA: f64 = 0.05;

/// Method label of the Bayesian row at the calibrated threshold.
pub const CALIBRATED_LABEL: &str = "bayes_calibrated";

pub fn bayes_label(threshold: f64) -> String {
    format!("bayes>{threshold}")
}

fn bayes_row(records: &[ReplicationRecord], threshold: f64) -> PowerRow {
    let probs: Vec<f64> = records.iter().filter_map(|r| r.pr_m1).collect();
    let hits = probs.iter().filter(|p| **p > threshold).count();
    PowerRow::from_rejections(bayes_label(threshold), threshold, hits, probs.len())
}

/// Worker pool used by the studies; sized by `HISTBAYES_THREADS` when set.
fn run_parallel<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let threads = std::env::var("HISTBAYES_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|t| *t > 0);
    match threads.and_then(|t| rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()) {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        None => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Runs one replication; replication `r` draws from stream `(master_seed, r)`.
pub fn run_replication(
    sc: &Scenario,
    methods: &[Method],
    cfg: &AnalysisConfig,
    master_seed: u64,
    index: usize,
) -> Result<ReplicationRecord> {
    let base = RngStream::new(master_seed, index as u64);
    let exps = generate_scenario(sc, &mut base.child(0))?;
    let mut rec = ReplicationRecord {
        index,
        welch_p: None,
        pooled_p: None,
        pr_m1: None,
    };
    if methods.contains(&Method::Welch) {
        rec.welch_p = welch_test(&exps[2].control, &exps[2].treated)
            .ok()
            .map(|t| t.p_value);
    }
    if methods.contains(&Method::PooledWelch) {
        rec.pooled_p = pooled_welch_test(&exps).ok().map(|t| t.p_value);
    }
    if methods.contains(&Method::Bayes) {
        rec.pr_m1 = run_three_step(&exps[0], &exps[1], &exps[2], cfg, &base.child(1))
            .ok()
            .and_then(|r| r.step3_posterior)
            .map(|p| p.pr_m1);
    }
    Ok(rec)
}

fn failed(rec: &ReplicationRecord, methods: &[Method]) -> bool {
    methods.iter().any(|m| match m {
        Method::Welch => rec.welch_p.is_none(),
        Method::PooledWelch => rec.pooled_p.is_none(),
        Method::Bayes => rec.pr_m1.is_none(),
    })
}

fn collect_records(
    sc: &Scenario,
    n: usize,
    methods: &[Method],
    cfg: &AnalysisConfig,
    master_seed: u64,
) -> Result<(Vec<ReplicationRecord>, usize)> {
    sc.validate()?;
    cfg.validate()?;
    let records = run_parallel(n, |r| run_replication(sc, methods, cfg, master_seed, r));
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let failures = records.iter().filter(|r| failed(r, methods)).count();
    // more than 1% failed replications invalidates the study
    if failures * 100 > n {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: n,
        });
    }
    Ok((records, failures))
}

/// Rejection rates for each method over `n` replications.
///
/// Bayesian rows are reported at thresholds 0.5 and 0.8, plus `calibrated`
/// when supplied.
pub fn run_power_study(
    sc: &Scenario,
    n: usize,
    methods: &[Method],
    cfg: &AnalysisConfig,
    master_seed: u64,
    calibrated: Option<f64>,
) -> Result<PowerStudy> {
    if n < 100 {
        return Err(Error::InvalidConfig("N ≥ 100 required".into()));
    }
    let (records, failures) = collect_records(sc, n, methods, cfg, master_seed)?;
    let mut rows = Vec::new();
    let p_row = |label: &str, f: fn(&ReplicationRecord) -> Option<f64>| {
        let ps: Vec<f64> = records.iter().filter_map(f).collect();
        let hits = ps.iter().filter(|p| **p < WELCH_ALPHA).count();
        PowerRow::from_rejections(label.to_string(), WELCH_ALPHA, hits, ps.len())
    };
    if methods.contains(&Method::Welch) {
        rows.push(p_row("welch", |r| r.welch_p));
    }
    if methods.contains(&Method::PooledWelch) {
        rows.push(p_row("pooled_welch", |r| r.pooled_p));
    }
    if methods.contains(&Method::Bayes) {
        for t in [0.5, 0.8] {
            rows.push(bayes_row(&records, t));
        }
        if let Some(t) = calibrated {
            rows.push(PowerRow {
                method: CALIBRATED_LABEL.to_string(),
                ..bayes_row(&records, t)
            });
        }
    }
    Ok(PowerStudy {
        rows,
        records,
        failures,
    })
}

/// `q`-quantile by linear interpolation between order statistics
/// (position `q (n − 1)` in the sorted sample).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(
            "percentile needs values and q in [0, 1]".into(),
        ));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    /// Approximate 95% interval from binomial order-statistic ranks.
    pub interval: (f64, f64),
    pub n_replications: usize,
    pub failures: usize,
    /// Null `pr_m1` values sorted by replication index.
    pub pr_m1: Vec<f64>,
}

/// Threshold whose rule `pr_m1 > p` rejects 5% of null replications.
pub fn calibrate_threshold(
    sc_null: &Scenario,
    n: usize,
    cfg: &AnalysisConfig,
    master_seed: u64,
) -> Result<Calibration> {
    if sc_null.deltas[2] != 0.0 {
        return Err(Error::InvalidConfig(
            "calibration requires a null scenario".into(),
        ));
    }
    if n < 500 {
        return Err(Error::InvalidConfig(
            "N ≥ 500 required for calibration".into(),
        ));
    }
    let (records, failures) = collect_records(sc_null, n, &[Method::Bayes], cfg, master_seed)?;
    let probs: Vec<f64> = records.iter().filter_map(|r| r.pr_m1).collect();
    calibration_from(probs, failures)
}

fn calibration_from(probs: Vec<f64>, failures: usize) -> Result<Calibration> {
    let threshold = percentile(&probs, 0.95)?;
    let m = probs.len() as f64;
    let half = 1.96 * (m * 0.05 * 0.95).sqrt() / m;
    let interval = (
        percentile(&probs, (0.95 - half).max(0.0))?,
        percentile(&probs, (0.95 + half).min(1.0))?,
    );
    Ok(Calibration {
        threshold,
        interval,
        n_replications: probs.len(),
        failures,
        pr_m1: probs,
    })
}
