//! Experiments, sufficient statistics, historical weighting and analysis settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw measurements for one arm of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSample {
    values: Vec<f64>,
}

impl GroupSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidSample(format!(
                "a group needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("non-finite value {bad}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn summary(&self) -> GroupSummary {
        summarize(&self.values).expect("GroupSample is never empty")
    }

    /// Same sample with `offset` added to every value.
    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + offset).collect(),
        }
    }

    /// Same sample with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Sufficient statistics of a Gaussian sample.
///
/// `n` is real-valued so that down-weighted historical data can carry a
/// fractional effective size; `gamma` is the centered sum of squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: f64,
    pub mean: f64,
    pub gamma: f64,
}

impl GroupSummary {
    pub fn new(n: f64, mean: f64, gamma: f64) -> Self {
        Self { n, mean, gamma }
    }

    /// Unbiased sample variance `gamma / (n - 1)`.
    pub fn sample_variance(&self) -> f64 {
        self.gamma / (self.n - 1.0)
    }

    /// Summary of the concatenation of two samples.
    pub fn pooled(&self, other: &GroupSummary) -> GroupSummary {
        let n = self.n + other.n;
        let d = self.mean - other.mean;
        GroupSummary {
            n,
            mean: (self.n * self.mean + other.n * other.mean) / n,
            gamma: self.gamma + other.gamma + self.n * other.n * d * d / n,
        }
    }

    pub(crate) fn canonical_key(&self) -> [f64; 3] {
        [self.n, self.mean, self.gamma]
    }
}

/// Sample size, mean and centered sum of squares using the corrected
/// two-pass algorithm.
pub fn summarize(values: &[f64]) -> Result<GroupSummary> {
    if values.is_empty() {
        return Err(Error::EmptyGroup);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (ss, resid) = values.iter().fold((0.0, 0.0), |(ss, r), &x| {
        let d = x - mean;
        (ss + d * d, r + d)
    });
    let gamma = (ss - resid * resid / n).max(0.0);
    Ok(GroupSummary { n, mean, gamma })
}

/// Down-weights a historical summary by replacing `n` with `w * n`.
///
/// `mean` and `gamma` are kept; see [`apply_weight_with`] to shrink `gamma` too.
pub fn apply_weight(s: GroupSummary, w: f64) -> Result<GroupSummary> {
    apply_weight_with(s, w, false)
}

pub fn apply_weight_with(s: GroupSummary, w: f64, scale_gamma: bool) -> Result<GroupSummary> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::InvalidWeight(w));
    }
    if w == 1.0 {
        return Ok(s);
    }
    Ok(GroupSummary {
        n: w * s.n,
        mean: s.mean,
        gamma: if scale_gamma { w * s.gamma } else { s.gamma },
    })
}

/// One two-arm experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub label: String,
    pub control: GroupSample,
    pub treated: GroupSample,
}

impl Experiment {
    pub fn new(label: impl Into<String>, control: GroupSample, treated: GroupSample) -> Self {
        Self {
            label: label.into(),
            control,
            treated,
        }
    }

    /// Convenience constructor from raw slices.
    pub fn from_values(label: impl Into<String>, control: &[f64], treated: &[f64]) -> Result<Self> {
        Ok(Self::new(
            label,
            GroupSample::new(control.to_vec())?,
            GroupSample::new(treated.to_vec())?,
        ))
    }

    pub fn summary(&self) -> ExperimentSummary {
        ExperimentSummary {
            control: self.control.summary(),
            treated: self.treated.summary(),
        }
    }

    /// Experiment with the arm labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            label: self.label.clone(),
            control: self.treated.clone(),
            treated: self.control.clone(),
        }
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            label: self.label.clone(),
            control: self.control.shifted(offset),
            treated: self.treated.shifted(offset),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            label: self.label.clone(),
            control: self.control.scaled(factor),
            treated: self.treated.scaled(factor),
        }
    }
}

/// Per-arm sufficient statistics of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub control: GroupSummary,
    pub treated: GroupSummary,
}

impl ExperimentSummary {
    pub fn new(control: GroupSummary, treated: GroupSummary) -> Self {
        Self { control, treated }
    }

    pub fn weighted(&self, w: f64, scale_gamma: bool) -> Result<Self> {
        Ok(Self {
            control: apply_weight_with(self.control, w, scale_gamma)?,
            treated: apply_weight_with(self.treated, w, scale_gamma)?,
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            control: self.treated,
            treated: self.control,
        }
    }
}

/// Settings for the random-walk Metropolis sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
}

impl McmcConfig {
    /// Preset for single analyses: 4 chains of 20,000 iterations.
    pub const fn analysis() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 5_000,
            thin: 5,
            chains: 4,
        }
    }

    /// Reduced preset for Monte Carlo studies: 1 chain of 6,000 iterations.
    pub const fn simulation() -> Self {
        Self {
            iterations: 6_000,
            burn_in: 1_000,
            thin: 5,
            chains: 1,
        }
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.chains == 0 {
            return Err(Error::InvalidConfig(
                "mcmc iterations, thin and chains must be positive".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(
                "mcmc burn_in must be smaller than iterations".into(),
            ));
        }
        if self.retained_per_chain() * self.chains < 100 {
            return Err(Error::InvalidConfig(
                "mcmc settings retain fewer than 100 draws".into(),
            ));
        }
        Ok(())
    }
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self::analysis()
    }
}

/// Settings for the adaptive cubature used by the equal-means marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadConfig {
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-4) {
            return Err(Error::InvalidConfig(format!(
                "quadrature rel_tol {} must lie in (0, 1e-4]",
                self.rel_tol
            )));
        }
        if self.max_evals == 0 {
            return Err(Error::InvalidConfig(
                "quadrature max_evals must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            max_evals: 1_000_000,
        }
    }
}

/// Everything a sequential analysis needs besides the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Weight on the first historical experiment.
    pub w1: f64,
    /// Weight on the second historical experiment.
    pub w2: f64,
    /// Reject equal means when `Pr(M1 | y)` exceeds this.
    pub threshold: f64,
    /// Also multiply `gamma` by the weight (off by default).
    pub scale_gamma: bool,
    pub mcmc: McmcConfig,
    pub quad: QuadConfig,
    pub seed: u64,
}

impl AnalysisConfig {
    /// Defaults for Monte Carlo studies: reduced MCMC and `rel_tol = 1e-5`.
    pub fn simulation() -> Self {
        Self {
            mcmc: McmcConfig::simulation(),
            quad: QuadConfig {
                rel_tol: 1e-5,
                ..QuadConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn with_weights(mut self, w1: f64, w2: f64) -> Self {
        self.w1 = w1;
        self.w2 = w2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for w in [self.w1, self.w2] {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::InvalidWeight(w));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        self.mcmc.validate()?;
        self.quad.validate()
    }
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            w1: 1.0,
            w2: 1.0,
            threshold: 0.8,
            scale_gamma: false,
            mcmc: McmcConfig::analysis(),
            quad: QuadConfig::default(),
            seed: 20_190_101,
        }
    }
}
