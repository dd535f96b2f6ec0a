//! Unequal-means model: per-arm Normal-Inverse-Gamma conjugate updates and
//! closed-form log integrated likelihoods.
//!
//! Under the Jeffreys prior `(σ_c² σ_t²)^{-3/2}` the first dataset yields, per
//! arm, `μ | σ² ~ N(mean, σ²/n)` and `σ² ~ IG(n/2, γ/2)`. Every later dataset
//! is absorbed by the ordinary conjugate update, and its integrated likelihood
//! is the NIG predictive density.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::data::{ExperimentSummary, GroupSummary};
use crate::error::{Error, Result};
use crate::special::ln_gamma_unchecked;

/// Normal-Inverse-Gamma hyperparameters: `μ | σ² ~ N(m, σ²/κ)`, `σ² ~ IG(α, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigHyper {
    pub m: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl NigHyper {
    pub fn new(m: f64, kappa: f64, alpha: f64, beta: f64) -> Result<Self> {
        let h = Self {
            m,
            kappa,
            alpha,
            beta,
        };
        h.validate()?;
        Ok(h)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.m.is_finite()
            && self.kappa > 0.0
            && self.alpha > 0.0
            && self.beta > 0.0
            && self.kappa.is_finite()
            && self.alpha.is_finite()
            && self.beta.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "invalid NIG hyperparameters {self:?}"
            )))
        }
    }
}

/// Jeffreys posterior from a single group: `(mean, n, n/2, γ/2)`.
pub fn m1_init(s: &GroupSummary) -> Result<NigHyper> {
    if !(s.gamma > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    if !(s.n > 0.0) {
        return Err(Error::Domain(format!(
            "group size must be positive, got {}",
            s.n
        )));
    }
    NigHyper::new(s.mean, s.n, 0.5 * s.n, 0.5 * s.gamma)
}

/// Conjugate update of `h` with the group summarized by `s`.
pub fn m1_update(h: &NigHyper, s: &GroupSummary) -> NigHyper {
    let kappa = h.kappa + s.n;
    let d = h.m - s.mean;
    NigHyper {
        m: (h.kappa * h.m + s.n * s.mean) / kappa,
        kappa,
        alpha: h.alpha + 0.5 * s.n,
        beta: h.beta + 0.5 * s.gamma + h.kappa * s.n * d * d / (2.0 * kappa),
    }
}

/// Log predictive density of a group under the NIG prior `h`.
pub fn m1_log_marginal(h: &NigHyper, s: &GroupSummary) -> f64 {
    let post = m1_update(h, s);
    -0.5 * s.n * (2.0 * PI).ln() + 0.5 * (h.kappa / post.kappa).ln() + h.alpha * h.beta.ln()
        - ln_gamma_unchecked(h.alpha)
        + ln_gamma_unchecked(post.alpha)
        - post.alpha * post.beta.ln()
}

/// Posterior state for both arms; the arms are a posteriori independent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M1State {
    pub control: NigHyper,
    pub treated: NigHyper,
}

impl M1State {
    pub fn from_experiment(s: &ExperimentSummary) -> Result<Self> {
        Ok(Self {
            control: m1_init(&s.control)?,
            treated: m1_init(&s.treated)?,
        })
    }

    pub fn update(&self, s: &ExperimentSummary) -> Self {
        Self {
            control: m1_update(&self.control, &s.control),
            treated: m1_update(&self.treated, &s.treated),
        }
    }

    /// `log Pr(y | M1)` for a new two-arm experiment.
    pub fn log_marginal(&self, s: &ExperimentSummary) -> f64 {
        m1_log_marginal(&self.control, &s.control) + m1_log_marginal(&self.treated, &s.treated)
    }
}
