//! The sequential procedure: historical experiments turn a vague prior into
//! informative priors under both models, then the model posterior is updated
//! experiment by experiment.

use serde::{Deserialize, Serialize};

use crate::data::{AnalysisConfig, Experiment, ExperimentSummary};
use crate::error::{Error, Result};
use crate::m0::{m0_first_step, m0_log_marginal, m0_next_step, IgFit, M0StepPrior, M0Update};
use crate::m1::M1State;
use crate::special::RngStream;

/// Posterior probabilities of equal means (M0) and different means (M1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPosterior {
    pub pr_m0: f64,
    pub pr_m1: f64,
}

impl ModelPosterior {
    pub const FLAT: ModelPosterior = ModelPosterior {
        pr_m0: 0.5,
        pr_m1: 0.5,
    };

    pub fn new(pr_m0: f64, pr_m1: f64) -> Result<Self> {
        let p = Self { pr_m0, pr_m1 };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let ok = |x: f64| (0.0..=1.0).contains(&x);
        if !ok(self.pr_m0) || !ok(self.pr_m1) || (self.pr_m0 + self.pr_m1 - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "model probabilities ({}, {}) must lie in [0, 1] and sum to 1",
                self.pr_m0, self.pr_m1
            )));
        }
        Ok(())
    }
}

/// Bayes' rule on the two-model space, stabilized by log-sum-exp.
pub fn model_posterior(log_m0: f64, log_m1: f64, prior: ModelPosterior) -> Result<ModelPosterior> {
    prior.validate()?;
    if !log_m0.is_finite() || !log_m1.is_finite() {
        return Err(Error::Domain(format!(
            "log marginals must be finite, got ({log_m0}, {log_m1})"
        )));
    }
    if prior.pr_m0 == 0.0 && prior.pr_m1 == 0.0 {
        return Err(Error::ZeroPriorMass);
    }
    let l = log_m0.max(log_m1);
    let a = prior.pr_m0 * (log_m0 - l).exp();
    let b = prior.pr_m1 * (log_m1 - l).exp();
    let pr_m1 = b / (a + b);
    Ok(ModelPosterior {
        pr_m0: 1.0 - pr_m1,
        pr_m1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    /// Conclude the means differ.
    Reject,
    Retain,
}

/// Reject equal means iff `pr_m1 > threshold`.
pub fn decide(pr_m1: f64, threshold: f64) -> Decision {
    if pr_m1 > threshold {
        Decision::Reject
    } else {
        Decision::Retain
    }
}

/// `log Pr(y | M)` for each scored experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogMarginals {
    pub y2_m0: f64,
    pub y2_m1: f64,
    pub y3_m0: Option<f64>,
    pub y3_m1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcDiagnostics {
    /// Step whose posterior was sampled.
    pub step: u8,
    pub acceptance_rate: f64,
    pub chains_agree: bool,
    /// Correlation of the two log-variances; the IG×IG approximation ignores it.
    pub log_correlation: f64,
    pub fit_control: IgFit,
    pub fit_treated: IgFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadDiagnostics {
    /// Step whose experiment was scored.
    pub step: u8,
    pub rel_error: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mcmc: Vec<McmcDiagnostics>,
    pub quadrature: Vec<QuadDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub step2_posterior: ModelPosterior,
    /// Absent for two-step analyses.
    pub step3_posterior: Option<ModelPosterior>,
    pub log_marginals: LogMarginals,
    pub threshold: f64,
    pub decision: Decision,
    pub diagnostics: Diagnostics,
}

impl AnalysisResult {
    /// Posterior after the last scored experiment.
    pub fn final_posterior(&self) -> ModelPosterior {
        self.step3_posterior.unwrap_or(self.step2_posterior)
    }
}

/// Orders the arms so that relabelling control and treated leaves the
/// computation unchanged.
fn canonicalize(exps: &mut [ExperimentSummary]) -> bool {
    let order = exps
        .iter()
        .flat_map(|e| {
            let (a, b) = (e.control.canonical_key(), e.treated.canonical_key());
            a.into_iter().zip(b).map(|(x, y)| x.total_cmp(&y))
        })
        .find(|o| o.is_ne());
    let swap = order.is_some_and(|o| o.is_gt());
    if swap {
        for e in exps.iter_mut() {
            *e = e.swapped();
        }
    }
    swap
}

struct Pipeline {
    diagnostics: Diagnostics,
    swapped: bool,
}

impl Pipeline {
    fn record_mcmc(&mut self, step: u8, u: &M0Update) {
        let (mut c, mut t) = (u.prior.var_c, u.prior.var_t);
        if self.swapped {
            std::mem::swap(&mut c, &mut t);
        }
        self.diagnostics.mcmc.push(McmcDiagnostics {
            step,
            acceptance_rate: u.mcmc.acceptance_rate(),
            chains_agree: u.mcmc.chains_agree,
            log_correlation: u.mcmc.log_correlation,
            fit_control: c,
            fit_treated: t,
        });
    }

    /// Scores `y` under both models; returns `(log m0, log m1)`.
    fn score(
        &mut self,
        step: u8,
        y: &ExperimentSummary,
        m0: &M0StepPrior,
        m1: &M1State,
        cfg: &AnalysisConfig,
    ) -> Result<(f64, f64)> {
        let q = m0_log_marginal(y, m0, &cfg.quad).map_err(|e| e.at_step(step))?;
        self.diagnostics.quadrature.push(QuadDiagnostics {
            step,
            rel_error: q.rel_error,
            evals: q.evals,
        });
        Ok((q.log_value, m1.log_marginal(y)))
    }
}

fn run(exps: &[&Experiment], cfg: &AnalysisConfig, rng: &RngStream) -> Result<AnalysisResult> {
    cfg.validate()?;
    let weights = [cfg.w1, cfg.w2, 1.0];
    let history = exps.len() - 1;
    let mut ys = exps
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let w = if i < history { weights[i] } else { 1.0 };
            e.summary().weighted(w, cfg.scale_gamma)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut p = Pipeline {
        diagnostics: Diagnostics::default(),
        swapped: canonicalize(&mut ys),
    };

    // Step 1: priors from the first experiment.
    let m1 = M1State::from_experiment(&ys[0]).map_err(|e| e.at_step(1))?;
    let first = m0_first_step(&ys[0], &cfg.mcmc, &rng.child(1)).map_err(|e| e.at_step(1))?;
    p.record_mcmc(1, &first);

    // Step 2: score the second experiment against a flat model prior.
    let (l0, l1) = p.score(2, &ys[1], &first.prior, &m1, cfg)?;
    let step2 = model_posterior(l0, l1, ModelPosterior::FLAT).map_err(|e| e.at_step(2))?;
    let mut log_marginals = LogMarginals {
        y2_m0: l0,
        y2_m1: l1,
        y3_m0: None,
        y3_m1: None,
    };

    let mut step3 = None;
    if ys.len() == 3 {
        let m1 = m1.update(&ys[1]);
        let second = m0_next_step(&first.prior, &ys[1], &cfg.mcmc, &rng.child(2))
            .map_err(|e| e.at_step(2))?;
        p.record_mcmc(2, &second);
        let (l0, l1) = p.score(3, &ys[2], &second.prior, &m1, cfg)?;
        log_marginals.y3_m0 = Some(l0);
        log_marginals.y3_m1 = Some(l1);
        step3 = Some(model_posterior(l0, l1, step2).map_err(|e| e.at_step(3))?);
    }

    let last = step3.unwrap_or(step2);
    Ok(AnalysisResult {
        step2_posterior: step2,
        step3_posterior: step3,
        log_marginals,
        threshold: cfg.threshold,
        decision: decide(last.pr_m1, cfg.threshold),
        diagnostics: p.diagnostics,
    })
}

/// Two historical experiments `y1`, `y2` (weighted by `w1`, `w2`) and the
/// experiment of interest `y3`.
pub fn run_three_step(
    y1: &Experiment,
    y2: &Experiment,
    y3: &Experiment,
    cfg: &AnalysisConfig,
    rng: &RngStream,
) -> Result<AnalysisResult> {
    run(&[y1, y2, y3], cfg, rng)
}

/// One historical experiment `y1` (weighted by `w1`) and the experiment of
/// interest `y2`.
pub fn run_two_step(
    y1: &Experiment,
    y2: &Experiment,
    cfg: &AnalysisConfig,
    rng: &RngStream,
) -> Result<AnalysisResult> {
    run(&[y1, y2], cfg, rng)
}
