//! Equal-means model: `c ~ N(μ, σ_c²)`, `t ~ N(μ, σ_t²)`.
//!
//! Conditionally on the two variances the common mean is Gaussian and is
//! always integrated out in closed form. The variance pair has no closed-form
//! posterior: it is sampled by MCMC, each coordinate is approximated by an
//! independently fitted inverse gamma, and integrated likelihoods are obtained
//! by 2D adaptive cubature over the variances.

use serde::{Deserialize, Serialize};

use crate::data::{ExperimentSummary, McmcConfig, QuadConfig};
use crate::error::{Error, Result};
use crate::mcmc::{mcmc_sample_variances, McmcOutput};
use crate::quad::integrate_2d_log;
use crate::special::{digamma, ln_pdf_ig_unchecked, trigamma, RngStream};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Running sums that define the Gaussian law of μ given both variances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MuSource {
    /// Σ n_c over absorbed experiments.
    pub n_c: f64,
    /// Σ n_c · c̄.
    pub sum_c: f64,
    pub n_t: f64,
    pub sum_t: f64,
}

impl MuSource {
    pub fn from_experiments<'a>(exps: impl IntoIterator<Item = &'a ExperimentSummary>) -> Self {
        exps.into_iter()
            .fold(Self::default(), |acc, e| acc.absorb(e))
    }

    pub fn absorb(&self, e: &ExperimentSummary) -> Self {
        Self {
            n_c: self.n_c + e.control.n,
            sum_c: self.sum_c + e.control.n * e.control.mean,
            n_t: self.n_t + e.treated.n,
            sum_t: self.sum_t + e.treated.n * e.treated.mean,
        }
    }

    fn swapped(&self) -> Self {
        Self {
            n_c: self.n_t,
            sum_c: self.sum_t,
            n_t: self.n_c,
            sum_t: self.sum_c,
        }
    }

    /// Precision-weighted mean and variance of μ given `(σ_c², σ_t²)`.
    pub fn conditional(&self, sc2: f64, st2: f64) -> MuConditional {
        let denom = st2 * self.n_c + sc2 * self.n_t;
        MuConditional {
            mean: (st2 * self.sum_c + sc2 * self.sum_t) / denom,
            variance: sc2 * st2 / denom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuConditional {
    pub mean: f64,
    pub variance: f64,
}

/// Law of μ given the variances after absorbing the first `step` experiments.
pub fn mu_conditional(
    step: usize,
    sc2: f64,
    st2: f64,
    summaries: &[ExperimentSummary],
) -> Result<MuConditional> {
    check_variances(sc2, st2)?;
    if step == 0 || summaries.len() < step {
        return Err(Error::Domain(format!(
            "step {step} needs {step} experiment summaries, got {}",
            summaries.len()
        )));
    }
    Ok(MuSource::from_experiments(&summaries[..step]).conditional(sc2, st2))
}

fn check_variances(sc2: f64, st2: f64) -> Result<()> {
    if sc2 > 0.0 && st2 > 0.0 && sc2.is_finite() && st2.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "variances must be positive, got ({sc2}, {st2})"
        )))
    }
}

/// Full M0 log-likelihood of one experiment at `(μ, σ_c², σ_t²)`.
pub fn m0_log_likelihood(mu: f64, sc2: f64, st2: f64, s: &ExperimentSummary) -> f64 {
    let (c, t) = (&s.control, &s.treated);
    -0.5 * (c.n + t.n) * LN_2PI
        - 0.5 * c.n * sc2.ln()
        - 0.5 * t.n * st2.ln()
        - (c.n * (c.mean - mu).powi(2) + c.gamma) / (2.0 * sc2)
        - (t.n * (t.mean - mu).powi(2) + t.gamma) / (2.0 * st2)
}

/// Log of the Jeffreys prior `((n_c σ_t² + n_t σ_c²) / (σ_c⁶ σ_t⁶))^{1/2}`.
pub fn m0_jeffreys_log_prior(sc2: f64, st2: f64, s: &ExperimentSummary) -> f64 {
    0.5 * (s.control.n * st2 + s.treated.n * sc2).ln() - 1.5 * sc2.ln() - 1.5 * st2.ln()
}

fn step1_kernel(sc2: f64, st2: f64, s: &ExperimentSummary) -> f64 {
    let (c, t) = (&s.control, &s.treated);
    let arm = |n: f64, gamma: f64, v: f64| (-0.5 * n - 1.0) * v.ln() - gamma / (2.0 * v);
    let d = c.mean - t.mean;
    // two-term sums commute exactly, so swapping arms and variances is bit-identical
    (arm(c.n, c.gamma, sc2) + arm(t.n, t.gamma, st2))
        - c.n * t.n * d * d / (2.0 * (c.n * st2 + t.n * sc2))
}

/// Unnormalized log posterior of `(σ_c², σ_t²)` after the first experiment
/// (Jeffreys prior, μ integrated out).
pub fn m0_step1_log_target(sc2: f64, st2: f64, s: &ExperimentSummary) -> Result<f64> {
    check_variances(sc2, st2)?;
    Ok(step1_kernel(sc2, st2, s))
}

/// `log ∫ ℓ0(μ, σ_c², σ_t² | new) π(μ | σ's) dμ` with the Gaussian μ prior
/// given by `mu`.
pub fn log_likelihood_mu_integrated(
    new: &ExperimentSummary,
    mu: &MuSource,
    sc2: f64,
    st2: f64,
) -> f64 {
    let (c, t) = (&new.control, &new.treated);
    let d = c.mean - t.mean;
    let new_w = c.n * st2 + t.n * sc2;
    let prior_w = mu.n_c * st2 + mu.n_t * sc2;
    let total_w = (mu.n_c + c.n) * st2 + (mu.n_t + t.n) * sc2;
    let new_mean = (c.n * st2 * c.mean + t.n * sc2 * t.mean) / new_w;
    let prior_mean = (st2 * mu.sum_c + sc2 * mu.sum_t) / prior_w;
    let gap = new_mean - prior_mean;
    -0.5 * (c.n + t.n) * LN_2PI
        - 0.5 * c.n * sc2.ln()
        - 0.5 * t.n * st2.ln()
        - c.gamma / (2.0 * sc2)
        - t.gamma / (2.0 * st2)
        - c.n * t.n * d * d / (2.0 * new_w)
        + 0.5 * (prior_w / total_w).ln()
        - prior_w * new_w / (2.0 * sc2 * st2 * total_w) * gap * gap
}

/// Inverse-gamma approximation of one variance's posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub n_samples: usize,
    pub converged: bool,
    /// `|ln β̂ − ψ(α̂) − mean(ln x)|` at the returned estimate.
    pub residual: f64,
}

impl IgFit {
    pub fn mode(&self) -> f64 {
        self.beta_hat / (self.alpha_hat + 1.0)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        ln_pdf_ig_unchecked(x, self.alpha_hat, self.beta_hat)
    }
}

/// Moment-matching start `α₀ = m²/v + 2`, `β₀ = m(α₀ − 1)`.
pub fn moment_init(draws: &[f64]) -> Result<(f64, f64)> {
    let n = draws.len() as f64;
    let m = draws.iter().sum::<f64>() / n;
    let v = draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    if !(v > 0.0) {
        return Err(Error::DegenerateDraws);
    }
    let alpha0 = m * m / v + 2.0;
    Ok((alpha0, m * (alpha0 - 1.0)))
}

/// Maximum-likelihood inverse-gamma fit to positive draws.
///
/// With `H` the harmonic mean, `β̂ = α̂ H` and `α̂` solves
/// `ln α − ψ(α) = mean(ln x) − ln H`; the root is found by Newton's method on
/// `ln α`, safeguarded by bisection, started from [`moment_init`].
pub fn fit_inverse_gamma(draws: &[f64]) -> Result<IgFit> {
    if draws.len() < 100 {
        return Err(Error::Domain(format!(
            "need at least 100 draws, got {}",
            draws.len()
        )));
    }
    if let Some(bad) = draws.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!(
            "draws must be positive and finite, got {bad}"
        )));
    }
    let n = draws.len() as f64;
    let mean_log = draws.iter().map(|x| x.ln()).sum::<f64>() / n;
    let harmonic = n / draws.iter().map(|x| 1.0 / x).sum::<f64>();
    let target = mean_log - harmonic.ln();
    if !(target > 0.0) {
        return Err(Error::DegenerateDraws);
    }
    let (alpha0, _) = moment_init(draws)?;

    let g = |phi: f64| -> Result<f64> {
        let a = phi.exp();
        Ok(phi - digamma(a)? - target)
    };
    let (mut lo, mut hi) = (1e-8f64.ln(), 1e12f64.ln());
    let mut phi = alpha0.ln().clamp(lo, hi);
    let mut best = (f64::INFINITY, phi);
    for _ in 0..200 {
        let gv = g(phi)?;
        if gv.abs() < best.0 {
            best = (gv.abs(), phi);
        }
        if gv.abs() < 1e-13 {
            break;
        }
        // g is decreasing in φ
        if gv > 0.0 {
            lo = phi;
        } else {
            hi = phi;
        }
        let a = phi.exp();
        let slope = 1.0 - a * trigamma(a)?;
        let mut next = phi - gv / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - phi).abs() < 1e-15 {
            break;
        }
        phi = next;
    }
    let alpha_hat = best.1.exp();
    let beta_hat = alpha_hat * harmonic;
    let residual = (beta_hat.ln() - digamma(alpha_hat)? - mean_log).abs();
    Ok(IgFit {
        alpha_hat,
        beta_hat,
        n_samples: draws.len(),
        converged: residual < 1e-8,
        residual,
    })
}

/// Prior on θ₀ for the next step: μ's conditional law plus two IG fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M0StepPrior {
    pub mu_source: MuSource,
    pub var_c: IgFit,
    pub var_t: IgFit,
}

impl M0StepPrior {
    pub fn swapped(&self) -> Self {
        Self {
            mu_source: self.mu_source.swapped(),
            var_c: self.var_t,
            var_t: self.var_c,
        }
    }

    /// Unnormalized log posterior of `(σ_c², σ_t²)` after absorbing `new`.
    pub fn posterior_log_target(&self, sc2: f64, st2: f64, new: &ExperimentSummary) -> f64 {
        self.var_c.log_pdf(sc2)
            + self.var_t.log_pdf(st2)
            + log_likelihood_mu_integrated(new, &self.mu_source, sc2, st2)
    }
}

/// Unnormalized log posterior of `(σ_c², σ_t²)` at step 2: fitted step-1 IG
/// priors, the μ-integrated likelihood of `s2` against the step-1 μ law.
pub fn m0_step2_log_target(
    sc2: f64,
    st2: f64,
    s2: &ExperimentSummary,
    step1: &M0StepPrior,
) -> Result<f64> {
    check_variances(sc2, st2)?;
    Ok(step1.posterior_log_target(sc2, st2, s2))
}

/// Result of an M0 integrated-likelihood computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M0Marginal {
    pub log_value: f64,
    pub rel_error: f64,
    pub evals: usize,
}

fn canonical_order(new: &ExperimentSummary, prior: &M0StepPrior) -> bool {
    let key = |e: &ExperimentSummary, p: &M0StepPrior| {
        [
            p.var_c.alpha_hat,
            p.var_c.beta_hat,
            p.mu_source.n_c,
            p.mu_source.sum_c,
            e.control.canonical_key()[0],
            e.control.canonical_key()[1],
            e.control.canonical_key()[2],
        ]
    };
    let a = key(new, prior);
    let b = key(&new.swapped(), &prior.swapped());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .is_none_or(|o| o.is_lt())
}

/// `log Pr(new | M0)` under `prior`.
///
/// Each variance axis is mapped to the unit interval by
/// `σ² = s·u/(1−u)` with `s` the mode of that axis' fitted IG prior.
pub fn m0_log_marginal(
    new: &ExperimentSummary,
    prior: &M0StepPrior,
    quad: &QuadConfig,
) -> Result<M0Marginal> {
    quad.validate()?;
    // Arm labels carry no meaning under M0: fix an orientation so swapped
    // inputs run the identical computation.
    let (new, prior) = if canonical_order(new, prior) {
        (*new, *prior)
    } else {
        (new.swapped(), prior.swapped())
    };
    let scale_c = prior.var_c.mode();
    let scale_t = prior.var_t.mode();
    let (ln_sc, ln_st) = (scale_c.ln(), scale_t.ln());
    let log_integrand = |u: f64, v: f64| {
        if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
            return f64::NEG_INFINITY;
        }
        let sc2 = scale_c * u / (1.0 - u);
        let st2 = scale_t * v / (1.0 - v);
        let jac = ln_sc + ln_st - 2.0 * (1.0 - u).ln() - 2.0 * (1.0 - v).ln();
        let l = prior.posterior_log_target(sc2, st2, &new) + jac;
        if l.is_nan() {
            f64::NEG_INFINITY
        } else {
            l
        }
    };
    let est = integrate_2d_log(log_integrand, quad.rel_tol, quad.max_evals)?;
    Ok(M0Marginal {
        log_value: est.log_value,
        rel_error: est.rel_error,
        evals: est.evals,
    })
}

/// One round of "sample variance posterior, fit IGs" for M0.
#[derive(Debug, Clone, PartialEq)]
pub struct M0Update {
    pub prior: M0StepPrior,
    pub mcmc: McmcOutput,
}

fn fit_pair(out: McmcOutput, mu_source: MuSource) -> Result<M0Update> {
    let var_c = fit_inverse_gamma(&out.coordinate(0))?;
    let var_t = fit_inverse_gamma(&out.coordinate(1))?;
    Ok(M0Update {
        prior: M0StepPrior {
            mu_source,
            var_c,
            var_t,
        },
        mcmc: out,
    })
}

fn start_point(s: &ExperimentSummary) -> [f64; 2] {
    let guess = |g: &crate::data::GroupSummary| {
        let v = g.gamma / g.n.max(1.0);
        if v > 0.0 && v.is_finite() {
            v
        } else {
            1.0
        }
    };
    [guess(&s.control), guess(&s.treated)]
}

/// Step 1: sample the Jeffreys posterior of the variances given `y1` and fit IGs.
pub fn m0_first_step(
    y1: &ExperimentSummary,
    cfg: &McmcConfig,
    rng: &RngStream,
) -> Result<M0Update> {
    let target = |a: f64, b: f64| {
        if a > 0.0 && b > 0.0 {
            step1_kernel(a, b, y1)
        } else {
            f64::NEG_INFINITY
        }
    };
    let out = mcmc_sample_variances(target, start_point(y1), cfg, rng)?;
    fit_pair(out, MuSource::default().absorb(y1))
}

/// Later steps: absorb `y` into `prior`, sample the variance posterior and refit.
pub fn m0_next_step(
    prior: &M0StepPrior,
    y: &ExperimentSummary,
    cfg: &McmcConfig,
    rng: &RngStream,
) -> Result<M0Update> {
    let target = |a: f64, b: f64| {
        if a > 0.0 && b > 0.0 {
            prior.posterior_log_target(a, b, y)
        } else {
            f64::NEG_INFINITY
        }
    };
    let init = [prior.var_c.mode(), prior.var_t.mode()];
    let out = mcmc_sample_variances(target, init, cfg, rng)?;
    fit_pair(out, prior.mu_source.absorb(y))
}
