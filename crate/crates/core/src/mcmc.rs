//! Random-walk Metropolis for a pair of variances.
//!
//! Chains move on `(ln σ_c², ln σ_t²)` with independent Gaussian increments.
//! During burn-in the per-coordinate step sizes are re-estimated from the
//! chain's own spread and a global factor is tuned toward an acceptance rate
//! in [0.2, 0.5]; all scales are frozen once burn-in ends.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::McmcConfig;
use crate::error::{Error, Result};
use crate::special::RngStream;

const ADAPT_BATCH: usize = 50;
const TARGET_ACCEPT: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Post-burn-in acceptance rate.
    pub acceptance_rate: f64,
    pub step_scale: [f64; 2],
}

/// Draws on the variance scale plus convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcOutput {
    /// Retained draws from all chains, concatenated by chain index.
    pub draws: Vec<[f64; 2]>,
    pub chains: Vec<ChainDiagnostics>,
    /// False when per-chain means of some log-variance differ from the grand
    /// mean by more than 3 pooled Monte Carlo standard errors.
    pub chains_agree: bool,
    /// Pearson correlation of the two log-variances over all draws.
    pub log_correlation: f64,
}

impl McmcOutput {
    pub fn acceptance_rate(&self) -> f64 {
        self.chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / self.chains.len() as f64
    }

    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[k]).collect()
    }
}

fn find_start<F>(log_target: &F, init: [f64; 2]) -> Option<([f64; 2], f64)>
where
    F: Fn(f64, f64) -> f64,
{
    let mut candidates = vec![init, [1.0, 1.0]];
    for a in [-6.0f64, -3.0, 0.0, 3.0, 6.0] {
        for b in [-6.0f64, -3.0, 0.0, 3.0, 6.0] {
            candidates.push([a.exp(), b.exp()]);
        }
    }
    candidates
        .into_iter()
        .filter(|p| p[0] > 0.0 && p[1] > 0.0 && p[0].is_finite() && p[1].is_finite())
        .find_map(|p| {
            let v = log_target(p[0], p[1]);
            v.is_finite().then_some((p, v))
        })
}

fn run_chain<F>(
    log_target: &F,
    start: [f64; 2],
    cfg: &McmcConfig,
    mut rng: RngStream,
    overdisperse: bool,
) -> Result<(Vec<[f64; 2]>, ChainDiagnostics)>
where
    F: Fn(f64, f64) -> f64,
{
    // log-space target includes the Jacobian σ_c² σ_t²
    let lt = |x: [f64; 2]| log_target(x[0].exp(), x[1].exp()) + x[0] + x[1];

    let mut x = [start[0].ln(), start[1].ln()];
    let mut fx = lt(x);
    if overdisperse {
        let jitter = [
            x[0] + 0.5 * rng.standard_normal(),
            x[1] + 0.5 * rng.standard_normal(),
        ];
        let fj = lt(jitter);
        if fj.is_finite() {
            x = jitter;
            fx = fj;
        }
    }
    if !fx.is_finite() {
        return Err(Error::McmcInit);
    }

    let mut scale = [0.5, 0.5];
    let mut factor = 1.0f64;
    let mut batch_accepts = 0usize;
    let mut batch_no = 0usize;
    let mut warm: Vec<[f64; 2]> = Vec::with_capacity(cfg.burn_in);
    let mut kept = Vec::with_capacity(cfg.retained_per_chain());
    let mut accepted_after = 0usize;

    for it in 0..cfg.iterations {
        let prop = [
            x[0] + factor * scale[0] * rng.standard_normal(),
            x[1] + factor * scale[1] * rng.standard_normal(),
        ];
        let fp = lt(prop);
        let u = rng.uniform();
        let accept = fp.is_finite() && (fp - fx >= 0.0 || u < (fp - fx).exp());
        if accept {
            x = prop;
            fx = fp;
        }

        if it < cfg.burn_in {
            warm.push(x);
            batch_accepts += accept as usize;
            if (it + 1) % ADAPT_BATCH == 0 {
                batch_no += 1;
                let rate = batch_accepts as f64 / ADAPT_BATCH as f64;
                batch_accepts = 0;
                if rate < 0.2 {
                    factor *= 0.7;
                } else if rate > 0.5 {
                    factor *= 1.4;
                } else {
                    factor *= ((rate - TARGET_ACCEPT) / (batch_no as f64).sqrt()).exp();
                }
                // re-estimate coordinate spreads from the latest half of the warm-up
                if batch_no.is_multiple_of(4) && warm.len() >= 200 {
                    let recent = &warm[warm.len() / 2..];
                    for (k, s) in scale.iter_mut().enumerate() {
                        let sd = std_dev(recent.iter().map(|p| p[k]));
                        if sd.is_finite() && sd > 1e-8 {
                            *s = 2.38 / 2f64.sqrt() * sd;
                            factor = factor.clamp(0.25, 4.0);
                        }
                    }
                }
            }
        } else {
            accepted_after += accept as usize;
            if (it - cfg.burn_in) % cfg.thin == cfg.thin - 1 {
                kept.push([x[0].exp(), x[1].exp()]);
            }
        }
    }

    let post = (cfg.iterations - cfg.burn_in).max(1);
    Ok((
        kept,
        ChainDiagnostics {
            acceptance_rate: accepted_after as f64 / post as f64,
            step_scale: [factor * scale[0], factor * scale[1]],
        },
    ))
}

fn std_dev(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = it.clone().count() as f64;
    let mean = it.clone().sum::<f64>() / n;
    (it.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn batch_means_se(xs: &[f64]) -> f64 {
    let batches = 20;
    let len = xs.len() / batches;
    if len < 2 {
        return std_dev(xs.iter().copied()) / (xs.len() as f64).sqrt();
    }
    let means: Vec<f64> = xs
        .chunks(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    std_dev(means.iter().copied()) / (batches as f64).sqrt()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Samples `(σ_c², σ_t²)` from the unnormalized log density `log_target`.
///
/// Chain `k` runs on `rng.child(k)`; chains after the first start from a
/// jittered copy of `init`. Chains run in parallel and are merged by index.
pub fn mcmc_sample_variances<F>(
    log_target: F,
    init: [f64; 2],
    cfg: &McmcConfig,
    rng: &RngStream,
) -> Result<McmcOutput>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    cfg.validate()?;
    let (start, _) = find_start(&log_target, init).ok_or(Error::McmcInit)?;
    let results: Vec<Result<(Vec<[f64; 2]>, ChainDiagnostics)>> = (0..cfg.chains)
        .into_par_iter()
        .map(|k| run_chain(&log_target, start, cfg, rng.child(k as u64), k > 0))
        .collect();

    let mut draws = Vec::with_capacity(cfg.chains * cfg.retained_per_chain());
    let mut chains = Vec::with_capacity(cfg.chains);
    let mut per_chain_logs: Vec<[Vec<f64>; 2]> = Vec::with_capacity(cfg.chains);
    for r in results {
        let (d, diag) = r?;
        per_chain_logs.push([
            d.iter().map(|p| p[0].ln()).collect(),
            d.iter().map(|p| p[1].ln()).collect(),
        ]);
        draws.extend(d);
        chains.push(diag);
    }

    let mut chains_agree = true;
    if cfg.chains > 1 {
        for k in 0..2 {
            let means: Vec<f64> = per_chain_logs
                .iter()
                .map(|c| c[k].iter().sum::<f64>() / c[k].len() as f64)
                .collect();
            let grand = means.iter().sum::<f64>() / means.len() as f64;
            let pooled_se = (per_chain_logs
                .iter()
                .map(|c| batch_means_se(&c[k]).powi(2))
                .sum::<f64>()
                / cfg.chains as f64)
                .sqrt();
            if means.iter().any(|m| (m - grand).abs() > 3.0 * pooled_se) {
                chains_agree = false;
            }
        }
    }

    let lc: Vec<f64> = draws.iter().map(|d| d[0].ln()).collect();
    let lt: Vec<f64> = draws.iter().map(|d| d[1].ln()).collect();
    Ok(McmcOutput {
        log_correlation: correlation(&lc, &lt),
        draws,
        chains,
        chains_agree,
    })
}
