//! Acceptance criteria. Each test prints one `ACCEPTANCE` line with its
//! verdict and the measured quantities, then asserts.
//!
//! ```bash
//! cargo test --release --test acceptance
//! ```

use std::io::Write;
use std::time::Instant;

use histbayes::data::{summarize, ExperimentSummary, GroupSummary};
use histbayes::frequentist::welch_test;
use histbayes::m0::{fit_inverse_gamma, m0_first_step, m0_log_likelihood, m0_log_marginal, m0_step1_log_target};
use histbayes::m1::{m1_init, m1_log_marginal, m1_update, NigHyper};
use histbayes::simulation::{Method, Scenario, CALIBRATED_LABEL};
use histbayes::special::{sample_inverse_gamma, student_t_sf};
use histbayes::{
    calibrate_threshold, decide, model_posterior, run_power_study, run_three_step, AnalysisConfig, Decision,
    Experiment, GroupSample, McmcConfig, ModelPosterior, QuadConfig, RngStream,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal};

fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!(
        "ACCEPTANCE criterion {criterion} [{}] {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    // bypass the harness' capture so the verdict always reaches the log
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn random_arm(rng: &mut ChaCha20Rng, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    let d = Normal::new(mean, sd).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ln_gamma_ref(x: f64) -> f64 {
    // Lanczos (g = 7, n = 9), independent of the library's implementation
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Per-arm predictive log density by direct integration: μ analytically,
/// then composite Simpson over u = ln σ².
fn m1_oracle(h: &NigHyper, s: &GroupSummary) -> f64 {
    let (n, k) = (s.n, h.kappa);
    let q = s.gamma + k * n * (s.mean - h.m).powi(2) / (k + n);
    let log_f = |u: f64| {
        let v = u.exp();
        let lik = -0.5 * n * (2.0 * std::f64::consts::PI * v).ln() + 0.5 * (k / (k + n)).ln() - q / (2.0 * v);
        let prior = h.alpha * h.beta.ln() - ln_gamma_ref(h.alpha) - (h.alpha + 1.0) * u - h.beta / v;
        lik + prior + u
    };
    let (a, b, m) = (-40.0, 40.0, 40_000usize);
    let step = (b - a) / m as f64;
    let terms: Vec<f64> = (0..=m)
        .map(|i| {
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            log_f(a + i as f64 * step) + f64::ln(w)
        })
        .collect();
    log_sum_exp(&terms) + (step / 3.0).ln()
}

#[test]
fn criterion_1_m1_marginal_matches_quadrature_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut arm_pair = || {
            let n1 = rng.gen_range(3..=10);
            let n2 = rng.gen_range(3..=10);
            let mean = rng.gen_range(-3.0..3.0);
            let sd = rng.gen_range(0.3..3.0);
            (
                summarize(&random_arm(&mut rng, n1, mean, sd)).unwrap(),
                {
                    let shift = rng.gen_range(-1.0..1.0);
                    summarize(&random_arm(&mut rng, n2, mean + shift, sd)).unwrap()
                },
            )
        };
        let (c1, c2) = arm_pair();
        let (t1, t2) = arm_pair();
        let (hc, ht) = (m1_init(&c1).unwrap(), m1_init(&t1).unwrap());
        let lib = m1_log_marginal(&hc, &c2) + m1_log_marginal(&ht, &t2);
        let oracle = m1_oracle(&hc, &c2) + m1_oracle(&ht, &t2);
        worst = worst.max(((lib - oracle) / oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && secs < 60.0;
    report(1, pass, &format!("M1 marginal vs quadrature oracle: max rel err {worst:.2e} (limit 1e-6), {secs:.1}s"));
    assert!(pass);
}

#[test]
fn criterion_2_pooling_identity() {
    let mut rng = ChaCha20Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n1 = rng.gen_range(2..=15);
        let n2 = rng.gen_range(1..=15);
        let mean = rng.gen_range(-10.0..10.0);
        let sd = rng.gen_range(0.1..5.0);
        let a = random_arm(&mut rng, n1, mean, sd);
        let b = random_arm(&mut rng, n2, mean + 1.0, sd);
        let step = m1_update(&m1_init(&summarize(&a).unwrap()).unwrap(), &summarize(&b).unwrap());
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let once = m1_init(&summarize(&all).unwrap()).unwrap();
        for (x, y) in [
            (step.m, once.m),
            (step.kappa, once.kappa),
            (step.alpha, once.alpha),
            (step.beta, once.beta),
        ] {
            worst = worst.max(((x - y) / y).abs());
        }
    }
    let pass = worst < 1e-12;
    report(2, pass, &format!("two-step NIG update vs one-shot on pooled data: max rel diff {worst:.2e} (limit 1e-12)"));
    assert!(pass);
}

/// Importance-sampling oracle for `Pr(y | M0)`: σ² from the fitted IG
/// priors, μ from its conditional prior, averaging the full likelihood.
fn m0_is_oracle(y: &ExperimentSummary, prior: &histbayes::m0::M0StepPrior, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gc = Gamma::new(prior.var_c.alpha_hat, 1.0 / prior.var_c.beta_hat).unwrap();
    let gt = Gamma::new(prior.var_t.alpha_hat, 1.0 / prior.var_t.beta_hat).unwrap();
    let src = prior.mu_source;
    let logs: Vec<f64> = (0..draws)
        .map(|_| {
            let sc2 = 1.0 / gc.sample(&mut rng);
            let st2 = 1.0 / gt.sample(&mut rng);
            let w = src.n_c * st2 + src.n_t * sc2;
            let mean = (st2 * src.sum_c + sc2 * src.sum_t) / w;
            let sd = (sc2 * st2 / w).sqrt();
            let mu = mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            m0_log_likelihood(mu, sc2, st2, y)
        })
        .collect();
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let vals: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    // (estimate, standard error), both scaled by exp(-shift)
    (mean.ln() + shift, (var / n).sqrt() / mean)
}

#[test]
fn criterion_3_m0_marginal_matches_importance_sampling() {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let mut worst_z: f64 = 0.0;
    let mut details = Vec::new();
    for k in 0..5 {
        let mut exp = |shift: f64| {
            let c = random_arm(&mut rng, 4, 3.0, 0.6);
            let t = random_arm(&mut rng, 4, 3.0 + shift, 1.5);
            Experiment::from_values("e", &c, &t).unwrap().summary()
        };
        let y1 = exp(0.0);
        let y2 = exp(0.3);
        let step = m0_first_step(&y1, &McmcConfig::analysis(), &RngStream::new(33, k)).unwrap();
        let q = m0_log_marginal(&y2, &step.prior, &QuadConfig::default()).unwrap();
        let (is_log, is_rel_se) = m0_is_oracle(&y2, &step.prior, 10_000_000, 3_000 + k);
        // compare on the natural scale: |exp(a - b) - 1| / relative SE
        let z = ((q.log_value - is_log).exp() - 1.0).abs() / is_rel_se;
        worst_z = worst_z.max(z);
        details.push(format!("{z:.2}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_z < 3.0 && secs < 600.0;
    report(
        3,
        pass,
        &format!(
            "M0 marginal vs 1e7-draw importance sampling: |z| = [{}] (limit 3), {secs:.1}s",
            details.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_mcmc_posterior_mean_and_ig_fit() {
    // n = 3 per arm
    let y = Experiment::from_values("n3", &[2.1, 2.9, 3.6], &[1.2, 4.0, 5.3]).unwrap().summary();

    // 2D grid oracle on log-variances; σ_c² ∝ x^{-5/2} in the tail so the
    // grid extends far to the right
    let (lo, hi, m) = (-25.0f64, 90.0f64, 3000usize);
    let h = (hi - lo) / m as f64;
    let mut log_num = Vec::with_capacity((m + 1) * (m + 1));
    let mut log_den = Vec::with_capacity((m + 1) * (m + 1));
    for i in 0..=m {
        let u = lo + i as f64 * h;
        for j in 0..=m {
            let v = lo + j as f64 * h;
            let l = m0_step1_log_target(u.exp(), v.exp(), &y).unwrap() + u + v;
            log_den.push(l);
            log_num.push(l + u);
        }
    }
    let oracle = (log_sum_exp(&log_num) - log_sum_exp(&log_den)).exp();

    // the tail leaves the sample mean with infinite variance; error shrinks
    // roughly as draws^(-1/3), hence the long run
    let cfg = McmcConfig {
        iterations: 5_000_000,
        burn_in: 10_000,
        thin: 1,
        chains: 8,
    };
    let target = |a: f64, b: f64| m0_step1_log_target(a, b, &y).unwrap_or(f64::NEG_INFINITY);
    let mut estimates = Vec::new();
    for seed in [1u64, 2, 3] {
        let out = histbayes::mcmc::mcmc_sample_variances(target, [1.0, 1.0], &cfg, &RngStream::new(seed, 0)).unwrap();
        let xs = out.coordinate(0);
        estimates.push(xs.iter().sum::<f64>() / xs.len() as f64);
    }
    let worst_mean = estimates.iter().map(|e| ((e - oracle) / oracle).abs()).fold(0.0, f64::max);

    let mut worst_fit: f64 = 0.0;
    let mut rng = RngStream::new(404, 0);
    for alpha in [2.5, 5.0, 20.0] {
        for beta in [0.5, 2.0, 50.0] {
            let draws: Vec<f64> = (0..100_000)
                .map(|_| sample_inverse_gamma(&mut rng, alpha, beta).unwrap())
                .collect();
            let f = fit_inverse_gamma(&draws).unwrap();
            worst_fit = worst_fit
                .max(((f.alpha_hat - alpha) / alpha).abs())
                .max(((f.beta_hat - beta) / beta).abs());
        }
    }
    let pass = worst_mean < 0.02 && worst_fit < 0.05;
    report(
        4,
        pass,
        &format!(
            "posterior mean of sigma_c^2 (n=3): grid {oracle:.4}, MCMC {:?}, max rel err {worst_mean:.4} (limit 0.02); \
             IG fit max rel err {worst_fit:.4} (limit 0.05)",
            estimates.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_welch_baseline() {
    let c = GroupSample::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let t = GroupSample::new(vec![2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
    let r = welch_test(&c, &t).unwrap();
    // hand-derived: se² = 2.5/5 + 10/5, df = se⁴ / ((0.5)²/4 + 2²/4)
    let stat = -3.0 / 2.5f64.sqrt();
    let df = 2.5f64.powi(2) / (0.25 / 4.0 + 4.0 / 4.0);
    let example_ok = (r.statistic - stat).abs() < 1e-3
        && (r.statistic + 1.8974).abs() < 1e-3
        && (r.df - df).abs() < 1e-3
        && (r.df - 5.8824).abs() < 1e-3
        && (r.p_value - 2.0 * student_t_sf(stat.abs(), df).unwrap()).abs() < 1e-12;

    let mut rng = ChaCha20Rng::seed_from_u64(505);
    let reps = 2000;
    let mut hits = 0;
    for _ in 0..reps {
        let c = GroupSample::new(random_arm(&mut rng, 10, 2.94, 0.6)).unwrap();
        let t = GroupSample::new(random_arm(&mut rng, 10, 2.94, 1.5)).unwrap();
        hits += welch_test(&c, &t).unwrap().rejects(0.05) as usize;
    }
    let rate = hits as f64 / reps as f64;
    let pass = example_ok && (0.035..=0.065).contains(&rate);
    report(
        5,
        pass,
        &format!(
            "Welch example t = {:.4}, df = {:.4}; null rejection rate {:.2}% over {reps} (band 3.5-6.5%)",
            r.statistic,
            r.df,
            100.0 * rate
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_similar_experiments_table() {
    let start = Instant::now();
    let cfg = AnalysisConfig::simulation();
    let n = 500;
    let published_thresholds = [0.672, 0.698, 0.660];
    let mut lines = Vec::new();
    let mut pass = true;

    let mut thresholds = Vec::new();
    for (k, (sigma, published)) in [0.6, 1.5, 3.0].into_iter().zip(published_thresholds).enumerate() {
        let null = Scenario::similar_experiments(0.0, sigma);
        let cal = calibrate_threshold(&null, n, &cfg, 6_000 + k as u64).unwrap();
        let ok = (cal.threshold - published).abs() <= 0.06;
        pass &= ok;
        thresholds.push(cal.threshold);
        // fresh null batch for the type I error of the 0.8 rule
        let study = run_power_study(&null, n, &[Method::Bayes], &cfg, 6_100 + k as u64, None).unwrap();
        let t1 = study.bayes_rate(0.8).rejection_rate;
        let ok_t1 = t1 <= 0.06;
        pass &= ok_t1;
        lines.push(format!(
            "sd_t3={sigma}: threshold {:.3} vs {published} ({}), type I at 0.8 {:.1}% ({})",
            cal.threshold,
            if ok { "ok" } else { "off" },
            100.0 * t1,
            if ok_t1 { "ok" } else { "high" }
        ));
    }

    // 30% effect: Bayes(0.5) beats Welch on experiment 3; rates near the published cells
    for (sigma, published_bayes, published_welch) in [(1.5, 0.828, 0.345), (3.0, 0.530, 0.144)] {
        let sc = Scenario::similar_experiments(0.3, sigma);
        let study = run_power_study(&sc, n, &[Method::Welch, Method::Bayes], &cfg, 6_200, None).unwrap();
        let b = study.bayes_rate(0.5).rejection_rate;
        let w = study.row("welch").unwrap().rejection_rate;
        let ok = b > w && (b - published_bayes).abs() <= 0.045 && (w - published_welch).abs() <= 0.045;
        pass &= ok;
        lines.push(format!(
            "delta=30% sd_t3={sigma}: Bayes(0.5) {:.1}% vs {:.1}, Welch {:.1}% vs {:.1} ({})",
            100.0 * b,
            100.0 * published_bayes,
            100.0 * w,
            100.0 * published_welch,
            if ok { "ok" } else { "off" }
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    report(6, pass, &format!("similar experiments, N={n}, {secs:.0}s: {}", lines.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_7_second_history_weighs_more() {
    let cfg = AnalysisConfig::simulation();
    let n = 500;
    let rate = |deltas: [f64; 3], seed: u64| {
        let st = run_power_study(&Scenario::shifted_effects(deltas), n, &[Method::Bayes], &cfg, seed, None).unwrap();
        st.bayes_rate(0.5)
    };
    let s6 = rate([0.5, 0.1, 0.0], 7_006);
    let s8 = rate([0.1, 0.1, 0.0], 7_008);
    let s9 = rate([0.1, 0.2, 0.0], 7_009);
    let diff = s9.rejection_rate - s8.rejection_rate;
    let se = (s8.mc_stderr.powi(2) + s9.mc_stderr.powi(2)).sqrt();
    let pass = diff > 2.0 * se;
    report(
        7,
        pass,
        &format!(
            "false rejections at 0.5: situation 6 {:.1}%, 8 {:.1}%, 9 {:.1}% (published 13.7/20.7/31.9); \
             9 - 8 = {:.1} points, 2 SE = {:.1}",
            100.0 * s6.rejection_rate,
            100.0 * s8.rejection_rate,
            100.0 * s9.rejection_rate,
            100.0 * diff,
            200.0 * se
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_invariance_suite() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = ChaCha20Rng::seed_from_u64(808);
    let exp = |rng: &mut ChaCha20Rng, d: f64| {
        Experiment::from_values("e", &random_arm(rng, 10, 2.94, 0.6), &random_arm(rng, 10, 2.94 + d, 1.5)).unwrap()
    };
    let cfg = AnalysisConfig::simulation();

    for case in 0..10 {
        let ys = [exp(&mut rng, 0.0), exp(&mut rng, 0.3), exp(&mut rng, 0.5)];
        let s: Vec<_> = ys.iter().map(|e| e.summary()).collect();

        // M1 shift invariance and scale equivariance of log marginals
        let m1 = |s: &[ExperimentSummary]| {
            let st = histbayes::m1::M1State::from_experiment(&s[0]).unwrap();
            let l2 = st.log_marginal(&s[1]);
            (l2, st.update(&s[1]).log_marginal(&s[2]))
        };
        let base = m1(&s);
        let shifted: Vec<_> = ys.iter().map(|e| e.shifted(7.5).summary()).collect();
        let sh = m1(&shifted);
        if (base.0 - sh.0).abs() > 1e-9 || (base.1 - sh.1).abs() > 1e-9 {
            failures.push(format!("case {case}: M1 shift"));
        }
        let scale = 3.7f64;
        let scaled: Vec<_> = ys.iter().map(|e| e.scaled(scale).summary()).collect();
        let sc = m1(&scaled);
        let n2 = s[1].control.n + s[1].treated.n;
        let n3 = s[2].control.n + s[2].treated.n;
        if (sc.0 - (base.0 - n2 * scale.ln())).abs() > 1e-9 || (sc.1 - (base.1 - n3 * scale.ln())).abs() > 1e-9 {
            failures.push(format!("case {case}: M1 scale"));
        }
        let swapped: Vec<_> = s.iter().map(|e| e.swapped()).collect();
        if m1(&swapped) != base {
            failures.push(format!("case {case}: M1 label swap"));
        }

        // full pipeline: label swap, determinism, sum-to-one
        let rs = RngStream::new(900 + case, 0);
        let a = run_three_step(&ys[0], &ys[1], &ys[2], &cfg, &rs).unwrap();
        let b = run_three_step(&ys[0].swapped(), &ys[1].swapped(), &ys[2].swapped(), &cfg, &rs).unwrap();
        let again = run_three_step(&ys[0], &ys[1], &ys[2], &cfg, &rs).unwrap();
        if a.final_posterior() != b.final_posterior() || a.step2_posterior != b.step2_posterior {
            failures.push(format!("case {case}: pipeline label swap"));
        }
        if a != again {
            failures.push(format!("case {case}: determinism"));
        }
        for p in [a.step2_posterior, a.final_posterior()] {
            if (p.pr_m0 + p.pr_m1 - 1.0).abs() > 1e-12 {
                failures.push(format!("case {case}: sum to one"));
            }
        }
    }

    // monotonicity of the model posterior in log Pr(y | M1)
    let mut prev = 0.0;
    for k in 0..200 {
        let p = model_posterior(-10.0, -20.0 + 0.1 * k as f64, ModelPosterior::new(0.3, 0.7).unwrap()).unwrap();
        if k > 0 && p.pr_m1 <= prev {
            failures.push(format!("posterior monotonicity at step {k}"));
        }
        prev = p.pr_m1;
    }

    // rejection rates are nonincreasing in the threshold on a fixed replication set
    let study = run_power_study(&Scenario::similar_experiments(0.3, 1.5), 100, &[Method::Bayes], &cfg, 88, None).unwrap();
    let rates: Vec<f64> = (0..=100).map(|i| study.bayes_rate(i as f64 / 100.0).rejection_rate).collect();
    if rates.windows(2).any(|w| w[1] > w[0]) {
        failures.push("threshold monotonicity".into());
    }

    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 300.0;
    report(
        8,
        pass,
        &format!(
            "shift/scale/label-swap/sum-to-one/monotonicity/determinism: {} violations, {secs:.1}s{}",
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(" ({})", failures.join("; ")) }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_real_data_values_are_rule_examples_only() {
    // The published real-data figures are used only to exercise the decision
    // rules; the raw measurements are not available.
    let bayes = decide(0.994, 0.8) == Decision::Reject;
    let welch = 0.042 < 0.05;
    let pass = bayes && welch;
    report(
        9,
        pass,
        "real-data figures (p = 0.042, Pr(M1|y) = 0.994) not reproducible without raw data; used as decision-rule examples only",
    );
    assert!(pass);
}

#[test]
fn calibrated_rule_controls_type_one_error_on_fresh_batch() {
    let cfg = AnalysisConfig::simulation();
    let null = Scenario::similar_experiments(0.0, 1.5);
    let cal = calibrate_threshold(&null, 500, &cfg, 61).unwrap();
    let study = run_power_study(&null, 1000, &[Method::Bayes], &cfg, 62, Some(cal.threshold)).unwrap();
    let r = study.row(CALIBRATED_LABEL).unwrap().rejection_rate;
    assert!((0.03..=0.07).contains(&r), "type I {r} at threshold {}", cal.threshold);
}
