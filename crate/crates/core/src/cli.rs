//! Command-line front end: `analyze`, `simulate` and `calibrate`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{AnalysisConfig, Experiment, ExperimentSummary, GroupSample};
use crate::error::Error;
use crate::frequentist::{pooled_welch_test, welch_test, TestResult};
use crate::sequential::{
    run_three_step, run_two_step, AnalysisResult, Decision, Diagnostics, LogMarginals,
    ModelPosterior,
};
use crate::simulation::{
    bayes_label, calibrate_threshold, run_power_study, Method, PowerRow, PowerStudy, Scenario,
    CALIBRATED_LABEL,
};
use crate::special::RngStream;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Failure surfaced to the shell with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            },
            message: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "histbayes",
    version,
    about = "Two-sample mean comparison borrowing strength from historical experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze one experiment of interest against one or two historical experiments.
    Analyze(AnalyzeArgs),
    /// Estimate rejection rates of each method for a simulated scenario.
    Simulate(SimulateArgs),
    /// Calibrate the posterior-probability threshold on a null scenario.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// First historical experiment (`group,value` CSV).
    #[arg(long)]
    pub exp1: PathBuf,
    /// Second historical experiment, or the experiment of interest with --two-step.
    #[arg(long)]
    pub exp2: PathBuf,
    /// Experiment of interest.
    #[arg(
        long,
        required_unless_present = "two_step",
        conflicts_with = "two_step"
    )]
    pub exp3: Option<PathBuf>,
    /// Use only --exp1 as history and --exp2 as the experiment of interest.
    #[arg(long, alias = "exp3-only-history")]
    pub two_step: bool,
    #[arg(long)]
    pub w1: Option<f64>,
    #[arg(long)]
    pub w2: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with analysis settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML scenario file.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub n_reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// TOML scenario file; the experiment of interest must have no effect.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub n_reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also write the calibration as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reads a `group,value` CSV holding one experiment.
pub fn ingest_experiment(path: &Path) -> CliResult<Experiment> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    parse_experiment(&text, &path.display().to_string())
}

/// Parses `group,value` CSV text; `label` names the experiment in messages.
pub fn parse_experiment(text: &str, label: &str) -> CliResult<Experiment> {
    let err = |line: u64, msg: String| CliError::input(format!("{label}:{line}: {msg}"));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let header: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if header != ["group", "value"] {
        return Err(err(
            1,
            format!(
                "expected header `group,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let (mut control, mut treated) = (Vec::new(), Vec::new());
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 2 {
            return Err(err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let value: f64 = rec[1]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| err(line, format!("value `{}` is not a finite number", &rec[1])))?;
        match rec[0].to_ascii_lowercase().as_str() {
            "control" => control.push(value),
            "treated" => treated.push(value),
            other => {
                return Err(err(
                    line,
                    format!("unknown group `{other}` (expected control or treated)"),
                ))
            }
        }
    }
    let arm = |name: &str, v: Vec<f64>| -> CliResult<GroupSample> {
        match v.len() {
            0 => Err(CliError::input(format!("{label}: missing {name} arm"))),
            1 => Err(CliError::input(format!(
                "{label}: {name} arm needs at least 2 values, found 1"
            ))),
            _ => GroupSample::new(v)
                .map_err(|e| CliError::input(format!("{label}: {name} arm: {e}"))),
        }
    };
    Ok(Experiment::new(
        label,
        arm("control", control)?,
        arm("treated", treated)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEcho {
    pub path: String,
    pub summary: ExperimentSummary,
}

/// Machine-readable output of `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    /// `three_step` or `two_step`.
    pub mode: String,
    /// Historical experiments first, experiment of interest last; unweighted.
    pub inputs: Vec<InputEcho>,
    pub config: AnalysisConfig,
    pub step2_posterior: ModelPosterior,
    pub step3_posterior: Option<ModelPosterior>,
    pub log_marginals: LogMarginals,
    pub decision: Decision,
    /// Welch test on the experiment of interest; absent if degenerate.
    pub welch: Option<TestResult>,
    /// Welch test on all experiments pooled; absent if degenerate.
    pub pooled_welch: Option<TestResult>,
    pub diagnostics: Diagnostics,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<(T, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let v =
        toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok((v, text))
}

fn effective_config(args: &AnalyzeArgs) -> CliResult<AnalysisConfig> {
    let mut cfg = match &args.config {
        Some(p) => read_toml::<AnalysisConfig>(p)?.0,
        None => AnalysisConfig::default(),
    };
    if let Some(w) = args.w1 {
        cfg.w1 = w;
    }
    if let Some(w) = args.w2 {
        cfg.w2 = w;
    }
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn build_report(args: &AnalyzeArgs) -> CliResult<ReportDocument> {
    let cfg = effective_config(args)?;
    let mut paths = vec![&args.exp1, &args.exp2];
    paths.extend(args.exp3.as_ref());
    let exps = paths
        .iter()
        .map(|p| ingest_experiment(p))
        .collect::<CliResult<Vec<_>>>()?;
    let rng = RngStream::new(cfg.seed, 0);
    let result: AnalysisResult = if args.two_step {
        run_two_step(&exps[0], &exps[1], &cfg, &rng)?
    } else {
        run_three_step(&exps[0], &exps[1], &exps[2], &cfg, &rng)?
    };
    let current = exps.last().expect("at least two experiments");
    Ok(ReportDocument {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        seed: cfg.seed,
        mode: if args.two_step {
            "two_step"
        } else {
            "three_step"
        }
        .to_string(),
        inputs: paths
            .iter()
            .zip(&exps)
            .map(|(p, e)| InputEcho {
                path: p.display().to_string(),
                summary: e.summary(),
            })
            .collect(),
        config: cfg,
        step2_posterior: result.step2_posterior,
        step3_posterior: result.step3_posterior,
        log_marginals: result.log_marginals,
        decision: result.decision,
        welch: welch_test(&current.control, &current.treated).ok(),
        pooled_welch: pooled_welch_test(&exps).ok(),
        diagnostics: result.diagnostics,
    })
}

/// Plain-text rendering of a report.
pub fn render_report(r: &ReportDocument) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "histbayes {} ({}, seed {})",
        r.tool_version,
        r.mode.replace('_', "-"),
        r.seed
    );
    for (i, e) in r.inputs.iter().enumerate() {
        let role = if i + 1 == r.inputs.len() {
            "interest"
        } else {
            "history"
        };
        let _ = writeln!(
            s,
            "  y{} [{role}] {}: control n={} mean={:.4} | treated n={} mean={:.4}",
            i + 1,
            e.path,
            e.summary.control.n,
            e.summary.control.mean,
            e.summary.treated.n,
            e.summary.treated.mean
        );
    }
    let _ = writeln!(s, "  weights w1={} w2={}", r.config.w1, r.config.w2);
    let post = |name: &str, p: &ModelPosterior| {
        format!(
            "  {name}: Pr(M0|y) = {:.4}  Pr(M1|y) = {:.4}\n",
            p.pr_m0, p.pr_m1
        )
    };
    s.push_str(&post("step 2", &r.step2_posterior));
    if let Some(p) = &r.step3_posterior {
        s.push_str(&post("step 3", p));
    }
    let verdict = match r.decision {
        Decision::Reject => "reject H0 (means differ)",
        Decision::Retain => "retain H0",
    };
    let _ = writeln!(
        s,
        "  decision at threshold {}: {verdict}",
        r.config.threshold
    );
    let test = |name: &str, t: &Option<TestResult>| match t {
        Some(t) => format!(
            "  {name}: t = {:.4}, df = {:.4}, p = {:.4}\n",
            t.statistic, t.df, t.p_value
        ),
        None => format!("  {name}: not available (zero variance)\n"),
    };
    s.push_str(&test("Welch, experiment of interest", &r.welch));
    s.push_str(&test("Welch, pooled experiments", &r.pooled_welch));
    for m in &r.diagnostics.mcmc {
        let _ = writeln!(
            s,
            "  mcmc step {}: acceptance {:.3}, log-variance correlation {:.3}{}",
            m.step,
            m.acceptance_rate,
            m.log_correlation,
            if m.chains_agree {
                ""
            } else {
                ", chains disagree"
            }
        );
    }
    for q in &r.diagnostics.quadrature {
        let _ = writeln!(
            s,
            "  quadrature step {}: relative error {:.2e} ({} evaluations)",
            q.step, q.rel_error, q.evals
        );
    }
    s
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize") + "\n"
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> CliResult<String> {
    let report = build_report(args)?;
    if let Some(out) = &args.out {
        write_file(out, &to_json(&report))?;
    }
    Ok(render_report(&report))
}

/// Scenario file: scenario fields at top level plus optional
/// `calibrated_threshold` and an `[analysis]` table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    pub calibrated_threshold: Option<f64>,
    pub analysis: AnalysisConfig,
    /// Hex SHA-256 of the file contents.
    pub sha256: String,
}

pub fn read_scenario(path: &Path) -> CliResult<ScenarioFile> {
    let (mut table, text) = read_toml::<toml::Table>(path)?;
    let bad = |e: String| CliError::input(format!("{}: {e}", path.display()));
    let calibrated_threshold = match table.remove("calibrated_threshold") {
        Some(v) => Some(v.try_into::<f64>().map_err(|e| bad(e.to_string()))?),
        None => None,
    };
    let analysis = match table.remove("analysis") {
        Some(v) => v
            .try_into::<AnalysisConfig>()
            .map_err(|e| bad(e.to_string()))?,
        None => AnalysisConfig::simulation(),
    };
    let scenario: Scenario = toml::Value::Table(table)
        .try_into()
        .map_err(|e| bad(e.to_string()))?;
    scenario.validate()?;
    analysis.validate()?;
    Ok(ScenarioFile {
        scenario,
        calibrated_threshold,
        analysis,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

fn power_csv(rows: &[&PowerRow]) -> String {
    let mut s = String::from("method,threshold,rejection_rate,n_replications,mc_stderr\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.method, r.threshold, r.rejection_rate, r.n_replications, r.mc_stderr
        );
    }
    s
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    seed: u64,
    n_reps: usize,
    scenario_sha256: &'a str,
    scenario: &'a Scenario,
    analysis: &'a AnalysisConfig,
    calibrated_threshold: f64,
    /// `scenario_file` or `null_counterpart`.
    calibration_source: &'a str,
    calibration_seed: Option<u64>,
    failures: usize,
    runtime_seconds: f64,
}

/// Seed family for in-run calibration, distinct from the study's own streams.
fn calibration_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_ca11_b8a7_e000
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<String> {
    let start = Instant::now();
    if args.n_reps < 100 {
        return Err(CliError::input("N ≥ 100 required"));
    }
    let file = read_scenario(&args.scenario)?;
    let cfg = file.analysis;
    let (threshold, source, cal_seed) = match file.calibrated_threshold {
        Some(t) => (t, "scenario_file", None),
        None => {
            let seed = calibration_seed(args.seed);
            let cal = calibrate_threshold(
                &file.scenario.null_counterpart(),
                args.n_reps.max(500),
                &cfg,
                seed,
            )?;
            (cal.threshold, "null_counterpart", Some(seed))
        }
    };
    let methods = [Method::Welch, Method::PooledWelch, Method::Bayes];
    let study: PowerStudy = run_power_study(
        &file.scenario,
        args.n_reps,
        &methods,
        &cfg,
        args.seed,
        Some(threshold),
    )?;

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::input(format!("{}: {e}", args.out_dir.display())))?;
    let pick = |names: &[String]| -> Vec<&PowerRow> {
        study
            .rows
            .iter()
            .filter(|r| names.contains(&r.method))
            .collect()
    };
    let families = [
        ("welch.csv", pick(&["welch".into()])),
        ("pooled_welch.csv", pick(&["pooled_welch".into()])),
        (
            "bayes_fixed.csv",
            pick(&[bayes_label(0.5), bayes_label(0.8)]),
        ),
        ("bayes_calibrated.csv", pick(&[CALIBRATED_LABEL.into()])),
    ];
    let mut summary = String::new();
    for (name, rows) in &families {
        write_file(&args.out_dir.join(name), &power_csv(rows))?;
        for r in rows {
            let _ = writeln!(
                summary,
                "{:<18} {:<8.4} {:>6.1}%  (± {:.1})",
                r.method,
                r.threshold,
                100.0 * r.rejection_rate,
                100.0 * r.mc_stderr
            );
        }
    }
    let manifest = Manifest {
        tool_version: TOOL_VERSION,
        seed: args.seed,
        n_reps: args.n_reps,
        scenario_sha256: &file.sha256,
        scenario: &file.scenario,
        analysis: &cfg,
        calibrated_threshold: threshold,
        calibration_source: source,
        calibration_seed: cal_seed,
        failures: study.failures,
        runtime_seconds: start.elapsed().as_secs_f64(),
    };
    write_file(&args.out_dir.join("manifest.json"), &to_json(&manifest))?;
    let _ = writeln!(
        summary,
        "calibrated threshold {threshold:.4} ({source}); {} failed replications",
        study.failures
    );
    Ok(summary)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> CliResult<String> {
    let file = read_scenario(&args.scenario)?;
    if file.scenario.deltas[2] != 0.0 {
        return Err(CliError::input("calibration requires a null scenario"));
    }
    let cal = calibrate_threshold(&file.scenario, args.n_reps, &file.analysis, args.seed)?;
    if let Some(out) = &args.out {
        write_file(out, &to_json(&cal))?;
    }
    Ok(format!(
        "calibrated threshold {:.4}\n  Monte Carlo 95% interval [{:.4}, {:.4}] from {} null replications ({} failed)\n",
        cal.threshold, cal.interval.0, cal.interval.1, cal.n_replications, cal.failures
    ))
}

pub fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    }
}
