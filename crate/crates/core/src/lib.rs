//! Bayesian comparison of two Gaussian means with unknown, unequal variances,
//! using one or two historical experiments as prior information.
//!
//! The first historical experiment turns Jeffreys priors into proper priors
//! for both models (equal means, M0, and different means, M1). The second
//! historical experiment is scored against a flat model prior, and the
//! resulting model posterior becomes the model prior for the experiment of
//! interest. M1 is conjugate; M0 uses MCMC, inverse-gamma fits and 2D
//! cubature. Decisions compare `Pr(M1 | y)` with a threshold.
//!
//! ```no_run
//! use histbayes::{run_three_step, AnalysisConfig, Experiment, RngStream};
//!
//! let y1 = Experiment::from_values("y1", &[2.9, 3.1, 2.4, 3.3], &[3.9, 4.6, 2.8, 5.1])?;
//! let y2 = Experiment::from_values("y2", &[3.0, 2.6, 3.4, 2.7], &[4.4, 3.1, 5.0, 3.8])?;
//! let y3 = Experiment::from_values("y3", &[2.8, 3.2, 2.9, 3.1], &[4.0, 4.8, 3.5, 4.4])?;
//! let cfg = AnalysisConfig::default();
//! let result = run_three_step(&y1, &y2, &y3, &cfg, &RngStream::new(cfg.seed, 0))?;
//! println!("Pr(M1 | y) = {:.3}", result.final_posterior().pr_m1);
//! # Ok::<(), histbayes::Error>(())
//! ```

pub mod cli;
pub mod data;
pub mod error;
pub mod frequentist;
pub mod m0;
pub mod m1;
pub mod mcmc;
pub mod quad;
pub mod sequential;
pub mod simulation;
pub mod special;

pub use data::{
    AnalysisConfig, Experiment, ExperimentSummary, GroupSample, GroupSummary, McmcConfig,
    QuadConfig,
};
pub use error::{Error, Result};
pub use frequentist::{pooled_welch_test, welch_test, TestResult};
pub use sequential::{
    decide, model_posterior, run_three_step, run_two_step, AnalysisResult, Decision, ModelPosterior,
};
pub use simulation::{
    calibrate_threshold, generate_scenario, run_power_study, Method, PowerRow, Scenario,
};
pub use special::RngStream;
