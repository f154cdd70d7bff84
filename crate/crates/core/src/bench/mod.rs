//! Simulation generators, evaluation metrics and the replicate runner.

pub mod generators;
pub mod metrics;
pub mod runner;

pub use generators::{apply_missing, gen_mixed_scene, gen_precision, sample_mvn, MissingSpec, MixedScene, PrecisionModel};
pub use metrics::{eval_structure, kl_gaussian, mcc, norm2_diff, MetricReport};
pub use runner::{run_experiment, ExperimentConfig, ExperimentResults, Method, Scenario};
