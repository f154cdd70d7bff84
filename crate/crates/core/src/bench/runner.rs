//! Seeded replicate runner for the simulation studies.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{default_grid, mglasso, missglasso_select, MissGlassoOptions};
use crate::bench::generators::{apply_missing, gen_mixed_scene, gen_precision, sample_mvn, true_edges, MissingSpec, PrecisionModel};
use crate::bench::metrics::{edge_support, eval_structure, kl_gaussian, norm2_diff, MetricReport};
use crate::error::{GemsError, Result};
use crate::gaussian::GaussianParams;
use crate::ggm::{gems_ggm, GgmConfig, PenaltyGrid};
use crate::glasso::GlassoOptions;
use crate::glm::mcem::{gems_glm, imputation_baseline, GlmConfig};
use crate::io::write_atomic;
use crate::rng::{derive_seed, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Gems,
    MissGlasso,
    MGlasso,
    ImputationGroupLasso,
    /// GEMS for logistic regression with `m` completions per row.
    GemsM(usize),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Gems => write!(f, "gems"),
            Method::MissGlasso => write!(f, "missglasso"),
            Method::MGlasso => write!(f, "mglasso"),
            Method::ImputationGroupLasso => write!(f, "imputation-grouplasso"),
            Method::GemsM(m) => write!(f, "gems{m}"),
        }
    }
}

impl FromStr for Method {
    type Err = GemsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gems" => Ok(Method::Gems),
            "missglasso" => Ok(Method::MissGlasso),
            "mglasso" => Ok(Method::MGlasso),
            "imputation-grouplasso" | "imputation" => Ok(Method::ImputationGroupLasso),
            _ => s
                .strip_prefix("gems")
                .and_then(|m| m.parse::<usize>().ok())
                .filter(|m| *m > 0)
                .map(Method::GemsM)
                .ok_or_else(|| GemsError::InvalidInput(format!("unknown method {s:?}"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Gaussian graphical model with a masked sample.
    Ggm {
        model: PrecisionModel,
        p: usize,
        n: usize,
        missing: MissingSpec,
    },
    /// Logistic response on mixed predictors with MCAR masking.
    Glm { p: usize, q: usize, n: usize, rate: f64 },
}

fn default_replicates() -> usize {
    20
}
fn default_lambda_count() -> usize {
    20
}
fn default_ggm_min_ratio() -> f64 {
    0.01
}
fn default_glm_min_ratio() -> f64 {
    0.05
}
fn default_ggm_max_iter() -> usize {
    100
}
fn default_glm_max_iter() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_lambda_count")]
    pub lambda_count: usize,
    #[serde(default = "default_ggm_min_ratio")]
    pub ggm_lambda_min_ratio: f64,
    #[serde(default = "default_glm_min_ratio")]
    pub glm_lambda_min_ratio: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_ggm_max_iter")]
    pub ggm_max_iter: usize,
    #[serde(default = "default_glm_max_iter")]
    pub glm_max_iter: usize,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, methods: Vec<Method>, replicates: usize, seed: u64) -> Self {
        Self {
            scenario,
            methods,
            replicates,
            seed,
            lambda_count: default_lambda_count(),
            ggm_lambda_min_ratio: default_ggm_min_ratio(),
            glm_lambda_min_ratio: default_glm_min_ratio(),
            gamma: 0.0,
            ggm_max_iter: default_ggm_max_iter(),
            glm_max_iter: default_glm_max_iter(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(GemsError::InvalidInput("method list is empty".into()));
        }
        if self.replicates == 0 {
            return Err(GemsError::InvalidInput("replicates must be positive".into()));
        }
        let glm = matches!(self.scenario, Scenario::Glm { .. });
        for m in &self.methods {
            let for_glm = matches!(m, Method::ImputationGroupLasso | Method::GemsM(_));
            if glm != for_glm {
                return Err(GemsError::InvalidInput(format!("method {m} does not apply to this scenario")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    /// Successful replicates.
    pub n: usize,
    pub failed: usize,
    /// Set when a single replicate makes the standard deviation undefined.
    pub sd_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResults {
    pub fn mean(&self, method: Method, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.method == method && r.metric == metric)
            .map(|r| r.mean)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "metric", "mean", "sd", "n", "failed"])
            .map_err(|e| GemsError::Io(e.into()))?;
        for r in &self.summary {
            w.write_record([
                r.method.to_string(),
                r.metric.clone(),
                format!("{}", r.mean),
                format!("{}", r.sd),
                r.n.to_string(),
                r.failed.to_string(),
            ])
            .map_err(|e| GemsError::Io(e.into()))?;
        }
        let bytes = w.into_inner().map_err(|e| GemsError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Runs one method on one replicate.
pub fn run_replicate(config: &ExperimentConfig, replicate: usize, method: Method) -> Result<MetricReport> {
    let seed = derive_seed(config.seed, &[tag("replicate"), replicate as u64]);
    match &config.scenario {
        Scenario::Ggm { model, p, n, missing } => {
            let (omega, sigma) = gen_precision(*model, *p, seed)?;
            let x = sample_mvn(&DVector::zeros(*p), &sigma, *n, seed)?;
            let xo = apply_missing(&x, *missing, seed)?;
            let started = Instant::now();
            let params: GaussianParams = match method {
                Method::Gems => {
                    let cfg = GgmConfig {
                        grid: PenaltyGrid::Auto {
                            count: config.lambda_count,
                            min_ratio: config.ggm_lambda_min_ratio,
                        },
                        gamma: config.gamma,
                        gems: crate::engine::GemsConfig {
                            max_iter: config.ggm_max_iter,
                            ..Default::default()
                        },
                        ..GgmConfig::default()
                    };
                    gems_ggm(&xo, &cfg)?.model.params
                }
                Method::MissGlasso => {
                    let grid = default_grid(&xo, config.lambda_count, config.ggm_lambda_min_ratio)?;
                    missglasso_select(&xo, &grid, &MissGlassoOptions::default())?.params
                }
                Method::MGlasso => {
                    let grid = default_grid(&xo, config.lambda_count, config.ggm_lambda_min_ratio)?;
                    let opts = GlassoOptions {
                        max_iter: 2000,
                        tol: 1e-6,
                    };
                    mglasso(&xo, &grid, &opts)?.params
                }
                other => return Err(GemsError::InvalidInput(format!("method {other} does not apply"))),
            };
            let runtime = started.elapsed().as_secs_f64();
            let truth = true_edges(&omega);
            let est = edge_support(&params.omega, 1e-10);
            let mut report = eval_structure(&est, &truth, p * (p - 1) / 2)?;
            report.kl = Some(kl_gaussian(&DVector::zeros(*p), &sigma, &params.mu, &params.sigma()?)?);
            report.norm2 = Some(norm2_diff(&params.omega, &omega)?);
            report.runtime_s = runtime;
            Ok(report)
        }
        Scenario::Glm { p, q, n, rate } => {
            let scene = gen_mixed_scene(*p, *q, *n, *rate, seed)?;
            let ms = crate::glm::mcem::MsStepOptions {
                lambda_count: config.lambda_count,
                lambda_min_ratio: config.glm_lambda_min_ratio,
                ..Default::default()
            };
            let started = Instant::now();
            let model = match method {
                Method::ImputationGroupLasso => imputation_baseline(&scene.data, &scene.y, &ms)?,
                Method::GemsM(m) => {
                    let mut cfg = GlmConfig {
                        m,
                        ms,
                        seed: derive_seed(seed, &[tag("gems-glm")]),
                        ..GlmConfig::default()
                    };
                    cfg.gems.max_iter = config.glm_max_iter;
                    gems_glm(&scene.data, &scene.y, &cfg)?.glm
                }
                other => return Err(GemsError::InvalidInput(format!("method {other} does not apply"))),
            };
            let runtime = started.elapsed().as_secs_f64();
            let mut report = eval_structure(&model.selected(), &scene.truth, p + q)?;
            report.runtime_s = runtime;
            Ok(report)
        }
    }
}

const RECORDS_FILE: &str = "replicates.jsonl";

fn read_completed(dir: &Path) -> Result<Vec<ReplicateRecord>> {
    let path = dir.join(RECORDS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(GemsError::from))
        .collect()
}

/// Runs every (replicate, method) pair. With `out_dir`, each finished pair
/// is appended to `replicates.jsonl` and the summary is written to
/// `summary.csv`; with `resume`, pairs already recorded there are skipped.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>, resume: bool) -> Result<ExperimentResults> {
    config.validate()?;
    let mut records: Vec<ReplicateRecord> = Vec::new();
    if let (Some(dir), true) = (out_dir, resume) {
        records = read_completed(dir)?
            .into_iter()
            .filter(|r| r.replicate < config.replicates && config.methods.contains(&r.method))
            .collect();
    }
    let done: HashSet<(usize, Method)> = records.iter().map(|r| (r.replicate, r.method)).collect();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        if !resume {
            write_atomic(&dir.join(RECORDS_FILE), b"")?;
        }
    }
    let sink = match out_dir {
        Some(dir) => Some(Mutex::new(
            std::fs::OpenOptions::new().create(true).append(true).open(dir.join(RECORDS_FILE))?,
        )),
        None => None,
    };
    let todo: Vec<(usize, Method)> = (0..config.replicates)
        .flat_map(|r| config.methods.iter().map(move |m| (r, *m)))
        .filter(|k| !done.contains(k))
        .collect();
    let fresh: Vec<ReplicateRecord> = todo
        .par_iter()
        .map(|&(replicate, method)| {
            let rec = match run_replicate(config, replicate, method) {
                Ok(m) => ReplicateRecord {
                    replicate,
                    method,
                    metrics: Some(m),
                    error: None,
                },
                Err(e) => {
                    log::warn!("replicate {replicate} method {method} failed: {e}");
                    ReplicateRecord {
                        replicate,
                        method,
                        metrics: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            if let Some(s) = &sink {
                let line = serde_json::to_string(&rec)?;
                let mut f = s.lock().expect("record sink poisoned");
                writeln!(f, "{line}")?;
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    records.extend(fresh);
    records.sort_by_key(|r| (r.replicate, config.methods.iter().position(|m| *m == r.method)));
    let summary = summarize(&records, &config.methods);
    let results = ExperimentResults { records, summary };
    if let Some(dir) = out_dir {
        write_atomic(&dir.join("summary.csv"), results.summary_csv()?.as_bytes())?;
    }
    Ok(results)
}

fn summarize(records: &[ReplicateRecord], methods: &[Method]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &method in methods {
        let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
        let failed = mine.iter().filter(|r| r.metrics.is_none()).count();
        let ok: Vec<&MetricReport> = mine.iter().filter_map(|r| r.metrics.as_ref()).collect();
        let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for m in &ok {
            let mut put = |k: &'static str, v: f64| columns.entry(k).or_default().push(v);
            put("tp", m.tp as f64);
            put("fp", m.fp as f64);
            put("tpr", m.tpr);
            put("ppv", m.ppv);
            put("mcc", m.mcc);
            put("runtime_s", m.runtime_s);
            if let Some(v) = m.kl {
                put("kl", v);
            }
            if let Some(v) = m.norm2 {
                put("norm2", v);
            }
        }
        for name in ["tp", "fp", "tpr", "ppv", "mcc", "kl", "norm2", "runtime_s"] {
            let Some(vals) = columns.get(name) else { continue };
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let sd = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            out.push(SummaryRow {
                method,
                metric: name.to_string(),
                mean,
                sd,
                n: vals.len(),
                failed,
                sd_undefined: vals.len() == 1,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Gems, Method::MissGlasso, Method::MGlasso, Method::ImputationGroupLasso, Method::GemsM(30)] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("gems0".parse::<Method>().is_err());
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn empty_method_list_is_rejected() {
        let cfg = ExperimentConfig::new(
            Scenario::Ggm {
                model: PrecisionModel::Ar1,
                p: 5,
                n: 30,
                missing: MissingSpec::Mcar { rate: 0.1 },
            },
            vec![],
            1,
            0,
        );
        assert!(run_experiment(&cfg, None, false).is_err());
    }

    #[test]
    fn single_replicate_flags_sd() {
        let cfg = ExperimentConfig::new(
            Scenario::Ggm {
                model: PrecisionModel::Ar1,
                p: 5,
                n: 60,
                missing: MissingSpec::Mcar { rate: 0.1 },
            },
            vec![Method::Gems],
            1,
            7,
        );
        let r = run_experiment(&cfg, None, false).unwrap();
        let row = r.summary.iter().find(|s| s.metric == "mcc").unwrap();
        assert_eq!(row.sd, 0.0);
        assert!(row.sd_undefined);
    }
}
