//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use gems_core::bench::metrics::{eval_structure, kl_gaussian, norm2_diff, MetricReport};
use gems_core::bench::runner::{run_experiment, ExperimentConfig, Method};
use gems_core::engine::{GemsTrace, GicPolicy};
use gems_core::ggm::{edge_list_with_weights, gems_ggm, GgmConfig, GgmModel, PenaltyGrid};
use gems_core::glm::mcem::{gems_glm, GlmConfig};
use gems_core::io::{ingest_csv, read_schema, write_atomic, Ingested};
use gems_core::mixed::forest::{learn_sd_forest, ForestMode};
use gems_core::mixed::mi::{all_pair_weights_pairwise, EdgePenalty};
use gems_core::mixed::model::fit_marginals;
use gems_core::{GemsError, MixedDataset, VarKind};

use crate::manifest::{self, Manifest, Versions};
use crate::{BenchArgs, InputArgs, LearnForestArgs, MetricsArgs, Mode, Penalty, SelectGgmArgs, SelectGlmArgs};

pub struct Context {
    pub out: PathBuf,
    /// Resolved root seed.
    pub seed: u64,
    /// Whether the seed came from the command line.
    pub seed_given: bool,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    GemsError::InvalidInput(msg.into()).into()
}

fn load(input: &InputArgs) -> Result<Ingested> {
    let schema = input
        .schema
        .as_deref()
        .map(read_schema)
        .transpose()
        .with_context(|| "reading the schema sidecar")?;
    Ok(ingest_csv(&input.data, &input.na, schema.as_ref())?)
}

fn inputs(input: &InputArgs) -> Vec<String> {
    std::iter::once(&input.data)
        .chain(input.schema.as_ref())
        .map(|p| p.display().to_string())
        .collect()
}

fn put(dir: &Path, name: &str, bytes: &[u8]) -> Result<String> {
    write_atomic(&dir.join(name), bytes)?;
    Ok(name.to_string())
}

fn forest_mode(m: Mode) -> ForestMode {
    match m {
        Mode::Forest => ForestMode::Forest,
        Mode::Tree => ForestMode::Tree,
    }
}

pub fn select_ggm(ctx: &Context, a: &SelectGgmArgs) -> Result<()> {
    if !(a.tol > 0.0) {
        return Err(invalid("--tol must be positive"));
    }
    let (names, xo) = match load(&a.input)? {
        Ingested::Numeric { names, matrix } => (names, matrix),
        Ingested::Mixed(ds) => {
            let bad: Vec<&str> = ds
                .columns()
                .iter()
                .filter(|c| c.kind.is_categorical())
                .map(|c| c.name.as_str())
                .collect();
            return Err(invalid(format!("select-ggm needs numeric columns; non-numeric: {}", bad.join(", "))));
        }
    };
    let mut config = GgmConfig {
        gamma: a.gamma,
        ..GgmConfig::default()
    };
    config.grid = match &a.lambda_grid {
        Some(v) => {
            if v.is_empty() || v.iter().any(|r| !(*r > 0.0)) {
                return Err(invalid("--lambda-grid needs positive penalties"));
            }
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v.dedup();
            PenaltyGrid::Fixed(v)
        }
        None => {
            if a.lambda_count == 0 || !(a.lambda_min_ratio > 0.0 && a.lambda_min_ratio < 1.0) {
                return Err(invalid("--lambda-count must be positive and --lambda-min-ratio in (0, 1)"));
            }
            PenaltyGrid::Auto {
                count: a.lambda_count,
                min_ratio: a.lambda_min_ratio,
            }
        }
    };
    config.gems.tol_q = a.tol;
    config.gems.tol_g = a.tol;
    config.gems.max_iter = a.max_iter;
    config.gems.gic_policy = if a.strict { GicPolicy::Strict } else { GicPolicy::Warn };

    let res = gems_ggm(&xo, &config)?;
    log::info!(
        "selected {} edges, GIC {:.4}, {} iterations",
        res.model.graph.num_edges(),
        res.gic,
        res.trace.iterations()
    );

    let mut edges = csv::Writer::from_writer(Vec::new());
    edges.write_record(["i", "j", "from", "to", "omega"])?;
    for (i, j, w) in edge_list_with_weights(&res.model) {
        edges.write_record([i.to_string(), j.to_string(), names[i].clone(), names[j].clone(), w.to_string()])?;
    }
    let model = json!({
        "names": names,
        "model": res.model,
        "gic": res.gic,
        "stop_reason": res.trace.stop_reason,
    });

    let outputs = vec![
        put(&ctx.out, "model.json", &serde_json::to_vec_pretty(&model)?)?,
        put(&ctx.out, "edges.csv", &edges.into_inner()?)?,
        put(&ctx.out, "trace.jsonl", res.trace.to_json_lines()?.as_bytes())?,
    ];
    manifest::write(
        &ctx.out,
        &Manifest {
            command: "select-ggm",
            seed: ctx.seed,
            versions: Versions::default(),
            config: json!({
                "na": a.input.na,
                "gamma": config.gamma,
                "grid": config.grid,
                "tol": a.tol,
                "max_iter": a.max_iter,
                "gic_policy": config.gems.gic_policy,
            }),
            inputs: inputs(&a.input),
            outputs,
        },
    )
}

#[derive(Serialize)]
struct GlmOutput<'a> {
    selected_groups: Vec<&'a str>,
    intercept: f64,
    coefficients: BTreeMap<&'a str, &'a [f64]>,
    forest: &'a gems_core::mixed::forest::SdForest,
    acceptance_rates: &'a [f64],
    trace: &'a GemsTrace,
}

/// Splits the response off a dataset, requiring it fully observed and binary.
fn split_response(ds: &MixedDataset, response: &str) -> Result<(MixedDataset, Vec<f64>)> {
    let j = ds
        .columns()
        .iter()
        .position(|c| c.name == response)
        .ok_or_else(|| invalid(format!("no column named '{response}'")))?;
    let (rest, cells, spec) = ds.split_column(j)?;
    if let VarKind::Categorical { levels } = spec.kind {
        if levels != 2 {
            return Err(invalid(format!("response '{response}' has {levels} levels; two required")));
        }
    }
    let y = cells
        .iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| invalid(format!("response missing in row {}", i + 1))))
        .collect::<Result<Vec<f64>>>()?;
    gems_core::glm::design::check_binary(&y)?;
    Ok((rest, y))
}

pub fn select_glm(ctx: &Context, a: &SelectGlmArgs) -> Result<()> {
    if a.m == 0 || a.lambda_count == 0 || !(a.lambda_min_ratio > 0.0 && a.lambda_min_ratio < 1.0) {
        return Err(invalid("-m and --lambda-count must be positive and --lambda-min-ratio in (0, 1)"));
    }
    let ds = load(&a.input)?.into_mixed()?;
    let (x, y) = split_response(&ds, &a.response)?;
    let mut config = GlmConfig {
        m: a.m,
        seed: ctx.seed,
        ..GlmConfig::default()
    };
    config.ms.lambda_count = a.lambda_count;
    config.ms.lambda_min_ratio = a.lambda_min_ratio;
    config.ms.forest_mode = forest_mode(a.mode);
    config.gems.max_iter = a.max_iter;

    let res = gems_glm(&x, &y, &config)?;
    let names: Vec<&str> = x.columns().iter().map(|c| c.name.as_str()).collect();
    let selected = res.glm.selected();
    log::info!("selected {} of {} predictors", selected.len(), names.len());
    let out = GlmOutput {
        selected_groups: selected.iter().map(|&j| names[j]).collect(),
        intercept: res.glm.intercept,
        coefficients: selected.iter().map(|&j| (names[j], res.glm.groups[j].as_slice())).collect(),
        forest: &res.forest,
        acceptance_rates: &res.acceptance,
        trace: &res.trace,
    };
    let owned: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    let outputs = vec![
        put(&ctx.out, "result.json", &serde_json::to_vec_pretty(&out)?)?,
        put(&ctx.out, "trace.jsonl", res.trace.to_json_lines()?.as_bytes())?,
        put(&ctx.out, "forest.dot", res.forest.to_dot(Some(&owned)).as_bytes())?,
    ];
    manifest::write(
        &ctx.out,
        &Manifest {
            command: "select-glm",
            seed: ctx.seed,
            versions: Versions::default(),
            config: json!({ "na": a.input.na, "response": a.response, "glm": config }),
            inputs: inputs(&a.input),
            outputs,
        },
    )
}

/// Numeric matrix of a fully observed dataset.
fn complete_matrix(ds: &MixedDataset) -> Option<DMatrix<f64>> {
    ds.is_complete()
        .then(|| DMatrix::from_fn(ds.n(), ds.width(), |i, j| ds.get(i, j).expect("complete")))
}

pub fn learn_forest(ctx: &Context, a: &LearnForestArgs) -> Result<()> {
    let ds = load(&a.input)?.into_mixed()?;
    let penalty = match a.penalty {
        Penalty::Bic => EdgePenalty::Bic,
        Penalty::None => EdgePenalty::None,
    };
    let mut weights = Vec::new();
    let mut skipped = Vec::new();
    for w in all_pair_weights_pairwise(&ds, penalty)? {
        match w {
            Ok(w) => weights.push(w),
            Err(e) => skipped.push(e),
        }
    }
    for e in &skipped {
        log::warn!("pair excluded: {e}");
    }
    let kinds = ds.kinds();
    let mut forest = learn_sd_forest(&kinds, &weights, forest_mode(a.mode))?;
    // Marginals need complete rows; with missing cells only the skeleton is
    // reported.
    if let Some(x) = complete_matrix(&ds) {
        forest = fit_marginals(&forest, &x)?;
    }
    let names: Vec<String> = ds.columns().iter().map(|c| c.name.clone()).collect();
    let edges: Vec<_> = forest
        .edges
        .iter()
        .map(|&(u, v)| {
            let w = weights.iter().find(|w| (w.u, w.v) == (u, v));
            json!({
                "u": u, "v": v, "from": names[u], "to": names[v],
                "mi": w.map(|w| w.mi), "penalized": w.map(|w| w.penalized),
            })
        })
        .collect();
    let doc = json!({
        "names": names,
        "edges": edges,
        "excluded_pairs": skipped,
        "forest": forest,
    });
    let outputs = vec![
        put(&ctx.out, "forest.json", &serde_json::to_vec_pretty(&doc)?)?,
        put(&ctx.out, "forest.dot", forest.to_dot(Some(&names)).as_bytes())?,
    ];
    manifest::write(
        &ctx.out,
        &Manifest {
            command: "learn-forest",
            seed: ctx.seed,
            versions: Versions::default(),
            config: json!({ "na": a.input.na, "penalty": penalty, "mode": forest_mode(a.mode) }),
            inputs: inputs(&a.input),
            outputs,
        },
    )
}

pub fn bench(ctx: &Context, a: &BenchArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| invalid(format!("bad experiment config: {e}")))?;
    if let Some(r) = a.replicates {
        config.replicates = r;
    }
    if let Some(ms) = &a.methods {
        config.methods = ms.iter().map(|m| m.parse::<Method>()).collect::<gems_core::Result<_>>()?;
    }
    if ctx.seed_given {
        config.seed = ctx.seed;
    }
    config.validate()?;
    // The manifest goes first so an interrupted run can be resumed from it.
    let manifest = Manifest {
        command: "bench",
        seed: config.seed,
        versions: Versions::default(),
        config: serde_json::to_value(&config)?,
        inputs: vec![a.config.display().to_string()],
        outputs: vec!["replicates.jsonl".into(), "summary.csv".into(), "results.json".into()],
    };
    manifest::write(&ctx.out, &manifest)?;

    let results = run_experiment(&config, Some(&ctx.out), a.resume)?;
    put(&ctx.out, "results.json", &serde_json::to_vec_pretty(&results)?)?;

    print!("{}", results.summary_csv()?);
    let failed = results.records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        anyhow::bail!("{failed} of {} replicate runs failed", results.records.len());
    }
    Ok(())
}

/// An edge set with, for model files, the fitted distribution.
struct Structure {
    edges: Vec<(usize, usize)>,
    p: Option<usize>,
    model: Option<GgmModel>,
}

fn read_structure(path: &Path) -> Result<Structure> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value = serde_json::from_str(&text)?;
        // Accept both the select-ggm output and a bare model.
        let model: GgmModel = serde_json::from_value(v.get("model").cloned().unwrap_or(v))
            .map_err(|e| invalid(format!("{}: not a model file: {e}", path.display())))?;
        return Ok(Structure {
            edges: model.graph.edges().collect(),
            p: Some(model.graph.p()),
            model: Some(model),
        });
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid(format!("{}: no '{name}' column", path.display())))
    };
    let (ci, cj) = (col("i")?, col("j")?);
    let mut edges = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let parse = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|_| invalid(format!("{}: bad vertex '{}'", path.display(), &rec[k])))
        };
        let (i, j) = (parse(ci)?, parse(cj)?);
        if i == j {
            return Err(invalid(format!("{}: self-loop at {i}", path.display())));
        }
        edges.push((i.min(j), i.max(j)));
    }
    Ok(Structure { edges, p: None, model: None })
}

pub fn metrics(ctx: &Context, a: &MetricsArgs) -> Result<()> {
    let est = read_structure(&a.estimated)?;
    let tru = read_structure(&a.truth)?;
    let p = a
        .p
        .or(tru.p)
        .or(est.p)
        .ok_or_else(|| invalid("--p is required for edge-list inputs"))?;
    if p < 2 {
        return Err(invalid("at least two vertices are required"));
    }
    for s in [&est, &tru] {
        if s.p.is_some_and(|q| q != p) || s.edges.iter().any(|&(_, j)| j >= p) {
            return Err(invalid(format!("structures do not fit {p} vertices")));
        }
    }
    let mut report: MetricReport = eval_structure(&est.edges, &tru.edges, p * (p - 1) / 2)?;
    if let (Some(e), Some(t)) = (&est.model, &tru.model) {
        let (se, st) = (e.params.sigma()?, t.params.sigma()?);
        report.kl = Some(kl_gaussian(&t.params.mu, &st, &e.params.mu, &se)?);
        report.norm2 = Some(norm2_diff(&e.params.omega, &t.params.omega)?);
    }
    let bytes = serde_json::to_vec_pretty(&report)?;
    println!("{}", String::from_utf8_lossy(&bytes));
    let outputs = vec![put(&ctx.out, "metrics.json", &bytes)?];
    manifest::write(
        &ctx.out,
        &Manifest {
            command: "metrics",
            seed: ctx.seed,
            versions: Versions::default(),
            config: json!({ "p": p, "kl_direction": "truth || estimate" }),
            inputs: vec![a.estimated.display().to_string(), a.truth.display().to_string()],
            outputs,
        },
    )
}
