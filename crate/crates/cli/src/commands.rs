use std::fs;
use std::path::Path;

use graphreach::anchors::{read_anchor_file, write_anchor_file, AnchorFileMeta};
use graphreach::graph::{save_graph, Graph, GraphFiles};
use graphreach::pipeline::{self, Prepared, RunOutcome};
use graphreach::tensor::{load_checkpoint, save_checkpoint};
use graphreach::train::{evaluate, init_params, make_splits, mean_std};
use graphreach::walks::{load_or_sample, WalkConfig};
use graphreach::{DatasetSpec, ExperimentConfig, ModelParams, Split, TaskKind, WalkSet};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::output::{self, emit, file_hash, io_failure, run_dir, sha256_hex, Metrics};
use crate::Failure;

const SWEEP_PARAMS: &[&str] = &["walks.length", "walks.per_node", "anchors.k"];

fn walk_config_hash(graph: &Graph, wc: &WalkConfig) -> String {
    sha256_hex(
        format!(
            "{}:{}:{}:{}",
            graph.content_hash(),
            wc.walks_per_node,
            wc.walk_length,
            wc.seed
        )
        .as_bytes(),
    )
}

fn prepend(path: &Path, header: &str) -> Result<(), Failure> {
    let body = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    fs::write(path, format!("{header}{body}")).map_err(|e| io_failure(path, e))
}

pub fn gen(cfg: &ExperimentConfig) -> Result<(), Failure> {
    if matches!(cfg.dataset, DatasetSpec::Files { .. }) {
        return Err(Failure::config(
            "gen needs a synthetic dataset (dataset.kind = communities or grid)",
        ));
    }
    let graph = pipeline::build_graph(&cfg.dataset)?;
    output::ensure_dir(&cfg.output)?;
    let name = cfg.dataset.name();
    let files = GraphFiles {
        edges: cfg.output.join(format!("{name}.edges")),
        attributes: None,
        labels: graph.labels().map(|_| cfg.output.join(format!("{name}.labels"))),
    };
    save_graph(&graph, &files)?;
    let header = format!("# nodes: {}\n# config_hash={}\n", graph.n(), cfg.hash());
    prepend(&files.edges, &header)?;
    if let Some(labels) = &files.labels {
        prepend(labels, &header)?;
    }
    let record = json!({
        "dataset": name,
        "nodes": graph.n(),
        "edges": graph.edge_count(),
        "edges_file": files.edges,
        "labels_file": files.labels,
        "graph_hash": graph.content_hash(),
    });
    let mut metrics = Metrics::open(&cfg.output, cfg, false)?;
    metrics.record("gen", record.clone())?;
    metrics.finish()?;
    emit(&record);
    Ok(())
}

/// Walks for one run seed on the run's walk graph, cached in the run directory.
fn cached_walks(cfg: &ExperimentConfig, graph: &Graph, seed: u64) -> Result<(Graph, WalkConfig, WalkSet), Failure> {
    let data = make_splits(graph, cfg.task, cfg.setting, &cfg.split, seed)?;
    let wc = pipeline::walk_config(cfg, &data.walk_graph, seed)?;
    let dir = run_dir(cfg, seed);
    output::ensure_dir(&dir)?;
    let walks = load_or_sample(&dir.join("walks.bin"), &data.walk_graph, &wc)?;
    Ok((data.walk_graph, wc, walks))
}

pub fn walks(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let graph = pipeline::build_graph(&cfg.dataset)?;
    let mut metrics = Metrics::open(&cfg.output, cfg, false)?;
    for seed in cfg.run_seeds() {
        let (walk_graph, wc, _) = cached_walks(cfg, &graph, seed)?;
        let record = json!({
            "seed": seed,
            "walks_per_node": wc.walks_per_node,
            "walk_length": wc.walk_length,
            "walk_config_hash": walk_config_hash(&walk_graph, &wc),
            "file": run_dir(cfg, seed).join("walks.bin"),
        });
        metrics.record("walks", record.clone())?;
        emit(&record);
    }
    metrics.finish()
}

pub fn anchors(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let graph = pipeline::build_graph(&cfg.dataset)?;
    let mut metrics = Metrics::open(&cfg.output, cfg, false)?;
    for seed in cfg.run_seeds() {
        let (_, _, walks) = cached_walks(cfg, &graph, seed)?;
        let set = pipeline::select_anchors(cfg, &walks, seed)?;
        let path = run_dir(cfg, seed).join(output::ANCHORS);
        write_anchor_file(
            &path,
            &set,
            &AnchorFileMeta {
                seed,
                config_hash: cfg.hash(),
            },
        )?;
        let record = json!({
            "seed": seed,
            "strategy": set.strategy().name(),
            "k": set.k(),
            "anchors": set.nodes(),
            "file": path,
        });
        metrics.record("anchors", record.clone())?;
        emit(&record);
    }
    metrics.finish()
}

/// Writes the anchor file, checkpoint and manifest for a trained run.
fn save_run(cfg: &ExperimentConfig, out: &RunOutcome) -> Result<(), Failure> {
    let seed = out.summary.seed;
    let dir = run_dir(cfg, seed);
    output::ensure_dir(&dir)?;
    let anchors = dir.join(output::ANCHORS);
    write_anchor_file(
        &anchors,
        &out.prepared.anchors,
        &AnchorFileMeta {
            seed,
            config_hash: cfg.hash(),
        },
    )?;
    let ckpt = dir.join(output::CHECKPOINT);
    save_checkpoint(&ckpt, &out.params.to_named())?;
    let wc = out.prepared.walk_config;
    let manifest = json!({
        "format": 1,
        "config_hash": cfg.hash(),
        "seed": seed,
        "config": output::config_json(cfg),
        "model": cfg.model,
        "checkpoint": output::CHECKPOINT,
        "checkpoint_sha256": file_hash(&ckpt)?,
        "anchors_file": output::ANCHORS,
        "anchors_sha256": file_hash(&anchors)?,
        "walk_config": {
            "walks_per_node": wc.walks_per_node,
            "walk_length": wc.walk_length,
            "seed": wc.seed,
        },
        "walk_config_hash": walk_config_hash(&out.prepared.data.walk_graph, &wc),
        "summary": out.summary,
    });
    output::write_json(&dir.join(output::MANIFEST), &manifest)
}

fn train_run(cfg: &ExperimentConfig, graph: &Graph, seed: u64, metrics: &mut Metrics) -> Result<RunOutcome, Failure> {
    let out = pipeline::run(cfg, graph, seed)?;
    for rec in &out.history {
        metrics.record(
            "epoch",
            json!({ "seed": seed, "epoch": rec.epoch, "loss": rec.loss, "val_auc": rec.val_auc }),
        )?;
    }
    metrics.record("run", serde_json::to_value(&out.summary).expect("summary serializes"))?;
    save_run(cfg, &out)?;
    Ok(out)
}

fn summary_record(cfg: &ExperimentConfig, test: &[f64], val: &[f64]) -> Value {
    let (tm, ts) = mean_std(test);
    let (vm, vs) = mean_std(val);
    json!({
        "dataset": cfg.dataset.name(),
        "task": cfg.task.name(),
        "setting": cfg.setting.name(),
        "runs": test.len(),
        "test_auc_mean": tm,
        "test_auc_std": ts,
        "val_auc_mean": vm,
        "val_auc_std": vs,
    })
}

pub fn train(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let graph = pipeline::build_graph(&cfg.dataset)?;
    let mut metrics = Metrics::open(&cfg.output, cfg, true)?;
    let (mut test, mut val) = (Vec::new(), Vec::new());
    for seed in cfg.run_seeds() {
        let out = train_run(cfg, &graph, seed, &mut metrics)?;
        emit(&json!({ "kind": "run", "summary": out.summary }));
        test.push(out.summary.test_auc);
        val.push(out.summary.val_auc);
    }
    let summary = summary_record(cfg, &test, &val);
    metrics.record("summary", summary.clone())?;
    metrics.finish()?;
    emit(&summary);
    Ok(())
}

/// Rebuilds the run's inputs from the config and loads its checkpoint,
/// refusing checkpoints written under a different config or inputs.
fn load_run(cfg: &ExperimentConfig, graph: &Graph, seed: u64) -> Result<(Prepared, ModelParams), Failure> {
    let dir = run_dir(cfg, seed);
    let manifest = output::read_json(&dir.join(output::MANIFEST))?;
    let recorded = manifest["config_hash"].as_str().unwrap_or_default();
    if recorded != cfg.hash() {
        return Err(Failure::config(format!(
            "{} was written under config {recorded}, current config is {}",
            dir.display(),
            cfg.hash()
        )));
    }
    let prepared = pipeline::prepare(cfg, graph, seed)?;
    let (anchors, _) = read_anchor_file(&dir.join(output::ANCHORS))?;
    if anchors.nodes() != prepared.anchors.nodes() {
        return Err(Failure::data(format!(
            "anchor file in {} does not match the config",
            dir.display()
        )));
    }
    let wc_hash = walk_config_hash(&prepared.data.walk_graph, &prepared.walk_config);
    if manifest["walk_config_hash"].as_str() != Some(wc_hash.as_str()) {
        return Err(Failure::data(format!(
            "walk config in {} does not match the config",
            dir.display()
        )));
    }
    let template = init_params(&cfg.model, &prepared.inputs, &prepared.data, seed)?;
    let params = ModelParams::from_named(&template, load_checkpoint(&dir.join(output::CHECKPOINT))?)?;
    Ok((prepared, params))
}

pub fn eval(cfg: &ExperimentConfig, split: Split) -> Result<(), Failure> {
    let graph = pipeline::build_graph(&cfg.dataset)?;
    let mut metrics = Metrics::open(&cfg.output, cfg, false)?;
    for seed in cfg.run_seeds() {
        let (prepared, params) = load_run(cfg, &graph, seed)?;
        let auc = evaluate(&prepared.inputs, &params, &cfg.model, &prepared.data, split)?;
        let record = json!({ "seed": seed, "split": split, "auc": auc });
        metrics.record("eval", record.clone())?;
        emit(&record);
    }
    metrics.finish()
}

pub fn attack(cfg: &ExperimentConfig) -> Result<(), Failure> {
    if cfg.task == TaskKind::Nc {
        return Err(Failure::config("attack needs a pair task (task = lp or pnc)"));
    }
    let graph = pipeline::build_graph(&cfg.dataset)?;
    let mut metrics = Metrics::open(&cfg.output, cfg, false)?;
    let mut deltas = Vec::new();
    for seed in cfg.run_seeds() {
        let (prepared, params) = if run_dir(cfg, seed).join(output::MANIFEST).exists() {
            load_run(cfg, &graph, seed)?
        } else {
            let out = train_run(cfg, &graph, seed, &mut metrics)?;
            (out.prepared, out.params)
        };
        let summary = pipeline::attack(cfg, &prepared, &params, seed)?;
        deltas.push(summary.delta);
        let mut record = serde_json::to_value(&summary).expect("attack summary serializes");
        record["seed"] = json!(seed);
        metrics.record("attack", record.clone())?;
        emit(&record);
    }
    let (mean, std) = mean_std(&deltas);
    let record = json!({ "runs": deltas.len(), "delta_mean": mean, "delta_std": std });
    metrics.record("attack_summary", record.clone())?;
    metrics.finish()?;
    emit(&record);
    Ok(())
}

fn sweep_job(cfg: &ExperimentConfig, param: &str, value: &str) -> Result<Value, Failure> {
    let graph = pipeline::build_graph(&cfg.dataset)?;
    let mut metrics = Metrics::open(&cfg.output, cfg, true)?;
    let (mut test, mut val) = (Vec::new(), Vec::new());
    for seed in cfg.run_seeds() {
        let out = train_run(cfg, &graph, seed, &mut metrics)?;
        test.push(out.summary.test_auc);
        val.push(out.summary.val_auc);
    }
    let mut summary = summary_record(cfg, &test, &val);
    metrics.record("summary", summary.clone())?;
    metrics.finish()?;
    summary["param"] = json!(param);
    summary["value"] = json!(value);
    summary["job_config_hash"] = json!(cfg.hash());
    summary["test_auc"] = json!(test);
    Ok(summary)
}

pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[String], jobs: usize) -> Result<(), Failure> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(Failure::config(format!(
            "cannot sweep '{param}' (expected one of {})",
            SWEEP_PARAMS.join(", ")
        )));
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut job = cfg.clone();
            job.set(param, v).map_err(|e| Failure::config(e.to_string()))?;
            job.validate().map_err(|e| Failure::config(e.to_string()))?;
            job.output = cfg.output.join("sweep").join(format!("{param}={v}"));
            Ok((v.as_str(), job))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::config(format!("cannot start {jobs} jobs: {e}")))?;
    let results: Vec<Result<Value, Failure>> =
        pool.install(|| configs.par_iter().map(|(v, job)| sweep_job(job, param, v)).collect());
    let mut metrics = Metrics::open(&cfg.output, cfg, false)?;
    for r in results {
        let record = r?;
        metrics.record("sweep", record.clone())?;
        emit(&record);
    }
    metrics.finish()
}
