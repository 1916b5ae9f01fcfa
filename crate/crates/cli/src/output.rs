//! Output files: metrics JSONL, run manifests and content hashes.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use graphreach::ExperimentConfig;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const METRICS: &str = "metrics.jsonl";
pub const CHECKPOINT: &str = "params.ckpt";
pub const MANIFEST: &str = "manifest.json";
pub const ANCHORS: &str = "anchors.txt";

pub fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::data(format!("io error on {}: {e}", path.display()))
}

pub fn ensure_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| io_failure(path, e))
}

pub fn run_dir(cfg: &ExperimentConfig, seed: u64) -> PathBuf {
    cfg.output.join(format!("run-{seed}"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| io_failure(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn config_json(cfg: &ExperimentConfig) -> Value {
    let map: Map<String, Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    Value::Object(map)
}

/// Appends JSON records, one per line. Every record carries `kind` and
/// `config_hash`.
pub struct Metrics {
    out: BufWriter<File>,
    path: PathBuf,
    hash: String,
}

impl Metrics {
    /// Opens `dir/metrics.jsonl`, truncating it when `fresh`.
    pub fn open(dir: &Path, cfg: &ExperimentConfig, fresh: bool) -> Result<Self, Failure> {
        ensure_dir(dir)?;
        let path = dir.join(METRICS);
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(&path)
            .map_err(|e| io_failure(&path, e))?;
        Ok(Metrics {
            out: BufWriter::new(file),
            path,
            hash: cfg.hash(),
        })
    }

    pub fn record(&mut self, kind: &str, fields: Value) -> Result<(), Failure> {
        let mut obj = Map::new();
        obj.insert("kind".into(), json!(kind));
        obj.insert("config_hash".into(), json!(self.hash));
        if let Value::Object(rest) = fields {
            obj.extend(rest);
        }
        let line = Value::Object(obj).to_string();
        writeln!(self.out, "{line}").map_err(|e| io_failure(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), Failure> {
        self.out.flush().map_err(|e| io_failure(&self.path, e))
    }
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("json values serialize");
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

pub fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Prints one JSON object to stdout.
pub fn emit(value: &Value) {
    println!("{value}");
}
