//! Report assembly: one JSON document with the manifest, results, and
//! content hashes, plus a flat CSV series for plotting.
//!
//! Hashes cover only reproducible content: the manifest minus delivery
//! details (worker count, output path) and the results minus wall-clock
//! fields. Reruns of the same manifest and seed produce byte-identical
//! hashed regions at any worker count.

use crate::manifest::ExperimentManifest;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;

/// Remove volatile keys (wall-clock measurements) recursively.
fn strip_volatile(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("runtime_secs");
            for (_, child) in map.iter_mut() {
                strip_volatile(child);
            }
        }
        Value::Array(items) => {
            for child in items {
                strip_volatile(child);
            }
        }
        _ => {}
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Hash of the worker-independent manifest region.
pub fn manifest_hash(m: &ExperimentManifest) -> String {
    let mut v = serde_json::to_value(m).expect("manifest serializes");
    if let Value::Object(map) = &mut v {
        map.remove("workers");
        map.remove("out");
    }
    sha256_hex(serde_json::to_string(&v).unwrap().as_bytes())
}

/// Hash of the results with volatile fields removed.
pub fn results_hash(results: &Value) -> String {
    let mut v = results.clone();
    strip_volatile(&mut v);
    sha256_hex(serde_json::to_string(&v).unwrap().as_bytes())
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub manifest: ExperimentManifest,
    pub manifest_sha256: String,
    pub results: Value,
    pub results_sha256: String,
    pub meta: Meta,
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub wall_secs: f64,
    pub workers: usize,
}

impl Report {
    pub fn new<R: Serialize>(
        manifest: ExperimentManifest,
        results: &R,
        wall_secs: f64,
        workers: usize,
    ) -> Self {
        let results = serde_json::to_value(results).expect("results serialize");
        let manifest_sha256 = manifest_hash(&manifest);
        let results_sha256 = results_hash(&results);
        Self {
            schema_version: manifest.schema_version,
            manifest,
            manifest_sha256,
            results,
            results_sha256,
            meta: Meta { wall_secs, workers },
        }
    }

    pub fn write(&self, dir: &Path, csv: &str) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        let mut f = fs::File::create(dir.join("report.json"))?;
        f.write_all(json.as_bytes())?;
        f.write_all(b"\n")?;
        let mut c = fs::File::create(dir.join("series.csv"))?;
        c.write_all(csv.as_bytes())?;
        Ok(())
    }
}

/// CSV schema version; golden-file tests pin the headers below.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub fn csv_header(kind: &str) -> &'static str {
    match kind {
        "moments" => "eps,k,trials,mean_x,stderr_x,mean_x2,stderr_x2,p_positive,stderr_p",
        "scaling" => "eps,trials,mean_x,stderr_x,p_positive,stderr_p",
        "nesting" => "eps,lambda,trials,coarse_positive,fine_checked,fine_positive,violations",
        "covariance" => "scale_k,scale_l,cov,stderr",
        "excursion" => "m,p_ge,stderr",
        "ldp" => "n,count,freq,exact_prob",
        "oracle" => "count,prob",
        _ => "",
    }
}

pub fn csv_line(kind: &str) -> String {
    format!("# ap-trace series schema v{CSV_SCHEMA_VERSION} kind={kind}\n")
}
