//! Machine-readable report emission.
//!
//! Every CSV carries a `schema` column and is append-safe: writing to
//! an existing file first checks that its header matches this build's
//! schema, then appends rows, so successive runs accumulate instead of
//! clobbering each other. The JSON manifest is a whole-run snapshot and
//! is replaced atomically instead of appended.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use flore_core::stream::MetricsReport;

use crate::config::{ExperimentConfig, SeedSet, SCHEMA_VERSION};
use crate::pipeline::CellReport;
use crate::{CliError, CliResult};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CURVES_FILE: &str = "training_curves.csv";
pub const RIP_FILE: &str = "rip.csv";
pub const ABLATION_FILE: &str = "ablation.csv";
pub const ABLATION_CDF_FILE: &str = "ablation_cdf.csv";
pub const ROBUSTNESS_FILE: &str = "robustness.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

const METRICS_HEADER: &[&str] = &[
    "schema",
    "estimator",
    "budget_bytes",
    "status",
    "aae",
    "are",
    "wmre",
    "entropy_ae",
    "hh_f1",
    "hh_count",
    "summarize_ns_per_item",
    "recover_ms",
    "trace_seed",
    "sketch_seed",
    "model_seed",
    "train_seed",
    "recovery_seed",
    "perturb_seed",
    "note",
];

const CURVES_HEADER: &[&str] = &[
    "schema",
    "estimator",
    "budget_bytes",
    "epoch",
    "con",
    "rec",
    "inv",
    "ort",
    "sp",
    "total",
];

const RIP_HEADER: &[&str] = &[
    "schema",
    "kind",
    "m",
    "n",
    "s",
    "trials",
    "build_seed",
    "probe_seed",
    "distance",
];

const ABLATION_HEADER: &[&str] = &[
    "schema",
    "variant",
    "estimator",
    "budget_bytes",
    "aae",
    "are",
    "wmre",
    "entropy_ae",
    "hh_f1",
    "hh_count",
    "weight_con",
    "weight_rec",
    "weight_inv",
    "weight_ort",
    "weight_sp",
    "trace_seed",
    "sketch_seed",
    "model_seed",
    "train_seed",
    "recovery_seed",
    "perturb_seed",
];

const ABLATION_CDF_HEADER: &[&str] =
    &["schema", "variant", "rank", "abs_err", "rel_err"];

const ROBUSTNESS_HEADER: &[&str] = &[
    "schema",
    "scenario",
    "factor",
    "estimator",
    "budget_bytes",
    "base_are",
    "shifted_are",
    "degradation_pct",
    "trace_seed",
    "sketch_seed",
    "model_seed",
    "train_seed",
    "recovery_seed",
    "perturb_seed",
];

/// Renders a float with full round-trip precision so re-parsing a
/// report reproduces the metric bit-exactly.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Appends `rows` to `path`, creating it with `header` when missing and
/// refusing to mix schemas when the existing header differs.
pub fn append_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let expected = header.join(",");
    let mut need_header = true;
    if path.exists() {
        let file = File::open(path)?;
        let mut first = String::new();
        BufReader::new(file).read_line(&mut first)?;
        let found = first.trim_end_matches(['\r', '\n']);
        if !found.is_empty() {
            if found != expected {
                return Err(CliError::runtime(format!(
                    "{} holds a different schema (header {found:?}); \
                     move it aside before appending",
                    path.display()
                )));
            }
            need_header = false;
        }
    }
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    if need_header {
        writer.write_record(header)?;
    }
    for row in rows {
        if row.len() != header.len() {
            return Err(CliError::runtime(format!(
                "internal report bug: row width {} vs header width {}",
                row.len(),
                header.len()
            )));
        }
        writer.write_record(row)?;
    }
    writer
        .flush()
        .map_err(|e| CliError::runtime(format!("flushing {}: {e}", path.display())))?;
    Ok(())
}

fn seed_fields(seeds: &SeedSet) -> Vec<String> {
    vec![
        seeds.trace.to_string(),
        seeds.sketch.to_string(),
        seeds.model.to_string(),
        seeds.train.to_string(),
        seeds.recovery.to_string(),
        seeds.perturb.to_string(),
    ]
}

/// One metrics row per experiment cell; failed cells carry empty metric
/// fields and the error text in `note`.
pub fn metrics_row(cell: &CellReport, seeds: &SeedSet) -> Vec<String> {
    let mut row = vec![
        SCHEMA_VERSION.to_string(),
        cell.estimator.name().to_string(),
        cell.budget_bytes.to_string(),
    ];
    match &cell.outcome {
        Ok(m) => {
            row.push("ok".into());
            row.extend([
                num(m.metrics.aae),
                num(m.metrics.are),
                num(m.metrics.wmre),
                num(m.metrics.entropy_ae),
                num(m.metrics.hh_f1),
                m.metrics.hh_count.to_string(),
                num(m.summarize_ns_per_item),
                num(m.recover_ms),
            ]);
            row.extend(seed_fields(seeds));
            row.push(m.note.clone().unwrap_or_default());
        }
        Err(e) => {
            row.push("error".into());
            row.extend(std::iter::repeat_n(String::new(), 8));
            row.extend(seed_fields(seeds));
            row.push(e.clone());
        }
    }
    row
}

/// Writes cell metrics into `metrics.csv` under `dir`.
pub fn write_metrics(dir: &Path, cells: &[CellReport], seeds: &SeedSet) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(METRICS_FILE);
    let rows: Vec<Vec<String>> = cells.iter().map(|c| metrics_row(c, seeds)).collect();
    append_csv(&path, METRICS_HEADER, &rows)?;
    Ok(path)
}

fn curve_rows(estimator: &str, budget_bytes: usize, report: &flore_core::model::TrainReport) -> Vec<Vec<String>> {
    report
        .history
        .iter()
        .enumerate()
        .map(|(epoch, rec)| {
            vec![
                SCHEMA_VERSION.to_string(),
                estimator.to_string(),
                budget_bytes.to_string(),
                epoch.to_string(),
                num(rec.con),
                num(rec.rec),
                num(rec.inv),
                num(rec.ort),
                num(rec.sp),
                num(rec.total),
            ]
        })
        .collect()
}

/// Writes per-epoch loss histories into `training_curves.csv`.
pub fn write_training_curves(dir: &Path, cells: &[CellReport]) -> CliResult<Option<PathBuf>> {
    let mut rows = Vec::new();
    for cell in cells {
        let Ok(metrics) = &cell.outcome else { continue };
        let Some(report) = &metrics.training else { continue };
        rows.extend(curve_rows(cell.estimator.name(), cell.budget_bytes, report));
    }
    if rows.is_empty() {
        return Ok(None);
    }
    ensure_dir(dir)?;
    let path = dir.join(CURVES_FILE);
    append_csv(&path, CURVES_HEADER, &rows)?;
    Ok(Some(path))
}

/// Appends one training run's loss history (the standalone `train`
/// subcommand's path into the same curves file).
pub fn append_training_curve(
    dir: &Path,
    estimator: &str,
    budget_bytes: usize,
    report: &flore_core::model::TrainReport,
) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(CURVES_FILE);
    append_csv(&path, CURVES_HEADER, &curve_rows(estimator, budget_bytes, report))?;
    Ok(path)
}

/// One restricted-isometry benchmark result.
#[derive(Debug, Clone, Serialize)]
pub struct RipRow {
    pub kind: String,
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub trials: usize,
    pub build_seed: u64,
    pub probe_seed: u64,
    pub distance: f64,
}

/// Writes benchmark rows into `rip.csv`.
pub fn write_rip(dir: &Path, rows: &[RipRow]) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(RIP_FILE);
    let rendered: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.kind.clone(),
                r.m.to_string(),
                r.n.to_string(),
                r.s.to_string(),
                r.trials.to_string(),
                r.build_seed.to_string(),
                r.probe_seed.to_string(),
                num(r.distance),
            ]
        })
        .collect();
    append_csv(&path, RIP_HEADER, &rendered)?;
    Ok(path)
}

/// Summary of one ablation variant run, with its accuracy metrics
/// flattened for direct CSV/JSON emission.
#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub budget_bytes: usize,
    pub aae: f64,
    pub are: f64,
    pub wmre: f64,
    pub entropy_ae: f64,
    pub hh_f1: f64,
    pub hh_count: usize,
    /// The con/rec/inv/ort/sp weights the variant actually trained with.
    pub weights: [f64; 5],
}

impl AblationRow {
    pub fn new(
        variant: String,
        budget_bytes: usize,
        metrics: &MetricsReport,
        weights: [f64; 5],
    ) -> Self {
        AblationRow {
            variant,
            budget_bytes,
            aae: metrics.aae,
            are: metrics.are,
            wmre: metrics.wmre,
            entropy_ae: metrics.entropy_ae,
            hh_f1: metrics.hh_f1,
            hh_count: metrics.hh_count,
            weights,
        }
    }
}

/// Per-key error quantiles of one variant, sorted for direct CDF
/// plotting.
#[derive(Debug, Clone, Serialize)]
pub struct AblationCdfRow {
    pub variant: String,
    pub rank: usize,
    pub abs_err: f64,
    pub rel_err: f64,
}

/// Writes the ablation summary and its paired CDF data.
pub fn write_ablation(
    dir: &Path,
    rows: &[AblationRow],
    cdf: &[AblationCdfRow],
    seeds: &SeedSet,
) -> CliResult<(PathBuf, PathBuf)> {
    ensure_dir(dir)?;
    let summary = dir.join(ABLATION_FILE);
    let rendered: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                r.variant.clone(),
                "flore".to_string(),
                r.budget_bytes.to_string(),
                num(r.aae),
                num(r.are),
                num(r.wmre),
                num(r.entropy_ae),
                num(r.hh_f1),
                r.hh_count.to_string(),
            ];
            row.extend(r.weights.iter().map(|w| num(*w)));
            row.extend(seed_fields(seeds));
            row
        })
        .collect();
    append_csv(&summary, ABLATION_HEADER, &rendered)?;

    let cdf_path = dir.join(ABLATION_CDF_FILE);
    let rendered: Vec<Vec<String>> = cdf
        .iter()
        .map(|r| {
            vec![
                SCHEMA_VERSION.to_string(),
                r.variant.clone(),
                r.rank.to_string(),
                num(r.abs_err),
                num(r.rel_err),
            ]
        })
        .collect();
    append_csv(&cdf_path, ABLATION_CDF_HEADER, &rendered)?;
    Ok((summary, cdf_path))
}

/// One robustness degradation measurement; the schema is identical
/// across scenarios.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessRow {
    pub scenario: String,
    pub factor: f64,
    pub estimator: String,
    pub budget_bytes: usize,
    pub base_are: f64,
    pub shifted_are: f64,
    pub degradation_pct: f64,
}

/// Writes degradation rows into `robustness.csv`.
pub fn write_robustness(dir: &Path, rows: &[RobustnessRow], seeds: &SeedSet) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(ROBUSTNESS_FILE);
    let rendered: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![
                SCHEMA_VERSION.to_string(),
                r.scenario.clone(),
                num(r.factor),
                r.estimator.clone(),
                r.budget_bytes.to_string(),
                num(r.base_are),
                num(r.shifted_are),
                num(r.degradation_pct),
            ];
            row.extend(seed_fields(seeds));
            row
        })
        .collect();
    append_csv(&path, ROBUSTNESS_HEADER, &rendered)?;
    Ok(path)
}

/// The JSON run manifest: configuration echo plus everything measured.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub schema: u32,
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub trace: TraceSummary,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<CellManifest>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rip: Vec<RipRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ablation: Vec<AblationRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub robustness: Vec<RobustnessRow>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceSummary {
    pub items: usize,
    pub distinct_keys: usize,
    pub total_value: i64,
}

#[derive(Debug, Serialize)]
pub struct CellManifest {
    pub estimator: String,
    pub budget_bytes: usize,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub are: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wmre: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_ae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hh_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summarize_ns_per_item: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recover_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CellManifest {
    pub fn from_report(cell: &CellReport) -> Self {
        match &cell.outcome {
            Ok(m) => CellManifest {
                estimator: cell.estimator.name().to_string(),
                budget_bytes: cell.budget_bytes,
                status: "ok".into(),
                aae: Some(m.metrics.aae),
                are: Some(m.metrics.are),
                wmre: Some(m.metrics.wmre),
                entropy_ae: Some(m.metrics.entropy_ae),
                hh_f1: Some(m.metrics.hh_f1),
                summarize_ns_per_item: Some(m.summarize_ns_per_item),
                recover_ms: Some(m.recover_ms),
                note: m.note.clone(),
            },
            Err(e) => CellManifest {
                estimator: cell.estimator.name().to_string(),
                budget_bytes: cell.budget_bytes,
                status: "error".into(),
                aae: None,
                are: None,
                wmre: None,
                entropy_ae: None,
                hh_f1: None,
                summarize_ns_per_item: None,
                recover_ms: None,
                note: Some(e.clone()),
            },
        }
    }
}

/// Replaces `manifest.json` atomically (write-then-rename).
pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> CliResult<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join(MANIFEST_FILE);
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::runtime(format!("manifest serialization: {e}")))?;
    {
        let mut file = File::create(&tmp)?;
        file.write_all(json.as_bytes())?;
        file.write_all(b"\n")?;
    }
    fs::rename(&tmp, &path)
        .map_err(|e| CliError::runtime(format!("installing {}: {e}", path.display())))?;
    Ok(path)
}
