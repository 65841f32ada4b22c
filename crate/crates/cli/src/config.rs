//! The experiment manifest: a TOML file with strict field checking.
//!
//! One manifest drives every subcommand. Unknown keys are rejected so a
//! typo cannot silently run a different experiment, and every section
//! has documented defaults so a minimal manifest stays short:
//!
//! ```toml
//! [trace.synthetic]
//! keys = 1024
//! items = 100000
//! distribution = "zipf"
//! alpha = 1.4
//!
//! [sweep]
//! budgets_kb = [16, 64]
//! estimators = ["cm", "flore"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flore_core::model::{CouplingKind, LossOptions, LossWeights, DiscrepancyKind, SegmentConditioning, TrainConfig};
use flore_core::em::EmConfig;
use flore_core::stream::{Distribution, SyntheticSpec};

use crate::{CliError, CliResult};

/// Version stamped into every report row and manifest this build emits.
pub const SCHEMA_VERSION: u32 = 1;

/// Top-level manifest. All sections except `trace` and `sweep` are
/// optional and fall back to their documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trace: TraceConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub rip: RipSection,
    #[serde(default)]
    pub seeds: SeedSet,
    #[serde(default)]
    pub output: OutputSection,
}

/// Where the stream comes from: a generated workload or a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceConfig {
    Synthetic(SyntheticSection),
    File(FileSection),
}

/// Generator parameters for a synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    /// Distinct keys in the workload.
    pub keys: usize,
    /// Stream length in items (each item carries value 1).
    pub items: u64,
    pub distribution: DistributionKind,
    /// Skew exponent for `zipf`, `zipf_icml`, and `pareto`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Scale floor for `pareto`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_m: Option<f64>,
    /// Log-mean for `lognormal`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Log-standard-deviation for `lognormal`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Rate for `exp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Key width in bytes.
    #[serde(default = "default_key_len")]
    pub key_len: usize,
    /// Shuffle ranks across key ids (default) instead of keeping the
    /// hottest key at id 0.
    #[serde(default = "default_true")]
    pub permute: bool,
}

/// A trace loaded from disk: UTF-8 lines of `<key-hex>,<value>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSection {
    pub path: PathBuf,
    #[serde(default = "default_key_len")]
    pub key_len: usize,
}

/// Frequency-profile families the generator understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Zipf,
    ZipfIcml,
    Pareto,
    Lognormal,
    Exp,
}

/// The estimator × memory grid to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Memory budgets in kilobytes, one experiment column each.
    pub budgets_kb: Vec<u64>,
    /// Estimators to run at every budget.
    pub estimators: Vec<EstimatorKind>,
}

/// Every estimator the experiment runner knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Count-min point queries.
    #[serde(rename = "cm")]
    Cm,
    /// Count-sketch median queries.
    #[serde(rename = "cs")]
    Cs,
    /// Conservative-update count-min point queries.
    #[serde(rename = "cu")]
    Cu,
    /// Augmented sketch: exact pre-filter over a count-min grid.
    #[serde(rename = "ag")]
    Ag,
    /// Count-min queries refined by multiplicative EM steps.
    #[serde(rename = "cm+em")]
    CmEm,
    /// Orthogonal matching pursuit on the sketch linear system.
    #[serde(rename = "omp")]
    Omp,
    /// Iterative least squares on the sketch linear system.
    #[serde(rename = "lsq")]
    Lsq,
    /// Generative recovery trained without ground truth.
    #[serde(rename = "flore")]
    Flore,
    /// Generative recovery trained against true frequencies.
    #[serde(rename = "flore-perfect")]
    FlorePerfect,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::Cm,
        EstimatorKind::Cs,
        EstimatorKind::Cu,
        EstimatorKind::Ag,
        EstimatorKind::CmEm,
        EstimatorKind::Omp,
        EstimatorKind::Lsq,
        EstimatorKind::Flore,
        EstimatorKind::FlorePerfect,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Cm => "cm",
            EstimatorKind::Cs => "cs",
            EstimatorKind::Cu => "cu",
            EstimatorKind::Ag => "ag",
            EstimatorKind::CmEm => "cm+em",
            EstimatorKind::Omp => "omp",
            EstimatorKind::Lsq => "lsq",
            EstimatorKind::Flore => "flore",
            EstimatorKind::FlorePerfect => "flore-perfect",
        }
    }

    /// True for the variants that train the generative model.
    pub fn is_generative(&self) -> bool {
        matches!(self, EstimatorKind::Flore | EstimatorKind::FlorePerfect)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture of the recovery model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_latent")]
    pub latent: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_hidden")]
    pub subnet_hidden: usize,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<SegmentsSection>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            latent: default_latent(),
            blocks: default_blocks(),
            subnet_hidden: default_hidden(),
            coupling: CouplingConfig::default(),
            segments: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CouplingConfig {
    #[default]
    Affine,
    Additive,
}

impl From<CouplingConfig> for CouplingKind {
    fn from(value: CouplingConfig) -> Self {
        match value {
            CouplingConfig::Affine => CouplingKind::Affine,
            CouplingConfig::Additive => CouplingKind::Additive,
        }
    }
}

/// Optional conditional-segment setup for the recovery model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentsSection {
    pub max_segments: usize,
    pub embed_dim: usize,
}

/// Training-loop settings for the generative estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Counter snapshots kept for training (first-in-first-out).
    #[serde(default = "default_window")]
    pub window: usize,
    /// Multiplicative refinement steps when building targets.
    #[serde(default = "default_em_steps")]
    pub em_steps: usize,
    /// Accept a refinement step only when it reduces the residual.
    #[serde(default = "default_true")]
    pub em_accept: bool,
    #[serde(default)]
    pub discrepancy: DiscrepancyConfig,
    #[serde(default)]
    pub weights: WeightsSection,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            window: default_window(),
            em_steps: default_em_steps(),
            em_accept: true,
            discrepancy: DiscrepancyConfig::default(),
            weights: WeightsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyConfig {
    #[default]
    Mmd,
    MomentMatch,
}

impl From<DiscrepancyConfig> for DiscrepancyKind {
    fn from(value: DiscrepancyConfig) -> Self {
        match value {
            DiscrepancyConfig::Mmd => DiscrepancyKind::Mmd,
            DiscrepancyConfig::MomentMatch => DiscrepancyKind::MomentMatch,
        }
    }
}

/// Objective-term weights; ablation variants rewrite these, and the
/// manifest echo records whatever was actually used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(default = "default_w_con")]
    pub con: f64,
    #[serde(default = "default_w_rec")]
    pub rec: f64,
    #[serde(default = "default_w_inv")]
    pub inv: f64,
    #[serde(default = "default_w_ort")]
    pub ort: f64,
    #[serde(default = "default_w_sp")]
    pub sp: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        let w = LossWeights::default();
        WeightsSection {
            con: w.con,
            rec: w.rec,
            inv: w.inv,
            ort: w.ort,
            sp: w.sp,
        }
    }
}

impl From<WeightsSection> for LossWeights {
    fn from(w: WeightsSection) -> Self {
        LossWeights {
            con: w.con,
            rec: w.rec,
            inv: w.inv,
            ort: w.ort,
            sp: w.sp,
        }
    }
}

/// Geometry for the restricted-isometry benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipSection {
    #[serde(default = "default_rip_m")]
    pub m: usize,
    #[serde(default = "default_rip_n")]
    pub n: usize,
    #[serde(default = "default_rip_s")]
    pub s: usize,
    #[serde(default = "default_rip_trials")]
    pub trials: usize,
    /// Rows of the sketch-operator grids (width follows from `m`).
    #[serde(default = "default_rip_rows")]
    pub grid_rows: usize,
    #[serde(default = "default_rip_matrix_seed")]
    pub matrix_seed: u64,
    #[serde(default = "default_rip_sketch_seed")]
    pub sketch_seed: u64,
    #[serde(default = "default_rip_probe_seed")]
    pub probe_seed: u64,
}

impl Default for RipSection {
    fn default() -> Self {
        RipSection {
            m: default_rip_m(),
            n: default_rip_n(),
            s: default_rip_s(),
            trials: default_rip_trials(),
            grid_rows: default_rip_rows(),
            matrix_seed: default_rip_matrix_seed(),
            sketch_seed: default_rip_sketch_seed(),
            probe_seed: default_rip_probe_seed(),
        }
    }
}

/// Every random choice in a run, named. Report rows carry all six so
/// any row can be reproduced from its own fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSet {
    #[serde(default = "default_seed_trace")]
    pub trace: u64,
    #[serde(default = "default_seed_sketch")]
    pub sketch: u64,
    #[serde(default = "default_seed_model")]
    pub model: u64,
    #[serde(default = "default_seed_train")]
    pub train: u64,
    #[serde(default = "default_seed_recovery")]
    pub recovery: u64,
    #[serde(default = "default_seed_perturb")]
    pub perturb: u64,
}

impl Default for SeedSet {
    fn default() -> Self {
        SeedSet {
            trace: default_seed_trace(),
            sketch: default_seed_sketch(),
            model: default_seed_model(),
            train: default_seed_train(),
            recovery: default_seed_recovery(),
            perturb: default_seed_perturb(),
        }
    }
}

impl SeedSet {
    /// Derives the whole set from one master seed (the `--seed` flag):
    /// each role gets a fixed tweak so roles stay decorrelated.
    pub fn from_master(master: u64) -> Self {
        SeedSet {
            trace: master,
            sketch: master ^ 0x736b_6574,
            model: master ^ 0x6d6f_6465,
            train: master ^ 0x7472_6169,
            recovery: master ^ 0x7265_636f,
            perturb: master ^ 0x7065_7274,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_output_dir(),
        }
    }
}

fn default_key_len() -> usize {
    4
}
fn default_true() -> bool {
    true
}
fn default_latent() -> usize {
    48
}
fn default_blocks() -> usize {
    3
}
fn default_hidden() -> usize {
    32
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    16
}
fn default_lr() -> f64 {
    1e-3
}
fn default_window() -> usize {
    64
}
fn default_em_steps() -> usize {
    5
}
fn default_w_con() -> f64 {
    LossWeights::default().con
}
fn default_w_rec() -> f64 {
    LossWeights::default().rec
}
fn default_w_inv() -> f64 {
    LossWeights::default().inv
}
fn default_w_ort() -> f64 {
    LossWeights::default().ort
}
fn default_w_sp() -> f64 {
    LossWeights::default().sp
}
fn default_rip_m() -> usize {
    128
}
fn default_rip_n() -> usize {
    1024
}
fn default_rip_s() -> usize {
    16
}
fn default_rip_trials() -> usize {
    2000
}
fn default_rip_rows() -> usize {
    8
}
fn default_rip_matrix_seed() -> u64 {
    21
}
fn default_rip_sketch_seed() -> u64 {
    17
}
fn default_rip_probe_seed() -> u64 {
    35
}
fn default_seed_trace() -> u64 {
    1
}
fn default_seed_sketch() -> u64 {
    2
}
fn default_seed_model() -> u64 {
    3
}
fn default_seed_train() -> u64 {
    4
}
fn default_seed_recovery() -> u64 {
    5
}
fn default_seed_perturb() -> u64 {
    6
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses and validates a manifest file.
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Parses and validates a manifest from TOML text.
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::config(format!("manifest parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Checks every cross-field constraint the schema cannot express.
    pub fn validate(&self) -> CliResult<()> {
        if self.sweep.estimators.is_empty() {
            return Err(CliError::config("sweep.estimators must name at least one estimator"));
        }
        if self.sweep.budgets_kb.is_empty() {
            return Err(CliError::config("sweep.budgets_kb must list at least one budget"));
        }
        if let Some(b) = self.sweep.budgets_kb.iter().find(|b| **b == 0) {
            return Err(CliError::config(format!("budget {b} KB: budgets must be positive")));
        }
        if let TraceConfig::Synthetic(synth) = &self.trace {
            synth.validate()?;
        }
        let m = &self.model;
        if !(2..=5).contains(&m.blocks) {
            return Err(CliError::config(format!(
                "model.blocks = {} out of the supported 2..=5 range",
                m.blocks
            )));
        }
        if m.latent < 2 {
            return Err(CliError::config("model.latent must be at least 2"));
        }
        if m.subnet_hidden == 0 {
            return Err(CliError::config("model.subnet_hidden must be positive"));
        }
        if let Some(seg) = &m.segments {
            if seg.max_segments == 0 || seg.embed_dim == 0 {
                return Err(CliError::config(
                    "model.segments needs positive max_segments and embed_dim",
                ));
            }
        }
        let t = &self.training;
        if t.epochs == 0 {
            return Err(CliError::config("training.epochs must be at least 1"));
        }
        if t.batch_size < 2 {
            return Err(CliError::config("training.batch_size must be at least 2"));
        }
        if !(t.learning_rate.is_finite() && t.learning_rate >= 0.0) {
            return Err(CliError::config("training.learning_rate must be finite and >= 0"));
        }
        if t.window < 2 {
            return Err(CliError::config("training.window must hold at least 2 snapshots"));
        }
        if t.em_steps == 0 {
            return Err(CliError::config("training.em_steps must be at least 1"));
        }
        for (name, w) in [
            ("con", t.weights.con),
            ("rec", t.weights.rec),
            ("inv", t.weights.inv),
            ("ort", t.weights.ort),
            ("sp", t.weights.sp),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(CliError::config(format!(
                    "training.weights.{name} must be finite and >= 0"
                )));
            }
        }
        let r = &self.rip;
        if r.m == 0 || r.n == 0 || r.s == 0 || r.trials == 0 {
            return Err(CliError::config("rip.m, rip.n, rip.s, rip.trials must be positive"));
        }
        if r.m > r.n {
            return Err(CliError::config(format!(
                "rip.m = {} must not exceed rip.n = {}",
                r.m, r.n
            )));
        }
        if r.s > r.n {
            return Err(CliError::config(format!(
                "rip.s = {} must not exceed rip.n = {}",
                r.s, r.n
            )));
        }
        if r.grid_rows == 0 || r.m % r.grid_rows != 0 {
            return Err(CliError::config(format!(
                "rip.grid_rows = {} must divide rip.m = {}",
                r.grid_rows, r.m
            )));
        }
        Ok(())
    }

    /// Budgets in bytes, in manifest order.
    pub fn budgets_bytes(&self) -> Vec<usize> {
        self.sweep
            .budgets_kb
            .iter()
            .map(|kb| (*kb as usize) * 1024)
            .collect()
    }

    /// Key width of the configured trace source.
    pub fn key_len(&self) -> usize {
        match &self.trace {
            TraceConfig::Synthetic(s) => s.key_len,
            TraceConfig::File(f) => f.key_len,
        }
    }

    /// Training-loop configuration in core terms.
    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            loss: LossOptions {
                weights: t.weights.into(),
                discrepancy: t.discrepancy.into(),
                ort_widths: None,
            },
            em: self.em_config(),
            seed: self.seeds.train,
        }
    }

    /// Refinement schedule used both standalone and inside training.
    pub fn em_config(&self) -> EmConfig {
        EmConfig {
            steps: self.training.em_steps,
            accept_only_improvements: self.training.em_accept,
            epsilon: 1e-12,
        }
    }

    /// Model architecture for a given frequency/measurement size.
    pub fn model_config(&self, n: usize, m: usize) -> flore_core::model::ModelConfig {
        flore_core::model::ModelConfig {
            n,
            m,
            latent: self.model.latent,
            blocks: self.model.blocks,
            subnet_hidden: self.model.subnet_hidden,
            coupling: self.model.coupling.into(),
            segments: self.model.segments.map(|s| SegmentConditioning {
                max_segments: s.max_segments,
                embed_dim: s.embed_dim,
            }),
            seed: self.seeds.model,
        }
    }
}

impl SyntheticSection {
    fn validate(&self) -> CliResult<()> {
        if self.keys == 0 {
            return Err(CliError::config("trace.synthetic.keys must be positive"));
        }
        if self.items == 0 {
            return Err(CliError::config("trace.synthetic.items must be positive"));
        }
        if self.key_len == 0 || self.key_len > 64 {
            return Err(CliError::config("trace.synthetic.key_len must be in 1..=64"));
        }
        self.distribution_params()?;
        Ok(())
    }

    fn require(&self, field: &str, value: Option<f64>) -> CliResult<f64> {
        match value {
            Some(v) if v.is_finite() && v > 0.0 => Ok(v),
            Some(v) => Err(CliError::config(format!(
                "trace.synthetic.{field} = {v} must be finite and positive"
            ))),
            None => Err(CliError::config(format!(
                "trace.synthetic.{field} is required for distribution {:?}",
                self.distribution
            ))),
        }
    }

    fn distribution_params(&self) -> CliResult<Distribution> {
        match self.distribution {
            DistributionKind::Zipf => Ok(Distribution::Zipf {
                alpha: self.require("alpha", self.alpha)?,
            }),
            DistributionKind::ZipfIcml => Ok(Distribution::ZipfIcml {
                alpha: self.require("alpha", self.alpha)?,
            }),
            DistributionKind::Pareto => Ok(Distribution::Pareto {
                alpha: self.require("alpha", self.alpha)?,
                x_m: self.require("x_m", self.x_m)?,
            }),
            DistributionKind::Lognormal => Ok(Distribution::LogNormal {
                mu: match self.mu {
                    // The log-mean may sit anywhere on the real line.
                    Some(v) if v.is_finite() => v,
                    Some(v) => {
                        return Err(CliError::config(format!(
                            "trace.synthetic.mu = {v} must be finite"
                        )))
                    }
                    None => {
                        return Err(CliError::config(
                            "trace.synthetic.mu is required for distribution Lognormal",
                        ))
                    }
                },
                sigma: self.require("sigma", self.sigma)?,
            }),
            DistributionKind::Exp => Ok(Distribution::Exp {
                lambda: self.require("lambda", self.lambda)?,
            }),
        }
    }

    /// The generator recipe this section describes.
    pub fn to_spec(&self, trace_seed: u64) -> CliResult<SyntheticSpec> {
        let distribution = self.distribution_params()?;
        Ok(SyntheticSpec {
            keys: self.keys,
            total_items: self.items,
            distribution,
            key_len: self.key_len,
            permute_seed: self.permute.then_some(trace_seed ^ 0xa5a5_5a5a),
            rng_seed: trace_seed,
        })
    }
}
