//! Full experiment sweeps: every configured estimator crossed with
//! every memory budget over a single shared trace.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::pipeline::{self, CellReport, TraceBundle};
use crate::report::{self, CellManifest, RunManifest, TraceSummary};
use crate::CliResult;

/// Everything one sweep produced, ready for report emission.
pub struct SweepOutcome {
    pub trace: TraceSummary,
    pub cells: Vec<CellReport>,
}

impl SweepOutcome {
    /// True when at least one cell failed; the run still writes partial
    /// reports and the caller maps this to the runtime-failure exit code.
    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| c.outcome.is_err())
    }
}

pub fn trace_summary(bundle: &TraceBundle) -> TraceSummary {
    TraceSummary {
        items: bundle.items(),
        distinct_keys: bundle.keys(),
        total_value: bundle.trace.total_value(),
    }
}

/// Replays the configured trace through every (estimator, budget) cell.
///
/// A failing cell is recorded as its error string and never aborts the
/// sweep: partial results are part of the contract.
pub fn run_experiment(config: &ExperimentConfig, bundle: &TraceBundle) -> SweepOutcome {
    let budgets = config.budgets_bytes();
    let mut cells = Vec::with_capacity(config.sweep.estimators.len() * budgets.len());
    for &estimator in &config.sweep.estimators {
        for &budget in &budgets {
            cells.push(pipeline::run_cell(config, bundle, estimator, budget));
        }
    }
    SweepOutcome {
        trace: trace_summary(bundle),
        cells,
    }
}

/// Writes metrics, training curves, and the JSON manifest for one sweep.
pub fn write_reports(
    dir: &Path,
    config: &ExperimentConfig,
    outcome: &SweepOutcome,
) -> CliResult<()> {
    report::write_metrics(dir, &outcome.cells, &config.seeds)?;
    report::write_training_curves(dir, &outcome.cells)?;
    let manifest = RunManifest {
        schema: crate::config::SCHEMA_VERSION,
        command: "evaluate",
        config,
        trace: outcome.trace,
        cells: outcome.cells.iter().map(CellManifest::from_report).collect(),
        rip: Vec::new(),
        ablation: Vec::new(),
        robustness: Vec::new(),
    };
    report::write_manifest(dir, &manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{EstimatorKind, ExperimentConfig};

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
            [trace.synthetic]
            keys = 64
            items = 2000
            distribution = "zipf"
            alpha = 1.2

            [sweep]
            budgets_kb = [4]
            estimators = ["cm", "cu"]
        "#,
        )
        .unwrap()
    }

    #[test]
    fn sweep_emits_one_cell_per_estimator_budget_pair() {
        let config = tiny_config();
        let bundle = pipeline::build_trace(&config).unwrap();
        let outcome = run_experiment(&config, &bundle);
        assert_eq!(outcome.cells.len(), 2);
        assert!(!outcome.has_failures());
        // Per-key rounding means the realized stream can differ slightly
        // from the requested item count; the summary must match reality.
        assert_eq!(outcome.trace.items, bundle.items());
        assert_eq!(outcome.trace.distinct_keys, 64);
    }

    #[test]
    fn reports_land_on_disk() {
        let config = tiny_config();
        let bundle = pipeline::build_trace(&config).unwrap();
        let outcome = run_experiment(&config, &bundle);
        let dir = tempfile::tempdir().unwrap();
        write_reports(dir.path(), &config, &outcome).unwrap();
        assert!(dir.path().join(report::METRICS_FILE).exists());
        assert!(dir.path().join(report::MANIFEST_FILE).exists());
        let manifest = std::fs::read_to_string(dir.path().join(report::MANIFEST_FILE)).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
        assert_eq!(parsed["cells"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn single_estimator_single_budget_is_exactly_one_row() {
        let mut config = tiny_config();
        config.sweep.estimators = vec![EstimatorKind::Cm];
        let bundle = pipeline::build_trace(&config).unwrap();
        let outcome = run_experiment(&config, &bundle);
        assert_eq!(outcome.cells.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        write_reports(dir.path(), &config, &outcome).unwrap();
        let text = std::fs::read_to_string(dir.path().join(report::METRICS_FILE)).unwrap();
        assert_eq!(text.lines().count(), 2, "header plus one row:\n{text}");
    }
}
