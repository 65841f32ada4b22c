//! Workload-shift stress tests: how much recovery accuracy degrades
//! when the stream the model serves drifts from the stream it expects.
//!
//! Both sides of every comparison run through the same machinery — a
//! rebuilt stream, a fresh data plane, the already-trained model — so
//! the unshifted baseline and the shifted run differ only in the drift
//! itself. A zero-strength shift is therefore bit-identical to its
//! baseline and degrades by exactly zero.

use flore_core::sketch::{FloreDataPlane, PlaneConfig};
use flore_core::stream::{compute_metrics, perturb_stream, FrequencyVector, PerturbMode};

use crate::config::ExperimentConfig;
use crate::pipeline::{self, GenerativeOptions, GenerativeRun, TraceBundle};
use crate::report::RobustnessRow;
use crate::{CliError, CliResult};

/// Drift families the stress test understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Per-key volume fluctuation over time; factor scales the noise
    /// (0 is no shift).
    Temporal,
    /// Training starved to a prefix of the stream; factor is the
    /// fraction of the stream the training window sees (1 is all of it).
    Natural,
    /// Hot-key mass reassigned to cold keys; factor is the proportion of
    /// volume the hot keys keep (1 is no shift).
    Spatial,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Temporal, Scenario::Natural, Scenario::Spatial];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Temporal => "temporal",
            Scenario::Natural => "natural",
            Scenario::Spatial => "spatial",
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == text)
            .ok_or_else(|| {
                CliError::config(format!(
                    "unknown robustness scenario {text:?}; expected temporal, natural, or spatial"
                ))
            })
    }

    fn check_factor(self, factor: f64) -> CliResult<()> {
        let ok = match self {
            Scenario::Temporal => factor.is_finite() && factor >= 0.0,
            Scenario::Natural | Scenario::Spatial => factor > 0.0 && factor <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(CliError::config(match self {
                Scenario::Temporal => format!("temporal factor {factor} must be >= 0"),
                Scenario::Natural => format!("natural factor {factor} must be in (0, 1]"),
                Scenario::Spatial => format!("spatial factor {factor} must be in (0, 1]"),
            }))
        }
    }
}

/// Replays a frequency vector through a fresh plane and recovers it
/// with the already-trained model, scoring against that vector itself.
fn replay_and_score(
    config: &ExperimentConfig,
    bundle: &TraceBundle,
    run: &GenerativeRun,
    budget_bytes: usize,
    frequencies: &FrequencyVector,
) -> CliResult<f64> {
    let trace = pipeline::trace_from_frequencies(
        frequencies,
        &bundle.truth.index,
        config.seeds.perturb,
    )?;
    let plane_config = PlaneConfig::from_budget(
        budget_bytes,
        bundle.keys().max(1),
        config.key_len(),
        config.seeds.sketch,
    )
    .map_err(CliError::from)?;
    let mut plane = FloreDataPlane::new(plane_config).map_err(CliError::from)?;
    for (key, value) in trace.iter() {
        plane.insert(key, value).map_err(CliError::from)?;
    }
    let (estimates, _) = pipeline::recover_estimates(
        &plane,
        &run.model,
        run.plane.tracked(),
        &bundle.truth.index,
        config.seeds.recovery,
    )?;
    let metrics = compute_metrics(&estimates, frequencies, None).map_err(CliError::from)?;
    Ok(metrics.are)
}

fn degradation_pct(base: f64, shifted: f64) -> f64 {
    if base == 0.0 {
        if shifted == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (shifted - base) / base
    }
}

/// Measures one scenario at one strength, at the first configured
/// budget, for the trained generative estimator.
pub fn run_scenario(
    config: &ExperimentConfig,
    bundle: &TraceBundle,
    scenario: Scenario,
    factor: f64,
) -> CliResult<RobustnessRow> {
    scenario.check_factor(factor)?;
    let budget = *config
        .budgets_bytes()
        .first()
        .ok_or_else(|| CliError::config("robustness needs at least one memory budget"))?;
    let standard = GenerativeOptions::standard(config);
    let run = pipeline::prepare_generative(config, bundle, budget, &standard)?;

    let (base_are, shifted_are) = match scenario {
        Scenario::Temporal | Scenario::Spatial => {
            let mode = if scenario == Scenario::Temporal {
                PerturbMode::Temporal
            } else {
                PerturbMode::Spatial
            };
            let shifted_truth =
                perturb_stream(&bundle.truth.frequencies, mode, factor, config.seeds.perturb)
                    .map_err(CliError::from)?;
            let base = replay_and_score(config, bundle, &run, budget, &bundle.truth.frequencies)?;
            let shifted = replay_and_score(config, bundle, &run, budget, &shifted_truth)?;
            (base, shifted)
        }
        Scenario::Natural => {
            let score = |r: &GenerativeRun| -> CliResult<f64> {
                let (estimates, _) = pipeline::recover_estimates(
                    &r.plane,
                    &r.model,
                    r.plane.tracked(),
                    &bundle.truth.index,
                    config.seeds.recovery,
                )?;
                let metrics = compute_metrics(&estimates, &bundle.truth.frequencies, None)
                    .map_err(CliError::from)?;
                Ok(metrics.are)
            };
            let base = score(&run)?;
            let starved_opts = GenerativeOptions {
                train_fraction: factor,
                ..standard
            };
            let starved = pipeline::prepare_generative(config, bundle, budget, &starved_opts)?;
            let shifted = score(&starved)?;
            (base, shifted)
        }
    };

    Ok(RobustnessRow {
        scenario: scenario.name().to_string(),
        factor,
        estimator: "flore".to_string(),
        budget_bytes: budget,
        base_are,
        shifted_are,
        degradation_pct: degradation_pct(base_are, shifted_are),
    })
}
