//! Loss-term ablation: retrains the generative recovery pipeline with
//! individual objective terms removed and reports how accuracy moves.
//!
//! Every variant shares the trace, the sketch, and the full seed set, so
//! differences between rows are attributable to the loss shape alone.

use flore_core::model::LossWeights;
use flore_core::stream::compute_metrics;

use crate::config::ExperimentConfig;
use crate::pipeline::{self, GenerativeOptions, TraceBundle};
use crate::report::{AblationCdfRow, AblationRow};
use crate::{CliError, CliResult};

/// Which objective term a run removes, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationVariant {
    /// Distribution matching only: every structural term zeroed.
    Naive,
    /// Sparsity prior removed.
    NoSp,
    /// Latent-orthogonality term removed.
    NoOrt,
    /// Measurement-reconstruction term removed.
    NoRec,
    /// Distribution-matching term removed.
    NoCon,
    /// The unmodified objective.
    Full,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 6] = [
        AblationVariant::Naive,
        AblationVariant::NoSp,
        AblationVariant::NoOrt,
        AblationVariant::NoRec,
        AblationVariant::NoCon,
        AblationVariant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Naive => "naive",
            AblationVariant::NoSp => "no-sp",
            AblationVariant::NoOrt => "no-ort",
            AblationVariant::NoRec => "no-rec",
            AblationVariant::NoCon => "no-con",
            AblationVariant::Full => "full",
        }
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == text)
            .ok_or_else(|| {
                CliError::config(format!(
                    "unknown ablation variant {text:?}; expected one of \
                     naive, no-sp, no-ort, no-rec, no-con, full"
                ))
            })
    }

    /// The variant's loss weights, derived from the configured baseline.
    pub fn weights(self, base: &LossWeights) -> LossWeights {
        let mut w = *base;
        match self {
            AblationVariant::Naive => {
                w.rec = 0.0;
                w.inv = 0.0;
                w.ort = 0.0;
                w.sp = 0.0;
            }
            AblationVariant::NoSp => w.sp = 0.0,
            AblationVariant::NoOrt => w.ort = 0.0,
            AblationVariant::NoRec => w.rec = 0.0,
            AblationVariant::NoCon => w.con = 0.0,
            AblationVariant::Full => {}
        }
        w
    }
}

/// One trained-and-scored ablation cell.
pub struct VariantOutcome {
    pub summary: AblationRow,
    pub cdf: Vec<AblationCdfRow>,
    pub estimates: Vec<f64>,
}

/// Trains and scores one variant at the first configured budget.
pub fn run_variant(
    config: &ExperimentConfig,
    bundle: &TraceBundle,
    variant: AblationVariant,
) -> CliResult<VariantOutcome> {
    let budget = *config
        .budgets_bytes()
        .first()
        .ok_or_else(|| CliError::config("ablation needs at least one memory budget"))?;
    let base = config.train_config().loss.weights;
    let weights = variant.weights(&base);
    let opts = GenerativeOptions {
        weights,
        ..GenerativeOptions::standard(config)
    };
    let run = pipeline::prepare_generative(config, bundle, budget, &opts)?;
    let (estimates, _) = pipeline::recover_estimates(
        &run.plane,
        &run.model,
        run.plane.tracked(),
        &bundle.truth.index,
        config.seeds.recovery,
    )?;
    let truth = &bundle.truth.frequencies;
    let metrics = compute_metrics(&estimates, truth, None).map_err(CliError::from)?;

    let mut abs: Vec<f64> = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs())
        .collect();
    let mut rel: Vec<f64> = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs() / t.max(1.0))
        .collect();
    abs.sort_by(f64::total_cmp);
    rel.sort_by(f64::total_cmp);
    let cdf = abs
        .into_iter()
        .zip(rel)
        .enumerate()
        .map(|(rank, (abs_err, rel_err))| AblationCdfRow {
            variant: variant.name().to_string(),
            rank,
            abs_err,
            rel_err,
        })
        .collect();

    Ok(VariantOutcome {
        summary: AblationRow::new(
            variant.name().to_string(),
            budget,
            &metrics,
            [weights.con, weights.rec, weights.inv, weights.ort, weights.sp],
        ),
        cdf,
        estimates,
    })
}

/// Runs the requested variants over one shared trace.
pub fn run_ablation(
    config: &ExperimentConfig,
    bundle: &TraceBundle,
    variants: &[AblationVariant],
) -> CliResult<Vec<VariantOutcome>> {
    variants
        .iter()
        .map(|&v| run_variant(config, bundle, v))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in AblationVariant::ALL {
            assert_eq!(AblationVariant::parse(v.name()).unwrap(), v);
        }
        assert!(AblationVariant::parse("bogus").is_err());
    }

    #[test]
    fn weight_transforms_zero_exactly_one_knob_except_naive() {
        let base = LossWeights::default();
        let full = AblationVariant::Full.weights(&base);
        assert_eq!(
            [full.con, full.rec, full.inv, full.ort, full.sp],
            [base.con, base.rec, base.inv, base.ort, base.sp]
        );
        assert_eq!(AblationVariant::NoSp.weights(&base).sp, 0.0);
        assert_eq!(AblationVariant::NoOrt.weights(&base).ort, 0.0);
        assert_eq!(AblationVariant::NoRec.weights(&base).rec, 0.0);
        assert_eq!(AblationVariant::NoCon.weights(&base).con, 0.0);
        let naive = AblationVariant::Naive.weights(&base);
        assert_eq!(
            [naive.rec, naive.inv, naive.ort, naive.sp],
            [0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(naive.con, base.con, "naive keeps distribution matching");
    }
}
