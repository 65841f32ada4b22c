//! Training objective: a sketch-consistency term anchored by
//! reconstruction, invertibility, latent-distribution, and sparsity
//! regularizers, each differentiable through the tape.

use std::rc::Rc;

use ndarray::Array2;

use super::net::FloreModel;
use super::tape::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::linsys::{LinearOp, SketchOperator};

/// Relative weights of the objective terms. Zeroing a weight drops the
/// term from the optimized total while its raw value is still recorded,
/// which is what the ablation variants rely on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Measurement-consistency term.
    pub con: f64,
    /// Frequency-reconstruction term.
    pub rec: f64,
    /// Round-trip invertibility term.
    pub inv: f64,
    /// Latent distribution-match term.
    pub ort: f64,
    /// Output sparsity term.
    pub sp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            con: 1.0,
            rec: 0.5,
            inv: 0.001,
            ort: 0.01,
            sp: 0.05,
        }
    }
}

/// Statistic used for the latent distribution-match term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscrepancyKind {
    /// Kernel maximum mean discrepancy (biased V-statistic with a
    /// median-heuristic width mixture).
    Mmd,
    /// Mean/variance moment matching — a cheaper surrogate that
    /// penalizes the same first- and second-order mismatch.
    MomentMatch,
}

/// One training batch in normalized units: rows are samples.
#[derive(Debug, Clone)]
pub struct LossBatch {
    /// Measurement vectors, `(batch, m)`.
    pub measurements: Array2<f64>,
    /// Target frequency vectors, `(batch, n)`.
    pub targets: Array2<f64>,
    /// Frozen noise-slot samples, `(batch, noise_dim)`.
    pub noise: Array2<f64>,
}

/// Objective configuration.
#[derive(Debug, Clone)]
pub struct LossOptions {
    pub weights: LossWeights,
    pub discrepancy: DiscrepancyKind,
    /// Fixed kernel widths for the distribution-match term; `None`
    /// recomputes them per batch with the median heuristic. Gradient
    /// checks pass explicit widths so the objective stays smooth under
    /// parameter perturbation.
    pub ort_widths: Option<Vec<f64>>,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            weights: LossWeights::default(),
            discrepancy: DiscrepancyKind::Mmd,
            ort_widths: None,
        }
    }
}

/// Scalar values of every objective term for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub con: f64,
    pub rec: f64,
    pub inv: f64,
    pub ort: f64,
    pub sp: f64,
    pub total: f64,
}

impl LossRecord {
    pub fn is_finite(&self) -> bool {
        self.con.is_finite()
            && self.rec.is_finite()
            && self.inv.is_finite()
            && self.ort.is_finite()
            && self.sp.is_finite()
            && self.total.is_finite()
    }
}

/// Tape handles for every objective term, for per-term backward passes.
#[derive(Debug, Clone, Copy)]
pub struct LossGraph {
    pub con: Tensor,
    pub rec: Tensor,
    pub inv: Tensor,
    pub ort: Tensor,
    pub sp: Tensor,
    pub total: Tensor,
}

/// Median-heuristic kernel widths: half the median pairwise squared
/// distance of the pooled rows, at three scales.
pub fn median_heuristic_widths(x: &Array2<f64>, y: &Array2<f64>) -> Vec<f64> {
    let mut dists = Vec::new();
    let rows: Vec<_> = x.outer_iter().chain(y.outer_iter()).collect();
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let d: f64 = rows[i]
                .iter()
                .zip(rows[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d);
        }
    }
    // total_cmp keeps this well-defined even when a diverging model
    // feeds non-finite activations through; the floor below then turns
    // a NaN median into the minimum width and the loss itself reports
    // the non-finite state.
    dists.sort_by(f64::total_cmp);
    let median = if dists.is_empty() {
        0.0
    } else if dists.len() % 2 == 1 {
        dists[dists.len() / 2]
    } else {
        0.5 * (dists[dists.len() / 2 - 1] + dists[dists.len() / 2])
    };
    let base = (median / 2.0).max(1e-12);
    vec![0.5 * base, base, 2.0 * base]
}

/// Kernel discrepancy between two row batches with explicit widths.
pub fn mmd_with_widths(x: &Array2<f64>, y: &Array2<f64>, widths: &[f64]) -> f64 {
    let store = super::tape::ParamStore::new();
    let mut tape = Tape::new(&store);
    let tx = tape.input(x.clone());
    let ty = tape.input(y.clone());
    let out = tape.mmd(tx, ty, widths.to_vec());
    tape.value(out)[(0, 0)]
}

/// Kernel discrepancy with median-heuristic widths.
pub fn mmd_estimate(x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    mmd_with_widths(x, y, &median_heuristic_widths(x, y))
}

fn check_finite(name: &'static str, a: &Array2<f64>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::param(name, "non-finite entry", "must be finite"));
    }
    Ok(())
}

/// Builds the full objective graph for one batch and returns the tape
/// (ready for backward passes), the per-term handles, and their values.
pub fn compute_losses<'s>(
    model: &'s FloreModel,
    op: &Rc<SketchOperator>,
    batch: &LossBatch,
    opts: &LossOptions,
    segment: Option<usize>,
) -> Result<(Tape<'s>, LossGraph, LossRecord)> {
    let rows = batch.measurements.nrows();
    if rows < 2 || batch.targets.nrows() != rows || batch.noise.nrows() != rows {
        return Err(Error::param(
            "batch",
            format!(
                "{} / {} / {} rows",
                rows,
                batch.targets.nrows(),
                batch.noise.nrows()
            ),
            "all three arrays need the same batch size of at least 2",
        ));
    }
    let cfg = model.config();
    if batch.measurements.ncols() != cfg.m {
        return Err(Error::DimensionMismatch {
            context: "loss measurement width",
            expected: cfg.m,
            actual: batch.measurements.ncols(),
        });
    }
    if batch.targets.ncols() != cfg.n {
        return Err(Error::DimensionMismatch {
            context: "loss target width",
            expected: cfg.n,
            actual: batch.targets.ncols(),
        });
    }
    if batch.noise.ncols() != cfg.noise_dim() {
        return Err(Error::DimensionMismatch {
            context: "loss noise width",
            expected: cfg.noise_dim(),
            actual: batch.noise.ncols(),
        });
    }
    if op.rows() != cfg.m || op.cols() != cfg.n {
        return Err(Error::DimensionMismatch {
            context: "loss operator shape",
            expected: cfg.m * cfg.n,
            actual: op.rows() * op.cols(),
        });
    }
    check_finite("batch.measurements", &batch.measurements)?;
    check_finite("batch.targets", &batch.targets)?;
    check_finite("batch.noise", &batch.noise)?;

    let mut tape = Tape::new(model.store());
    let tb = tape.input(batch.measurements.clone());
    let tz = tape.input(batch.noise.clone());
    let tf = tape.input(batch.targets.clone());

    // Generation path; its flow input doubles as the latent reference.
    let hb = model.encode_measurement_graph(&mut tape, tb);
    let x0 = tape.concat_cols(hb, tz);
    let f0 = model.generate_from_latent_graph(&mut tape, x0, segment);
    let meas0 = tape.op_apply(f0, op.clone(), false);
    let con = tape.mse(meas0, tb);

    // Reconstruction: generate from the target's own measurement with
    // the same noise and demand the target back.
    let meas_t = tape.op_apply(tf, op.clone(), false);
    let hb1 = model.encode_measurement_graph(&mut tape, meas_t);
    let x1 = tape.concat_cols(hb1, tz);
    let f1 = model.generate_from_latent_graph(&mut tape, x1, segment);
    let rec = tape.mse(f1, tf);

    // Invertibility: inverting a target and regenerating must return it.
    let bz_t = model.invert_graph(&mut tape, tf, segment);
    let f2 = model.generate_from_latent_graph(&mut tape, bz_t, segment);
    let inv = tape.mse(f2, tf);

    // Latent match: inverting generated output should reproduce the
    // flow-input distribution.
    let bz0 = model.invert_graph(&mut tape, f0, segment);
    let ort = match opts.discrepancy {
        DiscrepancyKind::Mmd => {
            let widths = opts
                .ort_widths
                .clone()
                .unwrap_or_else(|| median_heuristic_widths(tape.value(x0), tape.value(bz0)));
            tape.mmd(x0, bz0, widths)
        }
        DiscrepancyKind::MomentMatch => tape.moment_match(x0, bz0),
    };

    let sp = tape.l1_mean(f0);

    let w = opts.weights;
    let total = tape.weighted_sum(vec![
        (con, w.con),
        (rec, w.rec),
        (inv, w.inv),
        (ort, w.ort),
        (sp, w.sp),
    ]);

    let record = LossRecord {
        con: tape.value(con)[(0, 0)],
        rec: tape.value(rec)[(0, 0)],
        inv: tape.value(inv)[(0, 0)],
        ort: tape.value(ort)[(0, 0)],
        sp: tape.value(sp)[(0, 0)],
        total: tape.value(total)[(0, 0)],
    };
    let graph = LossGraph {
        con,
        rec,
        inv,
        ort,
        sp,
        total,
    };
    Ok((tape, graph, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::net::{init_model, ModelConfig};
    use crate::model::tape::ParamId;
    use crate::stream::{key_from_id, KeyIndex};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn normal_batch(rng: &mut ChaCha12Rng, rows: usize, cols: usize, shift: f64) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| {
            rng.sample::<f64, _>(StandardNormal) + shift
        })
    }

    #[test]
    fn mmd_matches_the_analytic_gaussian_value() {
        // For X ~ N(a, I), Y ~ N(b, I) in d dimensions and kernel
        // exp(−‖·‖²/(2w)), E k(X, Y) = (w/(w+2))^{d/2} ·
        // exp(−‖a−b‖²/(2(w+2))); the expected squared discrepancy
        // follows by combining the three pair types.
        let d = 8;
        let n = 256;
        let shift = 5.0;
        let widths = [8.0f64, 16.0, 32.0];
        let mut rng = ChaCha12Rng::seed_from_u64(604);
        let x = normal_batch(&mut rng, n, d, 0.0);
        let y = normal_batch(&mut rng, n, d, shift);

        let gap_sq = shift * shift * d as f64;
        let expect_pair = |dist_sq: f64| {
            widths
                .iter()
                .map(|w| (w / (w + 2.0)).powf(d as f64 / 2.0) * (-dist_sq / (2.0 * (w + 2.0))).exp())
                .sum::<f64>()
                / widths.len() as f64
        };
        let analytic = 2.0 * expect_pair(0.0) - 2.0 * expect_pair(gap_sq);

        let measured = mmd_with_widths(&x, &y, &widths);
        assert!(
            (measured - analytic).abs() < 0.05,
            "measured {measured} vs analytic {analytic}"
        );
        assert!(measured > 0.5, "well-separated distributions: {measured}");

        // Same distribution: the statistic collapses toward zero.
        let x2 = normal_batch(&mut rng, n, d, 0.0);
        let close = mmd_with_widths(&x, &x2, &widths);
        assert!(close < 0.05, "same distribution: {close}");
        assert!(close >= 0.0);
    }

    #[test]
    fn median_heuristic_tracks_data_scale() {
        let mut rng = ChaCha12Rng::seed_from_u64(605);
        let x = normal_batch(&mut rng, 32, 4, 0.0);
        let y = normal_batch(&mut rng, 32, 4, 0.5);
        let w1 = median_heuristic_widths(&x, &y);
        assert_eq!(w1.len(), 3);
        assert!(w1.iter().all(|w| *w > 0.0));
        assert_abs_diff_eq!(w1[1] / w1[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w1[2] / w1[1], 2.0, epsilon = 1e-12);

        let c = 3.0;
        let w2 = median_heuristic_widths(&x.mapv(|v| c * v), &y.mapv(|v| c * v));
        assert_abs_diff_eq!(w2[1] / w1[1], c * c, epsilon = 1e-9);

        // Degenerate identical rows floor at a tiny positive width.
        let flat = Array2::zeros((4, 3));
        let wf = median_heuristic_widths(&flat, &flat);
        assert!(wf.iter().all(|w| *w > 0.0));
    }

    fn toy_setup(seed: u64) -> (FloreModel, Rc<SketchOperator>, LossBatch) {
        let n = 12;
        let mut index = KeyIndex::new();
        for id in 0..n as u64 {
            index.insert(&key_from_id(id, 4));
        }
        let op = Rc::new(SketchOperator::count_min(2, 3, 9, &index).unwrap());
        let mut model = init_model(ModelConfig::new(n, op.rows(), 8, seed)).unwrap();
        // Move off the all-zero subnet initialization so every term has
        // nontrivial gradients.
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xABCD);
        for i in 0..model.store().len() {
            let v = model.store_mut().value_mut(ParamId(i));
            for e in v.iter_mut() {
                *e += 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let rows = 4;
        let batch = LossBatch {
            measurements: normal_batch(&mut rng, rows, op.rows(), 0.3),
            targets: normal_batch(&mut rng, rows, n, 0.1).mapv(|v| 0.4 * v),
            noise: normal_batch(&mut rng, rows, model.config().noise_dim(), 0.0),
        };
        (model, op, batch)
    }

    #[test]
    fn total_combines_terms_with_their_weights() {
        let (model, op, batch) = toy_setup(606);
        let opts = LossOptions::default();
        let (_, _, record) = compute_losses(&model, &op, &batch, &opts, None).unwrap();
        assert!(record.is_finite());
        let w = opts.weights;
        let recombined = w.con * record.con
            + w.rec * record.rec
            + w.inv * record.inv
            + w.ort * record.ort
            + w.sp * record.sp;
        assert_abs_diff_eq!(record.total, recombined, epsilon = 1e-12);
        assert!(record.con > 0.0 && record.rec > 0.0 && record.inv > 0.0 && record.sp > 0.0);
    }

    #[test]
    fn mismatched_batches_are_rejected() {
        let (model, op, batch) = toy_setup(607);
        let opts = LossOptions::default();

        let mut short = batch.clone();
        short.noise = short.noise.slice(ndarray::s![..2, ..]).to_owned();
        assert!(compute_losses(&model, &op, &short, &opts, None).is_err());

        let mut wrong_m = batch.clone();
        wrong_m.measurements = Array2::zeros((4, op.rows() + 1));
        assert!(compute_losses(&model, &op, &wrong_m, &opts, None).is_err());

        let mut wrong_n = batch.clone();
        wrong_n.targets = Array2::zeros((4, model.config().n + 2));
        assert!(compute_losses(&model, &op, &wrong_n, &opts, None).is_err());

        let mut non_finite = batch.clone();
        non_finite.targets[(0, 0)] = f64::NAN;
        assert!(compute_losses(&model, &op, &non_finite, &opts, None).is_err());

        let mut lone = batch;
        lone.measurements = lone.measurements.slice(ndarray::s![..1, ..]).to_owned();
        lone.targets = lone.targets.slice(ndarray::s![..1, ..]).to_owned();
        lone.noise = lone.noise.slice(ndarray::s![..1, ..]).to_owned();
        assert!(compute_losses(&model, &op, &lone, &opts, None).is_err());
    }

    /// Central-difference check of every objective term's parameter
    /// gradients on a small model, probing a spread of entries in every
    /// parameter matrix.
    fn check_term_gradients(discrepancy: DiscrepancyKind) {
        let (model, op, batch) = toy_setup(608);
        let opts = LossOptions {
            weights: LossWeights::default(),
            discrepancy,
            // Fixed widths keep the objective smooth in the parameters.
            ort_widths: match discrepancy {
                DiscrepancyKind::Mmd => Some(vec![0.5, 1.0, 2.0]),
                DiscrepancyKind::MomentMatch => None,
            },
        };

        let (tape, graph, _) = compute_losses(&model, &op, &batch, &opts, None).unwrap();
        let terms = [
            ("con", graph.con),
            ("rec", graph.rec),
            ("inv", graph.inv),
            ("ort", graph.ort),
            ("sp", graph.sp),
        ];
        let analytic: Vec<_> = terms.iter().map(|(_, t)| tape.backward(*t)).collect();

        // Probe three entries per parameter.
        let mut probes = Vec::new();
        for (id, _, value) in model.store().iter() {
            let (r, c) = value.dim();
            probes.push((id, 0, 0));
            probes.push((id, r / 2, c / 2));
            probes.push((id, r - 1, c - 1));
        }
        probes.dedup();

        let mut worst: Vec<(f64, f64)> = vec![(0.0, 0.0); terms.len()]; // (max |a−fd|, max |fd|)
        for &(id, r, c) in &probes {
            let base = model.store().value(id)[(r, c)];
            let h = 1e-5 * base.abs().max(1.0);
            let eval = |delta: f64| {
                let mut perturbed = model.clone();
                perturbed.store_mut().value_mut(id)[(r, c)] = base + delta;
                let (t, g, _) = compute_losses(&perturbed, &op, &batch, &opts, None).unwrap();
                [
                    t.value(g.con)[(0, 0)],
                    t.value(g.rec)[(0, 0)],
                    t.value(g.inv)[(0, 0)],
                    t.value(g.ort)[(0, 0)],
                    t.value(g.sp)[(0, 0)],
                ]
            };
            let plus = eval(h);
            let minus = eval(-h);
            for k in 0..terms.len() {
                let fd = (plus[k] - minus[k]) / (2.0 * h);
                let a = analytic[k]
                    .of(id)
                    .map_or(0.0, |g| g[(r, c)]);
                worst[k].0 = worst[k].0.max((a - fd).abs());
                worst[k].1 = worst[k].1.max(fd.abs());
            }
        }
        for (k, (name, _)) in terms.iter().enumerate() {
            let (gap, scale) = worst[k];
            let rel = gap / scale.max(1e-8);
            assert!(
                rel < 1e-4,
                "{name} ({discrepancy:?}): rel gradient error {rel} (gap {gap}, scale {scale})"
            );
        }
    }

    #[test]
    fn every_loss_term_gradient_matches_finite_differences() {
        check_term_gradients(DiscrepancyKind::Mmd);
    }

    #[test]
    fn moment_match_discrepancy_gradients_also_check_out() {
        check_term_gradients(DiscrepancyKind::MomentMatch);
    }
}
