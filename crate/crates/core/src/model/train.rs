//! Streaming training pipeline: a sliding window of counter snapshots,
//! per-snapshot refinement targets, Adam, and the epoch loop with
//! divergence rollback.

use std::collections::VecDeque;
use std::rc::Rc;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::loss::{compute_losses, LossBatch, LossOptions, LossRecord};
use super::net::FloreModel;
use super::tape::{Gradients, ParamStore};
use crate::em::{em_refine, EmConfig, EmProblem};
use crate::error::{Error, Result};
use crate::linsys::{LinearOp, OperatorMode, SketchOperator};

/// FIFO window of flattened counter snapshots, captured every
/// `interval` stream updates.
#[derive(Debug, Clone)]
pub struct CounterWindow {
    capacity: usize,
    interval: u64,
    since_last: u64,
    snapshots: VecDeque<Vec<f64>>,
}

impl CounterWindow {
    pub fn new(capacity: usize, interval: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::param("capacity", capacity, "must be at least 1"));
        }
        if interval == 0 {
            return Err(Error::param("interval", interval, "must be at least 1"));
        }
        Ok(CounterWindow {
            capacity,
            interval,
            since_last: 0,
            snapshots: VecDeque::new(),
        })
    }

    /// Notes one stream update; returns true when a snapshot is due.
    pub fn record_update(&mut self) -> bool {
        self.since_last += 1;
        self.since_last >= self.interval
    }

    /// Stores a snapshot, evicting the oldest beyond capacity, and
    /// restarts the update countdown.
    pub fn capture(&mut self, snapshot: Vec<f64>) {
        self.snapshots.push_back(snapshot);
        if self.snapshots.len() > self.capacity {
            self.snapshots.pop_front();
        }
        self.since_last = 0;
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &[f64]> {
        self.snapshots.iter().map(|s| s.as_slice())
    }
}

/// Adam optimizer over a [`ParamStore`], with an optional trainable
/// mask for fine-tuning.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update. Parameters whose mask entry is false (or
    /// which received no gradient) are left untouched, moments included.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, mask: Option<&[bool]>) {
        if self.m.is_empty() {
            for (id, _, value) in store.iter() {
                debug_assert_eq!(id.0, self.m.len());
                self.m.push(Array2::zeros(value.raw_dim()));
                self.v.push(Array2::zeros(value.raw_dim()));
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for idx in 0..store.len() {
            let id = super::tape::ParamId(idx);
            if let Some(mask) = mask {
                if !mask[idx] {
                    continue;
                }
            }
            let Some(g) = grads.of(id) else { continue };
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let p = store.value_mut(id);
            for ((pe, ge), (me, ve)) in p
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *me = self.beta1 * *me + (1.0 - self.beta1) * ge;
                *ve = self.beta2 * *ve + (1.0 - self.beta2) * ge * ge;
                let m_hat = *me / bc1;
                let v_hat = *ve / bc2;
                *pe -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Training hyper-parameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss: LossOptions,
    /// Refinement schedule for the per-snapshot targets.
    pub em: EmConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 1e-3,
            loss: LossOptions::default(),
            em: EmConfig::default(),
            seed: 0,
        }
    }
}

/// Per-epoch averaged loss terms from a completed run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<LossRecord>,
    pub epochs_run: usize,
}

/// One training pair in normalized units: a flattened measurement
/// vector and the frequency target the generator should reproduce,
/// both divided by the snapshot's scale bound.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub measurement: Vec<f64>,
    pub target: Vec<f64>,
}

/// Smallest per-row maximum of a flattened counter grid — the same
/// scale bound a structured sketch reports, computed from a snapshot.
fn flat_instance_scale(rows: usize, width: usize, flat: &[f64]) -> f64 {
    (0..rows)
        .map(|r| {
            flat[r * width..(r + 1) * width]
                .iter()
                .fold(0.0f64, |a, v| a.max(*v))
        })
        .fold(f64::INFINITY, f64::min)
}

/// Point-query start vector from a flattened snapshot: the per-column
/// minimum over the operator's touched cells, floored at one count.
fn flat_query_start(op: &SketchOperator, flat: &[f64]) -> Vec<f64> {
    (0..op.cols())
        .map(|j| {
            op.col(j)
                .iter()
                .map(|(slot, _)| flat[*slot as usize])
                .fold(f64::INFINITY, f64::min)
                .max(1.0)
        })
        .collect()
}

/// Scale bound of one flattened `rows × width` counter snapshot: the
/// minimum over rows of the row-maximum counter. Errors when the grid
/// holds no mass, mirroring the structured sketch's scale query.
pub fn snapshot_scale(rows: usize, width: usize, flat: &[f64]) -> Result<f64> {
    if flat.len() != rows * width {
        return Err(Error::DimensionMismatch {
            context: "snapshot length",
            expected: rows * width,
            actual: flat.len(),
        });
    }
    let scale = flat_instance_scale(rows, width, flat);
    if scale > 0.0 {
        Ok(scale)
    } else {
        Err(Error::EmptySketch {
            context: "snapshot scale",
        })
    }
}

/// Builds normalized training pairs from a snapshot window: each
/// snapshot becomes (counters/scale, refined-estimates/scale), with the
/// refinement started from the snapshot's own point queries. Empty
/// snapshots are skipped.
pub fn window_samples(
    window: &CounterWindow,
    op: &SketchOperator,
    em: &EmConfig,
) -> Result<Vec<TrainSample>> {
    if op.mode() != OperatorMode::CountMin {
        return Err(Error::Unsupported {
            reason: "training targets need a count-min measurement operator".into(),
        });
    }
    let rows = op.nnz_per_col();
    let m = op.rows();
    debug_assert_eq!(m % rows, 0, "count-min grids are rows × width");
    let width = m / rows;
    let mut samples = Vec::new();
    for snapshot in window.snapshots() {
        if snapshot.len() != m {
            return Err(Error::DimensionMismatch {
                context: "window snapshot length",
                expected: m,
                actual: snapshot.len(),
            });
        }
        let scale = flat_instance_scale(rows, width, snapshot);
        if !(scale > 0.0) {
            // An empty snapshot carries no signal; skip it.
            continue;
        }
        let problem = EmProblem::new(op, snapshot)?;
        let start = flat_query_start(op, snapshot);
        let refined = em_refine(&problem, &start, em)?;
        samples.push(TrainSample {
            measurement: snapshot.iter().map(|v| v / scale).collect(),
            target: refined.solution.iter().map(|v| v / scale).collect(),
        });
    }
    Ok(samples)
}

/// Index chunks in window order; a trailing single sample is folded
/// into the previous chunk so every batch can feed the V-statistic.
fn batch_ranges(total: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + batch_size).min(total);
        ranges.push((start, end));
        start = end;
    }
    if ranges.len() >= 2 {
        let (ls, le) = *ranges.last().expect("non-empty");
        if le - ls < 2 {
            ranges.pop();
            ranges.last_mut().expect("non-empty").1 = le;
        }
    }
    ranges
}

fn run_training(
    model: &mut FloreModel,
    samples: &[TrainSample],
    op: &Rc<SketchOperator>,
    cfg: &TrainConfig,
    segment: Option<usize>,
    mask: Option<Vec<bool>>,
) -> Result<TrainReport> {
    if cfg.epochs == 0 {
        return Err(Error::param("epochs", cfg.epochs, "must be at least 1"));
    }
    if cfg.batch_size < 2 {
        return Err(Error::param(
            "batch_size",
            cfg.batch_size,
            "needs at least 2 samples per batch",
        ));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate >= 0.0) {
        return Err(Error::param(
            "learning_rate",
            cfg.learning_rate,
            "must be finite and non-negative",
        ));
    }
    let mcfg = model.config();
    if op.rows() != mcfg.m || op.cols() != mcfg.n {
        return Err(Error::DimensionMismatch {
            context: "training operator shape",
            expected: mcfg.m * mcfg.n,
            actual: op.rows() * op.cols(),
        });
    }
    if samples.len() < 2 {
        return Err(Error::param(
            "samples",
            samples.len(),
            "needs at least two training samples",
        ));
    }
    for sample in samples {
        if sample.measurement.len() != mcfg.m {
            return Err(Error::DimensionMismatch {
                context: "sample measurement length",
                expected: mcfg.m,
                actual: sample.measurement.len(),
            });
        }
        if sample.target.len() != mcfg.n {
            return Err(Error::DimensionMismatch {
                context: "sample target length",
                expected: mcfg.n,
                actual: sample.target.len(),
            });
        }
    }

    // Noise-slot samples are drawn once per window sample and reused in
    // every epoch, so repeated runs see identical batches.
    let d_z = model.config().noise_dim();
    let mut z_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let noise: Vec<Vec<f64>> = samples
        .iter()
        .map(|_| (0..d_z).map(|_| z_rng.sample(StandardNormal)).collect())
        .collect();

    let ranges = batch_ranges(samples.len(), cfg.batch_size);
    let m = model.config().m;
    let n = model.config().n;
    let mut optimizer = Adam::new(cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let before: Vec<Array2<f64>> = model
            .store()
            .iter()
            .map(|(_, _, v)| v.clone())
            .collect();
        let mut sums = LossRecord {
            con: 0.0,
            rec: 0.0,
            inv: 0.0,
            ort: 0.0,
            sp: 0.0,
            total: 0.0,
        };
        for &(start, end) in &ranges {
            let rows = end - start;
            let mut measurements = Array2::zeros((rows, m));
            let mut targets = Array2::zeros((rows, n));
            let mut noise_arr = Array2::zeros((rows, d_z));
            for (r, s) in (start..end).enumerate() {
                for (c, v) in samples[s].measurement.iter().enumerate() {
                    measurements[(r, c)] = *v;
                }
                for (c, v) in samples[s].target.iter().enumerate() {
                    targets[(r, c)] = *v;
                }
                for (c, v) in noise[s].iter().enumerate() {
                    noise_arr[(r, c)] = *v;
                }
            }
            let batch = LossBatch {
                measurements,
                targets,
                noise: noise_arr,
            };
            let (tape, graph, record) = compute_losses(model, op, &batch, &cfg.loss, segment)?;
            if !record.is_finite() {
                // Roll back to the last finite state before reporting.
                for (i, value) in before.into_iter().enumerate() {
                    *model.store_mut().value_mut(super::tape::ParamId(i)) = value;
                }
                return Err(Error::Diverged { epoch });
            }
            let grads = tape.backward(graph.total);
            drop(tape);
            optimizer.step(model.store_mut(), &grads, mask.as_deref());
            let w = rows as f64;
            sums.con += w * record.con;
            sums.rec += w * record.rec;
            sums.inv += w * record.inv;
            sums.ort += w * record.ort;
            sums.sp += w * record.sp;
            sums.total += w * record.total;
        }
        let count = samples.len() as f64;
        history.push(LossRecord {
            con: sums.con / count,
            rec: sums.rec / count,
            inv: sums.inv / count,
            ort: sums.ort / count,
            sp: sums.sp / count,
            total: sums.total / count,
        });
    }

    Ok(TrainReport {
        epochs_run: cfg.epochs,
        history,
    })
}

/// Trains the model on a window of counter snapshots against the
/// measurement operator, with refined point queries as targets. On
/// divergence the model is restored to its state before the failing
/// epoch and an error is returned.
pub fn train(
    model: &mut FloreModel,
    window: &CounterWindow,
    op: &Rc<SketchOperator>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if window.is_empty() {
        return Err(Error::param("window", 0usize, "needs at least one snapshot"));
    }
    let samples = window_samples(window, op, &cfg.em)?;
    run_training(model, &samples, op, cfg, None, None)
}

/// Trains the model on explicit (measurement, target) pairs — the
/// window-driven path with the target source swapped out, e.g. for
/// training against known frequencies instead of refined estimates.
pub fn train_on_samples(
    model: &mut FloreModel,
    samples: &[TrainSample],
    op: &Rc<SketchOperator>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    run_training(model, samples, op, cfg, None, None)
}

/// Adapts a conditioned model to one segment: only the coupling
/// subnets and the segment embedding move; the autoencoder pair stays
/// frozen so other segments keep their behavior.
pub fn finetune_segment(
    model: &mut FloreModel,
    segment: usize,
    window: &CounterWindow,
    op: &Rc<SketchOperator>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let Some(seg_cfg) = model.config().segments else {
        return Err(Error::Unsupported {
            reason: "fine-tuning needs a model built with segment conditioning".into(),
        });
    };
    if segment >= seg_cfg.max_segments {
        return Err(Error::param(
            "segment",
            segment,
            "must be below the configured segment count",
        ));
    }
    if window.is_empty() {
        return Err(Error::param("window", 0usize, "needs at least one snapshot"));
    }
    let mask = model.finetune_mask();
    let samples = window_samples(window, op, &cfg.em)?;
    run_training(model, &samples, op, cfg, Some(segment), Some(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::net::{init_model, ModelConfig, SegmentConditioning};
    use crate::model::tape::{ParamId, Tape};
    use crate::sketch::CountMin;
    use crate::stream::{generate_stream, KeyIndex, SyntheticSpec};
    use approx::assert_abs_diff_eq;

    /// Replays a zipf stream into a count-min grid, capturing window
    /// snapshots on the way, and returns everything training needs.
    fn window_fixture(
        keys: usize,
        items: u64,
        rows: usize,
        width: usize,
        capacity: usize,
        seed: u64,
    ) -> (CounterWindow, Rc<SketchOperator>, KeyIndex) {
        let spec = SyntheticSpec::zipf(keys, items, 1.4, seed);
        let (trace, truth) = generate_stream(&spec).unwrap();
        let mut cm = CountMin::new(rows, width, seed ^ 0x11).unwrap();
        let interval = (trace.len() as u64 / (capacity as u64 + 1)).max(1);
        let mut window = CounterWindow::new(capacity, interval).unwrap();
        for (key, value) in trace.iter() {
            cm.update(key, value as u64).unwrap();
            if window.record_update() {
                window.capture(cm.flatten());
            }
        }
        let op = Rc::new(SketchOperator::for_count_min(&cm, &truth.index).unwrap());
        (window, op, truth.index)
    }

    #[test]
    fn window_captures_on_interval_and_evicts_fifo() {
        let mut window = CounterWindow::new(3, 5).unwrap();
        let mut captured = 0u64;
        for tick in 1..=26u64 {
            if window.record_update() {
                window.capture(vec![tick as f64]);
                captured += 1;
            }
        }
        // Every 5th update triggers a capture: ticks 5, 10, 15, 20, 25.
        assert_eq!(captured, 5);
        assert_eq!(window.len(), 3);
        let kept: Vec<f64> = window.snapshots().map(|s| s[0]).collect();
        assert_eq!(kept, vec![15.0, 20.0, 25.0]);

        assert!(CounterWindow::new(0, 5).is_err());
        assert!(CounterWindow::new(3, 0).is_err());
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        let p = store.add("p", Array2::from_elem((1, 2), 4.0));
        let target = Array2::from_shape_vec((1, 2), vec![1.0, -2.0]).unwrap();
        let mut adam = Adam::new(0.05);
        for _ in 0..400 {
            let mut tape = Tape::new(&store);
            let pt = tape.param(p);
            let t = tape.input(target.clone());
            let loss = tape.mse(pt, t);
            let grads = tape.backward(loss);
            drop(tape);
            adam.step(&mut store, &grads, None);
        }
        assert_abs_diff_eq!(store.value(p)[(0, 0)], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(store.value(p)[(0, 1)], -2.0, epsilon = 1e-3);
    }

    #[test]
    fn adam_respects_mask_and_zero_learning_rate() {
        let mut store = ParamStore::new();
        let a = store.add("a", Array2::from_elem((1, 1), 2.0));
        let b = store.add("b", Array2::from_elem((1, 1), 3.0));
        let run = |store: &mut ParamStore, lr: f64, mask: Option<Vec<bool>>| {
            let mut adam = Adam::new(lr);
            let mut tape = Tape::new(store);
            let ta = tape.param(a);
            let tb = tape.param(b);
            let prod = tape.mul(ta, tb);
            let loss = tape.l1_mean(prod);
            let grads = tape.backward(loss);
            drop(tape);
            adam.step(store, &grads, mask.as_deref());
        };
        let mut masked = store.clone();
        run(&mut masked, 0.1, Some(vec![true, false]));
        assert_ne!(masked.value(a)[(0, 0)], 2.0);
        assert_eq!(masked.value(b)[(0, 0)], 3.0);

        let mut frozen = store.clone();
        run(&mut frozen, 0.0, None);
        assert_eq!(frozen.value(a)[(0, 0)], 2.0);
        assert_eq!(frozen.value(b)[(0, 0)], 3.0);
    }

    #[test]
    fn batches_fold_trailing_singletons() {
        assert_eq!(batch_ranges(7, 3), vec![(0, 3), (3, 7)]);
        assert_eq!(batch_ranges(7, 2), vec![(0, 2), (2, 4), (4, 7)]);
        assert_eq!(batch_ranges(4, 2), vec![(0, 2), (2, 4)]);
        assert_eq!(batch_ranges(6, 3), vec![(0, 3), (3, 6)]);
        assert_eq!(batch_ranges(2, 16), vec![(0, 2)]);
    }

    #[test]
    fn zero_learning_rate_training_has_a_flat_history() {
        let (window, op, _) = window_fixture(64, 4000, 2, 8, 12, 900);
        let mut model = init_model(ModelConfig::new(op.cols(), op.rows(), 9, 901)).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 4,
            learning_rate: 0.0,
            seed: 902,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &window, &op, &cfg).unwrap();
        assert_eq!(report.history.len(), 4);
        for later in &report.history[1..] {
            assert_eq!(*later, report.history[0]);
        }
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let (window, op, _) = window_fixture(64, 4000, 2, 8, 12, 910);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 911,
            ..TrainConfig::default()
        };
        let mut model_a = init_model(ModelConfig::new(op.cols(), op.rows(), 9, 912)).unwrap();
        let report_a = train(&mut model_a, &window, &op, &cfg).unwrap();
        let mut model_b = init_model(ModelConfig::new(op.cols(), op.rows(), 9, 912)).unwrap();
        let report_b = train(&mut model_b, &window, &op, &cfg).unwrap();
        assert_eq!(model_a.store(), model_b.store());
        for (a, b) in report_a.history.iter().zip(report_b.history.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn divergence_rolls_back_and_reports_the_epoch() {
        let (window, op, _) = window_fixture(64, 4000, 2, 8, 12, 920);
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 4,
            // An absurd step size drives subnet weights to overflow,
            // which a later loss evaluation reports as non-finite.
            learning_rate: 1e200,
            seed: 922,
            ..TrainConfig::default()
        };
        let mut model = init_model(ModelConfig::new(op.cols(), op.rows(), 9, 921)).unwrap();
        let failed_epoch = match train(&mut model, &window, &op, &cfg) {
            Err(Error::Diverged { epoch }) => epoch,
            other => panic!("expected divergence, got {other:?}"),
        };

        // The rollback contract: the model must equal a run stopped
        // right before the failing epoch (training is deterministic; a
        // failure inside the very first epoch restores the initial
        // parameters).
        let mut reference = init_model(ModelConfig::new(op.cols(), op.rows(), 9, 921)).unwrap();
        if failed_epoch > 0 {
            let truncated = TrainConfig {
                epochs: failed_epoch,
                ..cfg
            };
            train(&mut reference, &window, &op, &truncated).unwrap();
        }
        assert_eq!(model.store(), reference.store());
    }

    #[test]
    fn toy_training_reduces_the_consistency_loss() {
        // A small but real workload: the first epochs must improve
        // strictly and the consistency term must end up well below its
        // starting point.
        let (window, op, _) = window_fixture(256, 30_000, 3, 32, 64, 930);
        let mut model = init_model(ModelConfig::new(op.cols(), op.rows(), 48, 931)).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 16,
            seed: 932,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &window, &op, &cfg).unwrap();
        assert_eq!(report.history.len(), 30);
        for w in report.history[..5].windows(2) {
            assert!(
                w[1].total < w[0].total,
                "early epochs must strictly improve: {} -> {}",
                w[0].total,
                w[1].total
            );
        }
        let first = report.history.first().unwrap().con;
        let last = report.history.last().unwrap().con;
        assert!(
            last < 0.1 * first,
            "consistency loss {last} should fall below 10% of {first}"
        );
    }

    #[test]
    fn finetuning_updates_only_the_permitted_parameters() {
        let (window, op, _) = window_fixture(64, 4000, 2, 8, 12, 940);
        let mut config = ModelConfig::new(op.cols(), op.rows(), 9, 941);
        config.segments = Some(SegmentConditioning {
            max_segments: 2,
            embed_dim: 4,
        });
        let mut model = init_model(config).unwrap();
        let before: Vec<Array2<f64>> = model.store().iter().map(|(_, _, v)| v.clone()).collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 942,
            ..TrainConfig::default()
        };
        finetune_segment(&mut model, 1, &window, &op, &cfg).unwrap();
        let mask = model.finetune_mask();
        let mut any_moved = false;
        for (i, initial) in before.iter().enumerate() {
            let now = model.store().value(ParamId(i));
            if mask[i] {
                any_moved |= now != initial;
            } else {
                assert_eq!(
                    now,
                    initial,
                    "frozen parameter {} moved",
                    model.store().name(ParamId(i))
                );
            }
        }
        assert!(any_moved, "fine-tuning must move trainable parameters");
    }

    #[test]
    fn finetuning_preserves_other_segment_behavior() {
        let (window, op, _) = window_fixture(64, 6000, 2, 8, 24, 950);
        let mut config = ModelConfig::new(op.cols(), op.rows(), 9, 951);
        config.segments = Some(SegmentConditioning {
            max_segments: 2,
            embed_dim: 4,
        });
        let mut model = init_model(config).unwrap();

        // Give segment 0 some learned behavior first.
        let base_cfg = TrainConfig {
            epochs: 6,
            batch_size: 8,
            seed: 952,
            ..TrainConfig::default()
        };
        let samples = window_samples(&window, &op, &base_cfg.em).unwrap();
        run_training(&mut model, &samples, &op, &base_cfg, Some(0), None).unwrap();

        // Reference outputs for segment 0 on held-out inputs.
        let mut rng = ChaCha12Rng::seed_from_u64(953);
        let probes: Vec<(Vec<f64>, Vec<f64>)> = (0..16)
            .map(|_| {
                let b: Vec<f64> = (0..op.rows()).map(|_| rng.random_range(0.0..1.0)).collect();
                let z: Vec<f64> = (0..model.config().noise_dim())
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                (b, z)
            })
            .collect();
        let outputs = |model: &FloreModel| -> Vec<Vec<f64>> {
            probes
                .iter()
                .map(|(b, z)| model.forward_flow(b, z, Some(0)).unwrap())
                .collect()
        };
        let before = outputs(&model);

        let tune_cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            // Adaptation runs gently so existing segments keep their
            // behavior; the shared subnets still shift for segment 1
            // through its distinct conditioning input.
            learning_rate: 2e-4,
            seed: 954,
            ..TrainConfig::default()
        };
        finetune_segment(&mut model, 1, &window, &op, &tune_cfg).unwrap();
        let after = outputs(&model);

        // Segment 0's mean absolute output must drift by less than 10%.
        let mut gap = 0.0;
        let mut scale = 0.0;
        for (b, a) in before.iter().zip(after.iter()) {
            for (x, y) in b.iter().zip(a.iter()) {
                gap += (x - y).abs();
                scale += x.abs();
            }
        }
        let drift = gap / scale.max(1e-12);
        assert!(drift < 0.10, "segment-0 drift {drift} exceeds 10%");

        // Capability check: an unconditioned model cannot fine-tune.
        let mut plain = init_model(ModelConfig::new(op.cols(), op.rows(), 9, 955)).unwrap();
        assert!(matches!(
            finetune_segment(&mut plain, 0, &window, &op, &base_cfg),
            Err(Error::Unsupported { .. })
        ));
        assert!(finetune_segment(&mut model, 5, &window, &op, &tune_cfg).is_err());
    }

    #[test]
    fn invalid_training_inputs_are_rejected() {
        let (window, op, _) = window_fixture(64, 4000, 2, 8, 12, 960);
        let mut model = init_model(ModelConfig::new(op.cols(), op.rows(), 9, 961)).unwrap();
        let base = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 962,
            ..TrainConfig::default()
        };

        let mut zero_epochs = base.clone();
        zero_epochs.epochs = 0;
        assert!(train(&mut model, &window, &op, &zero_epochs).is_err());

        let mut tiny_batch = base.clone();
        tiny_batch.batch_size = 1;
        assert!(train(&mut model, &window, &op, &tiny_batch).is_err());

        let mut bad_lr = base.clone();
        bad_lr.learning_rate = f64::NAN;
        assert!(train(&mut model, &window, &op, &bad_lr).is_err());

        let empty = CounterWindow::new(4, 10).unwrap();
        assert!(train(&mut model, &empty, &op, &base).is_err());

        let mut wrong_model = init_model(ModelConfig::new(10, op.rows(), 9, 963)).unwrap();
        assert!(train(&mut wrong_model, &window, &op, &base).is_err());
    }
}
