//! The generator network: a measurement encoder, an invertible
//! coupling-flow core, and a bounded frequency decoder, with an optional
//! per-segment conditioning embedding.
//!
//! Layout of the flow's latent space (width `latent`): the first `d_b`
//! coordinates carry the encoded measurement, the remaining `d_z` carry
//! the free noise slot, so generation is `decode(flow(concat(enc_b(b),
//! z)))` and inversion recovers both slots from a frequency vector.
//!
//! Every coupling subnet's output layer starts at zero, which makes the
//! whole flow an exact (permutation-conjugated) identity at
//! initialization — training starts from a bijection and stays one by
//! construction.

use std::rc::Rc;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

use super::tape::{ParamId, ParamStore, Tape, Tensor};
use crate::error::{Error, Result};

/// Coupling-law choice for the flow blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingKind {
    /// Scale-and-shift coupling with a soft-clamped log-scale.
    Affine,
    /// Shift-only coupling (volume preserving).
    Additive,
}

/// Optional segment conditioning: a learned embedding of the segment
/// id is appended to every coupling subnet input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentConditioning {
    /// Number of distinct segment ids the model can represent.
    pub max_segments: usize,
    /// Width of the learned segment embedding.
    pub embed_dim: usize,
}

/// Architecture hyper-parameters for [`FloreModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Frequency-vector length the decoder emits.
    pub n: usize,
    /// Measurement-vector length the encoder consumes.
    pub m: usize,
    /// Flow latent width; the measurement slot takes roughly two
    /// thirds, the noise slot the rest (at least one coordinate).
    pub latent: usize,
    /// Number of coupling blocks.
    pub blocks: usize,
    /// Hidden width of each coupling subnet.
    pub subnet_hidden: usize,
    pub coupling: CouplingKind,
    pub segments: Option<SegmentConditioning>,
    /// Seed for weight initialization and block permutations.
    pub seed: u64,
}

/// Coupling blocks outside this range are rejected: one block mixes too
/// little, and stacks beyond five add cost without measurable benefit
/// at the problem sizes this crate targets.
pub const MIN_BLOCKS: usize = 2;
pub const MAX_BLOCKS: usize = 5;

impl ModelConfig {
    /// Small-model constructor with the defaults used throughout:
    /// three blocks, 32-wide subnets, affine couplings, no conditioning.
    pub fn new(n: usize, m: usize, latent: usize, seed: u64) -> Self {
        ModelConfig {
            n,
            m,
            latent,
            blocks: 3,
            subnet_hidden: 32,
            coupling: CouplingKind::Affine,
            segments: None,
            seed,
        }
    }

    /// Noise-slot width: a third of the latent, floored, at least 1.
    pub fn noise_dim(&self) -> usize {
        (self.latent / 3).max(1)
    }

    /// Measurement-slot width: the rest of the latent.
    pub fn measurement_dim(&self) -> usize {
        self.latent - self.noise_dim()
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", self.n, "must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::param("m", self.m, "must be at least 1"));
        }
        if self.latent < 3 {
            return Err(Error::param(
                "latent",
                self.latent,
                "needs at least 3 coordinates to split into measurement and noise slots",
            ));
        }
        if self.blocks < MIN_BLOCKS || self.blocks > MAX_BLOCKS {
            return Err(Error::param("blocks", self.blocks, "must be in 2..=5"));
        }
        if self.subnet_hidden == 0 {
            return Err(Error::param(
                "subnet_hidden",
                self.subnet_hidden,
                "must be at least 1",
            ));
        }
        if let Some(seg) = &self.segments {
            if seg.max_segments == 0 {
                return Err(Error::param(
                    "segments.max_segments",
                    seg.max_segments,
                    "must be at least 1",
                ));
            }
            if seg.embed_dim == 0 {
                return Err(Error::param(
                    "segments.embed_dim",
                    seg.embed_dim,
                    "must be at least 1",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Subnet {
    pub l1: Dense,
    pub l2: Dense,
}

#[derive(Debug, Clone)]
pub(crate) struct Block {
    pub s1: Subnet,
    pub t1: Subnet,
    pub s2: Subnet,
    pub t2: Subnet,
}

#[derive(Debug, Clone)]
pub(crate) struct ModelParams {
    pub enc_b: Dense,
    pub enc_f: Dense,
    pub dec_f: Dense,
    pub blocks: Vec<Block>,
    pub cond: Option<Dense>,
}

/// The full generator: parameters plus fixed block permutations.
#[derive(Debug, Clone)]
pub struct FloreModel {
    config: ModelConfig,
    store: ParamStore,
    params: ModelParams,
    perms: Vec<Rc<Vec<usize>>>,
    inv_perms: Vec<Rc<Vec<usize>>>,
}

fn xavier(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

fn dense(
    store: &mut ParamStore,
    rng: &mut ChaCha12Rng,
    name: &str,
    out_dim: usize,
    in_dim: usize,
    zero: bool,
) -> Dense {
    let w = if zero {
        Array2::zeros((out_dim, in_dim))
    } else {
        xavier(rng, out_dim, in_dim)
    };
    Dense {
        w: store.add(format!("{name}.w"), w),
        b: store.add(format!("{name}.b"), Array2::zeros((1, out_dim))),
    }
}

fn subnet(
    store: &mut ParamStore,
    rng: &mut ChaCha12Rng,
    name: &str,
    in_dim: usize,
    hidden: usize,
    out_dim: usize,
) -> Subnet {
    // The zero output layer makes the subnet emit 0 at initialization,
    // so every coupling starts as the identity map.
    Subnet {
        l1: dense(store, rng, &format!("{name}.l1"), hidden, in_dim, false),
        l2: dense(store, rng, &format!("{name}.l2"), out_dim, hidden, true),
    }
}

/// Builds a freshly initialized model for the given architecture.
pub fn init_model(config: ModelConfig) -> Result<FloreModel> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut store = ParamStore::new();
    let d_b = config.measurement_dim();
    let d_f = config.latent;
    let d1 = d_f / 2;
    let d2 = d_f - d1;
    let cond_dim = config.segments.map_or(0, |s| s.embed_dim);

    let enc_b = dense(&mut store, &mut rng, "enc_b", d_b, config.m, false);
    let enc_f = dense(&mut store, &mut rng, "enc_f", d_f, config.n, false);
    let dec_f = dense(&mut store, &mut rng, "dec_f", config.n, d_f, false);

    let mut blocks = Vec::with_capacity(config.blocks);
    let mut perms = Vec::with_capacity(config.blocks);
    let mut inv_perms = Vec::with_capacity(config.blocks);
    for l in 0..config.blocks {
        let h = config.subnet_hidden;
        blocks.push(Block {
            s1: subnet(&mut store, &mut rng, &format!("block{l}.s1"), d1 + cond_dim, h, d2),
            t1: subnet(&mut store, &mut rng, &format!("block{l}.t1"), d1 + cond_dim, h, d2),
            s2: subnet(&mut store, &mut rng, &format!("block{l}.s2"), d2 + cond_dim, h, d1),
            t2: subnet(&mut store, &mut rng, &format!("block{l}.t2"), d2 + cond_dim, h, d1),
        });
        let mut perm: Vec<usize> = (0..d_f).collect();
        for i in (1..d_f).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut inv = vec![0usize; d_f];
        for (dst, &src) in perm.iter().enumerate() {
            inv[src] = dst;
        }
        perms.push(Rc::new(perm));
        inv_perms.push(Rc::new(inv));
    }

    let cond = config
        .segments
        .map(|s| dense(&mut store, &mut rng, "cond", s.embed_dim, s.max_segments, false));

    Ok(FloreModel {
        config,
        store,
        params: ModelParams {
            enc_b,
            enc_f,
            dec_f,
            blocks,
            cond,
        },
        perms,
        inv_perms,
    })
}

impl FloreModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Rebuilds a model from a stored configuration and parameter set
    /// (checkpoint loading); the store must match the architecture's
    /// parameter layout exactly.
    pub(crate) fn from_parts(config: ModelConfig, values: Vec<Array2<f64>>) -> Result<Self> {
        let mut fresh = init_model(config)?;
        if values.len() != fresh.store.len() {
            return Err(Error::IncompatibleCheckpoint {
                reason: format!(
                    "parameter count {} does not match architecture ({} expected)",
                    values.len(),
                    fresh.store.len()
                ),
            });
        }
        for (i, value) in values.into_iter().enumerate() {
            let id = ParamId(i);
            if fresh.store.value(id).dim() != value.dim() {
                return Err(Error::IncompatibleCheckpoint {
                    reason: format!(
                        "parameter `{}` has shape {:?}, expected {:?}",
                        fresh.store.name(id),
                        value.dim(),
                        fresh.store.value(id).dim()
                    ),
                });
            }
            *fresh.store.value_mut(id) = value;
        }
        Ok(fresh)
    }

    fn validate_segment(&self, segment: Option<usize>) -> Result<()> {
        match (self.config.segments, segment) {
            (None, Some(_)) => Err(Error::Unsupported {
                reason: "model was built without segment conditioning".into(),
            }),
            (Some(s), Some(idx)) if idx >= s.max_segments => Err(Error::param(
                "segment",
                idx,
                "must be below the configured segment count",
            )),
            _ => Ok(()),
        }
    }

    /// One-hot embedding of a segment id, broadcast over the batch.
    fn cond_tensor(
        &self,
        tape: &mut Tape,
        batch: usize,
        segment: Option<usize>,
    ) -> Option<Tensor> {
        let seg_cfg = self.config.segments?;
        let idx = segment?;
        let mut onehot = Array2::zeros((batch, seg_cfg.max_segments));
        for r in 0..batch {
            onehot[(r, idx)] = 1.0;
        }
        let one = tape.input(onehot);
        let cond = self.params.cond.as_ref().expect("conditioned model");
        let w = tape.param(cond.w);
        let b = tape.param(cond.b);
        let lin = tape.matmul_t(one, w);
        let biased = tape.add_row(lin, b);
        Some(tape.relu(biased))
    }

    fn subnet_graph(
        &self,
        tape: &mut Tape,
        net: &Subnet,
        x: Tensor,
        cond: Option<Tensor>,
    ) -> Tensor {
        let fed = match cond {
            Some(c) => tape.concat_cols(x, c),
            None => x,
        };
        let w1 = tape.param(net.l1.w);
        let b1 = tape.param(net.l1.b);
        let lin1 = tape.matmul_t(fed, w1);
        let act1_in = tape.add_row(lin1, b1);
        let act1 = tape.relu(act1_in);
        let w2 = tape.param(net.l2.w);
        let b2 = tape.param(net.l2.b);
        let lin2 = tape.matmul_t(act1, w2);
        tape.add_row(lin2, b2)
    }

    /// Soft log-scale clamp `2·tanh(raw/2)`, bounding scales to `e^±2`.
    fn clamp_log_scale(&self, tape: &mut Tape, raw: Tensor) -> Tensor {
        let half = tape.scale(raw, 0.5);
        let squashed = tape.tanh(half);
        tape.scale(squashed, 2.0)
    }

    pub(crate) fn encode_measurement_graph(&self, tape: &mut Tape, b: Tensor) -> Tensor {
        let w = tape.param(self.params.enc_b.w);
        let bias = tape.param(self.params.enc_b.b);
        let lin = tape.matmul_t(b, w);
        let biased = tape.add_row(lin, bias);
        tape.tanh(biased)
    }

    pub(crate) fn encode_frequencies_graph(&self, tape: &mut Tape, f: Tensor) -> Tensor {
        let w = tape.param(self.params.enc_f.w);
        let bias = tape.param(self.params.enc_f.b);
        let lin = tape.matmul_t(f, w);
        let biased = tape.add_row(lin, bias);
        tape.tanh(biased)
    }

    /// Decoder with a bounded (tanh) output, so generated frequency
    /// vectors stay inside `[-1, 1]` before rescaling.
    pub(crate) fn decode_graph(&self, tape: &mut Tape, y: Tensor) -> Tensor {
        let w = tape.param(self.params.dec_f.w);
        let bias = tape.param(self.params.dec_f.b);
        let lin = tape.matmul_t(y, w);
        let biased = tape.add_row(lin, bias);
        tape.tanh(biased)
    }

    pub(crate) fn flow_forward_graph(
        &self,
        tape: &mut Tape,
        x: Tensor,
        segment: Option<usize>,
    ) -> Tensor {
        let batch = tape.value(x).nrows();
        let cond = self.cond_tensor(tape, batch, segment);
        let d1 = self.config.latent / 2;
        let d2 = self.config.latent - d1;
        let mut cur = x;
        for (l, block) in self.params.blocks.iter().enumerate() {
            cur = tape.permute_cols(cur, self.perms[l].clone());
            let u1 = tape.slice_cols(cur, 0, d1);
            let u2 = tape.slice_cols(cur, d1, d2);
            let t1 = self.subnet_graph(tape, &block.t1, u1, cond);
            let v2 = match self.config.coupling {
                CouplingKind::Affine => {
                    let s_raw = self.subnet_graph(tape, &block.s1, u1, cond);
                    let s = self.clamp_log_scale(tape, s_raw);
                    let es = tape.exp(s);
                    let scaled = tape.mul(u2, es);
                    tape.add(scaled, t1)
                }
                CouplingKind::Additive => tape.add(u2, t1),
            };
            let t2 = self.subnet_graph(tape, &block.t2, v2, cond);
            let v1 = match self.config.coupling {
                CouplingKind::Affine => {
                    let s_raw = self.subnet_graph(tape, &block.s2, v2, cond);
                    let s = self.clamp_log_scale(tape, s_raw);
                    let es = tape.exp(s);
                    let scaled = tape.mul(u1, es);
                    tape.add(scaled, t2)
                }
                CouplingKind::Additive => tape.add(u1, t2),
            };
            cur = tape.concat_cols(v1, v2);
        }
        cur
    }

    pub(crate) fn flow_inverse_graph(
        &self,
        tape: &mut Tape,
        y: Tensor,
        segment: Option<usize>,
    ) -> Tensor {
        let batch = tape.value(y).nrows();
        let cond = self.cond_tensor(tape, batch, segment);
        let d1 = self.config.latent / 2;
        let d2 = self.config.latent - d1;
        let mut cur = y;
        for (l, block) in self.params.blocks.iter().enumerate().rev() {
            let v1 = tape.slice_cols(cur, 0, d1);
            let v2 = tape.slice_cols(cur, d1, d2);
            let t2 = self.subnet_graph(tape, &block.t2, v2, cond);
            let u1 = match self.config.coupling {
                CouplingKind::Affine => {
                    let s_raw = self.subnet_graph(tape, &block.s2, v2, cond);
                    let s = self.clamp_log_scale(tape, s_raw);
                    let neg_s = tape.neg(s);
                    let es = tape.exp(neg_s);
                    let shifted = tape.sub(v1, t2);
                    tape.mul(shifted, es)
                }
                CouplingKind::Additive => tape.sub(v1, t2),
            };
            let t1 = self.subnet_graph(tape, &block.t1, u1, cond);
            let u2 = match self.config.coupling {
                CouplingKind::Affine => {
                    let s_raw = self.subnet_graph(tape, &block.s1, u1, cond);
                    let s = self.clamp_log_scale(tape, s_raw);
                    let neg_s = tape.neg(s);
                    let es = tape.exp(neg_s);
                    let shifted = tape.sub(v2, t1);
                    tape.mul(shifted, es)
                }
                CouplingKind::Additive => tape.sub(v2, t1),
            };
            let joined = tape.concat_cols(u1, u2);
            cur = tape.permute_cols(joined, self.inv_perms[l].clone());
        }
        cur
    }

    /// Full generation graph from a measurement batch and a noise batch.
    pub(crate) fn generate_graph(
        &self,
        tape: &mut Tape,
        b: Tensor,
        z: Tensor,
        segment: Option<usize>,
    ) -> Tensor {
        let hb = self.encode_measurement_graph(tape, b);
        let x0 = tape.concat_cols(hb, z);
        let y = self.flow_forward_graph(tape, x0, segment);
        self.decode_graph(tape, y)
    }

    /// Generation graph starting from an already-built flow input.
    pub(crate) fn generate_from_latent_graph(
        &self,
        tape: &mut Tape,
        x0: Tensor,
        segment: Option<usize>,
    ) -> Tensor {
        let y = self.flow_forward_graph(tape, x0, segment);
        self.decode_graph(tape, y)
    }

    /// Inversion graph: frequency batch → full flow-input latent.
    pub(crate) fn invert_graph(
        &self,
        tape: &mut Tape,
        f: Tensor,
        segment: Option<usize>,
    ) -> Tensor {
        let y = self.encode_frequencies_graph(tape, f);
        self.flow_inverse_graph(tape, y, segment)
    }

    /// Generates one (normalized) frequency vector from a measurement
    /// vector and a noise-slot sample.
    pub fn forward_flow(
        &self,
        b: &[f64],
        z: &[f64],
        segment: Option<usize>,
    ) -> Result<Vec<f64>> {
        self.validate_segment(segment)?;
        if b.len() != self.config.m {
            return Err(Error::DimensionMismatch {
                context: "forward_flow measurement",
                expected: self.config.m,
                actual: b.len(),
            });
        }
        if z.len() != self.config.noise_dim() {
            return Err(Error::DimensionMismatch {
                context: "forward_flow noise slot",
                expected: self.config.noise_dim(),
                actual: z.len(),
            });
        }
        let mut tape = Tape::new(&self.store);
        let tb = tape.input(Array2::from_shape_vec((1, b.len()), b.to_vec()).expect("shape"));
        let tz = tape.input(Array2::from_shape_vec((1, z.len()), z.to_vec()).expect("shape"));
        let f = self.generate_graph(&mut tape, tb, tz, segment);
        Ok(tape.value(f).row(0).to_vec())
    }

    /// Inverts a (normalized) frequency vector into its measurement-slot
    /// and noise-slot latents.
    pub fn inverse_flow(
        &self,
        f: &[f64],
        segment: Option<usize>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate_segment(segment)?;
        if f.len() != self.config.n {
            return Err(Error::DimensionMismatch {
                context: "inverse_flow frequencies",
                expected: self.config.n,
                actual: f.len(),
            });
        }
        let mut tape = Tape::new(&self.store);
        let tf = tape.input(Array2::from_shape_vec((1, f.len()), f.to_vec()).expect("shape"));
        let latent = self.invert_graph(&mut tape, tf, segment);
        let row = tape.value(latent).row(0);
        let d_b = self.config.measurement_dim();
        Ok((row.slice(ndarray::s![..d_b]).to_vec(), row.slice(ndarray::s![d_b..]).to_vec()))
    }

    /// Parameter ids whose gradients a fine-tuning pass may apply:
    /// coupling subnets and the conditioning embedding, with the
    /// autoencoder pair frozen.
    pub(crate) fn finetune_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.store.len()];
        let mut mark = |d: &Dense| {
            mask[d.w.0] = true;
            mask[d.b.0] = true;
        };
        for block in &self.params.blocks {
            for net in [&block.s1, &block.t1, &block.s2, &block.t2] {
                mark(&net.l1);
                mark(&net.l2);
            }
        }
        if let Some(c) = &self.params.cond {
            mark(c);
        }
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn randomize(model: &mut FloreModel, seed: u64) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = model.store().len();
        for i in 0..n {
            let v = model.store_mut().value_mut(ParamId(i));
            for e in v.iter_mut() {
                *e += 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }

    fn sample_vec(rng: &mut ChaCha12Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn round_trip_error(model: &FloreModel, seed: u64, segment: Option<usize>) -> f64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((8, model.config().latent), |_| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let mut tape = Tape::new(model.store());
        let tx = tape.input(x.clone());
        let fwd = model.flow_forward_graph(&mut tape, tx, segment);
        let back = model.flow_inverse_graph(&mut tape, fwd, segment);
        let recovered = tape.value(back);
        (recovered - &x)
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn flow_is_identity_conjugate_at_initialization() {
        // Zeroed subnet outputs make every coupling the identity, so
        // forward-then-inverse is exact permutation bookkeeping.
        let model = init_model(ModelConfig::new(24, 12, 9, 40)).unwrap();
        assert_eq!(round_trip_error(&model, 7, None), 0.0);
    }

    #[test]
    fn flow_round_trip_survives_random_parameters() {
        for kind in [CouplingKind::Affine, CouplingKind::Additive] {
            let mut config = ModelConfig::new(24, 12, 12, 41);
            config.coupling = kind;
            let mut model = init_model(config).unwrap();
            randomize(&mut model, 99);
            let err = round_trip_error(&model, 8, None);
            assert!(err < 1e-10, "{kind:?} round trip error {err}");
        }
    }

    #[test]
    fn forward_flow_output_is_bounded_and_sized() {
        let mut model = init_model(ModelConfig::new(30, 10, 9, 42)).unwrap();
        randomize(&mut model, 5);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let b = sample_vec(&mut rng, 10);
        let z = sample_vec(&mut rng, model.config().noise_dim());
        let f = model.forward_flow(&b, &z, None).unwrap();
        assert_eq!(f.len(), 30);
        assert!(f.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn inverse_flow_returns_both_latent_slots() {
        let mut model = init_model(ModelConfig::new(30, 10, 9, 43)).unwrap();
        randomize(&mut model, 6);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let f = sample_vec(&mut rng, 30);
        let (b_slot, z_slot) = model.inverse_flow(&f, None).unwrap();
        assert_eq!(b_slot.len(), model.config().measurement_dim());
        assert_eq!(z_slot.len(), model.config().noise_dim());
    }

    #[test]
    fn generation_then_inversion_recovers_the_flow_input() {
        // dec_f and enc_f are not inverses, but the flow itself is: the
        // latent produced by generate must invert back through the flow
        // alone.
        let mut model = init_model(ModelConfig::new(20, 8, 9, 44)).unwrap();
        randomize(&mut model, 11);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let b = Array2::from_shape_fn((4, 8), |_| rng.sample::<f64, _>(StandardNormal));
        let z = Array2::from_shape_fn((4, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let mut tape = Tape::new(model.store());
        let tb = tape.input(b);
        let tz = tape.input(z);
        let hb = model.encode_measurement_graph(&mut tape, tb);
        let x0 = tape.concat_cols(hb, tz);
        let y = model.flow_forward_graph(&mut tape, x0, None);
        let x_back = model.flow_inverse_graph(&mut tape, y, None);
        let orig = tape.value(x0).clone();
        let recovered = tape.value(x_back);
        let err = (recovered - &orig).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(err < 1e-10, "round trip through generation {err}");
    }

    #[test]
    fn same_seed_builds_identical_models() {
        let a = init_model(ModelConfig::new(16, 8, 6, 77)).unwrap();
        let b = init_model(ModelConfig::new(16, 8, 6, 77)).unwrap();
        assert_eq!(a.store(), b.store());
        let c = init_model(ModelConfig::new(16, 8, 6, 78)).unwrap();
        assert_ne!(a.store(), c.store());
    }

    #[test]
    fn segment_conditioning_changes_outputs_and_is_validated() {
        let mut config = ModelConfig::new(16, 8, 9, 50);
        config.segments = Some(SegmentConditioning {
            max_segments: 3,
            embed_dim: 4,
        });
        let mut model = init_model(config).unwrap();
        randomize(&mut model, 13);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let b = sample_vec(&mut rng, 8);
        let z = sample_vec(&mut rng, model.config().noise_dim());
        let f0 = model.forward_flow(&b, &z, Some(0)).unwrap();
        let f1 = model.forward_flow(&b, &z, Some(1)).unwrap();
        assert_ne!(f0, f1, "different segments must condition differently");
        assert!(model.forward_flow(&b, &z, Some(3)).is_err());

        // Conditioned round trips must still be exact.
        let err = round_trip_error(&model, 21, Some(2));
        assert!(err < 1e-10, "conditioned round trip {err}");

        let plain = init_model(ModelConfig::new(16, 8, 9, 51)).unwrap();
        assert!(matches!(
            plain.forward_flow(&b, &z, Some(0)),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn invalid_architectures_are_rejected() {
        assert!(init_model(ModelConfig::new(0, 8, 9, 1)).is_err());
        assert!(init_model(ModelConfig::new(16, 0, 9, 1)).is_err());
        assert!(init_model(ModelConfig::new(16, 8, 2, 1)).is_err());
        let mut bad_blocks = ModelConfig::new(16, 8, 9, 1);
        bad_blocks.blocks = 1;
        assert!(init_model(bad_blocks.clone()).is_err());
        bad_blocks.blocks = 6;
        assert!(init_model(bad_blocks).is_err());
        let mut bad_hidden = ModelConfig::new(16, 8, 9, 1);
        bad_hidden.subnet_hidden = 0;
        assert!(init_model(bad_hidden).is_err());
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let model = init_model(ModelConfig::new(16, 8, 9, 60)).unwrap();
        let good_b = vec![0.0; 8];
        let good_z = vec![0.0; model.config().noise_dim()];
        assert!(model.forward_flow(&good_b[..7], &good_z, None).is_err());
        assert!(model.forward_flow(&good_b, &good_z[..1], None).is_err());
        assert!(model.inverse_flow(&vec![0.0; 15], None).is_err());
    }
}
