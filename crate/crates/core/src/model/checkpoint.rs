//! Versioned binary checkpoints for the generator: architecture plus
//! every parameter matrix, with strict validation on load.

use std::path::Path;

use ndarray::Array2;

use super::net::{CouplingKind, FloreModel, ModelConfig, SegmentConditioning};
use crate::error::{Error, Result};
use crate::wire::{Reader, Writer};

const MAGIC: &[u8; 4] = b"FLCK";
const VERSION: u32 = 1;

/// Serializes a model to its checkpoint byte format.
pub fn checkpoint_bytes(model: &FloreModel) -> Vec<u8> {
    let cfg = model.config();
    let mut w = Writer::new();
    w.put_bytes(MAGIC);
    w.put_u32(VERSION);
    w.put_u64(cfg.n as u64);
    w.put_u64(cfg.m as u64);
    w.put_u64(cfg.latent as u64);
    w.put_u64(cfg.blocks as u64);
    w.put_u64(cfg.subnet_hidden as u64);
    w.put_u32(match cfg.coupling {
        CouplingKind::Affine => 0,
        CouplingKind::Additive => 1,
    });
    match cfg.segments {
        None => w.put_u32(0),
        Some(seg) => {
            w.put_u32(1);
            w.put_u64(seg.max_segments as u64);
            w.put_u64(seg.embed_dim as u64);
        }
    }
    w.put_u64(cfg.seed);
    w.put_u64(model.store().len() as u64);
    for (_, _, value) in model.store().iter() {
        w.put_u64(value.nrows() as u64);
        w.put_u64(value.ncols() as u64);
        for v in value.iter() {
            w.put_f64(*v);
        }
    }
    w.finish()
}

/// Reconstructs a model from checkpoint bytes, validating magic,
/// version, and that the parameters match the stored architecture.
pub fn model_from_bytes(bytes: &[u8]) -> Result<FloreModel> {
    let mut r = Reader::new(bytes, "model checkpoint");
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            what: "model checkpoint",
            found: version,
            expected: VERSION,
        });
    }
    let n = r.u64()? as usize;
    let m = r.u64()? as usize;
    let latent = r.u64()? as usize;
    let blocks = r.u64()? as usize;
    let subnet_hidden = r.u64()? as usize;
    let coupling = match r.u32()? {
        0 => CouplingKind::Affine,
        1 => CouplingKind::Additive,
        other => return Err(r.corrupt(format!("unknown coupling kind {other}"))),
    };
    let segments = match r.u32()? {
        0 => None,
        1 => Some(SegmentConditioning {
            max_segments: r.u64()? as usize,
            embed_dim: r.u64()? as usize,
        }),
        other => return Err(r.corrupt(format!("unknown conditioning tag {other}"))),
    };
    let seed = r.u64()?;
    let config = ModelConfig {
        n,
        m,
        latent,
        blocks,
        subnet_hidden,
        coupling,
        segments,
        seed,
    };

    let count = r.u64()? as usize;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let mut v = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            v.push(r.f64()?);
        }
        values.push(
            Array2::from_shape_vec((rows, cols), v).expect("shape matches element count"),
        );
    }
    r.finish()?;
    FloreModel::from_parts(config, values)
}

/// Writes a checkpoint file.
pub fn save_checkpoint(model: &FloreModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

/// Loads a checkpoint file.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FloreModel> {
    model_from_bytes(&std::fs::read(path)?)
}

/// Loads a checkpoint and verifies it matches an expected architecture,
/// for callers that require a specific deployed configuration.
pub fn load_checkpoint_expecting(
    path: impl AsRef<Path>,
    expected: &ModelConfig,
) -> Result<FloreModel> {
    let model = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(Error::IncompatibleCheckpoint {
            reason: format!(
                "stored architecture {:?} does not match the expected {:?}",
                model.config(),
                expected
            ),
        });
    }
    Ok(model)
}
