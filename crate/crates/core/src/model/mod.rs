//! Generative recovery model: an invertible coupling-flow generator
//! that maps sketch measurements (plus a noise slot) to frequency
//! vectors, trained against sketch-consistency and distribution-match
//! objectives, with streaming window collection, Adam training,
//! recovery, and checkpointing.

pub mod checkpoint;
pub mod loss;
pub mod net;
pub mod recover;
pub mod tape;
pub mod train;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, load_checkpoint_expecting, model_from_bytes,
    save_checkpoint,
};
pub use loss::{
    compute_losses, median_heuristic_widths, mmd_estimate, mmd_with_widths, DiscrepancyKind,
    LossBatch, LossGraph, LossOptions, LossRecord, LossWeights,
};
pub use net::{
    init_model, CouplingKind, FloreModel, ModelConfig, SegmentConditioning, MAX_BLOCKS, MIN_BLOCKS,
};
pub use recover::{recover, RecoveryOutcome};
pub use tape::{Gradients, ParamId, ParamStore, Tape, Tensor};
pub use train::{
    finetune_segment, snapshot_scale, train, train_on_samples, window_samples, Adam,
    CounterWindow, TrainConfig, TrainReport, TrainSample,
};
