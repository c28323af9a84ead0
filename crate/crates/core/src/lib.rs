//! Tensor-decomposition denoising of log-Mel spectrograms for autoencoder
//! based machine-sound anomaly detection.

pub mod autoencoder;
pub mod error;
pub mod features;
pub mod metrics;
pub mod nmf;
pub mod nncp;
pub mod pipeline;
pub mod tensor;

pub use autoencoder::{AdamConfig, AdamState, AutoencoderParams, TrainConfig, TrainOutcome};
pub use error::{Error, Result};
pub use features::{abs_transform, build_tensor, log_mel, stack_frames, AudioClip, FrameVector, LogMel, MelConfig};
pub use metrics::{classify, pick_threshold, roc_auc, score_recording, Label, RocResult, ScoredRecording};
pub use nmf::{nmf_denoise, nmf_fit, NmfModel, SolverConfig};
pub use nncp::{nncp_denoise, nncp_fit, select_rank, CpModel};
pub use tensor::{cp_reconstruct, khatri_rao, matricize, mttkrp, tensorize, unfold, Matrix, Tensor3};
pub use pipeline::{DatasetLayout, ExperimentConfig, ResultRow, Setup, SynthOptions};
