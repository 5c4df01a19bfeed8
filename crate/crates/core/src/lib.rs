//! WiFi CSI pose estimation in two phases: self-supervised representation
//! learning on CSI amplitude tensors (masked reconstruction, temporal
//! contrastive learning, uniformity regularization) followed by
//! skeleton-topology-constrained pose decoding (task prompt, graph
//! convolution over the kinematic tree, joint attention).
//!
//! The crate ships the full data model (CSI tensors, image-like reshaping,
//! patch embedding), the three masking strategies, the encoder/decoder and
//! every training loss with verified analytic gradients, the pose decoder,
//! pose metrics (MPJPE, PA-MPJPE, PCK), a deterministic synthetic CSI
//! generator, and the training/evaluation pipeline behind the `wifipose`
//! CLI.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dataset_io;
pub mod embed;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod masking;
pub mod metrics;
pub mod params;
pub mod pose;
pub mod pretrain;
pub mod skeleton;
pub mod synth;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{PipelineConfig, TrainConfig};
pub use data::{CsiDims, CsiSample, DatasetMeta, ImageLikeCsi, PoseSample};
pub use dataset_io::Dataset;
pub use embed::PatchTokens;
pub use encoder::EncoderConfig;
pub use error::{Error, Result};
pub use masking::{MaskSpec, MaskStrategy};
pub use metrics::MetricReport;
pub use pose::PoseDecoderConfig;
pub use skeleton::SkeletonGraph;
pub use synth::SynthConfig;
