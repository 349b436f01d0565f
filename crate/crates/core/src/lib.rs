//! Word detection by semantic segmentation with border fences.
//!
//! Ground-truth words are rasterized into three classes (background, text
//! and a border ring around every word), a small dilated-convolution
//! network is trained on them with a per-image inverse-frequency weighted
//! softmax loss, and at inference the per-scale probability maps are fused
//! by voting before connected components of the text class become word
//! boxes.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod extract;
pub mod fusion;
pub mod grid;
pub mod io;
pub mod labelgen;
pub mod overlay;
pub mod pipeline;
pub mod synth;
pub mod toynet;
pub mod wsloss;

pub use error::{Error, Result};
pub use eval::{end_to_end_score, iou, match_detections, DetectionReport};
pub use extract::{components_to_boxes, connected_components, ComponentMap};
pub use fusion::{fuse_votes, infer_multiscale, ScaleSet};
pub use grid::{argmax_channels, bilinear_resize, softmax_channels, BoxI, GridF, GridU8};
pub use labelgen::{class_counts, rasterize_labels, LabelMap, WordAnnotation};
pub use toynet::{backward, dilated_conv2d, forward, ConvLayer, NetworkParams, TrainConfig};
pub use wsloss::{compute_class_weights, weighted_softmax_loss, ClassWeights, LossOutput};
