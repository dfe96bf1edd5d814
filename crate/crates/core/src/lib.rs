//! Ensembling of circle-representation detections.
//!
//! [`fusion::wcf`] merges per-model detections by score-weighted circle
//! averaging and keeps fused circles that are either confident or
//! corroborated by several models. Greedy circle NMS and Soft-NMS are
//! provided as baselines, and [`evaluation`] scores any of them with
//! COCO-style metrics over circle IoU.

pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod synth;

pub use error::{Error, Result};
pub use evaluation::{evaluate, EvalReport, GroundTruth};
pub use fusion::{
    circle_nms, circle_soft_nms, wcf, wcf_merge, Detection, FusedCircle, SoftNmsConfig,
    SoftNmsMode, ThresholdRule, WcfConfig,
};
pub use geometry::{ciou, Circle, Frame};
