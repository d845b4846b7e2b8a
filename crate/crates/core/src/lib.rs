//! Streaming knife-threat inference.
//!
//! Per-frame evidence from three model families (a scene classifier,
//! hand/knife instance segmentation and pose keypoints) arrives as
//! [`frame::FrameRecord`]s. [`fusion`] grades each frame, [`temporal`] turns
//! graded frames into debounced alerts, and [`eval`] scores offline
//! predictions against labelled manifests.

pub mod backend;
pub mod eval;
pub mod frame;
pub mod fusion;
pub mod jsonl;
pub mod temporal;

pub use backend::{open_backend, Capabilities, DetectorBackend, ScenarioScript, Scene};
pub use eval::{
    confusion_matrix, make_splits, per_class_accuracy, render_report, ConfusionMatrix,
    EvalReport, ReportFormat, Split, SplitAssignment, SplitRatios,
};
pub use frame::{
    parse_frame_record, validate_manifest, BoundingBox, ClassLabel, ClassScores, FrameRecord,
    InstanceDetection, ManifestEntry, ManifestStats, PoseKeypoint,
};
pub use fusion::{assess_frame, FusionConfig, ThreatAssessment, ThreatLevel};
pub use temporal::{AlertEvent, AlertKind, AlertTracker, TemporalConfig};
