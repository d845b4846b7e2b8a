//! Frame evidence types, the JSONL wire format and dataset-manifest checks.
//!
//! Coordinates are normalized to `[0, 1]` with the origin at the top-left
//! corner and `y` growing downward, so "above" means a smaller `y`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when a box touches the right or bottom frame edge.
pub const EDGE_TOLERANCE: f64 = 1e-9;
/// Slack allowed on the classifier probability sum.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;
/// Slack allowed when comparing a mask area against its box area.
pub const MASK_AREA_TOLERANCE: f64 = 1e-6;

/// Axis-aligned box in normalized frame coordinates, encoded on the wire as
/// `[x, y, w, h]` (top-left corner plus size).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting anything outside the unit frame.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, String> {
        let b = Self { x, y, w, h };
        b.check()?;
        Ok(b)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Euclidean distance between the centers of two boxes.
    pub fn center_distance(&self, other: &BoundingBox) -> f64 {
        let (ax, ay) = self.center();
        let (bx, by) = other.center();
        (ax - bx).hypot(ay - by)
    }

    pub fn check(&self) -> Result<(), String> {
        let Self { x, y, w, h } = *self;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err("box values must be finite".into());
        }
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(format!("box origin ({x}, {y}) outside [0,1]"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(format!("box size ({w}, {h}) must be positive"));
        }
        if x + w > 1.0 + EDGE_TOLERANCE || y + h > 1.0 + EDGE_TOLERANCE {
            return Err(format!("box [{x}, {y}, {w}, {h}] extends past the frame"));
        }
        Ok(())
    }
}

impl From<[f64; 4]> for BoundingBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        Self { x, y, w, h }
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionLabel {
    Hand,
    Knife,
}

/// One segmented instance (hand or knife) with its detector confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDetection {
    pub label: DetectionLabel,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub conf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_area: Option<f64>,
}

impl InstanceDetection {
    pub fn new(label: DetectionLabel, bbox: BoundingBox, conf: f64) -> Self {
        Self {
            label,
            bbox,
            conf,
            mask_area: None,
        }
    }
}

/// Three-way classifier output: threat, no threat without hand, no threat with hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub threat: f64,
    pub no_threat: f64,
    pub hand: f64,
}

impl ClassScores {
    pub fn new(threat: f64, no_threat: f64, hand: f64) -> Result<Self, String> {
        let s = Self {
            threat,
            no_threat,
            hand,
        };
        s.check()?;
        Ok(s)
    }

    pub fn check(&self) -> Result<(), String> {
        for (name, v) in [
            ("threat", self.threat),
            ("no_threat", self.no_threat),
            ("hand", self.hand),
        ] {
            if !unit(v) {
                return Err(format!("{name} probability {v} outside [0,1]"));
            }
        }
        let sum = self.threat + self.no_threat + self.hand;
        if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
            return Err(format!("scores sum to {sum}, expected 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum KeypointName {
    Wrist,
    Elbow,
    Shoulder,
    Other(String),
}

impl KeypointName {
    pub fn as_str(&self) -> &str {
        match self {
            KeypointName::Wrist => "wrist",
            KeypointName::Elbow => "elbow",
            KeypointName::Shoulder => "shoulder",
            KeypointName::Other(s) => s,
        }
    }
}

impl From<String> for KeypointName {
    fn from(s: String) -> Self {
        match s.as_str() {
            "wrist" => KeypointName::Wrist,
            "elbow" => KeypointName::Elbow,
            "shoulder" => KeypointName::Shoulder,
            _ => KeypointName::Other(s),
        }
    }
}

impl From<KeypointName> for String {
    fn from(k: KeypointName) -> Self {
        k.as_str().to_owned()
    }
}

impl Serialize for KeypointName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for KeypointName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d).map(KeypointName::from)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseKeypoint {
    pub name: KeypointName,
    pub x: f64,
    pub y: f64,
    pub conf: f64,
}

/// All model evidence for one video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub stream_id: String,
    pub frame_id: u64,
    pub ts_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<ClassScores>,
    #[serde(default)]
    pub detections: Vec<InstanceDetection>,
    #[serde(default)]
    pub keypoints: Vec<PoseKeypoint>,
}

impl FrameRecord {
    /// A frame with no evidence from any channel.
    pub fn empty(stream_id: impl Into<String>, frame_id: u64, ts_ms: u64) -> Self {
        Self {
            stream_id: stream_id.into(),
            frame_id,
            ts_ms,
            scores: None,
            detections: Vec::new(),
            keypoints: Vec::new(),
        }
    }

    pub fn is_evidence_free(&self) -> bool {
        self.scores.is_none() && self.detections.is_empty() && self.keypoints.is_empty()
    }

    /// Checks every value-level invariant, reporting the offending field path.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if let Some(scores) = &self.scores {
            scores.check().map_err(|r| ("scores".to_owned(), r))?;
        }
        for (i, det) in self.detections.iter().enumerate() {
            det.bbox
                .check()
                .map_err(|r| (format!("detections[{i}].box"), r))?;
            if !unit(det.conf) {
                return Err((
                    format!("detections[{i}].conf"),
                    format!("confidence {} outside [0,1]", det.conf),
                ));
            }
            if let Some(area) = det.mask_area {
                if !(area.is_finite() && area > 0.0 && area <= 1.0) {
                    return Err((
                        format!("detections[{i}].mask_area"),
                        format!("mask area {area} outside (0,1]"),
                    ));
                }
                if area > det.bbox.area() + MASK_AREA_TOLERANCE {
                    return Err((
                        format!("detections[{i}].mask_area"),
                        format!("mask area {area} exceeds box area {}", det.bbox.area()),
                    ));
                }
            }
        }
        for (i, kp) in self.keypoints.iter().enumerate() {
            for (field, v) in [("x", kp.x), ("y", kp.y), ("conf", kp.conf)] {
                if !unit(v) {
                    return Err((
                        format!("keypoints[{i}].{field}"),
                        format!("value {v} outside [0,1]"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Serializes to a single JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("frame records always serialize")
    }
}

fn unit(v: f64) -> bool {
    v.is_finite() && (0.0..=1.0).contains(&v)
}

/// Rejection of one input line, tagged with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: malformed JSON: {message}")]
    MalformedJson { line: usize, message: String },
    #[error("line {line}: schema violation at `{path}`: {reason}")]
    SchemaViolation {
        line: usize,
        path: String,
        reason: String,
    },
}

impl ParseError {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::MalformedJson { .. } => "malformed_json",
            ParseError::SchemaViolation { .. } => "schema_violation",
        }
    }

    pub fn line(&self) -> usize {
        match self {
            ParseError::MalformedJson { line, .. } | ParseError::SchemaViolation { line, .. } => {
                *line
            }
        }
    }
}

/// Deserializes one JSON line into `T`, classifying failures as syntax or
/// schema problems and recording the JSON path of schema problems.
pub fn parse_json_line<T: serde::de::DeserializeOwned>(
    text: &str,
    line: usize,
) -> Result<T, ParseError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = match serde_path_to_error::deserialize(&mut de) {
        Ok(v) => v,
        Err(e) => return Err(classify(e, line)),
    };
    de.end().map_err(|e| ParseError::MalformedJson {
        line,
        message: e.to_string(),
    })?;
    Ok(value)
}

fn classify(err: serde_path_to_error::Error<serde_json::Error>, line: usize) -> ParseError {
    use serde_json::error::Category;

    let path = err.path().to_string();
    let inner = err.into_inner();
    match inner.classify() {
        Category::Data => {
            let message = inner.to_string();
            let path = match missing_field(&message) {
                Some(field) if path == "." => field.to_owned(),
                Some(field) => format!("{path}.{field}"),
                None => path,
            };
            ParseError::SchemaViolation {
                line,
                path,
                reason: strip_position(&message).to_owned(),
            }
        }
        Category::Io | Category::Syntax | Category::Eof => ParseError::MalformedJson {
            line,
            message: inner.to_string(),
        },
    }
}

fn missing_field(message: &str) -> Option<&str> {
    let rest = message.strip_prefix("missing field `")?;
    rest.split('`').next()
}

fn strip_position(message: &str) -> &str {
    match message.rfind(" at line ") {
        Some(i) => &message[..i],
        None => message,
    }
}

/// Parses and validates one FrameRecord line. Unknown fields are ignored.
pub fn parse_frame_record(line: &str) -> Result<FrameRecord, ParseError> {
    parse_frame_record_at(line, 1)
}

/// As [`parse_frame_record`], attributing errors to the given line number.
pub fn parse_frame_record_at(text: &str, line: usize) -> Result<FrameRecord, ParseError> {
    let record: FrameRecord = parse_json_line(text, line)?;
    record
        .validate()
        .map_err(|(path, reason)| ParseError::SchemaViolation { line, path, reason })?;
    Ok(record)
}

/// Ground-truth class of a dataset sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Threat,
    NoThreat,
    Hand,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Threat, ClassLabel::NoThreat, ClassLabel::Hand];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Threat => 0,
            ClassLabel::NoThreat => 1,
            ClassLabel::Hand => 2,
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ClassLabel::Threat => "Threat",
            ClassLabel::NoThreat => "No Threat",
            ClassLabel::Hand => "Hand",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub label: ClassLabel,
}

impl ManifestEntry {
    pub fn new(sample_id: impl Into<String>, label: ClassLabel) -> Self {
        Self {
            sample_id: sample_id.into(),
            label,
        }
    }
}

pub fn parse_manifest_entry_at(text: &str, line: usize) -> Result<ManifestEntry, ParseError> {
    parse_json_line(text, line)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub threat: usize,
    pub no_threat: usize,
    pub hand: usize,
}

impl LabelCounts {
    pub fn get(&self, label: ClassLabel) -> usize {
        match label {
            ClassLabel::Threat => self.threat,
            ClassLabel::NoThreat => self.no_threat,
            ClassLabel::Hand => self.hand,
        }
    }

    fn bump(&mut self, label: ClassLabel) {
        match label {
            ClassLabel::Threat => self.threat += 1,
            ClassLabel::NoThreat => self.no_threat += 1,
            ClassLabel::Hand => self.hand += 1,
        }
    }

    pub fn sum(&self) -> usize {
        self.threat + self.no_threat + self.hand
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub total: usize,
    pub per_label: LabelCounts,
    /// `Threat count / total`, unrounded.
    pub positive_fraction: f64,
}

impl fmt::Display for ManifestStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "total={} threat={} no_threat={} hand={} positive_fraction={:.4} ({:.1}%)",
            self.total,
            self.per_label.threat,
            self.per_label.no_threat,
            self.per_label.hand,
            self.positive_fraction,
            self.positive_fraction * 100.0
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("duplicate sample_id `{0}`")]
    DuplicateSampleId(String),
}

pub fn validate_manifest(entries: &[ManifestEntry]) -> Result<ManifestStats, ManifestError> {
    if entries.is_empty() {
        return Err(ManifestError::EmptyManifest);
    }
    let mut seen = HashSet::with_capacity(entries.len());
    let mut per_label = LabelCounts::default();
    for entry in entries {
        if !seen.insert(entry.sample_id.as_str()) {
            return Err(ManifestError::DuplicateSampleId(entry.sample_id.clone()));
        }
        per_label.bump(entry.label);
    }
    let total = entries.len();
    Ok(ManifestStats {
        total,
        per_label,
        positive_fraction: per_label.threat as f64 / total as f64,
    })
}
