//! Per-frame evidence fusion.
//!
//! Combines the three evidence channels of a [`FrameRecord`] (classifier
//! scores, hand/knife detections, pose keypoints) into a graded
//! [`ThreatAssessment`]. Everything here is a pure function of its inputs.
//!
//! Level resolution, strongest first:
//!
//! 1. a hand above a nearby knife → [`ThreatLevel::OverhandThreat`]
//! 2. a hand near a knife → [`ThreatLevel::Grasped`]
//! 3. a confident knife, or a confident classifier threat verdict → [`ThreatLevel::ObjectPresent`]
//! 4. otherwise → [`ThreatLevel::None`]
//!
//! Detection evidence always outranks classifier evidence.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{
    BoundingBox, ClassScores, DetectionLabel, FrameRecord, InstanceDetection, KeypointName,
    PoseKeypoint,
};

/// Absolute slack on geometric threshold comparisons, so that values sitting
/// exactly on a threshold in decimal are not lost to binary rounding.
pub const GEOMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Detection confidence floor.
    pub tau_det: f64,
    /// Maximum hand/knife center distance for association.
    pub delta_assoc: f64,
    /// Minimum vertical center separation for an overhand grip.
    pub epsilon_vert: f64,
    /// Keypoint confidence floor.
    pub tau_pose: f64,
    /// Maximum wrist to knife-center distance.
    pub delta_wrist: f64,
    /// Minimum gap between the top two classifier probabilities.
    pub margin: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau_det: 0.90,
            delta_assoc: 0.25,
            epsilon_vert: 0.05,
            tau_pose: 0.50,
            delta_wrist: 0.20,
            margin: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("fusion config field `{field}` = {value} outside [0,1]")]
pub struct ConfigError {
    pub field: &'static str,
    pub value: f64,
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("tau_det", self.tau_det),
            ("delta_assoc", self.delta_assoc),
            ("epsilon_vert", self.epsilon_vert),
            ("tau_pose", self.tau_pose),
            ("delta_wrist", self.delta_wrist),
            ("margin", self.margin),
        ] {
            if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
                return Err(ConfigError { field, value });
            }
        }
        Ok(())
    }

    fn qualifies(&self, det: &InstanceDetection) -> bool {
        det.conf >= self.tau_det
    }
}

/// Classifier-only verdict for a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameClass {
    Threat,
    NoThreatNoHand,
    NoThreatHand,
    Indeterminate,
}

impl FrameClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameClass::Threat => "threat",
            FrameClass::NoThreatNoHand => "no_threat_no_hand",
            FrameClass::NoThreatHand => "no_threat_hand",
            FrameClass::Indeterminate => "indeterminate",
        }
    }
}

/// Argmax of the three class probabilities, or `Indeterminate` when the top
/// two are closer than `cfg.margin`.
///
/// An exact tie at the top resolves to the lower-threat class
/// (`NoThreatNoHand` < `NoThreatHand` < `Threat`).
pub fn classify_scores(scores: &ClassScores, cfg: &FusionConfig) -> FrameClass {
    // Listed in tie-break order; the stable sort keeps it for equal scores.
    let mut ranked = [
        (FrameClass::NoThreatNoHand, scores.no_threat),
        (FrameClass::NoThreatHand, scores.hand),
        (FrameClass::Threat, scores.threat),
    ];
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (top_class, top) = ranked[0];
    let second = ranked[1].1;
    if top == second || top - second >= cfg.margin {
        top_class
    } else {
        FrameClass::Indeterminate
    }
}

/// An associated hand and knife, identified by their index in the frame's
/// detection list.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspPair {
    pub hand_index: usize,
    pub knife_index: usize,
    pub hand: InstanceDetection,
    pub knife: InstanceDetection,
    pub center_distance: f64,
    pub overhand: bool,
}

impl GraspPair {
    fn strength(&self) -> f64 {
        self.hand.conf.min(self.knife.conf)
    }
}

/// True when the hand center sits at least `cfg.epsilon_vert` above the
/// knife center. Horizontal offset is not considered.
pub fn is_overhand(hand_box: &BoundingBox, knife_box: &BoundingBox, cfg: &FusionConfig) -> bool {
    let (_, hand_cy) = hand_box.center();
    let (_, knife_cy) = knife_box.center();
    knife_cy - hand_cy >= cfg.epsilon_vert - GEOMETRY_TOLERANCE
}

/// Every qualifying hand/knife pair whose centers lie within
/// `cfg.delta_assoc`, in (distance, hand index, knife index) order.
pub fn candidate_pairs(detections: &[InstanceDetection], cfg: &FusionConfig) -> Vec<GraspPair> {
    let qualifying = |label| {
        detections
            .iter()
            .enumerate()
            .filter(move |(_, d)| d.label == label && cfg.qualifies(d))
    };
    let mut pairs = Vec::new();
    for (hi, hand) in qualifying(DetectionLabel::Hand) {
        for (ki, knife) in qualifying(DetectionLabel::Knife) {
            let dist = hand.bbox.center_distance(&knife.bbox);
            if dist <= cfg.delta_assoc + GEOMETRY_TOLERANCE {
                pairs.push(GraspPair {
                    hand_index: hi,
                    knife_index: ki,
                    hand: hand.clone(),
                    knife: knife.clone(),
                    center_distance: dist,
                    overhand: is_overhand(&hand.bbox, &knife.bbox, cfg),
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.center_distance
            .total_cmp(&b.center_distance)
            .then(a.hand_index.cmp(&b.hand_index))
            .then(a.knife_index.cmp(&b.knife_index))
    });
    pairs
}

/// Greedy one-to-one hand/knife matching by ascending center distance.
pub fn associate_hand_knife(
    detections: &[InstanceDetection],
    cfg: &FusionConfig,
) -> Vec<GraspPair> {
    greedy_match(candidate_pairs(detections, cfg), detections.len())
}

fn greedy_match(candidates: Vec<GraspPair>, n: usize) -> Vec<GraspPair> {
    let mut used = vec![false; n];
    let mut pairs = Vec::new();
    for pair in candidates {
        if used[pair.hand_index] || used[pair.knife_index] {
            continue;
        }
        used[pair.hand_index] = true;
        used[pair.knife_index] = true;
        pairs.push(pair);
    }
    pairs
}

/// Outcome of checking wrist keypoints against knife detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseEvidence {
    WristNearKnife,
    /// A confident wrist with no knife nearby: an empty hand or fist.
    WristNoKnife,
    NoWrist,
}

impl PoseEvidence {
    pub fn as_str(self) -> &'static str {
        match self {
            PoseEvidence::WristNearKnife => "wrist_near_knife",
            PoseEvidence::WristNoKnife => "wrist_no_knife",
            PoseEvidence::NoWrist => "no_wrist",
        }
    }
}

pub fn pose_gate(
    keypoints: &[PoseKeypoint],
    detections: &[InstanceDetection],
    cfg: &FusionConfig,
) -> PoseEvidence {
    let mut wrists = keypoints
        .iter()
        .filter(|k| k.name == KeypointName::Wrist && k.conf >= cfg.tau_pose)
        .peekable();
    if wrists.peek().is_none() {
        return PoseEvidence::NoWrist;
    }
    let knife_centers: Vec<(f64, f64)> = detections
        .iter()
        .filter(|d| d.label == DetectionLabel::Knife && cfg.qualifies(d))
        .map(|d| d.bbox.center())
        .collect();
    let near = wrists.any(|w| {
        knife_centers
            .iter()
            .any(|&(cx, cy)| (w.x - cx).hypot(w.y - cy) <= cfg.delta_wrist + GEOMETRY_TOLERANCE)
    });
    if near {
        PoseEvidence::WristNearKnife
    } else {
        PoseEvidence::WristNoKnife
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ThreatLevel {
    #[default]
    None,
    ObjectPresent,
    Grasped,
    OverhandThreat,
}

impl ThreatLevel {
    pub const ALL: [ThreatLevel; 4] = [
        ThreatLevel::None,
        ThreatLevel::ObjectPresent,
        ThreatLevel::Grasped,
        ThreatLevel::OverhandThreat,
    ];

    /// Inclusive score range reserved for this level.
    pub fn band(self) -> (f64, f64) {
        match self {
            ThreatLevel::None => (0.0, 0.0),
            ThreatLevel::ObjectPresent => (0.40, 0.50),
            ThreatLevel::Grasped => (0.70, 0.80),
            ThreatLevel::OverhandThreat => (0.90, 1.00),
        }
    }

    fn score_for(self, strength: f64) -> f64 {
        let (lo, hi) = self.band();
        (lo + (hi - lo) * strength).clamp(lo, hi)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ThreatLevel::None => "none",
            ThreatLevel::ObjectPresent => "object_present",
            ThreatLevel::Grasped => "grasped",
            ThreatLevel::OverhandThreat => "overhand_threat",
        }
    }
}

impl fmt::Display for ThreatLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One contributor to an assessment. Rendered on the wire as a short tag,
/// e.g. `classifier:threat`, `pair:h0-k1:overhand`, `knife:2`,
/// `pose:wrist_no_knife`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evidence {
    Classifier(FrameClass),
    Pair {
        hand: usize,
        knife: usize,
        overhand: bool,
    },
    Knife(usize),
    Pose(PoseEvidence),
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evidence::Classifier(c) => write!(f, "classifier:{}", c.as_str()),
            Evidence::Pair {
                hand,
                knife,
                overhand,
            } => write!(
                f,
                "pair:h{hand}-k{knife}:{}",
                if *overhand { "overhand" } else { "grasp" }
            ),
            Evidence::Knife(i) => write!(f, "knife:{i}"),
            Evidence::Pose(p) => write!(f, "pose:{}", p.as_str()),
        }
    }
}

impl FromStr for Evidence {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unrecognized evidence tag `{s}`");
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "classifier" => serde_json::from_value(serde_json::Value::String(rest.into()))
                .map(Evidence::Classifier)
                .map_err(|_| bad()),
            "pose" => serde_json::from_value(serde_json::Value::String(rest.into()))
                .map(Evidence::Pose)
                .map_err(|_| bad()),
            "knife" => rest.parse().map(Evidence::Knife).map_err(|_| bad()),
            "pair" => {
                let (ids, kind) = rest.split_once(':').ok_or_else(bad)?;
                let (h, k) = ids.split_once('-').ok_or_else(bad)?;
                let hand = h.strip_prefix('h').and_then(|v| v.parse().ok());
                let knife = k.strip_prefix('k').and_then(|v| v.parse().ok());
                let overhand = match kind {
                    "overhand" => true,
                    "grasp" => false,
                    _ => return Err(bad()),
                };
                match (hand, knife) {
                    (Some(hand), Some(knife)) => Ok(Evidence::Pair {
                        hand,
                        knife,
                        overhand,
                    }),
                    _ => Err(bad()),
                }
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for Evidence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Evidence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatAssessment {
    pub stream_id: String,
    pub frame_id: u64,
    /// Not part of the assessment wire format; carried so alerting can stamp
    /// events with the frame time.
    #[serde(skip)]
    pub ts_ms: u64,
    pub level: ThreatLevel,
    pub score: f64,
    pub evidence: Vec<Evidence>,
}

impl ThreatAssessment {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("assessments always serialize")
    }
}

pub fn assess_frame(record: &FrameRecord, cfg: &FusionConfig) -> ThreatAssessment {
    let mut evidence = Vec::new();

    let class = record.scores.as_ref().map(|s| classify_scores(s, cfg));
    if let Some(class) = class {
        evidence.push(Evidence::Classifier(class));
    }

    // The level is decided over all candidate pairs rather than only the
    // greedy matching: a greedy match can hand a knife to a closer,
    // non-overhand hand, which would make the level depend non-monotonically
    // on the set of detections.
    let candidates = candidate_pairs(&record.detections, cfg);
    let best_overhand = strongest(candidates.iter().filter(|p| p.overhand));
    let best_any = strongest(candidates.iter());
    let matched = greedy_match(candidates.clone(), record.detections.len());
    for p in &matched {
        evidence.push(pair_evidence(p));
    }

    let best_knife = record
        .detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.label == DetectionLabel::Knife && cfg.qualifies(d))
        .max_by(|a, b| a.1.conf.total_cmp(&b.1.conf).then(b.0.cmp(&a.0)));

    let (mut level, strength, decisive) = if let Some(p) = best_overhand {
        (ThreatLevel::OverhandThreat, p.strength(), Some(pair_evidence(p)))
    } else if let Some(p) = best_any {
        (ThreatLevel::Grasped, p.strength(), Some(pair_evidence(p)))
    } else if let Some((i, knife)) = best_knife {
        (ThreatLevel::ObjectPresent, knife.conf, Some(Evidence::Knife(i)))
    } else if let (Some(FrameClass::Threat), Some(scores)) = (class, record.scores.as_ref()) {
        (ThreatLevel::ObjectPresent, scores.threat, None)
    } else {
        (ThreatLevel::None, 0.0, None)
    };
    if let Some(e) = decisive {
        if !evidence.contains(&e) {
            evidence.push(e);
        }
    }

    if !record.keypoints.is_empty() {
        let gate = pose_gate(&record.keypoints, &record.detections, cfg);
        evidence.push(Evidence::Pose(gate));
        if level == ThreatLevel::Grasped && gate == PoseEvidence::WristNoKnife && best_knife.is_none()
        {
            level = ThreatLevel::None;
        }
    }

    ThreatAssessment {
        stream_id: record.stream_id.clone(),
        frame_id: record.frame_id,
        ts_ms: record.ts_ms,
        level,
        score: if level == ThreatLevel::None {
            0.0
        } else {
            level.score_for(strength)
        },
        evidence,
    }
}

fn pair_evidence(p: &GraspPair) -> Evidence {
    Evidence::Pair {
        hand: p.hand_index,
        knife: p.knife_index,
        overhand: p.overhand,
    }
}

// First maximum in candidate order, so ties favour the closest pair.
fn strongest<'a>(pairs: impl Iterator<Item = &'a GraspPair>) -> Option<&'a GraspPair> {
    pairs.fold(None, |best: Option<&GraspPair>, p| match best {
        Some(b) if b.strength() >= p.strength() => Some(b),
        _ => Some(p),
    })
}
