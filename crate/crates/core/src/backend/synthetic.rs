//! Deterministic scenario generator.
//!
//! Each scene has fixed base geometry chosen so that, at the default fusion
//! config, it lands on exactly one threat level:
//!
//! | scene            | level at default config |
//! |------------------|-------------------------|
//! | `empty`          | none                    |
//! | `hand_only`      | none (wrist, no knife)  |
//! | `knife_only`     | object_present          |
//! | `knife_grasped`  | grasped                 |
//! | `knife_overhand` | overhand_threat         |
//!
//! Noise jitters confidences and translates the whole hand/knife/wrist group
//! by at most `noise / 10`, which never changes relative geometry. The
//! overhand scene keeps the hand center 0.18 above the knife center, and the
//! grasped scene keeps both at the same height.

use serde::{Deserialize, Serialize};

use super::{Capabilities, DetectorBackend, OpenError};
use crate::eval::SplitMix64;
use crate::frame::{
    BoundingBox, ClassScores, DetectionLabel, FrameRecord, InstanceDetection, KeypointName,
    PoseKeypoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scene {
    Empty,
    HandOnly,
    KnifeOnly,
    KnifeGrasped,
    KnifeOverhand,
}

impl Scene {
    pub const ALL: [Scene; 5] = [
        Scene::Empty,
        Scene::HandOnly,
        Scene::KnifeOnly,
        Scene::KnifeGrasped,
        Scene::KnifeOverhand,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub duration_frames: u64,
    pub scene: Scene,
    /// Jitter amplitude in `[0, 0.1]`.
    #[serde(default)]
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stream_id")]
    pub stream_id: String,
    #[serde(default = "default_fps")]
    pub fps: u32,
    #[serde(default)]
    pub start_ts_ms: u64,
    pub segments: Vec<Segment>,
}

fn default_stream_id() -> String {
    "synthetic".to_owned()
}

fn default_fps() -> u32 {
    30
}

impl ScenarioScript {
    pub fn new(seed: u64, segments: Vec<Segment>) -> Self {
        Self {
            seed,
            stream_id: default_stream_id(),
            fps: default_fps(),
            start_ts_ms: 0,
            segments,
        }
    }

    /// Single-segment script.
    pub fn single(scene: Scene, frames: u64, noise: f64, seed: u64) -> Self {
        Self::new(
            seed,
            vec![Segment {
                duration_frames: frames,
                scene,
                noise,
            }],
        )
    }

    pub fn from_json(text: &str) -> Result<Self, OpenError> {
        let script: ScenarioScript =
            serde_json::from_str(text).map_err(|e| OpenError::BadScript(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), OpenError> {
        let bad = |m: String| Err(OpenError::BadScript(m));
        if self.segments.is_empty() {
            return bad("script has no segments".into());
        }
        if self.fps == 0 {
            return bad("fps must be at least 1".into());
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.duration_frames == 0 {
                return bad(format!("segments[{i}].duration_frames must be at least 1"));
            }
            if !(seg.noise.is_finite() && (0.0..=0.1).contains(&seg.noise)) {
                return bad(format!("segments[{i}].noise {} outside [0, 0.1]", seg.noise));
            }
        }
        Ok(())
    }

    pub fn total_frames(&self) -> u64 {
        self.segments.iter().map(|s| s.duration_frames).sum()
    }
}

/// Frame stream produced by a [`ScenarioScript`].
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    script: ScenarioScript,
    rng: SplitMix64,
    segment: usize,
    in_segment: u64,
    frame: u64,
}

/// Starts generating frames for `script`.
pub fn synthesize(script: ScenarioScript) -> Result<SyntheticBackend, OpenError> {
    SyntheticBackend::new(script)
}

impl SyntheticBackend {
    pub fn new(script: ScenarioScript) -> Result<Self, OpenError> {
        script.validate()?;
        Ok(Self {
            rng: SplitMix64::new(script.seed),
            script,
            segment: 0,
            in_segment: 0,
            frame: 0,
        })
    }

    /// Uniform in `[-1, 1)`.
    fn jitter(&mut self) -> f64 {
        self.rng.unit_f64() * 2.0 - 1.0
    }

    fn render(&mut self, scene: Scene, noise: f64) -> FrameRecord {
        let frame_id = self.frame;
        let ts_ms = self.script.start_ts_ms + frame_id * 1000 / u64::from(self.script.fps);
        let mut record = FrameRecord::empty(self.script.stream_id.clone(), frame_id, ts_ms);
        if scene == Scene::Empty {
            return record;
        }

        let dx = noise * self.jitter() / 10.0;
        let dy = noise * self.jitter() / 10.0;
        let mut conf = || (0.95 + 0.5 * noise * self.jitter()).clamp(0.90, 1.0);
        let hand_conf = conf();
        let knife_conf = conf();
        let wrist_conf = conf();

        let shifted = |x: f64, y: f64, w: f64, h: f64| BoundingBox {
            x: x + dx,
            y: y + dy,
            w,
            h,
        };
        let detection = |label, bbox: BoundingBox, conf: f64| InstanceDetection {
            label,
            bbox,
            conf,
            mask_area: Some(bbox.area() * 0.6),
        };
        let keypoint = |name, x: f64, y: f64, conf: f64| PoseKeypoint {
            name,
            x: x + dx,
            y: y + dy,
            conf,
        };

        match scene {
            Scene::Empty => unreachable!(),
            Scene::HandOnly => {
                record.detections.push(detection(
                    DetectionLabel::Hand,
                    shifted(0.40, 0.30, 0.12, 0.12),
                    hand_conf,
                ));
                record.keypoints.push(keypoint(KeypointName::Wrist, 0.46, 0.40, wrist_conf));
                record.keypoints.push(keypoint(KeypointName::Elbow, 0.50, 0.55, wrist_conf));
            }
            Scene::KnifeOnly => {
                record.detections.push(detection(
                    DetectionLabel::Knife,
                    shifted(0.60, 0.70, 0.20, 0.08),
                    knife_conf,
                ));
            }
            Scene::KnifeGrasped => {
                // centers (0.45, 0.45) and (0.60, 0.45)
                record.detections.push(detection(
                    DetectionLabel::Hand,
                    shifted(0.40, 0.40, 0.10, 0.10),
                    hand_conf,
                ));
                record.detections.push(detection(
                    DetectionLabel::Knife,
                    shifted(0.52, 0.41, 0.16, 0.08),
                    knife_conf,
                ));
                record.keypoints.push(keypoint(KeypointName::Wrist, 0.47, 0.47, wrist_conf));
            }
            Scene::KnifeOverhand => {
                // centers (0.47, 0.30) and (0.47, 0.48)
                record.detections.push(detection(
                    DetectionLabel::Hand,
                    shifted(0.42, 0.25, 0.10, 0.10),
                    hand_conf,
                ));
                record.detections.push(detection(
                    DetectionLabel::Knife,
                    shifted(0.44, 0.38, 0.06, 0.20),
                    knife_conf,
                ));
                record.keypoints.push(keypoint(KeypointName::Wrist, 0.47, 0.32, wrist_conf));
            }
        }

        let dominant = 0.90 - noise * self.jitter().abs();
        let rest = 1.0 - dominant;
        let split = 0.5 + 0.4 * self.jitter();
        let (a, b) = (rest * split, rest - rest * split);
        record.scores = Some(match scene {
            Scene::HandOnly => ClassScores {
                threat: a,
                no_threat: b,
                hand: dominant,
            },
            _ => ClassScores {
                threat: dominant,
                no_threat: a,
                hand: b,
            },
        });
        record
    }
}

impl Iterator for SyntheticBackend {
    type Item = FrameRecord;

    fn next(&mut self) -> Option<FrameRecord> {
        let seg = loop {
            let seg = self.script.segments.get(self.segment)?;
            if self.in_segment < seg.duration_frames {
                break seg.clone();
            }
            self.segment += 1;
            self.in_segment = 0;
        };
        let record = self.render(seg.scene, seg.noise);
        debug_assert!(record.validate().is_ok(), "{:?}", record.validate());
        self.in_segment += 1;
        self.frame += 1;
        Some(record)
    }
}

impl DetectorBackend for SyntheticBackend {
    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn next_frame(&mut self) -> Option<Result<FrameRecord, super::BackendError>> {
        self.next().map(Ok)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::parse_frame_record;
    use crate::fusion::{assess_frame, FusionConfig, ThreatLevel};

    fn expected(scene: Scene) -> ThreatLevel {
        match scene {
            Scene::Empty | Scene::HandOnly => ThreatLevel::None,
            Scene::KnifeOnly => ThreatLevel::ObjectPresent,
            Scene::KnifeGrasped => ThreatLevel::Grasped,
            Scene::KnifeOverhand => ThreatLevel::OverhandThreat,
        }
    }

    #[test]
    fn overhand_script_assesses_overhand() {
        let frames: Vec<_> = synthesize(ScenarioScript::single(Scene::KnifeOverhand, 5, 0.0, 7))
            .unwrap()
            .collect();
        assert_eq!(frames.len(), 5);
        for f in &frames {
            assert_eq!(
                assess_frame(f, &FusionConfig::default()).level,
                ThreatLevel::OverhandThreat
            );
        }
    }

    #[test]
    fn empty_scene_is_evidence_free() {
        let frames: Vec<_> = synthesize(ScenarioScript::single(Scene::Empty, 3, 0.0, 1))
            .unwrap()
            .collect();
        assert_eq!(frames.len(), 3);
        assert!(frames.iter().all(FrameRecord::is_evidence_free));
        assert_eq!(
            frames.iter().map(|f| f.frame_id).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn every_scene_maps_to_one_level_under_noise() {
        let cfg = FusionConfig::default();
        for scene in Scene::ALL {
            for noise in [0.0, 0.05, 0.1] {
                for seed in 0..20 {
                    for f in synthesize(ScenarioScript::single(scene, 25, noise, seed)).unwrap() {
                        assert_eq!(
                            assess_frame(&f, &cfg).level,
                            expected(scene),
                            "{scene:?} noise {noise} seed {seed}"
                        );
                        assert_eq!(parse_frame_record(&f.to_json_line()).unwrap(), f);
                    }
                }
            }
        }
    }

    #[test]
    fn overhand_margin_is_at_least_twice_epsilon() {
        let f = synthesize(ScenarioScript::single(Scene::KnifeOverhand, 1, 0.1, 3))
            .unwrap()
            .next()
            .unwrap();
        let (_, hy) = f.detections[0].bbox.center();
        let (_, ky) = f.detections[1].bbox.center();
        assert!(ky - hy >= 0.1);
    }

    #[test]
    fn segments_concatenate_with_timestamps() {
        let script = ScenarioScript {
            fps: 25,
            start_ts_ms: 1_000,
            ..ScenarioScript::new(
                0,
                vec![
                    Segment {
                        duration_frames: 2,
                        scene: Scene::Empty,
                        noise: 0.0,
                    },
                    Segment {
                        duration_frames: 3,
                        scene: Scene::KnifeOnly,
                        noise: 0.0,
                    },
                ],
            )
        };
        assert_eq!(script.total_frames(), 5);
        let frames: Vec<_> = synthesize(script).unwrap().collect();
        let ts: Vec<_> = frames.iter().map(|f| f.ts_ms).collect();
        assert_eq!(ts, vec![1000, 1040, 1080, 1120, 1160]);
        assert!(frames[1].detections.is_empty());
        assert_eq!(frames[2].detections.len(), 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let script = ScenarioScript::single(Scene::KnifeGrasped, 50, 0.1, 11);
        let a: Vec<_> = synthesize(script.clone()).unwrap().collect();
        let b: Vec<_> = synthesize(script.clone()).unwrap().collect();
        assert_eq!(a, b);
        let c: Vec<_> = synthesize(ScenarioScript { seed: 12, ..script })
            .unwrap()
            .collect();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_scripts() {
        assert!(ScenarioScript::from_json(r#"{"segments":[]}"#).is_err());
        assert!(ScenarioScript::from_json(
            r#"{"segments":[{"duration_frames":0,"scene":"empty"}]}"#
        )
        .is_err());
        assert!(ScenarioScript::from_json(
            r#"{"segments":[{"duration_frames":1,"scene":"empty","noise":0.2}]}"#
        )
        .is_err());
        assert!(ScenarioScript::from_json(
            r#"{"segments":[{"duration_frames":1,"scene":"crowd"}]}"#
        )
        .is_err());
        let ok = ScenarioScript::from_json(
            r#"{"seed":7,"segments":[{"duration_frames":5,"scene":"knife_overhand"}]}"#,
        )
        .unwrap();
        assert_eq!(ok.stream_id, "synthetic");
        assert_eq!(ok.fps, 30);
    }
}
