//! Test-only oracles and generators, shared by the property tests here and
//! the CLI acceptance suite. Nothing in this file calls into the code paths
//! it is used to check.

#![allow(dead_code)]

use std::collections::HashMap;

use threatwatch_core::eval::{PredictedLabel, Prediction, SplitMix64};
use threatwatch_core::frame::{
    BoundingBox, ClassLabel, ClassScores, DetectionLabel, FrameRecord, InstanceDetection,
    KeypointName, ManifestEntry, PoseKeypoint,
};
use threatwatch_core::fusion::{ThreatAssessment, ThreatLevel};
use threatwatch_core::temporal::{AlertEvent, AlertKind, TemporalConfig};

/// Small deterministic RNG wrapper for generators.
pub struct Gen(pub SplitMix64);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(SplitMix64::new(seed))
    }

    pub fn unit(&mut self) -> f64 {
        self.0.unit_f64()
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0.below(n)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Multiple of 1/256 in `[lo, hi]` (both given in 256ths).
    pub fn grid(&mut self, lo: u64, hi: u64) -> f64 {
        (lo + self.below(hi - lo + 1)) as f64 / 256.0
    }
}

/// Box on the 1/256 grid, so sums and halvings are exact.
pub fn grid_box(g: &mut Gen) -> BoundingBox {
    let w = g.grid(8, 64);
    let h = g.grid(8, 64);
    let x = g.grid(0, 256 - (w * 256.0) as u64);
    let y = g.grid(0, 256 - (h * 256.0) as u64);
    BoundingBox { x, y, w, h }
}

pub fn continuous_box(g: &mut Gen) -> BoundingBox {
    let w = g.range(0.02, 0.3);
    let h = g.range(0.02, 0.3);
    BoundingBox {
        x: g.range(0.0, 1.0 - w),
        y: g.range(0.0, 1.0 - h),
        w,
        h,
    }
}

/// Random frame whose boxes cluster in the middle of the frame so that
/// associations, overhand grips and floor crossings all occur often.
pub fn random_record(g: &mut Gen, grid: bool) -> FrameRecord {
    let mut r = FrameRecord::empty("s", 0, 0);
    let n = g.below(6);
    for _ in 0..n {
        let label = if g.chance(0.5) {
            DetectionLabel::Hand
        } else {
            DetectionLabel::Knife
        };
        let bbox = if grid {
            let w = g.grid(8, 40);
            let h = g.grid(8, 40);
            BoundingBox {
                x: g.grid(48, 160),
                y: g.grid(48, 160),
                w,
                h,
            }
        } else {
            let w = g.range(0.03, 0.2);
            let h = g.range(0.03, 0.2);
            BoundingBox {
                x: g.range(0.2, 0.6),
                y: g.range(0.2, 0.6),
                w,
                h,
            }
        };
        r.detections.push(InstanceDetection {
            label,
            bbox,
            conf: g.range(0.80, 1.0),
            mask_area: None,
        });
    }
    for _ in 0..g.below(3) {
        let (x, y) = if grid {
            (g.grid(48, 200), g.grid(48, 200))
        } else {
            (g.range(0.2, 0.8), g.range(0.2, 0.8))
        };
        r.keypoints.push(PoseKeypoint {
            name: if g.chance(0.7) {
                KeypointName::Wrist
            } else {
                KeypointName::Elbow
            },
            x,
            y,
            conf: g.unit(),
        });
    }
    if g.chance(0.5) {
        let a = g.unit();
        let b = g.unit() * (1.0 - a);
        let c = 1.0 - a - b;
        let mut v = [a, b, c];
        // rotate so any class can dominate
        v.rotate_left(g.below(3) as usize);
        r.scores = Some(ClassScores {
            threat: v[0],
            no_threat: v[1],
            hand: v[2],
        });
    }
    r
}

/// Random assessment sequence built from runs, so long hot and cold streaks
/// both appear.
pub fn random_levels(g: &mut Gen, max_len: usize) -> Vec<ThreatAssessment> {
    let len = 1 + g.below(max_len as u64) as usize;
    let mut out = Vec::with_capacity(len);
    let mut frame_id = g.below(1000);
    while out.len() < len {
        let level = ThreatLevel::ALL[g.below(4) as usize];
        let run = 1 + g.below(14);
        for _ in 0..run {
            if out.len() == len {
                break;
            }
            // occasionally flip a single frame to break a streak
            let level = if g.chance(0.1) {
                ThreatLevel::ALL[g.below(4) as usize]
            } else {
                level
            };
            let (lo, hi) = level.band();
            frame_id += 1 + g.below(3);
            out.push(ThreatAssessment {
                stream_id: "s".into(),
                frame_id,
                ts_ms: frame_id * 33,
                level,
                score: if level == ThreatLevel::None {
                    0.0
                } else {
                    g.range(lo, hi)
                },
                evidence: Vec::new(),
            });
        }
    }
    out
}

/// Reference alert simulator, written from the lifecycle rules over
/// precomputed streak lengths rather than an incremental state machine.
pub fn reference_alerts(seq: &[ThreatAssessment], cfg: &TemporalConfig) -> Vec<AlertEvent> {
    let hot: Vec<bool> = seq.iter().map(|a| a.level >= ThreatLevel::Grasped).collect();
    let mut hot_run = vec![0u32; seq.len()];
    let mut cold_run = vec![0u32; seq.len()];
    for i in 0..seq.len() {
        let prev = |v: &Vec<u32>| if i == 0 { 0 } else { v[i - 1] };
        if hot[i] {
            hot_run[i] = prev(&hot_run) + 1;
        } else {
            cold_run[i] = prev(&cold_run) + 1;
        }
    }

    let mut events = Vec::new();
    let mut open: Option<usize> = None; // index of the raising frame
    let mut escalated = false;
    let make = |kind, i: usize, level, score, raise: usize| AlertEvent {
        stream_id: seq[i].stream_id.clone(),
        alert_id: format!("{}:{}", seq[raise].stream_id, seq[raise].frame_id),
        kind,
        frame_id: seq[i].frame_id,
        ts_ms: seq[i].ts_ms,
        level,
        score,
    };
    let peak = |from: usize, to: usize| {
        seq[from..=to]
            .iter()
            .map(|a| (a.level, a.score))
            .fold((ThreatLevel::None, 0.0), |best, cur| {
                if cur.0 > best.0 || (cur.0 == best.0 && cur.1 > best.1) {
                    cur
                } else {
                    best
                }
            })
    };
    for i in 0..seq.len() {
        match open {
            None => {
                if hot_run[i] == cfg.n_raise {
                    events.push(make(AlertKind::Raised, i, seq[i].level, seq[i].score, i));
                    open = Some(i);
                    escalated = false;
                }
            }
            Some(r) => {
                if seq[i].level == ThreatLevel::OverhandThreat && !escalated {
                    escalated = true;
                    events.push(make(AlertKind::Escalated, i, seq[i].level, seq[i].score, r));
                } else if cold_run[i] == cfg.n_clear {
                    let (level, score) = peak(r, i);
                    events.push(make(AlertKind::Cleared, i, level, score, r));
                    open = None;
                }
            }
        }
    }
    if let Some(r) = open {
        let last = seq.len() - 1;
        let (level, score) = peak(r, last);
        events.push(make(AlertKind::Cleared, last, level, score, r));
    }
    events
}

/// Maximal hot runs with length at least `n`.
pub fn long_hot_runs(seq: &[ThreatAssessment], n: u32) -> usize {
    let mut runs = 0;
    let mut cur = 0;
    for a in seq {
        if a.level >= ThreatLevel::Grasped {
            cur += 1;
        } else {
            if cur >= n {
                runs += 1;
            }
            cur = 0;
        }
    }
    if cur >= n {
        runs += 1;
    }
    runs
}

/// Per-class (correct, total) by scanning every label against every
/// prediction.
pub fn brute_force_recount(
    labels: &[ManifestEntry],
    predictions: &[Prediction],
) -> HashMap<ClassLabel, (u64, u64)> {
    let mut out = HashMap::new();
    for entry in labels {
        let slot = out.entry(entry.label).or_insert((0u64, 0u64));
        slot.1 += 1;
        for p in predictions {
            if p.sample_id == entry.sample_id {
                let as_class = match p.predicted {
                    PredictedLabel::Threat => ClassLabel::Threat,
                    PredictedLabel::Hand => ClassLabel::Hand,
                    PredictedLabel::NoThreat | PredictedLabel::Indeterminate => {
                        ClassLabel::NoThreat
                    }
                };
                if as_class == entry.label {
                    slot.0 += 1;
                }
            }
        }
    }
    out
}

/// Floor of `pct/100 * n` in exact integer arithmetic.
pub fn floor_percent(pct: u64, n: u64) -> u64 {
    pct * n / 100
}

pub fn paper_manifest() -> Vec<ManifestEntry> {
    (0..12_799u64)
        .map(|i| {
            // 3559 and 12799 are coprime, so exactly 3559 residues fall low.
            let label = if (i * 3_559) % 12_799 < 3_559 {
                ClassLabel::Threat
            } else if i % 2 == 0 {
                ClassLabel::NoThreat
            } else {
                ClassLabel::Hand
            };
            ManifestEntry::new(format!("img_{i:05}"), label)
        })
        .collect()
}
