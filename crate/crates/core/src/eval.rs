//! Dataset splitting, confusion-matrix scoring and per-class accuracy reports.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{ClassLabel, ManifestEntry};

/// SplitMix64 generator (Steele, Lea & Flood), used wherever a shuffle must be
/// reproducible across platforms and library versions.
///
/// State advances by the golden-ratio increment `0x9E3779B97F4A7C15`; output
/// is mixed with multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`
/// and shifts 30, 27, 31.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Index in `0..bound` by multiply-shift (`bound > 0`).
    pub fn below(&mut self, bound: u64) -> u64 {
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const STANDARD: SplitRatios = SplitRatios {
        train: 0.70,
        val: 0.15,
        test: 0.15,
    };

    pub fn new(train: f64, val: f64, test: f64) -> Self {
        Self { train, val, test }
    }

    pub fn validate(&self) -> Result<(), SplitError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(SplitError::BadRatios(format!(
                "ratios must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SplitError::BadRatios(format!(
                "ratios sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Train/val/test sizes for `n` samples. Representation error in the
    /// ratios (0.15 is not exact in binary) is absorbed before flooring.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let val = floor(self.val).min(n - train);
        (train, val, n - train - val)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("bad split ratios: {0}")]
    BadRatios(String),
    #[error("manifest is empty")]
    EmptyManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: SplitRatios,
    /// One entry per manifest sample, in manifest order.
    pub assignments: Vec<(String, Split)>,
}

impl SplitAssignment {
    pub fn count(&self, split: Split) -> usize {
        self.assignments.iter().filter(|(_, s)| *s == split).count()
    }

    /// JSONL `{"sample_id":..,"split":..}` lines in manifest order.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            sample_id: &'a str,
            split: Split,
        }
        let mut out = String::new();
        for (sample_id, split) in &self.assignments {
            let line = serde_json::to_string(&Line {
                sample_id,
                split: *split,
            })
            .expect("split lines serialize");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Deterministic train/val/test assignment.
///
/// Sample ids are sorted lexicographically, shuffled with Fisher–Yates driven
/// by [`SplitMix64`] seeded with `seed` (for `i` from `n-1` down to 1, swap
/// `i` with `below(i+1)`), and the shuffled order is cut into
/// `floor(train·n)`, `floor(val·n)` and the remainder.
pub fn make_splits(
    manifest: &[ManifestEntry],
    seed: u64,
    ratios: SplitRatios,
) -> Result<SplitAssignment, SplitError> {
    ratios.validate()?;
    if manifest.is_empty() {
        return Err(SplitError::EmptyManifest);
    }
    let mut order: Vec<&str> = manifest.iter().map(|e| e.sample_id.as_str()).collect();
    order.sort_unstable();
    let mut rng = SplitMix64::new(seed);
    for i in (1..order.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    let (train, val, _) = ratios.counts(order.len());
    let by_id: HashMap<&str, Split> = order
        .iter()
        .enumerate()
        .map(|(pos, id)| {
            let split = if pos < train {
                Split::Train
            } else if pos < train + val {
                Split::Val
            } else {
                Split::Test
            };
            (*id, split)
        })
        .collect();
    Ok(SplitAssignment {
        seed,
        ratios,
        assignments: manifest
            .iter()
            .map(|e| (e.sample_id.clone(), by_id[e.sample_id.as_str()]))
            .collect(),
    })
}

/// A model prediction; `Indeterminate` is an abstention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictedLabel {
    Threat,
    NoThreat,
    Hand,
    Indeterminate,
}

impl PredictedLabel {
    /// Abstentions are scored as the safe class.
    pub fn scored_as(self) -> ClassLabel {
        match self {
            PredictedLabel::Threat => ClassLabel::Threat,
            PredictedLabel::NoThreat | PredictedLabel::Indeterminate => ClassLabel::NoThreat,
            PredictedLabel::Hand => ClassLabel::Hand,
        }
    }
}

impl From<ClassLabel> for PredictedLabel {
    fn from(c: ClassLabel) -> Self {
        match c {
            ClassLabel::Threat => PredictedLabel::Threat,
            ClassLabel::NoThreat => PredictedLabel::NoThreat,
            ClassLabel::Hand => PredictedLabel::Hand,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub predicted: PredictedLabel,
}

impl Prediction {
    pub fn new(sample_id: impl Into<String>, predicted: PredictedLabel) -> Self {
        Self {
            sample_id: sample_id.into(),
            predicted,
        }
    }
}

/// Counts indexed `[true][predicted]` in [`ClassLabel::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: ClassLabel, predicted: ClassLabel) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn row_sum(&self, truth: ClassLabel) -> u64 {
        self.counts[truth.index()].iter().sum()
    }

    pub fn col_sum(&self, predicted: ClassLabel) -> u64 {
        self.counts.iter().map(|row| row[predicted.index()]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.counts.iter_mut().flatten().zip(rhs.counts.iter().flatten()) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("no prediction for sample `{0}`")]
    MissingPrediction(String),
    #[error("prediction for unknown sample `{0}`")]
    UnknownSample(String),
    #[error("more than one prediction for sample `{0}`")]
    DuplicatePrediction(String),
}

pub fn confusion_matrix(
    predictions: &[Prediction],
    labels: &[ManifestEntry],
) -> Result<ConfusionMatrix, ScoringError> {
    let truth: HashMap<&str, ClassLabel> = labels
        .iter()
        .map(|e| (e.sample_id.as_str(), e.label))
        .collect();
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(predictions.len());
    let mut matrix = ConfusionMatrix::default();
    for p in predictions {
        let Some(&label) = truth.get(p.sample_id.as_str()) else {
            return Err(ScoringError::UnknownSample(p.sample_id.clone()));
        };
        if seen.insert(p.sample_id.as_str(), ()).is_some() {
            return Err(ScoringError::DuplicatePrediction(p.sample_id.clone()));
        }
        matrix.record(label, p.predicted.scored_as());
    }
    if let Some(missing) = labels
        .iter()
        .find(|e| !seen.contains_key(e.sample_id.as_str()))
    {
        return Err(ScoringError::MissingPrediction(missing.sample_id.clone()));
    }
    Ok(matrix)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: ClassLabel,
    /// Correct in class / class total (per-class recall).
    pub accuracy: f64,
    pub correct: u64,
    pub samples: u64,
    /// Absent when nothing was predicted as this class.
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub matrix: ConfusionMatrix,
    /// Classes with zero samples are omitted.
    pub classes: Vec<ClassReport>,
    pub overall_accuracy: f64,
    pub total: u64,
    /// Where the scored predictions came from, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl EvalReport {
    pub fn class(&self, class: ClassLabel) -> Option<&ClassReport> {
        self.classes.iter().find(|c| c.class == class)
    }
}

pub fn per_class_accuracy(matrix: &ConfusionMatrix) -> EvalReport {
    let classes = ClassLabel::ALL
        .iter()
        .filter_map(|&class| {
            let samples = matrix.row_sum(class);
            if samples == 0 {
                return None;
            }
            let correct = matrix.get(class, class);
            let predicted = matrix.col_sum(class);
            Some(ClassReport {
                class,
                accuracy: correct as f64 / samples as f64,
                correct,
                samples,
                precision: (predicted > 0).then(|| correct as f64 / predicted as f64),
            })
        })
        .collect();
    let total = matrix.total();
    EvalReport {
        matrix: *matrix,
        classes,
        overall_accuracy: if total == 0 {
            0.0
        } else {
            matrix.trace() as f64 / total as f64
        },
        total,
        source: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    TextTable,
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        ReportFormat::TextTable => {
            let mut s = String::new();
            let _ = writeln!(s, "Accuracy per class");
            let _ = writeln!(s, "{:<12}{:>10}{:>12}", "CLASS", "ACCURACY", "# SAMPLES");
            for c in &report.classes {
                let _ = writeln!(
                    s,
                    "{:<12}{:>10.2}{:>12}",
                    c.class.display_name(),
                    c.accuracy,
                    c.samples
                );
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(n: usize) -> Vec<ManifestEntry> {
        (0..n)
            .map(|i| ManifestEntry::new(format!("img{i:05}"), ClassLabel::ALL[i % 3]))
            .collect()
    }

    #[test]
    fn splitmix_reference_vector() {
        // Published SplitMix64 outputs for seed 1234567.
        let mut rng = SplitMix64::new(1234567);
        let got: Vec<u64> = (0..5).map(|_| rng.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                6457827717110365317,
                3203168211198807973,
                9817491932198370423,
                4593380528125082431,
                16408922859458223821
            ]
        );
    }

    #[test]
    fn split_counts_follow_floor_rule() {
        assert_eq!(SplitRatios::STANDARD.counts(12_799), (8959, 1919, 1921));
        assert_eq!(SplitRatios::STANDARD.counts(20), (14, 3, 3));
        let a = make_splits(&manifest(20), 3, SplitRatios::STANDARD).unwrap();
        assert_eq!(
            (a.count(Split::Train), a.count(Split::Val), a.count(Split::Test)),
            (14, 3, 3)
        );
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let m = manifest(200);
        let a = make_splits(&m, 42, SplitRatios::STANDARD).unwrap();
        let b = make_splits(&m, 42, SplitRatios::STANDARD).unwrap();
        assert_eq!(a, b);
        let c = make_splits(&m, 43, SplitRatios::STANDARD).unwrap();
        assert_ne!(a.assignments, c.assignments);
        // Input order does not matter: ids are sorted before shuffling.
        let mut rev = m.clone();
        rev.reverse();
        let d = make_splits(&rev, 42, SplitRatios::STANDARD).unwrap();
        let lookup: HashMap<_, _> = d.assignments.into_iter().collect();
        for (id, split) in &a.assignments {
            assert_eq!(lookup[id], *split);
        }
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            make_splits(&manifest(5), 0, SplitRatios::new(0.5, 0.5, 0.1)),
            Err(SplitError::BadRatios(_))
        ));
        assert!(matches!(
            make_splits(&manifest(5), 0, SplitRatios::new(1.0, 0.0, 0.0)),
            Err(SplitError::BadRatios(_))
        ));
        assert_eq!(
            make_splits(&[], 0, SplitRatios::STANDARD),
            Err(SplitError::EmptyManifest)
        );
    }

    #[test]
    fn perfect_predictions_diagonal() {
        let m: Vec<_> = (0..10)
            .map(|i| ManifestEntry::new(format!("s{i}"), ClassLabel::ALL[i % 3]))
            .collect();
        let preds: Vec<_> = m
            .iter()
            .map(|e| Prediction::new(e.sample_id.clone(), e.label.into()))
            .collect();
        let cm = confusion_matrix(&preds, &m).unwrap();
        assert_eq!(cm.trace(), 10);
        assert_eq!(cm.total(), 10);
        let report = per_class_accuracy(&cm);
        assert!(report.classes.iter().all(|c| c.accuracy == 1.0));
        assert_eq!(report.overall_accuracy, 1.0);
    }

    #[test]
    fn off_diagonal_counting() {
        let labels = [
            ManifestEntry::new("a", ClassLabel::Threat),
            ManifestEntry::new("b", ClassLabel::Hand),
        ];
        let preds = [
            Prediction::new("a", PredictedLabel::Hand),
            Prediction::new("b", PredictedLabel::Hand),
        ];
        let cm = confusion_matrix(&preds, &labels).unwrap();
        assert_eq!(cm.get(ClassLabel::Threat, ClassLabel::Hand), 1);
        assert_eq!(cm.get(ClassLabel::Hand, ClassLabel::Hand), 1);
        assert_eq!(cm.total(), 2);
        let report = per_class_accuracy(&cm);
        assert_eq!(report.class(ClassLabel::Threat).unwrap().accuracy, 0.0);
        assert_eq!(report.class(ClassLabel::Hand).unwrap().accuracy, 1.0);
        assert_eq!(report.class(ClassLabel::Hand).unwrap().precision, Some(0.5));
        assert!(report.class(ClassLabel::NoThreat).is_none());
    }

    #[test]
    fn scoring_errors() {
        let labels = [ManifestEntry::new("a", ClassLabel::Threat)];
        assert_eq!(
            confusion_matrix(&[Prediction::new("x", PredictedLabel::Threat)], &labels),
            Err(ScoringError::UnknownSample("x".into()))
        );
        assert_eq!(
            confusion_matrix(
                &[
                    Prediction::new("a", PredictedLabel::Threat),
                    Prediction::new("a", PredictedLabel::Hand)
                ],
                &labels
            ),
            Err(ScoringError::DuplicatePrediction("a".into()))
        );
        assert_eq!(
            confusion_matrix(&[], &labels),
            Err(ScoringError::MissingPrediction("a".into()))
        );
    }

    #[test]
    fn indeterminate_scores_as_no_threat() {
        let labels = [ManifestEntry::new("a", ClassLabel::NoThreat)];
        let cm =
            confusion_matrix(&[Prediction::new("a", PredictedLabel::Indeterminate)], &labels)
                .unwrap();
        assert_eq!(cm.get(ClassLabel::NoThreat, ClassLabel::NoThreat), 1);
    }

    #[test]
    fn table_rows_and_empty_class() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0] = [9, 1, 0];
        cm.counts[2] = [0, 0, 4];
        let text = render_report(&per_class_accuracy(&cm), ReportFormat::TextTable);
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
        assert!(rows.contains(&vec!["Threat", "0.90", "10"]));
        assert!(rows.contains(&vec!["Hand", "1.00", "4"]));
        assert!(!text.contains("No Threat"));
    }

    #[test]
    fn json_report_round_trips() {
        let cm = ConfusionMatrix {
            counts: [[524, 6, 4], [12, 515, 4], [0, 1, 22]],
        };
        let mut report = per_class_accuracy(&cm);
        report.source = Some("preds.jsonl".into());
        let json = render_report(&report, ReportFormat::Json);
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn matrix_addition_merges_chunks() {
        let mut a = ConfusionMatrix::default();
        a.record(ClassLabel::Threat, ClassLabel::Hand);
        let mut b = ConfusionMatrix::default();
        b.record(ClassLabel::Threat, ClassLabel::Hand);
        b.record(ClassLabel::Hand, ClassLabel::Hand);
        let c = a + b;
        assert_eq!(c.get(ClassLabel::Threat, ClassLabel::Hand), 2);
        assert_eq!(c, b + a);
        assert_eq!(c.total(), 3);
    }
}
