use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use log::warn;
use threatwatch_core::backend::{frames, open_backend, synthesize, BackendError, OpenError};
use threatwatch_core::eval::Prediction;
use threatwatch_core::jsonl::write_line;
use threatwatch_core::temporal::OutOfOrderFrame;
use threatwatch_core::{
    assess_frame, confusion_matrix, make_splits, per_class_accuracy, render_report,
    validate_manifest, AlertKind, AlertTracker, ManifestEntry, ManifestStats, ReportFormat,
    ScenarioScript, Split, SplitRatios,
};

use crate::io::{open_output, read_jsonl};
use crate::webhook::WebhookNotifier;
use crate::{CliError, PipelineConfig};

/// End-of-run counters printed to stderr by `score` and `watch`.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub frames: u64,
    pub skipped: u64,
    pub out_of_order: u64,
    pub alerts_raised: u64,
    pub elapsed: Duration,
}

impl RunSummary {
    pub fn throughput(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs > 0.0 {
            self.frames as f64 / secs
        } else {
            0.0
        }
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "summary: frames={} skipped={} out_of_order={} alerts_raised={} elapsed_s={:.3} throughput_fps={:.0}",
            self.frames,
            self.skipped,
            self.out_of_order,
            self.alerts_raised,
            self.elapsed.as_secs_f64(),
            self.throughput()
        )
    }
}

fn open_error(e: OpenError) -> CliError {
    match e {
        OpenError::Io { .. } => CliError::Io(e.to_string()),
        _ => CliError::Domain(e.to_string()),
    }
}

fn write_err(e: std::io::Error) -> CliError {
    CliError::Io(format!("write failed: {e}"))
}

pub fn validate(manifest: &str) -> Result<ManifestStats, CliError> {
    let entries: Vec<ManifestEntry> = read_jsonl(manifest)?;
    let stats = validate_manifest(&entries).map_err(|e| CliError::Domain(e.to_string()))?;
    let mut out = open_output("-")?;
    write_line(&mut out, &stats).map_err(write_err)?;
    out.flush().map_err(write_err)?;
    eprintln!("{stats}");
    Ok(stats)
}

pub fn parse_ratios(text: &str) -> Result<SplitRatios, CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Domain(format!("bad ratios `{text}`: {e}")))?;
    let [train, val, test] = parts[..] else {
        return Err(CliError::Domain(format!(
            "bad ratios `{text}`: expected three comma-separated values"
        )));
    };
    let ratios = SplitRatios::new(train, val, test);
    ratios
        .validate()
        .map_err(|e| CliError::Domain(e.to_string()))?;
    Ok(ratios)
}

pub fn split(manifest: &str, seed: u64, ratios: &str, out: &str) -> Result<(), CliError> {
    let ratios = parse_ratios(ratios)?;
    let entries: Vec<ManifestEntry> = read_jsonl(manifest)?;
    validate_manifest(&entries).map_err(|e| CliError::Domain(e.to_string()))?;
    let assignment =
        make_splits(&entries, seed, ratios).map_err(|e| CliError::Domain(e.to_string()))?;
    let mut w = open_output(out)?;
    w.write_all(assignment.to_jsonl().as_bytes())
        .and_then(|_| w.flush())
        .map_err(write_err)?;
    eprintln!(
        "split: seed={} train={} val={} test={}",
        seed,
        assignment.count(Split::Train),
        assignment.count(Split::Val),
        assignment.count(Split::Test)
    );
    Ok(())
}

pub fn score(
    input: &str,
    cfg: &PipelineConfig,
    out: &str,
    strict: bool,
) -> Result<RunSummary, CliError> {
    let mut backend = open_backend(input).map_err(open_error)?;
    let mut w = open_output(out)?;
    let mut summary = RunSummary::default();
    let start = Instant::now();
    for item in frames(backend.as_mut()) {
        let record = match item {
            Ok(r) => r,
            Err(e) => {
                skip_or_abort(e, strict)?;
                summary.skipped += 1;
                continue;
            }
        };
        let assessment = assess_frame(&record, &cfg.fusion);
        write_line(&mut w, &assessment).map_err(write_err)?;
        summary.frames += 1;
    }
    w.flush().map_err(write_err)?;
    summary.elapsed = start.elapsed();
    eprintln!("{summary}");
    Ok(summary)
}

fn skip_or_abort(e: BackendError, strict: bool) -> Result<(), CliError> {
    match e {
        BackendError::Io(e) => Err(CliError::Io(format!("reading input: {e}"))),
        BackendError::Parse(e) if strict => Err(CliError::Domain(e.to_string())),
        BackendError::Parse(e) => {
            warn!("skipping {} ({})", e, e.code());
            Ok(())
        }
    }
}

pub fn watch(
    input: &str,
    cfg: &PipelineConfig,
    alerts: &str,
    webhook: Option<&str>,
    strict: bool,
) -> Result<RunSummary, CliError> {
    let mut backend = open_backend(input).map_err(open_error)?;
    let mut w = open_output(alerts)?;
    let mut notifier = webhook
        .or(cfg.webhook_url.as_deref())
        .map(|url| WebhookNotifier::new(url, Duration::from_secs(2)));
    let mut tracker = AlertTracker::new(cfg.temporal);
    let mut summary = RunSummary::default();

    let mut emit = |event: threatwatch_core::AlertEvent,
                    summary: &mut RunSummary|
     -> Result<(), CliError> {
        if event.kind == AlertKind::Raised {
            summary.alerts_raised += 1;
        }
        write_line(&mut w, &event)
            .and_then(|_| w.flush())
            .map_err(write_err)?;
        if let Some(n) = notifier.as_mut() {
            n.notify(&event);
        }
        Ok(())
    };

    let start = Instant::now();
    for item in frames(backend.as_mut()) {
        let record = match item {
            Ok(r) => r,
            Err(e) => {
                skip_or_abort(e, strict)?;
                summary.skipped += 1;
                continue;
            }
        };
        let assessment = assess_frame(&record, &cfg.fusion);
        match tracker.observe(&assessment) {
            Ok(Some(event)) => emit(event, &mut summary)?,
            Ok(None) => {}
            Err(OutOfOrderFrame {
                frame_id,
                last_frame_id,
            }) => {
                warn!(
                    "stream {}: dropping frame {frame_id} (last seen {last_frame_id})",
                    record.stream_id
                );
                summary.out_of_order += 1;
                continue;
            }
        }
        summary.frames += 1;
    }
    for event in tracker.flush_all() {
        emit(event, &mut summary)?;
    }
    summary.elapsed = start.elapsed();
    if let Some(n) = notifier {
        let stats = n.finish(Duration::from_secs(10));
        if stats.failed > 0 || stats.dropped > 0 {
            warn!(
                "webhook: {} delivered, {} failed, {} dropped",
                stats.delivered, stats.failed, stats.dropped
            );
        }
        eprintln!(
            "webhook: delivered={} failed={} dropped={}",
            stats.delivered, stats.failed, stats.dropped
        );
    }
    eprintln!("{summary}");
    Ok(summary)
}

pub fn eval(pred: &str, labels: &str, report: &str, format: ReportFormat) -> Result<(), CliError> {
    let labels: Vec<ManifestEntry> = read_jsonl(labels)?;
    validate_manifest(&labels).map_err(|e| CliError::Domain(format!("labels: {e}")))?;
    let predictions: Vec<Prediction> = read_jsonl(pred)?;
    let matrix =
        confusion_matrix(&predictions, &labels).map_err(|e| CliError::Domain(e.to_string()))?;
    let mut result = per_class_accuracy(&matrix);
    result.source = Some(pred.to_owned());
    let mut w = open_output(report)?;
    w.write_all(render_report(&result, format).as_bytes())
        .and_then(|_| w.flush())
        .map_err(write_err)?;
    Ok(())
}

pub fn simulate(scenario: &str, seed: Option<u64>, out: &str) -> Result<u64, CliError> {
    let text = std::fs::read_to_string(scenario)
        .map_err(|e| CliError::Io(format!("cannot read {scenario}: {e}")))?;
    let mut script = ScenarioScript::from_json(&text).map_err(open_error)?;
    if let Some(seed) = seed {
        script.seed = seed;
    }
    let mut w = open_output(out)?;
    let mut n = 0;
    for record in synthesize(script).map_err(open_error)? {
        write_line(&mut w, &record).map_err(write_err)?;
        n += 1;
    }
    w.flush().map_err(write_err)?;
    Ok(n)
}
