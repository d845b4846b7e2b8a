//! Sources of [`FrameRecord`]s.
//!
//! A backend wraps whatever produces model evidence: a recorded JSONL file,
//! the deterministic scenario generator, or an external model runtime.
//! Backends are opened from a URI:
//!
//! | URI                     | Backend                                   |
//! |-------------------------|-------------------------------------------|
//! | `jsonl:<path>` or `-`   | replay of recorded frames (`-` is stdin)  |
//! | `synthetic:<path>`      | scenario script, see [`ScenarioScript`]   |
//! | `extern:<adapter>`      | real-inference adapter (none built in)    |

mod replay;
mod synthetic;

use std::fs::File;
use std::io::{self, BufReader};
use std::path::PathBuf;

use thiserror::Error;

use crate::frame::{FrameRecord, ParseError};

pub use replay::ReplayBackend;
pub use synthetic::{synthesize, Scene, ScenarioScript, Segment, SyntheticBackend};

/// Which evidence channels a backend fills in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub provides_scores: bool,
    pub provides_detections: bool,
    pub provides_keypoints: bool,
}

impl Capabilities {
    pub const ALL: Capabilities = Capabilities {
        provides_scores: true,
        provides_detections: true,
        provides_keypoints: true,
    };

    pub fn any(&self) -> bool {
        self.provides_scores || self.provides_detections || self.provides_keypoints
    }

    /// Channels present in `record`; an evidence-free record says nothing,
    /// so every channel is assumed.
    pub fn inferred_from(record: &FrameRecord) -> Self {
        let caps = Capabilities {
            provides_scores: record.scores.is_some(),
            provides_detections: !record.detections.is_empty(),
            provides_keypoints: !record.keypoints.is_empty(),
        };
        if caps.any() {
            caps
        } else {
            Capabilities::ALL
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
}

/// A stream of frame records from one evidence source.
pub trait DetectorBackend: Send {
    fn capabilities(&self) -> Capabilities;

    /// Next record, `None` at end of stream. A parse error affects only the
    /// offending record; callers may keep reading.
    fn next_frame(&mut self) -> Option<Result<FrameRecord, BackendError>>;
}

/// Adapts a backend into an iterator.
pub fn frames(
    backend: &mut dyn DetectorBackend,
) -> impl Iterator<Item = Result<FrameRecord, BackendError>> + '_ {
    std::iter::from_fn(move || backend.next_frame())
}

#[derive(Debug, Error)]
pub enum OpenError {
    #[error("unknown backend scheme in `{0}` (expected jsonl:, synthetic: or extern:)")]
    UnknownScheme(String),
    #[error("backend adapter `{0}` is not available in this build")]
    AdapterUnavailable(String),
    #[error("bad scenario script: {0}")]
    BadScript(String),
    #[error("cannot open {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Opens a backend from its URI.
pub fn open_backend(uri: &str) -> Result<Box<dyn DetectorBackend>, OpenError> {
    if uri == "-" {
        return open_backend("jsonl:-");
    }
    let Some((scheme, rest)) = uri.split_once(':') else {
        return Err(OpenError::UnknownScheme(uri.to_owned()));
    };
    match scheme {
        "jsonl" => {
            if rest == "-" {
                return Ok(Box::new(ReplayBackend::new(BufReader::new(io::stdin()))));
            }
            let file = File::open(rest).map_err(|source| OpenError::Io {
                path: rest.into(),
                source,
            })?;
            Ok(Box::new(ReplayBackend::new(BufReader::with_capacity(
                1 << 16,
                file,
            ))))
        }
        "synthetic" => {
            let text = std::fs::read_to_string(rest).map_err(|source| OpenError::Io {
                path: rest.into(),
                source,
            })?;
            let script = ScenarioScript::from_json(&text)?;
            Ok(Box::new(SyntheticBackend::new(script)?))
        }
        "extern" => Err(OpenError::AdapterUnavailable(rest.to_owned())),
        _ => Err(OpenError::UnknownScheme(uri.to_owned())),
    }
}
