use std::io::BufRead;

use super::{BackendError, Capabilities, DetectorBackend};
use crate::frame::{parse_frame_record_at, FrameRecord};
use crate::jsonl::NumberedLines;

/// Replays pre-computed model outputs from a FrameRecord JSONL stream.
pub struct ReplayBackend<R> {
    lines: NumberedLines<R>,
    pending: Option<Result<FrameRecord, BackendError>>,
    caps: Capabilities,
}

impl<R: BufRead> ReplayBackend<R> {
    /// Reads ahead one record to infer the capabilities.
    pub fn new(reader: R) -> Self {
        let mut backend = Self {
            lines: NumberedLines::new(reader),
            pending: None,
            caps: Capabilities::ALL,
        };
        backend.pending = backend.read_next();
        if let Some(Ok(first)) = &backend.pending {
            backend.caps = Capabilities::inferred_from(first);
        }
        backend
    }

    fn read_next(&mut self) -> Option<Result<FrameRecord, BackendError>> {
        let item = self.lines.next()?;
        Some(match item {
            Ok((line_no, text)) => parse_frame_record_at(&text, line_no).map_err(Into::into),
            Err(e) => Err(e.into()),
        })
    }
}

impl<R: BufRead + Send> DetectorBackend for ReplayBackend<R> {
    fn capabilities(&self) -> Capabilities {
        self.caps
    }

    fn next_frame(&mut self) -> Option<Result<FrameRecord, BackendError>> {
        match self.pending.take() {
            Some(item) => Some(item),
            None => self.read_next(),
        }
    }
}
