//! Line-oriented JSON helpers shared by readers and writers.

use std::io::{self, BufRead, Write};

use serde::Serialize;

/// Non-blank lines of a reader, paired with their 1-based line numbers.
pub struct NumberedLines<R> {
    reader: R,
    line: usize,
}

impl<R: BufRead> NumberedLines<R> {
    pub fn new(reader: R) -> Self {
        Self { reader, line: 0 }
    }
}

impl<R: BufRead> Iterator for NumberedLines<R> {
    type Item = io::Result<(usize, String)>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let mut buf = String::new();
            match self.reader.read_line(&mut buf) {
                Ok(0) => return None,
                Ok(_) => {
                    self.line += 1;
                    let trimmed = buf.trim_end_matches(['\n', '\r']);
                    if trimmed.trim().is_empty() {
                        continue;
                    }
                    if trimmed.len() != buf.len() {
                        buf.truncate(trimmed.len());
                    }
                    return Some(Ok((self.line, buf)));
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Writes `value` as one JSON line terminated by `\n`.
pub fn write_line<W: Write + ?Sized, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}
