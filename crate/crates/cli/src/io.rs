//! File and stdio plumbing; `-` means stdin or stdout everywhere.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use threatwatch_core::frame::parse_json_line;
use threatwatch_core::jsonl::NumberedLines;

use crate::CliError;

pub fn open_input(path: &str) -> Result<Box<dyn BufRead>, CliError> {
    if path == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let file = File::open(path).map_err(|e| CliError::Io(format!("cannot open {path}: {e}")))?;
    Ok(Box::new(BufReader::with_capacity(1 << 16, file)))
}

pub fn open_output(path: &str) -> Result<Box<dyn Write>, CliError> {
    if path == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    if let Some(parent) = Path::new(path).parent() {
        if !parent.as_os_str().is_empty() && !parent.exists() {
            return Err(CliError::Io(format!(
                "cannot create {path}: directory {} does not exist",
                parent.display()
            )));
        }
    }
    let file =
        File::create(path).map_err(|e| CliError::Io(format!("cannot create {path}: {e}")))?;
    Ok(Box::new(BufWriter::with_capacity(1 << 16, file)))
}

/// Reads a whole JSONL file of `T`; the first bad line aborts with a domain
/// error naming the line.
pub fn read_jsonl<T: DeserializeOwned>(path: &str) -> Result<Vec<T>, CliError> {
    let reader = open_input(path)?;
    let mut out = Vec::new();
    for item in NumberedLines::new(reader) {
        let (line, text) = item.map_err(|e| CliError::Io(format!("reading {path}: {e}")))?;
        let value =
            parse_json_line(&text, line).map_err(|e| CliError::Domain(format!("{path}: {e}")))?;
        out.push(value);
    }
    Ok(out)
}
