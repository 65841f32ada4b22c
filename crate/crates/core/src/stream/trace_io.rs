//! Text trace files: one `<key-hex>,<value-decimal>` item per LF line.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stream::{from_hex, to_hex, StreamTrace};

/// Loads a trace whose keys are all `key_len` bytes long.
///
/// Every malformed line is reported with its 1-based line number. Blank
/// trailing lines are ignored; an empty file yields an empty trace.
pub fn load_trace(path: impl AsRef<Path>, key_len: usize) -> Result<StreamTrace> {
    let text = fs::read_to_string(path)?;
    let mut trace = StreamTrace::new(key_len)?;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        let (key_hex, value_str) = line.split_once(',').ok_or_else(|| Error::TraceParse {
            line: lineno,
            reason: "missing `,` separator".into(),
        })?;
        let key = from_hex(key_hex).ok_or_else(|| Error::TraceParse {
            line: lineno,
            reason: format!("invalid hex key `{key_hex}`"),
        })?;
        if key.len() != key_len {
            return Err(Error::TraceParse {
                line: lineno,
                reason: format!("key is {} bytes, trace uses {key_len}", key.len()),
            });
        }
        let value: i64 = value_str.parse().map_err(|_| Error::TraceParse {
            line: lineno,
            reason: format!("invalid value `{value_str}`"),
        })?;
        trace.push(&key, value).map_err(|e| Error::TraceParse {
            line: lineno,
            reason: e.to_string(),
        })?;
    }
    Ok(trace)
}

/// Writes a trace in the line format `load_trace` reads.
///
/// Output is byte-exact for a given trace: lowercase hex, decimal value,
/// LF terminator on every line.
pub fn save_trace(trace: &StreamTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(trace.len() * (trace.key_len() * 2 + 8));
    for (key, value) in trace.iter() {
        writeln!(out, "{},{}", to_hex(key), value).expect("vec write");
    }
    fs::write(path, out)?;
    Ok(())
}
