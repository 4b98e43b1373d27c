//! Line-delimited JSON log of sensor frames, one frame per line, and the
//! JSON ground-truth file that may accompany it.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::simulator::{GroundTruthMap, SensorFrame};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("line {line}: timestamp {t} does not increase")]
    Order { line: usize, t: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_frames<W: Write>(mut w: W, frames: &[SensorFrame]) -> std::io::Result<()> {
    for f in frames {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads a frame log. Blank lines are skipped; line numbers in errors are
/// 1-based.
pub fn read_frames<R: BufRead>(r: R) -> Result<Vec<SensorFrame>, LogError> {
    let mut out: Vec<SensorFrame> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: SensorFrame = serde_json::from_str(&line).map_err(|e| LogError::Schema {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if out.last().is_some_and(|p| !(f.timestamp > p.timestamp)) {
            return Err(LogError::Order {
                line: i + 1,
                t: f.timestamp,
            });
        }
        out.push(f);
    }
    Ok(out)
}

pub fn write_truth<W: Write>(w: W, truth: &GroundTruthMap) -> std::io::Result<()> {
    serde_json::to_writer(w, truth).map_err(std::io::Error::other)
}

pub fn read_truth<R: std::io::Read>(r: R) -> Result<GroundTruthMap, LogError> {
    serde_json::from_reader(r).map_err(|e| LogError::Schema {
        line: e.line(),
        msg: e.to_string(),
    })
}
