//! Input traces: one [`InputFrame`] per JSONL line, optionally preceded by a
//! header line `{"header":{...}}` naming the kernel config, the scene and the
//! generator seed.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{InputFrame, KernelConfig};

mod synth;

pub use synth::{synth_trace, synth_trace_with, SyntheticUserParams};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: time {t} ms does not advance past {prev} ms")]
    NonMonotonic { line: usize, prev: u64, t: u64 },
    #[error("line {line}: first frame must be at t = 0, found {t}")]
    FirstFrameNotZero { line: usize, t: u64 },
    #[error("line {line}: header must be the first line")]
    MisplacedHeader { line: usize },
    #[error("trace contains no frames")]
    Empty,
}

/// Which scene a trace was recorded against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneRef {
    Study { depth_m: f64, rotation_deg: f64 },
    File(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub config: KernelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneRef>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub header: Option<TraceHeader>,
    pub frames: Vec<InputFrame>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: TraceHeader,
}

#[derive(Serialize)]
struct HeaderLineRef<'a> {
    header: &'a TraceHeader,
}

impl Trace {
    /// Checks the time invariants; `line_of(i)` maps frame index to a line
    /// number for error messages.
    fn validate_with(&self, line_of: impl Fn(usize) -> usize) -> Result<(), TraceError> {
        let first = self.frames.first().ok_or(TraceError::Empty)?;
        if first.t != 0 {
            return Err(TraceError::FirstFrameNotZero {
                line: line_of(0),
                t: first.t,
            });
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(TraceError::NonMonotonic {
                    line: line_of(i + 1),
                    prev: w[0].t,
                    t: w[1].t,
                });
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let offset = usize::from(self.header.is_some()) + 1;
        self.validate_with(|i| i + offset)
    }
}

/// Parses a JSONL trace from a reader. Blank lines are skipped.
pub fn read_trace<R: BufRead>(reader: R) -> Result<Trace, TraceError> {
    let mut trace = Trace::default();
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text.starts_with("{\"header\"") {
            if !trace.frames.is_empty() || trace.header.is_some() {
                return Err(TraceError::MisplacedHeader { line: line_no });
            }
            let h: HeaderLine = serde_json::from_str(text).map_err(|e| TraceError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            trace.header = Some(h.header);
            continue;
        }
        let frame: InputFrame = serde_json::from_str(text).map_err(|e| TraceError::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        trace.frames.push(frame);
        lines.push(line_no);
    }
    trace.validate_with(|i| lines[i])?;
    Ok(trace)
}

pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    read_trace(text.as_bytes())
}

pub fn write_trace<W: Write>(mut w: W, trace: &Trace) -> Result<(), TraceError> {
    if let Some(h) = &trace.header {
        serde_json::to_writer(&mut w, &HeaderLineRef { header: h })
            .map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    for f in &trace.frames {
        serde_json::to_writer(&mut w, f).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn trace_to_string(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}
