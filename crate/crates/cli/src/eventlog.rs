//! Line-delimited JSON event log: a header carrying the config and its
//! hash, one line per herald, optionally one line per click, and a closing
//! summary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use herald_core::photonics::TaggedClick;
use herald_core::protocol::{EventLog, HeraldRecord, RunCounters};
use herald_core::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT: &str = "herald-events/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub tool_version: String,
    pub config_hash: String,
    /// Whether click provenance and true state fidelities are present.
    pub oracle: bool,
    /// Whether every click of the run follows the heralds.
    pub clicks: bool,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub counters: RunCounters,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
enum Line {
    Header(LogHeader),
    Herald(HeraldRecord),
    Click(TaggedClick),
    Summary(LogSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogFile {
    pub header: LogHeader,
    pub log: EventLog,
}

impl LogFile {
    /// Wraps a finished run; strips ground truth unless `oracle`.
    pub fn new(log: EventLog, config_hash: String, oracle: bool) -> Self {
        let log = if oracle { log } else { log.without_oracle() };
        let header = LogHeader {
            format: FORMAT.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            oracle,
            clicks: log.clicks.is_some(),
            config: log.config.clone(),
        };
        Self { header, log }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = |l: &Line| -> std::io::Result<()> {
            serde_json::to_writer(&mut out, l)?;
            out.write_all(b"\n")
        };
        line(&Line::Header(self.header.clone()))?;
        for r in &self.log.records {
            line(&Line::Herald(r.clone()))?;
        }
        for c in self.log.clicks.iter().flatten() {
            line(&Line::Click(*c))?;
        }
        line(&Line::Summary(LogSummary { counters: self.log.counters, wall_time_s: self.log.wall_time_s }))?;
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| CliError::io(path, e))
    }

    pub fn read_from<R: BufRead>(input: R, path: &Path) -> Result<Self, CliError> {
        let bad = |line: usize, reason: String| CliError::Malformed { path: path.to_path_buf(), line, reason };
        let mut header: Option<LogHeader> = None;
        let mut records = Vec::new();
        let mut clicks = Vec::new();
        let mut summary: Option<LogSummary> = None;
        for (i, text) in input.lines().enumerate() {
            let n = i + 1;
            let text = text.map_err(|e| CliError::io(path, e))?;
            if summary.is_some() {
                return Err(bad(n, "content after the summary line".into()));
            }
            let parsed: Line = serde_json::from_str(&text).map_err(|e| bad(n, e.to_string()))?;
            match (parsed, header.is_some()) {
                (Line::Header(h), false) => {
                    if h.format != FORMAT {
                        return Err(bad(n, format!("unsupported format {:?}", h.format)));
                    }
                    header = Some(h);
                }
                (Line::Header(_), true) => return Err(bad(n, "second header".into())),
                (_, false) => return Err(bad(n, "first line must be the header".into())),
                (Line::Herald(r), true) => {
                    if !clicks.is_empty() {
                        return Err(bad(n, "herald after click lines".into()));
                    }
                    records.push(r);
                }
                (Line::Click(c), true) => clicks.push(c),
                (Line::Summary(s), true) => summary = Some(s),
            }
        }
        let header = header.ok_or_else(|| bad(0, "empty file".into()))?;
        let summary = summary.ok_or_else(|| bad(0, "missing summary line (truncated log?)".into()))?;
        if !header.clicks && !clicks.is_empty() {
            return Err(bad(0, "click lines in a log whose header says it has none".into()));
        }
        let log = EventLog {
            config: header.config.clone(),
            records,
            counters: summary.counters,
            wall_time_s: summary.wall_time_s,
            clicks: header.clicks.then_some(clicks),
        };
        Ok(Self { header, log })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        Self::read_from(BufReader::new(file), path)
    }
}
