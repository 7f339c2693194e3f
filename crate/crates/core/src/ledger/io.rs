//! Event log files: newline-delimited JSON, one optional header record
//! followed by one event per line. A file without a header uses the default
//! header, so an empty file is a valid empty log.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::event::LedgerEvent;
use super::state::FinalizationRule;
use super::{Ledger, LedgerError, Weights};
use crate::benchmark::DescriptorSchema;
use crate::ids::LabelSet;
use crate::tokens::TokenConfig;

pub const LOG_FORMAT: &str = "pte-event-log";
pub const LOG_VERSION: u32 = 1;

/// Settings that decide which events are valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub labels: LabelSet,
    pub descriptor_schema: DescriptorSchema,
    pub finalization: FinalizationRule,
    pub tokens: TokenConfig,
    /// Level weights used for review and bounty thresholds.
    pub weights: Weights,
}

impl Default for LogHeader {
    fn default() -> Self {
        Self {
            format: LOG_FORMAT.to_string(),
            version: LOG_VERSION,
            labels: LabelSet::referee(),
            descriptor_schema: DescriptorSchema::default(),
            finalization: FinalizationRule::default(),
            tokens: TokenConfig::default(),
            weights: Weights::default(),
        }
    }
}

impl LogHeader {
    pub fn validate(&self) -> Result<(), String> {
        if self.format != LOG_FORMAT || self.version != LOG_VERSION {
            return Err(format!("unsupported log format {} v{}", self.format, self.version));
        }
        if self.finalization.min_ratings == 0 {
            return Err("finalization.min_ratings must be at least 1".into());
        }
        self.weights.validate(&self.labels).map_err(|e| e.to_string())
    }
}

pub fn write_log<W: Write>(ledger: &Ledger, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, ledger.header())?;
    out.write_all(b"\n")?;
    for ev in ledger.events() {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses and validates a log. Errors carry the 1-based line number and,
/// where one applies, the event seq.
pub fn read_log<R: BufRead>(input: R) -> Result<Ledger, LedgerError> {
    let mut ledger: Option<Ledger> = None;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| LedgerError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| LedgerError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        if ledger.is_none() && value.get("format").is_some() {
            let header: LogHeader = serde_json::from_value(value).map_err(|e| LedgerError::Format {
                line: line_no,
                message: format!("bad header: {e}"),
            })?;
            header
                .validate()
                .map_err(|message| LedgerError::Format { line: line_no, message })?;
            ledger = Some(Ledger::new(header));
            continue;
        }
        let ledger = ledger.get_or_insert_with(|| Ledger::new(LogHeader::default()));
        let seq_hint = value.get("seq").and_then(|s| s.as_u64());
        let event: LedgerEvent = serde_json::from_value(value).map_err(|e| LedgerError::Format {
            line: line_no,
            message: match seq_hint {
                Some(seq) => format!("seq {seq}: {e}"),
                None => e.to_string(),
            },
        })?;
        ledger.append(event).map_err(|e| LedgerError::AtLine {
            line: line_no,
            source: Box::new(e),
        })?;
    }
    Ok(ledger.unwrap_or_else(|| Ledger::new(LogHeader::default())))
}
