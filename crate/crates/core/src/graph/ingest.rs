//! CSV transaction ingestion.

use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use super::TransactionRecord;

/// Column names for the required transaction fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub card_id: String,
    pub terminal_id: String,
    pub timestamp: String,
    pub amount: String,
    pub is_fraud: String,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            card_id: "card_id".into(),
            terminal_id: "terminal_id".into(),
            timestamp: "timestamp".into(),
            amount: "amount".into(),
            is_fraud: "is_fraud".into(),
        }
    }
}

/// What to do with a row that fails validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("reading header: {0}")]
    Header(#[source] csv::Error),
    #[error("header has no column named {0:?}")]
    MissingColumn(String),
    #[error(transparent)]
    Row(#[from] RowError),
}

/// A rejected data row. `line` is 1-based and counts the header as line 1.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("line {line}: {kind}")]
pub struct RowError {
    pub line: u64,
    pub kind: RowErrorKind,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RowErrorKind {
    #[error("malformed row: {0}")]
    Malformed(String),
    #[error("expected {expected} columns, found {found}")]
    ColumnCount { expected: usize, found: usize },
    #[error("empty {0}")]
    EmptyField(&'static str),
    #[error("unparsable timestamp {0:?}")]
    Timestamp(String),
    #[error("timestamp {0:?} does not match the column's {1} encoding")]
    MixedTimestamp(String, &'static str),
    #[error("negative amount {0:?}")]
    NegativeAmount(String),
    #[error("unparsable amount {0:?}")]
    Amount(String),
    #[error("unparsable fraud flag {0:?}")]
    FraudFlag(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TimestampEncoding {
    EpochSeconds,
    Rfc3339,
}

impl TimestampEncoding {
    fn name(self) -> &'static str {
        match self {
            Self::EpochSeconds => "epoch-seconds",
            Self::Rfc3339 => "RFC 3339",
        }
    }
}

#[derive(Clone, Copy)]
struct Columns {
    card: usize,
    terminal: usize,
    timestamp: usize,
    amount: usize,
    fraud: usize,
    width: usize,
}

/// Streaming reader yielding one validated record per data row, in order.
pub struct TransactionReader<R: Read> {
    rows: csv::StringRecordsIntoIter<R>,
    columns: Columns,
    encoding: Option<TimestampEncoding>,
}

/// Opens a headered CSV stream. Fails only if the header is unreadable or
/// lacks a mapped column; row problems surface per item.
pub fn ingest_transactions<R: Read>(
    source: R,
    schema: &Schema,
) -> Result<TransactionReader<R>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers().map_err(IngestError::Header)?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };
    let columns = Columns {
        card: find(&schema.card_id)?,
        terminal: find(&schema.terminal_id)?,
        timestamp: find(&schema.timestamp)?,
        amount: find(&schema.amount)?,
        fraud: find(&schema.is_fraud)?,
        width: header.len(),
    };
    Ok(TransactionReader {
        rows: reader.into_records(),
        columns,
        encoding: None,
    })
}

impl<R: Read> TransactionReader<R> {
    fn parse(&mut self, row: &csv::StringRecord) -> Result<TransactionRecord, RowErrorKind> {
        let cols = self.columns;
        if row.len() != cols.width {
            return Err(RowErrorKind::ColumnCount {
                expected: cols.width,
                found: row.len(),
            });
        }
        let card_id = &row[cols.card];
        if card_id.is_empty() {
            return Err(RowErrorKind::EmptyField("card_id"));
        }
        let terminal_id = &row[cols.terminal];
        if terminal_id.is_empty() {
            return Err(RowErrorKind::EmptyField("terminal_id"));
        }
        let raw_ts = &row[cols.timestamp];
        let timestamp = self.parse_timestamp(raw_ts)?;
        let amount = parse_amount(&row[cols.amount])?;
        let is_fraud = parse_flag(&row[cols.fraud])?;
        Ok(TransactionRecord {
            card_id: card_id.to_string(),
            terminal_id: terminal_id.to_string(),
            timestamp,
            amount,
            is_fraud,
        })
    }

    fn parse_timestamp(&mut self, raw: &str) -> Result<i64, RowErrorKind> {
        let encoding = match self.encoding {
            Some(e) => e,
            None => {
                let detected = if raw.parse::<i64>().is_ok() {
                    TimestampEncoding::EpochSeconds
                } else if DateTime::parse_from_rfc3339(raw).is_ok() {
                    TimestampEncoding::Rfc3339
                } else {
                    return Err(RowErrorKind::Timestamp(raw.to_string()));
                };
                self.encoding = Some(detected);
                detected
            }
        };
        let parsed = match encoding {
            TimestampEncoding::EpochSeconds => raw.parse::<i64>().ok(),
            TimestampEncoding::Rfc3339 => DateTime::parse_from_rfc3339(raw)
                .ok()
                .map(|d| d.timestamp()),
        };
        parsed.ok_or_else(|| {
            let other_ok = match encoding {
                TimestampEncoding::EpochSeconds => DateTime::parse_from_rfc3339(raw).is_ok(),
                TimestampEncoding::Rfc3339 => raw.parse::<i64>().is_ok(),
            };
            if other_ok {
                RowErrorKind::MixedTimestamp(raw.to_string(), encoding.name())
            } else {
                RowErrorKind::Timestamp(raw.to_string())
            }
        })
    }
}

fn parse_amount(raw: &str) -> Result<u64, RowErrorKind> {
    match raw.parse::<u64>() {
        Ok(v) => Ok(v),
        Err(_) if raw.starts_with('-') && raw[1..].parse::<u64>().is_ok() => {
            Err(RowErrorKind::NegativeAmount(raw.to_string()))
        }
        Err(_) => Err(RowErrorKind::Amount(raw.to_string())),
    }
}

fn parse_flag(raw: &str) -> Result<bool, RowErrorKind> {
    match raw {
        "1" | "true" | "TRUE" | "True" => Ok(true),
        "0" | "false" | "FALSE" | "False" => Ok(false),
        _ => Err(RowErrorKind::FraudFlag(raw.to_string())),
    }
}

impl<R: Read> Iterator for TransactionReader<R> {
    type Item = Result<TransactionRecord, RowError>;

    fn next(&mut self) -> Option<Self::Item> {
        let row = self.rows.next()?;
        Some(match row {
            Ok(row) => {
                let line = row.position().map_or(0, |p| p.line());
                self.parse(&row).map_err(|kind| RowError { line, kind })
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                Err(RowError {
                    line,
                    kind: RowErrorKind::Malformed(e.to_string()),
                })
            }
        })
    }
}

/// Records read under a policy, plus the rows skipped along the way.
#[derive(Debug, Default)]
pub struct IngestOutcome {
    pub records: Vec<TransactionRecord>,
    pub skipped: Vec<RowError>,
}

pub fn read_transactions<R: Read>(
    source: R,
    schema: &Schema,
    policy: ErrorPolicy,
) -> Result<IngestOutcome, IngestError> {
    let mut outcome = IngestOutcome::default();
    for row in ingest_transactions(source, schema)? {
        match (row, policy) {
            (Ok(record), _) => outcome.records.push(record),
            (Err(e), ErrorPolicy::Abort) => return Err(e.into()),
            (Err(e), ErrorPolicy::Skip) => outcome.skipped.push(e),
        }
    }
    Ok(outcome)
}

/// Writes records with the default schema header and RFC 3339 timestamps.
pub fn write_transactions<'a, W, I>(sink: W, records: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a TransactionRecord>,
{
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["card_id", "terminal_id", "timestamp", "amount", "is_fraud"])?;
    for r in records {
        let when = DateTime::<Utc>::from_timestamp(r.timestamp, 0)
            .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
            .unwrap_or_else(|| r.timestamp.to_string());
        writer.write_record([
            r.card_id.as_str(),
            r.terminal_id.as_str(),
            when.as_str(),
            r.amount.to_string().as_str(),
            if r.is_fraud { "1" } else { "0" },
        ])?;
    }
    writer.flush()?;
    Ok(())
}
