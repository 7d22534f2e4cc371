//! Parsers for the three input files: newline-delimited transaction records,
//! the daily rate CSV, and the address label CSV. Validation is strict;
//! every error names the offending line.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Category, ModelError, RateError, RateTable, Transaction, TxInput, TxOutput,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {source}")]
    Malformed {
        line: u64,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {msg}")]
    Invalid { line: u64, msg: String },
    #[error("line {line}: {source}")]
    InvalidRecord {
        line: u64,
        #[source]
        source: ModelError,
    },
    #[error("line {line}: expected header {expected:?}, got {got:?}")]
    BadHeader {
        line: u64,
        expected: &'static str,
        got: String,
    },
    #[error("line {line}: {source}")]
    Rate {
        line: u64,
        #[source]
        source: RateError,
    },
    #[error("line {line}: address {address:?} already labeled {existing} (now {new})")]
    LabelConflict {
        line: u64,
        address: String,
        existing: Category,
        new: Category,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    fn invalid(line: u64, msg: impl Into<String>) -> IngestError {
        IngestError::Invalid {
            line,
            msg: msg.into(),
        }
    }
}

// Wire form of one transaction record. Values are decoded as signed so that
// negative amounts surface as validation errors instead of serde type errors.
#[derive(Serialize, Deserialize)]
struct TxRecord {
    txid: String,
    height: i64,
    time: i64,
    pos: i64,
    #[serde(rename = "in")]
    inputs: Vec<IoRecord>,
    #[serde(rename = "out")]
    outputs: Vec<IoRecord>,
}

#[derive(Serialize, Deserialize)]
struct IoRecord {
    addr: String,
    sat: i64,
}

fn record_to_transaction(rec: TxRecord, line: u64) -> Result<Transaction, IngestError> {
    let non_negative = |v: i64, what: &str| -> Result<u64, IngestError> {
        u64::try_from(v).map_err(|_| IngestError::invalid(line, format!("negative {what}: {v}")))
    };
    let height = non_negative(rec.height, "height")?;
    let pos = non_negative(rec.pos, "pos")?;
    if rec.time < 0 {
        return Err(IngestError::invalid(line, format!("negative time: {}", rec.time)));
    }
    let mut inputs = Vec::with_capacity(rec.inputs.len());
    for io in rec.inputs {
        inputs.push(TxInput {
            value_satoshi: non_negative(io.sat, "input value")?,
            address: io.addr,
        });
    }
    let mut outputs = Vec::with_capacity(rec.outputs.len());
    for io in rec.outputs {
        outputs.push(TxOutput {
            value_satoshi: non_negative(io.sat, "output value")?,
            address: io.addr,
        });
    }
    let tx = Transaction {
        txid: rec.txid.to_ascii_lowercase(),
        block_height: height,
        timestamp: rec.time,
        position_in_block: pos,
        inputs,
        outputs,
    };
    tx.validate()
        .map_err(|source| IngestError::InvalidRecord { line, source })?;
    Ok(tx)
}

/// Streaming reader over transaction records: one `Result` per line, with
/// O(1) state beyond the current record. Blank lines are skipped.
pub struct TransactionReader<R> {
    reader: R,
    line: u64,
    buf: String,
}

impl<R: BufRead> TransactionReader<R> {
    pub fn new(reader: R) -> TransactionReader<R> {
        TransactionReader {
            reader,
            line: 0,
            buf: String::new(),
        }
    }

    /// 1-based number of the most recently read line.
    pub fn line(&self) -> u64 {
        self.line
    }
}

impl<R: BufRead> Iterator for TransactionReader<R> {
    type Item = Result<Transaction, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line += 1;
            let trimmed = self.buf.trim_end_matches(['\n', '\r']);
            if trimmed.is_empty() {
                continue;
            }
            let line = self.line;
            return Some(
                serde_json::from_str::<TxRecord>(trimmed)
                    .map_err(|source| IngestError::Malformed { line, source })
                    .and_then(|rec| record_to_transaction(rec, line)),
            );
        }
    }
}

/// Parses an entire record stream, aborting on the first bad line.
pub fn parse_transactions<R: BufRead>(reader: R) -> Result<Vec<Transaction>, IngestError> {
    TransactionReader::new(reader).collect()
}

/// Parses a record stream, counting and skipping invalid records instead of
/// aborting. I/O errors still abort. Returns the transactions plus the
/// number of dropped records.
pub fn parse_transactions_skip_invalid<R: BufRead>(
    reader: R,
) -> Result<(Vec<Transaction>, u64), IngestError> {
    let mut txs = Vec::new();
    let mut dropped = 0u64;
    for item in TransactionReader::new(reader) {
        match item {
            Ok(tx) => txs.push(tx),
            Err(IngestError::Io(e)) => return Err(e.into()),
            Err(_) => dropped += 1,
        }
    }
    Ok((txs, dropped))
}

/// Canonical single-line encoding of a transaction record. Parsing the
/// output yields a transaction identical to the input.
pub fn write_transaction(tx: &Transaction) -> String {
    let rec = TxRecord {
        txid: tx.txid.clone(),
        height: tx.block_height as i64,
        time: tx.timestamp,
        pos: tx.position_in_block as i64,
        inputs: tx
            .inputs
            .iter()
            .map(|i| IoRecord {
                addr: i.address.clone(),
                sat: i.value_satoshi as i64,
            })
            .collect(),
        outputs: tx
            .outputs
            .iter()
            .map(|o| IoRecord {
                addr: o.address.clone(),
                sat: o.value_satoshi as i64,
            })
            .collect(),
    };
    serde_json::to_string(&rec).expect("record serialization cannot fail")
}

pub fn write_transactions<W: std::io::Write>(
    mut w: W,
    txs: &[Transaction],
) -> std::io::Result<()> {
    for tx in txs {
        writeln!(w, "{}", write_transaction(tx))?;
    }
    Ok(())
}

pub const RATES_HEADER: &str = "date,usd_per_btc";
pub const LABELS_HEADER: &str = "address,category";

fn csv_lines<R: BufRead>(
    reader: R,
    expected_header: &'static str,
) -> Result<Vec<(u64, String)>, IngestError> {
    let mut rows = Vec::new();
    let mut line_no = 0u64;
    let mut saw_header = false;
    for line in reader.lines() {
        let line = line?;
        line_no += 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !saw_header {
            if trimmed != expected_header {
                return Err(IngestError::BadHeader {
                    line: line_no,
                    expected: expected_header,
                    got: trimmed.to_string(),
                });
            }
            saw_header = true;
            continue;
        }
        rows.push((line_no, trimmed.to_string()));
    }
    if !saw_header {
        return Err(IngestError::BadHeader {
            line: line_no,
            expected: expected_header,
            got: String::new(),
        });
    }
    Ok(rows)
}

fn split2(line_no: u64, row: &str) -> Result<(&str, &str), IngestError> {
    let mut parts = row.splitn(2, ',');
    let a = parts.next().unwrap_or("");
    let b = parts
        .next()
        .ok_or_else(|| IngestError::invalid(line_no, "expected two comma-separated fields"))?;
    if b.contains(',') {
        return Err(IngestError::invalid(line_no, "expected exactly two fields"));
    }
    Ok((a, b))
}

/// Parses the `date,usd_per_btc` CSV into a rate table. An empty body (header
/// only) is valid and yields an empty table.
pub fn parse_rate_table<R: BufRead>(reader: R) -> Result<RateTable, IngestError> {
    let mut table = RateTable::new();
    for (line_no, row) in csv_lines(reader, RATES_HEADER)? {
        let (date_s, rate_s) = split2(line_no, &row)?;
        let date = NaiveDate::from_str(date_s)
            .map_err(|e| IngestError::invalid(line_no, format!("bad date {date_s:?}: {e}")))?;
        let rate: f64 = rate_s
            .parse()
            .map_err(|e| IngestError::invalid(line_no, format!("bad rate {rate_s:?}: {e}")))?;
        table
            .insert(date, rate)
            .map_err(|source| IngestError::Rate { line: line_no, source })?;
    }
    Ok(table)
}

/// Address-to-category labels. Addresses compare case-sensitively; one
/// category per address.
#[derive(Debug, Clone, Default)]
pub struct LabelSet {
    labels: BTreeMap<String, Category>,
}

impl LabelSet {
    pub fn new() -> LabelSet {
        LabelSet::default()
    }

    pub fn insert(&mut self, address: String, category: Category) -> Result<(), (Category, Category)> {
        match self.labels.get(&address) {
            Some(&existing) if existing != category => Err((existing, category)),
            _ => {
                self.labels.insert(address, category);
                Ok(())
            }
        }
    }

    pub fn get(&self, address: &str) -> Option<Category> {
        self.labels.get(address).copied()
    }

    pub fn contains(&self, address: &str) -> bool {
        self.labels.contains_key(address)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Iterates in lexicographic address order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Category)> {
        self.labels.iter()
    }
}

/// Parses the `address,category` CSV. Duplicate rows with the same category
/// are tolerated; conflicting duplicates are a hard error.
pub fn parse_labels<R: BufRead>(reader: R) -> Result<LabelSet, IngestError> {
    let mut set = LabelSet::new();
    for (line_no, row) in csv_lines(reader, LABELS_HEADER)? {
        let (address, cat_s) = split2(line_no, &row)?;
        if address.is_empty() {
            return Err(IngestError::invalid(line_no, "empty address"));
        }
        let category: Category = cat_s
            .parse()
            .map_err(|e: ModelError| IngestError::invalid(line_no, e.to_string()))?;
        set.insert(address.to_string(), category)
            .map_err(|(existing, new)| IngestError::LabelConflict {
                line: line_no,
                address: address.to_string(),
                existing,
                new,
            })?;
    }
    Ok(set)
}
