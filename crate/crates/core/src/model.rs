//! Domain types shared by every other module. No I/O, no learning.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, NaiveDate};
use thiserror::Error;

/// Sentinel address carried by the special input of a block-reward transaction.
pub const COINBASE_SENTINEL: &str = "COINBASE";

/// Satoshis per bitcoin.
pub const SAT_PER_BTC: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("txid must be 64 hex characters, got {0:?}")]
    BadTxid(String),
    #[error("coinbase input must be the only input (got {0} inputs)")]
    CoinbaseNotAlone(usize),
    #[error("transaction has no outputs")]
    NoOutputs,
    #[error("non-coinbase transaction has no inputs")]
    NoInputs,
    #[error("the COINBASE sentinel is reserved for the coinbase input")]
    ReservedAddress,
    #[error("timestamp {0} is out of range")]
    BadTimestamp(i64),
    #[error("history entries are not strictly sorted at index {0}")]
    UnsortedHistory(usize),
    #[error("duplicate txid {0} in history")]
    DuplicateTxid(String),
    #[error("unknown category {got:?}; valid categories are {valid}")]
    UnknownCategory { got: String, valid: String },
}

/// One transaction input: the spending address (or the coinbase sentinel)
/// and the value it contributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxInput {
    pub address: String,
    pub value_satoshi: u64,
}

impl TxInput {
    pub fn is_coinbase(&self) -> bool {
        self.address == COINBASE_SENTINEL
    }
}

/// One transaction output: receiving address and value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOutput {
    pub address: String,
    pub value_satoshi: u64,
}

/// One ledger record. Block height is the time proxy used by all moment
/// features; the wall-clock timestamp only feeds daily USD conversion and
/// lifetime counting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub txid: String,
    pub block_height: u64,
    pub timestamp: i64,
    pub position_in_block: u64,
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
}

impl Transaction {
    pub fn is_coinbase(&self) -> bool {
        self.inputs.iter().any(TxInput::is_coinbase)
    }

    /// UTC calendar date of the transaction.
    pub fn date(&self) -> NaiveDate {
        // Validated at construction, so this cannot fail for well-formed data.
        DateTime::from_timestamp(self.timestamp, 0)
            .expect("timestamp validated at construction")
            .date_naive()
    }

    /// Canonical ordering key. Ties within a block are broken by position,
    /// then txid, so any two distinct transactions compare strictly.
    pub fn sort_key(&self) -> (u64, u64, &str) {
        (self.block_height, self.position_in_block, &self.txid)
    }

    /// Checks the structural invariants; used by the ingest layer after
    /// decoding a record.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.txid.len() != 64 || !self.txid.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ModelError::BadTxid(self.txid.clone()));
        }
        if self.outputs.is_empty() {
            return Err(ModelError::NoOutputs);
        }
        let coinbase_inputs = self.inputs.iter().filter(|i| i.is_coinbase()).count();
        if coinbase_inputs > 0 && self.inputs.len() != 1 {
            return Err(ModelError::CoinbaseNotAlone(self.inputs.len()));
        }
        if coinbase_inputs == 0 && self.inputs.is_empty() {
            return Err(ModelError::NoInputs);
        }
        if self.outputs.iter().any(|o| o.address == COINBASE_SENTINEL) {
            return Err(ModelError::ReservedAddress);
        }
        if DateTime::from_timestamp(self.timestamp, 0).is_none() || self.timestamp < 0 {
            return Err(ModelError::BadTimestamp(self.timestamp));
        }
        Ok(())
    }
}

/// Role of a transaction relative to a subject. The three kinds are mutually
/// exclusive; the payback flag marks subjects appearing on both sides and
/// never co-occurs with `Received`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxKind {
    Coinbase,
    Spent,
    Received,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxRole {
    pub kind: TxKind,
    pub payback: bool,
}

/// The seven service categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Category {
    Exchange,
    Faucet,
    Gambling,
    Hyip,
    Market,
    Mixer,
    Pool,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Exchange,
        Category::Faucet,
        Category::Gambling,
        Category::Hyip,
        Category::Market,
        Category::Mixer,
        Category::Pool,
    ];

    pub const COUNT: usize = 7;

    pub fn name(&self) -> &'static str {
        match self {
            Category::Exchange => "Exchange",
            Category::Faucet => "Faucet",
            Category::Gambling => "Gambling",
            Category::Hyip => "HYIP",
            Category::Market => "Market",
            Category::Mixer => "Mixer",
            Category::Pool => "Pool",
        }
    }

    /// Stable index used for confusion matrices and argmax tie-breaking.
    pub fn ordinal(&self) -> usize {
        *self as usize
    }

    pub fn from_ordinal(i: usize) -> Option<Category> {
        Category::ALL.get(i).copied()
    }

    fn valid_names() -> String {
        Category::ALL
            .iter()
            .map(|c| c.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = ModelError;

    /// Category names match case-insensitively; addresses never do.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        for c in Category::ALL {
            if s.eq_ignore_ascii_case(c.name()) {
                return Ok(c);
            }
        }
        Err(ModelError::UnknownCategory {
            got: s.to_string(),
            valid: Category::valid_names(),
        })
    }
}

/// First four moments of an empirical distribution: mean, population
/// variance, and the standardized third and fourth central moments.
/// Degenerate inputs (fewer than two samples, or zero variance) pin
/// m2 = m3 = m4 = 0 so downstream features stay finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
    pub sample_count: usize,
}

impl Moments {
    pub fn zero() -> Moments {
        Moments {
            m1: 0.0,
            m2: 0.0,
            m3: 0.0,
            m4: 0.0,
            sample_count: 0,
        }
    }
}

/// One entry of a transaction history: a shared transaction plus the role it
/// plays for the history's subject.
#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub tx: Arc<Transaction>,
    pub role: TxRole,
}

/// Ordered relevant transactions of one address or entity. `addresses` is the
/// subject's owned address set; every stored transaction mentions at least
/// one of them.
#[derive(Debug, Clone)]
pub struct TransactionHistory {
    pub subject: String,
    pub addresses: BTreeSet<String>,
    pub entries: Vec<HistoryEntry>,
    pub category: Option<Category>,
}

impl TransactionHistory {
    /// Wraps pre-sorted entries, verifying the strict canonical order
    /// (block height, position in block, txid) and txid uniqueness.
    pub fn new(
        subject: String,
        addresses: BTreeSet<String>,
        entries: Vec<HistoryEntry>,
        category: Option<Category>,
    ) -> Result<TransactionHistory, ModelError> {
        for i in 1..entries.len() {
            let prev = entries[i - 1].tx.sort_key();
            let cur = entries[i].tx.sort_key();
            if prev >= cur {
                if prev == cur || entries[i - 1].tx.txid == entries[i].tx.txid {
                    return Err(ModelError::DuplicateTxid(entries[i].tx.txid.clone()));
                }
                return Err(ModelError::UnsortedHistory(i));
            }
        }
        Ok(TransactionHistory {
            subject,
            addresses,
            entries,
            category,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Number of features in the transaction history summary.
pub const FEATURE_COUNT: usize = 64;

/// Canonical feature order: 26 basic statistics, 14 extra statistics, then
/// four moments for each of the six distributions.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    // basic statistics
    "f_tx",
    "r_received",
    "r_coinbase",
    "f_spent_1e-3",
    "f_spent_1e-2",
    "f_spent_1e-1",
    "f_spent_1e0",
    "f_spent_1e1",
    "f_spent_1e2",
    "f_spent_1e3",
    "f_spent_1e4",
    "f_spent_1e5",
    "f_spent_1e6",
    "f_received_1e-3",
    "f_received_1e-2",
    "f_received_1e-1",
    "f_received_1e0",
    "f_received_1e1",
    "f_received_1e2",
    "f_received_1e3",
    "f_received_1e4",
    "f_received_1e5",
    "f_received_1e6",
    "r_payback",
    "n_inputs_mean",
    "n_outputs_mean",
    // extra statistics
    "lifetime",
    "btc_spent",
    "btc_received",
    "usd_spent",
    "usd_received",
    "n_tx",
    "n_spent",
    "n_received",
    "n_coinbase",
    "n_payback",
    "mu_balance_btc",
    "sigma_balance_btc",
    "mu_balance_usd",
    "sigma_balance_usd",
    // moments
    "m1_overall",
    "m2_overall",
    "m3_overall",
    "m4_overall",
    "m1_spent",
    "m2_spent",
    "m3_spent",
    "m4_spent",
    "m1_received",
    "m2_received",
    "m3_received",
    "m4_received",
    "m1_coinbase",
    "m2_coinbase",
    "m3_coinbase",
    "m4_coinbase",
    "m1_payback",
    "m2_payback",
    "m3_payback",
    "m4_payback",
    "m1_interval",
    "m2_interval",
    "m3_interval",
    "m4_interval",
];

/// Index ranges of the three feature blocks within the canonical order.
pub const BASIC_RANGE: std::ops::Range<usize> = 0..26;
pub const EXTRA_RANGE: std::ops::Range<usize> = 26..40;
pub const MOMENT_RANGE: std::ops::Range<usize> = 40..64;

/// The 64-dimensional transaction history summary in canonical order.
/// Construction rejects non-finite components; negative zeros are normalized
/// so serialized output is stable.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: [f64; FEATURE_COUNT],
}

#[derive(Debug, Error)]
#[error("feature {name} (index {index}) is not finite: {value}")]
pub struct NonFiniteFeature {
    pub index: usize,
    pub name: &'static str,
    pub value: f64,
}

impl FeatureVector {
    pub fn new(mut values: [f64; FEATURE_COUNT]) -> Result<FeatureVector, NonFiniteFeature> {
        for (i, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(NonFiniteFeature {
                    index: i,
                    name: FEATURE_NAMES[i],
                    value: *v,
                });
            }
            // collapse -0.0 to 0.0
            *v += 0.0;
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub fn basic(&self) -> &[f64] {
        &self.values[BASIC_RANGE]
    }

    pub fn extra(&self) -> &[f64] {
        &self.values[EXTRA_RANGE]
    }

    pub fn moments(&self) -> &[f64] {
        &self.values[MOMENT_RANGE]
    }
}

/// Daily BTC/USD conversion rates. Lookups for a date absent from the table
/// fall back to the nearest earlier date within seven days; beyond that the
/// rate is treated as unknown and the caller substitutes zero.
#[derive(Debug, Clone, Default)]
pub struct RateTable {
    rates: BTreeMap<NaiveDate, f64>,
}

#[derive(Debug, Error)]
pub enum RateError {
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("rate for {0} must be positive, got {1}")]
    NonPositiveRate(NaiveDate, f64),
}

/// Maximum staleness tolerated when a date is missing from the rate table.
pub const RATE_LOOKBACK_DAYS: i64 = 7;

impl RateTable {
    pub fn new() -> RateTable {
        RateTable::default()
    }

    pub fn insert(&mut self, date: NaiveDate, usd_per_btc: f64) -> Result<(), RateError> {
        if !(usd_per_btc > 0.0) || !usd_per_btc.is_finite() {
            return Err(RateError::NonPositiveRate(date, usd_per_btc));
        }
        if self.rates.contains_key(&date) {
            return Err(RateError::DuplicateDate(date));
        }
        self.rates.insert(date, usd_per_btc);
        Ok(())
    }

    /// Rate for `date` under the lookback policy; `None` means no usable rate.
    pub fn rate_for(&self, date: NaiveDate) -> Option<f64> {
        let (found, rate) = self.rates.range(..=date).next_back()?;
        if (date - *found).num_days() <= RATE_LOOKBACK_DAYS {
            Some(*rate)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NaiveDate, &f64)> {
        self.rates.iter()
    }
}
