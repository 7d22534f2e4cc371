//! Transaction roles and the 64-feature transaction history summary.
//!
//! The summarizer is a single-pass accumulator: per subject it keeps counts,
//! totals, magnitude-bin counters, running balance statistics and streaming
//! moment state, so memory stays proportional to the number of subjects
//! rather than the number of transactions. [`SummaryEngine`] runs many
//! subjects over one canonically ordered transaction stream; [`summarize`]
//! runs the same accumulator over a single materialized history.

use std::collections::{BTreeSet, HashMap};

use chrono::NaiveDate;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    Category, FeatureVector, Moments, NonFiniteFeature, RateTable, Transaction,
    TransactionHistory, TxKind, TxRole, FEATURE_COUNT, SAT_PER_BTC,
};

const SAT_PER_BTC_F: f64 = SAT_PER_BTC as f64;

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error("transaction {txid} does not mention the subject")]
    SubjectNotMentioned { txid: String },
    #[error("history is empty")]
    EmptyHistory,
    #[error("input stream not in canonical order at txid {txid}")]
    UnsortedStream { txid: String },
    #[error(transparent)]
    NonFinite(#[from] NonFiniteFeature),
}

/// Role kind from presence flags. Coinbase wins over everything; otherwise a
/// subject in the inputs spends; a subject only in the outputs receives.
/// Payback marks presence on both sides and cannot occur for `Received`.
fn role_from_presence(coinbase: bool, in_present: bool, out_present: bool) -> TxRole {
    let kind = if coinbase {
        TxKind::Coinbase
    } else if in_present {
        TxKind::Spent
    } else {
        TxKind::Received
    };
    TxRole {
        kind,
        payback: in_present && out_present,
    }
}

/// Assigns the transaction's role relative to a subject address set.
pub fn assign_role(
    tx: &Transaction,
    subject_addresses: &BTreeSet<String>,
) -> Result<TxRole, SummarizeError> {
    let in_present = tx
        .inputs
        .iter()
        .any(|i| !i.is_coinbase() && subject_addresses.contains(&i.address));
    let out_present = tx
        .outputs
        .iter()
        .any(|o| subject_addresses.contains(&o.address));
    if !in_present && !out_present {
        return Err(SummarizeError::SubjectNotMentioned {
            txid: tx.txid.clone(),
        });
    }
    Ok(role_from_presence(tx.is_coinbase(), in_present, out_present))
}

/// USD value of a satoshi amount at the given date under the rate-table
/// lookback policy; missing rates convert at zero.
pub fn usd_value(sat: u64, date: NaiveDate, rates: &RateTable) -> f64 {
    sat as f64 / SAT_PER_BTC_F * rates.rate_for(date).unwrap_or(0.0)
}

/// Order-of-magnitude bin of a positive USD amount: floor(log10) clamped to
/// [-3, 6] and offset to an index in 0..10. Non-positive amounts are not
/// binned.
pub fn magnitude_bin(usd: f64) -> Option<usize> {
    if !(usd > 0.0) || !usd.is_finite() {
        return None;
    }
    let mut exp = usd.log10().floor() as i32;
    // guard against log10 rounding at exact powers of ten
    while exp < 6 && 10f64.powi(exp + 1) <= usd {
        exp += 1;
    }
    while exp > -3 && 10f64.powi(exp) > usd {
        exp -= 1;
    }
    Some((exp.clamp(-3, 6) + 3) as usize)
}

/// Streaming accumulator for the first four moments plus the sample minimum.
/// Central sums are updated with the usual one-pass recurrences.
#[derive(Debug, Clone)]
pub struct MomentAcc {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    min: f64,
}

impl MomentAcc {
    pub fn new() -> MomentAcc {
        MomentAcc {
            n: 0,
            mean: 0.0,
            m2: 0.0,
            m3: 0.0,
            m4: 0.0,
            min: f64::INFINITY,
        }
    }

    pub fn push(&mut self, x: f64) {
        let n0 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n0;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
        self.mean += delta_n;
        if x < self.min {
            self.min = x;
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Final moments. With `min_shift` the first moment becomes
    /// mean - min(X); the central moments are unaffected by the shift.
    pub fn finalize(&self, min_shift: bool) -> Moments {
        if self.n == 0 {
            return Moments::zero();
        }
        let n = self.n as f64;
        let m1 = if min_shift {
            self.mean - self.min
        } else {
            self.mean
        };
        let variance = (self.m2 / n).max(0.0);
        if self.n == 1 || variance == 0.0 {
            return Moments {
                m1,
                m2: 0.0,
                m3: 0.0,
                m4: 0.0,
                sample_count: self.n as usize,
            };
        }
        let sigma = variance.sqrt();
        Moments {
            m1,
            m2: variance,
            m3: self.m3 / (n * sigma * variance),
            m4: self.m4 / (n * variance * variance),
            sample_count: self.n as usize,
        }
    }
}

impl Default for MomentAcc {
    fn default() -> Self {
        MomentAcc::new()
    }
}

/// First four moments of a sample: mean, population variance, standardized
/// skewness and kurtosis. Empty and degenerate samples yield zeros.
pub fn raw_moments(samples: &[f64]) -> Moments {
    let mut acc = MomentAcc::new();
    for &x in samples {
        acc.push(x);
    }
    acc.finalize(false)
}

/// Like [`raw_moments`] but with the first moment min-shifted:
/// m1' = mean - min(X).
pub fn min_shifted_moments(samples: &[f64]) -> Moments {
    let mut acc = MomentAcc::new();
    for &x in samples {
        acc.push(x);
    }
    acc.finalize(true)
}

/// Block-height differences between chronologically successive transactions.
/// Same-block pairs yield zero; histories with fewer than two transactions
/// yield an empty list.
pub fn interval_samples(history: &TransactionHistory) -> Vec<f64> {
    history
        .entries
        .windows(2)
        .map(|w| (w[1].tx.block_height - w[0].tx.block_height) as f64)
        .collect()
}

/// Running mean / population standard deviation accumulator.
#[derive(Debug, Clone, Default)]
struct WelfordAcc {
    n: u64,
    mean: f64,
    m2: f64,
}

impl WelfordAcc {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.mean
        }
    }

    fn pop_std(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

/// What one transaction contributes to one subject's summary.
struct TxObservation {
    height: u64,
    date: NaiveDate,
    rate: Option<f64>,
    role: TxRole,
    in_sat: u64,
    out_sat: u64,
    n_inputs: usize,
    n_outputs: usize,
}

/// Per-subject O(1) summary state.
#[derive(Debug, Clone)]
struct SubjectAcc {
    max_tx: Option<u64>,
    n_tx: u64,
    n_spent: u64,
    n_received: u64,
    n_coinbase: u64,
    n_payback: u64,
    sat_spent: u128,
    sat_received: u128,
    usd_spent: f64,
    usd_received: f64,
    spent_bins: [u64; 10],
    received_bins: [u64; 10],
    input_count_sum: u64,
    output_count_sum: u64,
    first_date: Option<NaiveDate>,
    last_date: Option<NaiveDate>,
    balance_sat: i128,
    balance_usd: f64,
    bal_btc: WelfordAcc,
    bal_usd: WelfordAcc,
    negative_balances: u64,
    heights_overall: MomentAcc,
    heights_spent: MomentAcc,
    heights_received: MomentAcc,
    heights_coinbase: MomentAcc,
    heights_payback: MomentAcc,
    intervals: MomentAcc,
    last_height: Option<u64>,
}

impl SubjectAcc {
    fn new(max_tx: Option<u64>) -> SubjectAcc {
        SubjectAcc {
            max_tx,
            n_tx: 0,
            n_spent: 0,
            n_received: 0,
            n_coinbase: 0,
            n_payback: 0,
            sat_spent: 0,
            sat_received: 0,
            usd_spent: 0.0,
            usd_received: 0.0,
            spent_bins: [0; 10],
            received_bins: [0; 10],
            input_count_sum: 0,
            output_count_sum: 0,
            first_date: None,
            last_date: None,
            balance_sat: 0,
            balance_usd: 0.0,
            bal_btc: WelfordAcc::default(),
            bal_usd: WelfordAcc::default(),
            negative_balances: 0,
            heights_overall: MomentAcc::new(),
            heights_spent: MomentAcc::new(),
            heights_received: MomentAcc::new(),
            heights_coinbase: MomentAcc::new(),
            heights_payback: MomentAcc::new(),
            intervals: MomentAcc::new(),
            last_height: None,
        }
    }

    fn observe(&mut self, obs: &TxObservation) {
        if let Some(cap) = self.max_tx {
            if self.n_tx >= cap {
                return;
            }
        }
        self.n_tx += 1;
        let h = obs.height as f64;
        self.heights_overall.push(h);
        match obs.role.kind {
            TxKind::Coinbase => {
                self.n_coinbase += 1;
                self.heights_coinbase.push(h);
            }
            TxKind::Spent => {
                self.n_spent += 1;
                self.heights_spent.push(h);
                self.input_count_sum += obs.n_inputs as u64;
                self.output_count_sum += obs.n_outputs as u64;
            }
            TxKind::Received => {
                self.n_received += 1;
                self.heights_received.push(h);
            }
        }
        if obs.role.payback {
            self.n_payback += 1;
            self.heights_payback.push(h);
        }
        if let Some(prev) = self.last_height {
            self.intervals.push((obs.height - prev) as f64);
        }
        self.last_height = Some(obs.height);
        if self.first_date.is_none() {
            self.first_date = Some(obs.date);
        }
        self.last_date = Some(obs.date);

        let rate = obs.rate.unwrap_or(0.0);
        let in_btc = obs.in_sat as f64 / SAT_PER_BTC_F;
        let out_btc = obs.out_sat as f64 / SAT_PER_BTC_F;
        let in_usd = in_btc * rate;
        let out_usd = out_btc * rate;
        self.sat_spent += obs.in_sat as u128;
        self.sat_received += obs.out_sat as u128;
        self.usd_spent += in_usd;
        self.usd_received += out_usd;
        if obs.role.kind == TxKind::Spent {
            if let Some(bin) = magnitude_bin(in_usd) {
                self.spent_bins[bin] += 1;
            }
        }
        if obs.role.kind == TxKind::Received {
            if let Some(bin) = magnitude_bin(out_usd) {
                self.received_bins[bin] += 1;
            }
        }
        self.balance_sat += obs.out_sat as i128 - obs.in_sat as i128;
        if self.balance_sat < 0 {
            self.negative_balances += 1;
        }
        self.balance_usd += (out_btc - in_btc) * rate;
        self.bal_btc.push(self.balance_sat as f64 / SAT_PER_BTC_F);
        self.bal_usd.push(self.balance_usd);
    }

    fn finalize(&self) -> Result<FeatureVector, SummarizeError> {
        if self.n_tx == 0 {
            return Err(SummarizeError::EmptyHistory);
        }
        let n_tx = self.n_tx as f64;
        let lifetime = (self.last_date.unwrap() - self.first_date.unwrap()).num_days() as f64;
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let mut v = [0f64; FEATURE_COUNT];
        // basic statistics
        v[0] = n_tx / lifetime.max(1.0);
        v[1] = self.n_received as f64 / n_tx;
        v[2] = self.n_coinbase as f64 / n_tx;
        for j in 0..10 {
            v[3 + j] = ratio(self.spent_bins[j], self.n_spent);
            v[13 + j] = ratio(self.received_bins[j], self.n_received);
        }
        v[23] = self.n_payback as f64 / n_tx;
        v[24] = ratio(self.input_count_sum, self.n_spent);
        v[25] = ratio(self.output_count_sum, self.n_spent);
        // extra statistics
        v[26] = lifetime;
        v[27] = self.sat_spent as f64 / SAT_PER_BTC_F;
        v[28] = self.sat_received as f64 / SAT_PER_BTC_F;
        v[29] = self.usd_spent;
        v[30] = self.usd_received;
        v[31] = n_tx;
        v[32] = self.n_spent as f64;
        v[33] = self.n_received as f64;
        v[34] = self.n_coinbase as f64;
        v[35] = self.n_payback as f64;
        v[36] = self.bal_btc.mean();
        v[37] = self.bal_btc.pop_std();
        v[38] = self.bal_usd.mean();
        v[39] = self.bal_usd.pop_std();
        // moments: five min-shifted height distributions, then raw intervals
        let blocks = [
            (&self.heights_overall, true),
            (&self.heights_spent, true),
            (&self.heights_received, true),
            (&self.heights_coinbase, true),
            (&self.heights_payback, true),
            (&self.intervals, false),
        ];
        for (i, (acc, shift)) in blocks.iter().enumerate() {
            let m = acc.finalize(*shift);
            let base = 40 + i * 4;
            v[base] = m.m1;
            v[base + 1] = m.m2;
            v[base + 2] = m.m3;
            v[base + 3] = m.m4;
        }
        Ok(FeatureVector::new(v)?)
    }
}

fn observe_history_entry(
    entry: &crate::model::HistoryEntry,
    addresses: &BTreeSet<String>,
    rates: &RateTable,
) -> TxObservation {
    let tx = &entry.tx;
    let in_sat: u64 = tx
        .inputs
        .iter()
        .filter(|i| !i.is_coinbase() && addresses.contains(&i.address))
        .map(|i| i.value_satoshi)
        .sum();
    let out_sat: u64 = tx
        .outputs
        .iter()
        .filter(|o| addresses.contains(&o.address))
        .map(|o| o.value_satoshi)
        .sum();
    let date = tx.date();
    TxObservation {
        height: tx.block_height,
        date,
        rate: rates.rate_for(date),
        role: entry.role,
        in_sat,
        out_sat,
        n_inputs: tx.inputs.len(),
        n_outputs: tx.outputs.len(),
    }
}

fn run_history(
    history: &TransactionHistory,
    rates: &RateTable,
    max_tx: Option<u64>,
) -> Result<SubjectAcc, SummarizeError> {
    if history.is_empty() {
        return Err(SummarizeError::EmptyHistory);
    }
    let mut acc = SubjectAcc::new(max_tx);
    for entry in &history.entries {
        acc.observe(&observe_history_entry(entry, &history.addresses, rates));
    }
    Ok(acc)
}

/// The full 64-feature summary of a non-empty history.
pub fn summarize(
    history: &TransactionHistory,
    rates: &RateTable,
) -> Result<FeatureVector, SummarizeError> {
    run_history(history, rates, None)?.finalize()
}

/// The 26 basic statistics (frequency, role ratios, magnitude bins, payback
/// ratio, mean input/output counts).
pub fn basic_stats(
    history: &TransactionHistory,
    rates: &RateTable,
) -> Result<[f64; 26], SummarizeError> {
    let fv = summarize(history, rates)?;
    let mut out = [0f64; 26];
    out.copy_from_slice(fv.basic());
    Ok(out)
}

/// The 14 extra statistics (lifetime, totals, counts, balance mean/std).
pub fn extra_stats(
    history: &TransactionHistory,
    rates: &RateTable,
) -> Result<[f64; 14], SummarizeError> {
    let fv = summarize(history, rates)?;
    let mut out = [0f64; 14];
    out.copy_from_slice(fv.extra());
    Ok(out)
}

/// Per-transaction running balances from the subject's viewpoint, in
/// satoshis, BTC and USD. USD deltas convert at each transaction's own date.
/// Balances may go negative on partial histories; the count is reported.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceTrace {
    pub balances_sat: Vec<i128>,
    pub balances_btc: Vec<f64>,
    pub balances_usd: Vec<f64>,
    pub negative_count: u64,
}

pub fn balance_trace(history: &TransactionHistory, rates: &RateTable) -> BalanceTrace {
    let mut balances_sat = Vec::with_capacity(history.len());
    let mut balances_btc = Vec::with_capacity(history.len());
    let mut balances_usd = Vec::with_capacity(history.len());
    let mut sat: i128 = 0;
    let mut usd: f64 = 0.0;
    let mut negative = 0u64;
    for entry in &history.entries {
        let obs = observe_history_entry(entry, &history.addresses, rates);
        let rate = obs.rate.unwrap_or(0.0);
        sat += obs.out_sat as i128 - obs.in_sat as i128;
        if sat < 0 {
            negative += 1;
        }
        usd += (obs.out_sat as f64 - obs.in_sat as f64) / SAT_PER_BTC_F * rate;
        balances_sat.push(sat);
        balances_btc.push(sat as f64 / SAT_PER_BTC_F);
        balances_usd.push(usd);
    }
    BalanceTrace {
        balances_sat,
        balances_btc,
        balances_usd,
        negative_count: negative,
    }
}

/// One subject to be summarized by the engine: a stable id, the owned
/// address set, and an optional label.
#[derive(Debug, Clone)]
pub struct SubjectSpec {
    pub id: String,
    pub addresses: Vec<String>,
    pub category: Option<Category>,
}

/// Summary row produced by the engine. `features` is `None` for subjects
/// with zero relevant transactions.
#[derive(Debug, Clone)]
pub struct SubjectSummary {
    pub id: String,
    pub category: Option<Category>,
    pub n_tx: u64,
    pub features: Option<FeatureVector>,
}

/// Counters reported alongside engine output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub transactions_seen: u64,
    pub rate_misses: u64,
    pub negative_balances: u64,
    pub empty_subjects: u64,
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    pub rows: Vec<SubjectSummary>,
    pub stats: EngineStats,
}

struct Touch {
    subject: u32,
    in_sat: u64,
    out_sat: u64,
    in_present: bool,
    out_present: bool,
}

struct SubjectSlot {
    id: String,
    category: Option<Category>,
    acc: SubjectAcc,
}

/// Multi-subject single-pass summarizer. Transactions must be pushed in
/// strictly increasing canonical order (block height, position, txid); the
/// engine verifies the order and rejects violations. State is O(1) per
/// subject plus the address-to-subject map.
pub struct SummaryEngine<'a> {
    rates: &'a RateTable,
    subjects: Vec<SubjectSlot>,
    address_to_subject: HashMap<String, u32>,
    last_key: Option<(u64, u64, String)>,
    scratch: Vec<Touch>,
    transactions_seen: u64,
    rate_misses: u64,
}

impl<'a> SummaryEngine<'a> {
    pub fn new(
        subjects: Vec<SubjectSpec>,
        rates: &'a RateTable,
        max_tx: Option<u64>,
    ) -> SummaryEngine<'a> {
        let mut slots = Vec::with_capacity(subjects.len());
        let mut address_to_subject = HashMap::new();
        for (i, spec) in subjects.into_iter().enumerate() {
            for addr in &spec.addresses {
                address_to_subject.insert(addr.clone(), i as u32);
            }
            slots.push(SubjectSlot {
                id: spec.id,
                category: spec.category,
                acc: SubjectAcc::new(max_tx),
            });
        }
        SummaryEngine {
            rates,
            subjects: slots,
            address_to_subject,
            last_key: None,
            scratch: Vec::new(),
            transactions_seen: 0,
            rate_misses: 0,
        }
    }

    fn touch(scratch: &mut Vec<Touch>, subject: u32) -> &mut Touch {
        if let Some(pos) = scratch.iter().position(|t| t.subject == subject) {
            return &mut scratch[pos];
        }
        scratch.push(Touch {
            subject,
            in_sat: 0,
            out_sat: 0,
            in_present: false,
            out_present: false,
        });
        scratch.last_mut().unwrap()
    }

    /// Feeds one transaction. Subjects it does not mention are untouched.
    pub fn push(&mut self, tx: &Transaction) -> Result<(), SummarizeError> {
        if let Some((h, p, id)) = &self.last_key {
            if (*h, *p, id.as_str()) >= (tx.block_height, tx.position_in_block, tx.txid.as_str()) {
                return Err(SummarizeError::UnsortedStream {
                    txid: tx.txid.clone(),
                });
            }
        }
        self.last_key = Some((tx.block_height, tx.position_in_block, tx.txid.clone()));
        self.transactions_seen += 1;

        self.scratch.clear();
        for input in &tx.inputs {
            if input.is_coinbase() {
                continue;
            }
            if let Some(&s) = self.address_to_subject.get(&input.address) {
                let t = Self::touch(&mut self.scratch, s);
                t.in_sat += input.value_satoshi;
                t.in_present = true;
            }
        }
        for output in &tx.outputs {
            if let Some(&s) = self.address_to_subject.get(&output.address) {
                let t = Self::touch(&mut self.scratch, s);
                t.out_sat += output.value_satoshi;
                t.out_present = true;
            }
        }
        if self.scratch.is_empty() {
            return Ok(());
        }

        let date = tx.date();
        let rate = self.rates.rate_for(date);
        if rate.is_none() {
            self.rate_misses += 1;
        }
        let coinbase = tx.is_coinbase();
        for t in &self.scratch {
            let obs = TxObservation {
                height: tx.block_height,
                date,
                rate,
                role: role_from_presence(coinbase, t.in_present, t.out_present),
                in_sat: t.in_sat,
                out_sat: t.out_sat,
                n_inputs: tx.inputs.len(),
                n_outputs: tx.outputs.len(),
            };
            self.subjects[t.subject as usize].acc.observe(&obs);
        }
        Ok(())
    }

    /// Finalizes every subject in construction order. Feature computation is
    /// distributed over the current rayon pool; the output order does not
    /// depend on worker scheduling.
    pub fn finish(self) -> Result<EngineOutput, SummarizeError> {
        let transactions_seen = self.transactions_seen;
        let rate_misses = self.rate_misses;
        let finalized: Vec<Result<(SubjectSummary, u64), SummarizeError>> = self
            .subjects
            .into_par_iter()
            .map(|slot| {
                let features = match slot.acc.finalize() {
                    Ok(fv) => Some(fv),
                    Err(SummarizeError::EmptyHistory) => None,
                    Err(e) => return Err(e),
                };
                let negative = slot.acc.negative_balances;
                Ok((
                    SubjectSummary {
                        id: slot.id,
                        category: slot.category,
                        n_tx: slot.acc.n_tx,
                        features,
                    },
                    negative,
                ))
            })
            .collect();
        let mut rows = Vec::with_capacity(finalized.len());
        let mut stats = EngineStats {
            transactions_seen,
            rate_misses,
            negative_balances: 0,
            empty_subjects: 0,
        };
        for item in finalized {
            let (row, negative) = item?;
            if row.features.is_none() {
                stats.empty_subjects += 1;
            }
            stats.negative_balances += negative;
            rows.push(row);
        }
        Ok(EngineOutput { rows, stats })
    }
}
