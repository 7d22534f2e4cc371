//! Deterministic synthetic fixtures: seven-category transaction sets with
//! category-distinct behavior, plus a uniform high-volume stream for
//! throughput tests and benchmarks.

use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::LabelSet;
use crate::model::{
    Category, RateTable, Transaction, TxInput, TxOutput, COINBASE_SENTINEL, SAT_PER_BTC,
};

/// 2009-01-03, the first block's timestamp.
const GENESIS_TIME: i64 = 1_231_006_505;
const BLOCK_SECONDS: i64 = 600;
const BLOCKS_PER_DAY: u64 = 144;

fn timestamp_of(height: u64) -> i64 {
    GENESIS_TIME + height as i64 * BLOCK_SECONDS
}

fn txid(counter: u64) -> String {
    format!("{counter:064x}")
}

fn btc(x: f64) -> u64 {
    (x * SAT_PER_BTC as f64).round().max(1.0) as u64
}

/// One generated dataset: canonically ordered transactions, a rate table
/// covering every transaction date, and one label per subject address.
pub struct Fixture {
    pub transactions: Vec<Transaction>,
    pub rates: RateTable,
    pub labels: LabelSet,
}

impl Fixture {
    pub fn transactions_jsonl(&self) -> String {
        let mut out = String::new();
        for tx in &self.transactions {
            out.push_str(&crate::ingest::write_transaction(tx));
            out.push('\n');
        }
        out
    }

    pub fn rates_csv(&self) -> String {
        let mut out = String::from("date,usd_per_btc\n");
        for (date, rate) in self.rates.iter() {
            out.push_str(&format!("{date},{rate}\n"));
        }
        out
    }

    pub fn labels_csv(&self) -> String {
        let mut out = String::from("address,category\n");
        for (addr, cat) in self.labels.iter() {
            out.push_str(&format!("{addr},{cat}\n"));
        }
        out
    }
}

struct SubjectGen<'a> {
    rng: ChaCha8Rng,
    txs: &'a mut Vec<Transaction>,
    txid_counter: &'a mut u64,
    ext_counter: &'a mut u64,
    height: u64,
}

impl<'a> SubjectGen<'a> {
    fn amount(&mut self, lo: f64, hi: f64) -> u64 {
        btc(self.rng.gen_range(lo..hi))
    }

    fn blocks(&mut self, lo: u64, hi: u64) -> u64 {
        self.rng.gen_range(lo..=hi)
    }

    fn count(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.gen_range(lo..=hi)
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn ext(&mut self) -> String {
        *self.ext_counter += 1;
        format!("ext{:08}", self.ext_counter)
    }

    fn next_txid(&mut self) -> String {
        *self.txid_counter += 1;
        txid(*self.txid_counter)
    }

    fn advance(&mut self, blocks: u64) {
        self.height += blocks;
    }

    fn push(&mut self, inputs: Vec<TxInput>, outputs: Vec<TxOutput>) {
        let tx = Transaction {
            txid: self.next_txid(),
            block_height: self.height,
            timestamp: timestamp_of(self.height),
            position_in_block: 0,
            inputs,
            outputs,
        };
        debug_assert!(tx.validate().is_ok());
        self.txs.push(tx);
    }

    fn receive(&mut self, addr: &str, sat: u64) {
        let ext = self.ext();
        self.push(
            vec![TxInput {
                address: ext,
                value_satoshi: sat,
            }],
            vec![TxOutput {
                address: addr.to_string(),
                value_satoshi: sat,
            }],
        );
    }

    fn coinbase(&mut self, addr: &str, sat: u64) {
        self.push(
            vec![TxInput {
                address: COINBASE_SENTINEL.to_string(),
                value_satoshi: sat,
            }],
            vec![TxOutput {
                address: addr.to_string(),
                value_satoshi: sat,
            }],
        );
    }

    /// Spend `sat` from the subject over `n_inputs` pieces into `n_outputs`
    /// external outputs, optionally with change back to the subject.
    fn spend(&mut self, addr: &str, sat: u64, n_inputs: usize, n_outputs: usize, change: bool) {
        let n_inputs = n_inputs.max(1) as u64;
        let n_outputs = n_outputs.max(1) as u64;
        let mut inputs = Vec::with_capacity(n_inputs as usize);
        let per_in = (sat / n_inputs).max(1);
        let mut remaining = sat;
        for i in 0..n_inputs {
            let v = if i == n_inputs - 1 { remaining } else { per_in };
            remaining = remaining.saturating_sub(v);
            inputs.push(TxInput {
                address: addr.to_string(),
                value_satoshi: v,
            });
        }
        let change_sat = if change { sat / 10 + 1 } else { 0 };
        let paid = sat - change_sat.min(sat / 2);
        let per_out = (paid / n_outputs).max(1);
        let mut outputs = Vec::with_capacity(n_outputs as usize + 1);
        let mut left = paid;
        for i in 0..n_outputs {
            let v = if i == n_outputs - 1 { left.max(1) } else { per_out };
            left = left.saturating_sub(v);
            let ext = self.ext();
            outputs.push(TxOutput {
                address: ext,
                value_satoshi: v,
            });
        }
        if change {
            outputs.push(TxOutput {
                address: addr.to_string(),
                value_satoshi: change_sat.max(1),
            });
        }
        self.push(inputs, outputs);
    }
}

fn gen_subject(cat: Category, addr: &str, g: &mut SubjectGen<'_>) {
    match cat {
        Category::Exchange => {
            // busy, long-lived, mixed directions, frequent change outputs
            let n = g.count(40, 70);
            for _ in 0..n {
                let gap = g.blocks(20, 500);
                g.advance(gap);
                let amount = g.amount(0.5, 30.0);
                if g.chance(0.5) {
                    g.receive(addr, amount);
                } else {
                    let ins = g.count(2, 4);
                    let outs = g.count(2, 4);
                    let change = g.chance(0.7);
                    g.spend(addr, amount, ins, outs, change);
                }
            }
        }
        Category::Faucet => {
            // dripping tiny payouts at a steady cadence
            let n = g.count(40, 60);
            for i in 0..n {
                let gap = g.blocks(10, 50);
                g.advance(gap);
                if i % 10 == 0 {
                    let refill = g.amount(1.0, 5.0);
                    g.receive(addr, refill);
                } else {
                    let outs = g.count(8, 20);
                    let amount = g.amount(0.001, 0.01);
                    g.spend(addr, amount, 1, outs, false);
                }
            }
        }
        Category::Gambling => {
            // bursts of quick bets separated by long idle gaps
            let bursts = g.count(8, 14);
            for _ in 0..bursts {
                let idle = g.blocks(500, 2500);
                g.advance(idle);
                let burst_len = g.count(3, 8);
                for _ in 0..burst_len {
                    let gap = g.blocks(1, 3);
                    g.advance(gap);
                    let amount = g.amount(0.05, 2.0);
                    if g.chance(0.5) {
                        g.receive(addr, amount);
                    } else {
                        let change = g.chance(0.5);
                        g.spend(addr, amount, 1, 2, change);
                    }
                }
            }
        }
        Category::Hyip => {
            // metronome-like daily activity
            let n = g.count(25, 45);
            for i in 0..n {
                let wobble = g.blocks(0, 8);
                g.advance(BLOCKS_PER_DAY - 4 + wobble);
                let amount = g.amount(0.5, 5.0);
                if i % 3 == 0 {
                    let outs = g.count(3, 6);
                    g.spend(addr, amount, 1, outs, false);
                } else {
                    g.receive(addr, amount);
                }
            }
        }
        Category::Market => {
            // sparse, irregular, mostly inbound payments
            let n = g.count(20, 40);
            for _ in 0..n {
                let gap = g.blocks(200, 3000);
                g.advance(gap);
                let amount = g.amount(0.02, 1.0);
                if g.chance(0.8) {
                    g.receive(addr, amount);
                } else {
                    g.spend(addr, amount, 1, 2, false);
                }
            }
        }
        Category::Mixer => {
            // short-lived relay: large sums in, immediately forwarded
            let hops = g.count(3, 6);
            for _ in 0..hops {
                let gap = g.blocks(1, 5);
                g.advance(gap);
                let amount = g.amount(20.0, 150.0);
                g.receive(addr, amount);
                let fwd = g.blocks(1, 4);
                g.advance(fwd);
                let outs = g.count(1, 2);
                g.spend(addr, amount, 1, outs, false);
            }
        }
        Category::Pool => {
            // coinbase-heavy with broad payout batches
            let n = g.count(40, 60);
            for i in 0..n {
                let gap = g.blocks(80, 200);
                g.advance(gap);
                if i % 3 != 2 {
                    let reward = g.amount(25.0, 50.0);
                    g.coinbase(addr, reward);
                } else {
                    let outs = g.count(20, 40);
                    let payout = g.amount(40.0, 90.0);
                    g.spend(addr, payout, 1, outs, false);
                }
            }
        }
    }
}

/// Builds a rate table covering `[first, last]` with a positive, slowly
/// varying daily rate.
fn rates_covering(first: NaiveDate, last: NaiveDate) -> RateTable {
    let mut rates = RateTable::new();
    let mut day = first;
    let mut i = 0f64;
    while day <= last {
        let rate = 100.0 + 80.0 * (i / 30.0).sin();
        rates.insert(day, rate).unwrap();
        day += Duration::days(1);
        i += 1.0;
    }
    rates
}

/// Seven-category fixture with `per_category` labeled single-address
/// subjects per category. Deterministic per seed.
pub fn category_fixture(per_category: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut txs: Vec<Transaction> = Vec::new();
    let mut labels = LabelSet::new();
    let mut txid_counter = 0u64;
    let mut ext_counter = 0u64;
    for cat in Category::ALL {
        for s in 0..per_category {
            let addr = format!("{}{s:04}", cat.name().to_ascii_lowercase());
            labels
                .insert(addr.clone(), cat)
                .expect("generated addresses are unique");
            let start = rng.gen_range(120_000..280_000);
            let subject_seed: u64 = rng.gen();
            let mut g = SubjectGen {
                rng: ChaCha8Rng::seed_from_u64(subject_seed),
                txs: &mut txs,
                txid_counter: &mut txid_counter,
                ext_counter: &mut ext_counter,
                height: start,
            };
            gen_subject(cat, &addr, &mut g);
        }
    }
    txs.sort_unstable_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let first = txs.first().expect("fixture is non-empty").date();
    let last = txs.last().unwrap().date();
    Fixture {
        rates: rates_covering(first, last),
        labels,
        transactions: txs,
    }
}

/// Uniform stream of `n_tx` transactions spread over `n_addr` addresses in
/// canonical order, yielded lazily so callers can summarize without
/// materializing the transaction list.
pub fn large_stream(n_tx: u64, n_addr: u32) -> impl Iterator<Item = Transaction> {
    (0..n_tx).map(move |i| {
        let height = i / 4;
        let pos = i % 4;
        let addr = format!("addr{:06}", splitmix(i) % n_addr as u64);
        let sat = 1_000_000 + (splitmix(i.wrapping_add(7)) % 100_000_000);
        let (inputs, outputs) = if i % 2 == 0 {
            (
                vec![TxInput {
                    address: format!("src{:06}", i % 977),
                    value_satoshi: sat,
                }],
                vec![TxOutput {
                    address: addr,
                    value_satoshi: sat,
                }],
            )
        } else {
            (
                vec![TxInput {
                    address: addr,
                    value_satoshi: sat,
                }],
                vec![TxOutput {
                    address: format!("snk{:06}", i % 983),
                    value_satoshi: sat,
                }],
            )
        };
        Transaction {
            txid: txid(i),
            block_height: height,
            timestamp: timestamp_of(height),
            position_in_block: pos,
            inputs,
            outputs,
        }
    })
}

/// Addresses used by [`large_stream`].
pub fn large_stream_addresses(n_addr: u32) -> Vec<String> {
    (0..n_addr).map(|i| format!("addr{i:06}")).collect()
}

/// Rate table covering the whole span of a [`large_stream`] call.
pub fn large_stream_rates(n_tx: u64) -> RateTable {
    let first = chrono::DateTime::from_timestamp(timestamp_of(0), 0)
        .unwrap()
        .date_naive();
    let last = chrono::DateTime::from_timestamp(timestamp_of(n_tx / 4 + 1), 0)
        .unwrap()
        .date_naive();
    rates_covering(first, last)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
