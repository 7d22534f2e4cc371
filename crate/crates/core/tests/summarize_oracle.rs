//! The single-pass summarizer against an independently coded brute-force
//! summarizer that materializes every intermediate list.

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{DateTime, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use txhist_core::cluster::{address_history, TxIndex};
use txhist_core::model::{
    RateTable, Transaction, TransactionHistory, TxInput, TxKind, TxOutput, COINBASE_SENTINEL,
    FEATURE_COUNT, SAT_PER_BTC,
};
use txhist_core::summarize::{summarize, SubjectSpec, SummaryEngine};

const T0: i64 = 1_231_006_505;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn date_of(tx: &Transaction) -> NaiveDate {
    DateTime::from_timestamp(tx.timestamp, 0).unwrap().date_naive()
}

fn brute_moments(samples: &[f64], min_shift: bool) -> [f64; 4] {
    let n = samples.len();
    if n == 0 {
        return [0.0; 4];
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let m1 = if min_shift {
        mean - samples.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        mean
    };
    let var = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if n == 1 || var <= 0.0 {
        return [m1, 0.0, 0.0, 0.0];
    }
    let sd = var.sqrt();
    let m3 = samples.iter().map(|&x| ((x - mean) / sd).powi(3)).sum::<f64>() / n as f64;
    let m4 = samples.iter().map(|&x| ((x - mean) / sd).powi(4)).sum::<f64>() / n as f64;
    [m1, var, m3, m4]
}

fn brute_bin(usd: f64) -> Option<usize> {
    if usd <= 0.0 {
        return None;
    }
    // scan the ten decades explicitly
    for (idx, exp) in (-3i32..=6).enumerate() {
        let lo = 10f64.powi(exp);
        let hi = 10f64.powi(exp + 1);
        if idx == 0 && usd < hi {
            return Some(0);
        }
        if usd >= lo && usd < hi {
            return Some(idx);
        }
    }
    Some(9)
}

/// Materialize-everything summary straight from the feature definitions.
fn brute_summary(history: &TransactionHistory, rates: &RateTable) -> Vec<f64> {
    let subject = &history.addresses;
    let n_tx = history.len() as f64;

    let mut heights_all = Vec::new();
    let mut heights_by_kind: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut heights_payback = Vec::new();
    let mut n_kind = [0u64; 3];
    let mut n_payback = 0u64;
    let mut in_sats = Vec::new();
    let mut out_sats = Vec::new();
    let mut usd_in = Vec::new();
    let mut usd_out = Vec::new();
    let mut input_counts = Vec::new();
    let mut output_counts = Vec::new();
    let mut dates = Vec::new();

    for entry in &history.entries {
        let tx = &entry.tx;
        let in_sat: u64 = tx
            .inputs
            .iter()
            .filter(|i| !i.is_coinbase() && subject.contains(&i.address))
            .map(|i| i.value_satoshi)
            .sum();
        let out_sat: u64 = tx
            .outputs
            .iter()
            .filter(|o| subject.contains(&o.address))
            .map(|o| o.value_satoshi)
            .sum();
        let rate = rates.rate_for(date_of(tx)).unwrap_or(0.0);
        let kind_idx = match entry.role.kind {
            TxKind::Coinbase => 0,
            TxKind::Spent => 1,
            TxKind::Received => 2,
        };
        n_kind[kind_idx] += 1;
        heights_by_kind[kind_idx].push(tx.block_height as f64);
        heights_all.push(tx.block_height as f64);
        if entry.role.payback {
            n_payback += 1;
            heights_payback.push(tx.block_height as f64);
        }
        in_sats.push(in_sat);
        out_sats.push(out_sat);
        usd_in.push(in_sat as f64 / SAT_PER_BTC as f64 * rate);
        usd_out.push(out_sat as f64 / SAT_PER_BTC as f64 * rate);
        input_counts.push(tx.inputs.len() as f64);
        output_counts.push(tx.outputs.len() as f64);
        dates.push(date_of(tx));
    }
    let (n_coinbase, n_spent, n_received) = (n_kind[0] as f64, n_kind[1] as f64, n_kind[2] as f64);

    let lifetime = (*dates.last().unwrap() - dates[0]).num_days() as f64;

    let mut spent_bins = [0f64; 10];
    let mut received_bins = [0f64; 10];
    let mut sum_inputs = 0.0;
    let mut sum_outputs = 0.0;
    for (k, entry) in history.entries.iter().enumerate() {
        match entry.role.kind {
            TxKind::Spent => {
                if let Some(b) = brute_bin(usd_in[k]) {
                    spent_bins[b] += 1.0;
                }
                sum_inputs += input_counts[k];
                sum_outputs += output_counts[k];
            }
            TxKind::Received => {
                if let Some(b) = brute_bin(usd_out[k]) {
                    received_bins[b] += 1.0;
                }
            }
            TxKind::Coinbase => {}
        }
    }

    // balance trace
    let mut balances_btc = Vec::new();
    let mut balances_usd = Vec::new();
    let mut sat: i128 = 0;
    let mut usd = 0.0;
    for k in 0..history.len() {
        sat += out_sats[k] as i128 - in_sats[k] as i128;
        usd += usd_out[k] - usd_in[k];
        balances_btc.push(sat as f64 / SAT_PER_BTC as f64);
        balances_usd.push(usd);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let pop_std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };

    let intervals: Vec<f64> = heights_all.windows(2).map(|w| w[1] - w[0]).collect();

    let mut v = Vec::with_capacity(FEATURE_COUNT);
    v.push(n_tx / lifetime.max(1.0));
    v.push(n_received / n_tx);
    v.push(n_coinbase / n_tx);
    for b in spent_bins {
        v.push(if n_spent > 0.0 { b / n_spent } else { 0.0 });
    }
    for b in received_bins {
        v.push(if n_received > 0.0 { b / n_received } else { 0.0 });
    }
    v.push(n_payback as f64 / n_tx);
    v.push(if n_spent > 0.0 { sum_inputs / n_spent } else { 0.0 });
    v.push(if n_spent > 0.0 { sum_outputs / n_spent } else { 0.0 });

    v.push(lifetime);
    v.push(in_sats.iter().map(|&s| s as u128).sum::<u128>() as f64 / SAT_PER_BTC as f64);
    v.push(out_sats.iter().map(|&s| s as u128).sum::<u128>() as f64 / SAT_PER_BTC as f64);
    v.push(usd_in.iter().sum());
    v.push(usd_out.iter().sum());
    v.push(n_tx);
    v.push(n_spent);
    v.push(n_received);
    v.push(n_coinbase);
    v.push(n_payback as f64);
    v.push(mean(&balances_btc));
    v.push(pop_std(&balances_btc));
    v.push(mean(&balances_usd));
    v.push(pop_std(&balances_usd));

    for block in [
        brute_moments(&heights_all, true),
        brute_moments(&heights_by_kind[1], true),
        brute_moments(&heights_by_kind[2], true),
        brute_moments(&heights_by_kind[0], true),
        brute_moments(&heights_payback, true),
        brute_moments(&intervals, false),
    ] {
        v.extend_from_slice(&block);
    }
    v
}

struct HistoryGen {
    rng: ChaCha8Rng,
    txid_counter: u64,
}

impl HistoryGen {
    /// Random history for subject "s": mixed roles, co-inputs from other
    /// addresses, occasional change, same-block pairs, values spanning the
    /// full magnitude range.
    fn generate(&mut self, n_tx: usize) -> (Vec<Arc<Transaction>>, RateTable) {
        let mut height = self.rng.gen_range(1_000..200_000u64);
        let mut pos = 0u64;
        let mut txs: Vec<Arc<Transaction>> = Vec::new();
        for _ in 0..n_tx {
            if self.rng.gen_bool(0.8) {
                height += self.rng.gen_range(1..3000);
                pos = 0;
            } else {
                pos += 1; // same block as the previous transaction
            }
            self.txid_counter += 1;
            let txid = format!("{:064x}", self.txid_counter);
            let timestamp = T0 + height as i64 * 600;
            let v1 = 10u64.pow(self.rng.gen_range(0..10));
            let roll = self.rng.gen_range(0..100);
            let (inputs, outputs) = if roll < 15 {
                // coinbase paying the subject (and sometimes others)
                let mut outs = vec![TxOutput {
                    address: "s".into(),
                    value_satoshi: self.rng.gen_range(1..50 * SAT_PER_BTC),
                }];
                if self.rng.gen_bool(0.3) {
                    outs.push(TxOutput {
                        address: "other".into(),
                        value_satoshi: v1,
                    });
                }
                (
                    vec![TxInput {
                        address: COINBASE_SENTINEL.into(),
                        value_satoshi: 50 * SAT_PER_BTC,
                    }],
                    outs,
                )
            } else if roll < 55 {
                // spend, sometimes with external co-inputs and change
                let mut ins = vec![TxInput {
                    address: "s".into(),
                    value_satoshi: self.rng.gen_range(1..100 * SAT_PER_BTC),
                }];
                if self.rng.gen_bool(0.4) {
                    ins.push(TxInput {
                        address: "s".into(),
                        value_satoshi: self.rng.gen_range(1..SAT_PER_BTC),
                    });
                }
                if self.rng.gen_bool(0.3) {
                    ins.push(TxInput {
                        address: "peer".into(),
                        value_satoshi: v1,
                    });
                }
                let mut outs = vec![TxOutput {
                    address: "sink".into(),
                    value_satoshi: self.rng.gen_range(1..100 * SAT_PER_BTC),
                }];
                if self.rng.gen_bool(0.5) {
                    outs.push(TxOutput {
                        address: "s".into(),
                        value_satoshi: self.rng.gen_range(1..SAT_PER_BTC),
                    });
                }
                (ins, outs)
            } else {
                // receive, with zero-value outputs possible
                let sat = if self.rng.gen_bool(0.05) {
                    0
                } else {
                    self.rng.gen_range(1..200 * SAT_PER_BTC)
                };
                (
                    vec![TxInput {
                        address: "src".into(),
                        value_satoshi: self.rng.gen_range(1..200 * SAT_PER_BTC),
                    }],
                    vec![
                        TxOutput {
                            address: "s".into(),
                            value_satoshi: sat,
                        },
                        TxOutput {
                            address: "other".into(),
                            value_satoshi: v1,
                        },
                    ],
                )
            };
            txs.push(Arc::new(Transaction {
                txid,
                block_height: height,
                timestamp,
                position_in_block: pos,
                inputs,
                outputs,
            }));
        }

        // rate table with deliberate gaps so the missing-rate path runs
        let mut rates = RateTable::new();
        if let (Some(first), Some(last)) = (txs.first(), txs.last()) {
            let mut day = date_of(first) - Duration::days(3);
            let end = date_of(last) + Duration::days(1);
            let mut i = 0u64;
            while day <= end {
                if i % 13 != 7 {
                    rates
                        .insert(day, 1.0 + (i % 400) as f64 * 0.7)
                        .unwrap();
                }
                day += Duration::days(1);
                i += 1;
            }
        }
        (txs, rates)
    }
}

#[test]
fn summarizer_matches_brute_force_on_random_histories() {
    let mut hgen = HistoryGen {
        rng: ChaCha8Rng::seed_from_u64(0x0b5e55),
        txid_counter: 0,
    };
    for case in 0..250 {
        let n_tx = hgen.rng.gen_range(1..=40usize);
        let (txs, rates) = hgen.generate(n_tx);
        let index = TxIndex::build(&txs);
        let history = address_history("s", &index, None).unwrap();
        assert_eq!(history.len(), txs.len());

        let fv = summarize(&history, &rates).unwrap();
        let expected = brute_summary(&history, &rates);
        for (i, (&got, &want)) in fv.values().iter().zip(expected.iter()).enumerate() {
            assert!(
                close(got, want),
                "case {case} feature {i} ({}): {got} vs {want}",
                txhist_core::model::FEATURE_NAMES[i]
            );
        }
    }
}

#[test]
fn streaming_engine_equals_materialized_path_exactly() {
    let mut hgen = HistoryGen {
        rng: ChaCha8Rng::seed_from_u64(0x57e4),
        txid_counter: 0,
    };
    for _ in 0..100 {
        let n_tx = hgen.rng.gen_range(1..=30usize);
        let (txs, rates) = hgen.generate(n_tx);
        let index = TxIndex::build(&txs);
        let history = address_history("s", &index, None).unwrap();
        let via_history = summarize(&history, &rates).unwrap();

        let mut engine = SummaryEngine::new(
            vec![SubjectSpec {
                id: "s".into(),
                addresses: vec!["s".into()],
                category: None,
            }],
            &rates,
            None,
        );
        for tx in &txs {
            engine.push(tx).unwrap();
        }
        let out = engine.finish().unwrap();
        let via_engine = out.rows[0].features.as_ref().unwrap();
        // same accumulator path: bit-identical, not merely close
        assert_eq!(via_engine, &via_history);
    }
}

#[test]
fn role_partition_and_bin_sums_hold_on_random_histories() {
    let mut hgen = HistoryGen {
        rng: ChaCha8Rng::seed_from_u64(0xb1b),
        txid_counter: 0,
    };
    for _ in 0..200 {
        let n_tx = hgen.rng.gen_range(1..=40usize);
        let (txs, rates) = hgen.generate(n_tx);
        let index = TxIndex::build(&txs);
        let history = address_history("s", &index, None).unwrap();
        let fv = summarize(&history, &rates).unwrap();
        let e = fv.extra();
        assert_eq!(e[6] + e[7] + e[8], e[5], "role counts must partition n_tx");

        // bins sum to at most 1 per side; exactly 1 when every transaction
        // on that side converted to a positive USD amount
        let b = fv.basic();
        let spent_sum: f64 = b[3..13].iter().sum();
        let received_sum: f64 = b[13..23].iter().sum();
        assert!(spent_sum <= 1.0 + 1e-9);
        assert!(received_sum <= 1.0 + 1e-9);
        if e[6] == 0.0 {
            assert_eq!(spent_sum, 0.0);
        }
        if e[7] == 0.0 {
            assert_eq!(received_sum, 0.0);
        }
    }
}

#[test]
fn balance_trace_matches_extra_stats() {
    let mut hgen = HistoryGen {
        rng: ChaCha8Rng::seed_from_u64(0xba1a),
        txid_counter: 0,
    };
    for _ in 0..100 {
        let n_tx = hgen.rng.gen_range(1..=30usize);
        let (txs, rates) = hgen.generate(n_tx);
        let index = TxIndex::build(&txs);
        let history = address_history("s", &index, None).unwrap();
        let trace = txhist_core::summarize::balance_trace(&history, &rates);
        assert_eq!(trace.balances_btc.len(), history.len());

        let fv = summarize(&history, &rates).unwrap();
        let e = fv.extra();
        // total inflow minus outflow equals the final balance
        let final_btc = *trace.balances_btc.last().unwrap();
        assert!(close(e[2] - e[1], final_btc));
        let last_sat = *trace.balances_sat.last().unwrap();
        assert_eq!(last_sat as f64 / SAT_PER_BTC as f64, final_btc);
    }
}

#[test]
fn history_with_coinbase_only_has_zero_spent_moments() {
    let subject: BTreeSet<String> = ["m".to_string()].into();
    let txs: Vec<Arc<Transaction>> = (0..4)
        .map(|i| {
            Arc::new(Transaction {
                txid: format!("{i:064x}"),
                block_height: 1000 + i * 144,
                timestamp: T0 + (1000 + i as i64 * 144) * 600,
                position_in_block: 0,
                inputs: vec![TxInput {
                    address: COINBASE_SENTINEL.into(),
                    value_satoshi: 50 * SAT_PER_BTC,
                }],
                outputs: vec![TxOutput {
                    address: "m".into(),
                    value_satoshi: 50 * SAT_PER_BTC,
                }],
            })
        })
        .collect();
    let index = TxIndex::build(&txs);
    let history = address_history("m", &index, None).unwrap();
    assert!(history.addresses == subject);
    let rates = RateTable::new();
    let fv = summarize(&history, &rates).unwrap();
    let m = fv.moments();
    // coinbase block equals overall block; spent/received/payback all zero
    for j in 0..4 {
        assert_eq!(m[12 + j], m[j]);
        assert_eq!(m[4 + j], 0.0);
        assert_eq!(m[8 + j], 0.0);
        assert_eq!(m[16 + j], 0.0);
    }
}
