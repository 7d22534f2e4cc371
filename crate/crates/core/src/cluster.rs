//! Common-spend entity clustering: addresses co-occurring in the inputs of a
//! transaction are merged into one entity via union-find.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::model::{Category, HistoryEntry, ModelError, Transaction, TransactionHistory};
use crate::summarize::{assign_role, SummarizeError};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("unknown entity id {0}")]
    UnknownEntity(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Summarize(#[from] SummarizeError),
}

/// Union-find with path compression and union by size.
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn push(&mut self) -> usize {
        let id = self.parent.len();
        self.parent.push(id);
        self.size.push(1);
        id
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, x: usize, y: usize) {
        let rx = self.find(x);
        let ry = self.find(y);
        if rx == ry {
            return;
        }
        let (big, small) = if self.size[rx] >= self.size[ry] {
            (rx, ry)
        } else {
            (ry, rx)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Partition of addresses into entities. Entity ids are dense and assigned
/// by the lexicographically smallest member address, so the mapping is
/// independent of transaction order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMap {
    by_address: HashMap<String, usize>,
    members: Vec<Vec<String>>,
}

impl EntityMap {
    pub fn entity_of(&self, address: &str) -> Option<usize> {
        self.by_address.get(address).copied()
    }

    /// Member addresses of an entity, sorted lexicographically.
    pub fn members(&self, entity: usize) -> Option<&[String]> {
        self.members.get(entity).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn entities(&self) -> impl Iterator<Item = (usize, &[String])> {
        self.members.iter().enumerate().map(|(i, m)| (i, m.as_slice()))
    }

    /// Entities as address sets, for partition comparisons in tests.
    pub fn partition(&self) -> BTreeSet<BTreeSet<String>> {
        self.members
            .iter()
            .map(|m| m.iter().cloned().collect())
            .collect()
    }
}

/// Incremental construction of an [`EntityMap`]: feed transactions (joining
/// their input addresses) and any extra addresses that must appear even
/// without input evidence (labeled output-only addresses become singletons).
pub struct EntityMapBuilder {
    uf: UnionFind,
    index_of: HashMap<String, usize>,
    addresses: Vec<String>,
}

impl EntityMapBuilder {
    pub fn new() -> EntityMapBuilder {
        EntityMapBuilder {
            uf: UnionFind::new(0),
            index_of: HashMap::new(),
            addresses: Vec::new(),
        }
    }

    fn intern(&mut self, address: &str) -> usize {
        if let Some(&i) = self.index_of.get(address) {
            return i;
        }
        let i = self.uf.push();
        self.index_of.insert(address.to_string(), i);
        self.addresses.push(address.to_string());
        i
    }

    /// Registers an address without linking it to anything.
    pub fn ensure_address(&mut self, address: &str) {
        self.intern(address);
    }

    /// Joins all non-coinbase input addresses of the transaction.
    pub fn add_transaction(&mut self, tx: &Transaction) {
        let mut first: Option<usize> = None;
        for input in &tx.inputs {
            if input.is_coinbase() {
                continue;
            }
            let idx = self.intern(&input.address);
            match first {
                None => first = Some(idx),
                Some(f) => self.uf.union(f, idx),
            }
        }
    }

    /// Relabels components deterministically and freezes the map.
    pub fn finish(mut self) -> EntityMap {
        let n = self.addresses.len();
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..n {
            let root = self.uf.find(i);
            groups.entry(root).or_default().push(i);
        }
        let mut member_lists: Vec<Vec<String>> = groups
            .into_values()
            .map(|idxs| {
                let mut addrs: Vec<String> = idxs
                    .into_iter()
                    .map(|i| self.addresses[i].clone())
                    .collect();
                addrs.sort_unstable();
                addrs
            })
            .collect();
        // smaller id goes to the entity with the smaller smallest address
        member_lists.sort_unstable_by(|a, b| a[0].cmp(&b[0]));
        let mut by_address = HashMap::with_capacity(n);
        for (id, members) in member_lists.iter().enumerate() {
            for addr in members {
                by_address.insert(addr.clone(), id);
            }
        }
        EntityMap {
            by_address,
            members: member_lists,
        }
    }
}

impl Default for EntityMapBuilder {
    fn default() -> Self {
        EntityMapBuilder::new()
    }
}

/// Clusters the input addresses of the given transactions. Addresses that
/// never appear in an input are not part of the result.
pub fn build_entities<'a, I>(transactions: I) -> EntityMap
where
    I: IntoIterator<Item = &'a Transaction>,
{
    let mut builder = EntityMapBuilder::new();
    for tx in transactions {
        builder.add_transaction(tx);
    }
    builder.finish()
}

/// Per-address index over a transaction set, in canonical transaction order.
/// Each transaction appears once per address it mentions.
pub struct TxIndex {
    by_address: HashMap<String, Vec<Arc<Transaction>>>,
}

impl TxIndex {
    /// Builds the index. Transactions must already be in canonical order.
    pub fn build(transactions: &[Arc<Transaction>]) -> TxIndex {
        let mut by_address: HashMap<String, Vec<Arc<Transaction>>> = HashMap::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for tx in transactions {
            seen.clear();
            for input in &tx.inputs {
                if !input.is_coinbase() {
                    seen.insert(&input.address);
                }
            }
            for output in &tx.outputs {
                seen.insert(&output.address);
            }
            for addr in &seen {
                by_address
                    .entry((*addr).to_string())
                    .or_default()
                    .push(Arc::clone(tx));
            }
        }
        TxIndex { by_address }
    }

    pub fn transactions_of(&self, address: &str) -> &[Arc<Transaction>] {
        self.by_address
            .get(address)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

fn assemble_history(
    subject: String,
    addresses: BTreeSet<String>,
    category: Option<Category>,
    index: &TxIndex,
) -> Result<TransactionHistory, ClusterError> {
    let mut txs: Vec<Arc<Transaction>> = Vec::new();
    for addr in &addresses {
        txs.extend(index.transactions_of(addr).iter().cloned());
    }
    txs.sort_unstable_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    txs.dedup_by(|a, b| a.txid == b.txid);
    let mut entries = Vec::with_capacity(txs.len());
    for tx in txs {
        let role = assign_role(&tx, &addresses)?;
        entries.push(HistoryEntry { tx, role });
    }
    Ok(TransactionHistory::new(subject, addresses, entries, category)?)
}

/// Relevant transactions of one address, with roles assigned against that
/// single address.
pub fn address_history(
    address: &str,
    index: &TxIndex,
    category: Option<Category>,
) -> Result<TransactionHistory, ClusterError> {
    let addresses: BTreeSet<String> = [address.to_string()].into();
    assemble_history(address.to_string(), addresses, category, index)
}

/// Union of the member addresses' transactions, de-duplicated by txid, with
/// roles recomputed against the full member set (a transfer between two
/// members is spent-with-payback at the entity level).
pub fn entity_history(
    entity: usize,
    map: &EntityMap,
    index: &TxIndex,
    category: Option<Category>,
) -> Result<TransactionHistory, ClusterError> {
    let members = map
        .members(entity)
        .ok_or(ClusterError::UnknownEntity(entity))?;
    let addresses: BTreeSet<String> = members.iter().cloned().collect();
    assemble_history(entity.to_string(), addresses, category, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TxInput, TxKind, TxOutput};

    fn tx(txid_byte: u8, height: u64, ins: &[(&str, u64)], outs: &[(&str, u64)]) -> Transaction {
        Transaction {
            txid: format!("{:02x}", txid_byte).repeat(32),
            block_height: height,
            timestamp: 1_300_000_000 + height as i64 * 600,
            position_in_block: 0,
            inputs: ins
                .iter()
                .map(|(a, v)| TxInput {
                    address: a.to_string(),
                    value_satoshi: *v,
                })
                .collect(),
            outputs: outs
                .iter()
                .map(|(a, v)| TxOutput {
                    address: a.to_string(),
                    value_satoshi: *v,
                })
                .collect(),
        }
    }

    #[test]
    fn chained_cospends_merge_transitively() {
        let txs = vec![
            tx(1, 1, &[("A", 10), ("B", 5)], &[("X", 15)]),
            tx(2, 2, &[("B", 7), ("C", 3)], &[("Y", 10)]),
        ];
        let map = build_entities(&txs);
        assert_eq!(map.len(), 1);
        assert_eq!(map.members(0).unwrap(), &["A", "B", "C"]);
    }

    #[test]
    fn single_input_forms_singleton() {
        let txs = vec![tx(1, 1, &[("A", 10)], &[("X", 10)])];
        let map = build_entities(&txs);
        assert_eq!(map.len(), 1);
        assert_eq!(map.entity_of("A"), Some(0));
        assert_eq!(map.entity_of("X"), None); // output-only, no input evidence
    }

    #[test]
    fn three_transactions_close_into_one_entity() {
        let txs = vec![
            tx(1, 1, &[("A", 1), ("B", 1)], &[("X", 2)]),
            tx(2, 2, &[("C", 1), ("D", 1)], &[("X", 2)]),
            tx(3, 3, &[("D", 1), ("A", 1)], &[("X", 2)]),
        ];
        let map = build_entities(&txs);
        assert_eq!(map.len(), 1);
        assert_eq!(map.members(0).unwrap(), &["A", "B", "C", "D"]);
    }

    #[test]
    fn entity_ids_follow_smallest_member_address() {
        let txs = vec![
            tx(1, 1, &[("z9", 1)], &[("o", 1)]),
            tx(2, 2, &[("a1", 1), ("m5", 1)], &[("o", 2)]),
        ];
        let map = build_entities(&txs);
        assert_eq!(map.entity_of("a1"), Some(0));
        assert_eq!(map.entity_of("m5"), Some(0));
        assert_eq!(map.entity_of("z9"), Some(1));
    }

    #[test]
    fn singleton_entity_history_matches_address_history() {
        let txs: Vec<Arc<Transaction>> = vec![
            Arc::new(tx(1, 1, &[("A", 10)], &[("B", 9)])),
            Arc::new(tx(2, 2, &[("C", 5)], &[("A", 5)])),
        ];
        let index = TxIndex::build(&txs);
        let map = build_entities(txs.iter().map(Arc::as_ref));
        let entity = map.entity_of("A").unwrap();
        let eh = entity_history(entity, &map, &index, None).unwrap();
        let ah = address_history("A", &index, None).unwrap();
        assert_eq!(eh.entries.len(), ah.entries.len());
        for (e, a) in eh.entries.iter().zip(&ah.entries) {
            assert_eq!(e.tx.txid, a.tx.txid);
            assert_eq!(e.role, a.role);
        }
    }

    #[test]
    fn internal_transfer_is_payback_at_entity_level() {
        // A and B co-spend once, then A pays B
        let txs: Vec<Arc<Transaction>> = vec![
            Arc::new(tx(1, 1, &[("A", 1), ("B", 1)], &[("X", 2)])),
            Arc::new(tx(2, 2, &[("A", 5)], &[("B", 5)])),
        ];
        let index = TxIndex::build(&txs);
        let map = build_entities(txs.iter().map(Arc::as_ref));
        let entity = map.entity_of("A").unwrap();

        let eh = entity_history(entity, &map, &index, None).unwrap();
        let transfer = eh.entries.iter().find(|e| e.tx.block_height == 2).unwrap();
        assert_eq!(transfer.role.kind, TxKind::Spent);
        assert!(transfer.role.payback);

        let ah_a = address_history("A", &index, None).unwrap();
        let a_transfer = ah_a.entries.iter().find(|e| e.tx.block_height == 2).unwrap();
        assert_eq!(a_transfer.role.kind, TxKind::Spent);
        assert!(!a_transfer.role.payback);

        let ah_b = address_history("B", &index, None).unwrap();
        let b_transfer = ah_b.entries.iter().find(|e| e.tx.block_height == 2).unwrap();
        assert_eq!(b_transfer.role.kind, TxKind::Received);
        assert!(!b_transfer.role.payback);
    }

    #[test]
    fn shared_input_transaction_appears_once_in_entity_history() {
        let txs: Vec<Arc<Transaction>> = vec![Arc::new(tx(
            1,
            1,
            &[("A", 1), ("B", 1)],
            &[("X", 2)],
        ))];
        let index = TxIndex::build(&txs);
        let map = build_entities(txs.iter().map(Arc::as_ref));
        let eh = entity_history(0, &map, &index, None).unwrap();
        assert_eq!(eh.entries.len(), 1);
    }

    #[test]
    fn unknown_entity_errors() {
        let index = TxIndex::build(&[]);
        let map = build_entities(std::iter::empty());
        assert!(matches!(
            entity_history(3, &map, &index, None),
            Err(ClusterError::UnknownEntity(3))
        ));
    }
}
