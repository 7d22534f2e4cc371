//! Transaction history summarization and classification for Bitcoin ledger
//! data: parse transaction/rate/label files, cluster addresses into entities
//! via common spending, summarize each subject's history into a
//! 64-dimensional feature vector, and train/evaluate classifiers over the
//! seven service categories.

pub mod cluster;
pub mod ingest;
pub mod learn;
pub mod model;
pub mod summarize;
pub mod synth;

pub use model::{
    Category, FeatureVector, Moments, RateTable, Transaction, TransactionHistory, TxInput,
    TxOutput, TxRole,
};
