//! Consistency auditing of DApp contracts against their front-end claims.

pub mod analysis;
pub mod chain;
pub mod detector;
pub mod facts;
pub mod frontend;
pub mod graphs;
pub mod infer;
pub mod ir;
pub mod pipeline;
pub mod sigdb;
pub mod symexec;
pub mod word;

pub use word::{Address, Selector, Word};
