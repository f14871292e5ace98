//! Criterion benchmarks live in `benches/`; this crate has no library surface of its own.

pub use ugcqa_core;
