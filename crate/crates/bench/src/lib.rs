//! Benchmarks for the surrogate network and simulator; see `benches/`.
