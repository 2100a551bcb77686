//! Criterion benchmarks for the testing pipeline; see `benches/`.
