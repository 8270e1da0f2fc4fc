//! Criterion benchmarks for the scheduling disciplines and full scenario
//! runs; see `benches/`.
