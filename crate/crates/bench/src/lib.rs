//! Criterion benchmarks for qdev-core; see `benches/`.
