//! Criterion benchmarks for `decorrel`; see `benches/`.
