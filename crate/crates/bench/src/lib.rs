//! Criterion benchmarks for `decq-core`; see `benches/`.
