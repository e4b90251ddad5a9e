//! Criterion benchmarks for `xfnf-core`; see `benches/`.
