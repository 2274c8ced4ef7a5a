//! Criterion benchmarks for the `dgvc` crate live under `benches/`.
