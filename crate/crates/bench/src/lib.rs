//! Criterion benchmarks for pcsim live under `benches/`.
