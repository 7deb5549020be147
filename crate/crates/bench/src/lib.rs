//! Criterion benchmarks for scoring, sampling, losses and training; see `benches/`.
