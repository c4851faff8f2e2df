//! Criterion benchmarks for the `ampr-core` kernels; see `benches/`.
