//! Criterion benchmarks for the solvers, feature extraction and training
//! kernels live in `benches/`.
