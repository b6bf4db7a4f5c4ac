//! Criterion benchmarks for the solver kernels live in `benches/`.
