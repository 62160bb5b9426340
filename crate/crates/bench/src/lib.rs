//! Criterion benchmarks for the numerical kernels and synthesis pipeline;
//! see `benches/`.
