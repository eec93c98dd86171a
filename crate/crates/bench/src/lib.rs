//! Criterion benchmarks for the numeric and graph kernels; see `benches/`.
