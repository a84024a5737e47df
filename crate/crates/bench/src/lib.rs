//! Criterion benchmarks for the solver kernels; see `benches/kernels.rs`.
//!
//! Run with `cargo bench -p navslip-bench`.
