//! Criterion benchmarks for per-step costs, in `benches/steps.rs`.
