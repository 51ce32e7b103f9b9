//! Criterion benchmarks for the model fits and metrics; see `benches/models.rs`.
