//! Benchmark-only crate; the criterion benches live under `benches/`.
