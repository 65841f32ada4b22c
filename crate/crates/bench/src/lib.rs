//! Benchmark-only crate; see the `benches/` directory for the harnesses.
