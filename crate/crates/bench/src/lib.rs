//! Criterion benchmarks for `qubit-readout`; see `benches/readout.rs`.
