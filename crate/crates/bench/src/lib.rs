//! Placeholder lib; benchmarks live under benches/.
