//! Benchmark harness for the qkrr simulator; see `benches/`.
