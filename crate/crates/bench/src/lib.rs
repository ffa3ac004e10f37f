//! Benchmarks for the simulator live in `benches/`; run them with
//! `cargo bench -p socnav-bench`.
