//! Criterion benchmarks for the solve/certify pipeline live in `benches/`.
