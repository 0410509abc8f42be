//! Acceptance checks live in `tests/acceptance.rs`; run them with `cargo test -p ule-lab-validation`.
