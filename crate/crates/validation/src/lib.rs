//! Acceptance checks for `primguard`. The checks live in `tests/acceptance.rs`
//! and run with `cargo test -p primguard-validation`.
