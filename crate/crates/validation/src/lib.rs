//! Holds the `acceptance` test target: `cargo test -p pnc-validation --test acceptance`.
