//! Holds the `acceptance` test target; run it with
//! `cargo test -p bfgrad-validation --test acceptance`.
