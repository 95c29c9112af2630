//! Library side of the `topostudio` command: suite benchmarking and KLM
//! report formatting. The binary in `main.rs` is argument parsing on top.

pub mod bench;
pub mod klm_report;
