//! Configuration parsing, run orchestration and output writers behind the
//! `fv3` binary.

pub mod config;
pub mod output;
pub mod runner;
