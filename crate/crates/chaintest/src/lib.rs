//! File formats, model providers, toolchain adapters and the session driver
//! behind the `chaintest` command.

pub mod analyze;
pub mod cli;
pub mod config;
pub mod dump;
pub mod gateway;
pub mod report;
pub mod runner;
pub mod session;
