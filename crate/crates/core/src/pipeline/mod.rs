//! End-to-end runs: configuration, remote backends, caching, persistence,
//! reporting and the command line.

pub mod backend;
pub mod cache;
pub mod config;
pub mod mock;
pub mod persist;
pub mod report;
pub mod run;
pub mod cli;
