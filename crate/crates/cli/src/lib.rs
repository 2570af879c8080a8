//! Config-driven experiment runner for the `gsdde` command.

pub mod args;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod verdict;
