//! Command-line and HTTP front ends for `ciams-core`.

pub mod cli;
pub mod commands;
pub mod service;
