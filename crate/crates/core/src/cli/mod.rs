//! Configuration and the commands behind the `bitdnn` binary.

pub mod commands;
pub mod config;
