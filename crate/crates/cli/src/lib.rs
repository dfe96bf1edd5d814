//! Command implementations behind the `wcf` binary.

pub mod args;
pub mod commands;
pub mod manifest;
pub mod rotcheck;
