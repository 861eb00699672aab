//! Library surface of the `trapmem` command-line tool.
//!
//! The binary itself is a thin clap dispatcher; everything it does lives
//! here so integration tests can drive the same code paths directly.

pub mod commands;
pub mod config;
pub mod manifest;
