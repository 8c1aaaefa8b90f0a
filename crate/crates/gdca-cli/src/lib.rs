//! Library surface of the `gdca` tool: configuration, file formats and the
//! command implementations. The binary in `main.rs` is a thin argument
//! parser over [`commands`].

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod ppm;
pub mod report;
