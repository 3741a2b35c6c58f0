//! Command implementations behind the `neuroprep` binary, exposed as a
//! library so integration tests can drive them in-process.

pub mod bench;
pub mod commands;
pub mod config;
pub mod dataio;
pub mod svg;
