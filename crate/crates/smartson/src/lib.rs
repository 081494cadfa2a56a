//! IO, file formats and the command-line front end for the SmartSON
//! marketplace simulator. The simulation itself lives in `smartson-core`,
//! re-exported here as [`core`].

pub mod cli;
pub mod concurrent;
pub mod config;
pub mod replay;
pub mod report;
pub mod trace;

pub use smartson_core as core;
