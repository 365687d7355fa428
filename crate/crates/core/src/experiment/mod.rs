//! Experiment orchestration: configuration, artifact I/O, commands and the
//! command-line front end.

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;
