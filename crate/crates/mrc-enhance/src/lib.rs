//! Std companion to `mrc-enhance-core`: file formats, backend wiring, the
//! answer-shortening review service, and the `mrc-enhance` command line.

pub mod annosvc;
pub mod backends;
pub mod cli;
pub mod commands;
pub mod config;
pub mod formats;
