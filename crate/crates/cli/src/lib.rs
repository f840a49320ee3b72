//! `gspn` command-line front end.

pub mod commands;
pub mod modelfile;

pub use commands::{run, Cli, Command};
