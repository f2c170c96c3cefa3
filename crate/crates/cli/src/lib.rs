//! Library surface of the command line tool, kept separate from `main` so
//! integration tests drive the same entry points in-process.

pub mod manifest;
pub mod render;
pub mod run;

pub use run::{run_cli, Cli};
