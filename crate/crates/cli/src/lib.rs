//! Command-line front end: preset selection, cascade runs, and table output.

pub mod args;
pub mod table;

pub use args::{Cli, OutputFormat, OutputOptions};
pub use table::{emit_table, parse_csv};
