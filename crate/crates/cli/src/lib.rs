//! Library side of the `almdp` command-line tool: configuration, the
//! subcommands and the property suites they share with the test targets.

pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
