//! Command-line front end: run specifications, presets and dispatch.

pub mod run;
pub mod spec;
