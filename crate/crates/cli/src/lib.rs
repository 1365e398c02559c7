//! Command line and HTTP front end for `acf-core`.

pub mod commands;
pub mod service;
