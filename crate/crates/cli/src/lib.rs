//! Command-line front end for the LOSR toolkit.

pub mod acceptance;
pub mod commands;
pub mod report;
