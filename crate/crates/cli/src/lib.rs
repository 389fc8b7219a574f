//! Command-line front end and HTTP service for the analytics engine.

pub mod cli;
pub mod commands;
pub mod server;
