//! Command implementations and the HTTP service behind the `cropseg` binary.

pub mod backends;
pub mod commands;
pub mod config;
pub mod service;
