//! Command-line pipeline and HTTP API for shadekit.

pub mod api;
pub mod commands;
