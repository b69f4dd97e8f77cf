//! Command-line front end and HTTP service for `splatseg`.

pub mod args;
pub mod commands;
pub mod service;

/// JSON Schema of `result.json`.
pub const RESULT_SCHEMA: &str = include_str!("../schema/result.schema.json");
