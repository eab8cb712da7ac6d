//! Configuration-driven experiment runner for the `qfilter` library.

pub mod acceptance;
pub mod build;
pub mod config;
pub mod error;
pub mod girsanov;
pub mod manifest;
pub mod report;
pub mod tasks;
