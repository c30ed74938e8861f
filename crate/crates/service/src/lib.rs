//! HTTP service and command-line front end over `slidewise-core`.

pub mod api;
pub mod cli;
