//! The `frag` command line and the local session service.

pub mod cli;
pub mod service;
