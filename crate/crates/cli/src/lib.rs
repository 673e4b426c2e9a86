//! Command-line driver: training, evaluation, certification and landscape
//! comparison of policy bundles.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod lqr;
