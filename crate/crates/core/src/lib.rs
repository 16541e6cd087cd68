pub mod audio;
pub mod baseline;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fif;
pub mod g726;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod train;
