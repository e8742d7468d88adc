pub mod collective;
pub mod commands;
pub mod config;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod measurement;
pub mod open_system;
pub mod output;
pub mod quantum;
pub mod repeater;
pub mod units;

pub use error::{Error, Result};
