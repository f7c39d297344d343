//! Train several tabular models, explain them with seven attribution methods
//! and merge the explanations into consensus feature rankings.

pub mod consensus;
pub mod data;
pub mod explain;
pub mod error;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
