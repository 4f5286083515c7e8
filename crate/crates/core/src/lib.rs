//! Fusion planning for chains of depthwise and pointwise convolutions.
//!
//! Analytic global-memory-access models ([`cost`]) drive an exhaustive tiling
//! search ([`search`]) and a two-pass planner ([`planner`]). A counting
//! simulator ([`sim`]) serves as the reference for the models.

pub mod cli;
pub mod cost;
pub mod error;
pub mod gpu;
pub mod model;
pub mod planner;
pub mod roofline;
pub mod search;
pub mod sim;

pub use error::{Error, Result};
