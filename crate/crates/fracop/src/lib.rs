//! Datasets, file formats, experiment protocols and the command line for
//! the fractional-order neural operator in `fracop-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod grf;
pub mod nodf;
pub mod pdedata;
pub mod plancache;
pub mod protocols;

pub use error::{Error, Result};
pub use fracop_core;
