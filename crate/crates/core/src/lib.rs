//! Closed-loop lumped-parameter circulation model with a mechanical-energy
//! ledger and a pressure-driven chamber coupling interface.

pub mod config;
pub mod coupling;
pub mod energy;
pub mod error;
pub mod integrate;
pub mod model;
pub mod output;
pub mod root;
pub mod run;
pub mod verify;

pub use error::{Error, Result};
