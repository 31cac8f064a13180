//! Near-field channel estimation for extremely large uniform planar arrays.

pub mod channel;
pub mod dictionary;
pub mod error;
pub mod gamp;

pub mod config;
pub mod estimators;
pub mod plot;
pub mod sim;
pub use error::{NfestError, Result};
