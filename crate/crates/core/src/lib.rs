//! Power talk: signaling between droop-controlled converters over the shared
//! bus of a DC microgrid.
//!
//! The crate models the bus as a Thevenin channel seen from the transmitter,
//! designs symbol constellations under a power-deviation budget, detects the
//! transmitted line by maximum likelihood and evaluates symbol error rates in
//! closed form and by Monte Carlo simulation, including adaptive switching
//! between constellations as the load changes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod circuit;
pub mod cli;
pub mod constellation;
pub mod detection;
pub mod error;
pub mod montecarlo;
pub mod numeric;
pub mod rng;
pub mod scenario;
pub mod signaling;

pub use circuit::{LoadModel, SystemConfig, TheveninState, VscParams};
pub use constellation::{Constellation, Family};
pub use error::{Error, Result};
