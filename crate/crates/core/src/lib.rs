//! Downlink two-user OTFS-NOMA link simulator.
//!
//! The crate models the delay-Doppler modem, a linear time-varying multipath
//! channel, and two receivers for the power-multiplexed superposition: an
//! iterative LSQR equalizer with reliability-zone decisions and an MMSE-SIC
//! benchmark. [`simulation`] ties them into seeded Monte Carlo sweeps.

// `!(x > t)` guards in this crate are deliberate: they reject NaN along with small values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod detection;
pub mod error;
pub mod lsqr;
pub mod modem;
pub mod numerics;
pub mod simulation;

pub use error::{Error, Result};
pub use numerics::C64;
