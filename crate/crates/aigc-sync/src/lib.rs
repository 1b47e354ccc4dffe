//! Timing-offset estimation for quantity-based modulation over the additive
//! inverse Gaussian (molecular diffusion) channel.
//!
//! A transmitter nanomachine encodes symbols in the number of molecules it
//! releases at each symbol boundary; each molecule reaches the receiver after
//! an inverse-Gaussian-distributed first-hitting time. The receiver clock is
//! offset from the transmitter clock by an unknown constant tau. This crate
//! provides the channel law ([`ig`]), order-statistic machinery for sorted
//! arrival times ([`order_stats`]), the channel simulator ([`channel`]), five
//! offset estimators ([`estimators`]), closed-form performance curves
//! ([`theory`]), and a reproducible Monte Carlo experiment harness with a CLI
//! ([`experiments`]).

pub mod cache;
pub mod channel;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod ig;
pub mod numeric;
pub mod order_stats;
pub mod theory;

pub use error::{Error, Result};
