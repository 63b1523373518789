//! Energy-efficient uplink NOMA power control for two-mode (transmit/sleep)
//! users with delay-outage requirements.
//!
//! The crate is `no_std` with `alloc`. It covers the analytical pipeline
//! (effective bandwidth and capacity, delay-outage algebra, Dinkelbach
//! optimization) and a slot-level queueing simulator used to check it.
#![no_std]

extern crate alloc;

pub mod effcap;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod qos;
pub mod quadrature;
pub mod sim;

pub use error::{Error, Result};

/// Version of this crate, recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
