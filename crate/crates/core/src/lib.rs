//! Resilient residential demand-response scheduling.
//!
//! The crate models a community of homes whose energy managers schedule
//! shiftable appliances against day-ahead prices, an adversary that inflates
//! the aggregated demand forecast, and the utility-side defence: a
//! cluster-based spectral-residual detector, an attacked-slot isolator and a
//! forecast mitigator.

pub mod attack;
pub mod datastore;
pub mod detect;
pub mod domain;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod isolate;
pub mod mitigate;
mod seed;

pub use error::{Error, Result};
