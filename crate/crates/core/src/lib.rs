//! Physical-layer simulator for a decoy-state BB84 quantum channel sharing
//! a GPON fiber-to-the-home splitter tree with classical traffic.
//!
//! The pipeline runs bottom-up: [`topology`] describes the plant, [`optics`]
//! turns it into losses and reflection paths, [`noise`] converts classical
//! powers into background clicks at the receiver, [`gpon`] supplies ONT
//! launch powers and duty cycles, and [`qkd`] evaluates the key rate.
//! [`model`] wires those together for one scenario, [`calibrate`] fits the
//! unpublished parameters to observations, and [`simrun`] produces seeded
//! time series and load sweeps.

// Parameter checks are written as `!(x > 0.0)` on purpose: the negation
// also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod document;
pub mod error;
pub mod gpon;
pub mod model;
pub mod noise;
pub mod optics;
pub mod optimize;
pub mod physics;
pub mod qkd;
pub mod simrun;
pub mod topology;

pub use document::ScenarioDocument;
pub use error::{Error, Result};
