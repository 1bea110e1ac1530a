//! Numerical laboratory for networks of coupled three-time-scale
//! oscillators: critical and slow manifolds, folds and canard points, linger
//! times along the slow passage, and verification of a sufficient coupling
//! threshold for synchronization of the fast variable.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod linger;
pub mod manifolds;
pub mod sync;

pub use error::{Error, Result};
