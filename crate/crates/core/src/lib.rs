//! Learning-based terminal guidance and tracking control for high-speed
//! flyby rendezvous with an interstellar object.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod mpc;
pub mod policy;
pub mod rendezvous;
pub mod scenario;
pub mod training;

pub use error::{Error, Result};
