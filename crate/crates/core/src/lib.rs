//! Frequency-security constraints for low-inertia power systems.
//!
//! The crate evaluates RoCoF, steady-state and nadir requirements in closed
//! form for a portfolio of frequency-response services with arbitrary ramp
//! durations and activation delays, reformulates them under Gaussian
//! demand-side inertia uncertainty, and schedules inertia, largest loss and
//! response allocations through a mixed-integer second-order cone program.

// `!(x >= 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conic;
pub mod dispatch;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod reference;
pub mod security;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{ChanceSpec, FrService, Portfolio, SecurityReport, SecuritySpec, SystemSnapshot};
