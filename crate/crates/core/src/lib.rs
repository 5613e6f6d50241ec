//! Pricing of k-th-to-default basket credit default swaps under interacting
//! default intensities with contagion.
//!
//! Four analytic model families are supported, each producing the law of the
//! k-th ordered default time:
//!
//! * [`mixture`]: homogeneous names with constant contagion (exact exponential mixture),
//! * [`decay`]: homogeneous names whose contagion decays exponentially (nested quadrature),
//! * [`regime`]: a two-state Markov-modulated base intensity (closed-form occupation transforms),
//! * [`hetero`]: two heterogeneous groups (exact mixture over the group lattice).
//!
//! [`pricing`] turns any of these laws into swap rates, and [`montecarlo`] is an
//! independent simulator used to cross-check every analytic result.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod dd;
pub mod decay;
pub mod error;
pub mod hetero;
pub mod mixture;
pub mod model;
pub mod montecarlo;
pub mod phase;
pub mod pricing;
pub mod quadrature;
pub mod regime;

pub use error::{CdsError, Result};
