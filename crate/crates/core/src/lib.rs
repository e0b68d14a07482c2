//! Minimal average action, weak KAM solutions and integrability
//! diagnostics for Tonelli Lagrangians on the two-torus.

// `!(x > 0.0)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod lagrangian;
pub mod loopmin;
pub mod mather;
pub mod weakkam;
pub mod integrability;
