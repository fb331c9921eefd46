//! Discrete weak KAM theory on the flat tori T¹ and T².
//!
//! A Lagrangian is discretized into a one-step min-plus action kernel on a
//! uniform grid. On top of it the crate computes the critical value, weak
//! KAM solutions, the Peierls barrier, the projected Aubry set, the Mather
//! semi-distance and quotient, covering estimates of that quotient,
//! chain-recurrent sets of vector fields, and alternating Lax–Oleinik
//! regularizations of critical subsolutions.

pub mod aubry;
pub mod critical;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod model;
pub mod regularizer;
pub mod semimetric;

pub use error::{Error, Result};
