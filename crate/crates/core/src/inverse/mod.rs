//! Reconstruction of the base state and of the cost coefficients from
//! measurement data.

pub mod stationary;
pub mod timedep;
pub mod ucp;
