//! Gravitational quantum states of ultracold neutrons in a rough slit.

pub mod absorption;
pub mod airy;
pub mod count;
pub mod eigen;
pub mod error;
pub mod quadrature;
pub mod roughness;
pub mod scales;
pub mod transport;

pub use error::{Error, Result};
