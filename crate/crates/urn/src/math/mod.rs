//! Numeric substrate: dense linear algebra, seeded RNG, Adam.

pub mod adam;
pub mod matrix;
pub mod rng;

pub use adam::AdamState;
pub use matrix::{Matrix, Vector};
pub use rng::{he_normal_init, Rng};
