//! Solver kit for the spherical-harmonic (P_N) moment approximation of
//! linear kinetic transport with energy-stable Onsager boundary conditions.

pub mod config;
pub mod error;
pub mod mc;
pub mod onsager;
pub mod output;
pub mod pn;
pub mod sbp;
pub mod solver;
pub mod sphharm;
pub mod verify;

pub use error::{Error, Result};
pub use nalgebra;
