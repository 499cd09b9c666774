//! Fractional-in-time stochastic PDE toolkit: Mittag-Leffler evaluation,
//! subordinated heat kernels on a periodic box, Littlewood–Paley localisation,
//! Poisson random measures and a Picard solver for the mild formulation.

pub mod bernstein;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod grid;
pub mod harmonic;
pub mod kernels;
pub mod mittag_leffler;
pub mod noise;
pub mod quadrature;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
