//! Gabor-matrix calculus for Fourier integral operators on a finite
//! time-frequency model `Z_L x Z_L`.
//!
//! The crate assembles operators (Kohn-Nirenberg, type I/II FIOs, metaplectic
//! words) as dense matrices, represents them in a Parseval Gabor frame, and
//! measures how their Gabor matrices concentrate along canonical
//! transformations.

pub mod algebra;
pub mod error;
pub mod gabor;
pub mod gabormatrix;
pub mod operators;
pub mod phasegeom;
pub mod rng;
pub mod tfcore;

pub use error::{Error, Result};
pub use tfcore::C64;
