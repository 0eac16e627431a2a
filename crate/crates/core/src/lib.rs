//! Thermoacoustic tomography with a variable sound speed: finite-difference
//! wave propagation, Neumann-series time-reversal inversion, and geodesic
//! visibility analysis for partial boundary data.

pub mod elliptic;
pub mod energy;
pub mod error;
pub mod grid;
pub mod io;
pub mod medium;
pub mod operator;
pub mod phantoms;
pub mod rays;
pub mod reconstruct;
pub mod wave;

pub use error::{Result, TatError};
pub use grid::{Grid, IndexRect, Region, ScalarField};
pub use medium::{Medium, Profile};
pub use wave::{BoundaryTrace, TimeAxis};
