//! Numerical laboratory for impulse control of the 1D heat equation with a
//! bounded potential: observation-at-one-time constants, minimal-norm impulse
//! controls and their duality, approximate inverse source reconstruction, and
//! rapid output-feedback stabilization by periodic impulses.

pub mod error;
pub mod impulse;
pub mod inverse;
pub mod observation;
pub mod optimize;
pub mod spectral;
pub mod stabilizer;

pub use error::{Error, Result};
pub use spectral::{
    assemble_operator, eigendecompose, Grid1D, PotentialField, SpectralDecomposition, StateVector, SubdomainMask,
    SubdomainVector, TridiagonalOperator,
};
