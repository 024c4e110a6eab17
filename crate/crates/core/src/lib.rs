pub mod error;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{
    CMatrix, CVector, DensityOperator, FaithfulState, HermitianOperator, InnerProductKind, SpectralTransform,
    SuperOperator,
};
pub mod lindblad;
pub mod models;
pub mod deviation;
pub mod trajectories;
pub mod inequalities;
pub mod fixtures;
pub mod io;
