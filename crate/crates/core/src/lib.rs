pub mod analysis;
pub mod cli;
pub mod error;
pub mod eulerian;
pub mod flow;
pub mod grid;
pub mod quadrature;
pub mod lagrangian;
pub mod pressure;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Point, ScalarField, ScalarHistory, TorusGrid, VectorField};
