//! Diagnostics on top of the solvers: energy, BMO seminorms and the
//! two-path uniqueness experiment.

pub mod bmo;
pub mod energy;
pub mod uniqueness;

pub use bmo::{bmo_seminorm, john_nirenberg_check, BmoReport, JohnNirenbergReport};
pub use energy::{energy_balance_report, energy_eulerian, energy_lagrangian, eulerian_density, EnergyBalance};
pub use uniqueness::{uniqueness_experiment, uniqueness_from_sigma, uniqueness_on_sigma, UniquenessConfig, UniquenessExperiment, UniquenessReport};
