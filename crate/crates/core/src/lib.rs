//! Numerical core for the disordered Tonks-Girardeau gas on a ring.
//!
//! Hard-core bosons are simulated through their free-fermion representation:
//! one-particle spectra of a finite-difference Schrödinger operator with a
//! random alloy potential feed localization diagnostics, the bosonic one-body
//! density matrix, the superfluid stiffness and density dynamics.
//!
//! Every solver is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod localization;
pub mod obdm;
pub mod potential;
pub mod scalar;
pub mod spectral;
pub mod stiffness;
pub mod table;

pub use error::{Error, Result};
pub use grid::Grid;
pub use scalar::{Complex, Real};

pub type BoundaryTwist = grid::BoundaryTwist<f64>;
pub type PotentialModel = potential::PotentialModel<f64>;
pub type DisorderRealization = potential::DisorderRealization<f64>;
pub type DiscreteHamiltonian = hamiltonian::DiscreteHamiltonian<f64>;
pub type SpectralData = spectral::SpectralData<f64>;
pub type SpectrumPair = spectral::SpectrumPair<f64>;
pub type LocalAmplitudes = spectral::LocalAmplitudes<f64>;
pub type OrbitalSelection = spectral::OrbitalSelection<f64>;
pub type EnergyWindow = localization::EnergyWindow<f64>;
pub type CorrelatorMatrix = localization::CorrelatorMatrix<f64>;
pub type EnsembleAccumulator = localization::EnsembleAccumulator<f64>;
pub type LocalizationFit = localization::LocalizationFit<f64>;
pub type SuleData = localization::SuleData<f64>;
pub type OverlapPrefix = obdm::OverlapPrefix<f64>;
pub type ObdmKernel = obdm::ObdmKernel<f64>;
pub type StiffnessResult = stiffness::StiffnessResult<f64>;
pub type TrialBound = stiffness::TrialBound<f64>;
pub type InitialOccupation = dynamics::InitialOccupation<f64>;
pub type DensityTrajectory = dynamics::DensityTrajectory<f64>;
