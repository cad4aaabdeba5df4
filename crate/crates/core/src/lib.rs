//! Numerical laboratory for the open KPZ equation on `[0,1]`.
//!
//! The stochastic heat equation with Robin boundaries is assembled from
//! image-sum heat kernels ([`kernels`]), spectrally mollified noise and
//! smoothed Brownian initial data ([`fields`]), and Feynman-Kac path
//! ensembles ([`paths`], [`polymer`]). A finite-difference solver
//! ([`she_pde`]) cross-checks the path representation, and [`stein`] tests
//! Gaussianity of the slope field.

pub mod error;
pub mod fields;
pub mod kernels;
pub mod params;
pub mod paths;
pub mod polymer;
pub mod quadrature;
pub mod report;
pub mod she_pde;
pub mod rng;
pub mod stats;
pub mod stein;

pub use error::{Error, Result};
pub use fields::{InitialData, NoiseRealization, SmoothedInitial, SmoothedNoise};
pub use kernels::KernelConfig;
pub use params::{BoundaryParams, GridSpec, SmoothingParams};
pub use paths::{Path, StoppedPair};
pub use polymer::{Estimate, PolymerEnv, WeightedEnsemble};
pub use report::ExperimentReport;
pub use she_pde::{FieldState, FlowProfile};
pub use stein::{Battery, SteinReport, TestFunctionPair};
