//! Spectra of linearized Euler and Navier-Stokes operators on the torus in
//! the vanishing-viscosity limit: Fourier-Galerkin operators, geometric-optics
//! growth rates, Riesz projections, and propagator experiments.
//!
//! Everything is generic over the real scalar (`f32` or `f64`); the `*F64`
//! aliases below fix double precision.

// NaN-rejecting `!(x > 0)` checks and index loops over small fixed dimensions are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity, clippy::explicit_counter_loop)]

pub mod cocycle;
pub mod error;
pub mod flows;
pub mod galerkin;
pub mod grid;
pub mod lattice;
pub mod linalg;
pub mod ode;
pub mod provenance;
pub mod scalar;
pub mod semigroup;
pub mod spectra;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

pub type ModeSetF64 = lattice::ModeSet<f64>;
pub type SpectralFieldF64 = lattice::SpectralField<f64>;
pub type SteadyFlowF64 = flows::SteadyFlow<f64>;
pub type GalerkinOperatorF64 = galerkin::GalerkinOperator<f64>;
pub type SpectrumResultF64 = spectra::SpectrumResult<f64>;
pub type RieszProjectionF64 = spectra::RieszProjection<f64>;
pub type BranchCurveF64 = spectra::BranchCurve<f64>;
pub type CocycleStateF64 = cocycle::CocycleState<f64>;
pub type LyapunovEstimateF64 = cocycle::LyapunovEstimate<f64>;
pub type PropagatorF64 = semigroup::Propagator<f64>;
pub type WavePacketF64 = semigroup::WavePacket<f64>;
pub type ComplexF64 = Cx<f64>;
