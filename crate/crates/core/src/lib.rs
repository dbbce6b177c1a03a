//! Tests whether locally unstable stretches of a two-degree-of-freedom
//! Hamiltonian trajectory can be responsible for chaos.
//!
//! A stretch of trajectory on which the deviation matrix `N` has a positive
//! eigenvalue only lets neighbouring orbits separate if the product of its
//! duration `Δt` and the largest eigenvalue `λmax` seen inside it exceeds one.
//! The crate computes that product for built-in systems (a linear toy model,
//! a generalized Toda potential, Kepler and restricted three-body problems)
//! using either the local Lyapunov matrix or the geometric (GEM) matrix.
//!
//! Modules, bottom-up:
//!
//! * [`models`]: potentials with analytic gradients and Hessians, energies,
//!   the toy deviation matrix.
//! * [`integrate`]: fixed-step RK4 propagation of the phase flow, of the
//!   deviation system `ζ̇ = Mζ`, and of both in lockstep.
//! * [`stability`]: Lyapunov/GEM matrices, local spectra, unstable interval
//!   detection, and the product verdict.
//! * [`sections`]: Poincaré sections and apsis events.
//! * [`experiments`]: configured runs, CSV/SVG/JSON reporting.

pub mod error;
pub mod experiments;
pub mod integrate;
pub mod linalg;
pub mod models;
pub mod sections;
pub mod stability;

pub use error::{DomainError, Error, Result};
pub use integrate::{
    propagate_coupled, propagate_deviation, propagate_phase, CoupledRecord, DeviationRecord,
    DeviationState, MatrixSource, TrajectoryRecord,
};
pub use models::{
    evaluate_potential, total_energy, toy_matrix, ModelKind, ModelSpec, PhaseState, PotentialEval,
    ThreeBodyParams, ToyParams,
};
pub use sections::{
    apsis_events, poincare_section, ApsisEvent, ApsisKind, SectionPlane, SectionPoint,
};
pub use stability::{
    detect_unstable_intervals, local_spectrum, stability_matrix, uncertainty_verdict,
    Classification, EigenSample, Indicator, LocalSpectrum, MatrixKind, StabilityMatrix,
    StabilityVerdict, UnstableInterval,
};

/// Gravitational parameter of the Sun in AU³/year² (solar-mass units).
pub const GM_SUN: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Unit system used by the celestial models, recorded in run manifests.
pub const UNIT_SYSTEM: &str = "AU-year-Msun, G=4π²";
