//! Numerical machinery for the half-Laplacian Nirenberg problem on S³:
//! spectral analysis on the sphere, the bubble family and its interactions,
//! Morse and degree analysis of a prescribed curvature, the reduced
//! blow-up model, a subcritical Newton/continuation solver, and Pohozaev
//! flux checks.

pub mod asymptotics;
pub mod basis;
pub mod branch;
pub mod bubbles;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod morse;
pub mod pohozaev;
pub mod polynomial;
pub mod quadrature;
pub mod reduced;
pub mod solver;
pub mod spectrum;
pub mod transform;
pub mod zonal;

pub use asymptotics::{validate_asymptotics, AsymptoticsReport, IdentityId, IdentitySweep};
pub use branch::{continuation, diagnostics, BlowupDiagnostics, Branch, BranchStop, ContinuationOptions};
pub use bubbles::BubbleParams;
pub use morse::{find_critical_points, index_of_k, CriticalPointRecord, CriticalPointSet, DegreeReport, IndexOptions};
pub use pohozaev::{flux_limit_check, hemisphere_flux, HalfBallProfile};
pub use reduced::{decompose_solution, decompose_zonal, solve_f_critical, BlowupPrediction, ReducedConfig};
pub use solver::{axisym_solve, newton_solve, residual, Solution, SolverOptions, SolverState};
pub use error::{Error, Result};
pub use geometry::{
    conformal_factor, geodesic_distance, sphere_to_stereographic, stereographic_to_sphere,
    HypersphericalCoords, Rotation4, SpherePoint,
};
pub use polynomial::{sphere_derivatives, AmbientPolynomial, SphereDerivatives};
pub use quadrature::{build_grid, QuadratureGrid};
pub use spectrum::{HarmonicSpectrum, SphericalField};
pub use transform::{forward_transform, inverse_transform, SpectralPlan};
pub use zonal::{zonal_expand, ZonalPlan, ZonalSpectrum};
