//! Geodesics of two-dimensional pseudo-Riemannian metrics.
//!
//! The crate integrates naturally parametrized geodesics through and around
//! signature-changing (parabolic) sets, shoots the geodesic families that
//! leave parabolic points along admissible directions, lifts the
//! unparametrized flow to the direction bundle, and — for metrics with a
//! translational symmetry — classifies entire geodesic families through the
//! energy first integral: every family member either returns to its launch
//! line, winds onto a horizontal geodesic, or escapes.
//!
//! ```no_run
//! use pseudogeo::{catalog, classify_family, ClassifyOpts, SideSpec};
//!
//! let sphere = catalog::lookup("sphere", &Default::default())?.metric;
//! for class in classify_family(&sphere, 0.0, SideSpec::Both, &ClassifyOpts::default())? {
//!     println!("{} | {} -> {}", class.range, class.endpoint_first, class.endpoint_second);
//! }
//! # Ok::<(), pseudogeo::GeoError>(())
//! ```

pub mod catalog;
pub mod config;
pub mod error;
pub mod expr;
pub mod family;
pub mod flow;
pub mod metric;
pub mod ode;
pub mod projective;
pub mod roots;
pub mod symmetry;

pub use error::{GeoError, Result};
pub use family::{classify_family, ClassifyOpts, Endpoint, FamilyClass, LevelRange, SideSpec};
pub use flow::{
    cusp_exponent, desingularized_field, finite_time_check, integrate_natural,
    shoot_from_parabolic, shoot_from_singular, spray, Branch, FiniteTimeReport, GeodesicPath,
    IntegrateOpts, PhaseState, ShootOpts, Side, SingularFamily, StopReason,
};
pub use metric::{
    christoffel, classify_parabolic, curve_type, signature_at, Christoffel, Coefs, CurveType,
    MetricField, PointClass, SignatureKind, Strip, Symmetry,
};
pub use projective::{
    admissible_directions, commutation_residual, integrate_unparametrized,
    isotropic_invariance_residual, lifted_field, mu_coefficients, AdmissibleSet, Chart, JetPath,
    JetPoint, JetSample, ProjDir,
};
pub use symmetry::{
    detect_launch_kind, discriminant_curve, energy_h, energy_level, h_of_launch,
    horizontal_geodesics, implicit_ode_roots, singular_solution_test, turning_analysis, CaseTag,
    EnergyLevel, LaunchKind, Level, ReturnAnalysis, SingularKind,
};
