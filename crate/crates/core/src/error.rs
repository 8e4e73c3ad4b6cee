use thiserror::Error;

/// Errors surfaced by the geometry and analysis routines.
#[derive(Debug, Error)]
pub enum GeoError {
    #[error("point ({x}, {y}) is not parabolic (|discriminant| = {delta_abs:.3e})")]
    NotParabolic { x: f64, y: f64, delta_abs: f64 },

    #[error("metric is degenerate at ({x}, {y}): |discriminant| = {delta_abs:.3e}")]
    DegenerateMetric { x: f64, y: f64, delta_abs: f64 },

    #[error("start state lies outside the metric domain (y = {y})")]
    InvalidStart { y: f64 },

    #[error("parabolic point ({x}, {y}) is not transverse")]
    NotTransverse { x: f64, y: f64 },

    #[error(
        "metric is not normalized at ({x}, {y}): need a > 0, b = c = 0 \
         (got a = {a:.3e}, b = {b:.3e}, c = {c:.3e})"
    )]
    NotNormalized {
        x: f64,
        y: f64,
        a: f64,
        b: f64,
        c: f64,
    },

    #[error("not enough samples for the requested fit: need {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("jet is not on the isotropic surface: |F| = {f_abs:.3e}")]
    NotOnSurface { f_abs: f64 },

    #[error("jet is isotropic (F = 0): the energy level is infinite")]
    IsotropicJet,

    #[error("analysis assumption violated at y = {y}: {what}")]
    AssumptionViolated { y: f64, what: String },

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("bad parameter: {0}")]
    BadParam(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("step size underflow at parameter {t}")]
    StepUnderflow { t: f64 },
}

pub type Result<T> = std::result::Result<T, GeoError>;
