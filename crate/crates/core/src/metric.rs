//! Metric coefficients, pointwise algebra and parabolic-point classification.
//!
//! A metric is the quadratic form `a dx^2 + 2b dx dy + c dy^2` on an open
//! strip `omega_lo < y < omega_hi`. Its discriminant `D = ac - b^2` controls
//! the signature: Riemannian where `D > 0`, Lorentzian where `D < 0`, and
//! parabolic (signature-changing) on `D = 0`.

use crate::error::{GeoError, Result};
use crate::projective::ProjDir;
use crate::roots::quadratic_proj_roots;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type CoefFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Central-difference step used when analytic partials are absent.
fn fd_step(coord: f64) -> f64 {
    1e-6 * coord.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    General,
    /// Coefficients depend on `y` only; the energy-integral analysis applies.
    YOnly,
}

/// Open strip in `y`; either bound may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub lo: f64,
    pub hi: f64,
}

impl Strip {
    pub const FULL: Strip = Strip {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Strip {
        assert!(lo < hi, "empty strip");
        Strip { lo, hi }
    }

    pub fn contains(&self, y: f64) -> bool {
        y > self.lo && y < self.hi
    }
}

/// Coefficient values at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Coefs {
    /// Value of the quadratic form on a tangent vector.
    pub fn form(&self, vx: f64, vy: f64) -> f64 {
        self.a * vx * vx + 2.0 * self.b * vx * vy + self.c * vy * vy
    }

    pub fn discriminant(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn scale(&self) -> f64 {
        self.a.abs().max(self.b.abs()).max(self.c.abs())
    }
}

/// First partials of the three coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefDerivs {
    pub ax: f64,
    pub ay: f64,
    pub bx: f64,
    pub by: f64,
    pub cx: f64,
    pub cy: f64,
}

struct PartialFns {
    da: CoefFn, // returns d a / d x; paired with day below
    day: CoefFn,
    db: CoefFn,
    dby: CoefFn,
    dc: CoefFn,
    dcy: CoefFn,
}

/// A two-dimensional metric field with optional analytic partials.
#[derive(Clone)]
pub struct MetricField {
    pub name: String,
    a: CoefFn,
    b: CoefFn,
    c: CoefFn,
    partials: Option<Arc<PartialFns>>,
    pub symmetry: Symmetry,
    pub domain: Strip,
    /// Ordinates where the coefficients are discontinuous or blow up
    /// (e.g. the `y = 0` line of Klein- and Grushin-like metrics).
    pub singular_ordinates: Vec<f64>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("name", &self.name)
            .field("symmetry", &self.symmetry)
            .field("domain", &self.domain)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl MetricField {
    pub fn new(name: impl Into<String>, a: CoefFn, b: CoefFn, c: CoefFn) -> MetricField {
        MetricField {
            name: name.into(),
            a,
            b,
            c,
            partials: None,
            symmetry: Symmetry::General,
            domain: Strip::FULL,
            singular_ordinates: Vec::new(),
        }
    }

    pub fn with_symmetry(mut self, s: Symmetry) -> MetricField {
        self.symmetry = s;
        self
    }

    pub fn with_domain(mut self, d: Strip) -> MetricField {
        self.domain = d;
        self
    }

    pub fn with_singular_ordinates(mut self, ys: Vec<f64>) -> MetricField {
        self.singular_ordinates = ys;
        self
    }

    /// Attach analytic partials, in the order
    /// `(a_x, a_y, b_x, b_y, c_x, c_y)`.
    pub fn with_partials(
        mut self,
        ax: CoefFn,
        ay: CoefFn,
        bx: CoefFn,
        by: CoefFn,
        cx: CoefFn,
        cy: CoefFn,
    ) -> MetricField {
        self.partials = Some(Arc::new(PartialFns {
            da: ax,
            day: ay,
            db: bx,
            dby: by,
            dc: cx,
            dcy: cy,
        }));
        self
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn a(&self, x: f64, y: f64) -> f64 {
        (self.a)(x, y)
    }

    pub fn b(&self, x: f64, y: f64) -> f64 {
        (self.b)(x, y)
    }

    pub fn c(&self, x: f64, y: f64) -> f64 {
        (self.c)(x, y)
    }

    pub fn coefs(&self, x: f64, y: f64) -> Coefs {
        Coefs {
            a: (self.a)(x, y),
            b: (self.b)(x, y),
            c: (self.c)(x, y),
        }
    }

    /// First partials, analytic when supplied, central differences otherwise.
    pub fn derivs(&self, x: f64, y: f64) -> CoefDerivs {
        if let Some(p) = &self.partials {
            return CoefDerivs {
                ax: (p.da)(x, y),
                ay: (p.day)(x, y),
                bx: (p.db)(x, y),
                by: (p.dby)(x, y),
                cx: (p.dc)(x, y),
                cy: (p.dcy)(x, y),
            };
        }
        self.fd_derivs(x, y)
    }

    /// Central-difference partials, also used as the independent check
    /// against analytic ones.
    pub fn fd_derivs(&self, x: f64, y: f64) -> CoefDerivs {
        let hx = fd_step(x);
        let hy = fd_step(y);
        let d = |f: &CoefFn, dx: f64, dy: f64| {
            (f(x + dx, y + dy) - f(x - dx, y - dy)) / (2.0 * dx.max(dy))
        };
        CoefDerivs {
            ax: d(&self.a, hx, 0.0),
            ay: d(&self.a, 0.0, hy),
            bx: d(&self.b, hx, 0.0),
            by: d(&self.b, 0.0, hy),
            cx: d(&self.c, hx, 0.0),
            cy: d(&self.c, 0.0, hy),
        }
    }

    /// Discriminant `D = ac - b^2`.
    pub fn discriminant(&self, x: f64, y: f64) -> f64 {
        self.coefs(x, y).discriminant()
    }

    /// Gradient of the discriminant, from the coefficient partials.
    pub fn discriminant_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let k = self.coefs(x, y);
        let d = self.derivs(x, y);
        (
            d.ax * k.c + k.a * d.cx - 2.0 * k.b * d.bx,
            d.ay * k.c + k.a * d.cy - 2.0 * k.b * d.by,
        )
    }

    /// Tolerance below which the discriminant counts as zero. Scaled by the
    /// product magnitude `|a||c| + b^2` (the natural size of the terms that
    /// cancel), with a floor absorbing the absolute evaluation noise of the
    /// coefficients themselves.
    pub fn eps_delta(&self, x: f64, y: f64) -> f64 {
        let k = self.coefs(x, y);
        let product = k.a.abs() * k.c.abs() + k.b * k.b;
        1e-10 * product + 1e-13 * k.scale().max(1e-30)
    }

    pub fn in_domain(&self, y: f64) -> bool {
        self.domain.contains(y)
    }

    /// Coefficient accessors along the symmetry axis of a y-only metric.
    pub fn a_of(&self, y: f64) -> f64 {
        (self.a)(0.0, y)
    }

    pub fn b_of(&self, y: f64) -> f64 {
        (self.b)(0.0, y)
    }

    pub fn c_of(&self, y: f64) -> f64 {
        (self.c)(0.0, y)
    }

    /// `a'(y)` for y-only metrics.
    pub fn a_prime(&self, y: f64) -> f64 {
        self.derivs(0.0, y).ay
    }

    /// `c'(y)` for y-only metrics.
    pub fn c_prime(&self, y: f64) -> f64 {
        self.derivs(0.0, y).cy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureKind {
    Riemannian,
    Lorentzian,
    Parabolic,
}

/// Pointwise classification: signature kind, isotropic directions and, for
/// parabolic points, the transversality data.
#[derive(Debug, Clone)]
pub struct PointClass {
    pub kind: SignatureKind,
    /// Set when `|D|` is within a factor 10 of the detection threshold, so
    /// callers can audit borderline classifications.
    pub marginal: bool,
    pub transverse: Option<bool>,
    pub isotropic_dirs: Vec<ProjDir>,
    /// Raw transversality quantities `(|grad D|, |b D_x - a D_y|)`.
    pub transversality: Option<(f64, f64)>,
}

/// Classify the signature at a point and list its isotropic directions
/// (real projective roots of `F(p) = a + 2bp + cp^2`).
pub fn signature_at(m: &MetricField, x: f64, y: f64) -> PointClass {
    let k = m.coefs(x, y);
    let delta = k.discriminant();
    let eps = m.eps_delta(x, y);
    let kind = if delta.abs() <= eps {
        SignatureKind::Parabolic
    } else if delta > 0.0 {
        SignatureKind::Riemannian
    } else {
        SignatureKind::Lorentzian
    };
    let marginal = delta.abs() > eps * 0.1 && delta.abs() < eps * 10.0;
    // Roots of c p^2 + 2b p + a = 0, projectively (p = infinity when c = 0).
    let isotropic_dirs = match kind {
        SignatureKind::Riemannian => Vec::new(),
        _ => {
            let mut dirs: Vec<ProjDir> = quadratic_proj_roots(k.c, 2.0 * k.b, k.a, k.scale())
                .into_iter()
                .map(|(d, _)| d)
                .collect();
            dirs.dedup_by(|a, b| ProjDir::dist(*a, *b) < 1e-12);
            dirs
        }
    };
    PointClass {
        kind,
        marginal,
        transverse: None,
        isotropic_dirs,
        transversality: None,
    }
}

/// Classify a parabolic point, adding the transversality verdict.
///
/// Transverse means: the coefficients do not vanish simultaneously, the
/// discriminant has a nonzero gradient, and `b D_x - a D_y != 0` (the unique
/// isotropic direction crosses the degeneracy curve).
pub fn classify_parabolic(m: &MetricField, x: f64, y: f64) -> Result<PointClass> {
    let mut class = signature_at(m, x, y);
    if class.kind != SignatureKind::Parabolic {
        return Err(GeoError::NotParabolic {
            x,
            y,
            delta_abs: m.discriminant(x, y).abs(),
        });
    }
    let k = m.coefs(x, y);
    let scale = k.scale().max(1e-30);
    let (gx, gy) = m.discriminant_gradient(x, y);
    let grad_norm = gx.hypot(gy);
    let cross = (k.b * gx - k.a * gy).abs();
    let eps_grad = 1e-10 * scale * scale;
    let not_all_zero = scale > 1e-12;
    let transverse = not_all_zero && grad_norm > eps_grad && cross > eps_grad * scale.max(1.0);
    class.transverse = Some(transverse);
    class.transversality = Some((grad_norm, cross));
    Ok(class)
}

/// Christoffel symbols of the Levi-Civita connection, valid away from the
/// parabolic set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Christoffel {
    pub g1_11: f64,
    pub g1_12: f64,
    pub g1_22: f64,
    pub g2_11: f64,
    pub g2_12: f64,
    pub g2_22: f64,
}

impl Christoffel {
    /// Geodesic accelerations `(xdd, ydd)` for a velocity `(vx, vy)`.
    pub fn accel(&self, vx: f64, vy: f64) -> (f64, f64) {
        (
            -(self.g1_11 * vx * vx + 2.0 * self.g1_12 * vx * vy + self.g1_22 * vy * vy),
            -(self.g2_11 * vx * vx + 2.0 * self.g2_12 * vx * vy + self.g2_22 * vy * vy),
        )
    }
}

pub fn christoffel(m: &MetricField, x: f64, y: f64) -> Result<Christoffel> {
    let k = m.coefs(x, y);
    let delta = k.discriminant();
    if delta.abs() <= m.eps_delta(x, y) {
        return Err(GeoError::DegenerateMetric {
            x,
            y,
            delta_abs: delta.abs(),
        });
    }
    let d = m.derivs(x, y);
    let inv = 1.0 / (2.0 * delta);
    Ok(Christoffel {
        g1_11: (k.c * d.ax + k.b * (d.ay - 2.0 * d.bx)) * inv,
        g1_12: (k.c * d.ay - k.b * d.cx) * inv,
        g1_22: -(k.c * (d.cx - 2.0 * d.by) + k.b * d.cy) * inv,
        g2_11: -(k.a * (d.ay - 2.0 * d.bx) + d.ax * k.b) * inv,
        g2_12: (k.a * d.cx - k.b * d.ay) * inv,
        g2_22: (k.a * d.cy + k.b * (d.cx - 2.0 * d.by)) * inv,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveType {
    Timelike,
    Spacelike,
    Isotropic,
    Mixed,
}

/// Sign of the quadratic form sampled along a path of `(x, y, vx, vy)`
/// states. Isotropic when `|L|` stays within `1e-8 * |a| * speed^2`, mixed
/// only if the sign changes.
pub fn curve_type<'a, I>(m: &MetricField, states: I) -> CurveType
where
    I: IntoIterator<Item = &'a (f64, f64, f64, f64)>,
{
    let mut saw_pos = false;
    let mut saw_neg = false;
    let mut all_iso = true;
    let mut any = false;
    for &(x, y, vx, vy) in states {
        any = true;
        let k = m.coefs(x, y);
        let l = k.form(vx, vy);
        let speed2 = vx * vx + vy * vy;
        let eps = 1e-8 * k.a.abs().max(k.scale()) * speed2.max(1e-30);
        if l.abs() > eps {
            all_iso = false;
            if l > 0.0 {
                saw_pos = true;
            } else {
                saw_neg = true;
            }
        }
    }
    if !any || all_iso {
        CurveType::Isotropic
    } else if saw_pos && saw_neg {
        CurveType::Mixed
    } else if saw_pos {
        CurveType::Timelike
    } else {
        CurveType::Spacelike
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn flat() -> MetricField {
        catalog::lookup("flat", &Default::default()).unwrap().metric
    }

    fn sphere() -> MetricField {
        catalog::lookup("sphere", &Default::default())
            .unwrap()
            .metric
    }

    fn klein() -> MetricField {
        catalog::lookup("klein", &Default::default())
            .unwrap()
            .metric
    }

    #[test]
    fn discriminant_examples() {
        let m = flat();
        assert_eq!(m.discriminant(0.3, -1.7), 1.0);

        // sphere on the northern parabolic parallel
        let s = sphere();
        assert_eq!(s.discriminant(0.0, 0.0), 0.0);

        // torus rho = 2 at y = pi/4: -(2 + cos(pi/4))^2 * cos(pi/2) = 0
        let mut params = std::collections::BTreeMap::new();
        params.insert("rho".to_string(), 2.0);
        let t = catalog::lookup("torus", &params).unwrap().metric;
        assert!(t.discriminant(0.0, FRAC_PI_4).abs() < 1e-15);
        // direct-substitution oracle away from the parallel
        let y: f64 = 0.3;
        let want = -(2.0 + y.cos()).powi(2) * (2.0 * y).cos();
        assert_relative_eq!(t.discriminant(1.0, y), want, max_relative = 1e-14);
    }

    #[test]
    fn signature_examples() {
        let k = signature_at(&klein(), 0.0, 1.0);
        assert_eq!(k.kind, SignatureKind::Riemannian);
        assert!(k.isotropic_dirs.is_empty());

        // sphere equator region: (1+1) - sin(pi/2) p^2 = 0 => p = +-sqrt(2)
        let s = signature_at(&sphere(), 0.0, FRAC_PI_2);
        assert_eq!(s.kind, SignatureKind::Lorentzian);
        let mut ps: Vec<f64> = s.isotropic_dirs.iter().map(|d| d.p()).collect();
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(ps.len(), 2);
        assert_relative_eq!(ps[0], -(2.0f64).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(ps[1], (2.0f64).sqrt(), max_relative = 1e-12);

        // sphere on C_N: parabolic with the single direction p = infinity
        let p = signature_at(&sphere(), 0.0, 0.0);
        assert_eq!(p.kind, SignatureKind::Parabolic);
        assert_eq!(p.isotropic_dirs.len(), 1);
        assert!(p.isotropic_dirs[0].is_infinite());
    }

    #[test]
    fn parabolic_transversality() {
        // dx^2 + y dy^2 at the origin: D = y, grad D = (0,1), |b Dx - a Dy| = 1
        let m = catalog::lookup("ex21", &Default::default()).unwrap().metric;
        let c = classify_parabolic(&m, 0.0, 0.0).unwrap();
        assert_eq!(c.transverse, Some(true));
        let (grad, cross) = c.transversality.unwrap();
        assert_relative_eq!(grad, 1.0, max_relative = 1e-9);
        assert_relative_eq!(cross, 1.0, max_relative = 1e-9);

        // sphere at (x, 0): D_y(0) = -1, a = 1
        let c = classify_parabolic(&sphere(), 2.0, 0.0).unwrap();
        assert_eq!(c.transverse, Some(true));

        // dx^2 + y^2 dy^2 at the origin: grad D = 0, not transverse
        let m = MetricField::new(
            "flat-degenerate",
            Arc::new(|_, _| 1.0),
            Arc::new(|_, _| 0.0),
            Arc::new(|_, y: f64| y * y),
        );
        let c = classify_parabolic(&m, 0.0, 0.0).unwrap();
        assert_eq!(c.transverse, Some(false));

        // non-parabolic point rejected
        assert!(matches!(
            classify_parabolic(&sphere(), 0.0, 1.0),
            Err(GeoError::NotParabolic { .. })
        ));
    }

    #[test]
    fn christoffel_examples() {
        let g = christoffel(&flat(), 1.0, 2.0).unwrap();
        assert_eq!(g.accel(3.0, -2.0), (0.0, 0.0));

        // Klein metric at (0, 1), hand oracle for (dx^2+dy^2)/y^2
        let g = christoffel(&klein(), 0.0, 1.0).unwrap();
        assert_relative_eq!(g.g1_12, -1.0, max_relative = 1e-12);
        assert_relative_eq!(g.g2_11, 1.0, max_relative = 1e-12);
        assert_relative_eq!(g.g2_22, -1.0, max_relative = 1e-12);
        assert_relative_eq!(g.g1_11, 0.0, epsilon = 1e-12);
        assert_relative_eq!(g.g1_22, 0.0, epsilon = 1e-12);
        assert_relative_eq!(g.g2_12, 0.0, epsilon = 1e-12);

        // dx^2 - y dy^2 at (0, 1): 2y y'' + y'^2 = 0 fixes G^2_22 = 1/(2y)
        let m = catalog::lookup("ex22", &Default::default()).unwrap().metric;
        let g = christoffel(&m, 0.0, 1.0).unwrap();
        assert_relative_eq!(g.g2_22, 0.5, max_relative = 1e-12);

        assert!(matches!(
            christoffel(&sphere(), 0.0, 0.0),
            Err(GeoError::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn christoffel_matches_quadratic_form_identity() {
        // For random velocities the symbol form must reproduce
        // (cP - bR)/2D and (aR - bP)/2D.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let s = sphere();
        for _ in 0..20 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            let y: f64 = rng.gen_range(0.2..1.2);
            let vx: f64 = rng.gen_range(-2.0..2.0);
            let vy: f64 = rng.gen_range(-2.0..2.0);
            let k = s.coefs(x, y);
            let d = s.derivs(x, y);
            let p = (d.cx - 2.0 * d.by) * vy * vy - 2.0 * d.ay * vx * vy - d.ax * vx * vx;
            let r = (d.ay - 2.0 * d.bx) * vx * vx - 2.0 * d.cx * vx * vy - d.cy * vy * vy;
            let delta = k.discriminant();
            let want = (
                (k.c * p - k.b * r) / (2.0 * delta),
                (k.a * r - k.b * p) / (2.0 * delta),
            );
            let g = christoffel(&s, x, y).unwrap();
            let got = g.accel(vx, vy);
            assert_relative_eq!(got.0, want.0, max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(got.1, want.1, max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn curve_type_examples() {
        let k = klein();
        // horizontal motion in the Riemannian half plane: timelike
        let states = [(0.0, 1.0, 1.0, 0.0), (0.1, 0.99, 1.0, -0.05)];
        assert_eq!(curve_type(&k, states.iter()), CurveType::Timelike);

        // meridian bow in the sphere's Lorentzian strip: spacelike
        let s = sphere();
        let states = [(0.0, 0.4, 0.0, 1.0), (0.0, 0.9, 0.0, 1.0)];
        assert_eq!(curve_type(&s, states.iter()), CurveType::Spacelike);

        // isotropic direction at a Lorentzian point
        let p = (2.0f64).sqrt();
        let states = [(0.0, FRAC_PI_2, 1.0, p)];
        assert_eq!(curve_type(&s, states.iter()), CurveType::Isotropic);

        // sign change across samples
        let states = [(0.0, 0.4, 1.0, 0.0), (0.0, 0.4, 0.0, 1.0)];
        assert_eq!(curve_type(&s, states.iter()), CurveType::Mixed);
        let _ = PI;
    }

    #[test]
    fn metric_values_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<MetricField>();
        assert_send_sync::<PointClass>();
        assert_send_sync::<Christoffel>();
    }

    #[test]
    fn fd_matches_analytic_partials_on_catalog() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for entry in catalog::entries() {
            let m = &entry.metric;
            if !m.has_analytic_partials() {
                continue;
            }
            for _ in 0..100 {
                let x: f64 = rng.gen_range(-2.0..2.0);
                let mut y: f64 = rng.gen_range(-2.0..2.0);
                // keep clear of singular ordinates and domain edges
                if !m.in_domain(y) {
                    y = 0.5 * (m.domain.lo.max(-10.0) + m.domain.hi.min(10.0));
                }
                if m.singular_ordinates.iter().any(|s| (y - s).abs() < 0.2) {
                    y += 0.5;
                }
                let a = m.derivs(x, y);
                let f = m.fd_derivs(x, y);
                for (u, v) in [
                    (a.ax, f.ax),
                    (a.ay, f.ay),
                    (a.bx, f.bx),
                    (a.by, f.by),
                    (a.cx, f.cx),
                    (a.cy, f.cy),
                ] {
                    let scale = u.abs().max(v.abs()).max(1.0);
                    assert!(
                        (u - v).abs() <= 1e-6 * scale,
                        "{}: partial mismatch at ({x}, {y}): {u} vs {v}",
                        entry.name
                    );
                }
            }
        }
    }
}
