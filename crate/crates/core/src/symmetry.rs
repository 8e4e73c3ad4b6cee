//! Global analysis of geodesics in metrics whose coefficients depend on `y`
//! only.
//!
//! The translational symmetry gives the unparametrized geodesic equation a
//! first integral `H(y, p) = (a + bp)/sqrt(a + 2bp + cp^2)`, so every
//! geodesic solves the implicit quadratic
//! `(b^2 - h^2 c) p^2 + 2b(a - h^2) p + a(a - h^2) = 0` for a constant
//! level `h^2` (signed: negative on spacelike geodesics, infinite on
//! isotropic ones). Horizontal tangencies happen on the discriminant curve
//! `a(y) = h^2`, and the whole qualitative behavior of a geodesic family is
//! decided by where `a` meets the level and whether `a'` vanishes there:
//! the geodesic either turns back, tends asymptotically to a horizontal
//! geodesic, or escapes through the window boundary.

use crate::error::{GeoError, Result};
use crate::flow::Side;
use crate::metric::{CurveType, MetricField};
use crate::projective::ProjDir;
use crate::roots::quadratic_proj_roots;
use serde::{Deserialize, Serialize};

/// Signed energy level; `Infinite` is the isotropic level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Level {
    Finite(f64),
    Infinite,
}

impl Level {
    pub fn finite(self) -> Option<f64> {
        match self {
            Level::Finite(v) => Some(v),
            Level::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Level::Infinite)
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Level::Finite(v) => write!(f, "{v}"),
            Level::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLevel {
    pub h2: Level,
    pub type_tag: CurveType,
}

impl EnergyLevel {
    /// Tag from the sign convention: positive levels are timelike, negative
    /// spacelike, infinite isotropic. Zero defaults to timelike; use
    /// [`EnergyLevel::with_tag`] where the region decides.
    pub fn new(h2: Level) -> EnergyLevel {
        let type_tag = match h2 {
            Level::Infinite => CurveType::Isotropic,
            Level::Finite(v) if v < 0.0 => CurveType::Spacelike,
            Level::Finite(_) => CurveType::Timelike,
        };
        EnergyLevel { h2, type_tag }
    }

    pub fn with_tag(h2: Level, type_tag: CurveType) -> EnergyLevel {
        EnergyLevel { h2, type_tag }
    }
}

/// The energy integral `H = (a + bp)/sqrt(F)` at `(y, p)`; defined for
/// `F > 0`. Isotropic jets signal an infinite level.
pub fn energy_h(m: &MetricField, y: f64, p: f64) -> Result<f64> {
    let k = m.coefs(0.0, y);
    let f = k.a + 2.0 * k.b * p + k.c * p * p;
    if f.abs() <= 1e-14 * k.scale().max(1.0) * (1.0 + p * p) {
        return Err(GeoError::IsotropicJet);
    }
    if f < 0.0 {
        return Err(GeoError::BadParam(format!(
            "F = {f} < 0 at y = {y}: the level is negative, use energy_level"
        )));
    }
    Ok((k.a + k.b * p) / f.sqrt())
}

/// Signed level `h^2 = (a + bp)^2 / F` of a direction at ordinate `y`;
/// total: isotropic directions map to the infinite level.
pub fn energy_level(m: &MetricField, y: f64, dir: ProjDir) -> EnergyLevel {
    let k = m.coefs(0.0, y);
    let (num, den) = match dir.chart {
        crate::projective::Chart::Affine => {
            let p = dir.value;
            (k.a + k.b * p, k.a + 2.0 * k.b * p + k.c * p * p)
        }
        crate::projective::Chart::Inverted => {
            let q = dir.value;
            (k.a * q + k.b, k.a * q * q + 2.0 * k.b * q + k.c)
        }
    };
    if den.abs() <= 1e-14 * k.scale().max(1.0) {
        return EnergyLevel::new(Level::Infinite);
    }
    EnergyLevel::new(Level::Finite(num * num / den))
}

/// Direction roots of the level equation at ordinate `y`:
/// `(b^2 - h^2 c) p^2 + 2b(a - h^2) p + a(a - h^2) = 0`, or
/// `c p^2 + 2bp + a = 0` on the isotropic level.
pub fn implicit_ode_roots(m: &MetricField, y: f64, level: &EnergyLevel) -> Vec<(ProjDir, u8)> {
    let k = m.coefs(0.0, y);
    match level.h2 {
        Level::Infinite => quadratic_proj_roots(k.c, 2.0 * k.b, k.a, k.scale()),
        Level::Finite(h2) => {
            let c2 = k.b * k.b - h2 * k.c;
            let c1 = 2.0 * k.b * (k.a - h2);
            let c0 = k.a * (k.a - h2);
            quadratic_proj_roots(c2, c1, c0, k.scale().max(h2.abs()))
        }
    }
}

/// Ordinates in `window` where `a(y) = h2`: sign-change roots refined by
/// bisection, plus tangential touches at critical points of `a`.
pub fn discriminant_curve(m: &MetricField, h2: f64, window: (f64, f64), n_grid: usize) -> Vec<f64> {
    let (lo, hi) = window;
    assert!(lo < hi && lo.is_finite() && hi.is_finite());
    let n = n_grid.max(16);
    let g = |y: f64| m.a_of(y) - h2;
    let mut roots = Vec::new();
    let mut y_prev = lo;
    let mut g_prev = g(y_prev);
    for i in 1..=n {
        let y = lo + (hi - lo) * i as f64 / n as f64;
        let gv = g(y);
        if g_prev == 0.0 {
            roots.push(y_prev);
        } else if g_prev * gv < 0.0 {
            roots.push(bisect(&g, y_prev, y));
        }
        y_prev = y;
        g_prev = gv;
    }
    // tangential touches at critical points of a
    let touch_tol = 1e-9 * h2.abs().max(1.0);
    for (yc, ac) in critical_points(m, lo, hi, n) {
        if (ac - h2).abs() <= touch_tol && !roots.iter().any(|r| (r - yc).abs() < 1e-9) {
            roots.push(yc);
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

fn bisect(g: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut glo = g(lo);
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-12 * (1.0 + lo.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if (glo <= 0.0) == (gm <= 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Critical points of `a` on `[lo, hi]` as `(y, a(y))`, from derivative sign
/// changes on a grid, refined by bisection. A derivative vanishing exactly
/// on a node is its own critical point.
fn critical_points(m: &MetricField, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut push = |yc: f64, m: &MetricField| {
        if !out
            .iter()
            .any(|(y, _)| (y - yc).abs() < 1e-9 * (1.0 + yc.abs()))
        {
            out.push((yc, m.a_of(yc)));
        }
    };
    let ap = |y: f64| m.a_prime(y);
    let mut y_prev = lo;
    let mut d_prev = ap(y_prev);
    for i in 1..=n.max(16) {
        let y = lo + (hi - lo) * i as f64 / n.max(16) as f64;
        let d = ap(y);
        if d == 0.0 {
            push(y, m);
        } else if d_prev * d < 0.0 {
            let yc = bisect(&ap, y_prev, y);
            push(yc, m);
        }
        y_prev = y;
        d_prev = d;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularKind {
    /// `a'(y*) = 0`: the line `y = y*` is a non-isotropic geodesic.
    HorizontalGeodesic,
    /// `a'(y*) != 0`: the line is an envelope of the level's solutions
    /// (Clairaut fold) and not a geodesic.
    EnvelopeNotGeodesic,
}

/// Decide whether the constant line `y = y*` on its own level `h^2 = a(y*)`
/// is a geodesic or a mere envelope.
pub fn singular_solution_test(m: &MetricField, y_star: f64) -> SingularKind {
    let eps = eps_deriv_near(m, y_star);
    if m.a_prime(y_star).abs() <= eps {
        SingularKind::HorizontalGeodesic
    } else {
        SingularKind::EnvelopeNotGeodesic
    }
}

/// Derivative threshold `1e-8 * (scale of a' near y)`.
fn eps_deriv_near(m: &MetricField, y: f64) -> f64 {
    let half = 0.1 * (1.0 + y.abs());
    let mut scale = 0.0f64;
    for i in 0..33 {
        let yy = y - half + 2.0 * half * i as f64 / 32.0;
        let v = m.a_prime(yy);
        if v.is_finite() {
            scale = scale.max(v.abs());
        }
    }
    1e-8 * scale.max(1e-30)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalGeodesic {
    pub y_star: f64,
    pub h2: f64,
    /// Passed the singular-solution test with a nondegenerate coefficient.
    pub confirmed: bool,
}

/// All critical points of `a` in the window, each labelled with its level
/// and checked by [`singular_solution_test`].
pub fn horizontal_geodesics(m: &MetricField, window: (f64, f64)) -> Vec<HorizontalGeodesic> {
    let (lo, hi) = window;
    critical_points(m, lo, hi, 4096)
        .into_iter()
        .map(|(y_star, h2)| {
            let nondegenerate = h2.abs() > 1e-12 && m.discriminant(0.0, y_star).abs() > 1e-12;
            HorizontalGeodesic {
                y_star,
                h2,
                confirmed: nondegenerate
                    && singular_solution_test(m, y_star) == SingularKind::HorizontalGeodesic,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaunchKind {
    Regular,
    Parabolic,
    Klein,
    Grushin,
}

/// Identify what sits on the line `y = y0`: an ordinary point, a parabolic
/// point, or the singular line of a Klein/Grushin-like metric.
pub fn detect_launch_kind(m: &MetricField, y0: f64) -> Result<LaunchKind> {
    let k = m.coefs(0.0, y0);
    let blown = |v: f64| !v.is_finite() || v.abs() > 1e10;
    if blown(k.a) || m.singular_ordinates.iter().any(|s| (s - y0).abs() < 1e-12) {
        // discriminate Klein from Grushin by how c scales toward the line
        let eps = 1e-5 * (1.0 + y0.abs());
        let c1 = m.c_of(y0 + eps);
        let c2 = m.c_of(y0 + 2.0 * eps);
        if !c1.is_finite() || !c2.is_finite() {
            return Err(GeoError::BadParam(format!(
                "cannot classify the singular line at y = {y0}"
            )));
        }
        let ratio = c2 / c1;
        if (ratio - 0.25).abs() < 0.15 {
            return Ok(LaunchKind::Klein);
        }
        if (ratio - 1.0).abs() < 0.5 {
            return Ok(LaunchKind::Grushin);
        }
        return Err(GeoError::BadParam(format!(
            "unrecognized singular-line scaling at y = {y0} (c ratio {ratio})"
        )));
    }
    if k.discriminant().abs() <= m.eps_delta(0.0, y0) {
        Ok(LaunchKind::Parabolic)
    } else {
        Ok(LaunchKind::Regular)
    }
}

/// Effective diagonal coefficients at the launch line: either `b` vanishes,
/// or `b/a` is constant so the shear `x -> x + (b/a) y` removes it exactly;
/// anything else is rejected.
fn launch_coefs(m: &MetricField, y0: f64) -> Result<(f64, f64)> {
    let k = m.coefs(0.0, y0);
    let tol = 1e-10 * k.scale().max(1.0);
    if k.b.abs() <= tol {
        return Ok((k.a, k.c));
    }
    // shear is exact only when b/a is constant
    let lam = k.b / k.a;
    for i in 0..17 {
        let y = y0 + 0.2 * (i as f64 - 8.0) / 8.0 * (1.0 + y0.abs());
        if !m.in_domain(y) {
            continue;
        }
        let kk = m.coefs(0.0, y);
        if kk.a.abs() < 1e-14 || ((kk.b / kk.a) - lam).abs() > 1e-9 * (1.0 + lam.abs()) {
            return Err(GeoError::NotNormalized {
                x: 0.0,
                y: y0,
                a: k.a,
                b: k.b,
                c: k.c,
            });
        }
    }
    Ok((k.a, k.c - k.b * k.b / k.a))
}

/// Launch-constant map: the energy level of the family member indexed by
/// `alpha`, for each launch kind.
///
/// * regular: `h^2 = (alpha a0)^2 / (alpha^2 a0 + c0)` with `alpha = 1/p`
///   at the launch point (`alpha = inf` is the horizontal launch,
///   level `a0`);
/// * parabolic: `h^2 = (alpha a0)^2 / (alpha^2 a0 + c1 Y)` with
///   `c1 = (4/9) c'(y0)` and `Y = +-1` by side;
/// * klein / grushin: `h^2 = 4 alpha^2`.
pub fn h_of_launch(
    m: &MetricField,
    y0: f64,
    alpha: f64,
    side: Side,
    kind: LaunchKind,
) -> Result<EnergyLevel> {
    match kind {
        LaunchKind::Klein | LaunchKind::Grushin => {
            if alpha.is_infinite() {
                return Ok(EnergyLevel::new(Level::Infinite));
            }
            Ok(EnergyLevel::new(Level::Finite(4.0 * alpha * alpha)))
        }
        LaunchKind::Regular => {
            let (a0, c0) = launch_coefs(m, y0)?;
            Ok(rational_level(alpha, a0, c0))
        }
        LaunchKind::Parabolic => {
            let k = m.coefs(0.0, y0);
            let tol = 1e-8 * k.a.abs().max(1.0);
            if !(k.a > 0.0) || k.b.abs() > tol || k.c.abs() > tol {
                return Err(GeoError::NotNormalized {
                    x: 0.0,
                    y: y0,
                    a: k.a,
                    b: k.b,
                    c: k.c,
                });
            }
            let c1 = (4.0 / 9.0) * m.c_prime(y0);
            Ok(rational_level(alpha, k.a, c1 * side.sign()))
        }
    }
}

fn rational_level(alpha: f64, a0: f64, c_eff: f64) -> EnergyLevel {
    if alpha.is_infinite() {
        return EnergyLevel::new(Level::Finite(a0));
    }
    let den = alpha * alpha * a0 + c_eff;
    let num = (alpha * a0) * (alpha * a0);
    if den.abs() <= 1e-14 * num.max(1.0) {
        return EnergyLevel::new(Level::Infinite);
    }
    EnergyLevel::new(Level::Finite(num / den))
}

/// Inverse of [`h_of_launch`]: a representative `alpha >= 0` realizing the
/// level on the given side, when one exists.
pub fn alpha_for_level(
    m: &MetricField,
    y0: f64,
    level: &Level,
    side: Side,
    kind: LaunchKind,
) -> Option<f64> {
    let c_eff = match kind {
        LaunchKind::Klein | LaunchKind::Grushin => {
            return match level {
                Level::Infinite => None,
                Level::Finite(h2) if *h2 >= 0.0 => Some(h2.sqrt() / 2.0),
                _ => None,
            }
        }
        LaunchKind::Regular => launch_coefs(m, y0).ok()?.1,
        LaunchKind::Parabolic => (4.0 / 9.0) * m.c_prime(y0) * side.sign(),
    };
    let a0 = match kind {
        LaunchKind::Parabolic => m.coefs(0.0, y0).a,
        _ => launch_coefs(m, y0).ok()?.0,
    };
    match level {
        Level::Infinite => {
            let v = -c_eff / a0;
            if v > 0.0 {
                Some(v.sqrt())
            } else {
                None
            }
        }
        Level::Finite(h2) => {
            if *h2 == 0.0 {
                return Some(0.0);
            }
            let v = c_eff * h2 / (a0 * (a0 - h2));
            if v >= 0.0 && v.is_finite() {
                Some(v.sqrt())
            } else {
                None
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseTag {
    Returns,
    Asymptote,
    Escapes,
}

/// Turning data of one energy level at a launch ordinate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReturnAnalysis {
    /// First solution of `a(y) = h^2` above the launch line, or the window
    /// top when none.
    pub y_hat_plus: f64,
    pub y_hat_minus: f64,
    pub case_plus: CaseTag,
    pub case_minus: CaseTag,
    /// The asymptote ordinate when either case is `Asymptote`.
    pub horizontal_geodesic: Option<f64>,
    /// `|a'|` at the turning ordinates, for auditing threshold sensitivity.
    pub aprime_at_plus: f64,
    pub aprime_at_minus: f64,
}

/// Precomputed one-sided window data: a log-spaced sample of `a` between
/// the launch line and the nearest degeneracy.
pub(crate) struct SideScan {
    pub dir: f64,
    pub y0: f64,
    /// Window edge away from the launch line (may be infinite).
    pub omega: f64,
    /// Offsets from y0 (positive, increasing) and `a` there.
    offsets: Vec<f64>,
    a_vals: Vec<f64>,
    pub crits: Vec<(f64, f64)>,
    pub a_min: f64,
    pub a_max: f64,
}

impl SideScan {
    fn y_at(&self, i: usize) -> f64 {
        self.y0 + self.dir * self.offsets[i]
    }

    /// Edge level: `a` at the sample nearest omega.
    pub fn edge_level(&self) -> f64 {
        *self.a_vals.last().unwrap()
    }
}

const SCAN_NODES: usize = 8192;
const WINDOW_PROBE_NODES: usize = 2048;
const FAR_LIMIT: f64 = 1e6;

/// Locate the nearest ordinate in direction `dir` where the metric stops
/// being usable for the symmetry analysis: a degeneracy `D = 0`, a zero of
/// `a`, a listed singular ordinate, or the domain edge.
pub(crate) fn next_bad_ordinate(m: &MetricField, y0: f64, dir: f64) -> f64 {
    let cap = if dir > 0.0 { m.domain.hi } else { m.domain.lo };
    let mut nearest_singular = cap;
    for s in &m.singular_ordinates {
        if (s - y0) * dir > 1e-12
            && ((s - y0).abs() < (nearest_singular - y0).abs() || !nearest_singular.is_finite())
        {
            nearest_singular = *s;
        }
    }
    let hard_cap = if nearest_singular.is_finite() && (nearest_singular - y0) * dir > 0.0 {
        nearest_singular
    } else {
        cap
    };

    let bad = |y: f64| -> bool {
        let k = m.coefs(0.0, y);
        if !k.a.is_finite() || !k.b.is_finite() || !k.c.is_finite() {
            return true;
        }
        let eps = m.eps_delta(0.0, y);
        k.discriminant().abs() <= eps * 10.0 || k.a.abs() <= 1e-10 * (1.0 + k.scale())
    };

    let start_off = 1e-7 * (1.0 + y0.abs());
    let mut seg_start = start_off;
    let mut span = 0.5f64.max(0.25 * (1.0 + y0.abs()));
    loop {
        let seg_end = (seg_start + span).min((hard_cap - y0) * dir - start_off * 1e-3);
        if seg_end <= seg_start {
            return hard_cap;
        }
        let mut prev_off = seg_start;
        let mut prev_delta = m.discriminant(0.0, y0 + dir * prev_off);
        for i in 0..=WINDOW_PROBE_NODES {
            let off = seg_start + (seg_end - seg_start) * i as f64 / WINDOW_PROBE_NODES as f64;
            let y = y0 + dir * off;
            let delta = m.discriminant(0.0, y);
            if bad(y) || prev_delta * delta < 0.0 {
                // refine the boundary between the last good offset and here
                let g = |o: f64| {
                    let yy = y0 + dir * o;
                    if bad(yy) || m.discriminant(0.0, yy) * prev_delta.signum() < 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                };
                let o = bisect(&g, prev_off, off);
                return refine_to_degeneracy(m, y0 + dir * o);
            }
            prev_off = off;
            prev_delta = delta;
        }
        if (y0 + dir * seg_end - hard_cap).abs() <= start_off {
            return hard_cap;
        }
        seg_start = seg_end;
        span *= 4.0;
        if seg_start > FAR_LIMIT {
            return if hard_cap.is_finite() {
                hard_cap
            } else {
                dir * f64::INFINITY
            };
        }
    }
}

/// Sharpen a bad-point estimate to the actual zero of the discriminant when
/// one crosses nearby; tangential degeneracies keep the estimate.
fn refine_to_degeneracy(m: &MetricField, y_est: f64) -> f64 {
    let w = 1e-5 * (1.0 + y_est.abs());
    let g = |y: f64| m.discriminant(0.0, y);
    let (glo, ghi) = (g(y_est - w), g(y_est + w));
    if !glo.is_finite() || !ghi.is_finite() || glo * ghi >= 0.0 {
        return y_est;
    }
    bisect(&g, y_est - w, y_est + w)
}

pub(crate) fn build_side_scan(m: &MetricField, y0: f64, side: Side) -> SideScan {
    let dir = side.sign();
    let omega = next_bad_ordinate(m, y0, dir);
    let o_min = 1e-12 * (1.0 + y0.abs());
    let o_max = if omega.is_finite() {
        ((omega - y0) * dir - o_min * 1e-3).max(o_min * 2.0)
    } else {
        FAR_LIMIT
    };
    let ratio = (o_max / o_min).max(1.0 + 1e-9);
    let mut offsets = Vec::with_capacity(SCAN_NODES + 1);
    let mut a_vals = Vec::with_capacity(SCAN_NODES + 1);
    for i in 0..=SCAN_NODES {
        let o = o_min * ratio.powf(i as f64 / SCAN_NODES as f64);
        offsets.push(o);
        a_vals.push(m.a_of(y0 + dir * o));
    }
    let mut a_min = f64::INFINITY;
    let mut a_max = f64::NEG_INFINITY;
    for v in &a_vals {
        if v.is_finite() {
            a_min = a_min.min(*v);
            a_max = a_max.max(*v);
        }
    }
    // critical points of a inside the window
    let mut crits: Vec<(f64, f64)> = Vec::new();
    let mut prev_d = m.a_prime(y0 + dir * offsets[0]);
    for i in 1..offsets.len() {
        let y = y0 + dir * offsets[i];
        let d = m.a_prime(y);
        if d == 0.0 {
            if !crits
                .iter()
                .any(|(yc, _)| (yc - y).abs() < 1e-9 * (1.0 + y.abs()))
            {
                crits.push((y, m.a_of(y)));
            }
        } else if prev_d * d < 0.0 {
            let ap = |yy: f64| m.a_prime(yy);
            let (ylo, yhi) = if dir > 0.0 {
                (y0 + dir * offsets[i - 1], y)
            } else {
                (y, y0 + dir * offsets[i - 1])
            };
            let yc = bisect(&ap, ylo, yhi);
            if !crits
                .iter()
                .any(|(yp, _)| (yp - yc).abs() < 1e-9 * (1.0 + yc.abs()))
            {
                crits.push((yc, m.a_of(yc)));
            }
        }
        prev_d = d;
    }
    SideScan {
        dir,
        y0,
        omega,
        offsets,
        a_vals,
        crits,
        a_min,
        a_max,
    }
}

/// Assumption check for one side window: `a` does not vanish and the metric
/// stays nondegenerate strictly inside. The window edges are exempt — the
/// launch line and the far boundary are allowed to be degenerate.
pub(crate) fn validate_side(m: &MetricField, scan: &SideScan) -> Result<()> {
    let o_max = *scan.offsets.last().unwrap();
    for i in 1..64 {
        let frac = i as f64 / 64.0;
        let y = scan.y0 + scan.dir * o_max * (0.02 + 0.96 * frac);
        let k = m.coefs(0.0, y);
        if !k.a.is_finite() || k.a.abs() <= 1e-12 * (1.0 + k.scale()) {
            return Err(GeoError::AssumptionViolated {
                y,
                what: format!("a(y) = {} vanishes or blows up in the window", k.a),
            });
        }
        if k.discriminant().abs() <= m.eps_delta(0.0, y) {
            return Err(GeoError::AssumptionViolated {
                y,
                what: "metric degenerates strictly inside the window".into(),
            });
        }
    }
    Ok(())
}

/// Tolerance under which a level counts as touching a critical value of `a`.
fn touch_tol(h2: f64) -> f64 {
    1e-10 * h2.abs().max(1.0)
}

/// First ordinate past the launch line where `a` meets the level, on one
/// side. Returns `None` when the level is never met (escape).
fn first_root(m: &MetricField, scan: &SideScan, h2: f64) -> Option<f64> {
    // tangential touches first (they may sit before any sign change)
    let mut best: Option<f64> = None;
    let tol = touch_tol(h2);
    for (yc, ac) in &scan.crits {
        if (ac - h2).abs() <= tol {
            best = Some(match best {
                Some(b) if (b - scan.y0).abs() < (yc - scan.y0).abs() => b,
                _ => *yc,
            });
        }
    }
    // a root this close to the far window edge counts as arrival at the
    // edge itself, not as an interior turning point
    let edge_slack = 1e-9 * (1.0 + (scan.omega - scan.y0).abs());
    let keep_nearest = |best: Option<f64>, root: f64| -> Option<f64> {
        if scan.omega.is_finite() && (root - scan.omega).abs() <= edge_slack {
            return best;
        }
        Some(match best {
            Some(b) if (b - scan.y0).abs() <= (root - scan.y0).abs() => b,
            _ => root,
        })
    };

    // sign-change roots over the stored grid; a level hitting a node value
    // exactly is its own root
    let g = |y: f64| m.a_of(y) - h2;
    let mut prev = scan.a_vals[0] - h2;
    for i in 1..scan.a_vals.len() {
        let cur = scan.a_vals[i] - h2;
        if cur == 0.0 {
            best = keep_nearest(best, scan.y_at(i));
            break;
        }
        if prev * cur < 0.0 {
            let (ya, yb) = (scan.y_at(i - 1), scan.y_at(i));
            let (lo, hi) = if scan.dir > 0.0 { (ya, yb) } else { (yb, ya) };
            best = keep_nearest(best, bisect(&g, lo, hi));
            break;
        }
        prev = cur;
    }

    // a narrow excursion of a across the level near an interior critical
    // point can slip between grid nodes; bracket the milestones
    // start -> crit_1 -> crit_2 -> ... explicitly
    let mut milestones: Vec<(f64, f64)> = Vec::with_capacity(scan.crits.len() + 1);
    milestones.push((scan.y_at(0), scan.a_vals[0] - h2));
    let mut crits_sorted: Vec<&(f64, f64)> = scan.crits.iter().collect();
    crits_sorted.sort_by(|a, b| {
        (a.0 - scan.y0)
            .abs()
            .partial_cmp(&(b.0 - scan.y0).abs())
            .unwrap()
    });
    for (yc, ac) in crits_sorted {
        milestones.push((*yc, ac - h2));
    }
    for w in milestones.windows(2) {
        let ((ya, ga), (yb, gb)) = (w[0], w[1]);
        if ga * gb < 0.0 {
            let (lo, hi) = if ya < yb { (ya, yb) } else { (yb, ya) };
            best = keep_nearest(best, bisect(&g, lo, hi));
            break;
        }
    }

    if best.is_some() {
        return best;
    }
    chase_root(m, scan, h2)
}

/// Root search beyond the sampled grid: toward a blowing-up launch line
/// (offsets below the first node) or along a monotone tail of an infinite
/// window (offsets beyond the last node).
fn chase_root(m: &MetricField, scan: &SideScan, h2: f64) -> Option<f64> {
    let n = scan.a_vals.len();
    let g = |y: f64| m.a_of(y) - h2;

    // inward: only relevant when a blows up at the launch line
    let a_first = scan.a_vals[0];
    if a_first.is_finite() && a_first.abs() > 1e8 && h2.abs() > 0.5 * a_first.abs() {
        let mut o_hi = scan.offsets[0];
        let mut g_hi = a_first - h2;
        for _ in 0..400 {
            let o_lo = o_hi * 0.5;
            if o_lo < 1e-280 {
                break;
            }
            let g_lo = g(scan.y0 + scan.dir * o_lo);
            if !g_lo.is_finite() {
                break;
            }
            if g_lo * g_hi < 0.0 {
                let (ya, yb) = (scan.y0 + scan.dir * o_lo, scan.y0 + scan.dir * o_hi);
                let (lo, hi) = if scan.dir > 0.0 { (ya, yb) } else { (yb, ya) };
                return Some(bisect(&g, lo, hi));
            }
            o_hi = o_lo;
            g_hi = g_lo;
        }
    }

    // outward: infinite window with the tail heading monotonically toward
    // the level
    if !scan.omega.is_finite() && n >= 16 {
        let a_last = scan.a_vals[n - 1];
        let a_prev = scan.a_vals[n - 9];
        let slope = a_last - a_prev;
        let toward = (h2 - a_last) * slope > 0.0;
        if toward {
            let mut o_lo = scan.offsets[n - 1];
            let mut g_lo = a_last - h2;
            for _ in 0..80 {
                let o_hi = o_lo * 2.0;
                if o_hi > 1e12 {
                    break;
                }
                let g_hi = g(scan.y0 + scan.dir * o_hi);
                if !g_hi.is_finite() {
                    break;
                }
                if g_lo * g_hi < 0.0 {
                    let (ya, yb) = (scan.y0 + scan.dir * o_lo, scan.y0 + scan.dir * o_hi);
                    let (lo, hi) = if scan.dir > 0.0 { (ya, yb) } else { (yb, ya) };
                    return Some(bisect(&g, lo, hi));
                }
                o_lo = o_hi;
                g_lo = g_hi;
            }
        }
    }
    None
}

/// One-sided turning verdict for a level.
fn side_case(m: &MetricField, scan: &SideScan, level: &Level) -> (f64, CaseTag, f64) {
    let h2 = match level {
        Level::Infinite => {
            return (scan.omega, CaseTag::Escapes, f64::NAN);
        }
        Level::Finite(v) => *v,
    };
    match first_root(m, scan, h2) {
        None => (scan.omega, CaseTag::Escapes, f64::NAN),
        Some(y_hat) => {
            let ap = m.a_prime(y_hat).abs();
            if ap <= eps_deriv_near(m, y_hat) {
                (y_hat, CaseTag::Asymptote, ap)
            } else {
                (y_hat, CaseTag::Returns, ap)
            }
        }
    }
}

/// Turning analysis of one level of the family launched at `y0`.
///
/// `side` selects which half-plane the caller cares about; both sides are
/// always computed (the far side is cheap and the joint verdict is what
/// regular launches need).
pub fn turning_analysis(
    m: &MetricField,
    y0: f64,
    level: &EnergyLevel,
    _side: Side,
) -> Result<ReturnAnalysis> {
    let scan_p = build_side_scan(m, y0, Side::Plus);
    let scan_m = build_side_scan(m, y0, Side::Minus);
    validate_side(m, &scan_p)?;
    validate_side(m, &scan_m)?;
    Ok(turning_core(m, &scan_p, &scan_m, &level.h2))
}

pub(crate) fn turning_core(
    m: &MetricField,
    scan_plus: &SideScan,
    scan_minus: &SideScan,
    level: &Level,
) -> ReturnAnalysis {
    let (yp, cp, app) = side_case(m, scan_plus, level);
    let (ym, cm, apm) = side_case(m, scan_minus, level);
    let horizontal = if cp == CaseTag::Asymptote {
        Some(yp)
    } else if cm == CaseTag::Asymptote {
        Some(ym)
    } else {
        None
    };
    ReturnAnalysis {
        y_hat_plus: yp,
        y_hat_minus: ym,
        case_plus: cp,
        case_minus: cm,
        horizontal_geodesic: horizontal,
        aprime_at_plus: app,
        aprime_at_minus: apm,
    }
}
