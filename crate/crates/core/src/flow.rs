//! Naturally parametrized geodesic flow.
//!
//! Away from the parabolic set the flow is the standard geodesic spray
//! `xdd = (cP - bR)/2D`, `ydd = (aR - bP)/2D`. Inside a thin band
//! `|D| <= delta_switch` the spray stiffens like `1/D`, so integration
//! switches to the polynomial field `(2D vx, 2D vy, cP - bR, aR - bP)` in an
//! auxiliary parameter and recovers natural time from `dt = 2D dsigma`.
//! Geodesic families are shot out of transverse parabolic points from
//! semicubic seeds `x = x0 + alpha tau^3`, `y = y0 +- tau^2`.

use crate::error::{GeoError, Result};
use crate::metric::{classify_parabolic, curve_type, CurveType, MetricField};
use crate::ode::{self, Event, EventDir, OdeOpts, OdeStatus};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl PhaseState {
    pub fn new(t: f64, x: f64, y: f64, vx: f64, vy: f64) -> PhaseState {
        PhaseState { t, x, y, vx, vy }
    }

    pub fn speed2(&self) -> f64 {
        self.vx * self.vx + self.vy * self.vy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ReachedTmax,
    HitDomainBoundary,
    HitParabolicSet,
    StepUnderflow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub samples: Vec<PhaseState>,
    pub stop_reason: StopReason,
    pub type_tag: CurveType,
}

impl GeodesicPath {
    pub fn last(&self) -> &PhaseState {
        self.samples.last().expect("path has samples")
    }

    pub fn first(&self) -> &PhaseState {
        self.samples.first().expect("path has samples")
    }

    /// Quadratic-form values `L = a vx^2 + 2b vx vy + c vy^2` along the path.
    pub fn energy_values(&self, m: &MetricField) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| m.coefs(s.x, s.y).form(s.vx, s.vy))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Half-width in `|D|` of the band where the desingularized field is
    /// integrated instead of the spray.
    pub delta_switch: f64,
    pub max_step: f64,
    pub max_steps: usize,
    pub h0: Option<f64>,
    /// Extra confinement of the path in `y`, intersected with the domain.
    pub window: Option<(f64, f64)>,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        IntegrateOpts {
            rtol: 1e-9,
            atol: 1e-9,
            delta_switch: 1e-4,
            max_step: f64::INFINITY,
            max_steps: 500_000,
            h0: None,
            window: None,
        }
    }
}

/// Caller-supplied event evaluated on phase states (mode-independent).
pub struct PhaseEvent {
    pub label: &'static str,
    pub dir: EventDir,
    pub terminal: bool,
    pub g: Box<dyn Fn(&PhaseState) -> f64 + Send + Sync>,
}

/// Geodesic accelerations away from the parabolic set.
pub fn spray(m: &MetricField, s: &PhaseState) -> Result<(f64, f64)> {
    let k = m.coefs(s.x, s.y);
    let delta = k.discriminant();
    if delta.abs() <= m.eps_delta(s.x, s.y) {
        return Err(GeoError::DegenerateMetric {
            x: s.x,
            y: s.y,
            delta_abs: delta.abs(),
        });
    }
    let (pp, rr) = p_r(m, s.x, s.y, s.vx, s.vy);
    let inv = 1.0 / (2.0 * delta);
    Ok(((k.c * pp - k.b * rr) * inv, (k.a * rr - k.b * pp) * inv))
}

/// The quadratic forms `P` and `R` of the geodesic system.
fn p_r(m: &MetricField, x: f64, y: f64, vx: f64, vy: f64) -> (f64, f64) {
    let d = m.derivs(x, y);
    let p = (d.cx - 2.0 * d.by) * vy * vy - 2.0 * d.ay * vx * vy - d.ax * vx * vx;
    let r = (d.ay - 2.0 * d.bx) * vx * vx - 2.0 * d.cx * vx * vy - d.cy * vy * vy;
    (p, r)
}

/// The polynomial field `(2D vx, 2D vy, cP - bR, aR - bP)`, defined on all
/// of the tangent bundle.
pub fn desingularized_field(m: &MetricField, s: &PhaseState) -> [f64; 4] {
    let k = m.coefs(s.x, s.y);
    let delta = k.discriminant();
    let (pp, rr) = p_r(m, s.x, s.y, s.vx, s.vy);
    [
        2.0 * delta * s.vx,
        2.0 * delta * s.vy,
        k.c * pp - k.b * rr,
        k.a * rr - k.b * pp,
    ]
}

/// Velocity magnitude above which a cusp approach is declared inside the
/// desingularized band.
const V2_BLOWUP: f64 = 1e18;
/// Hysteresis factor between entering and leaving the band.
const BAND_EXIT_FACTOR: f64 = 1.05;
const MAX_SEGMENTS: usize = 256;

/// Keep recorded natural times strictly monotone: when the time coordinate
/// stalls at f64 resolution (the desingularized flow converging toward a
/// cusp), the newest state replaces the previous sample instead of
/// duplicating its timestamp.
fn push_sample(samples: &mut Vec<PhaseState>, dir: f64, s: PhaseState) {
    let n = samples.len();
    if let Some(last) = samples.last_mut() {
        if dir * (s.t - last.t) <= 0.0 {
            if n > 1 {
                *last = s;
            }
            return;
        }
    }
    samples.push(s);
}

pub fn integrate_natural(
    m: &MetricField,
    s0: &PhaseState,
    t_max: f64,
    opts: &IntegrateOpts,
) -> Result<GeodesicPath> {
    integrate_natural_ex(m, s0, t_max, opts, Vec::new()).map(|(p, _)| p)
}

/// Like [`integrate_natural`], additionally reporting precise states of any
/// extra events (used by the turning-point verification machinery).
pub fn integrate_natural_ex(
    m: &MetricField,
    s0: &PhaseState,
    t_max: f64,
    opts: &IntegrateOpts,
    extra: Vec<PhaseEvent>,
) -> Result<(GeodesicPath, Vec<(&'static str, PhaseState)>)> {
    if !m.in_domain(s0.y) {
        return Err(GeoError::InvalidStart { y: s0.y });
    }
    if s0.speed2() == 0.0 || !s0.speed2().is_finite() {
        return Err(GeoError::InvalidStart { y: s0.y });
    }

    let (mut lo, mut hi) = (m.domain.lo, m.domain.hi);
    if let Some((wl, wh)) = opts.window {
        lo = lo.max(wl);
        hi = hi.min(wh);
    }
    let t_end = s0.t + t_max;
    let dir = if t_max >= 0.0 { 1.0 } else { -1.0 };
    let delta_sw = opts.delta_switch;

    let mut samples: Vec<PhaseState> = vec![*s0];
    let mut hits: Vec<(&'static str, PhaseState)> = Vec::new();
    let mut budget = opts.max_steps;
    let mut cur = *s0;
    let mut h0 = opts.h0;

    // overwritten by every exit path; exhausting the segment budget
    // (pathological band thrash) reports as underflow
    let mut stop = StopReason::StepUnderflow;
    'segments: for _seg in 0..MAX_SEGMENTS {
        if (t_end - cur.t) * dir <= 1e-15 * (1.0 + cur.t.abs()) || budget == 0 {
            stop = if budget == 0 {
                StopReason::StepUnderflow
            } else {
                StopReason::ReachedTmax
            };
            break;
        }
        let delta_here = m.discriminant(cur.x, cur.y);
        let in_band = delta_here.abs() <= delta_sw;

        if !in_band {
            // spray mode, independent variable is natural time
            let f = |_t: f64, y: &[f64; 4]| {
                let s = PhaseState::new(0.0, y[0], y[1], y[2], y[3]);
                let k = m.coefs(s.x, s.y);
                let delta = k.discriminant();
                let (pp, rr) = p_r(m, s.x, s.y, s.vx, s.vy);
                let inv = 1.0 / (2.0 * delta);
                [
                    s.vx,
                    s.vy,
                    (k.c * pp - k.b * rr) * inv,
                    (k.a * rr - k.b * pp) * inv,
                ]
            };
            let mut events: Vec<Event<4>> = Vec::new();
            events.push(Event::terminal(
                "band",
                EventDir::Falling,
                |_t, y: &[f64; 4]| m.discriminant(y[0], y[1]).abs() - delta_sw,
            ));
            if hi.is_finite() {
                events.push(Event::terminal(
                    "boundary",
                    EventDir::Rising,
                    move |_t, y: &[f64; 4]| y[1] - hi,
                ));
            }
            if lo.is_finite() {
                events.push(Event::terminal(
                    "boundary",
                    EventDir::Falling,
                    move |_t, y: &[f64; 4]| y[1] - lo,
                ));
            }
            for ys in &m.singular_ordinates {
                let ys = *ys;
                if (ys - cur.y).abs() > 1e-12 {
                    events.push(Event::terminal(
                        "singular",
                        EventDir::Any,
                        move |_t, y: &[f64; 4]| y[1] - ys,
                    ));
                }
            }
            for pe in &extra {
                let g = &pe.g;
                let ev = Event {
                    label: pe.label,
                    dir: pe.dir,
                    terminal: pe.terminal,
                    g: Box::new(move |t: f64, y: &[f64; 4]| {
                        g(&PhaseState::new(t, y[0], y[1], y[2], y[3]))
                    }),
                };
                events.push(ev);
            }

            let sol = ode::integrate(
                f,
                cur.t,
                t_end,
                [cur.x, cur.y, cur.vx, cur.vy],
                &OdeOpts {
                    rtol: opts.rtol,
                    atol: opts.atol,
                    h0,
                    h_max: opts.max_step,
                    max_steps: budget,
                },
                events,
            );
            budget = budget.saturating_sub(sol.steps);
            h0 = None;
            for (t, y) in sol.ts.iter().zip(&sol.ys).skip(1) {
                push_sample(
                    &mut samples,
                    dir,
                    PhaseState::new(*t, y[0], y[1], y[2], y[3]),
                );
            }
            for hit in &sol.hits {
                if extra.iter().any(|pe| pe.label == hit.label) {
                    hits.push((
                        hit.label,
                        PhaseState::new(hit.t, hit.y[0], hit.y[1], hit.y[2], hit.y[3]),
                    ));
                }
            }
            let (t_last, y_last) = sol.last();
            cur = PhaseState::new(t_last, y_last[0], y_last[1], y_last[2], y_last[3]);
            match sol.status {
                OdeStatus::ReachedEnd => {
                    stop = StopReason::ReachedTmax;
                    break 'segments;
                }
                OdeStatus::Event("band") => continue 'segments,
                OdeStatus::Event("boundary") | OdeStatus::Event("singular") => {
                    stop = StopReason::HitDomainBoundary;
                    break 'segments;
                }
                OdeStatus::Event(_label) => {
                    stop = StopReason::ReachedTmax;
                    break 'segments;
                }
                OdeStatus::StepUnderflow | OdeStatus::MaxSteps => {
                    stop = StopReason::StepUnderflow;
                    break 'segments;
                }
            }
        } else {
            // desingularized band, auxiliary parameter sigma
            let orient = dir * if delta_here >= 0.0 { 1.0 } else { -1.0 };
            let f = move |_s: f64, y: &[f64; 5]| {
                let st = PhaseState::new(0.0, y[0], y[1], y[2], y[3]);
                let v = desingularized_field(m, &st);
                let delta = m.discriminant(y[0], y[1]);
                [
                    orient * v[0],
                    orient * v[1],
                    orient * v[2],
                    orient * v[3],
                    orient * 2.0 * delta,
                ]
            };
            let mut events: Vec<Event<5>> = Vec::new();
            events.push(Event::terminal(
                "exit",
                EventDir::Rising,
                move |_s, y: &[f64; 5]| {
                    m.discriminant(y[0], y[1]).abs() - BAND_EXIT_FACTOR * delta_sw
                },
            ));
            let tdir = if dir > 0.0 {
                EventDir::Rising
            } else {
                EventDir::Falling
            };
            events.push(Event::terminal(
                "t-target",
                tdir,
                move |_s, y: &[f64; 5]| y[4] - t_end,
            ));
            events.push(Event::terminal(
                "vblow",
                EventDir::Rising,
                |_s, y: &[f64; 5]| y[2] * y[2] + y[3] * y[3] - V2_BLOWUP,
            ));
            if hi.is_finite() {
                events.push(Event::terminal(
                    "boundary",
                    EventDir::Rising,
                    move |_s, y: &[f64; 5]| y[1] - hi,
                ));
            }
            if lo.is_finite() {
                events.push(Event::terminal(
                    "boundary",
                    EventDir::Falling,
                    move |_s, y: &[f64; 5]| y[1] - lo,
                ));
            }
            for pe in &extra {
                let g = &pe.g;
                let ev = Event {
                    label: pe.label,
                    dir: pe.dir,
                    terminal: pe.terminal,
                    g: Box::new(move |_s: f64, y: &[f64; 5]| {
                        g(&PhaseState::new(y[4], y[0], y[1], y[2], y[3]))
                    }),
                };
                events.push(ev);
            }

            let sol = ode::integrate(
                f,
                0.0,
                f64::INFINITY,
                [cur.x, cur.y, cur.vx, cur.vy, cur.t],
                &OdeOpts {
                    rtol: opts.rtol,
                    atol: opts.atol,
                    h0,
                    h_max: opts.max_step,
                    max_steps: budget,
                },
                events,
            );
            budget = budget.saturating_sub(sol.steps);
            h0 = None;
            for (_s, y) in sol.ts.iter().zip(&sol.ys).skip(1) {
                push_sample(
                    &mut samples,
                    dir,
                    PhaseState::new(y[4], y[0], y[1], y[2], y[3]),
                );
            }
            for hit in &sol.hits {
                if extra.iter().any(|pe| pe.label == hit.label) {
                    hits.push((
                        hit.label,
                        PhaseState::new(hit.y[4], hit.y[0], hit.y[1], hit.y[2], hit.y[3]),
                    ));
                }
            }
            let (_s_last, y_last) = sol.last();
            cur = PhaseState::new(y_last[4], y_last[0], y_last[1], y_last[2], y_last[3]);
            match sol.status {
                OdeStatus::Event("exit") => continue 'segments,
                OdeStatus::Event("t-target") => {
                    stop = StopReason::ReachedTmax;
                    break 'segments;
                }
                OdeStatus::Event("vblow") => {
                    stop = StopReason::HitParabolicSet;
                    break 'segments;
                }
                OdeStatus::Event("boundary") => {
                    stop = StopReason::HitDomainBoundary;
                    break 'segments;
                }
                OdeStatus::Event(_label) => {
                    stop = StopReason::ReachedTmax;
                    break 'segments;
                }
                OdeStatus::ReachedEnd => {
                    stop = StopReason::ReachedTmax;
                    break 'segments;
                }
                OdeStatus::StepUnderflow | OdeStatus::MaxSteps => {
                    stop = if m.discriminant(cur.x, cur.y).abs() < delta_sw {
                        StopReason::HitParabolicSet
                    } else {
                        StopReason::StepUnderflow
                    };
                    break 'segments;
                }
            }
        }
    }

    let states: Vec<(f64, f64, f64, f64)> =
        samples.iter().map(|s| (s.x, s.y, s.vx, s.vy)).collect();
    let type_tag = curve_type(m, states.iter());
    Ok((
        GeodesicPath {
            samples,
            stop_reason: stop,
            type_tag,
        },
        hits,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Left,
    Right,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Left => -1.0,
            Branch::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ShootOpts {
    /// Seed value of the auxiliary cusp parameter; the seed sits at
    /// `y = y0 +- tau0^2`.
    pub tau0: f64,
    pub t_max: f64,
    pub integrate: IntegrateOpts,
}

impl Default for ShootOpts {
    fn default() -> Self {
        ShootOpts {
            tau0: 1e-3,
            t_max: 10.0,
            integrate: IntegrateOpts::default(),
        }
    }
}

/// Shoot one member of the geodesic family out of a transverse parabolic
/// point with the isotropic tangential direction.
///
/// The metric must already satisfy `a > 0`, `b = c = 0` at `q0`. The seed is
/// the leading part of the semicubic normal form, placed at auxiliary
/// parameter `tau0` with velocities normalized so `dy/dtau = +-2 tau`:
/// `x = x0 + (+-)alpha tau0^3`, `y = y0 +- tau0^2`, `(vx, vy) =
/// ((+-)alpha, +-2/(3 tau0))`.
pub fn shoot_from_parabolic(
    m: &MetricField,
    q0: (f64, f64),
    alpha: f64,
    side: Side,
    branch: Branch,
    opts: &ShootOpts,
) -> Result<GeodesicPath> {
    let seed = parabolic_seed(m, q0, alpha, side, branch, opts.tau0)?;
    let mut iopts = opts.integrate;
    if iopts.h0.is_none() {
        iopts.h0 = Some((opts.tau0.powi(3) * 0.1).max(1e-13));
    }
    integrate_natural(m, &seed, opts.t_max, &iopts)
}

/// Seed state for [`shoot_from_parabolic`], exposed so tests can reuse it.
pub fn parabolic_seed(
    m: &MetricField,
    q0: (f64, f64),
    alpha: f64,
    side: Side,
    branch: Branch,
    tau0: f64,
) -> Result<PhaseState> {
    let (x0, y0) = q0;
    let class = classify_parabolic(m, x0, y0)?;
    if class.transverse != Some(true) {
        return Err(GeoError::NotTransverse { x: x0, y: y0 });
    }
    let k = m.coefs(x0, y0);
    let tol = 1e-8 * k.a.abs().max(1.0);
    if !(k.a > 0.0) || k.b.abs() > tol || k.c.abs() > tol {
        return Err(GeoError::NotNormalized {
            x: x0,
            y: y0,
            a: k.a,
            b: k.b,
            c: k.c,
        });
    }
    let s = side.sign();
    let r = branch.sign();
    Ok(PhaseState::new(
        tau0.powi(3),
        x0 + r * alpha * tau0.powi(3),
        y0 + s * tau0 * tau0,
        r * alpha,
        2.0 * s / (3.0 * tau0),
    ))
}

/// The isotropic family index of the metric at a normalized transverse
/// parabolic point: shots with `|alpha|` equal to this are isotropic.
pub fn alpha_isotropic(m: &MetricField, q0: (f64, f64)) -> Result<f64> {
    let (x0, y0) = q0;
    let class = classify_parabolic(m, x0, y0)?;
    if class.transverse != Some(true) {
        return Err(GeoError::NotTransverse { x: x0, y: y0 });
    }
    let k = m.coefs(x0, y0);
    let cy = m.derivs(x0, y0).cy;
    Ok((2.0 / 3.0) * (cy.abs() / k.a).sqrt())
}

/// Families of singular lines that admit quadratic/cubic launch seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularFamily {
    /// Both coefficients carry the `1/y^2` factor; seeds `x = x0 + alpha dy^2`.
    Klein,
    /// Only `a` carries the factor; seeds `x = x0 + (2/3) alpha dy^3`, which
    /// normalizes the family index so the launch level is `4 alpha^2` for
    /// both families.
    Grushin,
}

/// Shoot a geodesic out of a point on the singular line of a Klein- or
/// Grushin-like metric.
pub fn shoot_from_singular(
    m: &MetricField,
    q0: (f64, f64),
    alpha: f64,
    side: Side,
    family: SingularFamily,
    seed_offset: f64,
    opts: &IntegrateOpts,
    t_max: f64,
) -> Result<GeodesicPath> {
    let (x0, y0) = q0;
    let s = side.sign();
    let dy = s * seed_offset;
    let (x, dxdy) = match family {
        SingularFamily::Klein => (x0 + alpha * dy * dy, 2.0 * alpha * dy),
        SingularFamily::Grushin => (x0 + (2.0 / 3.0) * alpha * dy.powi(3), 2.0 * alpha * dy * dy),
    };
    // natural time is defined up to scaling; pick the speed that keeps the
    // conserved momentum a*vx of order one, so neither velocity component
    // drowns under the absolute tolerance
    let speed = match family {
        SingularFamily::Klein => 1.0,
        SingularFamily::Grushin => 1.0 / seed_offset,
    };
    let norm = (1.0 + dxdy * dxdy).sqrt() / speed;
    let seed = PhaseState::new(0.0, x, y0 + dy, s * dxdy / norm, s / norm);
    let mut iopts = *opts;
    if iopts.h0.is_none() {
        iopts.h0 = Some(seed_offset * 1e-3 / speed);
    }
    integrate_natural(m, &seed, t_max, &iopts)
}

#[derive(Debug, Clone, Copy)]
pub struct FiniteTimeReport {
    pub finite: bool,
    /// Extrapolated natural time of arrival at the target point (geometric
    /// tail sum); meaningful only when `finite`.
    pub t_arrival: f64,
    /// Median ratio of successive natural-time increments over dyadic
    /// distance levels; below 0.9 the series is declared convergent.
    pub ratio: f64,
    pub levels: usize,
}

/// Ratio threshold for declaring the arrival-time series convergent.
pub const FINITE_TIME_RATIO: f64 = 0.9;

/// Decide whether a path approaching `q0` does so in finite natural time.
///
/// Works on the approach tail of the path (either end), measuring natural
/// time at dyadic distance levels `d, d/2, d/4, ...` and applying a ratio
/// test to the increments.
pub fn finite_time_check(path: &GeodesicPath, q0: (f64, f64)) -> FiniteTimeReport {
    let (x0, y0) = q0;
    let d = |s: &PhaseState| (s.x - x0).hypot(s.y - y0);
    let n = path.samples.len();
    if n < 8 {
        return FiniteTimeReport {
            finite: false,
            t_arrival: f64::NAN,
            ratio: f64::NAN,
            levels: 0,
        };
    }
    // orient so the approach is at the end
    let approach_at_end = d(path.last()) <= d(path.first());
    let view: Vec<&PhaseState> = if approach_at_end {
        path.samples.iter().collect()
    } else {
        path.samples.iter().rev().collect()
    };
    // start from the farthest sample
    let (i_max, _) = view
        .iter()
        .enumerate()
        .max_by(|a, b| d(a.1).partial_cmp(&d(b.1)).unwrap())
        .unwrap();
    let tail = &view[i_max..];
    let d_top = d(tail[0]);
    let d_min = tail.iter().map(|s| d(s)).fold(f64::INFINITY, f64::min);
    if !(d_min > 0.0) || d_top <= d_min {
        return FiniteTimeReport {
            finite: false,
            t_arrival: f64::NAN,
            ratio: f64::NAN,
            levels: 0,
        };
    }

    // natural times at dyadic levels, linearly interpolated in distance;
    // a level only counts when the sampling resolves it (the step across
    // it must not overshoot far below the level, or the interpolated time
    // is meaningless)
    let mut level_times: Vec<f64> = Vec::new();
    let mut level = d_top * 0.5;
    let mut idx = 0usize;
    while level > d_min {
        while idx + 1 < tail.len() && d(tail[idx + 1]) > level {
            idx += 1;
        }
        if idx + 1 >= tail.len() {
            break;
        }
        let (s_a, s_b) = (tail[idx], tail[idx + 1]);
        let (da, db) = (d(s_a), d(s_b));
        if da <= level || db > level {
            level *= 0.5;
            continue;
        }
        if db < level * 0.25 {
            // under-resolved jump across this scale; stop here
            break;
        }
        let w = (da - level) / (da - db);
        level_times.push(s_a.t + w * (s_b.t - s_a.t));
        level *= 0.5;
    }

    if level_times.len() < 5 {
        return FiniteTimeReport {
            finite: false,
            t_arrival: f64::NAN,
            ratio: f64::NAN,
            levels: level_times.len(),
        };
    }
    let incs: Vec<f64> = level_times.windows(2).map(|w| w[1] - w[0]).collect();
    let mut ratios: Vec<f64> = incs
        .windows(2)
        .filter(|w| w[0].abs() > 1e-300)
        .map(|w| (w[1] / w[0]).abs())
        .collect();
    if ratios.is_empty() {
        return FiniteTimeReport {
            finite: false,
            t_arrival: f64::NAN,
            ratio: f64::NAN,
            levels: level_times.len(),
        };
    }
    let take = ratios.len().min(5);
    let mut sorted = ratios.split_off(ratios.len() - take);
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ratio = sorted[sorted.len() / 2];

    let finite = ratio < FINITE_TIME_RATIO;
    let t_arrival = if finite {
        let t_last = *level_times.last().unwrap();
        let inc_last = *incs.last().unwrap();
        t_last + inc_last * ratio / (1.0 - ratio)
    } else {
        f64::NAN
    };
    FiniteTimeReport {
        finite,
        t_arrival,
        ratio,
        levels: level_times.len(),
    }
}

/// Least-squares exponent of `|y - y0|` against `|x - x0|` over the last
/// decade of approach to `q0`; semicubic cusps give 2/3.
pub fn cusp_exponent(path: &GeodesicPath, q0: (f64, f64)) -> Result<f64> {
    let (x0, y0) = q0;
    // offsets with the planar distance to q0 as the windowing scale, so a
    // path that later comes back to the same ordinate elsewhere does not
    // pollute the approach window
    let mut pts: Vec<(f64, f64, f64)> = path
        .samples
        .iter()
        .map(|s| {
            let dx = (s.x - x0).abs();
            let dy = (s.y - y0).abs();
            (dx, dy, dx.hypot(dy))
        })
        .collect();
    pts.retain(|(dx, dy, _)| *dy > 0.0 && dx.is_finite());
    if pts.is_empty() {
        return Err(GeoError::InsufficientSamples { need: 5, got: 0 });
    }
    pts.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
    let d_min = pts[0].2;
    let dx_near = pts
        .iter()
        .filter(|(_, _, d)| *d <= 100.0 * d_min)
        .map(|p| p.0)
        .fold(0.0f64, f64::max);
    let dy_near = pts
        .iter()
        .filter(|(_, _, d)| *d <= 100.0 * d_min)
        .map(|p| p.1)
        .fold(0.0f64, f64::max);
    if dx_near <= 1e-13 * (1.0 + x0.abs()) || dx_near <= 1e-10 * dy_near {
        // vertical approach: the abscissa never moves
        return Err(GeoError::InsufficientSamples { need: 5, got: 0 });
    }
    let mut window: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(dx, _, d)| *d <= 10.0 * d_min && *dx > 0.0)
        .map(|(dx, dy, _)| (*dx, *dy))
        .collect();
    if window.len() < 5 {
        window = pts
            .iter()
            .filter(|(dx, _, d)| *d <= 100.0 * d_min && *dx > 0.0)
            .map(|(dx, dy, _)| (*dx, *dy))
            .collect();
    }
    if window.len() < 5 {
        return Err(GeoError::InsufficientSamples {
            need: 5,
            got: window.len(),
        });
    }
    // slope of ln dy on ln dx
    let n = window.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (dx, dy) in &window {
        let lx = dx.ln();
        let ly = dy.ln();
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(GeoError::InsufficientSamples {
            need: 5,
            got: window.len(),
        });
    }
    Ok((n * sxy - sx * sy) / denom)
}

/// Signed energy level `(a vx + b vy)^2 / L` of a phase state in a y-only
/// metric; infinite for isotropic states.
pub fn h2_signed(m: &MetricField, s: &PhaseState) -> f64 {
    let k = m.coefs(s.x, s.y);
    let l = k.form(s.vx, s.vy);
    let mom = k.a * s.vx + k.b * s.vy;
    if l == 0.0 {
        return f64::INFINITY;
    }
    mom * mom / l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;

    fn metric(name: &str) -> MetricField {
        catalog::lookup(name, &Default::default()).unwrap().metric
    }

    #[test]
    fn spray_examples() {
        let flat = metric("flat");
        let s = PhaseState::new(0.0, 0.3, -0.4, 2.0, 1.0);
        assert_eq!(spray(&flat, &s).unwrap(), (0.0, 0.0));

        // dx^2 - y dy^2 with 2y ydd + yd^2 = 0: ydd = -1/2 at (0,1,0,1)
        let ex22 = metric("ex22");
        let s = PhaseState::new(0.0, 0.0, 1.0, 0.0, 1.0);
        let (ax, ay) = spray(&ex22, &s).unwrap();
        assert_relative_eq!(ax, 0.0, epsilon = 1e-14);
        assert_relative_eq!(ay, -0.5, max_relative = 1e-10);

        // Klein metric at (0,1) moving right curves down along the unit
        // circle; the oracle integration below pins the sign.
        let klein = metric("klein");
        let s = PhaseState::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let (ax, ay) = spray(&klein, &s).unwrap();
        assert_relative_eq!(ax, 0.0, epsilon = 1e-12);
        assert_relative_eq!(ay, -1.0, max_relative = 1e-10);
    }

    #[test]
    fn desingularized_field_examples() {
        let flat = metric("flat");
        let s = PhaseState::new(0.0, 0.0, 0.0, 1.0, 0.0);
        let v = desingularized_field(&flat, &s);
        assert_eq!(v, [2.0, 0.0, 0.0, 0.0]);

        // dx^2 + y dy^2 at the origin with vertical velocity:
        // direct substitution gives (0, 0, 0, -1)
        let ex21 = metric("ex21");
        let s = PhaseState::new(0.0, 0.0, 0.0, 0.0, 1.0);
        let v = desingularized_field(&ex21, &s);
        assert_relative_eq!(v[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.0, epsilon = 1e-14);
        assert_relative_eq!(v[2], 0.0, epsilon = 1e-14);
        assert_relative_eq!(v[3], -1.0, max_relative = 1e-12);

        // vanishing velocity away from the parabolic set
        let s = PhaseState::new(0.0, 0.0, 1.0, 0.0, 0.0);
        let v = desingularized_field(&ex21, &s);
        assert_eq!(&v[..], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn straight_lines_in_flat_metric() {
        let flat = metric("flat");
        let s0 = PhaseState::new(0.0, 0.0, 0.0, 1.0, 2.0);
        let path = integrate_natural(&flat, &s0, 1.0, &IntegrateOpts::default()).unwrap();
        assert_eq!(path.stop_reason, StopReason::ReachedTmax);
        let end = path.last();
        assert_relative_eq!(end.x, 1.0, max_relative = 1e-10);
        assert_relative_eq!(end.y, 2.0, max_relative = 1e-10);
        // L = 5 throughout
        for l in path.energy_values(&flat) {
            assert_relative_eq!(l, 5.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn example_22_closed_form() {
        // x = t, y = t^(2/3) solves the system exactly; start on it at t = 1
        let ex22 = metric("ex22");
        let s0 = PhaseState::new(1.0, 1.0, 1.0, 1.0, 2.0 / 3.0);
        let path = integrate_natural(&ex22, &s0, 7.0, &IntegrateOpts::default()).unwrap();
        let end = path.last();
        assert_relative_eq!(end.t, 8.0, max_relative = 1e-12);
        assert_relative_eq!(end.x, 8.0, max_relative = 1e-5);
        assert_relative_eq!(end.y, 4.0, max_relative = 1e-5);
    }

    #[test]
    fn klein_circle_invariant() {
        let klein = metric("klein");
        let s0 = PhaseState::new(0.0, 0.0, 1.0, 1.0, 0.0);
        let path = integrate_natural(&klein, &s0, 8.0, &IntegrateOpts::default()).unwrap();
        assert!(path.samples.len() > 10);
        for s in &path.samples {
            let r2 = s.x * s.x + s.y * s.y;
            assert!((r2 - 1.0).abs() < 1e-6, "left the unit circle: {r2}");
        }
        // descended most of the way down the half circle
        assert!(path.last().y < 1e-3);
    }

    #[test]
    fn shoot_ex21_matches_semicubic() {
        // x = alpha tau^3, y = tau^2 is exact here
        let ex21 = metric("ex21");
        let path = shoot_from_parabolic(
            &ex21,
            (0.0, 0.0),
            1.0,
            Side::Plus,
            Branch::Right,
            &ShootOpts {
                t_max: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        for s in &path.samples {
            let tau = s.t.cbrt();
            assert_relative_eq!(s.x, tau.powi(3), max_relative = 1e-6, epsilon = 1e-12);
            assert_relative_eq!(s.y, tau * tau, max_relative = 1e-6, epsilon = 1e-12);
        }
    }

    #[test]
    fn shoot_alpha_zero_is_vertical() {
        let ex21 = metric("ex21");
        let path = shoot_from_parabolic(
            &ex21,
            (0.0, 0.0),
            0.0,
            Side::Plus,
            Branch::Right,
            &ShootOpts {
                t_max: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        for s in &path.samples {
            assert!(s.x.abs() < 1e-12);
        }
        assert!(path.last().y > 0.5);
    }

    #[test]
    fn shoot_rejects_bad_points() {
        let klein = metric("klein");
        assert!(matches!(
            shoot_from_parabolic(
                &klein,
                (0.0, 1.0),
                1.0,
                Side::Plus,
                Branch::Right,
                &ShootOpts::default()
            ),
            Err(GeoError::NotParabolic { .. })
        ));

        // parabolic but not normalized: b = c = 0 fails for a twisted metric
        use std::sync::Arc;
        let twisted = MetricField::new(
            "twisted",
            Arc::new(|_, _| 1.0),
            Arc::new(|_, _| 0.5),
            Arc::new(|_, y: f64| 0.25 + y),
        );
        assert!(matches!(
            shoot_from_parabolic(
                &twisted,
                (0.0, 0.0),
                1.0,
                Side::Plus,
                Branch::Right,
                &ShootOpts::default()
            ),
            Err(GeoError::NotNormalized { .. })
        ));
    }

    #[test]
    fn finite_time_example_22() {
        // the alpha = 1 member reaches the origin in finite time, t = x
        let ex22 = metric("ex22");
        let path = shoot_from_parabolic(
            &ex22,
            (0.0, 0.0),
            1.0,
            Side::Plus,
            Branch::Right,
            &ShootOpts {
                t_max: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let rep = finite_time_check(&path, (0.0, 0.0));
        assert!(rep.levels >= 8, "levels = {}", rep.levels);
        assert!(rep.finite, "ratio = {}", rep.ratio);
        // arrival extrapolates to t = 0, and remaining time equals x
        assert!(rep.t_arrival.abs() < 1e-6, "t_arrival = {}", rep.t_arrival);
        let s = path.first();
        assert_relative_eq!(s.t - s.x, rep.t_arrival, epsilon = 1e-6);
    }

    #[test]
    fn cusp_exponent_examples() {
        let ex21 = metric("ex21");
        let path = shoot_from_parabolic(
            &ex21,
            (0.0, 0.0),
            1.0,
            Side::Plus,
            Branch::Right,
            &ShootOpts {
                t_max: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let beta = cusp_exponent(&path, (0.0, 0.0)).unwrap();
        assert!((beta - 2.0 / 3.0).abs() < 0.01, "beta = {beta}");

        // vertical shot has no abscissa variation
        let path = shoot_from_parabolic(
            &ex21,
            (0.0, 0.0),
            0.0,
            Side::Plus,
            Branch::Right,
            &ShootOpts::default(),
        )
        .unwrap();
        assert!(matches!(
            cusp_exponent(&path, (0.0, 0.0)),
            Err(GeoError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn exactly_isotropic_path_keeps_the_isotropic_tag() {
        // start on F = 0 in the Lorentzian strip; L stays at the noise
        // floor, so the whole path classifies isotropic
        let sphere = metric("sphere");
        let y = 1.1;
        let k = sphere.coefs(0.0, y);
        let p = (k.a / -k.c).sqrt();
        let s0 = PhaseState::new(0.0, 0.0, y, 1.0, p);
        let path = integrate_natural(
            &sphere,
            &s0,
            0.5,
            &IntegrateOpts {
                window: Some((0.3, 2.8)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(path.type_tag, CurveType::Isotropic);
    }

    #[test]
    fn boundary_stop() {
        let sphere = metric("sphere");
        // meridian bow launched upward in the Lorentzian strip leaves
        // through the parabolic band around y = pi, not the domain edge;
        // use a window to force a clean boundary stop instead
        let s0 = PhaseState::new(0.0, 0.0, 0.5, 0.0, 1.0);
        let path = integrate_natural(
            &sphere,
            &s0,
            50.0,
            &IntegrateOpts {
                window: Some((0.1, 1.2)),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(path.stop_reason, StopReason::HitDomainBoundary);
        assert_relative_eq!(path.last().y, 1.2, max_relative = 1e-9);
    }

    #[test]
    fn invalid_starts_rejected() {
        let sphere = metric("sphere");
        let outside = PhaseState::new(0.0, 0.0, -2.0, 1.0, 0.0);
        assert!(matches!(
            integrate_natural(&sphere, &outside, 1.0, &IntegrateOpts::default()),
            Err(GeoError::InvalidStart { .. })
        ));
        let still = PhaseState::new(0.0, 0.0, 0.5, 0.0, 0.0);
        assert!(matches!(
            integrate_natural(&sphere, &still, 1.0, &IntegrateOpts::default()),
            Err(GeoError::InvalidStart { .. })
        ));
    }
}
