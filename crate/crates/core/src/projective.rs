//! Unparametrized geodesics on the direction bundle.
//!
//! Directions live on the projective line and are stored in two affine
//! charts, `p = dy/dx` and `q = 1/p`, switching whenever the magnitude
//! exceeds one, so the vertical direction is an ordinary chart point. The
//! lifted field is `(2D, 2D p, M(x, y, p))` with the cubic
//! `M = mu0 + mu1 p + mu2 p^2 + mu3 p^3`; at a parabolic point its real
//! projective roots are the admissible directions.

use crate::error::{GeoError, Result};
use crate::flow::{desingularized_field, PhaseState};
use crate::metric::{classify_parabolic, MetricField};
use crate::ode::{self, Event, EventDir, OdeOpts, OdeStatus};
use crate::roots::cubic_proj_roots;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    /// Coordinate `p = dy/dx`, used while `|p| <= 1`.
    Affine,
    /// Coordinate `q = 1/p`, used while `|p| >= 1`; `q = 0` is vertical.
    Inverted,
}

/// A direction on the projective line in its canonical chart.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProjDir {
    pub chart: Chart,
    /// `p` in the affine chart, `q = 1/p` in the inverted chart.
    #[serde(rename = "p_or_q")]
    pub value: f64,
}

impl ProjDir {
    pub fn from_p(p: f64) -> ProjDir {
        if p.is_infinite() || p.is_nan() {
            return ProjDir::infinity();
        }
        if p.abs() <= 1.0 {
            ProjDir {
                chart: Chart::Affine,
                value: p,
            }
        } else {
            ProjDir {
                chart: Chart::Inverted,
                value: 1.0 / p,
            }
        }
    }

    pub fn from_chart(chart: Chart, value: f64) -> ProjDir {
        match chart {
            Chart::Affine => {
                if value.abs() <= 1.0 {
                    ProjDir { chart, value }
                } else {
                    ProjDir {
                        chart: Chart::Inverted,
                        value: 1.0 / value,
                    }
                }
            }
            Chart::Inverted => {
                if value.abs() <= 1.0 {
                    ProjDir { chart, value }
                } else {
                    ProjDir {
                        chart: Chart::Affine,
                        value: 1.0 / value,
                    }
                }
            }
        }
    }

    pub fn infinity() -> ProjDir {
        ProjDir {
            chart: Chart::Inverted,
            value: 0.0,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.chart, Chart::Inverted) && self.value == 0.0
    }

    /// Slope `dy/dx`; infinite for the vertical direction.
    pub fn p(&self) -> f64 {
        match self.chart {
            Chart::Affine => self.value,
            Chart::Inverted => {
                if self.value == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / self.value
                }
            }
        }
    }

    /// Inclination angle in `(-pi/2, pi/2]`.
    pub fn angle(&self) -> f64 {
        match self.chart {
            Chart::Affine => self.value.atan(),
            Chart::Inverted => {
                let a = std::f64::consts::FRAC_PI_2 - self.value.atan();
                if a > std::f64::consts::FRAC_PI_2 {
                    a - std::f64::consts::PI
                } else {
                    a
                }
            }
        }
    }

    /// Projective distance (angle difference modulo pi).
    pub fn dist(a: ProjDir, b: ProjDir) -> f64 {
        let mut d = (a.angle() - b.angle()).abs();
        if d > std::f64::consts::FRAC_PI_2 {
            d = std::f64::consts::PI - d;
        }
        d
    }
}

impl PartialEq for ProjDir {
    fn eq(&self, other: &Self) -> bool {
        self.chart == other.chart && self.value == other.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JetPoint {
    pub x: f64,
    pub y: f64,
    pub dir: ProjDir,
}

impl JetPoint {
    pub fn new(x: f64, y: f64, dir: ProjDir) -> JetPoint {
        JetPoint { x, y, dir }
    }

    pub fn from_p(x: f64, y: f64, p: f64) -> JetPoint {
        JetPoint {
            x,
            y,
            dir: ProjDir::from_p(p),
        }
    }
}

/// One record of an integrated jet path.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JetSample {
    /// Cumulative auxiliary parameter across chart segments.
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub dir: ProjDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JetStop {
    ReachedSmax,
    HitDomainBoundary,
    StalledAtParabolicSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JetPath {
    pub samples: Vec<JetSample>,
    pub stop: JetStop,
}

impl JetPath {
    pub fn last(&self) -> &JetSample {
        self.samples.last().expect("jet path has samples")
    }
}

/// Coefficients of the direction cubic `M(x, y, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mu {
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl Mu {
    pub fn eval(&self, p: f64) -> f64 {
        ((self.mu3 * p + self.mu2) * p + self.mu1) * p + self.mu0
    }

    /// The third field component in the inverted chart,
    /// `-(mu3 + mu2 q + mu1 q^2 + mu0 q^3)`.
    pub fn eval_inverted(&self, q: f64) -> f64 {
        -(((self.mu0 * q + self.mu1) * q + self.mu2) * q + self.mu3)
    }

    pub fn scale(&self) -> f64 {
        self.mu0
            .abs()
            .max(self.mu1.abs())
            .max(self.mu2.abs())
            .max(self.mu3.abs())
    }
}

/// `mu3 = c(2 b_y - c_x) - b c_y`, `mu2 = b(2 b_y - 3 c_x) + 2 a_y c - a c_y`,
/// `mu1 = b(3 a_y - 2 b_x) + a_x c - 2 a c_x`, `mu0 = a(a_y - 2 b_x) + a_x b`.
pub fn mu_coefficients(m: &MetricField, x: f64, y: f64) -> Mu {
    let k = m.coefs(x, y);
    let d = m.derivs(x, y);
    Mu {
        mu3: k.c * (2.0 * d.by - d.cx) - k.b * d.cy,
        mu2: k.b * (2.0 * d.by - 3.0 * d.cx) + 2.0 * d.ay * k.c - k.a * d.cy,
        mu1: k.b * (3.0 * d.ay - 2.0 * d.bx) + d.ax * k.c - 2.0 * k.a * d.cx,
        mu0: k.a * (d.ay - 2.0 * d.bx) + d.ax * k.b,
    }
}

/// The lifted field at a jet, in the jet's own chart:
/// `(2D, 2D p, M)` affine, `(2D q, 2D, -(mu3 + mu2 q + mu1 q^2 + mu0 q^3))`
/// inverted (derived from `p = 1/q`, `dq = -q^2 dp`, with the parameter
/// rescaled by `p`).
pub fn lifted_field(m: &MetricField, j: &JetPoint) -> [f64; 3] {
    let delta = m.discriminant(j.x, j.y);
    let mu = mu_coefficients(m, j.x, j.y);
    match j.dir.chart {
        Chart::Affine => {
            let p = j.dir.value;
            [2.0 * delta, 2.0 * delta * p, mu.eval(p)]
        }
        Chart::Inverted => {
            let q = j.dir.value;
            [2.0 * delta * q, 2.0 * delta, mu.eval_inverted(q)]
        }
    }
}

/// Value of `F = a + 2bp + cp^2` in the jet's chart (the inverted chart
/// carries the homogeneous form `a q^2 + 2bq + c`).
pub fn isotropic_form(m: &MetricField, j: &JetPoint) -> f64 {
    let k = m.coefs(j.x, j.y);
    match j.dir.chart {
        Chart::Affine => {
            let p = j.dir.value;
            k.a + 2.0 * k.b * p + k.c * p * p
        }
        Chart::Inverted => {
            let q = j.dir.value;
            k.a * q * q + 2.0 * k.b * q + k.c
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirKind {
    Isotropic,
    Nonisotropic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibleDir {
    pub dir: ProjDir,
    pub multiplicity: u8,
    pub kind: DirKind,
}

/// Admissible directions at a transverse parabolic point: the real
/// projective roots of the cubic `M(q0, p)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibleSet {
    pub directions: Vec<AdmissibleDir>,
    /// Set when the root structure is non-generic (a vanishing cubic or a
    /// multiple root); the direction list is still reported.
    pub degenerate: bool,
}

impl AdmissibleSet {
    pub fn count(&self) -> usize {
        self.directions.len()
    }

    pub fn isotropic(&self) -> Option<&AdmissibleDir> {
        self.directions
            .iter()
            .find(|d| d.kind == DirKind::Isotropic)
    }

    pub fn nonisotropic_slopes(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .directions
            .iter()
            .filter(|d| d.kind == DirKind::Nonisotropic)
            .map(|d| d.dir.p())
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }
}

pub fn admissible_directions(m: &MetricField, q0: (f64, f64)) -> Result<AdmissibleSet> {
    let (x0, y0) = q0;
    let class = classify_parabolic(m, x0, y0)?;
    if class.transverse != Some(true) {
        return Err(GeoError::NotTransverse { x: x0, y: y0 });
    }
    let mu = mu_coefficients(m, x0, y0);
    let roots = cubic_proj_roots(mu.mu3, mu.mu2, mu.mu1, mu.mu0);
    let k = m.coefs(x0, y0);
    let f_scale = k.scale().max(1e-30);
    let mut directions = Vec::new();
    let mut degenerate = roots.identically_zero;
    for (dir, mult) in roots.roots {
        if mult > 1 {
            degenerate = true;
        }
        let f_res = isotropic_form(m, &JetPoint::new(x0, y0, dir)).abs();
        let kind = if f_res <= 1e-8 * f_scale {
            DirKind::Isotropic
        } else {
            DirKind::Nonisotropic
        };
        directions.push(AdmissibleDir {
            dir,
            multiplicity: mult,
            kind,
        });
    }
    Ok(AdmissibleSet {
        directions,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct JetOpts {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub max_step: f64,
    /// Stop once the projected curve has this much Euclidean arclength.
    pub max_arclength: Option<f64>,
    pub window: Option<(f64, f64)>,
}

impl Default for JetOpts {
    fn default() -> Self {
        JetOpts {
            rtol: 1e-9,
            atol: 1e-9,
            max_steps: 200_000,
            max_step: f64::INFINITY,
            max_arclength: None,
            window: None,
        }
    }
}

const JET_MAX_SEGMENTS: usize = 512;

/// Integrate the lifted field from `j0` over `s_max` of auxiliary parameter
/// (signed), switching charts automatically. The projection satisfies
/// `dy/dx = p` wherever `dx != 0`.
pub fn integrate_unparametrized(
    m: &MetricField,
    j0: &JetPoint,
    s_max: f64,
    opts: &JetOpts,
) -> Result<JetPath> {
    let orientation = if s_max >= 0.0 { 1.0 } else { -1.0 };
    let path = integrate_lifted(m, j0, orientation, s_max.abs(), opts);
    match path.stop {
        JetStop::StalledAtParabolicSet => {
            // a partial path that died at the parabolic set without reaching
            // the requested span is reported as an error per the contract
            Err(GeoError::StepUnderflow { t: path.last().s })
        }
        _ => Ok(path),
    }
}

/// Internal chart-switching integrator; also used by the residual checks.
pub(crate) fn integrate_lifted(
    m: &MetricField,
    j0: &JetPoint,
    orientation: f64,
    s_budget: f64,
    opts: &JetOpts,
) -> JetPath {
    let (mut lo, mut hi) = (m.domain.lo, m.domain.hi);
    if let Some((wl, wh)) = opts.window {
        lo = lo.max(wl);
        hi = hi.min(wh);
    }
    let mut samples = vec![JetSample {
        s: 0.0,
        x: j0.x,
        y: j0.y,
        dir: j0.dir,
    }];
    let mut cur = *j0;
    let mut orient = orientation;
    let mut s_accum = 0.0f64;
    let mut arc_accum = 0.0f64;
    let mut budget = opts.max_steps;
    let mut stop = JetStop::ReachedSmax;

    'segments: for _seg in 0..JET_MAX_SEGMENTS {
        if s_accum >= s_budget || budget == 0 {
            break;
        }
        let chart = cur.dir.chart;
        let o = orient;
        // state: (x, y, w, arclength)
        let f = move |_s: f64, yv: &[f64; 4]| {
            let j = JetPoint::new(
                yv[0],
                yv[1],
                ProjDir {
                    chart,
                    value: yv[2],
                },
            );
            let v = lifted_field(m, &j);
            let speed = v[0].hypot(v[1]);
            [o * v[0], o * v[1], o * v[2], speed]
        };
        let mut events: Vec<Event<4>> = Vec::new();
        events.push(Event::terminal(
            "switch",
            EventDir::Rising,
            |_s, yv: &[f64; 4]| yv[2].abs() - 1.0,
        ));
        if hi.is_finite() {
            events.push(Event::terminal(
                "boundary",
                EventDir::Rising,
                move |_s, yv: &[f64; 4]| yv[1] - hi,
            ));
        }
        if lo.is_finite() {
            events.push(Event::terminal(
                "boundary",
                EventDir::Falling,
                move |_s, yv: &[f64; 4]| yv[1] - lo,
            ));
        }
        if let Some(amax) = opts.max_arclength {
            events.push(Event::terminal(
                "arclen",
                EventDir::Rising,
                move |_s, yv: &[f64; 4]| yv[3] - amax,
            ));
        }

        let sol = ode::integrate(
            f,
            0.0,
            s_budget - s_accum,
            [cur.x, cur.y, cur.dir.value, arc_accum],
            &OdeOpts {
                rtol: opts.rtol,
                atol: opts.atol,
                h0: None,
                h_max: opts.max_step,
                max_steps: budget,
            },
            events,
        );
        budget = budget.saturating_sub(sol.steps);
        for (s, yv) in sol.ts.iter().zip(&sol.ys).skip(1) {
            samples.push(JetSample {
                s: s_accum + s,
                x: yv[0],
                y: yv[1],
                dir: ProjDir {
                    chart,
                    value: yv[2],
                },
            });
        }
        let (s_last, y_last) = sol.last();
        s_accum += s_last;
        arc_accum = y_last[3];
        cur = JetPoint::new(
            y_last[0],
            y_last[1],
            ProjDir {
                chart,
                value: y_last[2],
            },
        );

        match sol.status {
            OdeStatus::ReachedEnd => {
                stop = JetStop::ReachedSmax;
                break 'segments;
            }
            OdeStatus::Event("switch") => {
                // w hit +-1: jump to the other chart; the parameter relation
                // ds_other = w ds flips orientation with the sign of w
                let w = cur.dir.value;
                let new_chart = match chart {
                    Chart::Affine => Chart::Inverted,
                    Chart::Inverted => Chart::Affine,
                };
                cur = JetPoint::new(
                    cur.x,
                    cur.y,
                    ProjDir {
                        chart: new_chart,
                        value: 1.0 / w,
                    },
                );
                // record the re-expressed state so the path carries both
                // representations of the switch point
                samples.push(JetSample {
                    s: s_accum,
                    x: cur.x,
                    y: cur.y,
                    dir: cur.dir,
                });
                orient *= w.signum();
                continue 'segments;
            }
            OdeStatus::Event("boundary") => {
                stop = JetStop::HitDomainBoundary;
                break 'segments;
            }
            OdeStatus::Event("arclen") | OdeStatus::Event(_) => {
                stop = JetStop::ReachedSmax;
                break 'segments;
            }
            OdeStatus::StepUnderflow | OdeStatus::MaxSteps => {
                stop = JetStop::StalledAtParabolicSet;
                break 'segments;
            }
        }
    }

    JetPath { samples, stop }
}

/// How far the projectivized phase flow and the lifted field drift apart
/// from matched initial data, measured as the maximum mismatch of
/// `(x, y, direction)` at matched arclength checkpoints over the horizon
/// (an arclength in the plane).
pub fn commutation_residual(m: &MetricField, s: &PhaseState, horizon: f64) -> Result<f64> {
    if s.speed2() == 0.0 {
        return Err(GeoError::InvalidStart { y: s.y });
    }
    const CHECKPOINTS: usize = 24;
    let levels: Vec<f64> = (1..=CHECKPOINTS)
        .map(|k| horizon * k as f64 / CHECKPOINTS as f64)
        .collect();

    // phase route: desingularized field plus arclength, with recording
    // events at the arclength checkpoints
    let mut events: Vec<Event<5>> = Vec::new();
    for (i, lv) in levels.iter().enumerate() {
        let lv = *lv;
        events.push(Event {
            label: CHECKPOINT_LABELS[i],
            dir: EventDir::Rising,
            terminal: i + 1 == CHECKPOINTS,
            g: Box::new(move |_t, yv: &[f64; 5]| yv[4] - lv),
        });
    }
    let f = |_t: f64, yv: &[f64; 5]| {
        let st = PhaseState::new(0.0, yv[0], yv[1], yv[2], yv[3]);
        let v = desingularized_field(m, &st);
        [v[0], v[1], v[2], v[3], v[0].hypot(v[1])]
    };
    let phase_sol = ode::integrate(
        f,
        0.0,
        f64::INFINITY,
        [s.x, s.y, s.vx, s.vy, 0.0],
        &OdeOpts::default(),
        events,
    );

    // jet route from the projectivized start, oriented to trace the same
    // image direction
    let p0 = ProjDir::from_p(s.vy / s.vx);
    let orient = match p0.chart {
        Chart::Affine => s.vx.signum(),
        Chart::Inverted => s.vy.signum(),
    };
    let j0 = JetPoint::new(s.x, s.y, p0);
    let jet_hits = lifted_checkpoints(m, &j0, orient, &levels);

    let mut residual = 0.0f64;
    let mut matched = 0usize;
    for (i, _lv) in levels.iter().enumerate() {
        let ph = phase_sol
            .hits
            .iter()
            .find(|h| h.label == CHECKPOINT_LABELS[i]);
        let jh = jet_hits[i];
        if let (Some(ph), Some(jh)) = (ph, jh) {
            let p_phase = ProjDir::from_p(ph.y[3] / ph.y[2]);
            let dx = (ph.y[0] - jh.0).abs();
            let dy = (ph.y[1] - jh.1).abs();
            let dp = dir_mismatch(p_phase, jh.2);
            residual = residual.max(dx).max(dy).max(dp);
            matched += 1;
        }
    }
    if matched < CHECKPOINTS / 2 {
        return Err(GeoError::InsufficientSamples {
            need: CHECKPOINTS / 2,
            got: matched,
        });
    }
    Ok(residual)
}

/// Slope mismatch: affine difference for moderate slopes, angle distance
/// scaled back to slope units for steep ones.
fn dir_mismatch(a: ProjDir, b: ProjDir) -> f64 {
    let (pa, pb) = (a.p(), b.p());
    if pa.abs() <= 2.0 && pb.abs() <= 2.0 {
        (pa - pb).abs()
    } else {
        ProjDir::dist(a, b) * (1.0 + pa.abs().min(pb.abs())).powi(2)
    }
}

const CHECKPOINT_LABELS: [&str; 24] = [
    "l00", "l01", "l02", "l03", "l04", "l05", "l06", "l07", "l08", "l09", "l10", "l11", "l12",
    "l13", "l14", "l15", "l16", "l17", "l18", "l19", "l20", "l21", "l22", "l23",
];

fn lifted_checkpoints(
    m: &MetricField,
    j0: &JetPoint,
    orientation: f64,
    levels: &[f64],
) -> Vec<Option<(f64, f64, ProjDir)>> {
    // integrate chart-aware, recording arclength checkpoints within each
    // chart segment; terminal at the last level
    let mut out: Vec<Option<(f64, f64, ProjDir)>> = vec![None; levels.len()];
    let mut cur = *j0;
    let mut orient = orientation;
    let mut arc = 0.0f64;
    let mut budget = 200_000usize;
    for _seg in 0..JET_MAX_SEGMENTS {
        if budget == 0 {
            break;
        }
        let chart = cur.dir.chart;
        let o = orient;
        let f = move |_s: f64, yv: &[f64; 4]| {
            let j = JetPoint::new(
                yv[0],
                yv[1],
                ProjDir {
                    chart,
                    value: yv[2],
                },
            );
            let v = lifted_field(m, &j);
            [o * v[0], o * v[1], o * v[2], v[0].hypot(v[1])]
        };
        let mut events: Vec<Event<4>> = Vec::new();
        events.push(Event::terminal(
            "switch",
            EventDir::Rising,
            |_s, yv: &[f64; 4]| yv[2].abs() - 1.0,
        ));
        for (i, lv) in levels.iter().enumerate() {
            let lv = *lv;
            events.push(Event {
                label: CHECKPOINT_LABELS[i],
                dir: EventDir::Rising,
                terminal: i + 1 == levels.len(),
                g: Box::new(move |_s, yv: &[f64; 4]| yv[3] - lv),
            });
        }
        let sol = ode::integrate(
            f,
            0.0,
            f64::INFINITY,
            [cur.x, cur.y, cur.dir.value, arc],
            &OdeOpts {
                max_steps: budget,
                ..OdeOpts::default()
            },
            events,
        );
        budget = budget.saturating_sub(sol.steps);
        for hit in &sol.hits {
            if let Some(i) = CHECKPOINT_LABELS.iter().position(|l| *l == hit.label) {
                out[i] = Some((
                    hit.y[0],
                    hit.y[1],
                    ProjDir {
                        chart,
                        value: hit.y[2],
                    },
                ));
            }
        }
        let (_s, y_last) = sol.last();
        arc = y_last[3];
        cur = JetPoint::new(
            y_last[0],
            y_last[1],
            ProjDir {
                chart,
                value: y_last[2],
            },
        );
        match sol.status {
            OdeStatus::Event("switch") => {
                let w = cur.dir.value;
                let new_chart = match chart {
                    Chart::Affine => Chart::Inverted,
                    Chart::Inverted => Chart::Affine,
                };
                cur = JetPoint::new(
                    cur.x,
                    cur.y,
                    ProjDir {
                        chart: new_chart,
                        value: 1.0 / w,
                    },
                );
                orient *= w.signum();
            }
            _ => break,
        }
    }
    out
}

/// Maximum drift of `F` along the lifted-field integral curve from a jet on
/// the isotropic surface, over one unit of auxiliary parameter.
pub fn isotropic_invariance_residual(m: &MetricField, j0: &JetPoint) -> Result<f64> {
    let f0 = isotropic_form(m, j0).abs();
    let scale = m.coefs(j0.x, j0.y).scale().max(1.0);
    if f0 > 1e-10 * scale {
        return Err(GeoError::NotOnSurface { f_abs: f0 });
    }
    let path = integrate_lifted(m, j0, 1.0, 1.0, &JetOpts::default());
    let mut worst = 0.0f64;
    for s in &path.samples {
        let j = JetPoint::new(s.x, s.y, s.dir);
        worst = worst.max(isotropic_form(m, &j).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    fn metric(name: &str) -> MetricField {
        catalog::lookup(name, &Default::default()).unwrap().metric
    }

    fn torus() -> MetricField {
        let mut p = std::collections::BTreeMap::new();
        p.insert("rho".to_string(), 2.0);
        catalog::lookup("torus", &p).unwrap().metric
    }

    #[test]
    fn jet_samples_serialize_with_chart_fields() {
        let s = JetSample {
            s: 0.5,
            x: 1.0,
            y: 2.0,
            dir: ProjDir::from_p(3.0),
        };
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["s"], 0.5);
        assert_eq!(json["dir"]["chart"], "inverted");
        assert!((json["dir"]["p_or_q"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let back: JetSample = serde_json::from_value(json).unwrap();
        assert!((back.dir.p() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn chart_roundtrip_and_angles() {
        for p in [-5.0, -1.0, -0.3, 0.0, 0.2, 1.0, 7.5] {
            let d = ProjDir::from_p(p);
            assert_relative_eq!(d.p(), p, max_relative = 1e-12);
        }
        let inf = ProjDir::infinity();
        assert!(inf.is_infinite());
        assert_relative_eq!(inf.angle(), std::f64::consts::FRAC_PI_2);
        assert!(ProjDir::dist(ProjDir::from_p(1e9), inf) < 1e-8);
        // steep positive and steep negative slopes are projectively close
        assert!(ProjDir::dist(ProjDir::from_p(1e9), ProjDir::from_p(-1e9)) < 1e-8);
    }

    #[test]
    fn mu_examples() {
        // flat: everything vanishes
        let mu = mu_coefficients(&metric("flat"), 0.7, -0.2);
        assert_eq!((mu.mu0, mu.mu1, mu.mu2, mu.mu3), (0.0, 0.0, 0.0, 0.0));

        // dx^2 + y dy^2 at (0, 1): mu2 = -a c_y = -1, others 0
        let mu = mu_coefficients(&metric("ex21"), 0.0, 1.0);
        assert_relative_eq!(mu.mu2, -1.0, max_relative = 1e-10);
        assert_relative_eq!(mu.mu0, 0.0, epsilon = 1e-12);
        assert_relative_eq!(mu.mu1, 0.0, epsilon = 1e-12);
        assert_relative_eq!(mu.mu3, 0.0, epsilon = 1e-12);

        // sphere at the origin: mu0 = a a_y = 1, mu2 = 2 a_y c - a c_y = 1
        let mu = mu_coefficients(&metric("sphere"), 0.0, 0.0);
        assert_relative_eq!(mu.mu0, 1.0, max_relative = 1e-10);
        assert_relative_eq!(mu.mu2, 1.0, max_relative = 1e-10);
        assert_relative_eq!(mu.mu1, 0.0, epsilon = 1e-12);
        assert_relative_eq!(mu.mu3, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lifted_field_examples() {
        let flat = metric("flat");
        let j = JetPoint::from_p(0.0, 0.0, 0.5);
        let v = lifted_field(&flat, &j);
        assert_eq!(v, [2.0, 1.0, 0.0]);

        // at a parabolic point with M != 0 the field is purely vertical
        let sphere = metric("sphere");
        let j = JetPoint::from_p(0.0, 0.0, 0.3);
        let v = lifted_field(&sphere, &j);
        assert!(v[0].abs() < 1e-14 && v[1].abs() < 1e-14);
        let mu = mu_coefficients(&sphere, 0.0, 0.0);
        assert_relative_eq!(v[2], mu.eval(0.3), max_relative = 1e-12);
        assert!(v[2].abs() > 0.1);
    }

    #[test]
    fn admissible_directions_sphere_and_torus() {
        // sphere: the unique admissible direction is isotropic and vertical
        let set = admissible_directions(&metric("sphere"), (0.0, 0.0)).unwrap();
        assert!(!set.degenerate);
        assert_eq!(set.count(), 1);
        let d = &set.directions[0];
        assert!(d.dir.is_infinite());
        assert_eq!(d.kind, DirKind::Isotropic);

        // torus inner northern parallel: p = infinity plus two timelike
        // slopes +-(2/3) sqrt(a1/c1)
        let t = torus();
        let q0 = (0.0, 3.0 * FRAC_PI_4);
        let set = admissible_directions(&t, q0).unwrap();
        assert!(!set.degenerate);
        assert_eq!(set.count(), 3);
        assert!(set.isotropic().unwrap().dir.is_infinite());
        let slopes = set.nonisotropic_slopes();
        let a1 = t.a_prime(q0.1);
        let c1 = (4.0 / 9.0) * t.c_prime(q0.1);
        let want = (2.0 / 3.0) * (a1 / c1).sqrt();
        assert_relative_eq!(slopes[0], -want, max_relative = 1e-9);
        assert_relative_eq!(slopes[1], want, max_relative = 1e-9);

        // outer northern parallel has positive curvature: one direction
        let set = admissible_directions(&t, (0.0, FRAC_PI_4)).unwrap();
        assert_eq!(set.count(), 1);
        assert!(set.directions[0].dir.is_infinite());
    }

    #[test]
    fn admissible_degenerate_at_nongeneric_point() {
        // dx^2 + y dy^2 at the origin: a' = 0, the cubic is -p^2 with a
        // double root; reported as degenerate, with the isotropic vertical
        // root present
        let set = admissible_directions(&metric("ex21"), (0.0, 0.0)).unwrap();
        assert!(set.degenerate);
        assert!(set
            .directions
            .iter()
            .any(|d| d.dir.is_infinite() && d.kind == DirKind::Isotropic && d.multiplicity == 1));
        assert!(set
            .directions
            .iter()
            .any(|d| !d.dir.is_infinite() && d.multiplicity == 2));
    }

    #[test]
    fn straight_line_jet_path() {
        let flat = metric("flat");
        let j0 = JetPoint::from_p(0.0, 0.0, 0.5);
        let path = integrate_unparametrized(&flat, &j0, 2.0, &JetOpts::default()).unwrap();
        assert_eq!(path.stop, JetStop::ReachedSmax);
        for s in &path.samples {
            assert_relative_eq!(s.y, 0.5 * s.x, epsilon = 1e-9);
            assert_relative_eq!(s.dir.p(), 0.5, max_relative = 1e-9);
        }
    }

    #[test]
    fn klein_jet_path_stays_on_circle_across_chart_switches() {
        let klein = metric("klein");
        let j0 = JetPoint::from_p(0.0, 1.0, 0.0);
        let path = integrate_unparametrized(
            &klein,
            &j0,
            1e4,
            &JetOpts {
                max_arclength: Some(1.3),
                ..JetOpts::default()
            },
        )
        .unwrap();
        let mut saw_inverted = false;
        for s in &path.samples {
            assert!(
                (s.x * s.x + s.y * s.y - 1.0).abs() < 1e-6,
                "off circle at ({}, {})",
                s.x,
                s.y
            );
            if s.dir.chart == Chart::Inverted {
                saw_inverted = true;
            }
        }
        assert!(saw_inverted, "never switched charts");
        // made it most of the way round to the x-axis
        assert!(path.last().y < 0.35, "y = {}", path.last().y);
    }

    #[test]
    fn commutation_residual_examples() {
        let flat = metric("flat");
        let s = PhaseState::new(0.0, 0.0, 0.0, 1.0, 0.4);
        let r = commutation_residual(&flat, &s, 1.0).unwrap();
        assert!(r < 1e-10, "flat residual {r}");

        let klein = metric("klein");
        let s = PhaseState::new(0.0, 0.0, 1.0, 1.0, 0.2);
        let r = commutation_residual(&klein, &s, 0.8).unwrap();
        assert!(r < 1e-6, "klein residual {r}");

        let ex21 = metric("ex21");
        let s = PhaseState::new(0.0, 0.0, 1.0, 1.0, -0.3);
        let r = commutation_residual(&ex21, &s, 0.8).unwrap();
        assert!(r < 1e-6, "ex21 residual {r}");
    }

    #[test]
    fn isotropic_surface_invariance() {
        // constant Lorentzian metric: isotropic lines have p = +-1 exactly
        let mink = metric("minkowski");
        let j0 = JetPoint::from_p(0.0, 0.0, 1.0);
        let r = isotropic_invariance_residual(&mink, &j0).unwrap();
        assert!(r < 1e-12, "minkowski residual {r}");

        // sphere, a jet on F = 0 in the Lorentzian strip
        let sphere = metric("sphere");
        let y = 1.1;
        let k = sphere.coefs(0.0, y);
        let p = (k.a / -k.c).sqrt();
        let j0 = JetPoint::from_p(0.0, y, p);
        let r = isotropic_invariance_residual(&sphere, &j0).unwrap();
        assert!(r < 1e-7, "sphere residual {r}");

        // off-surface jets are rejected
        let j_bad = JetPoint::from_p(0.0, y, 0.0);
        assert!(matches!(
            isotropic_invariance_residual(&sphere, &j_bad),
            Err(GeoError::NotOnSurface { .. })
        ));
    }

    #[test]
    fn field_tangency_on_example_21_variant() {
        // ds^2 = dx^2/(1+y^2) + y dy^2, jet on its isotropic surface
        use crate::expr::Expr;
        let m = MetricField::new(
            "ex21-variant",
            Expr::parse("1/(1+y^2)").unwrap().bind(),
            Expr::parse("0").unwrap().bind(),
            Expr::parse("y").unwrap().bind(),
        );
        let y = -0.7; // Lorentzian side: D = y/(1+y^2) < 0
        let k = m.coefs(0.0, y);
        let p = (-k.a / k.c).sqrt();
        let j0 = JetPoint::from_p(0.0, y, p);
        let r = isotropic_invariance_residual(&m, &j0).unwrap();
        assert!(r < 1e-7, "residual {r}");
    }
}
