//! Shared helpers for the integration test suites.

#![allow(dead_code)]

use pseudogeo::catalog::{self, Params};
use pseudogeo::flow::{
    h2_signed, integrate_natural_ex, IntegrateOpts, PhaseEvent, PhaseState, Side,
};
use pseudogeo::metric::MetricField;
use pseudogeo::ode::EventDir;
use pseudogeo::projective::{commutation_residual, isotropic_invariance_residual, JetPoint};
use pseudogeo::roots::quadratic_proj_roots;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn metric(name: &str) -> MetricField {
    catalog::lookup(name, &Params::new()).unwrap().metric
}

pub fn torus(rho: f64) -> MetricField {
    let mut p = Params::new();
    p.insert("rho".into(), rho);
    catalog::lookup("torus", &p).unwrap().metric
}

/// Sampling boxes per catalog metric, kept clear of parabolic bands,
/// singular lines and domain edges.
pub fn sample_box(name: &str) -> (std::ops::Range<f64>, std::ops::Range<f64>) {
    match name {
        "flat" | "minkowski" => (-2.0..2.0, -2.0..2.0),
        "ex21" => (-2.0..2.0, 0.3..2.0),
        "ex22" => (-2.0..2.0, 0.3..2.0),
        "klein" | "klein_type" | "grushin_type" | "ex34" => (-2.0..2.0, 0.4..2.2),
        "sphere" => (-2.0..2.0, -1.2..2.9),
        "torus" => (-2.0..2.0, 0.0..6.28),
        other => panic!("no sample box for {other}"),
    }
}

/// A random start with `|D|` safely above the band-switch threshold.
pub fn random_start(m: &MetricField, name: &str, rng: &mut ChaCha8Rng) -> PhaseState {
    let (xr, yr) = sample_box(name);
    loop {
        let x = rng.gen_range(xr.clone());
        let y = rng.gen_range(yr.clone());
        let k = m.coefs(x, y);
        if k.discriminant().abs() <= 1e-3 * (k.a.abs() * k.c.abs() + k.b * k.b + 1e-3) {
            continue;
        }
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let speed = rng.gen_range(0.5..2.0);
        return PhaseState::new(0.0, x, y, speed * theta.cos(), speed * theta.sin());
    }
}

/// Confinement window for conservation properties, keeping paths in the
/// regime where the metric stays tame (away from singular lines).
pub fn property_window(name: &str) -> Option<(f64, f64)> {
    match name {
        "klein" | "klein_type" | "grushin_type" | "ex34" => Some((0.05, 8.0)),
        "ex21" | "ex22" => Some((0.05, 8.0)),
        _ => None,
    }
}

/// Integrate from `s0`, stopping before the parabolic band is entered, so
/// the whole path satisfies `|D| > delta_switch`.
fn confined_path(
    m: &MetricField,
    name: &str,
    s0: &PhaseState,
    t_max: f64,
) -> pseudogeo::flow::GeodesicPath {
    let opts = IntegrateOpts {
        window: property_window(name),
        ..Default::default()
    };
    let band_guard = PhaseEvent {
        label: "near-band",
        dir: EventDir::Falling,
        terminal: true,
        g: Box::new({
            let m = m.clone();
            move |st: &PhaseState| m.discriminant(st.x, st.y).abs() - 1e-3
        }),
    };
    integrate_natural_ex(m, s0, t_max, &opts, vec![band_guard])
        .unwrap()
        .0
}

/// Relative drift of the quadratic form along a confined path; also checks
/// that the sign never flips.
pub fn l_drift_and_persistence(
    m: &MetricField,
    name: &str,
    s0: &PhaseState,
    t_max: f64,
) -> (f64, bool) {
    let path = confined_path(m, name, s0, t_max);
    let l0 = m.coefs(s0.x, s0.y).form(s0.vx, s0.vy);
    let mut worst = 0.0f64;
    let mut sign_ok = true;
    for s in &path.samples {
        let k = m.coefs(s.x, s.y);
        let l = k.form(s.vx, s.vy);
        worst = worst.max((l - l0).abs() / l0.abs().max(1e-12));
        if l * l0 < 0.0 {
            sign_ok = false;
        }
    }
    (worst, sign_ok)
}

/// Relative drift of the signed energy level along a confined path
/// (y-only metrics).
pub fn h2_drift(m: &MetricField, name: &str, s0: &PhaseState, t_max: f64) -> f64 {
    let path = confined_path(m, name, s0, t_max);
    let h0 = h2_signed(m, s0);
    if !h0.is_finite() || h0.abs() < 1e-9 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for s in &path.samples {
        let h = h2_signed(m, s);
        worst = worst.max((h - h0).abs() / h0.abs());
    }
    worst
}

/// Commutation residual from a random bounded-slope start.
pub fn commutation_sample(m: &MetricField, name: &str, rng: &mut ChaCha8Rng) -> f64 {
    let (xr, yr) = sample_box(name);
    loop {
        let x = rng.gen_range(xr.clone());
        let y = rng.gen_range(yr.clone());
        let k = m.coefs(x, y);
        if k.discriminant().abs() <= 1e-2 {
            continue;
        }
        let p = rng.gen_range(-0.8..0.8);
        let s = PhaseState::new(0.0, x, y, 1.0, p);
        match commutation_residual(m, &s, 0.4) {
            Ok(r) => return r,
            Err(_) => continue,
        }
    }
}

/// Lorentzian sampling region per metric (where isotropic jets exist);
/// `None` when the metric has no Lorentzian points.
pub fn lorentzian_box(name: &str) -> Option<(std::ops::Range<f64>, std::ops::Range<f64>)> {
    match name {
        "minkowski" => Some((-2.0..2.0, -2.0..2.0)),
        "ex21" => Some((-2.0..2.0, -2.0..-0.3)),
        "ex22" => Some((-2.0..2.0, 0.3..2.0)),
        "sphere" => Some((-2.0..2.0, 0.35..2.7)),
        "torus" => Some((-2.0..2.0, 2.5..3.8)),
        _ => None,
    }
}

/// Isotropic-surface invariance residual from a random Lorentzian start.
pub fn invariance_sample(m: &MetricField, name: &str, rng: &mut ChaCha8Rng) -> Option<f64> {
    let (xr, yr) = lorentzian_box(name)?;
    for _ in 0..200 {
        let x = rng.gen_range(xr.clone());
        let y = rng.gen_range(yr.clone());
        let k = m.coefs(x, y);
        if k.discriminant() >= -1e-3 {
            continue;
        }
        let roots = quadratic_proj_roots(k.c, 2.0 * k.b, k.a, k.scale());
        for (dir, _) in roots {
            if dir.is_infinite() {
                continue;
            }
            let j = JetPoint::new(x, y, dir);
            if let Ok(r) = isotropic_invariance_residual(m, &j) {
                return Some(r);
            }
        }
    }
    panic!("could not place an isotropic jet for {name}");
}

/// Returning-family launch data per metric: `(y0, side)` where the family
/// has returning members.
pub fn returning_launches(name: &str) -> Vec<(f64, Side)> {
    match name {
        "klein" | "klein_type" | "grushin_type" | "ex34" => vec![(0.0, Side::Plus)],
        "sphere" => vec![(0.0, Side::Plus), (0.0, Side::Minus)],
        "torus" => vec![(std::f64::consts::PI, Side::Plus)],
        _ => vec![],
    }
}
