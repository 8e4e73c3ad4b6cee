//! Real projective roots of low-degree polynomials.
//!
//! Directions on the projective line are returned in the two-chart
//! representation of [`ProjDir`], with a root at infinity recognized through
//! the homogeneous form when leading coefficients vanish. The cubic solver
//! goes through companion-matrix eigenvalues, which stays well behaved near
//! double roots.

use crate::projective::ProjDir;
use nalgebra::Matrix3;

/// Relative threshold below which a leading coefficient counts as zero,
/// pushing a root to infinity.
const LEAD_TOL: f64 = 1e-10;
/// Imaginary parts below this (relative to the coefficient scale) count as
/// real.
const IM_TOL: f64 = 1e-8;
/// Projective distance under which two roots are merged into one with
/// higher multiplicity.
const CLUSTER_TOL: f64 = 1e-6;

/// Real projective roots of `c2 p^2 + c1 p + c0`, with multiplicities.
///
/// `scale` sets the relative zero threshold for the coefficients. An
/// identically zero polynomial returns an empty list; callers that need to
/// distinguish that case should test the coefficients themselves.
pub fn quadratic_proj_roots(c2: f64, c1: f64, c0: f64, scale: f64) -> Vec<(ProjDir, u8)> {
    let s = c2
        .abs()
        .max(c1.abs())
        .max(c0.abs())
        .max(scale.abs() * 1e-15);
    if s == 0.0 {
        return Vec::new();
    }
    let tol = LEAD_TOL * s;
    if c2.abs() <= tol {
        if c1.abs() <= tol {
            if c0.abs() <= tol {
                return Vec::new(); // identically zero within tolerance
            }
            // constant: double root at infinity in the homogeneous form
            return vec![(ProjDir::infinity(), 2)];
        }
        // linear: one finite root plus one at infinity
        return vec![(ProjDir::from_p(-c0 / c1), 1), (ProjDir::infinity(), 1)];
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    let disc_scale = (c1 * c1).abs().max((4.0 * c2 * c0).abs()).max(1e-300);
    if disc.abs() <= 1e-12 * disc_scale {
        return vec![(ProjDir::from_p(-c1 / (2.0 * c2)), 2)];
    }
    if disc < 0.0 {
        return Vec::new();
    }
    // numerically stable split
    let sq = disc.sqrt();
    let q = -0.5 * (c1 + c1.signum() * sq);
    let (r1, r2) = if c1 == 0.0 {
        let r = (-c0 / c2).sqrt();
        (r, -r)
    } else {
        (q / c2, c0 / q)
    };
    vec![(ProjDir::from_p(r1), 1), (ProjDir::from_p(r2), 1)]
}

#[derive(Debug, Clone)]
pub struct CubicRoots {
    pub roots: Vec<(ProjDir, u8)>,
    /// All coefficients vanished within tolerance.
    pub identically_zero: bool,
}

/// Real projective roots of `c3 p^3 + c2 p^2 + c1 p + c0` with
/// multiplicities. Degree drops push roots to infinity.
pub fn cubic_proj_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> CubicRoots {
    let s = c3.abs().max(c2.abs()).max(c1.abs()).max(c0.abs());
    if s == 0.0 || s < 1e-300 {
        return CubicRoots {
            roots: Vec::new(),
            identically_zero: true,
        };
    }
    let tol = LEAD_TOL * s;
    if c3.abs() <= tol {
        // root at infinity; the rest from the quadratic part
        let mut roots = quadratic_proj_roots(c2, c1, c0, s);
        let inf_mult = if c2.abs() <= tol {
            if c1.abs() <= tol {
                3
            } else {
                2
            }
        } else {
            1
        };
        // quadratic_proj_roots already reports infinity for its own degree
        // drops; merge rather than double-count
        roots.retain(|(d, _)| !d.is_infinite());
        roots.push((ProjDir::infinity(), inf_mult));
        return CubicRoots {
            roots,
            identically_zero: false,
        };
    }

    // companion matrix of the monic cubic p^3 + b2 p^2 + b1 p + b0
    let b2 = c2 / c3;
    let b1 = c1 / c3;
    let b0 = c0 / c3;
    let comp = Matrix3::new(0.0, 0.0, -b0, 1.0, 0.0, -b1, 0.0, 1.0, -b2);
    let eig = comp.complex_eigenvalues();
    let coef_scale = 1.0 + b2.abs().max(b1.abs()).max(b0.abs());
    let mut real_roots: Vec<f64> = Vec::new();
    for e in eig.iter() {
        if e.im.abs() <= IM_TOL * coef_scale * (1.0 + e.re.abs()) {
            real_roots.push(e.re);
        }
    }
    real_roots.sort_by(|a, b| a.partial_cmp(b).unwrap());

    // one Newton polish per root
    let f = |p: f64| ((p + b2) * p + b1) * p + b0;
    let fd = |p: f64| (3.0 * p + 2.0 * b2) * p + b1;
    for r in real_roots.iter_mut() {
        for _ in 0..3 {
            let d = fd(*r);
            if d.abs() < 1e-300 {
                break;
            }
            let step = f(*r) / d;
            if !step.is_finite() || step.abs() > 1.0 + r.abs() {
                break;
            }
            *r -= step;
        }
    }

    // cluster near-coincident roots into multiplicities
    let mut roots: Vec<(ProjDir, u8)> = Vec::new();
    for r in real_roots {
        let d = ProjDir::from_p(r);
        match roots.last_mut() {
            Some((prev, mult)) if ProjDir::dist(*prev, d) < CLUSTER_TOL => *mult += 1,
            _ => roots.push((d, 1)),
        }
    }
    CubicRoots {
        roots,
        identically_zero: false,
    }
}
