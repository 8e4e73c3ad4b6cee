//! Built-in metrics with machine-checkable ground-truth facts.
//!
//! Every fact is data that tests (and `list --verify`) execute against the
//! other modules; nothing here is prose-only.

use crate::error::{GeoError, Result};
use crate::family::{classify_family, ClassifyOpts, SideSpec};
use crate::metric::{classify_parabolic, MetricField, Strip, Symmetry};
use crate::projective::admissible_directions;
use crate::symmetry::horizontal_geodesics;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

pub type Params = BTreeMap<String, f64>;

/// A machine-checkable claim about a catalog metric.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fact {
    /// `y` is a horizontal geodesic with this level.
    HorizontalGeodesic { y: f64, h2: f64 },
    /// `y` is a transverse parabolic ordinate.
    ParabolicParallel { y: f64 },
    /// Number of admissible directions at `(0, y)`.
    AdmissibleCount { y: f64, count: usize },
    /// The non-isotropic admissible slopes at `(0, y)`.
    AdmissibleSlopes { y: f64, slopes: Vec<f64> },
    /// Number of classes in the family launched at `y0`.
    ClassCount {
        y0: f64,
        side: SideSpec,
        count: usize,
    },
    /// Finite positive class-boundary levels of the family at `y0`.
    ClassBoundaries {
        y0: f64,
        side: SideSpec,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: Params,
    pub metric: MetricField,
    pub facts: Vec<Fact>,
}

/// Parameter schema of a builtin: `(name, default, requirement)`.
pub fn param_schema(name: &str) -> &'static [(&'static str, f64, &'static str)] {
    match name {
        "torus" => &[("rho", 2.0, "rho > 1")],
        _ => &[],
    }
}

pub const NAMES: [&str; 10] = [
    "flat",
    "minkowski",
    "ex21",
    "ex22",
    "klein",
    "sphere",
    "torus",
    "klein_type",
    "grushin_type",
    "ex34",
];

/// Look up a builtin metric by name.
pub fn lookup(name: &str, params: &Params) -> Result<CatalogEntry> {
    for key in params.keys() {
        let known = param_schema(name).iter().any(|(n, _, _)| n == key);
        if !known {
            return Err(GeoError::BadParam(format!(
                "metric `{name}` does not take a parameter `{key}`"
            )));
        }
    }
    match name {
        "flat" => Ok(flat()),
        "minkowski" => Ok(minkowski()),
        "ex21" => Ok(ex21()),
        "ex22" => Ok(ex22()),
        "klein" => Ok(klein()),
        "sphere" => Ok(sphere()),
        "torus" => {
            let rho = params.get("rho").copied().unwrap_or(2.0);
            if !(rho > 1.0) {
                return Err(GeoError::BadParam(format!(
                    "torus requires rho > 1, got {rho}"
                )));
            }
            Ok(torus(rho))
        }
        "klein_type" => Ok(klein_type()),
        "grushin_type" => Ok(grushin_type()),
        "ex34" => Ok(ex34()),
        other => Err(GeoError::UnknownMetric(other.to_string())),
    }
}

/// All entries with default parameters.
pub fn entries() -> Vec<CatalogEntry> {
    NAMES
        .iter()
        .map(|n| lookup(n, &Params::new()).unwrap())
        .collect()
}

fn cf(
    f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
    Arc::new(f)
}

fn zero() -> Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> {
    cf(|_, _| 0.0)
}

fn flat() -> CatalogEntry {
    let metric = MetricField::new("flat", cf(|_, _| 1.0), zero(), cf(|_, _| 1.0))
        .with_symmetry(Symmetry::YOnly)
        .with_partials(zero(), zero(), zero(), zero(), zero(), zero());
    CatalogEntry {
        name: "flat",
        summary: "Euclidean plane dx^2 + dy^2",
        params: Params::new(),
        metric,
        facts: vec![],
    }
}

fn minkowski() -> CatalogEntry {
    let metric = MetricField::new("minkowski", cf(|_, _| 1.0), zero(), cf(|_, _| -1.0))
        .with_symmetry(Symmetry::YOnly)
        .with_partials(zero(), zero(), zero(), zero(), zero(), zero());
    CatalogEntry {
        name: "minkowski",
        summary: "constant Lorentzian plane dx^2 - dy^2",
        params: Params::new(),
        metric,
        facts: vec![],
    }
}

fn ex21() -> CatalogEntry {
    let metric = MetricField::new("ex21", cf(|_, _| 1.0), zero(), cf(|_, y| y))
        .with_symmetry(Symmetry::YOnly)
        .with_partials(zero(), zero(), zero(), zero(), zero(), cf(|_, _| 1.0));
    CatalogEntry {
        name: "ex21",
        summary: "dx^2 + y dy^2: signature change along y = 0, no returns",
        params: Params::new(),
        metric,
        facts: vec![Fact::ParabolicParallel { y: 0.0 }],
    }
}

fn ex22() -> CatalogEntry {
    let metric = MetricField::new("ex22", cf(|_, _| 1.0), zero(), cf(|_, y| -y))
        .with_symmetry(Symmetry::YOnly)
        .with_partials(zero(), zero(), zero(), zero(), zero(), cf(|_, _| -1.0));
    CatalogEntry {
        name: "ex22",
        summary: "dx^2 - y dy^2: closed-form family x = alpha t, y = t^(2/3)",
        params: Params::new(),
        metric,
        facts: vec![Fact::ParabolicParallel { y: 0.0 }],
    }
}

fn klein() -> CatalogEntry {
    let metric = MetricField::new(
        "klein",
        cf(|_, y| 1.0 / (y * y)),
        zero(),
        cf(|_, y| 1.0 / (y * y)),
    )
    .with_symmetry(Symmetry::YOnly)
    .with_singular_ordinates(vec![0.0])
    .with_partials(
        zero(),
        cf(|_, y| -2.0 / (y * y * y)),
        zero(),
        zero(),
        zero(),
        cf(|_, y| -2.0 / (y * y * y)),
    );
    CatalogEntry {
        name: "klein",
        summary: "hyperbolic half-plane (dx^2 + dy^2)/y^2",
        params: Params::new(),
        metric,
        facts: vec![
            Fact::ClassCount {
                y0: 0.0,
                side: SideSpec::Plus,
                count: 2,
            },
            Fact::ClassBoundaries {
                y0: 0.0,
                side: SideSpec::Plus,
                values: vec![],
            },
        ],
    }
}

fn sphere() -> CatalogEntry {
    let metric = MetricField::new(
        "sphere",
        cf(|_, y| 1.0 + y.sin()),
        zero(),
        cf(|_, y| -y.sin()),
    )
    .with_symmetry(Symmetry::YOnly)
    .with_domain(Strip::new(-FRAC_PI_2, 3.0 * FRAC_PI_2))
    .with_partials(
        zero(),
        cf(|_, y| y.cos()),
        zero(),
        zero(),
        zero(),
        cf(|_, y| -y.cos()),
    );
    CatalogEntry {
        name: "sphere",
        summary: "unit sphere in Minkowski 3-space: (1 + sin y) dx^2 - sin y dy^2",
        params: Params::new(),
        metric,
        facts: vec![
            Fact::HorizontalGeodesic {
                y: FRAC_PI_2,
                h2: 2.0,
            },
            Fact::ParabolicParallel { y: 0.0 },
            Fact::ParabolicParallel { y: PI },
            Fact::AdmissibleCount { y: 0.0, count: 1 },
            Fact::AdmissibleCount { y: PI, count: 1 },
            Fact::ClassCount {
                y0: 0.0,
                side: SideSpec::Both,
                count: 7,
            },
            Fact::ClassBoundaries {
                y0: 0.0,
                side: SideSpec::Both,
                values: vec![1.0, 2.0],
            },
        ],
    }
}

fn torus(rho: f64) -> CatalogEntry {
    let a = cf(move |_, y: f64| (rho + y.cos()).powi(2));
    let ay = cf(move |_, y: f64| -2.0 * (rho + y.cos()) * y.sin());
    let c = cf(|_, y: f64| -(2.0 * y).cos());
    let cy = cf(|_, y: f64| 2.0 * (2.0 * y).sin());
    let metric = MetricField::new("torus", a, zero(), c)
        .with_symmetry(Symmetry::YOnly)
        .with_partials(zero(), ay, zero(), zero(), zero(), cy);
    let mut params = Params::new();
    params.insert("rho".into(), rho);
    // the non-isotropic admissible slopes at the inner parallels:
    // p = +-(2/3) sqrt(a1/c1) with a1 = a'(3pi/4), c1 = (4/9) c'(3pi/4)
    let y_inner = 3.0 * PI / 4.0;
    let a1 = -2.0 * (rho + y_inner.cos()) * y_inner.sin();
    let c1 = (4.0 / 9.0) * 2.0 * (2.0 * y_inner).sin();
    let p_adm = (2.0 / 3.0) * (a1 / c1).sqrt();
    CatalogEntry {
        name: "torus",
        summary: "torus of revolution in Minkowski 3-space: (rho + cos y)^2 dx^2 - cos(2y) dy^2",
        params,
        metric,
        facts: vec![
            Fact::HorizontalGeodesic {
                y: 0.0,
                h2: (rho + 1.0) * (rho + 1.0),
            },
            Fact::HorizontalGeodesic {
                y: PI,
                h2: (rho - 1.0) * (rho - 1.0),
            },
            Fact::ParabolicParallel { y: PI / 4.0 },
            Fact::ParabolicParallel { y: 3.0 * PI / 4.0 },
            Fact::ParabolicParallel { y: 5.0 * PI / 4.0 },
            Fact::ParabolicParallel { y: -PI / 4.0 },
            Fact::AdmissibleCount {
                y: PI / 4.0,
                count: 1,
            },
            Fact::AdmissibleCount {
                y: 3.0 * PI / 4.0,
                count: 3,
            },
            Fact::AdmissibleSlopes {
                y: 3.0 * PI / 4.0,
                slopes: vec![-p_adm, p_adm],
            },
            Fact::ClassCount {
                y0: PI,
                side: SideSpec::Both,
                count: 5,
            },
            Fact::ClassBoundaries {
                y0: PI,
                side: SideSpec::Both,
                values: vec![
                    (rho - 1.0) * (rho - 1.0),
                    (rho - 1.0 / 2.0f64.sqrt()) * (rho - 1.0 / 2.0f64.sqrt()),
                ],
            },
        ],
    }
}

fn klein_type() -> CatalogEntry {
    // v = w = 1: coincides with the Klein metric, kept as the canonical
    // representative of the v/y^2, w/y^2 family
    let metric = MetricField::new(
        "klein_type",
        cf(|_, y| 1.0 / (y * y)),
        zero(),
        cf(|_, y| 1.0 / (y * y)),
    )
    .with_symmetry(Symmetry::YOnly)
    .with_singular_ordinates(vec![0.0])
    .with_partials(
        zero(),
        cf(|_, y| -2.0 / (y * y * y)),
        zero(),
        zero(),
        zero(),
        cf(|_, y| -2.0 / (y * y * y)),
    );
    CatalogEntry {
        name: "klein_type",
        summary: "Klein-like metric (v dx^2 + w dy^2)/y^2 with v = w = 1",
        params: Params::new(),
        metric,
        facts: vec![Fact::ClassCount {
            y0: 0.0,
            side: SideSpec::Plus,
            count: 2,
        }],
    }
}

fn grushin_type() -> CatalogEntry {
    let metric = MetricField::new(
        "grushin_type",
        cf(|_, y| 1.0 / (y * y)),
        zero(),
        cf(|_, _| 1.0),
    )
    .with_symmetry(Symmetry::YOnly)
    .with_singular_ordinates(vec![0.0])
    .with_partials(
        zero(),
        cf(|_, y| -2.0 / (y * y * y)),
        zero(),
        zero(),
        zero(),
        zero(),
    );
    CatalogEntry {
        name: "grushin_type",
        summary: "Grushin-like metric dx^2/y^2 + dy^2 (v = w = 1)",
        params: Params::new(),
        metric,
        facts: vec![Fact::ClassCount {
            y0: 0.0,
            side: SideSpec::Plus,
            count: 2,
        }],
    }
}

fn ex34() -> CatalogEntry {
    // Klein-like with v = 1 + y^4, w = 1: a(y) = y^2 + y^-2
    let metric = MetricField::new(
        "ex34",
        cf(|_, y| (1.0 + y.powi(4)) / (y * y)),
        zero(),
        cf(|_, y| 1.0 / (y * y)),
    )
    .with_symmetry(Symmetry::YOnly)
    .with_singular_ordinates(vec![0.0])
    .with_partials(
        zero(),
        cf(|_, y| 2.0 * y - 2.0 / (y * y * y)),
        zero(),
        zero(),
        zero(),
        cf(|_, y| -2.0 / (y * y * y)),
    );
    CatalogEntry {
        name: "ex34",
        summary:
            "Klein-like metric with v = 1 + y^4: a(y) = y^2 + 1/y^2, horizontal geodesics y = +-1",
        params: Params::new(),
        metric,
        facts: vec![
            Fact::HorizontalGeodesic { y: 1.0, h2: 2.0 },
            Fact::HorizontalGeodesic { y: -1.0, h2: 2.0 },
            Fact::ClassCount {
                y0: 0.0,
                side: SideSpec::Plus,
                count: 3,
            },
            Fact::ClassBoundaries {
                y0: 0.0,
                side: SideSpec::Plus,
                values: vec![2.0],
            },
        ],
    }
}

/// Execute one fact; `Err` carries a human-readable mismatch report.
pub fn run_fact(entry: &CatalogEntry, fact: &Fact) -> std::result::Result<(), String> {
    let m = &entry.metric;
    match fact {
        Fact::HorizontalGeodesic { y, h2 } => {
            let window = (y - 0.6, y + 0.6);
            let hs = horizontal_geodesics(m, window);
            let hit = hs
                .iter()
                .find(|h| (h.y_star - y).abs() < 1e-6 && h.confirmed);
            match hit {
                Some(h) if (h.h2 - h2).abs() <= 1e-6 * h2.abs().max(1.0) => Ok(()),
                Some(h) => Err(format!(
                    "horizontal geodesic at {y}: level {} != expected {h2}",
                    h.h2
                )),
                None => Err(format!("no confirmed horizontal geodesic near y = {y}")),
            }
        }
        Fact::ParabolicParallel { y } => {
            let class = classify_parabolic(m, 0.0, *y).map_err(|e| e.to_string())?;
            if class.transverse == Some(true) {
                Ok(())
            } else {
                Err(format!("parabolic point at y = {y} is not transverse"))
            }
        }
        Fact::AdmissibleCount { y, count } => {
            let set = admissible_directions(m, (0.0, *y)).map_err(|e| e.to_string())?;
            if set.count() == *count {
                Ok(())
            } else {
                Err(format!(
                    "admissible directions at y = {y}: got {}, expected {count}",
                    set.count()
                ))
            }
        }
        Fact::AdmissibleSlopes { y, slopes } => {
            let set = admissible_directions(m, (0.0, *y)).map_err(|e| e.to_string())?;
            let got = set.nonisotropic_slopes();
            if got.len() != slopes.len() {
                return Err(format!(
                    "slope count at y = {y}: got {:?}, expected {:?}",
                    got, slopes
                ));
            }
            for (g, w) in got.iter().zip(slopes) {
                if (g - w).abs() > 1e-9 * w.abs().max(1.0) {
                    return Err(format!("slope mismatch at y = {y}: {g} vs {w}"));
                }
            }
            Ok(())
        }
        Fact::ClassCount { y0, side, count } => {
            let opts = ClassifyOpts {
                verify_representatives: false,
                ..Default::default()
            };
            let classes = classify_family(m, *y0, *side, &opts).map_err(|e| e.to_string())?;
            if classes.len() == *count {
                Ok(())
            } else {
                Err(format!(
                    "family at y0 = {y0}: got {} classes, expected {count}",
                    classes.len()
                ))
            }
        }
        Fact::ClassBoundaries { y0, side, values } => {
            let opts = ClassifyOpts {
                verify_representatives: false,
                ..Default::default()
            };
            let classes = classify_family(m, *y0, *side, &opts).map_err(|e| e.to_string())?;
            let mut bounds: Vec<f64> = classes
                .iter()
                .flat_map(|c| c.range.finite_bounds())
                .filter(|v| *v > 1e-9)
                .collect();
            bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
            bounds.dedup_by(|a, b| (*a - *b).abs() <= 1e-7 * a.abs().max(1.0));
            if bounds.len() != values.len() {
                return Err(format!(
                    "boundaries at y0 = {y0}: got {bounds:?}, expected {values:?}"
                ));
            }
            for (g, w) in bounds.iter().zip(values) {
                if (g - w).abs() > 1e-6 * w.abs().max(1.0) {
                    return Err(format!("boundary mismatch: {g} vs {w}"));
                }
            }
            Ok(())
        }
    }
}
