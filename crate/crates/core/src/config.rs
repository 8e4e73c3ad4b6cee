//! Metric definitions from structured text.
//!
//! A config file either names a builtin (with optional parameters) or
//! gives the coefficients as expression strings in `x`, `y`:
//!
//! ```toml
//! a = "1 + sin(y)"
//! b = "0"
//! c = "-sin(y)"
//! symmetry = "y-only"          # optional, default "general"
//! domain = [-1.5707963, 4.7123889]   # optional open strip in y
//! singular = [0.0]             # optional singular ordinates
//! ```
//!
//! or
//!
//! ```toml
//! builtin = "torus"
//! [params]
//! rho = 2.0
//! ```

use crate::catalog::{self, Params};
use crate::error::{GeoError, Result};
use crate::expr::Expr;
use crate::metric::{MetricField, Strip, Symmetry};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    builtin: Option<String>,
    #[serde(default)]
    params: Params,
    a: Option<String>,
    b: Option<String>,
    c: Option<String>,
    symmetry: Option<String>,
    domain: Option<[f64; 2]>,
    #[serde(default)]
    singular: Vec<f64>,
    name: Option<String>,
}

/// Parse a TOML metric definition.
pub fn metric_from_str(src: &str) -> Result<MetricField> {
    let cfg: ConfigFile = toml::from_str(src).map_err(|e| GeoError::Config(e.to_string()))?;
    if let Some(builtin) = &cfg.builtin {
        if cfg.a.is_some() || cfg.b.is_some() || cfg.c.is_some() {
            return Err(GeoError::Config(
                "give either `builtin` or coefficient expressions, not both".into(),
            ));
        }
        return Ok(catalog::lookup(builtin, &cfg.params)?.metric);
    }
    let a = cfg
        .a
        .as_deref()
        .ok_or_else(|| GeoError::Config("missing coefficient `a`".into()))?;
    let b = cfg.b.as_deref().unwrap_or("0");
    let c = cfg
        .c
        .as_deref()
        .ok_or_else(|| GeoError::Config("missing coefficient `c`".into()))?;
    let name = cfg.name.clone().unwrap_or_else(|| "custom".to_string());
    let mut m = MetricField::new(
        name,
        Expr::parse(a)?.bind(),
        Expr::parse(b)?.bind(),
        Expr::parse(c)?.bind(),
    );
    match cfg.symmetry.as_deref() {
        None | Some("general") => {}
        Some("y-only") => m = m.with_symmetry(Symmetry::YOnly),
        Some(other) => {
            return Err(GeoError::Config(format!(
                "unknown symmetry `{other}` (use `general` or `y-only`)"
            )))
        }
    }
    if let Some([lo, hi]) = cfg.domain {
        if !(lo < hi) {
            return Err(GeoError::Config(format!("empty domain [{lo}, {hi}]")));
        }
        m = m.with_domain(Strip::new(lo, hi));
    }
    if !cfg.singular.is_empty() {
        m = m.with_singular_ordinates(cfg.singular.clone());
    }
    Ok(m)
}

/// Read a metric definition from a file.
pub fn metric_from_path(path: &std::path::Path) -> Result<MetricField> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| GeoError::Config(format!("{}: {e}", path.display())))?;
    metric_from_str(&src)
}
