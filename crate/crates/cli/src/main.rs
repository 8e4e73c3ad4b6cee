//! Command-line front end for the geodesic toolkit.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when an
//! integration ends in a numerical stop condition (step underflow).

mod svg;

use clap::{Args, Parser, Subcommand};
use pseudogeo::catalog::{self, Params};
use pseudogeo::family::{classify_family, ClassifyOpts, SideSpec};
use pseudogeo::flow::{
    integrate_natural, shoot_from_parabolic, shoot_from_singular, Branch, GeodesicPath,
    IntegrateOpts, PhaseState, ShootOpts, Side, SingularFamily, StopReason,
};
use pseudogeo::projective::admissible_directions;
use pseudogeo::symmetry::{
    alpha_for_level, detect_launch_kind, horizontal_geodesics, LaunchKind, Level,
};
use pseudogeo::{config, CurveType, GeoError, MetricField};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pseudogeo",
    about = "Integrate, shoot and classify geodesics of two-dimensional pseudo-Riemannian metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct MetricArgs {
    /// Builtin metric, optionally with parameters: NAME[:k=v,...]
    #[arg(long, conflicts_with = "config")]
    metric: Option<String>,
    /// Metric definition file (structured text)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// List the builtin metrics and their parameter schemas
    List {
        /// Execute each entry's ground-truth facts and report the outcome
        #[arg(long)]
        verify: bool,
    },
    /// Integrate a naturally parametrized geodesic and emit the path as JSON
    Integrate {
        #[command(flatten)]
        metric: MetricArgs,
        /// Start state "x,y,vx,vy"
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        /// Natural-parameter horizon (may be negative)
        #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
        t_max: f64,
        /// Output file (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Admissible directions at a parabolic point, as JSON
    Admissible {
        #[command(flatten)]
        metric: MetricArgs,
        /// The point "x,y"
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the geodesic family launched from a horizontal line
    Classify {
        #[command(flatten)]
        metric: MetricArgs,
        /// Launch ordinate
        #[arg(long, allow_negative_numbers = true)]
        y0: f64,
        /// Which side(s) of the launch line to classify
        #[arg(long, default_value = "both")]
        side: String,
        /// Skip the integration check of returning representatives
        #[arg(long)]
        no_verify: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a family portrait as SVG
    Portrait {
        #[command(flatten)]
        metric: MetricArgs,
        /// Launch point "x,y"
        #[arg(long, allow_hyphen_values = true)]
        launch: String,
        /// Family indices, comma separated (e.g. "0,0.25,0.6667,1,2")
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        /// Energy levels, comma separated; converted to indices
        #[arg(long, allow_hyphen_values = true)]
        h2: Option<String>,
        /// Plot window "x0:x1,y0:y1"
        #[arg(long, allow_hyphen_values = true)]
        window: Option<String>,
        /// Output format
        #[arg(long, default_value = "svg")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, GeoError> {
    match cli.command {
        Command::List { verify } => cmd_list(verify),
        Command::Integrate {
            metric,
            start,
            t_max,
            out,
        } => cmd_integrate(&metric, &start, t_max, out.as_deref()),
        Command::Admissible { metric, point, out } => {
            cmd_admissible(&metric, &point, out.as_deref())
        }
        Command::Classify {
            metric,
            y0,
            side,
            no_verify,
            out,
        } => cmd_classify(&metric, y0, &side, no_verify, out.as_deref()),
        Command::Portrait {
            metric,
            launch,
            alpha,
            h2,
            window,
            format,
            out,
        } => cmd_portrait(
            &metric,
            &launch,
            alpha.as_deref(),
            h2.as_deref(),
            window.as_deref(),
            &format,
            out.as_deref(),
        ),
    }
}

fn load_metric(args: &MetricArgs) -> Result<MetricField, GeoError> {
    match (&args.metric, &args.config) {
        (Some(spec), None) => {
            let (name, params) = parse_metric_spec(spec)?;
            Ok(catalog::lookup(&name, &params)?.metric)
        }
        (None, Some(path)) => config::metric_from_path(path),
        _ => Err(GeoError::BadParam(
            "give exactly one of --metric or --config".into(),
        )),
    }
}

fn parse_metric_spec(spec: &str) -> Result<(String, Params), GeoError> {
    let mut parts = spec.splitn(2, ':');
    let name = parts.next().unwrap_or_default().to_string();
    let mut params = Params::new();
    if let Some(rest) = parts.next() {
        for kv in rest.split(',').filter(|s| !s.is_empty()) {
            let mut it = kv.splitn(2, '=');
            let key = it.next().unwrap_or_default();
            let val = it
                .next()
                .ok_or_else(|| GeoError::BadParam(format!("parameter `{kv}` needs k=v form")))?;
            let v: f64 = val
                .parse()
                .map_err(|_| GeoError::BadParam(format!("bad numeric value in `{kv}`")))?;
            params.insert(key.to_string(), v);
        }
    }
    Ok((name, params))
}

fn parse_floats(s: &str, expect: usize, what: &str) -> Result<Vec<f64>, GeoError> {
    let vals: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let vals = vals.map_err(|_| GeoError::BadParam(format!("cannot parse {what} from `{s}`")))?;
    if expect > 0 && vals.len() != expect {
        return Err(GeoError::BadParam(format!(
            "{what} needs {expect} comma-separated numbers, got {}",
            vals.len()
        )));
    }
    Ok(vals)
}

fn parse_window(s: &str) -> Result<svg::Window, GeoError> {
    // "x0:x1,y0:y1"
    let err = || GeoError::BadParam(format!("cannot parse window from `{s}` (use x0:x1,y0:y1)"));
    let mut parts = s.split(',');
    let xs = parts.next().ok_or_else(err)?;
    let ys = parts.next().ok_or_else(err)?;
    if parts.next().is_some() {
        return Err(err());
    }
    let parse_range = |t: &str| -> Result<(f64, f64), GeoError> {
        let mut it = t.split(':');
        let a: f64 = it
            .next()
            .ok_or_else(err)?
            .trim()
            .parse()
            .map_err(|_| err())?;
        let b: f64 = it
            .next()
            .ok_or_else(err)?
            .trim()
            .parse()
            .map_err(|_| err())?;
        if it.next().is_some() || !(a < b) {
            return Err(err());
        }
        Ok((a, b))
    };
    let (x0, x1) = parse_range(xs)?;
    let (y0, y1) = parse_range(ys)?;
    Ok(svg::Window { x0, x1, y0, y1 })
}

fn emit(text: &str, out: Option<&std::path::Path>) -> Result<(), GeoError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| GeoError::Config(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_list(verify: bool) -> Result<ExitCode, GeoError> {
    let mut failures = 0usize;
    for entry in catalog::entries() {
        let schema = catalog::param_schema(entry.name);
        let params = if schema.is_empty() {
            String::new()
        } else {
            let names: Vec<String> = schema
                .iter()
                .map(|(n, d, req)| format!("{n}={d} ({req})"))
                .collect();
            format!(" [{}]", names.join(", "))
        };
        println!("{}{params} - {}", entry.name, entry.summary);
        if verify {
            for fact in &entry.facts {
                match catalog::run_fact(&entry, fact) {
                    Ok(()) => println!("    ok   {fact:?}"),
                    Err(msg) => {
                        failures += 1;
                        println!("    FAIL {fact:?}: {msg}");
                    }
                }
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} fact(s) failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct IntegrateOutput<'a> {
    metric: &'a str,
    #[serde(flatten)]
    path: &'a GeodesicPath,
}

fn cmd_integrate(
    margs: &MetricArgs,
    start: &str,
    t_max: f64,
    out: Option<&std::path::Path>,
) -> Result<ExitCode, GeoError> {
    let m = load_metric(margs)?;
    let v = parse_floats(start, 4, "start state")?;
    let s0 = PhaseState::new(0.0, v[0], v[1], v[2], v[3]);
    let path = integrate_natural(&m, &s0, t_max, &IntegrateOpts::default())?;
    let doc = IntegrateOutput {
        metric: &m.name,
        path: &path,
    };
    let json = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
    emit(&json, out)?;
    if path.stop_reason == StopReason::StepUnderflow {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct AdmissibleOutput<'a> {
    metric: &'a str,
    point: [f64; 2],
    count: usize,
    degenerate: bool,
    directions: Vec<AdmissibleDirOut>,
}

#[derive(Serialize)]
struct AdmissibleDirOut {
    slope: Option<f64>,
    vertical: bool,
    multiplicity: u8,
    kind: String,
}

fn cmd_admissible(
    margs: &MetricArgs,
    point: &str,
    out: Option<&std::path::Path>,
) -> Result<ExitCode, GeoError> {
    let m = load_metric(margs)?;
    let v = parse_floats(point, 2, "point")?;
    let set = admissible_directions(&m, (v[0], v[1]))?;
    let doc = AdmissibleOutput {
        metric: &m.name,
        point: [v[0], v[1]],
        count: set.count(),
        degenerate: set.degenerate,
        directions: set
            .directions
            .iter()
            .map(|d| AdmissibleDirOut {
                slope: if d.dir.is_infinite() {
                    None
                } else {
                    Some(d.dir.p())
                },
                vertical: d.dir.is_infinite(),
                multiplicity: d.multiplicity,
                kind: format!("{:?}", d.kind).to_lowercase(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
    emit(&json, out)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ClassifyRow {
    #[serde(rename = "type")]
    type_tag: String,
    h2_range: String,
    endpoint_1: String,
    endpoint_2: String,
    description: String,
    representative_alpha: Option<f64>,
    verified: Option<bool>,
}

#[derive(Serialize)]
struct ClassifyOutput<'a> {
    metric: &'a str,
    y0: f64,
    launch_kind: String,
    rows: Vec<ClassifyRow>,
}

fn cmd_classify(
    margs: &MetricArgs,
    y0: f64,
    side: &str,
    no_verify: bool,
    out: Option<&std::path::Path>,
) -> Result<ExitCode, GeoError> {
    let m = load_metric(margs)?;
    let side_spec = match side {
        "plus" => SideSpec::Plus,
        "minus" => SideSpec::Minus,
        "both" => SideSpec::Both,
        other => {
            return Err(GeoError::BadParam(format!(
                "unknown side `{other}` (use plus, minus or both)"
            )))
        }
    };
    let kind = detect_launch_kind(&m, y0)?;
    let opts = ClassifyOpts {
        verify_representatives: !no_verify,
        ..Default::default()
    };
    let classes = classify_family(&m, y0, side_spec, &opts)?;
    let rows = classes
        .iter()
        .map(|c| ClassifyRow {
            type_tag: format!("{:?}", c.type_tag).to_lowercase(),
            h2_range: c.range.to_string(),
            endpoint_1: c.endpoint_first.to_string(),
            endpoint_2: c.endpoint_second.to_string(),
            description: c.description.clone(),
            representative_alpha: c.representative_alpha,
            verified: c.verified,
        })
        .collect();
    let doc = ClassifyOutput {
        metric: &m.name,
        y0,
        launch_kind: format!("{kind:?}").to_lowercase(),
        rows,
    };
    let json = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
    emit(&json, out)?;
    Ok(ExitCode::SUCCESS)
}

fn path_points(path: &GeodesicPath) -> Vec<(f64, f64)> {
    path.samples.iter().map(|s| (s.x, s.y)).collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_portrait(
    margs: &MetricArgs,
    launch: &str,
    alpha: Option<&str>,
    h2: Option<&str>,
    window: Option<&str>,
    format: &str,
    out: Option<&std::path::Path>,
) -> Result<ExitCode, GeoError> {
    let m = load_metric(margs)?;
    let v = parse_floats(launch, 2, "launch point")?;
    let (x0, y0) = (v[0], v[1]);
    let kind = detect_launch_kind(&m, y0)?;

    // family indices: explicit alphas, or levels converted through the
    // launch map
    let mut alphas: Vec<f64> = Vec::new();
    if let Some(list) = alpha {
        alphas.extend(parse_floats(list, 0, "alpha list")?);
    }
    if let Some(list) = h2 {
        for lv in parse_floats(list, 0, "h2 list")? {
            for side in [Side::Plus, Side::Minus] {
                if let Some(a) = alpha_for_level(&m, y0, &Level::Finite(lv), side, kind) {
                    alphas.push(a);
                }
            }
        }
    }
    if alphas.is_empty() {
        return Err(GeoError::BadParam(
            "give at least one family index via --alpha or --h2".into(),
        ));
    }
    alphas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    alphas.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let win = match window {
        Some(w) => parse_window(w)?,
        None => default_window(&m, x0, y0),
    };

    let iopts = IntegrateOpts {
        window: Some((
            win.y0 - 0.2 * (win.y1 - win.y0),
            win.y1 + 0.2 * (win.y1 - win.y0),
        )),
        max_steps: 120_000,
        ..Default::default()
    };
    let mut curves: Vec<svg::Polyline> = Vec::new();
    let mut launched = 0usize;

    for &a in &alphas {
        let mut members: Vec<(GeodesicPath, String)> = Vec::new();
        match kind {
            LaunchKind::Parabolic => {
                for side in [Side::Minus, Side::Plus] {
                    for branch in [Branch::Left, Branch::Right] {
                        let opts = ShootOpts {
                            t_max: 50.0,
                            integrate: iopts,
                            ..Default::default()
                        };
                        if let Ok(p) = shoot_from_parabolic(&m, (x0, y0), a, side, branch, &opts) {
                            members.push((p, format!("alpha={a:.6} {side:?}/{branch:?}")));
                        }
                    }
                }
            }
            LaunchKind::Klein | LaunchKind::Grushin => {
                let family = if kind == LaunchKind::Klein {
                    SingularFamily::Klein
                } else {
                    SingularFamily::Grushin
                };
                for side in [Side::Minus, Side::Plus] {
                    for sgn in [-1.0, 1.0] {
                        if let Ok(p) = shoot_from_singular(
                            &m,
                            (x0, y0),
                            sgn * a,
                            side,
                            family,
                            1e-4,
                            &iopts,
                            50.0,
                        ) {
                            members.push((p, format!("alpha={:.6} {side:?}", sgn * a)));
                        }
                    }
                }
            }
            LaunchKind::Regular => {
                // alpha = 1/p at the launch point; run both directions
                let vdir = if a.is_infinite() {
                    (1.0, 0.0)
                } else {
                    (a, 1.0)
                };
                for sgn in [-1.0, 1.0] {
                    let s0 = PhaseState::new(0.0, x0, y0, sgn * vdir.0, sgn * vdir.1);
                    if let Ok(p) = integrate_natural(&m, &s0, 50.0, &iopts) {
                        members.push((p, format!("alpha={a:.6} dir={sgn}")));
                    }
                }
            }
        }
        launched += members.len();
        for (path, label) in members {
            curves.push(svg::Polyline {
                points: path_points(&path),
                kind: path.type_tag,
                dashed: false,
                label,
            });
        }
    }
    if launched == 0 {
        return Err(GeoError::BadParam(
            "no launchable family members (unreachable launch point?)".into(),
        ));
    }

    // dashed members along non-isotropic admissible directions, when the
    // launch point carries them
    if kind == LaunchKind::Parabolic {
        if let Ok(set) = admissible_directions(&m, (x0, y0)) {
            for d in set.nonisotropic_slopes() {
                for sgn in [-1.0, 1.0] {
                    let eps = 1e-5;
                    let s0 = PhaseState::new(
                        0.0,
                        x0 + sgn * eps / d.abs().max(1e-9),
                        y0 + sgn * eps * d.signum(),
                        sgn * 1.0,
                        sgn * d,
                    );
                    if let Ok(p) = integrate_natural(&m, &s0, 50.0, &iopts) {
                        curves.push(svg::Polyline {
                            points: path_points(&p),
                            kind: p.type_tag,
                            dashed: true,
                            label: format!("admissible slope {d:.6}"),
                        });
                    }
                }
            }
        }
    }

    // horizontal geodesics in the window, dashed
    let mut hlines: Vec<svg::HLine> = Vec::new();
    for hg in horizontal_geodesics(&m, (win.y0, win.y1)) {
        if hg.confirmed {
            hlines.push(svg::HLine {
                y: hg.y_star,
                dashed: true,
                color: svg::COLOR_TIMELIKE,
                label: format!("y = {:.4} (h2 = {:.4})", hg.y_star, hg.h2),
            });
        }
    }
    // parabolic parallels crossing the window, as thin solid lines
    for yq in parabolic_ordinates(&m, win.y0, win.y1) {
        hlines.push(svg::HLine {
            y: yq,
            dashed: false,
            color: svg::COLOR_PARABOLIC,
            label: format!("parabolic y = {yq:.4}"),
        });
    }

    let portrait = svg::Portrait {
        window: win,
        curves,
        hlines,
        title: format!(
            "{}: family from ({x0:.4}, {y0:.4}), {} member curve(s)",
            m.name, launched
        ),
    };
    match format {
        "svg" => emit(&svg::render(&portrait), out)?,
        "json" => {
            #[derive(Serialize)]
            struct CurveOut {
                label: String,
                kind: CurveType,
                points: Vec<(f64, f64)>,
            }
            let doc: Vec<CurveOut> = portrait
                .curves
                .iter()
                .map(|c| CurveOut {
                    label: c.label.clone(),
                    kind: c.kind,
                    points: c.points.clone(),
                })
                .collect();
            emit(
                &(serde_json::to_string_pretty(&doc).expect("serializable") + "\n"),
                out,
            )?;
        }
        other => {
            return Err(GeoError::BadParam(format!(
                "unknown format `{other}` (use svg or json)"
            )))
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn default_window(m: &MetricField, x0: f64, y0: f64) -> svg::Window {
    let lo = if m.domain.lo.is_finite() {
        m.domain.lo
    } else {
        y0 - 3.0
    };
    let hi = if m.domain.hi.is_finite() {
        m.domain.hi
    } else {
        y0 + 3.0
    };
    svg::Window {
        x0: x0 - 3.0,
        x1: x0 + 3.0,
        y0: lo,
        y1: hi,
    }
}

/// Parabolic ordinates of a y-only metric inside a window, by sign scan of
/// the discriminant.
fn parabolic_ordinates(m: &MetricField, lo: f64, hi: f64) -> Vec<f64> {
    let n = 2048;
    let mut out = Vec::new();
    let g = |y: f64| m.discriminant(0.0, y);
    let mut prev_y = lo;
    let mut prev = g(prev_y);
    for i in 1..=n {
        let y = lo + (hi - lo) * i as f64 / n as f64;
        let cur = g(y);
        if prev.is_finite() && cur.is_finite() && prev * cur < 0.0 {
            let (mut a, mut b) = (prev_y, y);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if (g(mid) <= 0.0) == (g(a) <= 0.0) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            out.push(0.5 * (a + b));
        }
        prev_y = y;
        prev = cur;
    }
    out
}
