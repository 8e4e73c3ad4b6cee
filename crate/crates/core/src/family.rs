//! Qualitative classification of a whole geodesic family.
//!
//! For a launch ordinate `y0`, the admissible energy levels split into
//! ranges determined by the launch-constant map; scanning the turning
//! analysis over each range and bisecting where the verdict changes yields
//! the maximal level intervals of constant qualitative behavior, plus the
//! singleton levels (asymptotes to horizontal geodesics, the isotropic
//! level, regular boundary crossings) separating them.

use crate::error::{GeoError, Result};
use crate::flow::{
    h2_signed, integrate_natural_ex, parabolic_seed, Branch, IntegrateOpts, PhaseEvent, PhaseState,
    Side,
};
use crate::metric::{CurveType, MetricField};
use crate::ode::EventDir;
use crate::symmetry::{
    alpha_for_level, build_side_scan, detect_launch_kind, h_of_launch, singular_solution_test,
    turning_core, validate_side, CaseTag, LaunchKind, Level, SideScan, SingularKind,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelRange {
    Interval {
        lo: f64,
        hi: f64,
        lo_closed: bool,
        hi_closed: bool,
    },
    Singleton {
        h2: f64,
    },
    /// The isotropic level `h^2 = inf`.
    IsotropicPoint,
}

impl LevelRange {
    /// Finite interval endpoints, for boundary assertions.
    pub fn finite_bounds(&self) -> Vec<f64> {
        match self {
            LevelRange::Singleton { h2 } => vec![*h2],
            LevelRange::IsotropicPoint => vec![],
            LevelRange::Interval { lo, hi, .. } => {
                let mut v = Vec::new();
                if lo.is_finite() {
                    v.push(*lo);
                }
                if hi.is_finite() {
                    v.push(*hi);
                }
                v
            }
        }
    }

    pub fn contains(&self, h2: f64) -> bool {
        match self {
            LevelRange::Singleton { h2: v } => (h2 - v).abs() < 1e-9 * v.abs().max(1.0),
            LevelRange::IsotropicPoint => false,
            LevelRange::Interval {
                lo,
                hi,
                lo_closed,
                hi_closed,
            } => (h2 > *lo || (*lo_closed && h2 == *lo)) && (h2 < *hi || (*hi_closed && h2 == *hi)),
        }
    }
}

impl std::fmt::Display for LevelRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn num(v: f64) -> String {
            if v == f64::INFINITY {
                "+inf".into()
            } else if v == f64::NEG_INFINITY {
                "-inf".into()
            } else {
                format!("{v:.9}")
            }
        }
        match self {
            LevelRange::Singleton { h2 } => write!(f, "h2 = {}", num(*h2)),
            LevelRange::IsotropicPoint => write!(f, "h2 = inf"),
            LevelRange::Interval {
                lo,
                hi,
                lo_closed,
                hi_closed,
            } => {
                let l = if *lo_closed { "<=" } else { "<" };
                let r = if *hi_closed { "<=" } else { "<" };
                write!(f, "{} {} h2 {} {}", num(*lo), l, r, num(*hi))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Endpoint {
    /// Cusp arrival on a parabolic ordinate.
    Cusp { y: f64 },
    /// Regular crossing of a parabolic ordinate with a non-isotropic
    /// admissible direction.
    Regular { y: f64 },
    /// Outgoing end on the launch line.
    Launch { y: f64 },
    /// Returns to the launch line.
    ReturnsToLaunch { y: f64 },
    /// Asymptotic to the horizontal geodesic at this ordinate.
    WindsTo { y: f64 },
    /// Leaves the window through this ordinate (may be infinite).
    Boundary { y: f64 },
    /// No endpoint: the geodesic oscillates inside the window forever.
    None,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Cusp { y } => write!(f, "cusp at y = {y:.6}"),
            Endpoint::Regular { y } => write!(f, "regular crossing at y = {y:.6}"),
            Endpoint::Launch { y } => write!(f, "launch at y = {y:.6}"),
            Endpoint::ReturnsToLaunch { y } => write!(f, "returns to y = {y:.6}"),
            Endpoint::WindsTo { y } => write!(f, "winds toward y = {y:.6}"),
            Endpoint::Boundary { y } => {
                if y.is_finite() {
                    write!(f, "leaves through y = {y:.6}")
                } else if *y > 0.0 {
                    write!(f, "escapes to y = +inf")
                } else {
                    write!(f, "escapes to y = -inf")
                }
            }
            Endpoint::None => write!(f, "-"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyClass {
    /// The half-plane the members explore; `None` for regular launches whose
    /// members cross the launch line and belong to both sides.
    pub side: Option<Side>,
    pub range: LevelRange,
    pub type_tag: CurveType,
    pub case_plus: Option<CaseTag>,
    pub case_minus: Option<CaseTag>,
    pub endpoint_first: Endpoint,
    pub endpoint_second: Endpoint,
    pub description: String,
    pub representative_alpha: Option<f64>,
    pub representative_h2: Level,
    /// Integration check of a representative member (returning classes
    /// only); `Some(false)` downgrades the class to unverified.
    pub verified: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideSpec {
    Plus,
    Minus,
    Both,
}

impl SideSpec {
    fn includes(self, s: Side) -> bool {
        matches!(
            (self, s),
            (SideSpec::Both, _) | (SideSpec::Plus, Side::Plus) | (SideSpec::Minus, Side::Minus)
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifyOpts {
    /// Levels sampled per gap between candidate boundaries.
    pub grid_per_gap: usize,
    /// Relative bisection resolution for class boundaries in `h^2`.
    pub level_bisect_rel: f64,
    /// Integrate one representative per returning class and check it turns
    /// where predicted and comes back transversally.
    pub verify_representatives: bool,
    pub integrate: IntegrateOpts,
}

impl Default for ClassifyOpts {
    fn default() -> Self {
        ClassifyOpts {
            grid_per_gap: 24,
            level_bisect_rel: 1e-9,
            verify_representatives: true,
            integrate: IntegrateOpts::default(),
        }
    }
}

/// Arrival-style tolerance: a level this close to `a` at the window edge
/// counts as a regular (non-isotropic) crossing of that parallel.
const ARRIVAL_TOL_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
struct LevelSig {
    case_plus: Option<CaseTag>,
    case_minus: Option<CaseTag>,
    arrival_plus: ArrivalStyle,
    arrival_minus: ArrivalStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArrivalStyle {
    NotEscaping,
    CuspAtParallel,
    RegularAtParallel,
    OutOfWindow,
}

struct Scanner<'a> {
    m: &'a MetricField,
    y0: f64,
    kind: LaunchKind,
    scan_plus: &'a SideScan,
    scan_minus: &'a SideScan,
    /// Which sides the current records describe.
    sides: (bool, bool),
}

impl<'a> Scanner<'a> {
    fn scan(&self, side: Side) -> &'a SideScan {
        match side {
            Side::Plus => self.scan_plus,
            Side::Minus => self.scan_minus,
        }
    }

    fn arrival(&self, side: Side, case: CaseTag, h2: f64) -> ArrivalStyle {
        if case != CaseTag::Escapes {
            return ArrivalStyle::NotEscaping;
        }
        let scan = self.scan(side);
        if !scan.omega.is_finite() {
            return ArrivalStyle::OutOfWindow;
        }
        // the window edge counts as a parallel only when the discriminant
        // has a genuine sign-change zero there and the point is transverse;
        // tangential degeneracies (poles) and plain window edges do not
        if transverse_parallel_at(self.m, scan.omega).is_none() {
            return ArrivalStyle::OutOfWindow;
        }
        if h2.is_finite() && (h2 - scan.edge_level()).abs() <= ARRIVAL_TOL_REL * h2.abs().max(1.0) {
            ArrivalStyle::RegularAtParallel
        } else {
            ArrivalStyle::CuspAtParallel
        }
    }

    fn signature(&self, level: &Level) -> LevelSig {
        let ra = turning_core(self.m, self.scan_plus, self.scan_minus, level);
        let h2 = level.finite().unwrap_or(f64::INFINITY);
        let (case_plus, arrival_plus) = if self.sides.0 {
            (
                Some(ra.case_plus),
                self.arrival(Side::Plus, ra.case_plus, h2),
            )
        } else {
            (None, ArrivalStyle::NotEscaping)
        };
        let (case_minus, arrival_minus) = if self.sides.1 {
            (
                Some(ra.case_minus),
                self.arrival(Side::Minus, ra.case_minus, h2),
            )
        } else {
            (None, ArrivalStyle::NotEscaping)
        };
        LevelSig {
            case_plus,
            case_minus,
            arrival_plus,
            arrival_minus,
        }
    }
}

/// Refined location of a transverse parabolic parallel near `y`, when the
/// discriminant crosses zero there.
fn transverse_parallel_at(m: &MetricField, y: f64) -> Option<f64> {
    if !y.is_finite() {
        return None;
    }
    let w = 1e-4 * (1.0 + y.abs());
    let g = |yy: f64| m.discriminant(0.0, yy);
    let (mut lo, mut hi) = (y - w, y + w);
    let (glo, ghi) = (g(lo), g(hi));
    if !glo.is_finite() || !ghi.is_finite() || glo * ghi >= 0.0 {
        return None;
    }
    for _ in 0..100 {
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (g(mid) <= 0.0) == (glo <= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let yq = 0.5 * (lo + hi);
    // transversality directly: the bisection already certifies the zero
    let k = m.coefs(0.0, yq);
    let scale = k.scale().max(1e-30);
    let (gx, gy) = m.discriminant_gradient(0.0, yq);
    let cross = (k.b * gx - k.a * gy).abs();
    let eps_grad = 1e-10 * scale * scale;
    if gx.hypot(gy) > eps_grad && cross > eps_grad * scale.max(1.0) {
        Some(yq)
    } else {
        None
    }
}

/// One piece of a side's admissible level set.
#[derive(Debug, Clone, Copy)]
enum Piece {
    Interval {
        lo: f64,
        hi: f64,
        lo_closed: bool,
        hi_closed: bool,
    },
    Isotropic,
}

/// The admissible level ranges reachable from the launch, per side.
fn level_pieces(m: &MetricField, y0: f64, kind: LaunchKind, side: Side) -> Result<Vec<Piece>> {
    match kind {
        LaunchKind::Klein | LaunchKind::Grushin => Ok(vec![Piece::Interval {
            lo: 0.0,
            hi: f64::INFINITY,
            lo_closed: true,
            hi_closed: false,
        }]),
        LaunchKind::Parabolic => {
            h_of_launch(m, y0, 0.0, side, kind)?; // validates normalization
            let a0 = m.coefs(0.0, y0).a;
            let c1 = (4.0 / 9.0) * m.c_prime(y0) * side.sign();
            if c1 > 0.0 {
                // Riemannian side
                Ok(vec![Piece::Interval {
                    lo: 0.0,
                    hi: a0,
                    lo_closed: true,
                    hi_closed: false,
                }])
            } else {
                // Lorentzian side: spacelike, isotropic, timelike ranges
                Ok(vec![
                    Piece::Interval {
                        lo: f64::NEG_INFINITY,
                        hi: 0.0,
                        lo_closed: false,
                        hi_closed: true,
                    },
                    Piece::Isotropic,
                    Piece::Interval {
                        lo: a0,
                        hi: f64::INFINITY,
                        lo_closed: false,
                        hi_closed: false,
                    },
                ])
            }
        }
        LaunchKind::Regular => {
            let k = m.coefs(0.0, y0);
            let a0 = k.a;
            let c0 = k.c
                - if k.a.abs() > 1e-14 {
                    k.b * k.b / k.a
                } else {
                    0.0
                };
            // when the launch line is itself a horizontal geodesic, the
            // a0-level member is that line and is excluded from the family
            let launch_is_horizontal =
                singular_solution_test(m, y0) == SingularKind::HorizontalGeodesic;
            if c0 > 0.0 {
                Ok(vec![Piece::Interval {
                    lo: 0.0,
                    hi: a0,
                    lo_closed: true,
                    hi_closed: !launch_is_horizontal,
                }])
            } else if c0 < 0.0 {
                Ok(vec![
                    Piece::Interval {
                        lo: f64::NEG_INFINITY,
                        hi: 0.0,
                        lo_closed: false,
                        hi_closed: true,
                    },
                    Piece::Isotropic,
                    Piece::Interval {
                        lo: a0,
                        hi: f64::INFINITY,
                        lo_closed: !launch_is_horizontal,
                        hi_closed: false,
                    },
                ])
            } else {
                Err(GeoError::AssumptionViolated {
                    y: y0,
                    what: "degenerate launch: c - b^2/a vanishes".into(),
                })
            }
        }
    }
}

/// Classify the family of geodesics launched from the line `y = y0`.
///
/// Returns one record per maximal level range of constant qualitative
/// behavior, including singleton classes at the separating levels. For
/// parabolic and Klein/Grushin launches the records are per side (the two
/// halves are distinct geodesics); for regular launches each record covers
/// the whole geodesic and carries both cases.
pub fn classify_family(
    m: &MetricField,
    y0: f64,
    side_spec: SideSpec,
    opts: &ClassifyOpts,
) -> Result<Vec<FamilyClass>> {
    let kind = detect_launch_kind(m, y0)?;
    let scan_plus = build_side_scan(m, y0, Side::Plus);
    let scan_minus = build_side_scan(m, y0, Side::Minus);
    let per_side = kind != LaunchKind::Regular;

    let mut out = Vec::new();
    if per_side {
        for side in [Side::Minus, Side::Plus] {
            if !side_spec.includes(side) {
                continue;
            }
            match side {
                Side::Plus => validate_side(m, &scan_plus)?,
                Side::Minus => validate_side(m, &scan_minus)?,
            }
            let scanner = Scanner {
                m,
                y0,
                kind,
                scan_plus: &scan_plus,
                scan_minus: &scan_minus,
                sides: match side {
                    Side::Plus => (true, false),
                    Side::Minus => (false, true),
                },
            };
            for piece in level_pieces(m, y0, kind, side)? {
                classify_piece(&scanner, side, Some(side), &piece, opts, &mut out);
            }
        }
    } else {
        validate_side(m, &scan_plus)?;
        validate_side(m, &scan_minus)?;
        let scanner = Scanner {
            m,
            y0,
            kind,
            scan_plus: &scan_plus,
            scan_minus: &scan_minus,
            sides: (true, true),
        };
        for piece in level_pieces(m, y0, kind, Side::Plus)? {
            classify_piece(&scanner, Side::Plus, None, &piece, opts, &mut out);
        }
    }

    if opts.verify_representatives {
        for rec in out.iter_mut() {
            let returning =
                rec.case_plus == Some(CaseTag::Returns) || rec.case_minus == Some(CaseTag::Returns);
            if returning {
                rec.verified = Some(verify_representative(m, y0, kind, rec, opts));
            }
        }
    }
    Ok(out)
}

fn classify_piece(
    scanner: &Scanner<'_>,
    launch_side: Side,
    record_side: Option<Side>,
    piece: &Piece,
    opts: &ClassifyOpts,
    out: &mut Vec<FamilyClass>,
) {
    let (lo, hi, lo_closed, hi_closed) = match piece {
        Piece::Isotropic => {
            let sig = scanner.signature(&Level::Infinite);
            out.push(make_record(
                scanner,
                launch_side,
                record_side,
                LevelRange::IsotropicPoint,
                Level::Infinite,
                &sig,
                CurveType::Isotropic,
            ));
            return;
        }
        Piece::Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        } => (*lo, *hi, *lo_closed, *hi_closed),
    };

    let type_tag = if hi <= 0.0 {
        CurveType::Spacelike
    } else {
        CurveType::Timelike
    };

    // candidate separating levels: critical values of a, and the window
    // edge levels, restricted to the open interior
    let relevant_scans: Vec<&SideScan> = match record_side {
        Some(s) => vec![scanner.scan(s)],
        None => vec![scanner.scan_plus, scanner.scan_minus],
    };
    // candidates meaningfully inside the piece; anything within the bisect
    // resolution of an edge is the edge
    let margin_lo = 1e-6 * lo.abs().max(1.0);
    let margin_hi = 1e-6 * hi.abs().max(1.0);
    let interior = |v: f64| {
        v.is_finite()
            && (!lo.is_finite() || v > lo + margin_lo)
            && (!hi.is_finite() || v < hi - margin_hi)
    };
    let mut candidates: Vec<f64> = Vec::new();
    for sc in &relevant_scans {
        for (_yc, ac) in &sc.crits {
            if interior(*ac) {
                candidates.push(*ac);
            }
        }
        let e = sc.edge_level();
        if interior(e) {
            candidates.push(e);
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));

    // scanning caps: beyond every value a attains in the windows the
    // verdict is constant
    let mut a_hi = f64::NEG_INFINITY;
    let mut a_lo = f64::INFINITY;
    for sc in &relevant_scans {
        a_hi = a_hi.max(sc.a_max);
        a_lo = a_lo.min(sc.a_min);
    }
    let pad = 1.0 + a_hi.abs().min(1e12).max(a_lo.abs().min(1e12));
    let cap_hi = if hi.is_finite() {
        hi
    } else {
        (a_hi.min(1e12) + pad).max(lo + pad)
    };
    let cap_lo = if lo.is_finite() {
        lo
    } else {
        (a_lo.max(-1e12) - pad).min(hi - pad)
    };
    if !(cap_hi > cap_lo) {
        let sig = scanner.signature(&Level::Finite(cap_lo));
        out.push(make_record(
            scanner,
            launch_side,
            record_side,
            LevelRange::Singleton { h2: cap_lo },
            Level::Finite(cap_lo),
            &sig,
            type_tag,
        ));
        return;
    }

    // sample grid: boundaries, candidates and filler per gap
    let mut grid: Vec<f64> = Vec::with_capacity(candidates.len() + 2);
    grid.push(cap_lo);
    grid.extend(candidates.iter().copied());
    grid.push(cap_hi);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * a.abs().max(1.0));
    let mut levels: Vec<f64> = Vec::new();
    for w in grid.windows(2) {
        let (g_lo, g_hi) = (w[0], w[1]);
        levels.push(g_lo);
        let n = opts.grid_per_gap.max(2);
        let log_ok = g_lo > 0.0 && g_hi / g_lo > 100.0;
        for i in 1..n {
            let f = i as f64 / n as f64;
            levels.push(if log_ok {
                g_lo * (g_hi / g_lo).powf(f)
            } else {
                g_lo + (g_hi - g_lo) * f
            });
        }
    }
    levels.push(cap_hi);
    // honor open ends: sample just inside instead of on the endpoint
    if !lo_closed {
        let toward = levels.get(1).copied().unwrap_or(cap_hi);
        let step = ((toward - levels[0]) * 1e-9).max(4.0 * f64::EPSILON * levels[0].abs().max(1.0));
        levels[0] += step;
    }
    if !hi_closed && hi.is_finite() {
        let n = levels.len();
        let toward = levels[n - 2];
        let step = ((levels[n - 1] - toward) * 1e-9)
            .max(4.0 * f64::EPSILON * levels[n - 1].abs().max(1.0));
        levels[n - 1] -= step;
    }

    let sigs: Vec<LevelSig> = levels
        .iter()
        .map(|v| scanner.signature(&Level::Finite(*v)))
        .collect();

    // walk the grid, bisect changes, emit maximal runs and singletons
    let mut run_start = lo;
    let mut run_start_closed = lo_closed;
    let mut run_sig = sigs[0];
    for i in 0..levels.len() - 1 {
        if sigs[i + 1] == run_sig {
            continue;
        }
        let (mut blo, mut bhi) = (levels[i], levels[i + 1]);
        let scale = blo.abs().max(bhi.abs()).max(1.0);
        while (bhi - blo).abs() > opts.level_bisect_rel * scale {
            let mid = 0.5 * (blo + bhi);
            if scanner.signature(&Level::Finite(mid)) == run_sig {
                blo = mid;
            } else {
                bhi = mid;
            }
        }
        let mut boundary = 0.5 * (blo + bhi);
        for c in &candidates {
            if (boundary - c).abs() <= 4.0 * opts.level_bisect_rel * scale {
                boundary = *c;
                break;
            }
        }
        if (boundary - lo).abs() <= 4.0 * opts.level_bisect_rel * scale {
            boundary = lo;
        }
        let sig_at = scanner.signature(&Level::Finite(boundary));
        let next_sig = sigs[i + 1];

        if sig_at != run_sig && run_start < boundary {
            push_interval(
                scanner,
                launch_side,
                record_side,
                run_start,
                boundary,
                run_start_closed,
                false,
                &run_sig,
                type_tag,
                out,
            );
        }
        if sig_at != run_sig && sig_at != next_sig {
            out.push(make_record(
                scanner,
                launch_side,
                record_side,
                LevelRange::Singleton { h2: boundary },
                Level::Finite(boundary),
                &sig_at,
                type_tag,
            ));
            run_start = boundary;
            run_start_closed = false;
        } else if sig_at == run_sig {
            push_interval(
                scanner,
                launch_side,
                record_side,
                run_start,
                boundary,
                run_start_closed,
                true,
                &run_sig,
                type_tag,
                out,
            );
            run_start = boundary;
            run_start_closed = false;
        } else {
            run_start = boundary;
            run_start_closed = true;
        }
        run_sig = next_sig;
    }
    if run_start < hi || (run_start_closed && hi_closed && run_start == hi) {
        push_interval(
            scanner,
            launch_side,
            record_side,
            run_start,
            hi,
            run_start_closed,
            hi_closed,
            &run_sig,
            type_tag,
            out,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn push_interval(
    scanner: &Scanner<'_>,
    launch_side: Side,
    record_side: Option<Side>,
    lo: f64,
    hi: f64,
    lo_closed: bool,
    hi_closed: bool,
    sig: &LevelSig,
    type_tag: CurveType,
    out: &mut Vec<FamilyClass>,
) {
    if lo.is_finite() && hi.is_finite() && (hi - lo).abs() <= 1e-12 * lo.abs().max(1.0) {
        out.push(make_record(
            scanner,
            launch_side,
            record_side,
            LevelRange::Singleton { h2: lo },
            Level::Finite(lo),
            sig,
            type_tag,
        ));
        return;
    }
    let rep = representative_level(lo, hi);
    out.push(make_record(
        scanner,
        launch_side,
        record_side,
        LevelRange::Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        },
        Level::Finite(rep),
        sig,
        type_tag,
    ));
}

fn representative_level(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => {
            if lo > 0.0 {
                lo * 2.0 + 1.0
            } else {
                lo + 1.0
            }
        }
        (false, true) => hi - 1.0,
        (false, false) => 0.0,
    }
}

fn make_record(
    scanner: &Scanner<'_>,
    launch_side: Side,
    record_side: Option<Side>,
    range: LevelRange,
    rep_level: Level,
    sig: &LevelSig,
    type_tag: CurveType,
) -> FamilyClass {
    let m = scanner.m;
    let y0 = scanner.y0;
    let kind = scanner.kind;
    let ra = turning_core(m, scanner.scan_plus, scanner.scan_minus, &rep_level);

    let launch_endpoint = match kind {
        LaunchKind::Parabolic => Endpoint::Cusp { y: y0 },
        LaunchKind::Klein | LaunchKind::Grushin => Endpoint::Launch { y: y0 },
        LaunchKind::Regular => Endpoint::None,
    };

    let side_endpoint = |side: Side| -> Endpoint {
        let (case, arrival, y_hat) = match side {
            Side::Plus => (sig.case_plus, sig.arrival_plus, ra.y_hat_plus),
            Side::Minus => (sig.case_minus, sig.arrival_minus, ra.y_hat_minus),
        };
        let omega = scanner.scan(side).omega;
        match case {
            None => Endpoint::None,
            Some(CaseTag::Returns) => match kind {
                LaunchKind::Parabolic => Endpoint::Cusp { y: y0 },
                _ => Endpoint::ReturnsToLaunch { y: y0 },
            },
            Some(CaseTag::Asymptote) => Endpoint::WindsTo { y: y_hat },
            Some(CaseTag::Escapes) => match arrival {
                ArrivalStyle::CuspAtParallel => Endpoint::Cusp { y: omega },
                ArrivalStyle::RegularAtParallel => Endpoint::Regular { y: omega },
                _ => Endpoint::Boundary { y: omega },
            },
        }
    };

    let (endpoint_first, endpoint_second) = match record_side {
        Some(side) => (launch_endpoint, side_endpoint(side)),
        None => {
            if sig.case_plus == Some(CaseTag::Returns) && sig.case_minus == Some(CaseTag::Returns) {
                // oscillates forever: no endpoints
                (Endpoint::None, Endpoint::None)
            } else {
                (side_endpoint(Side::Minus), side_endpoint(Side::Plus))
            }
        }
    };

    let description = describe(record_side, sig, &ra, kind, y0);
    let representative_alpha = match rep_level {
        Level::Infinite => alpha_for_level(m, y0, &Level::Infinite, launch_side, kind),
        Level::Finite(v) => alpha_for_level(m, y0, &Level::Finite(v), launch_side, kind),
    };

    FamilyClass {
        side: record_side,
        range,
        type_tag,
        case_plus: sig.case_plus,
        case_minus: sig.case_minus,
        endpoint_first,
        endpoint_second,
        description,
        representative_alpha,
        representative_h2: rep_level,
        verified: None,
    }
}

fn describe(
    record_side: Option<Side>,
    sig: &LevelSig,
    ra: &crate::symmetry::ReturnAnalysis,
    kind: LaunchKind,
    y0: f64,
) -> String {
    let one = |case: Option<CaseTag>, y_hat: f64, side: Side| -> Option<String> {
        let name = match side {
            Side::Plus => "above",
            Side::Minus => "below",
        };
        case.map(|c| match c {
            CaseTag::Returns => format!("turns at y = {y_hat:.6} {name} and returns"),
            CaseTag::Asymptote => format!("winds toward the horizontal geodesic y = {y_hat:.6}"),
            CaseTag::Escapes => {
                if y_hat.is_finite() {
                    format!("runs to y = {y_hat:.6} {name}")
                } else {
                    format!("runs unbounded {name}")
                }
            }
        })
    };
    let parts: Vec<String> = match record_side {
        Some(Side::Plus) => one(sig.case_plus, ra.y_hat_plus, Side::Plus)
            .into_iter()
            .collect(),
        Some(Side::Minus) => one(sig.case_minus, ra.y_hat_minus, Side::Minus)
            .into_iter()
            .collect(),
        None => {
            if sig.case_plus == Some(CaseTag::Returns) && sig.case_minus == Some(CaseTag::Returns) {
                vec![format!(
                    "oscillates between y = {:.6} and y = {:.6}",
                    ra.y_hat_minus, ra.y_hat_plus
                )]
            } else {
                one(sig.case_plus, ra.y_hat_plus, Side::Plus)
                    .into_iter()
                    .chain(one(sig.case_minus, ra.y_hat_minus, Side::Minus))
                    .collect()
            }
        }
    };
    let origin = match kind {
        LaunchKind::Parabolic => format!("from the parabolic parallel y = {y0:.6}: "),
        LaunchKind::Klein | LaunchKind::Grushin => {
            format!("from the singular line y = {y0:.6}: ")
        }
        LaunchKind::Regular => format!("through y = {y0:.6}: "),
    };
    format!("{origin}{}", parts.join("; "))
}

/// Integrate one representative of a returning class and check it behaves
/// as classified: reaches the predicted turning ordinate with exactly one
/// horizontal tangency, then comes back to the launch line transversally.
fn verify_representative(
    m: &MetricField,
    y0: f64,
    kind: LaunchKind,
    rec: &FamilyClass,
    opts: &ClassifyOpts,
) -> bool {
    let alpha = match rec.representative_alpha {
        Some(a) if a.is_finite() => a,
        _ => return false,
    };
    let side = if rec.case_plus == Some(CaseTag::Returns) {
        Side::Plus
    } else {
        Side::Minus
    };
    let s = side.sign();
    let seed: PhaseState = match kind {
        LaunchKind::Parabolic => {
            match parabolic_seed(m, (0.0, y0), alpha, side, Branch::Right, 1e-3) {
                Ok(st) => st,
                Err(_) => return false,
            }
        }
        LaunchKind::Klein | LaunchKind::Grushin => {
            let off = 1e-4;
            let dy = s * off;
            let (x, dxdy, speed) = match kind {
                LaunchKind::Klein => (alpha * dy * dy, 2.0 * alpha * dy, 1.0),
                _ => (
                    (2.0 / 3.0) * alpha * dy.powi(3),
                    2.0 * alpha * dy * dy,
                    1.0 / off,
                ),
            };
            let norm = (1.0 + dxdy * dxdy).sqrt() / speed;
            PhaseState::new(0.0, x, y0 + dy, s * dxdy / norm, s / norm)
        }
        LaunchKind::Regular => PhaseState::new(0.0, 0.0, y0, alpha.abs(), s),
    };

    // the seed's actual conserved level fixes where it must turn
    let level_actual = h2_signed(m, &seed);
    if !level_actual.is_finite() {
        return false;
    }
    let scan_plus = build_side_scan(m, y0, Side::Plus);
    let scan_minus = build_side_scan(m, y0, Side::Minus);
    let ra = turning_core(m, &scan_plus, &scan_minus, &Level::Finite(level_actual));
    let (y_hat, case_actual) = match side {
        Side::Plus => (ra.y_hat_plus, ra.case_plus),
        Side::Minus => (ra.y_hat_minus, ra.case_minus),
    };
    if case_actual != CaseTag::Returns {
        return false;
    }

    let eps_ret = ((seed.y - y0).abs() * 1.5).max(1e-9);
    let return_event = PhaseEvent {
        label: "returned",
        dir: if s > 0.0 {
            EventDir::Falling
        } else {
            EventDir::Rising
        },
        terminal: true,
        g: Box::new(move |st: &PhaseState| st.y - (y0 + s * eps_ret)),
    };
    let turn_event = PhaseEvent {
        label: "turn",
        dir: EventDir::Any,
        terminal: false,
        g: Box::new(move |st: &PhaseState| st.vy),
    };
    let mut iopts = opts.integrate;
    iopts.max_steps = iopts.max_steps.max(200_000);
    let (path, hits) =
        match integrate_natural_ex(m, &seed, 1e4, &iopts, vec![return_event, turn_event]) {
            Ok(v) => v,
            Err(_) => return false,
        };

    let turns: Vec<&PhaseState> = hits
        .iter()
        .filter(|(l, _)| *l == "turn")
        .map(|(_, st)| st)
        .collect();
    let returned = hits.iter().any(|(l, _)| *l == "returned");
    if !returned || turns.len() != 1 {
        return false;
    }
    let turn = turns[0];
    if (turn.y - y_hat).abs() > 1e-4 * (1.0 + y_hat.abs()) {
        return false;
    }
    // y monotone toward the turn, monotone back after it; the sample pair
    // straddling the turn is exempt
    let mut prev = &path.samples[0];
    for st in &path.samples[1..] {
        let dy = st.y - prev.y;
        let tol = 1e-9 * (1.0 + prev.y.abs());
        let both_before = st.t < turn.t && prev.t < turn.t;
        let both_after = st.t >= turn.t && prev.t >= turn.t;
        if both_before && s * dy < -tol {
            return false;
        }
        if both_after && s * dy > tol {
            return false;
        }
        prev = st;
    }
    // transversal crossing of the launch line on the way back
    let last = path.samples.last().unwrap();
    let slope = (last.vy / last.vx).abs();
    slope > 1e-4 || last.vx.abs() < 1e-12
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn metric(name: &str) -> MetricField {
        catalog::lookup(name, &Default::default()).unwrap().metric
    }

    #[test]
    fn klein_has_two_classes_per_side() {
        // the vertical half-lines (h2 = 0) escape; every other member
        // returns (the circles)
        let classes = classify_family(
            &metric("klein"),
            0.0,
            SideSpec::Plus,
            &ClassifyOpts::default(),
        )
        .unwrap();
        assert_eq!(classes.len(), 2, "{classes:#?}");
        assert!(matches!(classes[0].range, LevelRange::Singleton { h2 } if h2 == 0.0));
        assert_eq!(classes[0].case_plus, Some(CaseTag::Escapes));
        match classes[1].range {
            LevelRange::Interval { lo, hi, .. } => {
                assert!(lo.abs() < 1e-6);
                assert_eq!(hi, f64::INFINITY);
            }
            _ => panic!("expected interval, got {:?}", classes[1].range),
        }
        assert_eq!(classes[1].case_plus, Some(CaseTag::Returns));
        assert_eq!(classes[1].verified, Some(true));
    }

    #[test]
    fn ex34_three_classes_with_boundary_two() {
        let classes = classify_family(
            &metric("ex34"),
            0.0,
            SideSpec::Plus,
            &ClassifyOpts::default(),
        )
        .unwrap();
        assert_eq!(classes.len(), 3, "{classes:#?}");
        match classes[0].range {
            LevelRange::Interval { lo, hi, .. } => {
                assert!(lo.abs() < 1e-9);
                assert!((hi - 2.0).abs() < 1e-6, "hi = {hi}");
            }
            _ => panic!("expected interval: {:?}", classes[0].range),
        }
        assert_eq!(classes[0].case_plus, Some(CaseTag::Escapes));
        assert!(
            matches!(classes[1].range, LevelRange::Singleton { h2 } if (h2 - 2.0).abs() < 1e-6)
        );
        assert_eq!(classes[1].case_plus, Some(CaseTag::Asymptote));
        assert!(
            matches!(classes[1].endpoint_second, Endpoint::WindsTo { y } if (y - 1.0).abs() < 1e-6)
        );
        assert_eq!(classes[2].case_plus, Some(CaseTag::Returns));
        assert_eq!(classes[2].verified, Some(true));
    }
}
