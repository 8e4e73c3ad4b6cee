//! Embedded adaptive Runge-Kutta integration with event detection.
//!
//! Dormand-Prince 5(4) pair with PI-free step control, cubic Hermite
//! interpolation inside a step, and event localization by bisection on the
//! interpolant down to 1e-12 in the independent variable. Events are refined
//! by re-taking one exact step to the located abscissa, so event states carry
//! full integration accuracy.

// Butcher tableau of the Dormand-Prince 5(4) pair.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub const EVENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct OdeOpts {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; estimated from the first derivative when absent.
    pub h0: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOpts {
    fn default() -> Self {
        OdeOpts {
            rtol: 1e-9,
            atol: 1e-9,
            h0: None,
            h_max: f64::INFINITY,
            max_steps: 500_000,
        }
    }
}

/// Sign-change direction an event is armed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventDir {
    Rising,
    Falling,
    Any,
}

pub struct Event<'a, const N: usize> {
    pub label: &'static str,
    pub g: Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>,
    pub dir: EventDir,
    pub terminal: bool,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn terminal(
        label: &'static str,
        dir: EventDir,
        g: impl Fn(f64, &[f64; N]) -> f64 + 'a,
    ) -> Self {
        Event {
            label,
            g: Box::new(g),
            dir,
            terminal: true,
        }
    }

    pub fn recording(
        label: &'static str,
        dir: EventDir,
        g: impl Fn(f64, &[f64; N]) -> f64 + 'a,
    ) -> Self {
        Event {
            label,
            g: Box::new(g),
            dir,
            terminal: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeStatus {
    ReachedEnd,
    /// Stopped by the terminal event with this label.
    Event(&'static str),
    StepUnderflow,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct EventHit<const N: usize> {
    pub label: &'static str,
    pub t: f64,
    pub y: [f64; N],
}

#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    pub ts: Vec<f64>,
    pub ys: Vec<[f64; N]>,
    pub status: OdeStatus,
    pub hits: Vec<EventHit<N>>,
    pub steps: usize,
}

impl<const N: usize> Solution<N> {
    pub fn last(&self) -> (f64, [f64; N]) {
        (*self.ts.last().unwrap(), *self.ys.last().unwrap())
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, ks: &[[f64; N]], ws: &[f64]) -> [f64; N] {
    let mut out = *y;
    for (k, w) in ks.iter().zip(ws) {
        if *w == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += h * w * k[i];
        }
    }
    out
}

fn finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One Dormand-Prince step attempt; returns `(y5, err_norm, k_last)` or
/// `None` when a stage produced a non-finite value.
fn dp_step<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]>(
    f: &F,
    t: f64,
    y: &[f64; N],
    h: f64,
    k1: &[f64; N],
    rtol: f64,
    atol: f64,
) -> Option<([f64; N], f64, [f64; N])> {
    let mut k = [[0.0; N]; 7];
    k[0] = *k1;
    for s in 1..7 {
        let ys = axpy(y, h, &k[..s], &A[s][..s]);
        if !finite(&ys) {
            return None;
        }
        k[s] = f(t + C[s] * h, &ys);
        if !finite(&k[s]) {
            return None;
        }
    }
    let y5 = axpy(y, h, &k, &B5);
    let y4 = axpy(y, h, &k, &B4);
    if !finite(&y5) || !finite(&y4) {
        return None;
    }
    let mut err = 0.0;
    for i in 0..N {
        let sc = atol + rtol * y[i].abs().max(y5[i].abs());
        let e = (y5[i] - y4[i]) / sc;
        err += e * e;
    }
    Some((y5, (err / N as f64).sqrt(), k[6]))
}

/// Cubic Hermite interpolation of the state inside an accepted step.
fn hermite<const N: usize>(
    t0: f64,
    y0: &[f64; N],
    f0: &[f64; N],
    t1: f64,
    y1: &[f64; N],
    f1: &[f64; N],
    t: f64,
) -> [f64; N] {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
    out
}

// Strict sign change on both ends, so an event sitting exactly on its zero
// at segment start does not retrigger immediately.
fn event_sign(dir: EventDir, g0: f64, g1: f64) -> bool {
    match dir {
        EventDir::Rising => g0 < 0.0 && g1 > 0.0,
        EventDir::Falling => g0 > 0.0 && g1 < 0.0,
        EventDir::Any => (g0 < 0.0 && g1 > 0.0) || (g0 > 0.0 && g1 < 0.0),
    }
}

/// Integrate `dy/dt = f(t, y)` from `t0` to `tend` (either direction).
/// Every accepted step is recorded as a sample.
pub fn integrate<const N: usize, F: Fn(f64, &[f64; N]) -> [f64; N]>(
    f: F,
    t0: f64,
    tend: f64,
    y0: [f64; N],
    opts: &OdeOpts,
    events: Vec<Event<'_, N>>,
) -> Solution<N> {
    let dir = if tend >= t0 { 1.0 } else { -1.0 };
    let span = (tend - t0).abs();
    let mut ts = vec![t0];
    let mut ys = vec![y0];
    let mut hits = Vec::new();

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    if !finite(&k1) {
        return Solution {
            ts,
            ys,
            status: OdeStatus::StepUnderflow,
            hits,
            steps: 0,
        };
    }
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();

    let mut h = opts.h0.unwrap_or_else(|| {
        let fn_norm = k1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let y_norm = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        (0.01 * y_norm / fn_norm.max(1e-10))
            .min(span * 0.1)
            .max(1e-12)
    });
    h = h.min(opts.h_max).min(span.max(1e-300)) * dir;

    // local step floor; span may be infinite when the run is event-bounded
    let span_f = if span.is_finite() { span } else { 0.0 };
    let h_min_abs = 1e-14 * (1.0 + t0.abs() + span_f);
    let mut steps = 0usize;

    while steps < opts.max_steps {
        if (tend - t) * dir <= 0.0 {
            return Solution {
                ts,
                ys,
                status: OdeStatus::ReachedEnd,
                hits,
                steps,
            };
        }
        if (t + h - tend) * dir > 0.0 {
            h = tend - t;
        }

        let attempt = dp_step(&f, t, &y, h, &k1, opts.rtol, opts.atol);
        steps += 1;
        let (y_new, err, k_last) = match attempt {
            Some(v) => v,
            None => {
                // a stage blew up; shrink hard
                h *= 0.25;
                if h.abs() < h_min_abs {
                    return Solution {
                        ts,
                        ys,
                        status: OdeStatus::StepUnderflow,
                        hits,
                        steps,
                    };
                }
                continue;
            }
        };

        if err > 1.0 {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            if h.abs() < h_min_abs {
                return Solution {
                    ts,
                    ys,
                    status: OdeStatus::StepUnderflow,
                    hits,
                    steps,
                };
            }
            continue;
        }

        // accepted; scan all events on [t, t+h], localizing each crossing by
        // bisection on true sub-steps of the solver
        let t_new = t + h;
        let f_new = k_last;
        let state_at = |tt: f64| -> [f64; N] {
            if (tt - t).abs() < h_min_abs {
                return y;
            }
            match dp_step(&f, t, &y, tt - t, &k1, opts.rtol, opts.atol) {
                Some((ye, _, _)) => ye,
                None => hermite(t, &y, &k1, t_new, &y_new, &f_new, tt),
            }
        };
        let mut triggered: Vec<(usize, f64)> = Vec::new();
        for (idx, ev) in events.iter().enumerate() {
            let g1 = (ev.g)(t_new, &y_new);
            if event_sign(ev.dir, g_prev[idx], g1) {
                let mut lo = t;
                let mut hi = t_new;
                let mut glo = g_prev[idx];
                for _ in 0..200 {
                    if (hi - lo).abs() <= EVENT_TOL * (1.0 + lo.abs()) {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    let gm = (ev.g)(mid, &state_at(mid));
                    if event_sign(ev.dir, glo, gm) {
                        hi = mid;
                    } else {
                        lo = mid;
                        glo = gm;
                    }
                }
                triggered.push((idx, hi));
            }
            g_prev[idx] = g1;
        }
        triggered.sort_by(|a, b| {
            let (ta, tb) = (a.1 * dir, b.1 * dir);
            ta.partial_cmp(&tb).unwrap()
        });
        let mut stopped = false;
        for (idx, t_ev) in triggered {
            let y_ev = state_at(t_ev);
            let label = events[idx].label;
            hits.push(EventHit {
                label,
                t: t_ev,
                y: y_ev,
            });
            if events[idx].terminal {
                ts.push(t_ev);
                ys.push(y_ev);
                stopped = true;
                break;
            }
        }
        if stopped {
            let label = hits.last().unwrap().label;
            return Solution {
                ts,
                ys,
                status: OdeStatus::Event(label),
                hits,
                steps,
            };
        }

        t = t_new;
        y = y_new;
        k1 = f_new;
        ts.push(t);
        ys.push(y);

        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * fac).clamp(-opts.h_max, opts.h_max);
        if h == 0.0 {
            h = dir * h_min_abs * 2.0;
        }
    }

    Solution {
        ts,
        ys,
        status: OdeStatus::MaxSteps,
        hits,
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_decay() {
        let sol = integrate(
            |_t, y: &[f64; 1]| [-y[0]],
            0.0,
            5.0,
            [1.0],
            &OdeOpts::default(),
            vec![],
        );
        assert_eq!(sol.status, OdeStatus::ReachedEnd);
        let (t, y) = sol.last();
        assert_relative_eq!(y[0], (-t).exp(), max_relative = 1e-7, epsilon = 1e-9);
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let sol = integrate(
            |_t, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            50.0,
            [1.0, 0.0],
            &OdeOpts::default(),
            vec![],
        );
        assert_eq!(sol.status, OdeStatus::ReachedEnd);
        for (y, _) in sol.ys.iter().zip(&sol.ts) {
            let e = y[0] * y[0] + y[1] * y[1];
            assert_relative_eq!(e, 1.0, max_relative = 1e-7);
        }
    }

    #[test]
    fn backward_integration() {
        let sol = integrate(
            |_t, y: &[f64; 1]| [y[0]],
            0.0,
            -2.0,
            [1.0],
            &OdeOpts::default(),
            vec![],
        );
        let (t, y) = sol.last();
        assert_relative_eq!(t, -2.0);
        assert_relative_eq!(y[0], (-2.0f64).exp(), max_relative = 1e-7, epsilon = 1e-9);
    }

    #[test]
    fn event_localization_precision() {
        // y' = 1, event at y = pi: t_event = pi
        let ev = Event::terminal("cross", EventDir::Rising, |_t, y: &[f64; 1]| {
            y[0] - std::f64::consts::PI
        });
        let sol = integrate(
            |_t, _y: &[f64; 1]| [1.0],
            0.0,
            10.0,
            [0.0],
            &OdeOpts::default(),
            vec![ev],
        );
        assert_eq!(sol.status, OdeStatus::Event("cross"));
        let (t, y) = sol.last();
        assert!((t - std::f64::consts::PI).abs() < 1e-11);
        assert!((y[0] - std::f64::consts::PI).abs() < 1e-11);
    }

    #[test]
    fn falling_event_direction_respected() {
        // oscillator, only falling crossings of y0 trigger
        let ev = Event::terminal("fall", EventDir::Falling, |_t, y: &[f64; 2]| y[0]);
        let sol = integrate(
            |_t, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            10.0,
            [0.0, 1.0],
            &OdeOpts::default(),
            vec![ev],
        );
        // sin(t) falls through zero at t = pi; the event is localized on
        // the numerical solution, so allow its accumulated global error
        let (t, _) = sol.last();
        assert!((t - std::f64::consts::PI).abs() < 5e-9);
    }

    #[test]
    fn recording_events_do_not_stop() {
        let ev = Event::recording("zero-v", EventDir::Any, |_t, y: &[f64; 2]| y[1]);
        let sol = integrate(
            |_t, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            1.5 * std::f64::consts::PI,
            [1.0, 0.0],
            &OdeOpts::default(),
            vec![ev],
        );
        assert_eq!(sol.status, OdeStatus::ReachedEnd);
        // velocity vanishes at t = pi (one interior crossing)
        assert_eq!(sol.hits.len(), 1);
        assert!((sol.hits[0].t - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn stiff_blowup_underflows_cleanly() {
        // y' = y^2 blows up at t = 1
        let sol = integrate(
            |_t, y: &[f64; 1]| [y[0] * y[0]],
            0.0,
            2.0,
            [1.0],
            &OdeOpts {
                max_steps: 20_000,
                ..OdeOpts::default()
            },
            vec![],
        );
        assert_ne!(sol.status, OdeStatus::ReachedEnd);
        let (t, _) = sol.last();
        assert!(t < 1.0 + 1e-6);
    }
}
