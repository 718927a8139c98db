//! Adaptive Dormand–Prince 5(4) initial-value solver with dense output and
//! event location.
//!
//! Steps are accepted when the mixed error norm
//! `sqrt(mean((e_i / (abs_tol + rel_tol * |x_i|))^2))` is at most one. The
//! dense output is the 4th-order continuous extension of the pair: the cubic
//! Hermite interpolant through both step ends plus one correction term.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::par_map;
use crate::geom::{norm, Ball};
use crate::models::{ModelError, SystemDef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// `None` selects the initial step from the field magnitude.
    pub initial_step: Option<f64>,
    /// `None` means unbounded. The default keeps steps away from the
    /// stability edge near attracting equilibria, where unbounded steps
    /// leave tolerance-sized noise in the converged state.
    pub max_step: Option<f64>,
    pub max_steps: usize,
    pub blow_up_norm: f64,
    /// Disables error control and takes steps of exactly this size.
    pub fixed_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            initial_step: None,
            max_step: Some(1.0),
            max_steps: 10_000_000,
            blow_up_norm: 1e8,
            fixed_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn fixed(h: f64) -> Self {
        Self { fixed_step: Some(h), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.rel_tol) || !positive(self.abs_tol) {
            return Err(IntegrateError::InvalidConfig("tolerances must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(IntegrateError::InvalidConfig("max_steps must be positive".into()));
        }
        if !positive(self.blow_up_norm) {
            return Err(IntegrateError::InvalidConfig("blow_up_norm must be positive".into()));
        }
        for (name, v) in
            [("initial_step", self.initial_step), ("max_step", self.max_step), ("fixed_step", self.fixed_step)]
        {
            if v.is_some_and(|h| !positive(h)) {
                return Err(IntegrateError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("initial state {0:?} is outside the domain")]
    StartOutsideDomain(Vec<f64>),
    #[error("exceeded {steps} steps at t = {t}")]
    MaxSteps { t: f64, steps: usize },
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "time")]
pub enum Status {
    ReachedTmax,
    EventHit(f64),
    BlowUp,
    LeftDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
}

/// Dense-output data for one accepted step; `coeffs` holds five n-vectors.
#[derive(Debug, Clone, PartialEq)]
struct Segment {
    t0: f64,
    h: f64,
    coeffs: Vec<f64>,
}

impl Segment {
    fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let c = &self.coeffs;
        for (i, o) in out.iter_mut().enumerate() {
            *o = c[i] + theta * (c[n + i] + theta1 * (c[2 * n + i] + theta * (c[3 * n + i] + theta1 * c[4 * n + i])));
        }
    }

    fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

/// A computed solution `x_eps(x0, t)` with its accepted-step samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub system: String,
    pub eps: f64,
    pub x0: Vec<f64>,
    pub samples: Vec<Sample>,
    pub status: Status,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn final_state(&self) -> &[f64] {
        &self.samples.last().expect("trajectory has at least one sample").x
    }

    /// Dense-output state at `t`, or `None` outside `[0, t_end]`.
    pub fn state_at(&self, t: f64) -> Option<Vec<f64>> {
        if !(0.0..=self.t_end()).contains(&t) {
            return None;
        }
        if self.segments.is_empty() {
            return Some(self.x0.clone());
        }
        let idx = self.segments.partition_point(|s| s.t1() < t).min(self.segments.len() - 1);
        let seg = &self.segments[idx];
        if t == seg.t1() {
            return Some(self.samples[idx + 1].x.clone());
        }
        let mut out = vec![0.0; self.x0.len()];
        seg.eval_into(t, &mut out);
        Some(out)
    }

    /// CSV with header `t,x1,...,xn` and 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for i in 0..self.x0.len() {
            let _ = write!(s, ",x{}", i + 1);
        }
        s.push('\n');
        for sample in &self.samples {
            let _ = write!(s, "{:.16e}", sample.t);
            for v in &sample.x {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

// Dormand–Prince 5(4) tableau. Nodes c_i are not needed for autonomous fields.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    x_new: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n], x_new: vec![0.0; n] }
    }

    /// Fills k2..k7 and x_new from k1; k7 = f(x_new).
    fn step(&mut self, sys: &SystemDef, eps: f64, x: &[f64], h: f64) -> Result<(), ModelError> {
        let n = x.len();
        let Stages { k, tmp, x_new } = self;
        let rows: [&[f64]; 5] =
            [&[A21], &[A31, A32], &[A41, A42, A43], &[A51, A52, A53, A54], &[A61, A62, A63, A64, A65]];
        for (s, row) in rows.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in row.iter().enumerate() {
                    acc += a * k[j][i];
                }
                tmp[i] = x[i] + h * acc;
            }
            let (_, rest) = k.split_at_mut(s + 1);
            sys.eval_field_into(tmp, eps, &mut rest[0])?;
        }
        for i in 0..n {
            x_new[i] = x[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        let (_, tail) = k.split_at_mut(6);
        sys.eval_field_into(x_new, eps, &mut tail[0])
    }

    fn error_norm(&self, x: &[f64], h: f64, cfg: &IntegratorConfig) -> f64 {
        let k = &self.k;
        let n = x.len();
        let mut sum = 0.0;
        for i in 0..n {
            let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(self.x_new[i].abs());
            sum += (e / sc) * (e / sc);
        }
        (sum / n as f64).sqrt()
    }

    fn dense(&self, x: &[f64], h: f64) -> Vec<f64> {
        let n = x.len();
        let k = &self.k;
        let mut c = vec![0.0; 5 * n];
        for i in 0..n {
            let ydiff = self.x_new[i] - x[i];
            let bspl = h * k[0][i] - ydiff;
            c[i] = x[i];
            c[n + i] = ydiff;
            c[2 * n + i] = bspl;
            c[3 * n + i] = ydiff - h * k[6][i] - bspl;
            c[4 * n + i] =
                h * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
        }
        c
    }
}

fn scaled_rms(v: &[f64], x: &[f64], cfg: &IntegratorConfig) -> f64 {
    let s: f64 = v
        .iter()
        .zip(x)
        .map(|(a, b)| {
            let r = a / (cfg.abs_tol + cfg.rel_tol * b.abs());
            r * r
        })
        .sum();
    (s / v.len() as f64).sqrt()
}

/// Two-evaluation starting-step heuristic.
fn initial_step(sys: &SystemDef, eps: f64, x0: &[f64], f0: &[f64], cfg: &IntegratorConfig, span: f64) -> f64 {
    let hmax = cfg.max_step.unwrap_or(span).min(span);
    let d0 = scaled_rms(x0, x0, cfg);
    let d1 = scaled_rms(f0, x0, cfg);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(hmax);
    let x1: Vec<f64> = x0.iter().zip(f0).map(|(x, f)| x + h0 * f).collect();
    let d2 = match sys.eval_field(&x1, eps) {
        Ok(f1) => {
            let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
            scaled_rms(&diff, x0, cfg) / h0
        }
        Err(_) => return (h0 * 1e-3).min(hmax),
    };
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
    (100.0 * h0).min(h1).min(hmax)
}

fn check_inputs(
    sys: &SystemDef,
    eps: f64,
    x0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<(), IntegrateError> {
    cfg.validate()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(IntegrateError::InvalidInput(format!("t_end must be positive, got {t_end}")));
    }
    if x0.len() != sys.n() {
        return Err(ModelError::Dimension { expected: sys.n(), got: x0.len() }.into());
    }
    if !(eps.abs() <= sys.eps0()) {
        return Err(ModelError::EpsOutOfRange { eps, eps0: sys.eps0() }.into());
    }
    if x0.iter().any(|v| !v.is_finite()) || !sys.domain().admits_start(x0) || !sys.domain().admits(x0) {
        return Err(IntegrateError::StartOutsideDomain(x0.to_vec()));
    }
    Ok(())
}

const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;

/// Core loop; `event` inspects each accepted segment and may stop integration.
fn run(
    sys: &SystemDef,
    eps: f64,
    x0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
    mut event: impl FnMut(&Segment, &[f64]) -> Option<f64>,
) -> Result<Trajectory, IntegrateError> {
    check_inputs(sys, eps, x0, t_end, cfg)?;
    let n = sys.n();
    let mut st = Stages::new(n);
    sys.eval_field_into(x0, eps, &mut st.k[0])?;

    let mut traj = Trajectory {
        system: sys.name().to_string(),
        eps,
        x0: x0.to_vec(),
        samples: vec![Sample { t: 0.0, x: x0.to_vec() }],
        status: Status::ReachedTmax,
        segments: Vec::new(),
    };

    let mut h = match (cfg.fixed_step, cfg.initial_step) {
        (Some(h), _) => h,
        (None, Some(h)) => h,
        (None, None) => initial_step(sys, eps, x0, &st.k[0], cfg, t_end),
    };
    let hmax = cfg.max_step.unwrap_or(f64::INFINITY);
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut attempts = 0usize;
    let mut last_rejected = false;
    let mut err_old = 1e-4f64;

    while t < t_end {
        if attempts >= cfg.max_steps {
            return Err(IntegrateError::MaxSteps { t, steps: attempts });
        }
        attempts += 1;
        h = h.min(hmax);
        let remaining = t_end - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(IntegrateError::StepSizeUnderflow { t });
        }

        if let Err(e) = st.step(sys, eps, &x, h) {
            if cfg.fixed_step.is_some() {
                return Err(e.into());
            }
            h *= 0.25;
            last_rejected = true;
            continue;
        }

        let err = if cfg.fixed_step.is_some() { 0.0 } else { st.error_norm(&x, h, cfg) };
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            last_rejected = true;
            continue;
        }

        let seg = Segment { t0: t, h, coeffs: st.dense(&x, h) };
        t = if last { t_end } else { t + h };
        x.copy_from_slice(&st.x_new);
        let k7 = std::mem::take(&mut st.k[6]);
        st.k[0] = k7;
        st.k[6] = vec![0.0; n];
        traj.samples.push(Sample { t, x: x.clone() });
        let hit = event(&seg, &x);
        traj.segments.push(seg);

        if norm(&x) > cfg.blow_up_norm {
            traj.status = Status::BlowUp;
            break;
        }
        if !sys.domain().admits(&x) {
            traj.status = Status::LeftDomain;
            break;
        }
        if let Some(te) = hit {
            traj.status = Status::EventHit(te);
            break;
        }

        if cfg.fixed_step.is_none() {
            // Stabilized PI controller; plain I control oscillates at the stability edge.
            let e = err.max(1e-10);
            let mut fac = (0.9 * e.powf(-PI_ALPHA) * err_old.powf(PI_BETA)).clamp(0.2, 10.0);
            err_old = err.max(1e-4);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
        }
        last_rejected = false;
    }
    Ok(traj)
}

/// Integrates `x' = f(x, eps)` from `x0` over `[0, t_end]`.
pub fn integrate(
    sys: &SystemDef,
    eps: f64,
    x0: &[f64],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    run(sys, eps, x0, t_end, cfg, |_, _| None)
}

/// Stopping condition for [`integrate_until`].
pub enum Event<'a> {
    /// Entry into the closed ball.
    Ball(Ball),
    Predicate(&'a (dyn Fn(&[f64]) -> bool + Sync)),
}

impl Event<'_> {
    pub fn holds(&self, x: &[f64]) -> bool {
        match self {
            Event::Ball(b) => b.contains(x),
            Event::Predicate(p) => p(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventOutcome {
    Hit(f64),
    Timeout,
    /// The trajectory ended (blow-up or domain exit) before the event.
    Terminated(Status),
}

const PROBES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Smallest time in `(lo, hi]` where the condition holds, given it fails at `lo` and holds at `hi`.
fn bisect(mut lo: f64, mut hi: f64, tol: f64, mut holds: impl FnMut(f64) -> bool) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Earliest time the event holds, localized on the dense output to `1e-6 * t_max`.
pub fn integrate_until(
    sys: &SystemDef,
    eps: f64,
    x0: &[f64],
    event: &Event<'_>,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<EventOutcome, IntegrateError> {
    check_inputs(sys, eps, x0, t_max, cfg)?;
    if event.holds(x0) {
        return Ok(EventOutcome::Hit(0.0));
    }
    let tol = 1e-6 * t_max;
    let mut buf = vec![0.0; sys.n()];
    let traj = run(sys, eps, x0, t_max, cfg, |seg, _| {
        let mut prev = seg.t0;
        for theta in PROBES {
            let t = if theta == 1.0 { seg.t1() } else { seg.t0 + theta * seg.h };
            seg.eval_into(t, &mut buf);
            if event.holds(&buf) {
                return Some(bisect(prev, t, tol, |s| {
                    seg.eval_into(s, &mut buf);
                    event.holds(&buf)
                }));
            }
            prev = t;
        }
        None
    })?;
    Ok(match traj.status {
        Status::EventHit(t) => EventOutcome::Hit(t),
        Status::ReachedTmax => EventOutcome::Timeout,
        other => EventOutcome::Terminated(other),
    })
}

/// Minimum length of the window over which "remain inside" is verified.
pub const REMAIN_MIN_WINDOW: f64 = 10.0;
/// The remain window is this multiple of the entry time.
pub const REMAIN_FACTOR: f64 = 5.0;

/// Start of the final stay inside the ball on the computed trajectory, if
/// the trajectory ends inside it.
pub fn final_entry_time(traj: &Trajectory, ball: &Ball, tol: f64) -> Option<f64> {
    let n = traj.x0.len();
    let mut buf = vec![0.0; n];
    let mut inside = ball.contains(&traj.x0);
    // Bracket (last outside, first inside) of the current stay.
    let mut bracket: Option<(f64, f64)> = if inside { Some((0.0, 0.0)) } else { None };
    let mut last_t = 0.0;
    for seg in &traj.segments {
        for theta in PROBES {
            let t = seg.t0 + theta * seg.h;
            seg.eval_into(t, &mut buf);
            let now = ball.contains(&buf);
            match (inside, now) {
                (false, true) => bracket = Some((last_t, t)),
                (true, false) => bracket = None,
                _ => {}
            }
            inside = now;
            last_t = t;
        }
    }
    let (lo, hi) = bracket?;
    if hi == 0.0 {
        return Some(0.0);
    }
    Some(bisect(lo, hi, tol, |s| traj.state_at(s).is_some_and(|x| ball.contains(&x))))
}

/// Entry-and-remain time into `ball`: the first entry after which the
/// trajectory stays inside over the window `[t, max(5 t, 10)]`. An exit
/// resets the candidate to the next entry. `None` if no such entry occurs by
/// `horizon` or the trajectory terminates early.
pub fn entry_and_remain(
    sys: &SystemDef,
    eps: f64,
    x0: &[f64],
    ball: &Ball,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>, IntegrateError> {
    let first = match integrate_until(sys, eps, x0, &Event::Ball(ball.clone()), horizon, cfg)? {
        EventOutcome::Hit(t) => t,
        _ => return Ok(None),
    };
    let tol = 1e-6 * horizon;
    let mut candidate = first;
    let mut window = (REMAIN_FACTOR * candidate).max(REMAIN_MIN_WINDOW);
    loop {
        let traj = integrate(sys, eps, x0, window, cfg)?;
        if traj.status != Status::ReachedTmax {
            return Ok(None);
        }
        match final_entry_time(&traj, ball, tol) {
            Some(t) if t > horizon => return Ok(None),
            Some(t) => {
                let needed = (REMAIN_FACTOR * t).max(REMAIN_MIN_WINDOW);
                if needed <= window {
                    return Ok(Some(t));
                }
                candidate = t;
                window = needed;
            }
            None => {
                // Outside at the end of the window: the next entry lies beyond it.
                if window >= horizon {
                    return Ok(None);
                }
                candidate = window;
                window = (REMAIN_FACTOR * candidate).max(window * 2.0);
            }
        }
        debug_assert!(candidate <= window);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Endpoint {
    pub x0: Vec<f64>,
    pub x_end: Vec<f64>,
    pub t_end: f64,
    pub status: Status,
}

/// Integrates every start to `t_end`; entries keep input order and per-start errors.
pub fn ensemble_endpoints(
    sys: &SystemDef,
    eps: f64,
    starts: &[Vec<f64>],
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Vec<Result<Endpoint, IntegrateError>> {
    par_map(starts, |x0| {
        integrate(sys, eps, x0, t_end, cfg).map(|traj| Endpoint {
            x0: x0.clone(),
            x_end: traj.final_state().to_vec(),
            t_end: traj.t_end(),
            status: traj.status,
        })
    })
}
