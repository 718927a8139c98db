//! Persistence pipelines: absorbing-set and attractor estimates, the
//! step-by-step persistence certificate, uniform-in-time closeness and
//! positive-cone persistence.
//!
//! Everything here is sampled numerical evidence over the working compact K,
//! using Euclidean distances. Grid-derived radii are lower bounds at the
//! resolution of the symmetric eps grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::par_map;
use crate::geom::{distance, Ball};
use crate::integrator::{
    ensemble_endpoints, entry_and_remain, integrate, IntegrateError, IntegratorConfig, Status, Trajectory,
};
use crate::models::{BoxRegion, ModelError, SystemDef};
use crate::sampling::{k_grid, sphere_points, SamplingConfig};
use crate::spectral::{
    classify, continue_equilibrium, jacobian_growth_bound, newton_equilibrium, BranchPoint, ContinuationConfig,
    DirectionLimit, EquilibriumBranch, SpectralError, SpectralSummary,
};

pub const CERTIFICATE_VERSION: u32 = 1;
pub const METRIC: &str = "euclidean";

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("trajectory from {x0:?} at eps = {eps} ended with {status:?}")]
    Terminated { x0: Vec<f64>, eps: f64, status: Status },
    /// A hypothesis of the persistence argument fails numerically.
    #[error("{0}")]
    Hypothesis(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl CertifyError {
    /// Whether the error is a failed check rather than an operational fault.
    pub fn is_refusal(&self) -> bool {
        match self {
            CertifyError::Hypothesis(_) | CertifyError::Terminated { .. } => true,
            CertifyError::Spectral(SpectralError::InvalidInput(_)) => false,
            CertifyError::Spectral(_) => true,
            _ => false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CertifyError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CertifyError::InvalidInput(format!("{name} must be positive and finite, got {v}")))
    }
}

fn ensure_dim(sys: &SystemDef, x: &[f64], what: &str) -> Result<(), CertifyError> {
    if x.len() == sys.n() {
        Ok(())
    } else {
        Err(CertifyError::InvalidInput(format!("{what} has dimension {}, expected {}", x.len(), sys.n())))
    }
}

/// Entry-and-remain time of every start into `ball`, `None` where it never settles.
fn entry_times(
    sys: &SystemDef,
    eps: f64,
    starts: &[Vec<f64>],
    ball: &Ball,
    horizon: f64,
    integ: &IntegratorConfig,
) -> Result<Vec<Option<f64>>, CertifyError> {
    par_map(starts, |x0| entry_and_remain(sys, eps, x0, ball, horizon, integ))
        .into_iter()
        .map(|r| r.map_err(CertifyError::from))
        .collect()
}

fn max_time(times: &[Option<f64>]) -> f64 {
    times.iter().flatten().copied().fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Absorbing sets and attractors

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingEstimate {
    pub eps: f64,
    #[serde(rename = "K")]
    pub k: BoxRegion,
    #[serde(rename = "K0")]
    pub k0: Ball,
    pub starts: Vec<Vec<f64>>,
    /// Entry-and-remain time per start; `None` if the start never settled.
    pub entry_times: Vec<Option<f64>>,
    /// Largest finite entry time.
    pub t0: f64,
    pub all_absorbed: bool,
}

pub fn estimate_absorbing(
    sys: &SystemDef,
    eps: f64,
    k0: &Ball,
    horizon: f64,
    sampling: &SamplingConfig,
    integ: &IntegratorConfig,
) -> Result<AbsorbingEstimate, CertifyError> {
    positive("horizon", horizon)?;
    positive("K0 radius", k0.radius)?;
    ensure_dim(sys, &k0.center, "K0 center")?;
    for i in 0..sys.n() {
        for sign in [-1.0, 1.0] {
            let mut p = k0.center.clone();
            p[i] += sign * k0.radius;
            if !sys.domain().bounds.contains(&p) {
                return Err(CertifyError::Precondition(format!("K0 {k0:?} is not inside the domain")));
            }
        }
    }
    let starts = k_grid(sys.working(), sampling);
    let times = entry_times(sys, eps, &starts, k0, horizon, integ)?;
    Ok(AbsorbingEstimate {
        eps,
        k: sys.working().clone(),
        k0: k0.clone(),
        t0: max_time(&times),
        all_absorbed: times.iter().all(Option::is_some),
        starts,
        entry_times: times,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorEstimate {
    pub eps: f64,
    pub t_burn: f64,
    pub endpoint_cloud: Vec<Vec<f64>>,
    pub diameter: f64,
    pub centroid: Vec<f64>,
}

pub fn estimate_attractor(
    sys: &SystemDef,
    eps: f64,
    t_burn: f64,
    sampling: &SamplingConfig,
    integ: &IntegratorConfig,
) -> Result<AttractorEstimate, CertifyError> {
    positive("burn-in time", t_burn)?;
    let starts = k_grid(sys.working(), sampling);
    let mut cloud = Vec::with_capacity(starts.len());
    for e in ensemble_endpoints(sys, eps, &starts, t_burn, integ) {
        let e = e?;
        if e.status != Status::ReachedTmax {
            return Err(CertifyError::Terminated { x0: e.x0, eps, status: e.status });
        }
        cloud.push(e.x_end);
    }
    let mut diameter = 0.0f64;
    for (i, a) in cloud.iter().enumerate() {
        for b in &cloud[i + 1..] {
            diameter = diameter.max(distance(a, b));
        }
    }
    let n = sys.n();
    let centroid = (0..n).map(|d| cloud.iter().map(|p| p[d]).sum::<f64>() / cloud.len() as f64).collect();
    Ok(AttractorEstimate { eps, t_burn, endpoint_cloud: cloud, diameter, centroid })
}

/// Every cloud point lies strictly inside `B(center, radius)`.
pub fn check_attractor_containment(attr: &AttractorEstimate, center: &[f64], radius: f64) -> bool {
    attr.endpoint_cloud.iter().all(|p| distance(p, center) < radius)
}

// ---------------------------------------------------------------------------
// T_eta and eps_hat

/// Time after which every K-grid trajectory at `eps = 0` stays in `B̄(x*, eta/2)`.
pub fn estimate_t_eta(
    sys: &SystemDef,
    x_star: &[f64],
    eta: f64,
    horizon: f64,
    sampling: &SamplingConfig,
    integ: &IntegratorConfig,
) -> Result<f64, CertifyError> {
    positive("eta", eta)?;
    positive("horizon", horizon)?;
    ensure_dim(sys, x_star, "x*")?;
    let starts = k_grid(sys.working(), sampling);
    let ball = Ball::new(x_star.to_vec(), 0.5 * eta);
    let times = entry_times(sys, 0.0, &starts, &ball, horizon, integ)?;
    if let Some(i) = times.iter().position(Option::is_none) {
        return Err(CertifyError::Hypothesis(format!(
            "start {:?} does not settle within eta/2 of x* by t = {horizon}",
            starts[i]
        )));
    }
    Ok(max_time(&times))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationProbe {
    /// Probe magnitude; both `+eps` and `-eps` are integrated.
    pub eps: f64,
    pub deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsHatEstimate {
    pub eps_hat: f64,
    pub t_eta: f64,
    pub resolution: f64,
    /// Coarse scan at `eps0 * k / 10` used to bracket the bisection.
    pub scan: Vec<DeviationProbe>,
    /// Whether the scanned deviation is nondecreasing in `eps`.
    pub scan_monotone: bool,
    pub bisection: Vec<DeviationProbe>,
}

const EPS_HAT_SCAN: usize = 10;

fn endpoints_at(
    sys: &SystemDef,
    eps: f64,
    starts: &[Vec<f64>],
    t: f64,
    integ: &IntegratorConfig,
) -> Result<Vec<Option<Vec<f64>>>, CertifyError> {
    ensemble_endpoints(sys, eps, starts, t, integ)
        .into_iter()
        .map(|e| {
            let e = e?;
            Ok((e.status == Status::ReachedTmax).then_some(e.x_end))
        })
        .collect()
}

/// `max_{x0} d(x_eps(x0, t), x(x0, t))` over both signs of `eps`; infinite if a
/// perturbed trajectory terminates early.
pub fn max_deviation_at(
    sys: &SystemDef,
    eps: f64,
    t: f64,
    starts: &[Vec<f64>],
    baseline: &[Vec<f64>],
    integ: &IntegratorConfig,
) -> Result<f64, CertifyError> {
    if t == 0.0 || eps == 0.0 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for e in [eps, -eps] {
        for (end, base) in endpoints_at(sys, e, starts, t, integ)?.iter().zip(baseline) {
            worst = worst.max(end.as_ref().map_or(f64::INFINITY, |x| distance(x, base)));
        }
    }
    Ok(worst)
}

pub fn estimate_eps_hat(
    sys: &SystemDef,
    eta: f64,
    t_eta: f64,
    sampling: &SamplingConfig,
    integ: &IntegratorConfig,
    resolution_factor: f64,
) -> Result<EpsHatEstimate, CertifyError> {
    positive("eta", eta)?;
    positive("eps_hat resolution", resolution_factor)?;
    if !(t_eta.is_finite() && t_eta >= 0.0) {
        return Err(CertifyError::InvalidInput(format!("T_eta must be finite and >= 0, got {t_eta}")));
    }
    let eps0 = sys.eps0();
    let resolution = resolution_factor * eps0;
    let starts = k_grid(sys.working(), sampling);
    let baseline: Vec<Vec<f64>> = if t_eta > 0.0 {
        endpoints_at(sys, 0.0, &starts, t_eta, integ)?
            .into_iter()
            .zip(&starts)
            .map(|(e, x0)| {
                e.ok_or_else(|| CertifyError::Hypothesis(format!("unperturbed trajectory from {x0:?} terminated")))
            })
            .collect::<Result<_, _>>()?
    } else {
        starts.clone()
    };
    let half = 0.5 * eta;
    let probe = |eps: f64| -> Result<DeviationProbe, CertifyError> {
        let deviation = max_deviation_at(sys, eps, t_eta, &starts, &baseline, integ)?;
        Ok(DeviationProbe { eps, deviation, passed: deviation < half })
    };

    let mut scan = Vec::with_capacity(EPS_HAT_SCAN);
    for k in 1..=EPS_HAT_SCAN {
        scan.push(probe(eps0 * k as f64 / EPS_HAT_SCAN as f64)?);
    }
    let scan_monotone = scan.windows(2).all(|w| w[1].deviation >= w[0].deviation * (1.0 - 1e-9) - 1e-15);
    let mut bisection = Vec::new();
    let eps_hat = match scan.iter().position(|p| !p.passed) {
        None => eps0,
        Some(j) => {
            let mut lo = if j == 0 { 0.0 } else { scan[j - 1].eps };
            let mut hi = scan[j].eps;
            while hi - lo > resolution {
                let p = probe(0.5 * (lo + hi))?;
                if p.passed {
                    lo = p.eps;
                } else {
                    hi = p.eps;
                }
                bisection.push(p);
            }
            lo
        }
    };
    if eps_hat == 0.0 {
        let smallest = bisection.last().map_or(scan[0].eps, |p| p.eps);
        return Err(CertifyError::Hypothesis(format!("deviation at T_eta reaches eta/2 even at eps = {smallest:e}")));
    }
    Ok(EpsHatEstimate { eps_hat, t_eta, resolution, scan, scan_monotone, bisection })
}

// ---------------------------------------------------------------------------
// Basin radius

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasinConfig {
    pub shells: usize,
    /// Low-discrepancy sphere points added to the 2n axis points.
    pub sphere_points: usize,
    pub horizon: f64,
    /// Upper cap on the shell radius; the working-box distance always applies.
    pub r_max: Option<f64>,
    /// Convergence radius as a fraction of the effective `r_max`.
    pub convergence_factor: f64,
}

impl Default for BasinConfig {
    fn default() -> Self {
        Self { shells: 10, sphere_points: 14, horizon: 100.0, r_max: None, convergence_factor: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellResult {
    pub radius: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinEstimate {
    pub eps: f64,
    /// Sampled lower-confidence estimate, not a bound.
    pub r_eps: f64,
    pub r_max: f64,
    pub convergence_radius: f64,
    /// Shells tested, outermost first.
    pub shells: Vec<ShellResult>,
}

pub fn estimate_basin_radius(
    sys: &SystemDef,
    eps: f64,
    x_star_eps: &[f64],
    r_max: f64,
    cfg: &BasinConfig,
    integ: &IntegratorConfig,
) -> Result<BasinEstimate, CertifyError> {
    ensure_dim(sys, x_star_eps, "x*(eps)")?;
    positive("basin horizon", cfg.horizon)?;
    positive("basin convergence factor", cfg.convergence_factor)?;
    if cfg.shells == 0 || r_max.is_nan() || r_max < 0.0 {
        return Err(CertifyError::InvalidInput("basin needs at least one shell and r_max >= 0".into()));
    }
    let working = sys.working();
    let r_max = r_max.min(working.distance_to_boundary(x_star_eps)).max(0.0);
    let convergence_radius = cfg.convergence_factor * r_max;
    let mut shells = Vec::new();
    let mut r_eps = 0.0;
    if r_max > 0.0 {
        for k in (1..=cfg.shells).rev() {
            // `r_max * n / n` can round one ulp above `r_max`.
            let radius = (r_max * k as f64 / cfg.shells as f64).min(r_max);
            let pts: Vec<Vec<f64>> = sphere_points(x_star_eps, radius, cfg.sphere_points)
                .into_iter()
                .map(|p| p.iter().enumerate().map(|(i, v)| v.clamp(working.lo[i], working.hi[i])).collect())
                .collect();
            let mut converged = true;
            for e in ensemble_endpoints(sys, eps, &pts, cfg.horizon, integ) {
                let e = e?;
                if e.status != Status::ReachedTmax || distance(&e.x_end, x_star_eps) >= convergence_radius {
                    converged = false;
                }
            }
            shells.push(ShellResult { radius, converged });
            if converged {
                r_eps = radius;
                break;
            }
        }
    }
    Ok(BasinEstimate { eps, r_eps, r_max, convergence_radius, shells })
}

// ---------------------------------------------------------------------------
// Persistence certificate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    pub integrator: IntegratorConfig,
    pub sampling: SamplingConfig,
    pub continuation: ContinuationConfig,
    /// Nodes of the symmetric eps grid over `[-eps0, eps0]`.
    pub grid_nodes: usize,
    /// Horizon for entry-and-remain searches.
    pub horizon: f64,
    /// Bisection resolution for eps_hat, relative to eps0.
    pub eps_hat_resolution: f64,
    pub basin: BasinConfig,
    pub attractor_burn_in: f64,
    pub sweep_horizon: f64,
    pub sweep_tolerance: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            sampling: SamplingConfig::default(),
            continuation: ContinuationConfig::default(),
            grid_nodes: 21,
            horizon: 200.0,
            eps_hat_resolution: 1e-3,
            basin: BasinConfig::default(),
            attractor_burn_in: 50.0,
            sweep_horizon: 100.0,
            sweep_tolerance: 1e-6,
        }
    }
}

impl CertifyConfig {
    pub fn validate(&self) -> Result<(), CertifyError> {
        self.integrator.validate()?;
        if self.grid_nodes < 3 || self.grid_nodes % 2 == 0 {
            return Err(CertifyError::InvalidInput(format!(
                "grid_nodes must be odd and >= 3, got {}",
                self.grid_nodes
            )));
        }
        positive("horizon", self.horizon)?;
        positive("eps_hat_resolution", self.eps_hat_resolution)?;
        positive("attractor_burn_in", self.attractor_burn_in)?;
        positive("sweep_horizon", self.sweep_horizon)?;
        positive("sweep_tolerance", self.sweep_tolerance)?;
        positive("basin.horizon", self.basin.horizon)?;
        positive("basin.convergence_factor", self.basin.convergence_factor)?;
        if self.basin.shells == 0 {
            return Err(CertifyError::InvalidInput("basin.shells must be >= 1".into()));
        }
        if let Some(r) = self.basin.r_max {
            positive("basin.r_max", r)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Equilibrium,
    Hurwitz,
    TEta,
    EpsHat,
    Continuation,
    Basin,
    Attractor,
    EpsStar,
    FinalSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Verdict {
    Certified,
    Refused { step: Step, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: Step,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct REps {
    pub eps: f64,
    pub r_eps: f64,
}

/// Per-node evidence for every grid eps on the hyperbolic part of the branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEvidence {
    pub eps: f64,
    pub x_star: Vec<f64>,
    /// `d(x*, x*(eps))`.
    pub shift: f64,
    pub basin: BasinEstimate,
    pub attractor_diameter: f64,
    pub attractor_centroid: Vec<f64>,
    /// Attractor cloud inside `B(x*, eta)`.
    pub attractor_in_eta_ball: bool,
    /// Cloud inside `B(x*, r0)`; set once r0 is known.
    pub attractor_in_r0_ball: Option<bool>,
    /// `B(x*, r0)` inside `B(x*(eps), r_eps)`; set once r0 is known.
    pub r0_ball_in_basin: Option<bool>,
    pub sweep_max_error: Option<f64>,
    /// Entry-and-remain bound into `B̄(x*(eps), eta/2)` from K.
    pub absorption_t0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub metric: String,
    pub eps0: f64,
    pub working_compact: BoxRegion,
    pub limitations: Vec<String>,
    pub config: CertifyConfig,
    pub k_grid_size: usize,
    pub eps_grid: Vec<f64>,
    pub eps_grid_spacing: f64,
    pub steps: Vec<StepRecord>,
    pub spectral_at_zero: Option<SpectralSummary>,
    pub newton_residual_at_zero: Option<f64>,
    pub eps_hat_search: Option<EpsHatEstimate>,
    pub branch_negative: Option<DirectionLimit>,
    pub branch_positive: Option<DirectionLimit>,
    pub jacobian_growth_bound: Option<f64>,
    pub nodes: Vec<NodeEvidence>,
    /// Common entry-and-remain bound over grid eps up to eps_star.
    pub uniform_absorption_t0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceCertificate {
    pub certificate_version: u32,
    pub tool_version: String,
    pub system: String,
    pub eta: f64,
    pub verdict: Verdict,
    pub x_star: Option<Vec<f64>>,
    #[serde(rename = "T_eta")]
    pub t_eta: Option<f64>,
    pub eps_hat: Option<f64>,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub eps3: Option<f64>,
    pub eps4: Option<f64>,
    pub eps_star: Option<f64>,
    pub r0: Option<f64>,
    pub r_eps_table: Vec<REps>,
    pub evidence: Evidence,
    #[serde(skip)]
    pub branch: Option<EquilibriumBranch>,
    #[serde(skip)]
    pub attractors: Vec<AttractorEstimate>,
}

impl PersistenceCertificate {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

fn limitations() -> Vec<String> {
    [
        "distances are Euclidean",
        "checks over the domain are performed on the sampled working compact K; coverage elsewhere relies on K being absorbing",
        "entry-and-remain is verified over [t, max(5t, 10)]; later exits are undetectable",
        "r_eps is a sampled lower-confidence estimate, not a bound",
        "eps1..eps4 and eps_star are lower bounds at the eps grid resolution",
        "uniform dissipativity is checked as a common entry-and-remain bound into the eta/2 ball around x*(eps) for every grid eps up to eps_star",
        "all quantities are sampled numerical evidence, not validated proofs",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

enum Stop {
    Refuse(Step, String),
    Fail(CertifyError),
}

fn at(step: Step) -> impl Fn(CertifyError) -> Stop {
    move |e| if e.is_refusal() { Stop::Refuse(step, e.to_string()) } else { Stop::Fail(e) }
}

#[derive(Default)]
struct Computed {
    x_star: Vec<f64>,
    t_eta: f64,
    eps_hat: f64,
    eps1: f64,
    eps2: f64,
    eps3: f64,
    eps4: f64,
    eps_star: f64,
    r0: f64,
    r_eps_table: Vec<REps>,
    branch: Option<EquilibriumBranch>,
    attractors: Vec<AttractorEstimate>,
}

/// Runs every step of the persistence argument and assembles the certificate.
/// Failed checks produce a refused certificate; operational faults are errors.
pub fn certify_persistence(
    sys: &SystemDef,
    eta: f64,
    cfg: &CertifyConfig,
) -> Result<PersistenceCertificate, CertifyError> {
    positive("eta", eta)?;
    cfg.validate()?;
    let eps_grid = crate::spectral::symmetric_grid(sys.eps0(), cfg.grid_nodes);
    let mut evidence = Evidence {
        metric: METRIC.into(),
        eps0: sys.eps0(),
        working_compact: sys.working().clone(),
        limitations: limitations(),
        config: cfg.clone(),
        k_grid_size: k_grid(sys.working(), &cfg.sampling).len(),
        eps_grid_spacing: sys.eps0() / (cfg.grid_nodes / 2) as f64,
        eps_grid,
        steps: Vec::new(),
        spectral_at_zero: None,
        newton_residual_at_zero: None,
        eps_hat_search: None,
        branch_negative: None,
        branch_positive: None,
        jacobian_growth_bound: None,
        nodes: Vec::new(),
        uniform_absorption_t0: None,
    };
    let outcome = pipeline(sys, eta, cfg, &mut evidence);
    let mut cert = PersistenceCertificate {
        certificate_version: CERTIFICATE_VERSION,
        tool_version: crate::TOOL_VERSION.into(),
        system: sys.name().into(),
        eta,
        verdict: Verdict::Certified,
        x_star: None,
        t_eta: None,
        eps_hat: None,
        eps1: None,
        eps2: None,
        eps3: None,
        eps4: None,
        eps_star: None,
        r0: None,
        r_eps_table: Vec::new(),
        evidence,
        branch: None,
        attractors: Vec::new(),
    };
    match outcome {
        Ok(c) => {
            cert.x_star = Some(c.x_star);
            cert.t_eta = Some(c.t_eta);
            cert.eps_hat = Some(c.eps_hat);
            cert.eps1 = Some(c.eps1);
            cert.eps2 = Some(c.eps2);
            cert.eps3 = Some(c.eps3);
            cert.eps4 = Some(c.eps4);
            cert.eps_star = Some(c.eps_star);
            cert.r0 = Some(c.r0);
            cert.r_eps_table = c.r_eps_table;
            cert.branch = c.branch;
            cert.attractors = c.attractors;
        }
        Err(Stop::Refuse(step, reason)) => {
            cert.evidence.steps.push(StepRecord { step, passed: false, detail: reason.clone() });
            cert.verdict = Verdict::Refused { step, reason };
        }
        Err(Stop::Fail(e)) => return Err(e),
    }
    Ok(cert)
}

fn pipeline(sys: &SystemDef, eta: f64, cfg: &CertifyConfig, ev: &mut Evidence) -> Result<Computed, Stop> {
    let mut out = Computed::default();
    let pass = |ev: &mut Evidence, step: Step, detail: String| ev.steps.push(StepRecord { step, passed: true, detail });
    let integ = &cfg.integrator;

    // (1) Hurwitz equilibrium at eps = 0.
    let guess = cfg.continuation.guess.clone().unwrap_or_else(|| sys.equilibrium_guess());
    let sol = newton_equilibrium(sys, 0.0, &guess, cfg.continuation.newton_tol, cfg.continuation.newton_max_iter)
        .map_err(|e| at(Step::Equilibrium)(e.into()))?;
    let j0 = sys.jacobian(&sol.x, 0.0).map_err(|e| at(Step::Equilibrium)(e.into()))?;
    ev.newton_residual_at_zero = Some(sol.residual);
    pass(ev, Step::Equilibrium, format!("x* = {:?} (residual {:e})", sol.x, sol.residual));
    let spectral = classify(&j0, cfg.continuation.hyperbolicity_tol).map_err(|e| at(Step::Hurwitz)(e.into()))?;
    ev.spectral_at_zero = Some(spectral.clone());
    if !spectral.hyperbolic {
        let e = SpectralError::NotHyperbolic { abscissa: spectral.spectral_abscissa };
        return Err(Stop::Refuse(Step::Hurwitz, e.to_string()));
    }
    if !spectral.hurwitz {
        let e = SpectralError::NotHurwitz { index: spectral.index, n: sys.n() };
        return Err(Stop::Refuse(Step::Hurwitz, e.to_string()));
    }
    pass(ev, Step::Hurwitz, format!("spectral abscissa {:e}", spectral.spectral_abscissa));
    let x_star = sol.x;

    // (2) T_eta.
    let t_eta = estimate_t_eta(sys, &x_star, eta, cfg.horizon, &cfg.sampling, integ).map_err(at(Step::TEta))?;
    pass(ev, Step::TEta, format!("T_eta = {t_eta:e}"));

    // (3) eps_hat.
    let hat =
        estimate_eps_hat(sys, eta, t_eta, &cfg.sampling, integ, cfg.eps_hat_resolution).map_err(at(Step::EpsHat))?;
    let eps_hat = hat.eps_hat;
    let monotone = hat.scan_monotone;
    ev.eps_hat_search = Some(hat);
    pass(ev, Step::EpsHat, format!("eps_hat = {eps_hat:e} (scan monotone: {monotone})"));

    // (4) Branch existence and index preservation.
    let ccfg = ContinuationConfig { guess: Some(x_star.clone()), ..cfg.continuation.clone() };
    let branch =
        continue_equilibrium(sys, sys.eps0(), cfg.grid_nodes, &ccfg).map_err(|e| at(Step::Continuation)(e.into()))?;
    let (eps1, eps2) = (branch.eps1(), branch.eps2());
    ev.branch_negative = Some(branch.negative.clone());
    ev.branch_positive = Some(branch.positive.clone());
    ev.jacobian_growth_bound = Some(jacobian_growth_bound(&branch));
    if eps1.min(eps2) == 0.0 {
        return Err(Stop::Refuse(
            Step::Continuation,
            format!("branch does not extend to the first grid node (eps1 = {eps1:e}, eps2 = {eps2:e})"),
        ));
    }
    pass(ev, Step::Continuation, format!("eps1 = {eps1:e}, eps2 = {eps2:e}"));
    let reach = eps1.min(eps2);
    let nodes: Vec<&BranchPoint> = branch.points.iter().filter(|p| p.eps.abs() <= reach).collect();

    // (5) Basin radii.
    let r_cap = cfg.basin.r_max.unwrap_or(f64::INFINITY);
    let mut basins = Vec::with_capacity(nodes.len());
    for p in &nodes {
        basins.push(estimate_basin_radius(sys, p.eps, &p.x_star, r_cap, &cfg.basin, integ).map_err(at(Step::Basin))?);
    }
    let shifts: Vec<f64> = nodes.iter().map(|p| distance(&p.x_star, &x_star)).collect();

    // (6) Attractors.
    let mut attractors = Vec::with_capacity(nodes.len());
    for p in &nodes {
        attractors.push(
            estimate_attractor(sys, p.eps, cfg.attractor_burn_in, &cfg.sampling, integ).map_err(at(Step::Attractor))?,
        );
    }
    let in_eta: Vec<bool> = attractors.iter().map(|a| check_attractor_containment(a, &x_star, eta)).collect();

    // Grid magnitudes e_k; nodes with |eps| <= e_k are those considered for e_k.
    let magnitudes: Vec<f64> = nodes.iter().map(|p| p.eps).filter(|e| *e > 0.0).collect();
    let nodes_ref = &nodes;
    let within = |e: f64| (0..nodes_ref.len()).filter(move |&i| nodes_ref[i].eps.abs() <= e);
    let r0_for = |e: f64| within(e).map(|i| basins[i].r_eps - shifts[i]).fold(f64::INFINITY, f64::min);
    let eps4_for = |r0: f64| {
        let mut best = 0.0;
        for &a in magnitudes.iter().filter(|a| **a <= eps_hat) {
            if within(a).all(|i| in_eta[i] && check_attractor_containment(&attractors[i], &x_star, r0)) {
                best = a;
            } else {
                break;
            }
        }
        best
    };
    // Pick (eps3, r0) maximizing min(eps3, eps4(r0)); ties go to the larger eps3.
    let mut choice: Option<(f64, f64, f64)> = None;
    for &e in &magnitudes {
        let r0 = r0_for(e);
        if !(r0 > 0.0) {
            break;
        }
        let e4 = eps4_for(r0);
        if choice.is_none_or(|(ce, _, c4)| e.min(e4) >= ce.min(c4)) {
            choice = Some((e, r0, e4));
        }
    }
    let Some((eps3, r0, eps4)) = choice else {
        return Err(Stop::Refuse(
            Step::Basin,
            "no nonzero grid eps admits a positive r0 (basin ball around x* is empty)".into(),
        ));
    };
    pass(ev, Step::Basin, format!("eps3 = {eps3:e}, r0 = {r0:e}"));
    if eps4 == 0.0 {
        return Err(Stop::Refuse(
            Step::Attractor,
            format!(
                "no nonzero grid eps up to eps_hat = {eps_hat:e} has its attractor inside B(x*, r0) and B(x*, eta) (grid spacing {:e})",
                ev.eps_grid_spacing
            ),
        ));
    }
    pass(ev, Step::Attractor, format!("eps4 = {eps4:e}"));

    // (7) eps_star.
    let eps_star = [sys.eps0(), eps1, eps2, eps3, eps4].into_iter().fold(f64::INFINITY, f64::min);
    for (i, p) in nodes.iter().enumerate() {
        ev.nodes.push(NodeEvidence {
            eps: p.eps,
            x_star: p.x_star.clone(),
            shift: shifts[i],
            basin: basins[i].clone(),
            attractor_diameter: attractors[i].diameter,
            attractor_centroid: attractors[i].centroid.clone(),
            attractor_in_eta_ball: in_eta[i],
            attractor_in_r0_ball: Some(check_attractor_containment(&attractors[i], &x_star, r0)),
            r0_ball_in_basin: Some(shifts[i] + r0 <= basins[i].r_eps),
            sweep_max_error: None,
            absorption_t0: None,
        });
    }
    if !(eps_star > 0.0) {
        return Err(Stop::Refuse(Step::EpsStar, "eps_star is zero at the grid resolution".into()));
    }
    pass(ev, Step::EpsStar, format!("eps_star = {eps_star:e}"));

    // (8) Final sweep: convergence to the branch and uniform absorption.
    let starts = k_grid(sys.working(), &cfg.sampling);
    let mut common_t0 = 0.0f64;
    for (i, p) in nodes.iter().enumerate() {
        if p.eps.abs() > eps_star {
            continue;
        }
        let node = &mut ev.nodes[i];
        if node.attractor_in_r0_ball != Some(true) || node.r0_ball_in_basin != Some(true) || !node.attractor_in_eta_ball
        {
            return Err(Stop::Refuse(Step::FinalSweep, format!("containment chain fails at eps = {:e}", p.eps)));
        }
        let mut worst = 0.0f64;
        for e in ensemble_endpoints(sys, p.eps, &starts, cfg.sweep_horizon, integ) {
            let e = e.map_err(|e| Stop::Fail(e.into()))?;
            let err = if e.status == Status::ReachedTmax { distance(&e.x_end, &p.x_star) } else { f64::INFINITY };
            worst = worst.max(err);
        }
        node.sweep_max_error = Some(worst);
        let ball = Ball::new(p.x_star.clone(), 0.5 * eta);
        let times = entry_times(sys, p.eps, &starts, &ball, cfg.horizon, integ).map_err(at(Step::FinalSweep))?;
        let t0 = max_time(&times);
        node.absorption_t0 = times.iter().all(Option::is_some).then_some(t0);
        if !(worst <= cfg.sweep_tolerance) {
            return Err(Stop::Refuse(
                Step::FinalSweep,
                format!("endpoint error {worst:e} exceeds {:e} at eps = {:e}", cfg.sweep_tolerance, p.eps),
            ));
        }
        if node.absorption_t0.is_none() {
            return Err(Stop::Refuse(
                Step::FinalSweep,
                format!("K is not absorbed into the eta/2 ball around x*(eps) at eps = {:e}", p.eps),
            ));
        }
        common_t0 = common_t0.max(t0);
    }
    ev.uniform_absorption_t0 = Some(common_t0);
    pass(ev, Step::FinalSweep, format!("all grid eps with |eps| <= {eps_star:e} converge to x*(eps)"));

    out.r_eps_table = nodes.iter().zip(&basins).map(|(p, b)| REps { eps: p.eps, r_eps: b.r_eps }).collect();
    out.x_star = x_star;
    out.t_eta = t_eta;
    out.eps_hat = eps_hat;
    out.eps1 = eps1;
    out.eps2 = eps2;
    out.eps3 = eps3;
    out.eps4 = eps4;
    out.eps_star = eps_star;
    out.r0 = r0;
    out.attractors = attractors;
    out.branch = Some(branch);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Uniform-in-time closeness

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosenessConfig {
    pub integrator: IntegratorConfig,
    pub sampling: SamplingConfig,
    pub continuation: ContinuationConfig,
    /// Horizon for the entry-and-remain searches behind theta1 and theta2.
    pub horizon: f64,
    /// Intervals of the shared time grid on `[0, T]`.
    pub time_grid_intervals: usize,
    /// The tail is checked on `[T, tail_factor * T]`.
    pub tail_factor: f64,
}

impl Default for ClosenessConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            sampling: SamplingConfig::default(),
            continuation: ContinuationConfig::default(),
            horizon: 200.0,
            time_grid_intervals: 2000,
            tail_factor: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCloseness {
    pub eps: f64,
    pub x0: Vec<f64>,
    /// Sup over the grid on `[0, T]`.
    pub sup_head: f64,
    /// Sup over the grid on `[T, tail_factor * T]`.
    pub sup_tail: f64,
    pub sup: f64,
    /// The triangle bound dominates the measured distance at every tail sample.
    pub dominance_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsCloseness {
    pub eps: f64,
    pub x_star: Option<Vec<f64>>,
    /// `d(x*(eps), x*)`.
    pub equilibrium_distance: Option<f64>,
    pub theta2: Option<f64>,
    pub sup: Option<f64>,
    pub passed: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub eta: f64,
    pub metric: String,
    pub x_star: Vec<f64>,
    pub theta1: f64,
    pub theta2: f64,
    #[serde(rename = "T")]
    pub t: f64,
    /// End of the tail window.
    pub t_tail: f64,
    pub time_step: f64,
    pub per_eps: Vec<EpsCloseness>,
    pub pairs: Vec<PairCloseness>,
    pub dominance_holds: bool,
    pub passed: bool,
    /// `(t, d)` series of the pair with the largest sup.
    #[serde(skip)]
    pub worst_series: Vec<[f64; 2]>,
}

struct PairTrace {
    head: f64,
    tail: f64,
    dominance: bool,
    series: Vec<[f64; 2]>,
}

fn trace_pair(
    pert: &Trajectory,
    base: &Trajectory,
    x_star_eps: &[f64],
    x_star: &[f64],
    t: f64,
    intervals: usize,
    tail_steps: usize,
) -> PairTrace {
    let shift = distance(x_star_eps, x_star);
    let h = t / intervals as f64;
    let end = pert.t_end().min(base.t_end());
    let mut out = PairTrace { head: 0.0, tail: 0.0, dominance: true, series: Vec::new() };
    for k in 0..=intervals + tail_steps {
        let s = if k == intervals { t } else { (k as f64 * h).min(end) };
        let (Some(a), Some(b)) = (pert.state_at(s), base.state_at(s)) else {
            out.head = f64::INFINITY;
            out.dominance = false;
            break;
        };
        let d = distance(&a, &b);
        out.series.push([s, d]);
        if k <= intervals {
            out.head = out.head.max(d);
        }
        if k >= intervals {
            out.tail = out.tail.max(d);
            let bound = distance(&a, x_star_eps) + shift + distance(&b, x_star);
            if d > bound + 1e-12 * (1.0 + bound) {
                out.dominance = false;
            }
        }
    }
    out
}

pub fn check_uniform_closeness(
    sys: &SystemDef,
    eta: f64,
    eps_values: &[f64],
    cfg: &ClosenessConfig,
) -> Result<ClosenessReport, CertifyError> {
    positive("eta", eta)?;
    positive("horizon", cfg.horizon)?;
    if cfg.time_grid_intervals == 0 || !(cfg.tail_factor >= 1.0) {
        return Err(CertifyError::InvalidInput("time grid needs >= 1 interval and tail_factor >= 1".into()));
    }
    cfg.integrator.validate()?;
    if eps_values.is_empty() {
        return Err(CertifyError::InvalidInput("no eps values to test".into()));
    }
    let integ = &cfg.integrator;
    let guess = cfg.continuation.guess.clone().unwrap_or_else(|| sys.equilibrium_guess());
    let x_star = newton_equilibrium(sys, 0.0, &guess, cfg.continuation.newton_tol, cfg.continuation.newton_max_iter)?.x;
    let starts = k_grid(sys.working(), &cfg.sampling);
    let third = eta / 3.0;

    let times = entry_times(sys, 0.0, &starts, &Ball::new(x_star.clone(), third), cfg.horizon, integ)?;
    if let Some(i) = times.iter().position(Option::is_none) {
        return Err(CertifyError::Hypothesis(format!(
            "unperturbed trajectory from {:?} does not settle within eta/3 of x* by t = {}",
            starts[i], cfg.horizon
        )));
    }
    let theta1 = max_time(&times);

    let mut per_eps = Vec::with_capacity(eps_values.len());
    let mut theta2 = 0.0f64;
    for &eps in eps_values {
        let mut rec = EpsCloseness {
            eps,
            x_star: None,
            equilibrium_distance: None,
            theta2: None,
            sup: None,
            passed: false,
            failure: None,
        };
        match newton_equilibrium(sys, eps, &x_star, cfg.continuation.newton_tol, cfg.continuation.newton_max_iter) {
            Err(e) => rec.failure = Some(format!("no equilibrium: {e}")),
            Ok(sol) => {
                let d = distance(&sol.x, &x_star);
                rec.equilibrium_distance = Some(d);
                if d > third {
                    rec.failure = Some(format!("d(x*(eps), x*) = {d:e} exceeds eta/3"));
                } else {
                    let ball = Ball::new(sol.x.clone(), third);
                    let times = entry_times(sys, eps, &starts, &ball, cfg.horizon, integ)?;
                    if times.iter().all(Option::is_some) {
                        let t2 = max_time(&times);
                        rec.theta2 = Some(t2);
                        theta2 = theta2.max(t2);
                    } else {
                        rec.failure = Some("a perturbed trajectory does not settle within eta/3 of x*(eps)".into());
                    }
                }
                rec.x_star = Some(sol.x);
            }
        }
        per_eps.push(rec);
    }

    let t = theta1.max(theta2);
    // With T = 0 every trajectory starts settled; a unit window still samples the motion.
    let span = if t > 0.0 { t } else { 1.0 };
    let intervals = cfg.time_grid_intervals;
    let h = span / intervals as f64;
    let tail_steps = ((cfg.tail_factor - 1.0) * span / h).ceil() as usize;
    let t_tail = span + tail_steps as f64 * h;

    let base: Vec<Trajectory> =
        par_map(&starts, |x0| integrate(sys, 0.0, x0, t_tail, integ)).into_iter().collect::<Result<_, _>>()?;
    if let Some(b) = base.iter().find(|b| b.status != Status::ReachedTmax) {
        return Err(CertifyError::Terminated { x0: b.x0.clone(), eps: 0.0, status: b.status });
    }

    let mut pairs = Vec::new();
    let mut worst: (f64, Vec<[f64; 2]>) = (-1.0, Vec::new());
    for rec in per_eps.iter_mut().filter(|r| r.theta2.is_some()) {
        let x_star_eps = rec.x_star.clone().expect("admissible eps has an equilibrium");
        let eps = rec.eps;
        let traces: Vec<Result<PairTrace, IntegrateError>> = par_map(&starts, |x0| {
            let i = starts.iter().position(|s| s == x0).expect("start from grid");
            let pert = integrate(sys, eps, x0, t_tail, integ)?;
            if pert.status != Status::ReachedTmax {
                return Ok(PairTrace {
                    head: f64::INFINITY,
                    tail: f64::INFINITY,
                    dominance: false,
                    series: Vec::new(),
                });
            }
            Ok(trace_pair(&pert, &base[i], &x_star_eps, &x_star, span, intervals, tail_steps))
        });
        let mut sup = 0.0f64;
        let mut dominance = true;
        for (x0, tr) in starts.iter().zip(traces) {
            let tr = tr?;
            let pair_sup = tr.head.max(tr.tail);
            sup = sup.max(pair_sup);
            dominance &= tr.dominance;
            if pair_sup > worst.0 {
                worst = (pair_sup, tr.series);
            }
            pairs.push(PairCloseness {
                eps,
                x0: x0.clone(),
                sup_head: tr.head,
                sup_tail: tr.tail,
                sup: pair_sup,
                dominance_holds: tr.dominance,
            });
        }
        rec.sup = Some(sup);
        rec.passed = sup < eta && dominance;
        if !dominance {
            rec.failure = Some("triangle-inequality dominance violated on the tail".into());
        } else if sup >= eta {
            rec.failure = Some(format!("sup deviation {sup:e} reaches eta"));
        }
    }
    let dominance_holds = pairs.iter().all(|p| p.dominance_holds);
    let passed = per_eps.iter().all(|r| r.passed);
    Ok(ClosenessReport {
        eta,
        metric: METRIC.into(),
        x_star,
        theta1,
        theta2,
        t,
        t_tail,
        time_step: h,
        per_eps,
        pairs,
        dominance_holds,
        passed,
        worst_series: worst.1,
    })
}

// ---------------------------------------------------------------------------
// Positive-cone persistence

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositivityConfig {
    pub integrator: IntegratorConfig,
    pub sampling: SamplingConfig,
    pub continuation: ContinuationConfig,
    pub grid_nodes: usize,
    /// Late-time window is `[floor_horizon, 2 * floor_horizon]`.
    pub floor_horizon: f64,
    /// Persistence floor; half the smallest equilibrium component when absent.
    pub floor: Option<f64>,
    /// Starts added to the K grid.
    pub extra_starts: Vec<Vec<f64>>,
}

impl Default for PositivityConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            sampling: SamplingConfig::default(),
            continuation: ContinuationConfig::default(),
            grid_nodes: 21,
            floor_horizon: 50.0,
            floor: None,
            extra_starts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityAtEps {
    pub eps: f64,
    pub x_star: Option<Vec<f64>>,
    pub equilibrium_positive: bool,
    pub trajectories_positive: bool,
    /// Smallest component over late times and starts.
    pub late_min_component: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub eps_range: f64,
    pub floor_horizon: f64,
    pub min_component_floor: f64,
    pub starts: usize,
    pub per_eps: Vec<PositivityAtEps>,
    pub passed: bool,
    #[serde(skip)]
    pub branch: Option<EquilibriumBranch>,
}

const LATE_SAMPLES: usize = 200;

pub fn check_positive_persistence(
    sys: &SystemDef,
    eps_range: f64,
    cfg: &PositivityConfig,
) -> Result<PositivityReport, CertifyError> {
    if !sys.positive_cone() {
        return Err(CertifyError::Precondition(format!("model {} is not a positive-cone model", sys.name())));
    }
    positive("floor_horizon", cfg.floor_horizon)?;
    cfg.integrator.validate()?;
    let mut starts = k_grid(sys.working(), &cfg.sampling);
    for s in &cfg.extra_starts {
        ensure_dim(sys, s, "start")?;
        if !(sys.domain().admits_start(s) && sys.domain().admits(s)) {
            return Err(CertifyError::Precondition(format!(
                "start {s:?} lies outside the positive domain (below the cap {} or above its bounds)",
                crate::models::POSITIVE_CAP
            )));
        }
        starts.push(s.clone());
    }
    let branch = continue_equilibrium(sys, eps_range, cfg.grid_nodes, &cfg.continuation)?;
    let min_eq = branch.points.iter().flat_map(|p| p.x_star.iter().copied()).fold(f64::INFINITY, f64::min);
    let floor = cfg.floor.unwrap_or(0.5 * min_eq);
    let (fh, t_end) = (cfg.floor_horizon, 2.0 * cfg.floor_horizon);

    let mut per_eps = Vec::with_capacity(branch.eps_grid.len());
    for &eps in &branch.eps_grid {
        let x_star = branch.point(eps).map(|p| p.x_star.clone());
        let equilibrium_positive = x_star.as_ref().is_some_and(|x| x.iter().all(|v| *v > 0.0));
        let results: Vec<Result<(bool, f64), IntegrateError>> = par_map(&starts, |x0| {
            let traj = integrate(sys, eps, x0, t_end, &cfg.integrator)?;
            let positive =
                traj.status == Status::ReachedTmax && traj.samples.iter().all(|s| s.x.iter().all(|v| *v > 0.0));
            if !positive {
                return Ok((false, f64::NEG_INFINITY));
            }
            let mut late = traj
                .samples
                .iter()
                .filter(|s| s.t >= fh)
                .flat_map(|s| s.x.iter().copied())
                .fold(f64::INFINITY, f64::min);
            for k in 0..=LATE_SAMPLES {
                let t = fh + (t_end - fh) * k as f64 / LATE_SAMPLES as f64;
                if let Some(x) = traj.state_at(t) {
                    late = x.iter().copied().fold(late, f64::min);
                }
            }
            Ok((true, late))
        });
        let mut trajectories_positive = true;
        let mut late_min = f64::INFINITY;
        for r in results {
            let (pos, late) = r?;
            trajectories_positive &= pos;
            late_min = late_min.min(late);
        }
        let passed = equilibrium_positive && trajectories_positive && late_min >= floor;
        per_eps.push(PositivityAtEps {
            eps,
            x_star,
            equilibrium_positive,
            trajectories_positive,
            late_min_component: late_min,
            passed,
        });
    }
    Ok(PositivityReport {
        eps_range,
        floor_horizon: fh,
        min_component_floor: floor,
        starts: starts.len(),
        passed: per_eps.iter().all(|p| p.passed),
        per_eps,
        branch: Some(branch),
    })
}
