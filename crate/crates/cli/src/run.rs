//! Command execution and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use persist_core::certify::{
    certify_persistence, check_positive_persistence, check_uniform_closeness, estimate_absorbing, estimate_attractor,
    CertifyError, PersistenceCertificate,
};
use persist_core::geom::Ball;
use persist_core::models::{builtin, ModelError, SystemDef};
use persist_core::report::to_json;
use persist_core::spectral::{
    classify, continue_equilibrium, jacobian_growth_bound, newton_equilibrium, symmetric_grid, EquilibriumBranch,
    SpectralError,
};
use persist_core::{integrate, Status, TOOL_VERSION};
use serde::Serialize;
use thiserror::Error;

use crate::config::{Command, EpsSpec, ModelSource, RunConfig};

pub const REPORT_VERSION: u32 = 1;

/// Operational failure; maps to exit code 1.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct RunError(pub String);

impl From<ModelError> for RunError {
    fn from(e: ModelError) -> Self {
        RunError(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Passed => 0,
            Outcome::Failed => 2,
        }
    }

    fn from_flag(passed: bool) -> Self {
        if passed {
            Outcome::Passed
        } else {
            Outcome::Failed
        }
    }

    fn label(self) -> &'static str {
        match self {
            Outcome::Passed => "passed",
            Outcome::Failed => "failed",
        }
    }
}

pub fn load_model(src: &ModelSource) -> Result<SystemDef, RunError> {
    Ok(match src {
        ModelSource::Builtin(name) => builtin(name)?,
        ModelSource::Path(p) => SystemDef::load(p)?,
    })
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    report_version: u32,
    tool_version: &'a str,
    command: &'a str,
    system: &'a str,
    status: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

#[derive(Serialize)]
struct Failure<'a> {
    reason: &'a str,
}

struct Output<'a> {
    cfg: &'a RunConfig,
    system: String,
}

impl Output<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), RunError> {
        write_file(&self.path(name), text)
    }

    fn report<T: Serialize>(&self, outcome: Outcome, body: &T) -> Result<Outcome, RunError> {
        let env = Envelope {
            report_version: REPORT_VERSION,
            tool_version: TOOL_VERSION,
            command: self.cfg.command.name(),
            system: &self.system,
            status: outcome.label(),
            body,
        };
        let text = to_json(&env).map_err(|e| RunError(format!("cannot serialize report: {e}")))?;
        self.write("report.json", &text)?;
        Ok(outcome)
    }

    fn failure(&self, reason: &str) -> Result<Outcome, RunError> {
        self.report(Outcome::Failed, &Failure { reason })
    }

    /// Whitespace-separated plot data under `plots/`, when requested.
    fn plot(&self, name: &str, comments: &[String], columns: &[&str], rows: &[Vec<f64>]) -> Result<(), RunError> {
        if !self.cfg.emit_plot_data {
            return Ok(());
        }
        let mut s = String::new();
        for c in comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(s, "# {}", columns.join(" "));
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(s, "{}", cells.join(" "));
        }
        write_file(&self.path("plots").join(name), &s)
    }

    fn branch_files(&self, branch: &EquilibriumBranch) -> Result<(), RunError> {
        self.write("branch.csv", &branch.to_csv())?;
        let n = branch.points.first().map_or(0, |p| p.x_star.len());
        let mut cols = vec!["eps".to_string()];
        cols.extend((1..=n).map(|i| format!("x{i}*")));
        cols.push("spectral_abscissa".into());
        let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
        let rows: Vec<Vec<f64>> = branch
            .points
            .iter()
            .map(|p| {
                let mut r = vec![p.eps];
                r.extend(&p.x_star);
                r.push(p.spectral.spectral_abscissa);
                r
            })
            .collect();
        self.plot("branch.dat", &["equilibrium branch x*(eps)".into()], &cols, &rows)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| RunError(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| RunError(format!("cannot write {}: {e}", path.display())))
}

fn state_columns(prefix: &str, n: usize) -> Vec<String> {
    let mut cols = vec![prefix.to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols
}

fn refs(cols: &[String]) -> Vec<&str> {
    cols.iter().map(String::as_str).collect()
}

/// Refusals become a failed report; anything else is operational.
fn certify_failure(out: &Output<'_>, e: CertifyError) -> Result<Outcome, RunError> {
    if e.is_refusal() {
        out.failure(&e.to_string())
    } else {
        Err(RunError(e.to_string()))
    }
}

fn spectral_failure(out: &Output<'_>, e: SpectralError) -> Result<Outcome, RunError> {
    certify_failure(out, CertifyError::Spectral(e))
}

fn eps_value(cfg: &RunConfig) -> f64 {
    match cfg.eps {
        Some(EpsSpec::Value(v)) => v,
        _ => 0.0,
    }
}

fn eps_range(cfg: &RunConfig, sys: &SystemDef) -> f64 {
    match cfg.eps {
        Some(EpsSpec::Range(r)) => r,
        _ => sys.eps0(),
    }
}

fn check_eps(sys: &SystemDef, cfg: &RunConfig) -> Result<(), RunError> {
    let eps0 = sys.eps0();
    match cfg.eps {
        Some(EpsSpec::Value(v)) if v.abs() > eps0 => Err(RunError(format!("eps = {v} outside [-{eps0}, {eps0}]"))),
        Some(EpsSpec::Range(r)) if r > eps0 => Err(RunError(format!("eps range {r} exceeds eps0 = {eps0}"))),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct EquilibriumReport {
    eps: f64,
    x_star: Vec<f64>,
    residual: f64,
    iterations: usize,
    jacobian: Vec<Vec<f64>>,
    spectral: persist_core::spectral::SpectralSummary,
}

#[derive(Serialize)]
struct ContinueReport<'a> {
    eps1: f64,
    eps2: f64,
    jacobian_growth_bound: f64,
    branch: &'a EquilibriumBranch,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    eps: f64,
    x0: &'a [f64],
    t_end: f64,
    outcome: Status,
    final_state: &'a [f64],
    accepted_steps: usize,
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let sys = load_model(&cfg.model)?;
    check_eps(&sys, cfg)?;
    let out = Output { cfg, system: sys.name().to_string() };
    let s = &cfg.settings;
    let eta = cfg.eta.unwrap_or(f64::NAN);
    match cfg.command {
        Command::Equilibrium => {
            let eps = eps_value(cfg);
            let guess = s.continuation.guess.clone().unwrap_or_else(|| sys.equilibrium_guess());
            let sol = match newton_equilibrium(
                &sys,
                eps,
                &guess,
                s.continuation.newton_tol,
                s.continuation.newton_max_iter,
            ) {
                Ok(sol) => sol,
                Err(e) => return spectral_failure(&out, e),
            };
            let j = sys.jacobian(&sol.x, eps)?;
            let spectral = match classify(&j, s.continuation.hyperbolicity_tol) {
                Ok(sp) => sp,
                Err(e) => return spectral_failure(&out, e),
            };
            let jacobian = (0..j.nrows()).map(|i| j.row(i).iter().copied().collect()).collect();
            let rep = EquilibriumReport {
                eps,
                x_star: sol.x,
                residual: sol.residual,
                iterations: sol.iterations,
                jacobian,
                spectral,
            };
            out.report(Outcome::Passed, &rep)
        }
        Command::Continue => {
            let range = eps_range(cfg, &sys);
            let branch = match continue_equilibrium(&sys, range, s.grid_nodes, &s.continuation) {
                Ok(b) => b,
                Err(e) => return spectral_failure(&out, e),
            };
            out.branch_files(&branch)?;
            let rep = ContinueReport {
                eps1: branch.eps1(),
                eps2: branch.eps2(),
                jacobian_growth_bound: jacobian_growth_bound(&branch),
                branch: &branch,
            };
            out.report(Outcome::Passed, &rep)
        }
        Command::Simulate => {
            let eps = eps_value(cfg);
            let x0 = cfg.x0.clone().unwrap_or_else(|| sys.working().center());
            let traj = integrate(&sys, eps, &x0, cfg.t_end, &s.integrator).map_err(|e| RunError(e.to_string()))?;
            out.write("trajectory.csv", &traj.to_csv())?;
            let cols = state_columns("t", sys.n());
            let rows: Vec<Vec<f64>> =
                traj.samples.iter().map(|p| std::iter::once(p.t).chain(p.x.iter().copied()).collect()).collect();
            out.plot("trajectory.dat", &[format!("trajectory at eps = {eps:e}")], &refs(&cols), &rows)?;
            let rep = SimulateReport {
                eps,
                x0: &x0,
                t_end: traj.t_end(),
                outcome: traj.status,
                final_state: traj.final_state(),
                accepted_steps: traj.samples.len() - 1,
            };
            out.report(Outcome::from_flag(traj.status == Status::ReachedTmax), &rep)
        }
        Command::Absorbing => {
            let eps = eps_value(cfg);
            let guess = s.continuation.guess.clone().unwrap_or_else(|| sys.equilibrium_guess());
            let x_star = match newton_equilibrium(
                &sys,
                eps,
                &guess,
                s.continuation.newton_tol,
                s.continuation.newton_max_iter,
            ) {
                Ok(sol) => sol.x,
                Err(e) => return spectral_failure(&out, e),
            };
            let est =
                match estimate_absorbing(&sys, eps, &Ball::new(x_star, eta), s.horizon, &s.sampling, &s.integrator) {
                    Ok(est) => est,
                    Err(e) => return certify_failure(&out, e),
                };
            let cols = state_columns("entry_time", sys.n());
            let rows: Vec<Vec<f64>> = est
                .starts
                .iter()
                .zip(&est.entry_times)
                .map(|(x0, t)| std::iter::once(t.unwrap_or(f64::NAN)).chain(x0.iter().copied()).collect())
                .collect();
            out.plot("entry_times.dat", &["entry-and-remain time per start (nan: never)".into()], &refs(&cols), &rows)?;
            out.report(Outcome::from_flag(est.all_absorbed), &est)
        }
        Command::Attractor => {
            let eps = eps_value(cfg);
            let est = match estimate_attractor(&sys, eps, s.t_burn, &s.sampling, &s.integrator) {
                Ok(est) => est,
                Err(e) => return certify_failure(&out, e),
            };
            let cols = state_columns("eps", sys.n());
            let rows: Vec<Vec<f64>> =
                est.endpoint_cloud.iter().map(|p| std::iter::once(eps).chain(p.iter().copied()).collect()).collect();
            out.plot("attractor_cloud.dat", &[format!("endpoints after burn-in {}", s.t_burn)], &refs(&cols), &rows)?;
            out.report(Outcome::Passed, &est)
        }
        Command::Certify => {
            let cert = certify_persistence(&sys, eta, &s.certify_config()).map_err(|e| RunError(e.to_string()))?;
            write_certificate(&out, &cert)?;
            Ok(Outcome::from_flag(cert.is_certified()))
        }
        Command::Closeness => {
            let eps_values = match cfg.eps {
                Some(EpsSpec::Range(r)) => symmetric_grid(r, s.grid_nodes),
                Some(EpsSpec::Value(v)) => vec![v],
                None => unreachable!("validated: closeness requires eps"),
            };
            let rep = match check_uniform_closeness(&sys, eta, &eps_values, &s.closeness_config()) {
                Ok(rep) => rep,
                Err(e) => return certify_failure(&out, e),
            };
            let rows: Vec<Vec<f64>> = rep.worst_series.iter().map(|p| p.to_vec()).collect();
            out.plot(
                "deviation.dat",
                &[format!("d(x_eps(t), x(t)) for the worst pair; T = {:e}", rep.t)],
                &["t", "distance"],
                &rows,
            )?;
            out.report(Outcome::from_flag(rep.passed), &rep)
        }
        Command::Persistence => {
            let range = eps_range(cfg, &sys);
            let rep = match check_positive_persistence(&sys, range, &s.positivity_config()) {
                Ok(rep) => rep,
                Err(e) => return certify_failure(&out, e),
            };
            if let Some(b) = &rep.branch {
                out.branch_files(b)?;
            }
            let rows: Vec<Vec<f64>> = rep.per_eps.iter().map(|p| vec![p.eps, p.late_min_component]).collect();
            out.plot(
                "late_min.dat",
                &[format!("late-time minimum component; floor {:e}", rep.min_component_floor)],
                &["eps", "late_min_component"],
                &rows,
            )?;
            out.report(Outcome::from_flag(rep.passed), &rep)
        }
    }
}

fn write_certificate(out: &Output<'_>, cert: &PersistenceCertificate) -> Result<(), RunError> {
    let text = to_json(cert).map_err(|e| RunError(format!("cannot serialize certificate: {e}")))?;
    out.write("report.json", &text)?;
    if let Some(b) = &cert.branch {
        out.branch_files(b)?;
    }
    let rows: Vec<Vec<f64>> = cert.r_eps_table.iter().map(|r| vec![r.eps, r.r_eps]).collect();
    out.plot("r_eps.dat", &["sampled basin radius per grid eps".into()], &["eps", "r_eps"], &rows)?;
    if let Some(search) = &cert.evidence.eps_hat_search {
        let rows: Vec<Vec<f64>> =
            search.scan.iter().chain(&search.bisection).map(|p| vec![p.eps, p.deviation]).collect();
        out.plot(
            "eps_hat_scan.dat",
            &[format!("max deviation at T_eta = {:e}; threshold eta/2 = {:e}", search.t_eta, 0.5 * cert.eta)],
            &["eps", "deviation"],
            &rows,
        )?;
    }
    if !cert.attractors.is_empty() {
        let n = cert.attractors[0].centroid.len();
        let cols = state_columns("eps", n);
        let rows: Vec<Vec<f64>> = cert
            .attractors
            .iter()
            .flat_map(|a| {
                a.endpoint_cloud.iter().map(move |p| std::iter::once(a.eps).chain(p.iter().copied()).collect())
            })
            .collect();
        out.plot("attractor_cloud.dat", &["attractor endpoint clouds per grid eps".into()], &refs(&cols), &rows)?;
    }
    Ok(())
}
