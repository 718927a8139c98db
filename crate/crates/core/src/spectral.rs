//! Equilibria, spectra and the equilibrium branch `eps -> x*(eps)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::norm;
use crate::models::{ModelError, SystemDef};

pub const DEFAULT_HYPERBOLICITY_TOL: f64 = 1e-9;
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
/// Jacobians whose 1-norm condition estimate exceeds this are treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("singular Jacobian at {x:?} (condition estimate {condition:e})")]
    Singular { x: Vec<f64>, condition: f64 },
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Newton iterate left the domain near {x:?}")]
    LeftDomain { x: Vec<f64> },
    #[error("QR iteration did not converge within {limit} iterations")]
    QrNoConvergence { limit: usize },
    #[error("equilibrium not hyperbolic: spectral abscissa {abscissa:e}")]
    NotHyperbolic { abscissa: f64 },
    #[error("equilibrium hyperbolic but not Hurwitz: index {index} of {n}")]
    NotHurwitz { index: usize, n: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

// ---------------------------------------------------------------------------
// Newton

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton on `f(., eps) = 0` with backtracking on `|f|^2`.
pub fn newton_equilibrium(
    sys: &SystemDef,
    eps: f64,
    guess: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonResult, SpectralError> {
    if !(tol > 0.0) {
        return Err(SpectralError::InvalidInput("Newton tolerance must be positive".into()));
    }
    if !sys.domain().admits(guess) {
        return Err(SpectralError::LeftDomain { x: guess.to_vec() });
    }
    let mut x = guess.to_vec();
    let mut f = sys.eval_field(&x, eps)?;
    let mut r = norm(&f);
    for iter in 0..=max_iter {
        if r < tol || r == 0.0 {
            return Ok(NewtonResult { x, residual: r, iterations: iter });
        }
        if iter == max_iter {
            break;
        }
        let j = sys.jacobian(&x, eps)?;
        let step = solve_checked(&j, &f, &x)?;
        let phi0 = r * r;
        let mut lambda = 1.0;
        let mut accepted = None;
        let mut left_domain = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a - lambda * d).collect();
            if sys.domain().admits(&trial) {
                left_domain = false;
                if let Ok(ft) = sys.eval_field(&trial, eps) {
                    let rt = norm(&ft);
                    if rt * rt <= (1.0 - 2e-4 * lambda) * phi0 {
                        accepted = Some((trial, ft, rt));
                        break;
                    }
                }
            } else {
                left_domain = true;
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((xn, fnew, rn)) => {
                x = xn;
                f = fnew;
                r = rn;
            }
            None if left_domain => return Err(SpectralError::LeftDomain { x }),
            None => return Err(SpectralError::NoConvergence { iterations: iter + 1, residual: r }),
        }
    }
    Err(SpectralError::NoConvergence { iterations: max_iter, residual: r })
}

/// Solves `J d = f`, refusing ill-conditioned Jacobians.
fn solve_checked(j: &DMatrix<f64>, f: &[f64], x: &[f64]) -> Result<DVector<f64>, SpectralError> {
    let singular = |condition| SpectralError::Singular { x: x.to_vec(), condition };
    let lu = j.clone().lu();
    let inv = lu.try_inverse().ok_or_else(|| singular(f64::INFINITY))?;
    let condition = one_norm(j) * one_norm(&inv);
    if !condition.is_finite() || condition > SINGULAR_CONDITION {
        return Err(singular(condition));
    }
    Ok(&inv * DVector::from_column_slice(f))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Eigenvalues

/// All eigenvalues with multiplicity, sorted by (real, imaginary) part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Eigenvalue>, SpectralError> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(SpectralError::InvalidInput("eigenvalues need a non-empty square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::InvalidInput("matrix has non-finite entries".into()));
    }
    let mut ev = match n {
        1 => vec![Eigenvalue { re: m[(0, 0)], im: 0.0 }],
        2 => {
            let (a, b) = two_by_two(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            vec![a, b]
        }
        _ => {
            let mut h = Dense::from(m);
            h.balance();
            h.hessenberg();
            h.hqr()?
        }
    };
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Eigenvalues of `[[a, b], [c, d]]`.
fn two_by_two(a: f64, b: f64, c: f64, d: f64) -> (Eigenvalue, Eigenvalue) {
    let w = b * c;
    let p = 0.5 * (a - d);
    let q = p * p + w;
    let z = q.abs().sqrt();
    if q >= 0.0 {
        let z = p + z.copysign(if p >= 0.0 { 1.0 } else { -1.0 });
        let l1 = d + z;
        let l2 = if z != 0.0 { d - w / z } else { l1 };
        (Eigenvalue { re: l1, im: 0.0 }, Eigenvalue { re: l2, im: 0.0 })
    } else {
        (Eigenvalue { re: d + p, im: -z }, Eigenvalue { re: d + p, im: z })
    }
}

/// Row-major scratch matrix for the QR sweep.
struct Dense {
    n: usize,
    a: Vec<f64>,
}

impl Dense {
    fn from(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = m[(i, j)];
            }
        }
        Self { n, a }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    /// Diagonal similarity scaling by powers of two to equalize row and column norms.
    fn balance(&mut self) {
        const RADIX: f64 = 2.0;
        let sqrdx = RADIX * RADIX;
        let n = self.n;
        loop {
            let mut done = true;
            for i in 0..n {
                let (mut r, mut c) = (0.0, 0.0);
                for j in 0..n {
                    if j != i {
                        c += self.at(j, i).abs();
                        r += self.at(i, j).abs();
                    }
                }
                if c == 0.0 || r == 0.0 {
                    continue;
                }
                let s = c + r;
                let mut f = 1.0;
                let mut g = r / RADIX;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        self.a[i * n + j] *= g;
                        self.a[j * n + i] *= f;
                    }
                }
            }
            if done {
                break;
            }
        }
    }

    /// Householder reduction to upper Hessenberg form.
    fn hessenberg(&mut self) {
        let n = self.n;
        let mut v = vec![0.0; n];
        for k in 0..n.saturating_sub(2) {
            let alpha_norm = ((k + 1)..n).map(|i| self.at(i, k).powi(2)).sum::<f64>().sqrt();
            if alpha_norm == 0.0 {
                continue;
            }
            let x0 = self.at(k + 1, k);
            let alpha = if x0 >= 0.0 { -alpha_norm } else { alpha_norm };
            for i in 0..n {
                v[i] = if i > k { self.at(i, k) } else { 0.0 };
            }
            v[k + 1] -= alpha;
            let vnorm2: f64 = v[(k + 1)..].iter().map(|x| x * x).sum();
            if vnorm2 == 0.0 {
                continue;
            }
            // A <- (I - 2vv'/v'v) A
            for j in 0..n {
                let dot: f64 = ((k + 1)..n).map(|i| v[i] * self.at(i, j)).sum();
                let s = 2.0 * dot / vnorm2;
                for i in (k + 1)..n {
                    self.a[i * n + j] -= s * v[i];
                }
            }
            // A <- A (I - 2vv'/v'v)
            for i in 0..n {
                let dot: f64 = ((k + 1)..n).map(|j| self.at(i, j) * v[j]).sum();
                let s = 2.0 * dot / vnorm2;
                for j in (k + 1)..n {
                    self.a[i * n + j] -= s * v[j];
                }
            }
            for i in (k + 2)..n {
                self.set(i, k, 0.0);
            }
        }
    }

    /// Francis double-shift QR on the Hessenberg matrix, eigenvalues only.
    fn hqr(&mut self) -> Result<Vec<Eigenvalue>, SpectralError> {
        let n = self.n;
        let limit = 100 * n;
        let mut wr = vec![0.0; n];
        let mut wi = vec![0.0; n];
        let mut anorm = 0.0;
        for i in 0..n {
            for j in i.saturating_sub(1)..n {
                anorm += self.at(i, j).abs();
            }
        }
        let mut total = 0usize;
        let mut nn = n as isize - 1;
        let mut t = 0.0;
        let at = |s: &Self, i: isize, j: isize| s.at(i as usize, j as usize);
        while nn >= 0 {
            let mut its = 0;
            loop {
                // Find a negligible subdiagonal element.
                let mut l = nn;
                while l >= 1 {
                    let mut s = at(self, l - 1, l - 1).abs() + at(self, l, l).abs();
                    if s == 0.0 {
                        s = anorm;
                    }
                    if at(self, l, l - 1).abs() + s == s {
                        self.set(l as usize, (l - 1) as usize, 0.0);
                        break;
                    }
                    l -= 1;
                }
                let mut x = at(self, nn, nn);
                if l == nn {
                    wr[nn as usize] = x + t;
                    wi[nn as usize] = 0.0;
                    nn -= 1;
                    break;
                }
                let mut y = at(self, nn - 1, nn - 1);
                let mut w = at(self, nn, nn - 1) * at(self, nn - 1, nn);
                if l == nn - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    let (i1, i2) = ((nn - 1) as usize, nn as usize);
                    if q >= 0.0 {
                        z = p + if p >= 0.0 { z } else { -z };
                        wr[i1] = x + z;
                        wr[i2] = if z != 0.0 { x - w / z } else { x + z };
                        wi[i1] = 0.0;
                        wi[i2] = 0.0;
                    } else {
                        wr[i1] = x + p;
                        wr[i2] = x + p;
                        wi[i1] = -z;
                        wi[i2] = z;
                    }
                    nn -= 2;
                    break;
                }
                if total >= limit {
                    return Err(SpectralError::QrNoConvergence { limit });
                }
                if its == 10 || its == 20 {
                    // Exceptional shift.
                    t += x;
                    for i in 0..=nn {
                        let v = at(self, i, i) - x;
                        self.set(i as usize, i as usize, v);
                    }
                    let s = at(self, nn, nn - 1).abs() + at(self, nn - 1, nn - 2).abs();
                    x = 0.75 * s;
                    y = x;
                    w = -0.4375 * s * s;
                }
                its += 1;
                total += 1;

                // Look for two consecutive small subdiagonal elements.
                let mut m = nn - 2;
                let (mut p, mut q, mut r);
                loop {
                    let z = at(self, m, m);
                    let rr = x - z;
                    let ss = y - z;
                    p = (rr * ss - w) / at(self, m + 1, m) + at(self, m, m + 1);
                    q = at(self, m + 1, m + 1) - z - rr - ss;
                    r = at(self, m + 2, m + 1);
                    let s = p.abs() + q.abs() + r.abs();
                    p /= s;
                    q /= s;
                    r /= s;
                    if m == l {
                        break;
                    }
                    let u = at(self, m, m - 1).abs() * (q.abs() + r.abs());
                    let v = p.abs() * (at(self, m - 1, m - 1).abs() + z.abs() + at(self, m + 1, m + 1).abs());
                    if u + v == v {
                        break;
                    }
                    m -= 1;
                }
                for i in (m + 2)..=nn {
                    self.set(i as usize, (i - 2) as usize, 0.0);
                    if i != m + 2 {
                        self.set(i as usize, (i - 3) as usize, 0.0);
                    }
                }

                // Double QR step on rows l..=nn and columns m..=nn.
                let mut k = m;
                while k < nn {
                    let mut xk = 0.0;
                    if k != m {
                        p = at(self, k, k - 1);
                        q = at(self, k + 1, k - 1);
                        r = if k != nn - 1 { at(self, k + 2, k - 1) } else { 0.0 };
                        xk = p.abs() + q.abs() + r.abs();
                        if xk != 0.0 {
                            p /= xk;
                            q /= xk;
                            r /= xk;
                        }
                    }
                    let s0 = (p * p + q * q + r * r).sqrt();
                    let s = if p >= 0.0 { s0 } else { -s0 };
                    if s != 0.0 {
                        if k == m {
                            if l != m {
                                let v = -at(self, k, k - 1);
                                self.set(k as usize, (k - 1) as usize, v);
                            }
                        } else {
                            self.set(k as usize, (k - 1) as usize, -s * xk);
                        }
                        p += s;
                        let xx = p / s;
                        let yy = q / s;
                        let zz = r / s;
                        q /= p;
                        r /= p;
                        for j in k..=nn {
                            let mut pp = at(self, k, j) + q * at(self, k + 1, j);
                            if k != nn - 1 {
                                pp += r * at(self, k + 2, j);
                                let v = at(self, k + 2, j) - pp * zz;
                                self.set((k + 2) as usize, j as usize, v);
                            }
                            let v = at(self, k + 1, j) - pp * yy;
                            self.set((k + 1) as usize, j as usize, v);
                            let v = at(self, k, j) - pp * xx;
                            self.set(k as usize, j as usize, v);
                        }
                        let mmin = if nn < k + 3 { nn } else { k + 3 };
                        for i in l..=mmin {
                            let mut pp = xx * at(self, i, k) + yy * at(self, i, k + 1);
                            if k != nn - 1 {
                                pp += zz * at(self, i, k + 2);
                                let v = at(self, i, k + 2) - pp * r;
                                self.set(i as usize, (k + 2) as usize, v);
                            }
                            let v = at(self, i, k + 1) - pp * q;
                            self.set(i as usize, (k + 1) as usize, v);
                            let v = at(self, i, k) - pp;
                            self.set(i as usize, k as usize, v);
                        }
                    }
                    k += 1;
                }
            }
        }
        Ok(wr.into_iter().zip(wi).map(|(re, im)| Eigenvalue { re, im }).collect())
    }
}

// ---------------------------------------------------------------------------
// Classification

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<Eigenvalue>,
    pub spectral_abscissa: f64,
    /// Number of eigenvalues with real part below `-hyperbolicity_tol`.
    pub index: usize,
    pub hyperbolic: bool,
    pub hurwitz: bool,
}

pub fn classify(m: &DMatrix<f64>, hyperbolicity_tol: f64) -> Result<SpectralSummary, SpectralError> {
    if !(hyperbolicity_tol > 0.0) {
        return Err(SpectralError::InvalidInput("hyperbolicity tolerance must be positive".into()));
    }
    let eigenvalues = eigenvalues(m)?;
    let spectral_abscissa = eigenvalues.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    let index = eigenvalues.iter().filter(|e| e.re < -hyperbolicity_tol).count();
    let hyperbolic = eigenvalues.iter().all(|e| e.re.abs() > hyperbolicity_tol);
    let hurwitz = hyperbolic && index == m.nrows();
    Ok(SpectralSummary { eigenvalues, spectral_abscissa, index, hyperbolic, hurwitz })
}

// ---------------------------------------------------------------------------
// Continuation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub hyperbolicity_tol: f64,
    /// Starting guess for `x*(0)`; the model's guess when absent.
    pub guess: Option<Vec<f64>>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            hyperbolicity_tol: DEFAULT_HYPERBOLICITY_TOL,
            guess: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub eps: f64,
    pub x_star: Vec<f64>,
    /// Row-major `J_eps`.
    pub jacobian: Vec<Vec<f64>>,
    pub spectral: SpectralSummary,
    pub newton_residual: f64,
}

impl BranchPoint {
    pub fn jacobian_matrix(&self) -> DMatrix<f64> {
        let n = self.jacobian.len();
        DMatrix::from_fn(n, n, |i, j| self.jacobian[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum BranchStop {
    NewtonFailed { eps: f64, message: String },
    HyperbolicityLost { eps: f64 },
}

/// How far continuation got in one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionLimit {
    /// Largest `|eps|` reached with a converged corrector.
    pub reached: f64,
    pub stop: Option<BranchStop>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumBranch {
    pub eps_grid: Vec<f64>,
    pub spacing: f64,
    /// Converged nodes in increasing `eps`; contains `eps = 0`.
    pub points: Vec<BranchPoint>,
    pub index0: usize,
    pub negative: DirectionLimit,
    pub positive: DirectionLimit,
}

impl EquilibriumBranch {
    pub fn at_zero(&self) -> &BranchPoint {
        self.points.iter().find(|p| p.eps == 0.0).expect("branch contains eps = 0")
    }

    pub fn point(&self, eps: f64) -> Option<&BranchPoint> {
        self.points.iter().find(|p| p.eps == eps)
    }

    /// Grid-certified lower bound on the branch-existence radius.
    pub fn eps1(&self) -> f64 {
        self.negative.reached.min(self.positive.reached)
    }

    /// Largest grid `|eps|` before the first node (either direction) where
    /// hyperbolicity or the index fails.
    pub fn eps2(&self) -> f64 {
        let good = |p: &BranchPoint| p.spectral.hyperbolic && p.spectral.index == self.index0;
        let run = |pts: &mut dyn Iterator<Item = &BranchPoint>| {
            let mut last = 0.0f64;
            for p in pts {
                if !good(p) {
                    break;
                }
                last = p.eps.abs();
            }
            last
        };
        let pos = run(&mut self.points.iter().filter(|p| p.eps >= 0.0));
        let neg = run(&mut self.points.iter().rev().filter(|p| p.eps <= 0.0));
        pos.min(neg)
    }

    /// CSV `eps,x1*,...,xn*,spectral_abscissa,index,residual`.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |p| p.x_star.len());
        let mut s = String::from("eps");
        for i in 0..n {
            let _ = write!(s, ",x{}*", i + 1);
        }
        s.push_str(",spectral_abscissa,index,residual\n");
        for p in &self.points {
            let _ = write!(s, "{:.16e}", p.eps);
            for v in &p.x_star {
                let _ = write!(s, ",{v:.16e}");
            }
            let _ =
                writeln!(s, ",{:.16e},{},{:.16e}", p.spectral.spectral_abscissa, p.spectral.index, p.newton_residual);
        }
        s
    }
}

/// Symmetric uniform grid `range * k / m`, `k = -m..=m`, with `n_nodes = 2m + 1`.
pub fn symmetric_grid(range: f64, n_nodes: usize) -> Vec<f64> {
    let m = (n_nodes / 2) as i64;
    (-m..=m).map(|k| if k == 0 { 0.0 } else { range * (k as f64 / m as f64) }).collect()
}

fn node(sys: &SystemDef, eps: f64, guess: &[f64], cfg: &ContinuationConfig) -> Result<BranchPoint, SpectralError> {
    let sol = newton_equilibrium(sys, eps, guess, cfg.newton_tol, cfg.newton_max_iter)?;
    let j = sys.jacobian(&sol.x, eps)?;
    let spectral = classify(&j, cfg.hyperbolicity_tol)?;
    let jacobian = (0..j.nrows()).map(|i| j.row(i).iter().copied().collect()).collect();
    Ok(BranchPoint { eps, x_star: sol.x, jacobian, spectral, newton_residual: sol.residual })
}

/// Locates the Hurwitz equilibrium at `eps = 0` and marches outward in both directions.
pub fn continue_equilibrium(
    sys: &SystemDef,
    eps_range: f64,
    n_nodes: usize,
    cfg: &ContinuationConfig,
) -> Result<EquilibriumBranch, SpectralError> {
    if !(eps_range > 0.0 && eps_range <= sys.eps0()) {
        return Err(SpectralError::InvalidInput(format!("eps range {eps_range} must lie in (0, {}]", sys.eps0())));
    }
    if n_nodes < 3 || n_nodes % 2 == 0 {
        return Err(SpectralError::InvalidInput(format!("node count must be odd and >= 3, got {n_nodes}")));
    }
    let guess = cfg.guess.clone().unwrap_or_else(|| sys.equilibrium_guess());
    let origin = node(sys, 0.0, &guess, cfg)?;
    if !origin.spectral.hyperbolic {
        return Err(SpectralError::NotHyperbolic { abscissa: origin.spectral.spectral_abscissa });
    }
    if !origin.spectral.hurwitz {
        return Err(SpectralError::NotHurwitz { index: origin.spectral.index, n: sys.n() });
    }
    let index0 = origin.spectral.index;
    let eps_grid = symmetric_grid(eps_range, n_nodes);
    let m = n_nodes / 2;

    let march = |targets: Vec<f64>| -> (Vec<BranchPoint>, DirectionLimit) {
        let mut pts = Vec::new();
        let mut prev2: Option<Vec<f64>> = None;
        let mut prev = origin.x_star.clone();
        let mut reached = 0.0;
        for eps in targets {
            let predictor = match &prev2 {
                Some(p2) => {
                    let secant: Vec<f64> = prev.iter().zip(p2).map(|(a, b)| 2.0 * a - b).collect();
                    if sys.domain().admits(&secant) {
                        secant
                    } else {
                        prev.clone()
                    }
                }
                None => prev.clone(),
            };
            match node(sys, eps, &predictor, cfg) {
                Ok(p) => {
                    reached = eps.abs();
                    let hyperbolic = p.spectral.hyperbolic;
                    prev2 = Some(std::mem::replace(&mut prev, p.x_star.clone()));
                    pts.push(p);
                    if !hyperbolic {
                        return (pts, DirectionLimit { reached, stop: Some(BranchStop::HyperbolicityLost { eps }) });
                    }
                }
                Err(e) => {
                    let stop = BranchStop::NewtonFailed { eps, message: e.to_string() };
                    return (pts, DirectionLimit { reached, stop: Some(stop) });
                }
            }
        }
        (pts, DirectionLimit { reached, stop: None })
    };

    // The two directions are independent.
    let (pos_targets, neg_targets): (Vec<f64>, Vec<f64>) =
        (eps_grid[m + 1..].to_vec(), eps_grid[..m].iter().rev().copied().collect());
    let ((pos_pts, positive), (neg_pts, negative)) = rayon::join(|| march(pos_targets), || march(neg_targets));

    let mut points: Vec<BranchPoint> = neg_pts.into_iter().rev().collect();
    points.push(origin);
    points.extend(pos_pts);
    Ok(EquilibriumBranch { spacing: eps_range / m as f64, eps_grid, points, index0, negative, positive })
}

/// Empirical constant `C` in `|J_eps - J_0|_F <= C |eps|` over the branch nodes.
pub fn jacobian_growth_bound(branch: &EquilibriumBranch) -> f64 {
    let j0 = branch.at_zero().jacobian_matrix();
    branch
        .points
        .iter()
        .filter(|p| p.eps != 0.0)
        .map(|p| (p.jacobian_matrix() - &j0).norm() / p.eps.abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::builtin;

    fn m(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows.len(), |i, j| rows[i][j])
    }

    #[test]
    fn newton_linear_and_logistic() {
        let lin = builtin("linear1d").unwrap();
        let r = newton_equilibrium(&lin, 0.25, &[0.0], 1e-10, 50).unwrap();
        assert!((r.x[0] - 0.25).abs() < 1e-14 && r.residual < 1e-12);
        let log = builtin("logistic").unwrap();
        let r = newton_equilibrium(&log, 0.1, &[0.5], 1e-10, 50).unwrap();
        assert!((r.x[0] - 0.9).abs() < 1e-10);
    }

    fn bisect_cubic(target: f64) -> f64 {
        // Root of x + x^3 = target on [0, 1]; the left side is increasing.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if mid + mid.powi(3) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn newton_gradient2d_against_bisection() {
        let x1 = bisect_cubic(0.1);
        // The quoted example value is only good to about 1e-5.
        assert!((x1 - 0.0990163).abs() < 5e-5);
        let sys = builtin("gradient2d").unwrap();
        let r = newton_equilibrium(&sys, 0.1, &[0.0, 0.0], 1e-10, 50).unwrap();
        assert!((r.x[0] - x1).abs() < 1e-10);
        assert!((r.x[1] - 0.05 * x1).abs() < 1e-10);
        assert!((r.x[1] - 0.0049508).abs() < 5e-6);
    }

    #[test]
    fn newton_errors() {
        let center = builtin("center").unwrap();
        // Linear and nonsingular: one step.
        assert!(newton_equilibrium(&center, 0.0, &[1.0, 2.0], 1e-10, 50).is_ok());
        let b = crate::models::BoxRegion::cube(1, -2.0, 2.0);
        let flat = SystemDef::from_sources(
            "flat",
            &["x1^2 + 1"],
            0.5,
            crate::models::DomainSpec::boxed(b.clone(), b),
            Default::default(),
            None,
        )
        .unwrap();
        assert!(matches!(newton_equilibrium(&flat, 0.0, &[0.0], 1e-10, 50), Err(SpectralError::Singular { .. })));
        assert!(newton_equilibrium(&flat, 0.0, &[0.5], 1e-10, 50).is_err());
        let lin = builtin("linear1d").unwrap();
        assert!(matches!(newton_equilibrium(&lin, 0.0, &[11.0], 1e-10, 50), Err(SpectralError::LeftDomain { .. })));
        let log = builtin("logistic").unwrap();
        assert!(matches!(newton_equilibrium(&log, 0.0, &[0.5], 1e-10, 0), Err(SpectralError::NoConvergence { .. })));
    }

    #[test]
    fn eigenvalue_examples() {
        let ev = eigenvalues(&m(&[&[-1.0, 0.0], &[0.0, -2.0]])).unwrap();
        assert_eq!(ev, vec![Eigenvalue { re: -2.0, im: 0.0 }, Eigenvalue { re: -1.0, im: 0.0 }]);
        let ev = eigenvalues(&m(&[&[0.0, 1.0], &[-1.0, 0.0]])).unwrap();
        assert_eq!(ev, vec![Eigenvalue { re: 0.0, im: -1.0 }, Eigenvalue { re: 0.0, im: 1.0 }]);
    }

    #[test]
    fn eigenvalues_of_companion_matrices() {
        // Roots of (x-1)(x-2)(x-3)(x+1)(x+4) and of (x^2+1)(x^2+2x+5)(x-0.5).
        let cases: [(&[f64], Vec<(f64, f64)>); 2] = [
            (
                &[1.0, -1.0, -15.0, 25.0, 14.0, -24.0],
                vec![(-4.0, 0.0), (-1.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)],
            ),
            (&[1.0, 1.5, 5.0, -1.0, 4.0, -2.5], vec![(-1.0, -2.0), (-1.0, 2.0), (0.0, -1.0), (0.0, 1.0), (0.5, 0.0)]),
        ];
        for (coeffs, expected) in cases {
            let n = coeffs.len() - 1;
            let c = DMatrix::from_fn(n, n, |i, j| {
                if i == 0 {
                    -coeffs[j + 1] / coeffs[0]
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            let ev = eigenvalues(&c).unwrap();
            for (got, (re, im)) in ev.iter().zip(&expected) {
                assert!((got.re - re).abs() < 1e-8 && (got.im - im).abs() < 1e-8, "{ev:?}");
            }
        }
    }

    #[test]
    fn eigenvalues_of_triangular_and_defective() {
        let t = m(&[&[3.0, 1.0, 4.0], &[0.0, -2.0, 5.0], &[0.0, 0.0, 0.5]]);
        let ev = eigenvalues(&t).unwrap();
        let re: Vec<f64> = ev.iter().map(|e| e.re).collect();
        for (a, b) in re.iter().zip([-2.0, 0.5, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let j = m(&[&[-1.0, 1.0, 0.0], &[0.0, -1.0, 1.0], &[0.0, 0.0, -1.0]]);
        let ev = eigenvalues(&j).unwrap();
        assert!(ev.iter().all(|e| (e.re + 1.0).abs() < 1e-4));
    }

    #[test]
    fn classify_examples() {
        let s = classify(&m(&[&[-1.0, 0.0], &[0.0, -2.0]]), 1e-9).unwrap();
        assert_eq!((s.index, s.hyperbolic, s.hurwitz), (2, true, true));
        let s = classify(&m(&[&[1.0, 0.0], &[0.0, -1.0]]), 1e-9).unwrap();
        assert_eq!((s.index, s.hyperbolic, s.hurwitz), (1, true, false));
        let s = classify(&m(&[&[0.0, 1.0], &[-1.0, 0.0]]), 1e-9).unwrap();
        assert!(!s.hyperbolic && !s.hurwitz);
        assert_eq!(s.spectral_abscissa, 0.0);
    }

    #[test]
    fn continuation_linear1d() {
        let sys = builtin("linear1d").unwrap();
        let b = continue_equilibrium(&sys, 0.2, 5, &ContinuationConfig::default()).unwrap();
        assert_eq!(b.eps_grid, vec![-0.2, -0.1, 0.0, 0.1, 0.2]);
        for p in &b.points {
            assert!((p.x_star[0] - p.eps).abs() < 1e-15);
            assert_eq!(p.spectral.index, 1);
        }
        assert_eq!((b.eps1(), b.eps2()), (0.2, 0.2));
        assert_eq!(jacobian_growth_bound(&b), 0.0);
    }

    #[test]
    fn continuation_logistic() {
        let sys = builtin("logistic").unwrap();
        let b = continue_equilibrium(&sys, 0.2, 5, &ContinuationConfig::default()).unwrap();
        assert_eq!(b.points.len(), 5);
        for p in &b.points {
            assert!((p.x_star[0] - (1.0 - p.eps)).abs() < 1e-10);
            assert!((p.jacobian[0][0] + (1.0 - p.eps)).abs() < 1e-10);
            assert_eq!(p.spectral.index, 1);
        }
        assert!((jacobian_growth_bound(&b) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn continuation_linear_nd_closed_form() {
        let sys = builtin("linear_nd").unwrap();
        let b = continue_equilibrium(&sys, 0.2, 5, &ContinuationConfig::default()).unwrap();
        for p in &b.points {
            assert!((p.x_star[0] - p.eps).abs() < 1e-10 && (p.x_star[1] - 0.5 * p.eps).abs() < 1e-10);
            let ev: Vec<f64> = p.spectral.eigenvalues.iter().map(|e| e.re).collect();
            assert_eq!(ev, vec![-2.0, -1.0]);
        }
    }

    #[test]
    fn continuation_refuses_center() {
        let sys = builtin("center").unwrap();
        let err = continue_equilibrium(&sys, 0.2, 5, &ContinuationConfig::default()).unwrap_err();
        assert!(matches!(err, SpectralError::NotHyperbolic { .. }));
        assert!(err.to_string().contains("not hyperbolic"));
    }

    #[test]
    fn continuation_input_checks() {
        let sys = builtin("linear1d").unwrap();
        let cfg = ContinuationConfig::default();
        assert!(continue_equilibrium(&sys, 0.2, 4, &cfg).is_err());
        assert!(continue_equilibrium(&sys, 0.2, 1, &cfg).is_err());
        assert!(continue_equilibrium(&sys, 0.6, 5, &cfg).is_err());
    }

    #[test]
    fn continuation_stops_when_hyperbolicity_is_lost() {
        // x' = -(1 - 4 eps) x + eps: the Jacobian crosses zero at eps = 0.25.
        let b = crate::models::BoxRegion::cube(1, -10.0, 10.0);
        let sys = SystemDef::from_sources(
            "fold",
            &["-(1 - 4*eps)*x1 + eps^2"],
            0.5,
            crate::models::DomainSpec::boxed(b.clone(), b),
            Default::default(),
            None,
        )
        .unwrap();
        let br = continue_equilibrium(&sys, 0.5, 21, &ContinuationConfig::default()).unwrap();
        // Grid spacing 0.05: node 0.25 is singular, so the corrector fails there.
        assert!(br.positive.stop.is_some());
        assert_eq!(br.positive.reached, 0.2);
        assert_eq!(br.negative.reached, 0.5);
        assert_eq!(br.eps1(), 0.2);
        assert!(br.eps2() <= br.eps1());
    }

    #[test]
    fn branch_csv_header() {
        let sys = builtin("linear_nd").unwrap();
        let b = continue_equilibrium(&sys, 0.2, 3, &ContinuationConfig::default()).unwrap();
        let csv = b.to_csv();
        assert!(csv.starts_with("eps,x1*,x2*,spectral_abscissa,index,residual\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
