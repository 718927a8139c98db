//! Parameterized systems `x' = f(x, eps)` with their domains and the builtin registry.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{self, differentiate, state_index, state_name, Ast, CompiledExpr, Func, ParseError, VarScope};

/// Default distance kept between positive-cone sampling boxes and the orthant boundary.
pub const POSITIVE_CAP: f64 = 1e-3;

pub const MODEL_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown builtin model `{0}`")]
    UnknownBuiltin(String),
    #[error("component {index}: {source}")]
    Parse { index: usize, source: ParseError },
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("eps = {eps} outside [-{eps0}, {eps0}]")]
    EpsOutOfRange { eps: f64, eps0: f64 },
    #[error("state has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite state component")]
    NonFiniteState,
    #[error("component {index} at x = {x:?}, eps = {eps}: {source}")]
    Eval { index: usize, x: Vec<f64>, eps: f64, source: expr::EvalError },
    #[error("model file {}: {source}", path.display())]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model format {0}, expected {MODEL_FORMAT}")]
    Format(u32),
}

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        Self { lo, hi }
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; n], hi: vec![hi; n] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn contains_box(&self, other: &BoxRegion) -> bool {
        self.contains(&other.lo) && self.contains(&other.hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Distance from an interior point to the nearest face; negative outside.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x.iter().zip(self.lo.iter().zip(&self.hi)).map(|(v, (l, h))| (v - l).min(h - v)).fold(f64::INFINITY, f64::min)
    }

    fn validate(&self, what: &str) -> Result<(), ModelError> {
        if self.lo.len() != self.hi.len() {
            return Err(ModelError::Invalid(format!("{what}: lo/hi length mismatch")));
        }
        for (i, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(ModelError::Invalid(format!("{what}: need lo < hi in coordinate {}", i + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// Ω is the box itself.
    Box,
    /// Ω is the open positive orthant capped above by `hi`; `lo` is the sampling floor.
    PositiveOrthant,
}

/// Ω together with the working compact K over which Ω-quantified checks run.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub bounds: BoxRegion,
    pub working: BoxRegion,
}

impl DomainSpec {
    pub fn boxed(bounds: BoxRegion, working: BoxRegion) -> Self {
        Self { kind: DomainKind::Box, bounds, working }
    }

    pub fn positive(bounds: BoxRegion, working: BoxRegion) -> Self {
        Self { kind: DomainKind::PositiveOrthant, bounds, working }
    }

    /// Whether a state lies in Ω, i.e. trajectories may continue through it.
    pub fn admits(&self, x: &[f64]) -> bool {
        match self.kind {
            DomainKind::Box => self.bounds.contains(x),
            DomainKind::PositiveOrthant => {
                x.len() == self.bounds.dim() && x.iter().zip(&self.bounds.hi).all(|(v, h)| *v > 0.0 && v <= h)
            }
        }
    }

    /// Whether a state is an admissible initial condition (inside the sampling caps).
    pub fn admits_start(&self, x: &[f64]) -> bool {
        self.bounds.contains(x)
    }
}

/// A parameterized vector field together with its domain and parameter bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemDef {
    name: String,
    components: Vec<Ast>,
    eps0: f64,
    domain: DomainSpec,
    params: BTreeMap<String, f64>,
    guess: Option<Vec<f64>>,
    field: Vec<CompiledExpr>,
    jac: Vec<CompiledExpr>,
}

impl SystemDef {
    /// Builds a system from expression sources over `x1 ... xn`, `eps` and `params`.
    pub fn from_sources(
        name: impl Into<String>,
        sources: &[&str],
        eps0: f64,
        domain: DomainSpec,
        params: BTreeMap<String, f64>,
        guess: Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let scope = VarScope { n: sources.len(), params: Some(&params) };
        let components = sources
            .iter()
            .enumerate()
            .map(|(index, s)| expr::parse_scoped(s, &scope).map_err(|source| ModelError::Parse { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(name, components, eps0, domain, params, guess)
    }

    pub fn new(
        name: impl Into<String>,
        components: Vec<Ast>,
        eps0: f64,
        domain: DomainSpec,
        params: BTreeMap<String, f64>,
        guess: Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let name = name.into();
        let n = components.len();
        if n == 0 {
            return Err(ModelError::Invalid("system needs at least one component".into()));
        }
        if !(eps0.is_finite() && eps0 > 0.0) {
            return Err(ModelError::Invalid(format!("eps0 must be positive, got {eps0}")));
        }
        domain.bounds.validate("domain")?;
        domain.working.validate("working compact")?;
        if domain.bounds.dim() != n || domain.working.dim() != n {
            return Err(ModelError::Invalid(format!("domain dimension differs from n = {n}")));
        }
        if !domain.bounds.contains_box(&domain.working) {
            return Err(ModelError::Invalid("working compact is not inside the domain".into()));
        }
        if domain.kind == DomainKind::PositiveOrthant && domain.bounds.lo.iter().any(|l| *l < 0.0) {
            return Err(ModelError::Invalid("positive-cone domain must lie in the closed orthant".into()));
        }
        for (key, value) in &params {
            let reserved = key == expr::EPS || state_index(key).is_some() || Func::from_name(key).is_some();
            let identifier = key.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if reserved || !identifier {
                return Err(ModelError::Invalid(format!("invalid parameter name `{key}`")));
            }
            if !value.is_finite() {
                return Err(ModelError::Invalid(format!("parameter `{key}` is not finite")));
            }
        }
        let scope = VarScope { n, params: Some(&params) };
        for (i, c) in components.iter().enumerate() {
            if let Some(bad) = c.variables().into_iter().find(|v| !scope.allows(v)) {
                return Err(ModelError::Invalid(format!("component {} references unknown `{bad}`", i + 1)));
            }
        }
        if let Some(g) = &guess {
            if g.len() != n || g.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::Invalid("equilibrium guess has the wrong dimension".into()));
            }
        }

        let resolve = |a: &Ast| CompiledExpr::new(a, n, &params).map_err(|e| ModelError::Invalid(e.to_string()));
        let field = components.iter().map(resolve).collect::<Result<Vec<_>, _>>()?;
        let mut jac = Vec::with_capacity(n * n);
        for c in &components {
            for j in 0..n {
                jac.push(resolve(&differentiate(c, &state_name(j)))?);
            }
        }
        Ok(Self { name, components, eps0, domain, params, guess, field, jac })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Ast] {
        &self.components
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn working(&self) -> &BoxRegion {
        &self.domain.working
    }

    pub fn positive_cone(&self) -> bool {
        self.domain.kind == DomainKind::PositiveOrthant
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    /// Starting point for locating the unperturbed equilibrium.
    pub fn equilibrium_guess(&self) -> Vec<f64> {
        self.guess.clone().unwrap_or_else(|| self.domain.working.center())
    }

    fn check(&self, x: &[f64], eps: f64) -> Result<(), ModelError> {
        if x.len() != self.n() {
            return Err(ModelError::Dimension { expected: self.n(), got: x.len() });
        }
        if !(eps.abs() <= self.eps0) {
            return Err(ModelError::EpsOutOfRange { eps, eps0: self.eps0 });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteState);
        }
        Ok(())
    }

    pub fn eval_field(&self, x: &[f64], eps: f64) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.n()];
        self.eval_field_into(x, eps, &mut out)?;
        Ok(out)
    }

    pub fn eval_field_into(&self, x: &[f64], eps: f64, out: &mut [f64]) -> Result<(), ModelError> {
        self.check(x, eps)?;
        for (index, (f, o)) in self.field.iter().zip(out.iter_mut()).enumerate() {
            *o = f.eval(x, eps).map_err(|source| ModelError::Eval { index, x: x.to_vec(), eps, source })?;
        }
        Ok(())
    }

    /// `∂f_i/∂x_j` from the symbolic derivatives built at load time.
    pub fn jacobian(&self, x: &[f64], eps: f64) -> Result<DMatrix<f64>, ModelError> {
        self.check(x, eps)?;
        let n = self.n();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let d = &self.jac[i * n + j];
                if d.is_zero() {
                    continue;
                }
                m[(i, j)] =
                    d.eval(x, eps).map_err(|source| ModelError::Eval { index: i, x: x.to_vec(), eps, source })?;
            }
        }
        Ok(m)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format: MODEL_FORMAT,
            name: self.name.clone(),
            n: self.n(),
            components: self.components.iter().map(|c| c.to_string()).collect(),
            eps0: self.eps0,
            domain: DomainFile {
                lo: self.domain.bounds.lo.clone(),
                hi: self.domain.bounds.hi.clone(),
                working_lo: self.domain.working.lo.clone(),
                working_hi: self.domain.working.hi.clone(),
            },
            positive_cone: self.positive_cone(),
            params: self.params.clone(),
            guess: self.guess.clone(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self, ModelError> {
        if file.format != MODEL_FORMAT {
            return Err(ModelError::Format(file.format));
        }
        if file.components.len() != file.n {
            return Err(ModelError::Invalid(format!("n = {} but {} components given", file.n, file.components.len())));
        }
        let bounds = BoxRegion::new(file.domain.lo.clone(), file.domain.hi.clone());
        let working = BoxRegion::new(file.domain.working_lo.clone(), file.domain.working_hi.clone());
        let domain =
            if file.positive_cone { DomainSpec::positive(bounds, working) } else { DomainSpec::boxed(bounds, working) };
        let sources: Vec<&str> = file.components.iter().map(String::as_str).collect();
        Self::from_sources(&file.name, &sources, file.eps0, domain, file.params.clone(), file.guess.clone())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.into(), source })?;
        let file: ModelFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text + "\n").map_err(|source| ModelError::Io { path: path.into(), source })?;
        Ok(())
    }
}

/// On-disk model document, `format: 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: u32,
    pub name: String,
    pub n: usize,
    pub components: Vec<String>,
    pub eps0: f64,
    pub domain: DomainFile,
    #[serde(default)]
    pub positive_cone: bool,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guess: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub working_lo: Vec<f64>,
    pub working_hi: Vec<f64>,
}

pub const BUILTIN_NAMES: [&str; 6] = ["linear1d", "linear_nd", "logistic", "gradient2d", "chemostat", "center"];

/// Registry of test systems with known answers.
pub fn builtin(name: &str) -> Result<SystemDef, ModelError> {
    let none = BTreeMap::new;
    match name {
        "linear1d" => {
            let b = BoxRegion::cube(1, -10.0, 10.0);
            SystemDef::from_sources(name, &["-x1 + eps"], 0.5, DomainSpec::boxed(b.clone(), b), none(), Some(vec![0.0]))
        }
        "linear_nd" => {
            let b = BoxRegion::cube(2, -10.0, 10.0);
            SystemDef::from_sources(
                name,
                &["-x1 + eps", "-2*x2 + eps"],
                0.5,
                DomainSpec::boxed(b.clone(), b),
                none(),
                Some(vec![0.0, 0.0]),
            )
        }
        "logistic" => SystemDef::from_sources(
            name,
            &["x1*(1 - x1) - eps*x1"],
            0.5,
            DomainSpec::positive(BoxRegion::cube(1, POSITIVE_CAP, 5.0), BoxRegion::cube(1, 0.1, 2.0)),
            none(),
            Some(vec![0.8]),
        ),
        "gradient2d" => {
            let b = BoxRegion::cube(2, -5.0, 5.0);
            SystemDef::from_sources(
                name,
                &["-x1 - x1^3 + eps", "-2*x2 + eps*x1"],
                0.5,
                DomainSpec::boxed(b.clone(), b),
                none(),
                Some(vec![0.0, 0.0]),
            )
        }
        "chemostat" => {
            let params = BTreeMap::from([
                ("D".to_string(), 1.0),
                ("m".to_string(), 2.0),
                ("a".to_string(), 1.0),
                ("s_in".to_string(), 2.0),
            ]);
            SystemDef::from_sources(
                name,
                &["(s_in - x1)*D - m*x1*x2/(a + x1)", "x2*(m*x1/(a + x1) - D - eps)"],
                0.2,
                DomainSpec::positive(BoxRegion::cube(2, POSITIVE_CAP, 10.0), BoxRegion::cube(2, 0.1, 3.0)),
                params,
                Some(vec![1.2, 0.8]),
            )
        }
        "center" => {
            let b = BoxRegion::cube(2, -5.0, 5.0);
            SystemDef::from_sources(
                name,
                &["x2", "-x1"],
                0.5,
                DomainSpec::boxed(b.clone(), b),
                none(),
                Some(vec![0.1, 0.1]),
            )
        }
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_examples() {
        let lin = builtin("linear1d").unwrap();
        assert_eq!(lin.n(), 1);
        assert_eq!(lin.eval_field(&[2.0], 0.5).unwrap(), vec![-1.5]);
        let log = builtin("logistic").unwrap();
        assert_eq!(log.eval_field(&[1.0], 0.0).unwrap(), vec![0.0]);
        assert!(log.positive_cone());
    }

    #[test]
    fn eps_range_is_enforced() {
        let lin = builtin("linear1d").unwrap();
        assert!(matches!(lin.eval_field(&[0.0], 0.6), Err(ModelError::EpsOutOfRange { .. })));
        assert!(lin.eval_field(&[0.0], -0.5).is_ok());
        assert!(matches!(lin.eval_field(&[0.0, 1.0], 0.0), Err(ModelError::Dimension { .. })));
        assert!(matches!(lin.eval_field(&[f64::NAN], 0.0), Err(ModelError::NonFiniteState)));
    }

    #[test]
    fn jacobian_examples() {
        let lin = builtin("linear1d").unwrap();
        assert_eq!(lin.jacobian(&[3.0], 0.2).unwrap()[(0, 0)], -1.0);
        let log = builtin("logistic").unwrap();
        let j = log.jacobian(&[0.9], 0.1).unwrap()[(0, 0)];
        assert!((j - (1.0 - 0.1 - 2.0 * 0.9)).abs() < 1e-15);
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin("nosuch"), Err(ModelError::UnknownBuiltin(_))));
    }

    #[test]
    fn invalid_models_are_rejected() {
        let b = BoxRegion::cube(1, -1.0, 1.0);
        let d = DomainSpec::boxed(b.clone(), b.clone());
        assert!(SystemDef::from_sources("z", &["x2"], 0.5, d.clone(), BTreeMap::new(), None).is_err());
        assert!(SystemDef::from_sources("z", &["x1"], 0.0, d.clone(), BTreeMap::new(), None).is_err());
        let wide = DomainSpec::boxed(b.clone(), BoxRegion::cube(1, -2.0, 1.0));
        assert!(SystemDef::from_sources("z", &["x1"], 0.5, wide, BTreeMap::new(), None).is_err());
        let bad_param = BTreeMap::from([("eps".to_string(), 1.0)]);
        assert!(SystemDef::from_sources("z", &["x1"], 0.5, d.clone(), bad_param, None).is_err());
        let neg = DomainSpec::positive(b.clone(), b);
        assert!(SystemDef::from_sources("z", &["x1"], 0.5, neg, BTreeMap::new(), None).is_err());
    }

    #[test]
    fn domain_error_surfaces_from_field() {
        let b = BoxRegion::cube(1, -1.0, 1.0);
        let sys =
            SystemDef::from_sources("z", &["ln(x1)"], 0.5, DomainSpec::boxed(b.clone(), b), BTreeMap::new(), None)
                .unwrap();
        assert!(matches!(sys.eval_field(&[0.0], 0.0), Err(ModelError::Eval { .. })));
    }

    #[test]
    fn positive_orthant_admits_below_cap() {
        let log = builtin("logistic").unwrap();
        assert!(log.domain().admits(&[1e-6]));
        assert!(!log.domain().admits(&[0.0]));
        assert!(!log.domain().admits_start(&[1e-6]));
    }
}
