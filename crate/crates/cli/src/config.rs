use std::path::{Path, PathBuf};

use holderlab::rational::{from_f64_decimal, parse_rational, to_f64, Rat};
use holderlab::{IfSystem, NumericMode, ProbVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// A coefficient given either as a JSON number or as a string such as `"1/4"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Number(f64),
    Text(String),
}

impl Coef {
    fn exact(&self) -> Result<Rat, CliError> {
        match self {
            Coef::Number(x) => from_f64_decimal(*x),
            Coef::Text(s) => parse_rational(s),
        }
        .map_err(|e| CliError::Config(e.to_string()))
    }

    fn float(&self) -> Result<f64, CliError> {
        match self {
            Coef::Number(x) => Ok(*x),
            Coef::Text(s) => Ok(to_f64(&parse_rational(s).map_err(|e| CliError::Config(e.to_string()))?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSpec {
    pub slope: Coef,
    pub intercept: Coef,
}

/// Affine system and weights; `p` lists the free coordinates `p_1..p_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub branches: Vec<BranchSpec>,
    pub open_set: [Coef; 2],
    pub p: Vec<Coef>,
    #[serde(default)]
    pub mode: NumericMode,
}

impl SystemSpec {
    pub fn build(&self, mode: NumericMode) -> Result<(IfSystem, ProbVector), CliError> {
        if self.p.len() + 1 != self.branches.len() {
            return Err(CliError::Config(format!(
                "p lists {} free weights for {} branches; expected {}",
                self.p.len(),
                self.branches.len(),
                self.branches.len().saturating_sub(1)
            )));
        }
        match mode {
            NumericMode::Rational => {
                let maps = self
                    .branches
                    .iter()
                    .map(|b| Ok((b.slope.exact()?, b.intercept.exact()?)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                let open = (self.open_set[0].exact()?, self.open_set[1].exact()?);
                let sys = IfSystem::affine_exact(&maps, open)?;
                let p = ProbVector::from_rationals(self.p.iter().map(Coef::exact).collect::<Result<_, _>>()?)?;
                Ok((sys, p))
            }
            NumericMode::Float => {
                let maps = self
                    .branches
                    .iter()
                    .map(|b| Ok((b.slope.float()?, b.intercept.float()?)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                let sys = IfSystem::affine(&maps, (self.open_set[0].float()?, self.open_set[1].float()?))?;
                let p = ProbVector::new(&self.p.iter().map(Coef::float).collect::<Result<Vec<_>, _>>()?)?;
                Ok((sys, p))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    EvalT,
    EvalC,
    Spectrum,
    Pressure,
    Gap,
    Exponent,
    Conjugacy,
    Report,
}

impl CommandName {
    /// Library module that does the work, used when surfacing errors.
    pub fn module(self) -> &'static str {
        match self {
            CommandName::EvalT | CommandName::Gap => "operator",
            CommandName::EvalC => "takagi",
            CommandName::Spectrum | CommandName::Pressure => "thermo",
            CommandName::Exponent => "holder",
            CommandName::Conjugacy | CommandName::Report => "conjugacy",
        }
    }
}

/// The system may be inline or a path to a JSON file holding it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Inline(SystemSpec),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSource,
    pub command: CommandName,
    #[serde(default = "empty_object")]
    pub params: Value,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// The system spec, reading it from disk when given as a path relative to `base`.
    pub fn system_spec(&self, base: &Path) -> Result<SystemSpec, CliError> {
        match &self.system {
            SystemSource::Inline(s) => Ok(s.clone()),
            SystemSource::File(p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("cannot read system file {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
        }
    }
}

/// Explicit values or an evenly spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(Range),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Grid::List(v) => v.clone(),
            Grid::Range(r) => {
                if r.count < 2 {
                    return Err(CliError::Config("a range needs count >= 2".into()));
                }
                (0..r.count).map(|k| r.from + (r.to - r.from) * k as f64 / (r.count - 1) as f64).collect()
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config("grid values must be finite and nonempty".into()));
        }
        Ok(v)
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

pub trait Params: DeserializeOwned + Serialize + Default {
    fn validate(&self) -> Result<(), CliError> {
        Ok(())
    }
}

pub fn parse_params<P: Params>(v: &Value) -> Result<P, CliError> {
    let p: P = serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("params: {e}")))?;
    p.validate()?;
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalTParams {
    /// The hull grid has `2^grid_level + 1` nodes.
    pub grid_level: u32,
    /// Extra cells on each side, as a fraction of the hull.
    pub margin: f64,
    pub tol: f64,
}

impl Default for EvalTParams {
    fn default() -> Self {
        EvalTParams { grid_level: 12, margin: 0.0, tol: 1e-12 }
    }
}

impl Params for EvalTParams {
    fn validate(&self) -> Result<(), CliError> {
        positive("tol", self.tol)?;
        if self.grid_level > 24 || !(self.margin >= 0.0) {
            return Err(CliError::Config("grid_level must be <= 24 and margin >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CMethod {
    Pointwise,
    Series,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalCParams {
    pub n: Vec<u32>,
    pub grid_level: u32,
    pub margin: f64,
    pub depth: usize,
    pub method: CMethod,
    /// Neumann terms for the series method.
    pub terms: usize,
}

impl Default for EvalCParams {
    fn default() -> Self {
        EvalCParams { n: vec![1], grid_level: 10, margin: 0.0, depth: 80, method: CMethod::Pointwise, terms: 200 }
    }
}

impl Params for EvalCParams {
    fn validate(&self) -> Result<(), CliError> {
        if self.grid_level > 20 || !(self.margin >= 0.0) || self.depth == 0 || self.terms == 0 {
            return Err(CliError::Config("need grid_level <= 20, margin >= 0, depth >= 1, terms >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PressureParams {
    pub betas: Grid,
    /// `α_+ − α_-` at or below this counts as rigid in the summary.
    pub rigidity_tol: f64,
}

impl Default for PressureParams {
    fn default() -> Self {
        PressureParams { betas: Grid::Range(Range { from: -10.0, to: 10.0, count: 201 }), rigidity_tol: 1e-9 }
    }
}

impl Params for PressureParams {
    fn validate(&self) -> Result<(), CliError> {
        positive("rigidity_tol", self.rigidity_tol)?;
        self.betas.values().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    /// Defaults to `count` evenly spaced points spanning `[α_-, α_+]`.
    pub alphas: Option<Grid>,
    pub count: usize,
    pub tol: f64,
    pub rigidity_tol: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams { alphas: None, count: 201, tol: 1e-12, rigidity_tol: 1e-9 }
    }
}

impl Params for SpectrumParams {
    fn validate(&self) -> Result<(), CliError> {
        positive("tol", self.tol)?;
        positive("rigidity_tol", self.rigidity_tol)?;
        if self.count < 2 {
            return Err(CliError::Config("count must be >= 2".into()));
        }
        match &self.alphas {
            Some(g) => g.values().map(|_| ()),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapParams {
    /// Hölder exponents to probe; empty means `α_- ± 0.1` clipped to `(0, 1]`.
    pub alphas: Vec<f64>,
    pub n_max: usize,
    pub grid_level: u32,
    /// Steps of the `M_p` iteration written to `iterate.csv`.
    pub iterate_steps: usize,
    pub iterate_grid_level: u32,
}

impl Default for GapParams {
    fn default() -> Self {
        GapParams { alphas: Vec::new(), n_max: 24, grid_level: 13, iterate_steps: 30, iterate_grid_level: 10 }
    }
}

impl Params for GapParams {
    fn validate(&self) -> Result<(), CliError> {
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(CliError::Config("every alpha must lie in (0, 1]".into()));
        }
        if self.n_max < 4 || self.grid_level > 18 || self.iterate_grid_level > 16 {
            return Err(CliError::Config("need n_max >= 4, grid_level <= 18, iterate_grid_level <= 16".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmpiricalParams {
    /// Which `C_n`; all zeros means `T_p`.
    pub n: Vec<u32>,
    /// Scales `r0·ratio^k` for `k < scales`.
    pub r0: f64,
    pub ratio: f64,
    pub scales: usize,
    pub depth: usize,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentParams {
    pub betas: Grid,
    pub word_len: usize,
    pub count: usize,
    pub empirical: Option<EmpiricalParams>,
}

impl Default for ExponentParams {
    fn default() -> Self {
        ExponentParams {
            betas: Grid::List(vec![-2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0]),
            word_len: 2000,
            count: 200,
            empirical: None,
        }
    }
}

impl Params for ExponentParams {
    fn validate(&self) -> Result<(), CliError> {
        self.betas.values()?;
        if self.word_len < 2 || self.count == 0 {
            return Err(CliError::Config("need word_len >= 2 and count >= 1".into()));
        }
        if let Some(e) = &self.empirical {
            positive("empirical.r0", e.r0)?;
            if !(e.ratio > 0.0 && e.ratio < 1.0) || e.scales < 8 || e.depth == 0 {
                return Err(CliError::Config("empirical needs 0 < ratio < 1, scales >= 8, depth >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConjugacyParams {
    pub samples: usize,
}

impl Default for ConjugacyParams {
    fn default() -> Self {
        ConjugacyParams { samples: 1000 }
    }
}

impl Params for ConjugacyParams {
    fn validate(&self) -> Result<(), CliError> {
        if self.samples == 0 {
            return Err(CliError::Config("samples must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportParams {
    pub tol: f64,
}

impl Default for ReportParams {
    fn default() -> Self {
        ReportParams { tol: 1e-9 }
    }
}

impl Params for ReportParams {
    fn validate(&self) -> Result<(), CliError> {
        positive("tol", self.tol)
    }
}
