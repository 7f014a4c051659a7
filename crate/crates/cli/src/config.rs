use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use topeq_core::conjugacy::Fault;
use topeq_core::dichotomy::DichotomyKind;
use topeq_core::scenarios::{make_scenario, PerturbationSpec};
use topeq_core::{DichotomyCertificate, LinearSystem, Perturbation, Window};

use crate::CliError;

pub const MIN_WINDOW_LEN: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub system: Option<InlineSystem>,
    #[serde(default)]
    pub certificate: Option<DichotomyCertificate>,
    #[serde(default)]
    pub window: Option<[i64; 2]>,
    #[serde(default)]
    pub f: Option<PerturbationSpec>,
    #[serde(default)]
    pub g: Option<PerturbationSpec>,
    #[serde(default)]
    pub tolerances: TolerancesConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub claimed_kind: Option<DichotomyKind>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_stepanov_l")]
    pub stepanov_l: i64,
    #[serde(default)]
    pub forcing: Option<ForcingConfig>,
    #[serde(default)]
    pub fault_injection: Option<Fault>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

fn default_alphas() -> Vec<f64> {
    vec![0.5, 0.3, 0.2]
}

fn default_stepanov_l() -> i64 {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Coefficient matrices in row-major order, `matrices[i]` at index
/// `start + i`, frozen beyond both ends.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSystem {
    pub dim: usize,
    pub start: i64,
    pub matrices: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesConfig {
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_round_trip")]
    pub round_trip_tol: f64,
    #[serde(default = "d_residual")]
    pub residual_tol: f64,
    #[serde(default = "d_cert")]
    pub cert_tol: f64,
}

fn d_eps() -> f64 {
    1e-9
}
fn d_round_trip() -> f64 {
    1e-6
}
fn d_residual() -> f64 {
    1e-8
}
fn d_cert() -> f64 {
    1e-9
}

impl Default for TolerancesConfig {
    fn default() -> Self {
        TolerancesConfig {
            eps: d_eps(),
            round_trip_tol: d_round_trip(),
            residual_tol: d_residual(),
            cert_tol: d_cert(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_points")]
    pub points: usize,
    #[serde(default = "d_solutions")]
    pub solutions: usize,
    #[serde(default = "d_span")]
    pub span: i64,
    #[serde(default = "d_flow")]
    pub flow_samples: usize,
    #[serde(default = "d_offset")]
    pub flow_offset: i64,
    #[serde(default = "d_radius")]
    pub radius: f64,
    #[serde(default = "d_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "d_directions")]
    pub directions: usize,
    #[serde(default)]
    pub modulus_index: i64,
    #[serde(default = "d_grid")]
    pub modulus_grid: Vec<i64>,
}

fn d_points() -> usize {
    20
}
fn d_solutions() -> usize {
    3
}
fn d_span() -> i64 {
    5
}
fn d_flow() -> usize {
    10
}
fn d_offset() -> i64 {
    5
}
fn d_radius() -> f64 {
    1.0
}
fn d_deltas() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
}
fn d_directions() -> usize {
    4
}
fn d_grid() -> Vec<i64> {
    vec![-10, -5, 0, 5, 10]
}

impl Default for SamplingConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    Zero,
    /// The same vector at every index.
    Constant {
        value: Vec<f64>,
    },
    /// `count` seeded forcings with entries in `[−amplitude, amplitude]`.
    Random {
        count: usize,
        amplitude: f64,
    },
    /// `q(n, z) = amplitude · sin(z) + offset`, componentwise.
    Sine {
        amplitude: f64,
        offset: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

/// What a run operates on, after validation.
#[derive(Debug, Clone)]
pub struct Problem {
    pub label: String,
    pub params: BTreeMap<String, f64>,
    pub sys: LinearSystem,
    pub cert: DichotomyCertificate,
    pub f: Perturbation,
    pub g: Perturbation,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn window(&self) -> Result<Window, CliError> {
        let [a, b] = self.window.ok_or_else(|| CliError::Config("missing window".into()))?;
        let w = Window::new(a, b).map_err(|e| CliError::Config(e.to_string()))?;
        if w.len() < MIN_WINDOW_LEN {
            return Err(CliError::Config(format!("window {w} is shorter than {MIN_WINDOW_LEN}")));
        }
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.window()?;
        let t = &self.tolerances;
        for (name, v) in [
            ("eps", t.eps),
            ("round_trip_tol", t.round_trip_tol),
            ("residual_tol", t.residual_tol),
            ("cert_tol", t.cert_tol),
        ] {
            if !(v > 0.0) {
                return Err(CliError::Config(format!("tolerance {name} must be positive")));
            }
        }
        match (&self.scenario, &self.system) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either scenario or system, not both".into())),
            (None, None) => return Err(CliError::Config("missing scenario or system".into())),
            (None, Some(_)) if self.certificate.is_none() => {
                return Err(CliError::Config("an inline system needs a certificate".into()))
            }
            _ => {}
        }
        let s = &self.sampling;
        if !(s.radius > 0.0) || s.span < 0 || s.flow_offset < 0 {
            return Err(CliError::Config("sampling radius must be positive, span and offset nonnegative".into()));
        }
        if s.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(CliError::Config("deltas must lie in (0, 1)".into()));
        }
        if self.stepanov_l < 1 {
            return Err(CliError::Config("stepanov_l must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        self.validate()?;
        let window = self.window()?;
        let (label, params, sys, cert, f, g) = if let Some(sc) = &self.scenario {
            let s = make_scenario(&sc.name, &sc.params, window).map_err(CliError::from_core)?;
            let cert = self.certificate.clone().unwrap_or(s.cert);
            (sc.name.clone(), sc.params.clone(), s.sys, cert, s.f, s.g)
        } else {
            let inline = self.system.as_ref().expect("validated");
            let d = inline.dim;
            if d == 0 || inline.matrices.is_empty() {
                return Err(CliError::Config("inline system needs dim ≥ 1 and at least one matrix".into()));
            }
            let mats = inline
                .matrices
                .iter()
                .map(|m| {
                    if m.len() == d * d {
                        Ok(DMatrix::from_row_slice(d, d, m))
                    } else {
                        Err(CliError::Config(format!("matrix with {} entries, expected {}", m.len(), d * d)))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            let sys = LinearSystem::from_table(inline.start, mats, window).map_err(CliError::from_core)?;
            let cert = self.certificate.clone().expect("validated");
            let zero = Perturbation::zero(d);
            ("inline".to_string(), BTreeMap::new(), sys, cert, zero.clone(), zero)
        };
        let d = sys.dim();
        let f = match &self.f {
            Some(spec) => spec.build(d).map_err(CliError::from_core)?,
            None => f,
        };
        let g = match &self.g {
            Some(spec) => spec.build(d).map_err(CliError::from_core)?,
            None => g,
        };
        if cert.dim() != d {
            return Err(CliError::Config(format!("certificate dimension {} does not match system {d}", cert.dim())));
        }
        Ok(Problem { label, params, sys, cert, f, g })
    }
}
