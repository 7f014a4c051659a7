//! Built-in systems with their certificates and perturbations, and
//! brute-force oracles that do not share code paths with the solvers.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dichotomy::DichotomyCertificate;
use crate::error::{Error, Result};
use crate::lin_sys::{LinearSystem, Perturbation, Window};
use crate::sequence::Sequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `A_n = diag(b_n, 1/b_n)`, `b_n = exp(−c/(1+|n|))`
    PaperDiag,
    /// `A_n = diag(e^{−α}, e^{α})`
    ConstAlpha,
    /// `A_n = e^{−α} I`
    StableAlpha,
}

impl Family {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "paper_diag" => Ok(Family::PaperDiag),
            "const_alpha" => Ok(Family::ConstAlpha),
            "stable_alpha" => Ok(Family::StableAlpha),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::PaperDiag => "paper_diag",
            Family::ConstAlpha => "const_alpha",
            Family::StableAlpha => "stable_alpha",
        }
    }

    fn param_key(self) -> &'static str {
        match self {
            Family::PaperDiag => "c",
            Family::ConstAlpha | Family::StableAlpha => "alpha",
        }
    }

    fn default_param(self) -> f64 {
        match self {
            Family::PaperDiag => 1.0,
            Family::ConstAlpha => 2f64.ln(),
            Family::StableAlpha => 2.0,
        }
    }
}

/// Perturbation families addressable from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    Zero,
    Saturating {
        amplitude: Sequence,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bias: Option<Vec<f64>>,
    },
}

impl PerturbationSpec {
    pub fn saturating(amplitude: Sequence) -> Self {
        PerturbationSpec::Saturating { amplitude, shift: None, bias: None }
    }

    pub fn build(&self, dim: usize) -> Result<Perturbation> {
        match self {
            PerturbationSpec::Zero => Ok(Perturbation::zero(dim)),
            PerturbationSpec::Saturating { amplitude, shift, bias } => {
                let mut p = Perturbation::saturating(dim, amplitude.clone())?;
                if let Some(s) = shift {
                    p = p.with_shift(DVector::from_column_slice(s))?;
                }
                if let Some(b) = bias {
                    p = p.with_bias(DVector::from_column_slice(b))?;
                }
                Ok(p)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub family: Family,
    pub param: f64,
    pub sys: LinearSystem,
    pub cert: DichotomyCertificate,
    pub f_spec: PerturbationSpec,
    pub g_spec: PerturbationSpec,
    pub f: Perturbation,
    pub g: Perturbation,
    pub expected: BTreeMap<String, Value>,
}

impl Scenario {
    /// Replaces the default perturbations.
    pub fn with_perturbations(mut self, f: PerturbationSpec, g: PerturbationSpec) -> Result<Self> {
        let d = self.sys.dim();
        self.f = f.build(d)?;
        self.g = g.build(d)?;
        self.f_spec = f;
        self.g_spec = g;
        Ok(self)
    }

    /// Same scenario on another window.
    pub fn with_window(mut self, window: Window) -> Result<Self> {
        self.sys = self.sys.with_window(window)?;
        Ok(self)
    }
}

pub fn paper_diag_b(c: f64, n: i64) -> f64 {
    (-c / (1.0 + n.unsigned_abs() as f64)).exp()
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(v))
}

/// Builds a named scenario. Parameters: `c` for `paper_diag`, `alpha` for
/// `const_alpha` and `stable_alpha`, plus `dim` for `stable_alpha`.
pub fn make_scenario(name: &str, params: &BTreeMap<String, f64>, window: Window) -> Result<Scenario> {
    let family = Family::parse(name)?;
    let key = family.param_key();
    for k in params.keys() {
        if k != key && !(family == Family::StableAlpha && k == "dim") {
            return Err(Error::InvalidParams(format!("{name} has no parameter `{k}`")));
        }
    }
    let param = params.get(key).copied().unwrap_or(family.default_param());
    if !(param > 0.0) || !param.is_finite() {
        return Err(Error::InvalidParams(format!("{name} needs {key} > 0, got {param}")));
    }
    let p2 = diag(&[1.0, 0.0]);
    let mut expected = BTreeMap::new();
    let (sys, cert, f_spec, g_spec) = match family {
        Family::PaperDiag => {
            let c = param;
            let sys = LinearSystem::from_fn(2, window, move |n| {
                let b = paper_diag_b(c, n);
                diag(&[b, 1.0 / b])
            })?;
            let cert = DichotomyCertificate::generalized(p2, 1.0, Sequence::harmonic(c, 1.0))?;
            expected.insert("gdd_passes".into(), json!(true));
            expected.insert("alpha_ed".into(), json!(false));
            let f = PerturbationSpec::saturating(Sequence::harmonic(0.05, 1.0));
            let g = PerturbationSpec::Saturating {
                amplitude: Sequence::harmonic(0.08, 1.0),
                shift: Some(vec![0.5, -0.5]),
                bias: None,
            };
            (sys, cert, f, g)
        }
        Family::ConstAlpha => {
            let alpha = param;
            let sys = LinearSystem::constant(diag(&[(-alpha).exp(), alpha.exp()]), window)?;
            let cert = DichotomyCertificate::alpha(p2, 1.0, alpha)?;
            expected.insert("gdd_passes".into(), json!(true));
            expected.insert("alpha_ed".into(), json!(alpha));
            let f = PerturbationSpec::saturating(Sequence::constant(0.05));
            let g = PerturbationSpec::Saturating {
                amplitude: Sequence::constant(0.1),
                shift: Some(vec![0.3, -0.3]),
                bias: None,
            };
            (sys, cert, f, g)
        }
        Family::StableAlpha => {
            let alpha = param;
            let dim = params.get("dim").copied().unwrap_or(2.0);
            if dim < 1.0 || dim.fract() != 0.0 {
                return Err(Error::InvalidParams(format!("dim must be a positive integer, got {dim}")));
            }
            let dim = dim as usize;
            let sys = LinearSystem::constant(DMatrix::identity(dim, dim) * (-alpha).exp(), window)?;
            let cert = DichotomyCertificate::alpha(DMatrix::identity(dim, dim), 1.0, alpha)?;
            expected.insert("gdd_passes".into(), json!(true));
            expected.insert("alpha_ed".into(), json!(alpha));
            let f = PerturbationSpec::saturating(Sequence::constant(0.05));
            let g = PerturbationSpec::Saturating {
                amplitude: Sequence::constant(0.05),
                shift: Some(vec![0.25; dim]),
                bias: None,
            };
            (sys, cert, f, g)
        }
    };
    let d = sys.dim();
    Ok(Scenario {
        name: family.name().to_string(),
        family,
        param,
        f: f_spec.build(d)?,
        g: g_spec.build(d)?,
        sys,
        cert,
        f_spec,
        g_spec,
        expected,
    })
}

/// Bounded solution of `z_{n+1} = A_n z_n + q_n` on the doubled window by
/// two projected sweeps, returned on the original window:
///
/// ```text
/// s_n = P_n (A_{n−1} s_{n−1} + q_{n−1}),     s at the left end = 0
/// u_n = (I − P_n) A_n⁻¹ (u_{n+1} + q_n),     u at the right end = 0
/// φ_n = s_n − u_n
/// ```
///
/// with `P_n` carried along by `P_{n+1} = A_n P_n A_n⁻¹`.
pub fn oracle_bounded(
    sys: &LinearSystem,
    cert: &DichotomyCertificate,
    q: &dyn Fn(i64) -> DVector<f64>,
    window: Window,
) -> Result<Vec<DVector<f64>>> {
    let wide = window.doubled();
    let big = sys.with_window(wide)?;
    let d = big.dim();
    let n0 = cert.base_index;
    wide.check(n0)?;
    let id = DMatrix::<f64>::identity(d, d);

    let mut proj = vec![cert.projection.clone(); wide.len()];
    for n in n0..wide.n_max {
        proj[wide.pos(n + 1)] = big.coeff(n)? * &proj[wide.pos(n)] * big.coeff_inverse(n)?;
    }
    for n in (wide.n_min..n0).rev() {
        proj[wide.pos(n)] = big.coeff_inverse(n)? * &proj[wide.pos(n + 1)] * big.coeff(n)?;
    }

    let mut s = vec![DVector::zeros(d); wide.len()];
    for n in wide.n_min + 1..=wide.n_max {
        let i = wide.pos(n);
        s[i] = &proj[i] * (big.coeff(n - 1)? * &s[i - 1] + q(n - 1));
    }
    let mut u = vec![DVector::zeros(d); wide.len()];
    for n in (wide.n_min..wide.n_max).rev() {
        let i = wide.pos(n);
        u[i] = (&id - &proj[i]) * big.coeff_inverse(n)? * (&u[i + 1] + q(n));
    }
    Ok(window.indices().map(|n| &s[wide.pos(n)] - &u[wide.pos(n)]).collect())
}

const FIXED_POINT_TOL: f64 = 1e-14;

/// Fixed point of a scalar contraction with Lipschitz constant `lip` by
/// damped iteration.
pub fn oracle_scalar_fixed_point(map: &dyn Fn(f64) -> f64, lip: f64) -> Result<f64> {
    if !(lip < 1.0) {
        return Err(Error::NotContractive { theta: lip });
    }
    let damping = 1.0 / (1.0 + lip);
    let kappa = (1.0 - damping) + damping * lip.abs();
    let mut z = 0.0;
    for _ in 0..100_000 {
        let next = (1.0 - damping) * z + damping * map(z);
        let step = (next - z).abs();
        z = next;
        if step <= (FIXED_POINT_TOL * (1.0 - kappa) / kappa).max(4.0 * f64::EPSILON * z.abs()) {
            return Ok(z);
        }
    }
    Err(Error::NoConvergence { index: 0, iterations: 100_000 })
}

/// Root of `z − map(z)` by bisection on a bracket.
pub fn bisect_fixed_point(map: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    let h = |z: f64| z - map(z);
    let (mut flo, fhi) = (h(lo), h(hi));
    if flo * fhi > 0.0 {
        return Err(Error::InvalidParams(format!("[{lo}, {hi}] does not bracket a fixed point")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = h(mid);
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::verify_gdd;

    fn w(a: i64, b: i64) -> Window {
        Window::new(a, b).unwrap()
    }

    #[test]
    fn families_and_errors() {
        let none = BTreeMap::new();
        for name in ["paper_diag", "const_alpha", "stable_alpha"] {
            let s = make_scenario(name, &none, w(-10, 10)).unwrap();
            assert!(verify_gdd(&s.sys, &s.cert, 1e-9).unwrap().passed, "{name}");
        }
        assert!(matches!(make_scenario("nope", &none, w(-10, 10)), Err(Error::UnknownFamily(_))));
        let bad = BTreeMap::from([("c".to_string(), 0.0)]);
        assert!(matches!(make_scenario("paper_diag", &bad, w(-10, 10)), Err(Error::InvalidParams(_))));
        let stray = BTreeMap::from([("alpha".to_string(), 1.0)]);
        assert!(make_scenario("paper_diag", &stray, w(-10, 10)).is_err());
    }

    #[test]
    fn paper_diag_b_is_even_and_increasing() {
        for n in 0..50 {
            assert_eq!(paper_diag_b(1.0, n), paper_diag_b(1.0, -n));
            assert!(paper_diag_b(1.0, n) < paper_diag_b(1.0, n + 1));
            assert!(paper_diag_b(1.0, n) < 1.0);
        }
    }

    #[test]
    fn scalar_oracles() {
        assert!((oracle_scalar_fixed_point(&|z| z / 2.0 + 1.0, 0.5).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(oracle_scalar_fixed_point(&|z| z / 2.0, 0.5).unwrap(), 0.0);
        let map = |z: f64| z / 2.0 + 0.1 * z.sin() + 1.0;
        let a = oracle_scalar_fixed_point(&map, 0.6).unwrap();
        let b = bisect_fixed_point(&map, 0.0, 10.0).unwrap();
        assert!((a - b).abs() < 1e-13, "{a} {b}");
        assert!(matches!(oracle_scalar_fixed_point(&|z| 2.0 * z, 2.0), Err(Error::NotContractive { .. })));
    }

    #[test]
    fn oracle_closed_form() {
        let s = make_scenario("const_alpha", &BTreeMap::new(), w(-30, 30)).unwrap();
        let zero = oracle_bounded(&s.sys, &s.cert, &|_| DVector::zeros(2), w(-30, 30)).unwrap();
        assert!(zero.iter().all(|v| v.iter().all(|x| *x == 0.0)));
        // stable block: 2; unstable block: −Σ_{j≥1} 2^{−j} = −1
        let one = oracle_bounded(&s.sys, &s.cert, &|_| DVector::from_element(2, 1.0), w(-30, 30)).unwrap();
        for v in &one[6..55] {
            assert!((v[0] - 2.0).abs() < 1e-10 && (v[1] + 1.0).abs() < 1e-10, "{v}");
        }
    }
}
