//! The equivalence maps `H(n, ξ) = ξ + χ(n; (n, ξ))` and
//! `L(n, ν) = ν + ϑ(n; (n, ν))` between
//!
//! ```text
//! x_{n+1} = A_n x_n + f(n, x_n)        (first system)
//! y_{n+1} = A_n y_n + g(n, y_n)        (second system)
//! ```
//!
//! and the checks that go with them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bounded_solver::{nonlinear_tail, picard, BoundedSolution, Constants, NonlinearOptions, DEFAULT_EPS};
use crate::dichotomy::{check_h2_h3, Dichotomy, H23Report};
use crate::error::{Error, Result};
use crate::lin_sys::{recurrence_defects, trajectory, vec_norm, LinearSystem, Perturbation};
use crate::report::VerificationReport;

/// Adds `offset` to every component of `H(n, ·)` at one index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    pub n: i64,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct ConjugacyEngine {
    dich: Dichotomy,
    f: Perturbation,
    g: Perturbation,
    eps: f64,
    h23: H23Report,
    constants: Constants,
    tail: Vec<f64>,
    fault: Option<Fault>,
}

impl ConjugacyEngine {
    pub fn new(dich: Dichotomy, f: Perturbation, g: Perturbation, eps: f64) -> Result<Self> {
        let d = dich.sys().dim();
        for p in [&f, &g] {
            if p.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
            }
        }
        if !(eps > 0.0) {
            return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
        }
        let r = |n: i64| f.lip(n).max(g.lip(n));
        let big_f = |n: i64| f.bound(n);
        let big_g = |n: i64| g.bound(n);
        let fg = |n: i64| f.bound(n) + g.bound(n);
        let h23 = check_h2_h3(dich.cert(), dich.window(), &big_f, &big_g, &r);
        let constants = Constants::compute(&dich, &fg, &r);
        if !(constants.theta() < 1.0) {
            return Err(Error::NotContractive { theta: constants.theta() });
        }
        let tail = nonlinear_tail(&dich, &fg, &r);
        Ok(ConjugacyEngine { dich, f, g, eps, h23, constants, tail, fault: None })
    }

    pub fn with_default_eps(dich: Dichotomy, f: Perturbation, g: Perturbation) -> Result<Self> {
        Self::new(dich, f, g, DEFAULT_EPS)
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    /// The engine with the roles of the two systems exchanged.
    pub fn swapped(&self) -> Self {
        ConjugacyEngine { f: self.g.clone(), g: self.f.clone(), fault: None, ..self.clone() }
    }

    pub fn dichotomy(&self) -> &Dichotomy {
        &self.dich
    }

    pub fn sys(&self) -> &LinearSystem {
        self.dich.sys()
    }

    pub fn f(&self) -> &Perturbation {
        &self.f
    }

    pub fn g(&self) -> &Perturbation {
        &self.g
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn h23(&self) -> &H23Report {
        &self.h23
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    /// Bound on `|χ|` and `|ϑ|` over the window.
    pub fn b(&self) -> f64 {
        self.constants.bound()
    }

    pub fn theta(&self) -> f64 {
        self.constants.theta()
    }

    /// Shared Lipschitz sequence `r_n = max(r^f_n, r^g_n)`.
    pub fn r(&self, n: i64) -> f64 {
        self.f.lip(n).max(self.g.lip(n))
    }

    pub fn tail(&self, n: i64) -> f64 {
        self.tail[self.dich.window().pos(n)]
    }

    pub fn tail_budget(&self) -> f64 {
        let w = self.dich.window();
        w.interior().indices().map(|n| self.tail[w.pos(n)]).fold(0.0, f64::max)
    }

    fn options(&self) -> NonlinearOptions {
        NonlinearOptions { eps: self.eps, ..Default::default() }
    }

    /// Bounded solution of `w_{k+1} = A_k w_k − f(k, x_k) + g(k, w_k + x_k)`
    /// with `x` the first-system solution through ξ at m.
    pub fn chi_solution(&self, m: i64, xi: &DVector<f64>) -> Result<BoundedSolution> {
        cross_solution(self, &self.f, &self.g, m, xi)
    }

    /// Bounded solution of `z_{k+1} = A_k z_k + f(k, z_k + y_k) − g(k, y_k)`
    /// with `y` the second-system solution through ν at m.
    pub fn vartheta_solution(&self, m: i64, nu: &DVector<f64>) -> Result<BoundedSolution> {
        cross_solution(self, &self.g, &self.f, m, nu)
    }

    /// `χ(n; (m, ξ))`
    pub fn chi(&self, n: i64, m: i64, xi: &DVector<f64>) -> Result<DVector<f64>> {
        self.dich.window().check(n)?;
        Ok(self.chi_solution(m, xi)?.values[self.dich.window().pos(n)].clone())
    }

    /// `ϑ(n; (m, ν))`
    pub fn vartheta(&self, n: i64, m: i64, nu: &DVector<f64>) -> Result<DVector<f64>> {
        self.dich.window().check(n)?;
        Ok(self.vartheta_solution(m, nu)?.values[self.dich.window().pos(n)].clone())
    }

    pub fn h_map(&self, n: i64, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let mut h = xi + self.chi(n, n, xi)?;
        if let Some(fault) = self.fault.filter(|f| f.n == n) {
            h.add_scalar_mut(fault.offset);
        }
        Ok(h)
    }

    pub fn l_map(&self, n: i64, nu: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(nu + self.vartheta(n, n, nu)?)
    }
}

/// Shared body of χ and ϑ: `own` drives the base trajectory, `other` is the
/// nonlinearity evaluated along the shifted argument.
fn cross_solution(
    engine: &ConjugacyEngine,
    own: &Perturbation,
    other: &Perturbation,
    m: i64,
    start: &DVector<f64>,
) -> Result<BoundedSolution> {
    let w = engine.dich.window();
    let base = trajectory(engine.sys(), own, m, start)?;
    let own_terms: Vec<DVector<f64>> = w.indices().map(|k| own.eval(k, &base[w.pos(k)])).collect();
    let q = |k: i64, v: &DVector<f64>| {
        let i = w.pos(k);
        other.eval(k, &(v + &base[i])) - &own_terms[i]
    };
    picard(&engine.dich, &q, engine.constants, engine.tail.clone(), &engine.options())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub round_trip: f64,
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { round_trip: 1e-6, residual: 1e-8 }
    }
}

/// A solution sample `(m, ξ)` checked on indices `m − span ..= m + span`
/// clipped to the window interior.
#[derive(Debug, Clone)]
pub struct SolutionSample {
    pub m: i64,
    pub start: DVector<f64>,
    pub span: i64,
}

fn sample_range(engine: &ConjugacyEngine, s: &SolutionSample) -> (i64, i64) {
    let inner = engine.dich.window().interior();
    ((s.m - s.span).max(inner.n_min), (s.m + s.span).min(inner.n_max))
}

/// Bound transfer, round trips, solution mapping and the conjugation series
/// identity.
pub fn verify_equivalence(
    engine: &ConjugacyEngine,
    solutions: &[SolutionSample],
    points: &[(i64, DVector<f64>)],
    tol: Tolerances,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new();
    let b = engine.b();

    for (n, xi) in points {
        let (n, args) = (*n, xi.as_slice());
        let h = engine.h_map(n, xi)?;
        report.push("bound_h", n, n, args, vec_norm(&(&h - xi)), b + engine.tail(n));
        let back = engine.l_map(n, &h)?;
        report.push("round_trip_lh", n, n, args, vec_norm(&(&back - xi)), tol.round_trip);

        let l = engine.l_map(n, xi)?;
        report.push("bound_l", n, n, args, vec_norm(&(&l - xi)), b + engine.tail(n));
        let fwd = engine.h_map(n, &l)?;
        report.push("round_trip_hl", n, n, args, vec_norm(&(&fwd - xi)), tol.round_trip);
    }

    for s in solutions {
        solution_mapping(engine, s, true, tol, &mut report)?;
        solution_mapping(engine, s, false, tol, &mut report)?;
    }
    Ok(report)
}

/// Maps a solution of one system pointwise and measures the recurrence
/// defect against the other; for H also checks the series identity
/// `H[n,x_n] = Σ G(n,k+1) g(k, H[k,x_k]) − Σ G(n,k+1) f(k, x_k) + x_n`.
fn solution_mapping(
    engine: &ConjugacyEngine,
    s: &SolutionSample,
    forward: bool,
    tol: Tolerances,
    report: &mut VerificationReport,
) -> Result<()> {
    let w = engine.dich.window();
    let (own, other) = if forward { (&engine.f, &engine.g) } else { (&engine.g, &engine.f) };
    let path = trajectory(engine.sys(), own, s.m, &s.start)?;
    let (lo, hi) = sample_range(engine, s);
    let args = s.start.as_slice();

    let mapped: Vec<DVector<f64>> = (lo..=hi)
        .map(|n| {
            let x = &path[w.pos(n)];
            if forward {
                engine.h_map(n, x)
            } else {
                engine.l_map(n, x)
            }
        })
        .collect::<Result<_>>()?;
    let sub = engine.sys().with_window(crate::lin_sys::Window::new(lo, hi)?)?;
    let defects = recurrence_defects(&sub, other, &mapped)?;
    let worst = defects.iter().copied().fold(0.0, f64::max);
    let name = if forward { "solution_map_h" } else { "solution_map_l" };
    report.push(name, hi, s.m, args, worst, tol.residual);

    if forward {
        let chi = engine.chi_solution(s.m, &s.start)?;
        let d = engine.sys().dim();
        let mut forcing = Vec::with_capacity(w.len() * d);
        for k in w.indices() {
            let x = &path[w.pos(k)];
            let hk = x + &chi.values[w.pos(k)];
            forcing.extend_from_slice((engine.g.eval(k, &hk) - engine.f.eval(k, x)).as_slice());
        }
        let series = engine.dich.green().series(&forcing);
        let mut worst: f64 = 0.0;
        for (j, n) in (lo..=hi).enumerate() {
            let i = w.pos(n);
            let rhs = DVector::from_column_slice(&series[i * d..(i + 1) * d]) + &path[i];
            worst = worst.max(vec_norm(&(&mapped[j] - rhs)));
        }
        report.push("series_identity_h", hi, s.m, args, worst, tol.residual);
    }
    Ok(())
}

/// `χ(n; (m, ξ)) = χ(n; (n, x(n, m, ξ)))` and the same for ϑ.
pub fn verify_flow_identity(
    engine: &ConjugacyEngine,
    samples: &[(i64, i64, DVector<f64>)],
    tol: f64,
) -> Result<VerificationReport> {
    let mut report = VerificationReport::new();
    let w = engine.dich.window();
    for (n, m, xi) in samples {
        let (n, m) = (*n, *m);
        w.check(n)?;
        let args = xi.as_slice();
        let x = &trajectory(engine.sys(), &engine.f, m, xi)?[w.pos(n)];
        let lhs = engine.chi(n, m, xi)?;
        let rhs = engine.chi(n, n, x)?;
        report.push("flow_chi", n, m, args, vec_norm(&(lhs - rhs)), tol);

        let y = &trajectory(engine.sys(), &engine.g, m, xi)?[w.pos(n)];
        let lhs = engine.vartheta(n, m, xi)?;
        let rhs = engine.vartheta(n, n, y)?;
        report.push("flow_vartheta", n, m, args, vec_norm(&(lhs - rhs)), tol);
    }
    Ok(report)
}

/// `δ exp(Σ (‖A_p − I‖ + r_p))` over `p = k..n−1` (n > k) or `p = n..k−1`
/// (n < k).
pub fn gronwall_bound(sys: &LinearSystem, f: &Perturbation, k: i64, n: i64, delta: f64) -> Result<f64> {
    let (lo, hi) = if n >= k { (k, n) } else { (n, k) };
    let mut s = 0.0;
    for p in lo..hi {
        s += sys.deviation(p)? + f.lip(p);
    }
    Ok(delta * s.exp())
}

/// `Γ(n, ℓ)`: the two finite sums of the continuity argument.
pub fn gamma(engine: &ConjugacyEngine, n: i64, ell: i64) -> Result<f64> {
    if ell < 1 {
        return Err(Error::InvalidParams("ℓ must be ≥ 1".into()));
    }
    let w = engine.dich.window();
    if n - ell < w.n_min || n + ell > w.n_max {
        return Err(Error::WindowTooNarrow(format!("[{}, {}] leaves {w}", n - ell, n + ell)));
    }
    let cert = engine.dich.cert();
    let sys = engine.sys();
    let growth = |l: i64| -> Result<f64> { Ok(sys.deviation(l)? + engine.r(l)) };

    let mut total = 0.0;
    for k in n - ell..n {
        let decay = cert.rate_sum(k + 1, n);
        let mut grow = 0.0;
        for l in k..n {
            grow += growth(l)?;
        }
        total += cert.k * (-decay).exp() * engine.r(k) * grow.exp();
    }
    for k in n..n + ell {
        let decay = cert.rate_sum(n, k + 1);
        let mut grow = 0.0;
        for l in n..k {
            grow += growth(l)?;
        }
        total += cert.k * (-decay).exp() * engine.r(k) * grow.exp();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderParams {
    pub alpha: f64,
    pub k: f64,
    pub big_f: f64,
    pub big_g: f64,
    pub r: f64,
    pub m: f64,
    pub theta: f64,
    pub b: f64,
    pub d1: f64,
    pub d2: f64,
    pub exponent: f64,
    pub holder_applicable: bool,
}

impl HolderParams {
    /// `(D₁ + D₂) δ^exponent`
    pub fn modulus_bound(&self, delta: f64) -> f64 {
        (self.d1 + self.d2) * delta.powf(self.exponent)
    }
}

/// Constants of the Hölder estimate for an α-dichotomy with constant
/// bounds `F`, `G`, Lipschitz constant `r` and `‖A_n − I‖ ≤ M`.
pub fn holder_params(k: f64, big_f: f64, big_g: f64, alpha: f64, m: f64, r: f64) -> Result<HolderParams> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParams(format!("α must be positive, got {alpha}")));
    }
    let e = (-alpha).exp();
    let theta = k * r * (1.0 + e) / (1.0 - e);
    let b = k * (big_f + big_g) * (1.0 + e) / (1.0 - e);
    if m + r >= alpha {
        return Err(Error::NotApplicable(format!("M + r = {} ≥ α = {alpha}", m + r)));
    }
    if theta >= 1.0 {
        return Err(Error::NotApplicable(format!("θ = {theta} ≥ 1")));
    }
    let d1 = 1.0 + 2.0 * k * (big_f + big_g) / ((1.0 - e) * (1.0 - theta));
    let d2 = 2.0 * theta / (1.0 - theta);
    Ok(HolderParams {
        alpha,
        k,
        big_f,
        big_g,
        r,
        m,
        theta,
        b,
        d1,
        d2,
        exponent: 1.0 - (m + r) / alpha,
        holder_applicable: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub delta: f64,
    /// Max over directions of `|H(n, ξ + δu) − H(n, ξ)|`.
    pub modulus: f64,
    pub bound: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub n: i64,
    pub rows: Vec<ModulusRow>,
    /// Least-squares slope of log modulus against log δ.
    pub slope: f64,
    /// Whether the modulus shrinks with δ, up to `2 eps`.
    pub monotone: bool,
}

impl ModulusReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

fn loglog_slope(rows: &[ModulusRow]) -> f64 {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.modulus > 0.0 && r.delta > 0.0).map(|r| (r.delta.ln(), r.modulus.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Measured modulus of continuity of `ξ ↦ H(n, ξ)` along a δ ladder.
pub fn continuity_modulus(
    engine: &ConjugacyEngine,
    n: i64,
    xi: &DVector<f64>,
    deltas: &[f64],
    directions: &[DVector<f64>],
    params: Option<&HolderParams>,
) -> Result<ModulusReport> {
    if let Some(bad) = deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
        return Err(Error::InvalidParams(format!("δ must lie in (0, 1), got {bad}")));
    }
    let units: Vec<DVector<f64>> = directions
        .iter()
        .map(|u| {
            let s = vec_norm(u);
            if s > 0.0 {
                Ok(u / s)
            } else {
                Err(Error::InvalidParams("zero direction".into()))
            }
        })
        .collect::<Result<_>>()?;
    let h0 = engine.h_map(n, xi)?;
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let mut modulus: f64 = 0.0;
        for u in &units {
            let h = engine.h_map(n, &(xi + u * delta))?;
            modulus = modulus.max(vec_norm(&(h - &h0)));
        }
        let bound = params.filter(|p| p.holder_applicable).map(|p| p.modulus_bound(delta));
        rows.push(ModulusRow { delta, modulus, bound, passed: bound.is_none_or(|b| modulus <= b) });
    }
    let mut by_delta: Vec<&ModulusRow> = rows.iter().collect();
    by_delta.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let monotone = by_delta.windows(2).all(|p| p[1].modulus <= p[0].modulus + 2.0 * engine.eps);
    Ok(ModulusReport { n, slope: loglog_slope(&rows), rows, monotone })
}

/// Sup over an index grid of the per-index moduli: sampled uniformity of
/// continuity, with no claim beyond the grid.
pub fn uniform_modulus(
    engine: &ConjugacyEngine,
    ns: &[i64],
    xi: &DVector<f64>,
    deltas: &[f64],
    directions: &[DVector<f64>],
) -> Result<Vec<(f64, f64)>> {
    let mut sup = vec![0.0f64; deltas.len()];
    for &n in ns {
        let rep = continuity_modulus(engine, n, xi, deltas, directions, None)?;
        for (s, row) in sup.iter_mut().zip(&rep.rows) {
            *s = s.max(row.modulus);
        }
    }
    Ok(deltas.iter().copied().zip(sup).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::{DichotomyCertificate, DEFAULT_CERT_TOL};
    use crate::lin_sys::Window;
    use crate::sequence::Sequence;
    use nalgebra::DMatrix;

    fn const_alpha(alpha: f64, window: Window) -> Dichotomy {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![(-alpha).exp(), alpha.exp()]));
        let sys = LinearSystem::constant(a, window).unwrap();
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let cert = DichotomyCertificate::alpha(p, 1.0, alpha).unwrap();
        Dichotomy::certify(sys, cert, DEFAULT_CERT_TOL).unwrap()
    }

    fn sat(c: f64) -> Perturbation {
        Perturbation::saturating(2, Sequence::constant(c)).unwrap()
    }

    #[test]
    fn holder_examples() {
        let p = holder_params(1.0, 0.0, 0.0, 2f64.ln(), 0.0, 0.2).unwrap();
        assert!((p.theta - 0.6).abs() < 1e-15);
        let p = holder_params(1.0, 0.0, 0.0, 1.0, 0.3, 0.1).unwrap();
        assert!((p.exponent - 0.6).abs() < 1e-15);
        let p = holder_params(1.0, 0.0, 0.0, 1.0, 0.3, 0.0).unwrap();
        assert_eq!((p.theta, p.d2), (0.0, 0.0));
        assert!((p.exponent - 0.7).abs() < 1e-15);
        assert!(matches!(holder_params(1.0, 0.1, 0.1, 1.0, 0.9, 0.1), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn gronwall_direct_sum() {
        let sys = LinearSystem::constant(DMatrix::from_element(1, 1, 1.5), Window::new(0, 10).unwrap()).unwrap();
        let f = Perturbation::saturating(1, Sequence::constant(0.1)).unwrap();
        assert_eq!(gronwall_bound(&sys, &f, 4, 4, 0.25).unwrap(), 0.25);
        let v = gronwall_bound(&sys, &f, 2, 5, 1.0).unwrap();
        assert!((v - 1.8f64.exp()).abs() < 1e-12);
        assert_eq!(v, gronwall_bound(&sys, &f, 5, 2, 1.0).unwrap());
    }

    #[test]
    fn identical_perturbations_give_identity() {
        let dich = const_alpha(2f64.ln(), Window::new(-30, 30).unwrap());
        let engine = ConjugacyEngine::with_default_eps(dich, sat(0.1), sat(0.1)).unwrap();
        let xi = DVector::from_vec(vec![0.3, -0.7]);
        assert_eq!(engine.h_map(0, &xi).unwrap(), xi);
        assert_eq!(engine.l_map(5, &xi).unwrap(), xi);
    }

    #[test]
    fn gamma_vanishes_without_lipschitz_terms() {
        let dich = const_alpha(1.0, Window::new(-20, 20).unwrap());
        let engine = ConjugacyEngine::with_default_eps(dich, Perturbation::zero(2), Perturbation::zero(2)).unwrap();
        assert_eq!(gamma(&engine, 0, 5).unwrap(), 0.0);
        assert!(matches!(gamma(&engine, 18, 5), Err(Error::WindowTooNarrow(_))));
    }

    #[test]
    fn swapped_chi_is_vartheta() {
        let dich = const_alpha(2f64.ln(), Window::new(-25, 25).unwrap());
        let f = sat(0.1);
        let g = sat(0.05).with_shift(DVector::from_vec(vec![0.2, -0.1])).unwrap();
        let engine = ConjugacyEngine::with_default_eps(dich, f, g).unwrap();
        let swapped = engine.swapped();
        let nu = DVector::from_vec(vec![0.4, 0.1]);
        for (n, m) in [(0, 0), (3, -2), (-4, 1)] {
            let a = swapped.chi(n, m, &nu).unwrap();
            let b = engine.vartheta(n, m, &nu).unwrap();
            assert!(vec_norm(&(a - b)) < 1e-9);
        }
    }
}
