//! Linear part `z_{n+1} = A_n z_n` on a finite window, its perturbations
//! `x_{n+1} = A_n x_n + f(n, x_n)`, and forward/backward propagation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dichotomy::DichotomyCertificate;
use crate::error::{Error, Result};
use crate::sequence::Sequence;

pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

const BACKWARD_TOL: f64 = 1e-14;
const BACKWARD_MAX_ITERS: usize = 500;

/// Induced ∞-norm (max absolute row sum).
pub fn norm_inf(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Sup-norm of a vector.
pub fn vec_norm(x: &DVector<f64>) -> f64 {
    x.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Closed integer range `[n_min, n_max]` standing in for ℤ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub n_min: i64,
    pub n_max: i64,
}

impl Window {
    pub fn new(n_min: i64, n_max: i64) -> Result<Self> {
        if n_min >= n_max {
            return Err(Error::InvalidWindow { n_min, n_max });
        }
        Ok(Window { n_min, n_max })
    }

    /// Number of indices in the window.
    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn span(&self) -> i64 {
        self.n_max - self.n_min
    }

    pub fn contains(&self, n: i64) -> bool {
        n >= self.n_min && n <= self.n_max
    }

    pub fn check(&self, n: i64) -> Result<()> {
        if self.contains(n) {
            Ok(())
        } else {
            Err(Error::IndexOutOfWindow { index: n, n_min: self.n_min, n_max: self.n_max })
        }
    }

    /// Offset of `n` from `n_min`; caller guarantees `n` is inside.
    pub fn pos(&self, n: i64) -> usize {
        debug_assert!(self.contains(n));
        (n - self.n_min) as usize
    }

    pub fn indices(&self) -> impl DoubleEndedIterator<Item = i64> + Clone {
        self.n_min..=self.n_max
    }

    /// Middle 80% of the window.
    pub fn interior(&self) -> Window {
        let trim = ((self.span() as f64) * 0.1).round() as i64;
        let (lo, hi) = (self.n_min + trim, self.n_max - trim);
        if lo < hi {
            Window { n_min: lo, n_max: hi }
        } else {
            *self
        }
    }

    /// Window with the same center and twice the span.
    pub fn doubled(&self) -> Window {
        let half = self.span();
        let lo = self.n_min - half / 2 - half % 2;
        Window { n_min: lo, n_max: lo + 2 * half }
    }

    /// Width of the outer 10% band at each end (at least one index).
    pub fn boundary_band(&self) -> i64 {
        ((self.len() as f64) * 0.1).ceil().max(1.0) as i64
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.n_min, self.n_max)
    }
}

pub type CoeffFn = Arc<dyn Fn(i64) -> DMatrix<f64> + Send + Sync>;

/// `z_{n+1} = A_n z_n` with every `A_n` on the window tabulated together
/// with its inverse.
#[derive(Clone)]
pub struct LinearSystem {
    dim: usize,
    window: Window,
    source: CoeffFn,
    coeffs: Vec<DMatrix<f64>>,
    inverses: Vec<DMatrix<f64>>,
    condition_cap: f64,
}

impl fmt::Debug for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearSystem")
            .field("dim", &self.dim)
            .field("window", &self.window)
            .field("condition_cap", &self.condition_cap)
            .finish_non_exhaustive()
    }
}

impl LinearSystem {
    pub fn from_fn<F>(dim: usize, window: Window, coeff: F) -> Result<Self>
    where
        F: Fn(i64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::with_cap(dim, window, Arc::new(coeff), DEFAULT_CONDITION_CAP)
    }

    pub fn constant(a: DMatrix<f64>, window: Window) -> Result<Self> {
        let dim = a.nrows();
        Self::from_fn(dim, window, move |_| a.clone())
    }

    /// Coefficients `mats[i] = A_{start+i}`, frozen at the ends of the table.
    pub fn from_table(start: i64, mats: Vec<DMatrix<f64>>, window: Window) -> Result<Self> {
        let dim =
            mats.first().map(|m| m.nrows()).ok_or_else(|| Error::InvalidParams("empty coefficient table".into()))?;
        let last = mats.len() as i64 - 1;
        Self::from_fn(dim, window, move |n| mats[(n - start).clamp(0, last) as usize].clone())
    }

    pub fn with_cap(dim: usize, window: Window, source: CoeffFn, condition_cap: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        let mut coeffs = Vec::with_capacity(window.len());
        let mut inverses = Vec::with_capacity(window.len());
        for n in window.indices() {
            let a = source(n);
            if a.nrows() != dim || a.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: a.nrows() });
            }
            let inv =
                a.clone().try_inverse().ok_or(Error::SingularCoefficient { index: n, condition: f64::INFINITY })?;
            let condition = norm_inf(&a) * norm_inf(&inv);
            if !condition.is_finite() || condition > condition_cap {
                return Err(Error::SingularCoefficient { index: n, condition });
            }
            coeffs.push(a);
            inverses.push(inv);
        }
        Ok(LinearSystem { dim, window, source, coeffs, inverses, condition_cap })
    }

    /// Same coefficient source tabulated on another window.
    pub fn with_window(&self, window: Window) -> Result<Self> {
        Self::with_cap(self.dim, window, self.source.clone(), self.condition_cap)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn coeff(&self, n: i64) -> Result<&DMatrix<f64>> {
        self.window.check(n)?;
        Ok(&self.coeffs[self.window.pos(n)])
    }

    pub fn coeff_inverse(&self, n: i64) -> Result<&DMatrix<f64>> {
        self.window.check(n)?;
        Ok(&self.inverses[self.window.pos(n)])
    }

    /// Boundary-frozen lookup, for diagnostics only.
    pub fn coeff_frozen(&self, n: i64) -> &DMatrix<f64> {
        let n = n.clamp(self.window.n_min, self.window.n_max);
        &self.coeffs[self.window.pos(n)]
    }

    /// `‖A_n − I‖` for n in the window.
    pub fn deviation(&self, n: i64) -> Result<f64> {
        let a = self.coeff(n)?;
        Ok(norm_inf(&(a - DMatrix::identity(self.dim, self.dim))))
    }
}

/// `W_n W_m⁻¹`: the ordered product `A_{n−1}···A_m` for n ≥ m, its inverse
/// `A_n⁻¹···A_{m−1}⁻¹` otherwise.
pub fn transition(sys: &LinearSystem, n: i64, m: i64) -> Result<DMatrix<f64>> {
    sys.window.check(n)?;
    sys.window.check(m)?;
    let mut acc = DMatrix::identity(sys.dim, sys.dim);
    if n >= m {
        for k in m..n {
            acc = &sys.coeffs[sys.window.pos(k)] * acc;
        }
    } else {
        for k in (n..m).rev() {
            acc = &sys.inverses[sys.window.pos(k)] * acc;
        }
    }
    Ok(acc)
}

/// `sup_n ‖A_n − I‖` over the window.
pub fn sup_deviation(sys: &LinearSystem) -> f64 {
    let id = DMatrix::<f64>::identity(sys.dim, sys.dim);
    sys.coeffs.iter().map(|a| norm_inf(&(a - &id))).fold(0.0, f64::max)
}

pub type PerturbationFn = Arc<dyn Fn(i64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub enum PerturbationKind {
    Zero,
    /// `c_n · σ(x − shift) + bias` with σ = tanh componentwise.
    Saturating {
        amplitude: Sequence,
        shift: Option<DVector<f64>>,
        bias: Option<DVector<f64>>,
    },
    Custom(PerturbationFn),
}

impl fmt::Debug for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::Zero => write!(f, "Zero"),
            PerturbationKind::Saturating { amplitude, shift, bias } => f
                .debug_struct("Saturating")
                .field("amplitude", amplitude)
                .field("shift", &shift.as_ref().map(|v| v.as_slice().to_vec()))
                .field("bias", &bias.as_ref().map(|v| v.as_slice().to_vec()))
                .finish(),
            PerturbationKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// A nonlinearity `f(n, x)` with its bound sequence `F_n ≥ |f(n, x)|` and
/// Lipschitz sequence `r_n`.
#[derive(Debug, Clone)]
pub struct Perturbation {
    dim: usize,
    kind: PerturbationKind,
    bound: Sequence,
    bound_offset: f64,
    lip: Sequence,
}

/// The saturating nonlinearity: odd, |σ| ≤ 1, global Lipschitz constant 1.
pub fn sigma(v: f64) -> f64 {
    v.tanh()
}

impl Perturbation {
    pub fn zero(dim: usize) -> Self {
        Perturbation {
            dim,
            kind: PerturbationKind::Zero,
            bound: Sequence::Constant(0.0),
            bound_offset: 0.0,
            lip: Sequence::Constant(0.0),
        }
    }

    pub fn saturating(dim: usize, amplitude: Sequence) -> Result<Self> {
        if !amplitude.is_nonnegative() {
            return Err(Error::InvalidParams("saturating amplitude must be nonnegative".into()));
        }
        Ok(Perturbation {
            dim,
            bound: amplitude.clone(),
            bound_offset: 0.0,
            lip: amplitude.clone(),
            kind: PerturbationKind::Saturating { amplitude, shift: None, bias: None },
        })
    }

    /// Replaces `σ(x)` by `σ(x − shift)`; bounds are unchanged.
    pub fn with_shift(mut self, shift: DVector<f64>) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: shift.len() });
        }
        match &mut self.kind {
            PerturbationKind::Saturating { shift: s, .. } => *s = Some(shift),
            _ => return Err(Error::InvalidParams("shift applies to the saturating family only".into())),
        }
        Ok(self)
    }

    /// Adds a constant vector; the bound grows by its norm.
    pub fn with_bias(mut self, bias: DVector<f64>) -> Result<Self> {
        if bias.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: bias.len() });
        }
        let extra = vec_norm(&bias);
        match &mut self.kind {
            PerturbationKind::Saturating { bias: b, .. } => {
                self.bound_offset = extra;
                *b = Some(bias);
            }
            _ => return Err(Error::InvalidParams("bias applies to the saturating family only".into())),
        }
        Ok(self)
    }

    pub fn custom<F>(dim: usize, f: F, bound: Sequence, lip: Sequence) -> Self
    where
        F: Fn(i64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Perturbation { dim, kind: PerturbationKind::Custom(Arc::new(f)), bound, bound_offset: 0.0, lip }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &PerturbationKind {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PerturbationKind::Zero)
    }

    pub fn eval(&self, n: i64, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            PerturbationKind::Zero => DVector::zeros(self.dim),
            PerturbationKind::Saturating { amplitude, shift, bias } => {
                let c = amplitude.value(n);
                let mut out = match shift {
                    Some(s) => x.zip_map(s, |xi, si| c * sigma(xi - si)),
                    None => x.map(|xi| c * sigma(xi)),
                };
                if let Some(b) = bias {
                    out += b;
                }
                out
            }
            PerturbationKind::Custom(f) => f(n, x),
        }
    }

    /// `F_n`
    pub fn bound(&self, n: i64) -> f64 {
        self.bound.value(n) + self.bound_offset
    }

    /// `r_n`
    pub fn lip(&self, n: i64) -> f64 {
        self.lip.value(n)
    }

    pub fn lip_seq(&self) -> &Sequence {
        &self.lip
    }

    /// Largest sampled ratios `|f(n,x)| / F_n` and
    /// `|f(n,x₁) − f(n,x₂)| / (r_n |x₁ − x₂|)`; both must stay ≤ 1.
    pub fn metadata_ratios(&self, n: i64, points: &[DVector<f64>]) -> (f64, f64) {
        let mut bound_ratio: f64 = 0.0;
        let mut lip_ratio: f64 = 0.0;
        for (i, x) in points.iter().enumerate() {
            let fx = self.eval(n, x);
            let b = self.bound(n);
            if b > 0.0 {
                bound_ratio = bound_ratio.max(vec_norm(&fx) / b);
            } else if vec_norm(&fx) > 0.0 {
                bound_ratio = f64::INFINITY;
            }
            for y in &points[i + 1..] {
                let dx = vec_norm(&(x - y));
                if dx == 0.0 {
                    continue;
                }
                let df = vec_norm(&(fx.clone() - self.eval(n, y)));
                let r = self.lip(n);
                if r > 0.0 {
                    lip_ratio = lip_ratio.max(df / (r * dx));
                } else if df > 0.0 {
                    lip_ratio = f64::INFINITY;
                }
            }
        }
        (bound_ratio, lip_ratio)
    }
}

/// Solves `x_{k+1} = A_k x + f(k, x)` for `x` by iterating
/// `x ↦ A_k⁻¹(x_{k+1} − f(k, x))`.
pub fn step_back(sys: &LinearSystem, f: &Perturbation, k: i64, next: &DVector<f64>) -> Result<DVector<f64>> {
    let inv = sys.coeff_inverse(k)?;
    let r = f.lip(k);
    let mut x = inv * next;
    if f.is_zero() || r == 0.0 {
        return Ok(inv * (next - f.eval(k, &x)));
    }
    let factor = norm_inf(inv) * r;
    if factor >= 1.0 {
        return Err(Error::BackwardNotContractive { index: k, factor });
    }
    for _ in 0..BACKWARD_MAX_ITERS {
        let x_new = inv * (next - f.eval(k, &x));
        let diff = vec_norm(&(&x_new - &x));
        x = x_new;
        if diff <= BACKWARD_TOL * (1.0 + vec_norm(&x)) {
            return Ok(x);
        }
    }
    Err(Error::NoConvergence { index: k, iterations: BACKWARD_MAX_ITERS })
}

/// `x(n, m, ξ)`: the solution of `x_{k+1} = A_k x_k + f(k, x_k)` through ξ at
/// k = m, evaluated at k = n.
pub fn propagate(sys: &LinearSystem, f: &Perturbation, m: i64, xi: &DVector<f64>, n: i64) -> Result<DVector<f64>> {
    sys.window.check(m)?;
    sys.window.check(n)?;
    if xi.len() != sys.dim {
        return Err(Error::DimensionMismatch { expected: sys.dim, got: xi.len() });
    }
    let mut x = xi.clone();
    if n >= m {
        for k in m..n {
            x = sys.coeff(k)? * &x + f.eval(k, &x);
        }
    } else {
        for k in (n..m).rev() {
            x = step_back(sys, f, k, &x)?;
        }
    }
    Ok(x)
}

/// The whole solution through ξ at m, tabulated over the window.
pub fn trajectory(sys: &LinearSystem, f: &Perturbation, m: i64, xi: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    let w = sys.window;
    w.check(m)?;
    if xi.len() != sys.dim {
        return Err(Error::DimensionMismatch { expected: sys.dim, got: xi.len() });
    }
    let mut out = vec![DVector::zeros(sys.dim); w.len()];
    out[w.pos(m)] = xi.clone();
    for k in m..w.n_max {
        let x = &out[w.pos(k)];
        out[w.pos(k + 1)] = &sys.coeffs[w.pos(k)] * x + f.eval(k, x);
    }
    for k in (w.n_min..m).rev() {
        out[w.pos(k)] = step_back(sys, f, k, &out[w.pos(k + 1)])?;
    }
    Ok(out)
}

/// `|seq_{n+1} − A_n seq_n − f(n, seq_n)|` for n = n_min..n_max−1.
pub fn recurrence_defects(sys: &LinearSystem, f: &Perturbation, seq: &[DVector<f64>]) -> Result<Vec<f64>> {
    let w = sys.window;
    if seq.len() != w.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), got: seq.len() });
    }
    Ok((w.n_min..w.n_max)
        .map(|n| {
            let i = w.pos(n);
            let pred = &sys.coeffs[i] * &seq[i] + f.eval(n, &seq[i]);
            vec_norm(&(&seq[i + 1] - pred))
        })
        .collect())
}

/// Max over the window of the recurrence defects.
pub fn solution_residual(sys: &LinearSystem, f: &Perturbation, seq: &[DVector<f64>]) -> Result<f64> {
    Ok(recurrence_defects(sys, f, seq)?.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthVerdict {
    Trivial,
    GrowsForward,
    GrowsBackward,
    GrowsBoth,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthRecord {
    pub xi: Vec<f64>,
    pub forward_growth: f64,
    pub backward_growth: f64,
    pub verdict: GrowthVerdict,
}

/// Finite-window probe that no nonzero solution of the linear system stays
/// bounded: each ξ is pushed from the certificate's base index to both ends.
pub fn scan_unbounded_growth(
    sys: &LinearSystem,
    cert: &DichotomyCertificate,
    samples: &[DVector<f64>],
    threshold: f64,
) -> Result<Vec<GrowthRecord>> {
    let w = sys.window;
    let base = cert.base_index;
    let to_end = transition(sys, w.n_max, base)?;
    let to_start = transition(sys, w.n_min, base)?;
    samples
        .iter()
        .map(|xi| {
            let size = vec_norm(xi);
            if size == 0.0 {
                return Ok(GrowthRecord {
                    xi: xi.as_slice().to_vec(),
                    forward_growth: 0.0,
                    backward_growth: 0.0,
                    verdict: GrowthVerdict::Trivial,
                });
            }
            let fwd = vec_norm(&(&to_end * xi)) / size;
            let bwd = vec_norm(&(&to_start * xi)) / size;
            let verdict = match (fwd > threshold, bwd > threshold) {
                (true, true) => GrowthVerdict::GrowsBoth,
                (true, false) => GrowthVerdict::GrowsForward,
                (false, true) => GrowthVerdict::GrowsBackward,
                (false, false) => GrowthVerdict::Inconclusive,
            };
            Ok(GrowthRecord { xi: xi.as_slice().to_vec(), forward_growth: fwd, backward_growth: bwd, verdict })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn w(a: i64, b: i64) -> Window {
        Window::new(a, b).unwrap()
    }

    fn paper_diag(c: f64, window: Window) -> LinearSystem {
        LinearSystem::from_fn(2, window, move |n| {
            let b = (-c / (1.0 + n.unsigned_abs() as f64)).exp();
            DMatrix::from_diagonal(&DVector::from_vec(vec![b, 1.0 / b]))
        })
        .unwrap()
    }

    #[test]
    fn window_rules() {
        assert!(Window::new(3, 3).is_err());
        let win = w(-30, 30);
        assert_eq!(win.len(), 61);
        assert_eq!(win.interior(), w(-24, 24));
        assert_eq!(w(-60, 60).doubled(), w(-120, 120));
        assert_eq!(win.boundary_band(), 7);
    }

    #[test]
    fn identity_transition() {
        let sys = LinearSystem::constant(DMatrix::identity(2, 2), w(-5, 5)).unwrap();
        assert_eq!(transition(&sys, 3, -2).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(transition(&sys, -4, 4).unwrap(), DMatrix::identity(2, 2));
        assert_eq!(sup_deviation(&sys), 0.0);
    }

    #[test]
    fn half_diag_transition_entry() {
        let sys = LinearSystem::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 2.0])), w(-5, 5)).unwrap();
        let t = transition(&sys, 2, 0).unwrap();
        assert_eq!(t[(0, 0)], 0.25);
        assert_eq!(t[(1, 1)], 4.0);
        assert_eq!(sup_deviation(&sys), 1.0);
    }

    #[test]
    fn transition_out_of_window() {
        let sys = LinearSystem::constant(DMatrix::identity(1, 1), w(0, 4)).unwrap();
        assert!(matches!(transition(&sys, 5, 0), Err(Error::IndexOutOfWindow { index: 5, .. })));
        assert!(sys.coeff(-1).is_err());
        assert_eq!(sys.coeff_frozen(-10), sys.coeff(0).unwrap());
    }

    #[test]
    fn singular_coefficient_rejected() {
        let err = LinearSystem::from_fn(2, w(-2, 2), |n| {
            if n == 1 {
                DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0])
            } else {
                DMatrix::identity(2, 2)
            }
        })
        .unwrap_err();
        assert!(matches!(err, Error::SingularCoefficient { index: 1, .. }));
        let nearly = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-14]);
        let err = LinearSystem::constant(nearly, w(0, 3)).unwrap_err();
        assert!(matches!(err, Error::SingularCoefficient { .. }));
    }

    #[test]
    fn paper_diag_deviation_closed_form() {
        let win = w(-10, 10);
        let sys = paper_diag(1.0, win);
        let expected = win
            .indices()
            .map(|n| {
                let b = (-1.0 / (1.0 + n.unsigned_abs() as f64)).exp();
                (1.0 - b).max(1.0 / b - 1.0)
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(sup_deviation(&sys), expected, max_relative = 1e-15);
    }

    #[test]
    fn unperturbed_propagation_matches_transition() {
        let sys = paper_diag(1.0, w(-8, 8));
        let f = Perturbation::zero(2);
        let xi = DVector::from_vec(vec![0.3, -1.2]);
        for (m, n) in [(0, 5), (3, -6), (-8, 8), (2, 2)] {
            let p = propagate(&sys, &f, m, &xi, n).unwrap();
            let t = transition(&sys, n, m).unwrap() * &xi;
            assert!(vec_norm(&(p - t)) < 1e-10);
        }
        assert_eq!(propagate(&sys, &f, 1, &xi, 1).unwrap(), xi);
    }

    #[test]
    fn scalar_round_trip() {
        // d = 1, A = 1/2, saturating f: forward then backward returns the start.
        let sys = LinearSystem::constant(DMatrix::from_element(1, 1, 0.5), w(0, 10)).unwrap();
        let f = Perturbation::saturating(1, Sequence::constant(0.1)).unwrap();
        let xi = DVector::from_element(1, 0.7);
        let fwd = propagate(&sys, &f, 0, &xi, 10).unwrap();
        let back = propagate(&sys, &f, 10, &fwd, 0).unwrap();
        assert!((back[0] - 0.7).abs() < 1e-8, "{}", back[0]);
    }

    #[test]
    fn backward_needs_contraction() {
        let sys = LinearSystem::constant(DMatrix::from_element(1, 1, 0.5), w(0, 5)).unwrap();
        let f = Perturbation::saturating(1, Sequence::constant(0.6)).unwrap();
        let err = propagate(&sys, &f, 3, &DVector::from_element(1, 1.0), 0).unwrap_err();
        assert!(matches!(err, Error::BackwardNotContractive { .. }));
    }

    #[test]
    fn residual_detects_injected_defect() {
        let sys = paper_diag(1.0, w(-6, 6));
        let f = Perturbation::saturating(2, Sequence::constant(0.05)).unwrap();
        let mut seq = trajectory(&sys, &f, 0, &DVector::from_vec(vec![0.5, 0.2])).unwrap();
        assert!(solution_residual(&sys, &f, &seq).unwrap() <= 1e-12);
        seq[8][1] += 1e-3;
        let res = solution_residual(&sys, &f, &seq).unwrap();
        assert!(res >= 1e-3 * 0.9, "{res}");
        let zero = vec![DVector::zeros(2); 13];
        assert_eq!(solution_residual(&sys, &Perturbation::zero(2), &zero).unwrap(), 0.0);
    }

    #[test]
    fn saturating_metadata_is_tight() {
        let f = Perturbation::saturating(2, Sequence::constant(0.3)).unwrap();
        let pts: Vec<_> = (0..20).map(|i| DVector::from_vec(vec![0.01 * i as f64, -0.005 * i as f64])).collect();
        let (b, l) = f.metadata_ratios(0, &pts);
        assert!(b <= 1.0 && l <= 1.0);
        assert!(l > 0.95, "{l}");
    }

    #[test]
    fn growth_scan_on_harmonic_diagonal() {
        let sys = paper_diag(1.0, w(-30, 30));
        let cert = crate::dichotomy::DichotomyCertificate::generalized(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])),
            1.0,
            Sequence::harmonic(1.0, 1.0),
        )
        .unwrap();
        let samples = vec![DVector::zeros(2), DVector::from_vec(vec![0.0, 1.0]), DVector::from_vec(vec![1.0, 0.0])];
        let rep = scan_unbounded_growth(&sys, &cert, &samples, 10.0).unwrap();
        assert_eq!(rep[0].verdict, GrowthVerdict::Trivial);
        assert_eq!(rep[1].verdict, GrowthVerdict::GrowsForward);
        assert_eq!(rep[2].verdict, GrowthVerdict::GrowsBackward);
    }
}
