//! Generalized and α-exponential dichotomies: certificates, the Green
//! function, the weighted operator `N(n, g)` and the checks built on it.
//!
//! Decay exponents of the dichotomy inequalities are half-open: the bound
//! on `‖W_n P W_m⁻¹‖` for n ≥ m is `K exp(−Σ_{j=m}^{n−1} a_j)`, and on
//! `‖W_n (I−P) W_m⁻¹‖` for n < m it is `K exp(−Σ_{j=n}^{m−1} a_j)`, so the
//! exponent counts exactly one rate per step of the transition product.
//! `N(n, g)` keeps its own index ranges: `Σ_{j=m+1}^{n}` to the left and
//! `Σ_{j=n}^{m+1}` to the right.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_sys::{norm_inf, transition, LinearSystem, Perturbation, Window};
use crate::sequence::Sequence;

pub const PROJECTION_TOL: f64 = 1e-10;
pub const DEFAULT_CERT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyKind {
    Generalized,
    Alpha(f64),
}

/// A claimed dichotomy `(P, K, a_j)` for the linear system, with `P` given at
/// the base index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CertificateRepr", into = "CertificateRepr")]
pub struct DichotomyCertificate {
    pub projection: DMatrix<f64>,
    pub k: f64,
    pub rates: Sequence,
    pub kind: DichotomyKind,
    pub base_index: i64,
}

impl DichotomyCertificate {
    pub fn new(
        projection: DMatrix<f64>,
        k: f64,
        rates: Sequence,
        kind: DichotomyKind,
        base_index: i64,
    ) -> Result<Self> {
        if projection.nrows() != projection.ncols() {
            return Err(Error::DimensionMismatch { expected: projection.nrows(), got: projection.ncols() });
        }
        if !(k >= 1.0) {
            return Err(Error::InvalidParams(format!("K must be ≥ 1, got {k}")));
        }
        if !rates.is_nonnegative() {
            return Err(Error::InvalidParams("rates a_j must be nonnegative".into()));
        }
        if let DichotomyKind::Alpha(alpha) = kind {
            if !(alpha > 0.0) || rates != Sequence::Constant(alpha) {
                return Err(Error::InvalidParams("an α-dichotomy needs a_j ≡ α > 0".into()));
            }
        }
        let defect = projection_defect(&projection);
        if defect > PROJECTION_TOL {
            return Err(Error::NotAProjection { defect });
        }
        Ok(DichotomyCertificate { projection, k, rates, kind, base_index })
    }

    pub fn generalized(projection: DMatrix<f64>, k: f64, rates: Sequence) -> Result<Self> {
        Self::new(projection, k, rates, DichotomyKind::Generalized, 0)
    }

    pub fn alpha(projection: DMatrix<f64>, k: f64, alpha: f64) -> Result<Self> {
        Self::new(projection, k, Sequence::Constant(alpha), DichotomyKind::Alpha(alpha), 0)
    }

    pub fn with_base_index(mut self, base_index: i64) -> Self {
        self.base_index = base_index;
        self
    }

    pub fn dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn rate(&self, j: i64) -> f64 {
        self.rates.value(j)
    }

    /// `Σ_{j=lo}^{hi} a_j`, zero for an empty range.
    pub fn rate_sum(&self, lo: i64, hi: i64) -> f64 {
        (lo..=hi).map(|j| self.rates.value(j)).sum()
    }
}

fn projection_defect(p: &DMatrix<f64>) -> f64 {
    norm_inf(&(p * p - p))
}

#[derive(Serialize, Deserialize)]
struct CertificateRepr {
    #[serde(rename = "P")]
    projection: Vec<f64>,
    #[serde(rename = "K")]
    k: f64,
    a: RatesRepr,
    kind: DichotomyKind,
    #[serde(default)]
    base_index: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum RatesRepr {
    Constant {
        value: f64,
    },
    Table {
        start: i64,
        values: Vec<f64>,
    },
    Harmonic {
        scale: f64,
        #[serde(default = "one")]
        power: f64,
    },
    Geometric {
        scale: f64,
        ratio: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl TryFrom<CertificateRepr> for DichotomyCertificate {
    type Error = Error;

    fn try_from(r: CertificateRepr) -> Result<Self> {
        let d = (r.projection.len() as f64).sqrt().round() as usize;
        if d == 0 || d * d != r.projection.len() {
            return Err(Error::InvalidParams(format!("P must have d² entries, got {}", r.projection.len())));
        }
        let projection = DMatrix::from_row_slice(d, d, &r.projection);
        let rates = match r.a {
            RatesRepr::Constant { value } => Sequence::Constant(value),
            RatesRepr::Table { start, values } => Sequence::table(start, values)?,
            RatesRepr::Harmonic { scale, power } => Sequence::Harmonic { scale, power },
            RatesRepr::Geometric { scale, ratio } => Sequence::Geometric { scale, ratio },
        };
        DichotomyCertificate::new(projection, r.k, rates, r.kind, r.base_index)
    }
}

impl From<DichotomyCertificate> for CertificateRepr {
    fn from(c: DichotomyCertificate) -> Self {
        let d = c.projection.nrows();
        let projection = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| c.projection[(i, j)]).collect();
        let a = match c.rates {
            Sequence::Constant(value) => RatesRepr::Constant { value },
            Sequence::Table { start, values } => RatesRepr::Table { start, values },
            Sequence::Harmonic { scale, power } => RatesRepr::Harmonic { scale, power },
            Sequence::Geometric { scale, ratio } => RatesRepr::Geometric { scale, ratio },
        };
        CertificateRepr { projection, k: c.k, a, kind: c.kind, base_index: c.base_index }
    }
}

/// `G(n, m)` for every pair of window indices, stored flat.
#[derive(Debug, Clone)]
pub struct GreenTable {
    window: Window,
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl GreenTable {
    pub fn build(sys: &LinearSystem, cert: &DichotomyCertificate) -> Result<Self> {
        let w = sys.window();
        let d = sys.dim();
        if cert.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cert.dim() });
        }
        let n0 = cert.base_index;
        w.check(n0)?;
        let len = w.len();
        let id = DMatrix::<f64>::identity(d, d);
        let p = &cert.projection;
        let q = &id - p;

        // T(n, n0) and T(n0, m) by one sweep in each direction.
        let mut to_base = vec![id.clone(); len];
        let mut from_base = vec![id.clone(); len];
        for n in n0..w.n_max {
            to_base[w.pos(n + 1)] = sys.coeff(n)? * &to_base[w.pos(n)];
            from_base[w.pos(n + 1)] = &from_base[w.pos(n)] * sys.coeff_inverse(n)?;
        }
        for n in (w.n_min..n0).rev() {
            to_base[w.pos(n)] = sys.coeff_inverse(n)? * &to_base[w.pos(n + 1)];
            from_base[w.pos(n)] = &from_base[w.pos(n + 1)] * sys.coeff(n)?;
        }
        let stable: Vec<_> = to_base.iter().map(|t| t * p).collect();
        let unstable: Vec<_> = to_base.iter().map(|t| -(t * &q)).collect();

        let dd = d * d;
        let mut data = vec![0.0; len * len * dd];
        let mut norms = vec![0.0; len * len];
        for i in 0..len {
            for j in 0..len {
                let g = if i >= j { &stable[i] * &from_base[j] } else { &unstable[i] * &from_base[j] };
                let off = (i * len + j) * dd;
                for r in 0..d {
                    for c in 0..d {
                        data[off + r * d + c] = g[(r, c)];
                    }
                }
                norms[i * len + j] = norm_inf(&g);
            }
        }
        Ok(GreenTable { window: w, dim: d, data, norms })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, n: i64, m: i64) -> Result<DMatrix<f64>> {
        self.window.check(n)?;
        self.window.check(m)?;
        let off = self.offset(n, m);
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &self.data[off..off + self.dim * self.dim]))
    }

    pub fn norm(&self, n: i64, m: i64) -> f64 {
        self.norms[self.window.pos(n) * self.window.len() + self.window.pos(m)]
    }

    fn offset(&self, n: i64, m: i64) -> usize {
        (self.window.pos(n) * self.window.len() + self.window.pos(m)) * self.dim * self.dim
    }

    /// `out += G(n, m) v`
    pub fn apply_add(&self, n: i64, m: i64, v: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let off = self.offset(n, m);
        let g = &self.data[off..off + d * d];
        for r in 0..d {
            let row = &g[r * d..(r + 1) * d];
            out[r] += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Windowed Green series `Σ_{k=n_min}^{n_max−1} G(n, k+1) q_k` at every
    /// n, with `q` stored flat by window position.
    pub fn series(&self, q: &[f64]) -> Vec<f64> {
        let w = self.window;
        let d = self.dim;
        let mut out = vec![0.0; w.len() * d];
        for n in w.indices() {
            let i = w.pos(n);
            let acc = &mut out[i * d..(i + 1) * d];
            for k in w.n_min..w.n_max {
                let kp = w.pos(k);
                self.apply_add(n, k + 1, &q[kp * d..(kp + 1) * d], acc);
            }
        }
        out
    }

    /// `Σ_k ‖G(n, k+1)‖ s_k` over the window: the exact operator bound of the
    /// windowed Green series against weights `s`.
    pub fn weighted_norm_sum(&self, n: i64, s: &dyn Fn(i64) -> f64) -> f64 {
        let w = self.window;
        (w.n_min..w.n_max).map(|k| self.norm(n, k + 1) * s(k)).sum()
    }
}

/// `G(n, m)` straight from transition products.
pub fn green(sys: &LinearSystem, cert: &DichotomyCertificate, n: i64, m: i64) -> Result<DMatrix<f64>> {
    let n0 = cert.base_index;
    let left = transition(sys, n, n0)?;
    let right = transition(sys, n0, m)?;
    if n >= m {
        Ok(left * &cert.projection * right)
    } else {
        let q = DMatrix::<f64>::identity(sys.dim(), sys.dim()) - &cert.projection;
        Ok(-(left * q * right))
    }
}

/// Half-open dichotomy bound for `‖G(n, m)‖`.
pub fn gdd_bound(cert: &DichotomyCertificate, n: i64, m: i64) -> f64 {
    if n >= m {
        cert.k * (-cert.rate_sum(m, n - 1)).exp()
    } else {
        cert.k * (-cert.rate_sum(n, m - 1)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceVerdict {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub center: i64,
    /// `(q, Σ_{j=center}^{q} a_j)`
    pub forward: Vec<(i64, f64)>,
    /// `(p, Σ_{j=p}^{center} a_j)`
    pub backward: Vec<(i64, f64)>,
    pub forward_ratio: f64,
    pub backward_ratio: f64,
    pub forward_rate: f64,
    pub backward_rate: f64,
    pub verdict: DivergenceVerdict,
}

const DIVERGENCE_RATIO: f64 = 0.6;

/// Partial sums of `a_j` outward from the window center. Divergence cannot be
/// proved on a finite window, so the verdict only says whether the outermost
/// increments keep pace with the ones before them.
pub fn check_divergence(cert: &DichotomyCertificate, window: Window) -> DivergenceReport {
    let center = window.n_min + window.span() / 2;
    let mut forward = Vec::new();
    let mut acc = 0.0;
    for q in center..=window.n_max {
        acc += cert.rate(q);
        forward.push((q, acc));
    }
    let mut backward = Vec::new();
    acc = 0.0;
    for p in (window.n_min..=center).rev() {
        acc += cert.rate(p);
        backward.push((p, acc));
    }

    let ql = ((window.n_max - center) / 4).max(1);
    let outer_fwd = cert.rate_sum(window.n_max - ql + 1, window.n_max);
    let inner_fwd = cert.rate_sum(window.n_max - 2 * ql + 1, window.n_max - ql);
    let outer_bwd = cert.rate_sum(window.n_min, window.n_min + ql - 1);
    let inner_bwd = cert.rate_sum(window.n_min + ql, window.n_min + 2 * ql - 1);
    let ratio = |outer: f64, inner: f64| {
        if inner > 0.0 {
            outer / inner
        } else if outer > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    let forward_ratio = ratio(outer_fwd, inner_fwd);
    let backward_ratio = ratio(outer_bwd, inner_bwd);
    let forward_rate = outer_fwd / ql as f64;
    let backward_rate = outer_bwd / ql as f64;
    let consistent = forward_ratio >= DIVERGENCE_RATIO
        && backward_ratio >= DIVERGENCE_RATIO
        && forward_rate > 0.0
        && backward_rate > 0.0;
    DivergenceReport {
        center,
        forward,
        backward,
        forward_ratio,
        backward_ratio,
        forward_rate,
        backward_rate,
        verdict: if consistent { DivergenceVerdict::Consistent } else { DivergenceVerdict::Inconsistent },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    /// Worst `(‖G(n,m)‖ − bound) / bound`; positive means violated.
    pub max_violation: f64,
    pub worst_pair: (i64, i64),
    pub pairs_checked: usize,
    pub tolerance: f64,
    pub divergence_trend: DivergenceReport,
    pub passed: bool,
}

fn relative_violation(lhs: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        (lhs - bound) / bound
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn scan_pairs(table: &GreenTable, bound: impl Fn(i64, i64) -> f64) -> (f64, (i64, i64), usize) {
    let w = table.window();
    let mut worst = f64::NEG_INFINITY;
    let mut worst_pair = (w.n_min, w.n_min);
    let mut count = 0;
    for n in w.indices() {
        for m in w.indices() {
            let v = relative_violation(table.norm(n, m), bound(n, m));
            count += 1;
            if v > worst {
                worst = v;
                worst_pair = (n, m);
            }
        }
    }
    (worst, worst_pair, count)
}

/// Checks the dichotomy inequalities for every ordered pair in the window.
pub fn verify_gdd(sys: &LinearSystem, cert: &DichotomyCertificate, tol: f64) -> Result<CertReport> {
    let defect = projection_defect(&cert.projection);
    if defect > PROJECTION_TOL {
        return Err(Error::NotAProjection { defect });
    }
    let table = GreenTable::build(sys, cert)?;
    Ok(gdd_report(&table, cert, sys.window(), tol))
}

fn gdd_report(table: &GreenTable, cert: &DichotomyCertificate, window: Window, tol: f64) -> CertReport {
    // Prefix sums keep the O(W²) scan linear in the pair count.
    let start = window.n_min;
    let mut prefix = vec![0.0];
    for j in window.indices() {
        prefix.push(prefix.last().unwrap() + cert.rate(j));
    }
    let sum = |lo: i64, hi: i64| {
        if hi < lo {
            0.0
        } else {
            prefix[(hi - start + 1) as usize] - prefix[(lo - start) as usize]
        }
    };
    let (max_violation, worst_pair, pairs_checked) =
        scan_pairs(
            table,
            |n, m| {
                if n >= m {
                    cert.k * (-sum(m, n - 1)).exp()
                } else {
                    cert.k * (-sum(n, m - 1)).exp()
                }
            },
        );
    CertReport {
        max_violation,
        worst_pair,
        pairs_checked,
        tolerance: tol,
        divergence_trend: check_divergence(cert, window),
        passed: max_violation <= tol,
    }
}

/// The α-exponential dichotomy check `‖G(n,m)‖ ≤ K e^{−α|n−m|}`.
pub fn verify_alpha_ed(sys: &LinearSystem, cert: &DichotomyCertificate, tol: f64) -> Result<CertReport> {
    let DichotomyKind::Alpha(alpha) = cert.kind else {
        return Err(Error::InvalidParams("α-ED check needs an α certificate".into()));
    };
    let defect = projection_defect(&cert.projection);
    if defect > PROJECTION_TOL {
        return Err(Error::NotAProjection { defect });
    }
    let table = GreenTable::build(sys, cert)?;
    let (max_violation, worst_pair, pairs_checked) =
        scan_pairs(&table, |n, m| cert.k * (-alpha * (n - m).abs() as f64).exp());
    Ok(CertReport {
        max_violation,
        worst_pair,
        pairs_checked,
        tolerance: tol,
        divergence_trend: check_divergence(cert, sys.window()),
        passed: max_violation <= tol,
    })
}

/// A linear system bundled with a certificate that passed [`verify_gdd`],
/// and the Green table built from them.
#[derive(Debug, Clone)]
pub struct Dichotomy {
    sys: LinearSystem,
    cert: DichotomyCertificate,
    green: Arc<GreenTable>,
    report: CertReport,
}

impl Dichotomy {
    pub fn certify(sys: LinearSystem, cert: DichotomyCertificate, tol: f64) -> Result<Self> {
        let defect = projection_defect(&cert.projection);
        if defect > PROJECTION_TOL {
            return Err(Error::NotAProjection { defect });
        }
        let green = GreenTable::build(&sys, &cert)?;
        let report = gdd_report(&green, &cert, sys.window(), tol);
        if !report.passed {
            return Err(Error::CertificateRejected {
                violation: report.max_violation,
                n: report.worst_pair.0,
                m: report.worst_pair.1,
            });
        }
        Ok(Dichotomy { sys, cert, green: Arc::new(green), report })
    }

    pub fn sys(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn cert(&self) -> &DichotomyCertificate {
        &self.cert
    }

    pub fn green(&self) -> &GreenTable {
        &self.green
    }

    pub fn report(&self) -> &CertReport {
        &self.report
    }

    pub fn window(&self) -> Window {
        self.sys.window()
    }

    /// Smallest rate in the outer band at each end `(left, right)`; the
    /// frozen-boundary decay assumed outside the window.
    pub fn boundary_rates(&self) -> (f64, f64) {
        boundary_rates(&self.cert, self.window())
    }

    /// Bound on the part of `Σ_k G(n, k+1) q_k` that the window drops, given
    /// bounds `(left, right)` on `|q_k|` outside it.
    pub fn green_tail(&self, n: i64, q_out: (f64, f64)) -> f64 {
        let w = self.window();
        let (a_l, a_r) = self.boundary_rates();
        let k = self.cert.k;
        let d = self.cert.dim();
        // G vanishes on a side whose projection is trivial.
        let p = &self.cert.projection;
        let q_out = (
            if p.iter().all(|v| *v == 0.0) { 0.0 } else { q_out.0 },
            if *p == DMatrix::identity(d, d) { 0.0 } else { q_out.1 },
        );
        let left = if q_out.0 == 0.0 {
            0.0
        } else if a_l <= 0.0 {
            f64::INFINITY
        } else {
            k * q_out.0 * (-self.cert.rate_sum(w.n_min, n - 1)).exp() / (1.0 - (-a_l).exp())
        };
        let right = if q_out.1 == 0.0 {
            0.0
        } else if a_r <= 0.0 {
            f64::INFINITY
        } else {
            k * q_out.1 * (-self.cert.rate_sum(n, w.n_max - 1) - a_r).exp() / (1.0 - (-a_r).exp())
        };
        left + right
    }
}

pub fn boundary_rates(cert: &DichotomyCertificate, window: Window) -> (f64, f64) {
    let band = window.boundary_band();
    let left = (window.n_min..window.n_min + band).map(|j| cert.rate(j)).fold(f64::INFINITY, f64::min);
    let right = (window.n_max - band + 1..=window.n_max).map(|j| cert.rate(j)).fold(f64::INFINITY, f64::min);
    (left, right)
}

/// Largest value of `g` in the outer band at each end.
pub fn boundary_values(window: Window, g: &dyn Fn(i64) -> f64) -> (f64, f64) {
    let band = window.boundary_band();
    let left = (window.n_min..window.n_min + band).map(g).fold(0.0, f64::max);
    let right = (window.n_max - band + 1..=window.n_max).map(g).fold(0.0, f64::max);
    (left, right)
}

/// A windowed sum together with a bound on what the window drops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NValue {
    pub value: f64,
    pub tail: f64,
}

impl NValue {
    pub fn upper(&self) -> f64 {
        self.value + self.tail
    }
}

/// The two weighted sums of `N(n, ·)` restricted to `m ≤ left_upto` and
/// `m ≥ right_from`; in-window terms use `g`, the dropped terms are bounded
/// with `g_out` and the frozen boundary rates.
pub fn weighted_tails(
    cert: &DichotomyCertificate,
    window: Window,
    n: i64,
    left_upto: i64,
    right_from: i64,
    g: &dyn Fn(i64) -> f64,
    g_out: (f64, f64),
) -> NValue {
    let k = cert.k;
    let (a_l, a_r) = boundary_rates(cert, window);
    let mut value = 0.0;

    // Left: Σ_{m ≤ left_upto} K exp(−Σ_{j=m+1}^{n} a_j) g_m, walking m downward.
    let mut expo = 0.0;
    let mut m = n - 1;
    while m >= window.n_min {
        expo += cert.rate(m + 1);
        if m <= left_upto {
            value += k * (-expo).exp() * g(m);
        }
        m -= 1;
    }
    // Right: Σ_{m ≥ right_from} K exp(−Σ_{j=n}^{m+1} a_j) g_m.
    let mut expo = cert.rate(n);
    for m in n..=window.n_max {
        expo += cert.rate(m + 1);
        if m >= right_from {
            value += k * (-expo).exp() * g(m);
        }
    }

    let geometric = |a: f64, c: f64, decay: f64| {
        if c == 0.0 {
            0.0
        } else if a <= 0.0 {
            f64::INFINITY
        } else {
            k * c * (-decay).exp() / (1.0 - (-a).exp())
        }
    };
    let left_shift = (window.n_min - 1 - left_upto).max(0) as f64 * a_l;
    let right_shift = (right_from - window.n_max - 1).max(0) as f64 * a_r;
    let tail = geometric(a_l, g_out.0, cert.rate_sum(window.n_min, n) + left_shift)
        + geometric(a_r, g_out.1, cert.rate_sum(n, window.n_max) + 2.0 * a_r + right_shift);
    NValue { value, tail }
}

/// `N(n, g)` truncated to the window, with its tail bound.
pub fn n_operator(cert: &DichotomyCertificate, window: Window, g: &dyn Fn(i64) -> f64, n: i64) -> NValue {
    let g_out = boundary_values(window, g);
    weighted_tails(cert, window, n, n - 1, n, g, g_out)
}

/// `N(n, g)` at every window index.
pub fn n_operator_all(cert: &DichotomyCertificate, window: Window, g: &dyn Fn(i64) -> f64) -> Vec<NValue> {
    window.indices().map(|n| n_operator(cert, window, g, n)).collect()
}

fn sup_over(values: &[NValue]) -> NValue {
    values.iter().fold(NValue { value: 0.0, tail: 0.0 }, |acc, v| NValue {
        value: acc.value.max(v.value),
        tail: acc.tail.max(v.tail),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct H23Report {
    /// `max_n N(n, F + G)`
    pub b: f64,
    pub b_tail: f64,
    /// `max_n N(n, r)`
    pub theta: f64,
    pub theta_tail: f64,
    pub passed: bool,
}

/// Bound `B` and contraction constant `θ` from the perturbation metadata.
pub fn check_h2_h3(
    cert: &DichotomyCertificate,
    window: Window,
    big_f: &dyn Fn(i64) -> f64,
    big_g: &dyn Fn(i64) -> f64,
    r: &dyn Fn(i64) -> f64,
) -> H23Report {
    let fg = |n: i64| big_f(n) + big_g(n);
    let b = sup_over(&n_operator_all(cert, window, &fg));
    let theta = sup_over(&n_operator_all(cert, window, r));
    H23Report {
        b: b.value,
        b_tail: b.tail,
        theta: theta.value,
        theta_tail: theta.tail,
        passed: theta.value + theta.tail < 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailHypothesis {
    /// `Δ_k = g(k,u+x) − g(k,u'+x') + f(k,x') − f(k,x)`
    H4,
    /// `Δ̄_k = f(k,u+x) − f(k,u'+x') + g(k,x) − g(k,x')`
    H5,
}

#[derive(Debug, Clone)]
pub struct TailSample {
    pub u: nalgebra::DVector<f64>,
    pub u2: nalgebra::DVector<f64>,
    pub x: nalgebra::DVector<f64>,
    pub x2: nalgebra::DVector<f64>,
}

/// Max over samples of the J-truncated tail sums in the uniform-convergence
/// hypotheses. Out-of-window terms are bounded through `|Δ_k| ≤ 2(F_k + G_k)`.
#[allow(clippy::too_many_arguments)]
pub fn h4_h5_tail(
    cert: &DichotomyCertificate,
    window: Window,
    f: &Perturbation,
    g: &Perturbation,
    which: TailHypothesis,
    samples: &[TailSample],
    j: i64,
    n: i64,
) -> Result<NValue> {
    if j < 1 {
        return Err(Error::InvalidParams("J must be ≥ 1".into()));
    }
    window.check(n)?;
    let bound2 = |k: i64| 2.0 * (f.bound(k) + g.bound(k));
    let g_out = boundary_values(window, &bound2);
    let (first, second) = match which {
        TailHypothesis::H4 => (g, f),
        TailHypothesis::H5 => (f, g),
    };
    let mut worst = NValue { value: 0.0, tail: 0.0 };
    for s in samples {
        let delta = |k: i64| {
            let d = first.eval(k, &(&s.u + &s.x)) - first.eval(k, &(&s.u2 + &s.x2)) + second.eval(k, &s.x2)
                - second.eval(k, &s.x);
            crate::lin_sys::vec_norm(&d)
        };
        let v = weighted_tails(cert, window, n, n - 1 - j, n + j, &delta, g_out);
        worst.value = worst.value.max(v.value);
        worst.tail = worst.tail.max(v.tail);
    }
    Ok(worst)
}

/// `sup_n (1/2L) Σ_{k=n−L}^{n+L} r_k` over the n whose span fits the window.
pub fn stepanov_norm(r: &dyn Fn(i64) -> f64, l: i64, window: Window) -> Result<f64> {
    if l < 1 {
        return Err(Error::InvalidParams("L must be ≥ 1".into()));
    }
    if 2 * l > window.span() {
        return Err(Error::WindowTooNarrow(format!("no n in {window} admits the span ±{l}")));
    }
    let sup = (window.n_min + l..=window.n_max - l)
        .map(|n| (n - l..=n + l).map(r).sum::<f64>() / (2 * l) as f64)
        .fold(0.0, f64::max);
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub m: i64,
    pub t: i64,
    /// `(1/T) Σ_{k=m}^{m+T} a_k`
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaRejection {
    pub alpha: f64,
    pub counterexample: Option<Segment>,
    pub inconclusive: bool,
}

/// For each α, the shortest segment `[m, m+T]` in the window with
/// `Σ_{k=m}^{m+T} a_k < αT`, which rules out `Σ a ≥ α(n − m)`.
pub fn alpha_rejection_scan(
    cert: &DichotomyCertificate,
    window: Window,
    alphas: &[f64],
) -> Result<Vec<AlphaRejection>> {
    if cert.kind != DichotomyKind::Generalized {
        return Err(Error::InvalidParams("rejection scan expects a generalized certificate".into()));
    }
    let mut prefix = vec![0.0];
    for j in window.indices() {
        prefix.push(prefix.last().unwrap() + cert.rate(j));
    }
    let seg_sum = |m: i64, t: i64| prefix[window.pos(m + t) + 1] - prefix[window.pos(m)];
    let mut order: Vec<i64> = window.indices().collect();
    order.sort_by_key(|m| (m.abs(), *m));

    Ok(alphas
        .iter()
        .map(|&alpha| {
            let found = (1..=window.span()).find_map(|t| {
                order
                    .iter()
                    .copied()
                    .filter(|&m| m + t <= window.n_max)
                    .find(|&m| seg_sum(m, t) < alpha * t as f64)
                    .map(|m| Segment { m, t, average: seg_sum(m, t) / t as f64 })
            });
            AlphaRejection { alpha, inconclusive: found.is_none(), counterexample: found }
        })
        .collect())
}
