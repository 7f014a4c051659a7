//! Bounded solutions of `z_{n+1} = A_n z_n + q_n` and of
//! `z_{n+1} = A_n z_n + q(n, z_n)` as windowed Green series.
//!
//! A windowed series `Σ_{k=n_min}^{n_max−1} G(n, k+1) q_k` satisfies the
//! recurrence exactly for n_min ≤ n < n_max, so truncation only shows up in
//! the comparison with the solution on ℤ. That gap is what `tail` bounds.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dichotomy::{boundary_values, n_operator_all, Dichotomy};
use crate::error::{Error, Result};
use crate::lin_sys::{vec_norm, Window};

pub const DEFAULT_EPS: f64 = 1e-9;
pub const DEFAULT_ITERATION_CAP: usize = 10_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundedSolution {
    pub window: Window,
    pub values: Vec<DVector<f64>>,
    /// Largest recurrence defect over the interior.
    pub residual: f64,
    pub sup_norm: f64,
    pub picard_iters: usize,
    /// Largest entry of `tail` over the interior.
    pub tail_budget: f64,
    /// Per-index bound on the distance to the solution on ℤ.
    pub tail: Vec<f64>,
    /// Successive-difference ratios of the Picard iterates.
    pub ratios: Vec<f64>,
    pub last_step: f64,
    pub constants: Constants,
}

impl BoundedSolution {
    pub fn value(&self, n: i64) -> Result<&DVector<f64>> {
        self.window.check(n)?;
        Ok(&self.values[self.window.pos(n)])
    }

    pub fn interior_sup(&self) -> f64 {
        self.window.interior().indices().map(|n| vec_norm(&self.values[self.window.pos(n)])).fold(0.0, f64::max)
    }
}

/// Bound and contraction constants for a forcing family: `B̃ = max N(n, Q)`
/// and `θ = max N(n, r)`, alongside the same sums taken against the Green
/// table norms of the window (`*_win`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub bound_n: f64,
    pub theta_n: f64,
    pub bound_win: f64,
    pub theta_win: f64,
}

impl Constants {
    pub fn compute(dich: &Dichotomy, big_q: &dyn Fn(i64) -> f64, r: &dyn Fn(i64) -> f64) -> Self {
        let w = dich.window();
        let sup =
            |s: &dyn Fn(i64) -> f64| n_operator_all(dich.cert(), w, s).iter().map(|v| v.value).fold(0.0, f64::max);
        let win =
            |s: &dyn Fn(i64) -> f64| w.indices().map(|n| dich.green().weighted_norm_sum(n, s)).fold(0.0, f64::max);
        Constants { bound_n: sup(big_q), theta_n: sup(r), bound_win: win(big_q), theta_win: win(r) }
    }

    pub fn bound(&self) -> f64 {
        self.bound_n.max(self.bound_win)
    }

    pub fn theta(&self) -> f64 {
        self.theta_n.max(self.theta_win)
    }
}

#[derive(Debug, Clone, Default)]
pub struct LinearOptions {
    /// Bounds `(left, right)` on `|q_k|` outside the window; defaults to the
    /// largest values in the outer band.
    pub outer_bound: Option<(f64, f64)>,
    /// Fail with `TailBudgetExceeded` above this.
    pub max_tail: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NonlinearOptions {
    pub eps: f64,
    pub max_iters: usize,
    pub seed: Option<Vec<DVector<f64>>>,
    pub outer_bound: Option<(f64, f64)>,
    pub max_tail: Option<f64>,
}

impl Default for NonlinearOptions {
    fn default() -> Self {
        NonlinearOptions {
            eps: DEFAULT_EPS,
            max_iters: DEFAULT_ITERATION_CAP,
            seed: None,
            outer_bound: None,
            max_tail: None,
        }
    }
}

fn flatten(values: impl Iterator<Item = DVector<f64>>, d: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for v in values {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
        out.extend_from_slice(v.as_slice());
    }
    Ok(out)
}

fn unflatten(flat: &[f64], d: usize) -> Vec<DVector<f64>> {
    flat.chunks(d).map(DVector::from_column_slice).collect()
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sup_flat(a: &[f64], d: usize) -> f64 {
    a.chunks(d).map(|c| c.iter().fold(0.0, |m: f64, v| m.max(v.abs()))).fold(0.0, f64::max)
}

/// Per-index truncation bound: the fixed point of `δ = t + M δ` with
/// `M_{nk} = ‖G(n,k+1)‖ r_k`, where `t` bounds the dropped Green tails.
fn tail_vector(dich: &Dichotomy, q_out: (f64, f64), r: &dyn Fn(i64) -> f64) -> Vec<f64> {
    let w = dich.window();
    let t: Vec<f64> = w.indices().map(|n| dich.green_tail(n, q_out)).collect();
    let rs: Vec<f64> = (w.n_min..w.n_max).map(r).collect();
    if rs.iter().all(|&v| v == 0.0) || t.iter().all(|&v| v == 0.0) || t.iter().any(|v| !v.is_finite()) {
        return t;
    }
    let green = dich.green();
    let mut delta = t.clone();
    for _ in 0..1000 {
        let next: Vec<f64> = w
            .indices()
            .map(|n| {
                let s: f64 = (w.n_min..w.n_max)
                    .map(|k| green.norm(n, k + 1) * rs[(k - w.n_min) as usize] * delta[w.pos(k)])
                    .sum();
                t[w.pos(n)] + s
            })
            .collect();
        let change = sup_diff(&next, &delta);
        delta = next;
        if change <= 1e-15 * delta.iter().fold(0.0, |m: f64, v| m.max(*v)) {
            break;
        }
    }
    delta
}

fn interior_max(w: Window, per_index: &[f64]) -> f64 {
    w.interior().indices().map(|n| per_index[w.pos(n)]).fold(0.0, f64::max)
}

fn check_tail(budget: f64, max_tail: Option<f64>) -> Result<()> {
    match max_tail {
        Some(limit) if !(budget <= limit) => Err(Error::TailBudgetExceeded { budget, requested: limit }),
        _ => Ok(()),
    }
}

fn interior_residual(
    dich: &Dichotomy,
    values: &[DVector<f64>],
    q: &dyn Fn(i64, &DVector<f64>) -> DVector<f64>,
) -> Result<f64> {
    let w = dich.window();
    let inner = w.interior();
    let mut worst: f64 = 0.0;
    for n in inner.n_min..inner.n_max {
        let i = w.pos(n);
        let pred = dich.sys().coeff(n)? * &values[i] + q(n, &values[i]);
        worst = worst.max(vec_norm(&(&values[i + 1] - pred)));
    }
    Ok(worst)
}

/// The bounded solution of `z_{n+1} = A_n z_n + q_n`.
pub fn bounded_linear(
    dich: &Dichotomy,
    q: &dyn Fn(i64) -> DVector<f64>,
    opts: &LinearOptions,
) -> Result<BoundedSolution> {
    let w = dich.window();
    let d = dich.sys().dim();
    let q_flat = flatten(w.indices().map(q), d)?;
    let phi = dich.green().series(&q_flat);
    let values = unflatten(&phi, d);

    let qn: Vec<f64> = q_flat.chunks(d).map(|c| c.iter().fold(0.0, |m: f64, v| m.max(v.abs()))).collect();
    let q_abs = |n: i64| if w.contains(n) { qn[w.pos(n)] } else { 0.0 };
    let q_out = opts.outer_bound.unwrap_or_else(|| boundary_values(w, &q_abs));
    let tail = tail_vector(dich, q_out, &|_| 0.0);
    let tail_budget = interior_max(w, &tail);
    check_tail(tail_budget, opts.max_tail)?;

    let constants = Constants::compute(dich, &q_abs, &|_| 0.0);
    let residual = interior_residual(dich, &values, &|n, _| q(n))?;
    Ok(BoundedSolution {
        window: w,
        sup_norm: sup_flat(&phi, d),
        values,
        residual,
        picard_iters: 0,
        tail_budget,
        tail,
        ratios: Vec::new(),
        last_step: 0.0,
        constants,
    })
}

/// The bounded solution of `z_{n+1} = A_n z_n + q(n, z_n)` by Picard
/// iteration on the Green series, given `|q(n, z)| ≤ Q_n` and
/// `|q(n, z) − q(n, z')| ≤ r_n |z − z'|`.
pub fn bounded_nonlinear(
    dich: &Dichotomy,
    q: &dyn Fn(i64, &DVector<f64>) -> DVector<f64>,
    big_q: &dyn Fn(i64) -> f64,
    r: &dyn Fn(i64) -> f64,
    opts: &NonlinearOptions,
) -> Result<BoundedSolution> {
    let constants = Constants::compute(dich, big_q, r);
    let q_out = opts.outer_bound.unwrap_or_else(|| boundary_values(dich.window(), big_q));
    let tail = tail_vector(dich, q_out, r);
    picard(dich, q, constants, tail, opts)
}

/// Picard iteration with precomputed constants and truncation bounds; lets
/// callers that solve many problems of one family skip the set-up.
pub fn picard(
    dich: &Dichotomy,
    q: &dyn Fn(i64, &DVector<f64>) -> DVector<f64>,
    constants: Constants,
    tail: Vec<f64>,
    opts: &NonlinearOptions,
) -> Result<BoundedSolution> {
    let w = dich.window();
    let d = dich.sys().dim();
    let theta = constants.theta();
    if !(theta < 1.0) {
        return Err(Error::NotContractive { theta });
    }
    let tail_budget = interior_max(w, &tail);
    check_tail(tail_budget, opts.max_tail)?;

    let threshold = if theta > 0.0 { opts.eps * (1.0 - theta) / theta } else { f64::INFINITY };
    let mut phi = match &opts.seed {
        Some(seed) if seed.len() == w.len() => flatten(seed.iter().cloned(), d)?,
        Some(seed) => return Err(Error::DimensionMismatch { expected: w.len(), got: seed.len() }),
        None => vec![0.0; w.len() * d],
    };
    let mut ratios = Vec::new();
    let mut prev_step: Option<f64> = None;
    let mut iters = 0;
    loop {
        if iters >= opts.max_iters {
            return Err(Error::IterationCapExceeded { cap: opts.max_iters, last_step: prev_step.unwrap_or(f64::NAN) });
        }
        let forcing = flatten(
            w.indices().map(|k| {
                let i = w.pos(k);
                q(k, &DVector::from_column_slice(&phi[i * d..(i + 1) * d]))
            }),
            d,
        )?;
        let next = dich.green().series(&forcing);
        let step = sup_diff(&next, &phi);
        phi = next;
        iters += 1;
        if let Some(p) = prev_step {
            if p > 0.0 {
                ratios.push(step / p);
            }
        }
        prev_step = Some(step);
        if step <= threshold || step == 0.0 {
            break;
        }
    }

    let values = unflatten(&phi, d);
    let residual = interior_residual(dich, &values, q)?;
    Ok(BoundedSolution {
        window: w,
        sup_norm: sup_flat(&phi, d),
        values,
        residual,
        picard_iters: iters,
        tail_budget,
        tail,
        ratios,
        last_step: prev_step.unwrap_or(0.0),
        constants,
    })
}

/// Truncation bounds for a nonlinear family, for use with [`picard`].
pub fn nonlinear_tail(dich: &Dichotomy, big_q: &dyn Fn(i64) -> f64, r: &dyn Fn(i64) -> f64) -> Vec<f64> {
    tail_vector(dich, boundary_values(dich.window(), big_q), r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::{DichotomyCertificate, DEFAULT_CERT_TOL};
    use crate::lin_sys::LinearSystem;
    use nalgebra::DMatrix;

    fn half(window: Window) -> Dichotomy {
        let sys = LinearSystem::constant(DMatrix::from_element(1, 1, 0.5), window).unwrap();
        let cert = DichotomyCertificate::alpha(DMatrix::identity(1, 1), 1.0, 2f64.ln()).unwrap();
        Dichotomy::certify(sys, cert, DEFAULT_CERT_TOL).unwrap()
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let dich = half(Window::new(-20, 20).unwrap());
        let sol = bounded_linear(&dich, &|_| DVector::zeros(1), &LinearOptions::default()).unwrap();
        assert!(sol.values.iter().all(|v| v[0] == 0.0));
        assert_eq!(sol.tail_budget, 0.0);
    }

    #[test]
    fn constant_forcing_converges_to_two() {
        let dich = half(Window::new(-60, 60).unwrap());
        let sol = bounded_linear(&dich, &|_| DVector::from_element(1, 1.0), &LinearOptions::default()).unwrap();
        // φ_n = Σ_{j=0}^{n−n_min−1} 2^{−j}: the gap to 2 is 2^{−(n−n_min−1)}
        for n in [-40, 0, 40] {
            let v = sol.value(n).unwrap()[0];
            let gap = 2f64.powi(-((n + 59) as i32));
            assert!((v - (2.0 - gap)).abs() < 1e-14);
            assert!(2.0 - v <= sol.tail[sol.window.pos(n)] * (1.0 + 1e-12));
        }
        assert!(sol.residual < 1e-14);
    }

    #[test]
    fn tail_limit_is_enforced() {
        let dich = half(Window::new(-10, 10).unwrap());
        let opts = LinearOptions { outer_bound: None, max_tail: Some(1e-12) };
        let err = bounded_linear(&dich, &|_| DVector::from_element(1, 1.0), &opts).unwrap_err();
        assert!(matches!(err, Error::TailBudgetExceeded { .. }));
    }

    #[test]
    fn z_independent_forcing_matches_linear() {
        let dich = half(Window::new(-30, 30).unwrap());
        let q = |n: i64| DVector::from_element(1, (n as f64).cos());
        let lin = bounded_linear(&dich, &q, &LinearOptions::default()).unwrap();
        let non = bounded_nonlinear(&dich, &|n, _| q(n), &|_| 1.0, &|_| 0.0, &NonlinearOptions::default()).unwrap();
        assert_eq!(non.picard_iters, 1);
        for (a, b) in lin.values.iter().zip(&non.values) {
            assert!((a[0] - b[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn not_contractive_rejected() {
        let dich = half(Window::new(-30, 30).unwrap());
        let err =
            bounded_nonlinear(&dich, &|_, z| z * 0.9, &|_| 1.0, &|_| 0.9, &NonlinearOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NotContractive { .. }));
    }

    #[test]
    fn iteration_cap() {
        let dich = half(Window::new(-30, 30).unwrap());
        let opts = NonlinearOptions { max_iters: 2, eps: 1e-15, ..Default::default() };
        let q = |_: i64, z: &DVector<f64>| z.map(|v| 0.2 * v.sin() + 1.0);
        let err = bounded_nonlinear(&dich, &q, &|_| 1.2, &|_| 0.2, &opts).unwrap_err();
        assert!(matches!(err, Error::IterationCapExceeded { cap: 2, .. }));
    }
}
