use nalgebra::{DMatrix, DVector};
use serde_json::json;
use topeq_core::bounded_solver::{bounded_linear, bounded_nonlinear, BoundedSolution, LinearOptions, NonlinearOptions};
use topeq_core::conjugacy::{
    continuity_modulus, holder_params, uniform_modulus, verify_equivalence, verify_flow_identity, SolutionSample,
};
use topeq_core::dichotomy::{
    alpha_rejection_scan, check_divergence, check_h2_h3, stepanov_norm, verify_alpha_ed, verify_gdd, DivergenceVerdict,
};
use topeq_core::lin_sys::{sup_deviation, vec_norm};
use topeq_core::scenarios::{oracle_bounded, oracle_scalar_fixed_point};
use topeq_core::{ConjugacyEngine, Dichotomy, DichotomyCertificate, DichotomyKind, Error, Sampler, Tolerances, Window};

use crate::config::{ForcingConfig, Problem, RunConfig};
use crate::output::{Outcome, Row};
use crate::{CliError, Command};

type CliResult<T> = Result<T, CliError>;

fn core<T>(r: topeq_core::Result<T>) -> CliResult<T> {
    r.map_err(CliError::from_core)
}

pub fn dispatch(cmd: Command, cfg: &RunConfig) -> CliResult<Outcome> {
    let problem = cfg.problem()?;
    let mut out = Outcome::new();
    out.result("problem", json!({"label": problem.label, "params": problem.params, "dim": problem.sys.dim()}));
    match cmd {
        Command::Certify => certify(cfg, &problem, &mut out)?,
        Command::Bounded => bounded(cfg, &problem, &mut out)?,
        Command::Verify => verify(cfg, problem, &mut out)?,
        Command::Modulus => modulus(cfg, problem, &mut out)?,
    }
    Ok(out)
}

fn pair_lip(p: &Problem) -> impl Fn(i64) -> f64 + '_ {
    |n| p.f.lip(n).max(p.g.lip(n))
}

fn certify(cfg: &RunConfig, p: &Problem, out: &mut Outcome) -> CliResult<()> {
    let w = p.sys.window();
    let tol = cfg.tolerances.cert_tol;

    let gdd = core(verify_gdd(&p.sys, &p.cert, tol))?;
    let (n, m) = gdd.worst_pair;
    out.push(Row::upper("gdd_violation", n, m, &[], gdd.max_violation, tol));
    let div = check_divergence(&p.cert, w);
    out.push(Row::with(
        "divergence",
        div.center,
        div.center,
        &[],
        None,
        div.forward_ratio.min(div.backward_ratio),
        None,
        div.verdict == DivergenceVerdict::Consistent,
    ));
    out.result("gdd", &gdd);

    let r = pair_lip(p);
    let h23 = check_h2_h3(&p.cert, w, &|n| p.f.bound(n), &|n| p.g.bound(n), &r);
    out.push(Row::info("bound_b", w.n_min, w.n_max, &[], h23.b + h23.b_tail));
    out.push(Row::with("theta", w.n_min, w.n_max, &[], None, h23.theta + h23.theta_tail, Some(1.0), h23.passed));
    out.result("h2_h3", h23);

    if p.cert.kind == DichotomyKind::Generalized {
        let scan = core(alpha_rejection_scan(&p.cert, w, &cfg.alphas))?;
        for rej in &scan {
            let (m, t, avg) = rej.counterexample.map_or((0, 0, f64::NAN), |s| (s.m, s.t, s.average));
            out.push(Row::info("alpha_rejection", m + t, m, &[], avg).param(rej.alpha));
        }
        out.result("alpha_scan", &scan);
    }

    match stepanov_norm(&r, cfg.stepanov_l, w) {
        Ok(s) => {
            out.push(Row::info("stepanov_norm", w.n_min, w.n_max, &[], s).param(cfg.stepanov_l as f64));
            out.result("stepanov_norm", s);
        }
        Err(Error::WindowTooNarrow(msg)) => out.note(format!("stepanov norm skipped: {msg}")),
        Err(e) => return Err(CliError::from_core(e)),
    }

    if let Some(DichotomyKind::Alpha(alpha)) = cfg.claimed_kind {
        claimed_alpha(cfg, p, alpha, out)?;
    }
    Ok(())
}

/// An α-dichotomy claim fails on a Green-function violation or on a segment
/// whose average rate is below α.
fn claimed_alpha(cfg: &RunConfig, p: &Problem, alpha: f64, out: &mut Outcome) -> CliResult<()> {
    let w = p.sys.window();
    let tol = cfg.tolerances.cert_tol;
    let claim = core(DichotomyCertificate::alpha(p.cert.projection.clone(), p.cert.k, alpha))?;
    let ed = core(verify_alpha_ed(&p.sys, &claim, tol))?;
    let (n, m) = ed.worst_pair;
    out.push(Row::upper("claimed_alpha_ed", n, m, &[alpha], ed.max_violation, tol).param(alpha));

    let generalized =
        core(DichotomyCertificate::generalized(p.cert.projection.clone(), p.cert.k, p.cert.rates.clone()))?
            .with_base_index(p.cert.base_index);
    let rej = core(alpha_rejection_scan(&generalized, w, &[alpha]))?.remove(0);
    match rej.counterexample {
        Some(s) => {
            out.push(Row::with("claimed_alpha_segment", s.m + s.t, s.m, &[alpha], Some(alpha), s.average, None, false));
            out.note(format!(
                "claimed α = {alpha} contradicted: rates average {} < α on [{}, {}]",
                s.average,
                s.m,
                s.m + s.t
            ));
        }
        None => {
            out.push(Row::with("claimed_alpha_segment", w.n_max, w.n_min, &[alpha], Some(alpha), alpha, None, true))
        }
    }
    out.result("claimed_alpha", json!({"alpha": alpha, "ed_report": ed, "rejection": rej}));
    Ok(())
}

fn certified(cfg: &RunConfig, p: &Problem) -> CliResult<Dichotomy> {
    core(Dichotomy::certify(p.sys.clone(), p.cert.clone(), cfg.tolerances.cert_tol))
}

fn interior_max_error(sol: &BoundedSolution, reference: &dyn Fn(i64) -> DVector<f64>) -> (f64, f64) {
    let w = sol.window;
    w.interior().indices().fold((0.0, 0.0), |(err, tail), n| {
        let i = w.pos(n);
        (err.max(vec_norm(&(&sol.values[i] - reference(n)))), tail.max(sol.tail[i]))
    })
}

/// `Some(A)` when every coefficient in the window equals the first.
fn constant_coefficient(p: &Problem) -> CliResult<Option<DMatrix<f64>>> {
    let w = p.sys.window();
    let a0 = core(p.sys.coeff(w.n_min))?.clone();
    for n in w.indices() {
        if core(p.sys.coeff(n))? != &a0 {
            return Ok(None);
        }
    }
    Ok(Some(a0))
}

fn record_solution(out: &mut Outcome, key: &str, sol: &BoundedSolution) {
    out.result(
        key,
        json!({
            "sup_norm": sol.sup_norm,
            "interior_sup": sol.interior_sup(),
            "residual": sol.residual,
            "tail_budget": sol.tail_budget,
            "picard_iters": sol.picard_iters,
            "last_step": sol.last_step,
            "max_ratio": sol.ratios.iter().copied().fold(0.0, f64::max),
            "constants": sol.constants,
        }),
    );
}

fn bounded(cfg: &RunConfig, p: &Problem, out: &mut Outcome) -> CliResult<()> {
    let dich = certified(cfg, p)?;
    let w = dich.window();
    let d = p.sys.dim();
    let forcing = cfg.forcing.clone().unwrap_or(ForcingConfig::Zero);
    out.result("forcing", &forcing);
    match forcing {
        ForcingConfig::Zero => {
            let sol = core(bounded_linear(&dich, &|_| DVector::zeros(d), &LinearOptions::default()))?;
            out.push(Row::upper("zero_output", w.n_min, w.n_max, &[], sol.sup_norm, 0.0));
            record_solution(out, "solution", &sol);
        }
        ForcingConfig::Constant { value } => {
            if value.len() != d {
                return Err(CliError::Config(format!("forcing has {} entries, system dimension is {d}", value.len())));
            }
            let v = DVector::from_vec(value);
            let sol = core(bounded_linear(&dich, &|_| v.clone(), &LinearOptions::default()))?;
            out.push(Row::upper("residual", w.n_min, w.n_max, v.as_slice(), sol.residual, cfg.tolerances.residual_tol));
            let oracle = core(oracle_bounded(&p.sys, &p.cert, &|_| v.clone(), w))?;
            let (err, _) = interior_max_error(&sol, &|n| oracle[w.pos(n)].clone());
            out.push(Row::upper("oracle_discrepancy", w.n_min, w.n_max, v.as_slice(), err, sol.tail_budget + 1e-12));
            if let Some(a) = constant_coefficient(p)? {
                match (DMatrix::identity(d, d) - a).try_inverse() {
                    Some(inv) => {
                        let z = inv * &v;
                        let (err, tail) = interior_max_error(&sol, &|_| z.clone());
                        out.push(Row::upper("closed_form", w.n_min, w.n_max, v.as_slice(), err, tail + 1e-12));
                        out.result("closed_form", z.as_slice());
                    }
                    None => out.note("closed form skipped: I − A is singular"),
                }
            }
            record_solution(out, "solution", &sol);
        }
        ForcingConfig::Random { count, amplitude } => {
            if !(amplitude >= 0.0) {
                return Err(CliError::Config("forcing amplitude must be nonnegative".into()));
            }
            let wide = w.doubled();
            let mut sampler = Sampler::new(cfg.sampling.seed);
            let opts = LinearOptions { outer_bound: Some((amplitude, amplitude)), max_tail: None };
            let mut worst: f64 = 0.0;
            for i in 0..count {
                let table = sampler.forcing(wide, d, amplitude);
                let q = |n: i64| {
                    if wide.contains(n) {
                        table[wide.pos(n)].clone()
                    } else {
                        DVector::zeros(d)
                    }
                };
                let sol = core(bounded_linear(&dich, &q, &opts))?;
                let oracle = core(oracle_bounded(&p.sys, &p.cert, &q, w))?;
                let (err, _) = interior_max_error(&sol, &|n| oracle[w.pos(n)].clone());
                worst = worst.max(err);
                let row = Row::upper("oracle_discrepancy", w.n_min, w.n_max, &[i as f64], err, sol.tail_budget + 1e-12);
                out.push(row.param(i as f64));
            }
            out.result("max_oracle_discrepancy", worst);
        }
        ForcingConfig::Sine { amplitude, offset } => sine(cfg, p, &dich, amplitude, offset, out)?,
    }
    Ok(())
}

/// `q(n, z) = amplitude · sin(z) + offset`, componentwise.
fn sine(cfg: &RunConfig, p: &Problem, dich: &Dichotomy, amp: f64, offset: f64, out: &mut Outcome) -> CliResult<()> {
    let w = dich.window();
    let d = p.sys.dim();
    let q = |_: i64, z: &DVector<f64>| z.map(|v| amp * v.sin() + offset);
    let big_q = |_: i64| amp.abs() + offset.abs();
    let r = |_: i64| amp.abs();
    let eps = cfg.tolerances.eps;
    let opts = NonlinearOptions { eps, ..Default::default() };
    let sol = core(bounded_nonlinear(dich, &q, &big_q, &r, &opts))?;
    let theta = sol.constants.theta();
    let args = [amp, offset];

    for (k, ratio) in sol.ratios.iter().enumerate() {
        out.push(Row::upper("contraction_ratio", k as i64 + 1, k as i64, &args, *ratio, theta + 0.05));
    }
    out.push(Row::upper("residual", w.n_min, w.n_max, &args, sol.residual, cfg.tolerances.residual_tol));
    out.push(Row::upper("sup_bound", w.n_min, w.n_max, &args, sol.sup_norm, sol.constants.bound() + sol.tail_budget));

    let mut sampler = Sampler::new(cfg.sampling.seed);
    let seed = w.indices().map(|_| sampler.vector(d, cfg.sampling.radius)).collect();
    let other = core(bounded_nonlinear(
        dich,
        &q,
        &big_q,
        &r,
        &NonlinearOptions { eps, seed: Some(seed), ..Default::default() },
    ))?;
    let gap = sol.values.iter().zip(&other.values).map(|(a, b)| vec_norm(&(a - b))).fold(0.0, f64::max);
    out.push(Row::upper("uniqueness", w.n_min, w.n_max, &args, gap, 2.0 * eps));

    if let Some(a) = constant_coefficient(p)? {
        if (0..d).all(|i| (0..d).all(|j| i == j || a[(i, j)] == 0.0)) {
            let mut z = DVector::zeros(d);
            for i in 0..d {
                let s = 1.0 - a[(i, i)];
                let map = |v: f64| (amp * v.sin() + offset) / s;
                z[i] = core(oracle_scalar_fixed_point(&map, (amp / s).abs()))?;
            }
            let (err, tail) = interior_max_error(&sol, &|_| z.clone());
            out.push(Row::upper("scalar_oracle", w.n_min, w.n_max, &args, err, tail + 2.0 * eps));
            out.result("scalar_oracle", z.as_slice());
        }
    }
    record_solution(out, "solution", &sol);
    Ok(())
}

fn engine(cfg: &RunConfig, p: Problem) -> CliResult<ConjugacyEngine> {
    let dich = certified(cfg, &p)?;
    let engine = core(ConjugacyEngine::new(dich, p.f, p.g, cfg.tolerances.eps))?;
    Ok(match cfg.fault_injection {
        Some(fault) => engine.with_fault(fault),
        None => engine,
    })
}

fn record_engine(out: &mut Outcome, e: &ConjugacyEngine) {
    out.result(
        "engine",
        json!({
            "b": e.b(),
            "theta": e.theta(),
            "tail_budget": e.tail_budget(),
            "eps": e.eps(),
            "constants": e.constants(),
            "h2_h3": e.h23(),
        }),
    );
}

fn verify(cfg: &RunConfig, p: Problem, out: &mut Outcome) -> CliResult<()> {
    let d = p.sys.dim();
    let inner = p.sys.window().interior();
    let e = engine(cfg, p)?;
    record_engine(out, &e);
    if let Some(fault) = cfg.fault_injection {
        out.note(format!("fault injected: H(n, ·) offset by {} at n = {}", fault.offset, fault.n));
    }

    let s = &cfg.sampling;
    let mut sampler = Sampler::new(s.seed);
    let mut points = sampler.points(s.points, inner, d, s.radius);
    let mut solutions = sampler.solutions(s.solutions, inner, d, s.radius, s.span);
    let flows = sampler.flow_samples(s.flow_samples, inner, d, s.radius, s.flow_offset);
    if let Some(fault) = cfg.fault_injection {
        core(inner.check(fault.n))?;
        let xi = sampler.vector(d, s.radius);
        points.push((fault.n, xi.clone()));
        solutions.push(SolutionSample { m: fault.n, start: xi, span: s.span });
    }

    let tol = Tolerances { round_trip: cfg.tolerances.round_trip_tol, residual: cfg.tolerances.residual_tol };
    let eq = core(verify_equivalence(&e, &solutions, &points, tol))?;
    let flow = core(verify_flow_identity(&e, &flows, cfg.tolerances.round_trip_tol))?;
    out.extend_report(&eq);
    out.extend_report(&flow);
    Ok(())
}

fn sup_over(w: Window, f: impl Fn(i64) -> f64) -> f64 {
    w.indices().map(f).fold(0.0, f64::max)
}

fn modulus(cfg: &RunConfig, p: Problem, out: &mut Outcome) -> CliResult<()> {
    let d = p.sys.dim();
    let w = p.sys.window();
    let s = &cfg.sampling;
    core(w.interior().check(s.modulus_index))?;

    let big_f = sup_over(w, |n| p.f.bound(n));
    let big_g = sup_over(w, |n| p.g.bound(n));
    let r = sup_over(w, |n| p.f.lip(n).max(p.g.lip(n)));
    let m = sup_deviation(&p.sys);
    let (k, kind) = (p.cert.k, p.cert.kind);
    let e = engine(cfg, p)?;
    record_engine(out, &e);

    let mut sampler = Sampler::new(s.seed);
    let xi = sampler.vector(d, s.radius);
    let directions = sampler.directions(s.directions.max(1), d);

    let params = match kind {
        DichotomyKind::Alpha(alpha) => holder_params(k, big_f, big_g, alpha, m, r),
        DichotomyKind::Generalized => Err(Error::NotApplicable("the certificate has no constant rate α".into())),
    };
    match params {
        Ok(hp) => {
            out.result("holder", hp);
            let rep = core(continuity_modulus(&e, s.modulus_index, &xi, &s.deltas, &directions, Some(&hp)))?;
            for row in &rep.rows {
                let r = Row::with(
                    "modulus",
                    rep.n,
                    rep.n,
                    xi.as_slice(),
                    Some(row.delta),
                    row.modulus,
                    row.bound,
                    row.passed,
                );
                out.push(r);
            }
            let floor = hp.exponent - 0.1;
            out.push(Row::with("slope", rep.n, rep.n, xi.as_slice(), None, rep.slope, Some(floor), rep.slope >= floor));
            out.result("slope", rep.slope);
        }
        Err(Error::NotApplicable(msg)) => {
            out.note(format!("Hölder estimate not applicable ({msg}); running the uniform continuity probe"));
            out.result("holder", json!({"applicable": false, "reason": msg, "m": m, "r": r}));
            let grid: Vec<i64> = s.modulus_grid.iter().copied().filter(|n| w.interior().contains(*n)).collect();
            if grid.is_empty() {
                return Err(CliError::Config("modulus_grid has no index inside the window interior".into()));
            }
            let sup = core(uniform_modulus(&e, &grid, &xi, &s.deltas, &directions))?;
            for (delta, value) in &sup {
                out.push(
                    Row::info("uniform_modulus", grid[0], *grid.last().unwrap(), xi.as_slice(), *value).param(*delta),
                );
            }
            let mut by_delta = sup.clone();
            by_delta.sort_by(|a, b| b.0.total_cmp(&a.0));
            let worst_rise = by_delta.windows(2).map(|p| p[1].1 - p[0].1).fold(0.0, f64::max);
            out.push(Row::upper(
                "uniform_monotone",
                grid[0],
                *grid.last().unwrap(),
                xi.as_slice(),
                worst_rise,
                2.0 * e.eps(),
            ));
        }
        Err(err) => return Err(CliError::from_core(err)),
    }
    Ok(())
}
