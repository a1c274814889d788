//! Residuals of the propagator identities, evaluated either exactly (mixture
//! laws) or by Monte Carlo with common random numbers.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{exact_apply, EvalMode, FrozenGenerator, Generator, TranslationInvariant};
use crate::error::{Error, Result};
use crate::law::{AtomLaw, Propagated};
use crate::mc::{run_mc_scalar, McBudget, McEstimate};
use crate::quadrature::{adaptive_simpson, legendre_rule};
use crate::rng::StreamKey;
use crate::test_function::Smooth;

/// A measured residual with its Monte Carlo and quadrature error bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub value: f64,
    /// 95% half-width of the Monte Carlo error (zero for exact evaluation).
    pub half_width: f64,
    /// Absolute error estimate of the time quadrature.
    pub quad_error: f64,
    /// Magnitude of the quantities whose difference was measured.
    pub scale: f64,
}

impl Residual {
    fn exact(value: f64, quad_error: f64, scale: f64) -> Self {
        Residual {
            value,
            half_width: 0.0,
            quad_error,
            scale,
        }
    }

    /// True when the residual is within `tol` plus twice the 95% half-width.
    pub fn within(&self, tol: f64) -> bool {
        self.value <= tol + 2.0 * self.half_width
    }
}

/// Report row `{check, params, residual, tolerance, pass}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRecord {
    pub check: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Numbers as JSON, with non-finite values mapped to null.
pub fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

impl ResidualRecord {
    pub fn new(
        check: &str,
        params: Vec<(&str, serde_json::Value)>,
        r: &Residual,
        tolerance: f64,
    ) -> Self {
        let mut map: BTreeMap<String, serde_json::Value> = params
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        map.insert("mc_half_width".into(), json_number(r.half_width));
        map.insert("quad_error".into(), json_number(r.quad_error));
        ResidualRecord {
            check: check.into(),
            params: map,
            residual: r.value,
            tolerance,
            pass: r.within(tolerance),
        }
    }

    pub fn failed(
        check: &str,
        params: Vec<(&str, serde_json::Value)>,
        err: &Error,
        tolerance: f64,
    ) -> Self {
        let mut map: BTreeMap<String, serde_json::Value> = params
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        map.insert("error".into(), err.to_string().into());
        ResidualRecord {
            check: check.into(),
            params: map,
            residual: f64::NAN,
            tolerance,
            pass: false,
        }
    }
}

/// Evaluation settings shared by the checks.
#[derive(Debug, Clone)]
pub struct CheckContext {
    pub mode: EvalMode,
    pub budget: McBudget,
    pub key: StreamKey,
    /// Absolute tolerance of adaptive time quadrature.
    pub quad_tol: f64,
}

impl CheckContext {
    pub fn exact() -> Self {
        CheckContext {
            mode: EvalMode::Exact,
            budget: McBudget::samples(0),
            key: StreamKey::root(0, "exact"),
            quad_tol: 1e-8,
        }
    }

    pub fn monte_carlo(budget: McBudget, key: StreamKey) -> Self {
        CheckContext {
            mode: EvalMode::MonteCarlo,
            budget,
            key,
            quad_tol: 1e-8,
        }
    }
}

fn ensure_budget(what: &str, half_width: f64, scale: f64) -> Result<()> {
    if half_width > scale {
        return Err(Error::BudgetTooSmall {
            what: what.into(),
            half_width,
            scale,
        });
    }
    Ok(())
}

/// `Gamma(s, t) h (z)` under the context's evaluation mode. Monte Carlo
/// evaluations with the same key share their increments across times.
fn gamma<P: TranslationInvariant + ?Sized>(
    g: &P,
    s: f64,
    t: f64,
    h: &dyn Smooth,
    z: f64,
    ctx: &CheckContext,
    key: &StreamKey,
) -> Result<McEstimate> {
    if s == t {
        return Ok(McEstimate::exact(h.deriv(z, 0)));
    }
    match ctx.mode {
        EvalMode::Exact => Ok(McEstimate::exact(exact_apply(g, s, t, h, z)?)),
        EvalMode::MonteCarlo => {
            let failure = std::sync::Mutex::new(None);
            let est = run_mc_scalar(&ctx.budget, key.label(), |i| {
                let mut rng = key.rng(i);
                let mut x = [0.0];
                if let Err(e) = g.sample_increment(s, t, &mut rng, &mut x) {
                    *failure.lock().expect("poisoned") = Some(e);
                }
                h.deriv(z + x[0], 0)
            });
            if let Some(e) = failure.into_inner().expect("poisoned") {
                return Err(e);
            }
            Ok(est)
        }
    }
}

fn require_law<P: TranslationInvariant + ?Sized>(g: &P, s: f64, t: f64) -> Result<()> {
    if g.increment_law(s, t).is_none() {
        return Err(Error::Unsupported(
            "exact evaluation needs a mixture increment law".into(),
        ));
    }
    Ok(())
}

/// `|Gamma(s, r)[Gamma(r, t) f](z) - Gamma(s, t) f(z)|`, maximised over `z_grid`.
///
/// Exact mode evaluates the inner propagator as a function with transported
/// derivatives; Monte Carlo mode uses independent samples for the two sides.
pub fn composition_residual<P: TranslationInvariant + ?Sized>(
    g: &P,
    s: f64,
    r: f64,
    t: f64,
    f: &dyn Smooth,
    z_grid: &[f64],
    ctx: &CheckContext,
) -> Result<Residual> {
    if !(s <= r && r <= t) {
        return Err(Error::InvalidArgument(format!(
            "need s <= r <= t, got {s}, {r}, {t}"
        )));
    }
    let mut worst = Residual::exact(0.0, 0.0, 0.0);
    for &z in z_grid {
        let res = match ctx.mode {
            EvalMode::Exact => {
                let right = exact_apply(g, s, t, f, z)?;
                let inner_law = if r == t {
                    AtomLaw::dirac(0.0)
                } else {
                    g.increment_law(r, t).ok_or_else(|| {
                        Error::Unsupported("exact increment law unavailable".into())
                    })?
                };
                let inner = Propagated {
                    law: inner_law,
                    inner: f,
                };
                let left = exact_apply(g, s, r, &inner, z)?;
                Residual::exact((left - right).abs(), 0.0, right.abs().max(left.abs()))
            }
            EvalMode::MonteCarlo => {
                let lk = ctx.key.child("left");
                let rk = ctx.key.child("right");
                let left = run_mc_scalar(&ctx.budget, lk.label(), |i| {
                    let mut rng = lk.rng(i);
                    let mut x = [0.0];
                    let _ = g.sample_increment(s, r, &mut rng, &mut x);
                    let _ = g.sample_increment(r, t, &mut rng, &mut x);
                    f.deriv(z + x[0], 0)
                });
                let right = gamma(g, s, t, f, z, ctx, &rk)?;
                let hw = left.half_width().hypot(right.half_width());
                let scale = right.mean.abs().max(left.mean.abs());
                ensure_budget("composition residual", hw, scale)?;
                Residual {
                    value: (left.mean - right.mean).abs(),
                    half_width: hw,
                    quad_error: 0.0,
                    scale,
                }
            }
        };
        if res.value >= worst.value {
            worst = res;
        }
    }
    Ok(worst)
}

/// `|d/dt Gamma(s, t) f(z) - Gamma(s, t)[A(t) f](z)|` with a central
/// difference of step `h` (forward difference when `t - h < s`).
pub fn t_derivative_residual<P: TranslationInvariant + Generator + ?Sized>(
    g: &P,
    s: f64,
    t: f64,
    f: &dyn Smooth,
    z: f64,
    h: f64,
    ctx: &CheckContext,
) -> Result<Residual> {
    let key = ctx.key.child("t-derivative");
    let (fd, fd_hw) = if t - h >= s {
        let up = gamma(g, s, t + h, f, z, ctx, &key)?;
        let down = gamma(g, s, t - h, f, z, ctx, &key)?;
        (
            (up.mean - down.mean) / (2.0 * h),
            up.half_width().hypot(down.half_width()) / (2.0 * h),
        )
    } else {
        let up = gamma(g, s, t + h, f, z, ctx, &key)?;
        let here = gamma(g, s, t, f, z, ctx, &key)?;
        (
            (up.mean - here.mean) / h,
            up.half_width().hypot(here.half_width()) / h,
        )
    };
    let gen = g.frozen(t);
    let af = gen.applied(f);
    let rhs = gamma(g, s, t, &af, z, ctx, &key)?;
    let hw = fd_hw + rhs.half_width();
    let scale = rhs.mean.abs().max(fd.abs());
    if ctx.mode == EvalMode::MonteCarlo {
        ensure_budget("t-derivative residual", hw, scale)?;
    }
    Ok(Residual {
        value: (fd - rhs.mean).abs(),
        half_width: hw,
        quad_error: 0.0,
        scale,
    })
}

/// `|d/ds Gamma(s, t) f(z) + A(s)[Gamma(s, t) f](z)|` with a central
/// difference in `s` (backward difference when `s + h > t`).
pub fn s_derivative_residual<P: TranslationInvariant + Generator + ?Sized>(
    g: &P,
    s: f64,
    t: f64,
    f: &dyn Smooth,
    z: f64,
    h: f64,
    ctx: &CheckContext,
) -> Result<Residual> {
    let key = ctx.key.child("s-derivative");
    let (fd, fd_hw) = if s + h <= t {
        let up = gamma(g, s + h, t, f, z, ctx, &key)?;
        let down = gamma(g, s - h, t, f, z, ctx, &key)?;
        (
            (up.mean - down.mean) / (2.0 * h),
            up.half_width().hypot(down.half_width()) / (2.0 * h),
        )
    } else {
        let here = gamma(g, s, t, f, z, ctx, &key)?;
        let down = gamma(g, s - h, t, f, z, ctx, &key)?;
        (
            (here.mean - down.mean) / h,
            here.half_width().hypot(down.half_width()) / h,
        )
    };
    let gen = g.frozen(s);
    let rhs = match ctx.mode {
        EvalMode::Exact => {
            // Gamma(s, t) f as a function whose derivatives are transported
            // through the increment law.
            let law = if s == t {
                AtomLaw::dirac(0.0)
            } else {
                g.increment_law(s, t)
                    .ok_or_else(|| Error::Unsupported("exact increment law unavailable".into()))?
            };
            let propagated = Propagated { law, inner: f };
            McEstimate::exact(-gen.applied(&propagated).deriv(z, 0))
        }
        EvalMode::MonteCarlo => {
            let af = gen.applied(f);
            let mut e = gamma(g, s, t, &af, z, ctx, &key)?;
            e.mean = -e.mean;
            e
        }
    };
    let hw = fd_hw + rhs.half_width();
    let scale = rhs.mean.abs().max(fd.abs());
    if ctx.mode == EvalMode::MonteCarlo {
        ensure_budget("s-derivative residual", hw, scale)?;
    }
    Ok(Residual {
        value: (fd - rhs.mean).abs(),
        half_width: hw,
        quad_error: 0.0,
        scale,
    })
}

const MC_PANELS: usize = 4;
const MC_NODES: usize = 8;

/// Composite Gauss-Legendre nodes and weights on `[s, t]`.
fn time_nodes(s: f64, t: f64) -> Vec<(f64, f64)> {
    let h = (t - s) / MC_PANELS as f64;
    let rule = legendre_rule(MC_NODES);
    let mut out = Vec::with_capacity(MC_PANELS * MC_NODES);
    for p in 0..MC_PANELS {
        let mid = s + h * (p as f64 + 0.5);
        for &(x, w) in rule {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

/// Monte Carlo estimate of a functional of the path sampled at `times`
/// (ascending, all at or after `s`).
fn path_functional<P: TranslationInvariant + ?Sized>(
    g: &P,
    s: f64,
    times: &[f64],
    ctx: &CheckContext,
    key: &StreamKey,
    func: impl Fn(&[f64]) -> f64 + Sync,
) -> McEstimate {
    run_mc_scalar(&ctx.budget, key.label(), |i| {
        let mut rng = key.rng(i);
        let mut pos = Vec::with_capacity(times.len());
        let mut x = [0.0];
        let mut prev = s;
        for &u in times {
            let _ = g.sample_increment(prev, u, &mut rng, &mut x);
            pos.push(x[0]);
            prev = u;
        }
        func(&pos)
    })
}

/// `|Gamma(s, t) f(z) - f(z) - int_s^t Gamma(s, u)[A(u) f](z) du|`.
pub fn integral_representation_residual<P: TranslationInvariant + Generator + ?Sized>(
    g: &P,
    s: f64,
    t: f64,
    f: &dyn Smooth,
    z: f64,
    ctx: &CheckContext,
) -> Result<Residual> {
    if s == t {
        return Ok(Residual::exact(0.0, 0.0, f.deriv(z, 0).abs()));
    }
    match ctx.mode {
        EvalMode::Exact => {
            require_law(g, s, t)?;
            let lhs = exact_apply(g, s, t, f, z)? - f.deriv(z, 0);
            let q = adaptive_simpson(
                |u| {
                    let gen = g.frozen(u);
                    exact_apply(g, s, u, &gen.applied(f), z).unwrap_or(f64::NAN)
                },
                s,
                t,
                ctx.quad_tol,
            )?;
            Ok(Residual::exact(
                (lhs - q.value).abs(),
                q.error,
                lhs.abs().max(q.value.abs()),
            ))
        }
        EvalMode::MonteCarlo => {
            let nodes = time_nodes(s, t);
            let gens: Vec<FrozenGenerator> = nodes.iter().map(|&(u, _)| g.frozen(u)).collect();
            let mut times: Vec<f64> = nodes.iter().map(|&(u, _)| u).collect();
            times.push(t);
            let fz = f.deriv(z, 0);
            let key = ctx.key.child("integral-representation");
            let est = path_functional(g, s, &times, ctx, &key, |pos| {
                let last = pos[pos.len() - 1];
                let mut acc = f.deriv(z + last, 0) - fz;
                for (k, &(_, w)) in nodes.iter().enumerate() {
                    acc -= w * gens[k].applied(f).deriv(z + pos[k], 0);
                }
                acc
            });
            let scale = (gamma(g, s, t, f, z, ctx, &key)?.mean - fz).abs();
            ensure_budget(
                "integral representation residual",
                est.half_width(),
                scale.max(fz.abs()),
            )?;
            Ok(Residual {
                value: est.mean.abs(),
                half_width: est.half_width(),
                quad_error: f64::NAN,
                scale,
            })
        }
    }
}

/// Generator with coefficients `int_r^t (t - v) a'(v) dv`, built from the
/// analytic time derivative of each coefficient.
fn kernel_generator<P: Generator + ?Sized>(g: &P, r: f64, t: f64) -> Result<FrozenGenerator> {
    let base = g.frozen(r);
    let d = base.dim();
    let integrate = |pick: &dyn Fn(&FrozenGenerator) -> f64| -> Result<f64> {
        Ok(adaptive_simpson(|v| (t - v) * pick(&g.frozen_derivative(v)), r, t, 1e-12)?.value)
    };
    let mut out = FrozenGenerator::zero(d);
    for j in 0..d {
        out.b[j] = integrate(&|a| a.b[j])?;
        out.c[j] = integrate(&|a| a.c[j])?;
    }
    for (k, &(_, law)) in base.jumps.iter().enumerate() {
        out.jumps.push((integrate(&|a| a.jumps[k].0)?, law));
    }
    Ok(out)
}

/// Residual of the second-order expansion
/// `Gamma(s,t) f = f + int A(u) f du + int (t-u) Gamma(s,u) A(u)^2 f du
///   + int_s^t int_s^u Gamma(s,r) A(r) (t-u) A'(u) f dr du`.
///
/// The double integral is rearranged by Fubini into a single integral over
/// `r` of `Gamma(s,r) A(r) K_r f` with `K_r = int_r^t (t-u) A'(u) du`.
pub fn taylor2_residual<P: TranslationInvariant + Generator + ?Sized>(
    g: &P,
    s: f64,
    t: f64,
    f: &dyn Smooth,
    z: f64,
    ctx: &CheckContext,
) -> Result<Residual> {
    if s == t {
        return Ok(Residual::exact(0.0, 0.0, f.deriv(z, 0).abs()));
    }
    let fz = f.deriv(z, 0);
    let first = adaptive_simpson(|u| g.frozen(u).applied(f).deriv(z, 0), s, t, ctx.quad_tol)?;
    match ctx.mode {
        EvalMode::Exact => {
            require_law(g, s, t)?;
            let lhs = exact_apply(g, s, t, f, z)?;
            let second = adaptive_simpson(
                |u| {
                    let gen = g.frozen(u);
                    let af = gen.applied(f);
                    let aaf = gen.applied(&af);
                    (t - u) * exact_apply(g, s, u, &aaf, z).unwrap_or(f64::NAN)
                },
                s,
                t,
                ctx.quad_tol,
            )?;
            let third = adaptive_simpson(
                |r| {
                    let Ok(kernel) = kernel_generator(g, r, t) else {
                        return f64::NAN;
                    };
                    let gen = g.frozen(r);
                    let kf = kernel.applied(f);
                    let akf = gen.applied(&kf);
                    exact_apply(g, s, r, &akf, z).unwrap_or(f64::NAN)
                },
                s,
                t,
                ctx.quad_tol,
            )?;
            let rhs = fz + first.value + second.value + third.value;
            Ok(Residual::exact(
                (lhs - rhs).abs(),
                first.error + second.error + third.error,
                lhs.abs().max(rhs.abs()),
            ))
        }
        EvalMode::MonteCarlo => {
            let nodes = time_nodes(s, t);
            let gens: Vec<FrozenGenerator> = nodes.iter().map(|&(u, _)| g.frozen(u)).collect();
            let kernels: Vec<FrozenGenerator> = nodes
                .iter()
                .map(|&(u, _)| kernel_generator(g, u, t))
                .collect::<Result<_>>()?;
            let mut times: Vec<f64> = nodes.iter().map(|&(u, _)| u).collect();
            times.push(t);
            let key = ctx.key.child("taylor2");
            let base = fz + first.value;
            let est = path_functional(g, s, &times, ctx, &key, |pos| {
                let last = pos[pos.len() - 1];
                let mut acc = f.deriv(z + last, 0) - base;
                for (k, &(u, w)) in nodes.iter().enumerate() {
                    let af = gens[k].applied(f);
                    let aaf = gens[k].applied(&af);
                    let kf = kernels[k].applied(f);
                    let akf = gens[k].applied(&kf);
                    acc -= w * ((t - u) * aaf.deriv(z + pos[k], 0) + akf.deriv(z + pos[k], 0));
                }
                acc
            });
            let scale = fz.abs().max(base.abs());
            ensure_budget("taylor residual", est.half_width(), scale)?;
            Ok(Residual {
                value: est.mean.abs(),
                half_width: est.half_width(),
                quad_error: first.error,
                scale,
            })
        }
    }
}

/// Time-stepping scheme for the forward equation `dG/dt = G A(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CauchyScheme {
    /// Frozen coefficients at the left end of each step (first order).
    ExponentialEuler,
    /// Frozen coefficients at the step midpoint (second order).
    ExponentialMidpoint,
}

/// Steps `G(t) = G_s exp(h A(u_1)) ... exp(h A(u_n))` from `s` through the
/// sorted `t_grid` and compares with `G_s Gamma(s, t) f(z)`.
///
/// `initial` is the law realising the initial operator `G_s` (identity when
/// `None`). The returned residual is the maximum over the grid.
#[allow(clippy::too_many_arguments)]
pub fn cauchy_uniqueness_check<P: TranslationInvariant + Generator + ?Sized>(
    g: &P,
    s: f64,
    initial: Option<&AtomLaw>,
    t_grid: &[f64],
    f: &dyn Smooth,
    z: f64,
    step: f64,
    scheme: CauchyScheme,
) -> Result<Residual> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    let identity = AtomLaw::dirac(0.0);
    let g_s = initial.unwrap_or(&identity);
    let mut law = g_s.clone();
    let mut grid: Vec<f64> = t_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let mut prev = s;
    let mut worst = Residual::exact(0.0, 0.0, 0.0);
    let f_sup = {
        let (lo, hi) = f.support().unwrap_or((z - 50.0, z + 50.0));
        let n = 4000;
        (0..=n)
            .map(|i| f.deriv(lo + (hi - lo) * i as f64 / n as f64, 0).abs())
            .fold(0.0, f64::max)
    };
    for &t in &grid {
        if t < s {
            return Err(Error::InvalidArgument(format!(
                "grid time {t} precedes s = {s}"
            )));
        }
        let span = t - prev;
        if span > 0.0 {
            let n = (span / step).ceil().max(1.0) as usize;
            let h = span / n as f64;
            for k in 0..n {
                let u = match scheme {
                    CauchyScheme::ExponentialEuler => prev + h * k as f64,
                    CauchyScheme::ExponentialMidpoint => prev + h * (k as f64 + 0.5),
                };
                let step_law = g.frozen(u).step_law(h).ok_or_else(|| {
                    Error::Unsupported("frozen step law unavailable for this generator".into())
                })?;
                law = law.convolve(&step_law);
            }
        }
        prev = t;
        let mass: f64 = law.atoms().iter().map(|a| a.weight.abs()).sum();
        let stepped = law.expect(f, z, 0);
        let bound = f_sup * (1.0 + 1e-9);
        if mass > 1.0 + 1e-9 || stepped.abs() > bound {
            return Err(Error::InstabilityDetected {
                norm: mass * f_sup,
                bound,
            });
        }
        let exact_law = if t == s {
            g_s.clone()
        } else {
            g_s.convolve(
                &g.increment_law(s, t)
                    .ok_or_else(|| Error::Unsupported("exact increment law unavailable".into()))?,
            )
        };
        let exact = exact_law.expect(f, z, 0);
        let r = Residual::exact((stepped - exact).abs(), 0.0, exact.abs());
        if r.value >= worst.value {
            worst = r;
        }
    }
    Ok(worst)
}
