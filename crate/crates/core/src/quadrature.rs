//! Numerical integration helpers.
//!
//! Gauss rules are built once per order and cached for the lifetime of the
//! process; adaptive Simpson handles the coefficient and time integrals whose
//! tolerance has to be reported.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Mutex, OnceLock};

use gauss_quad::{FiniteAboveNegOneF64, GaussHermite, GaussJacobi, GaussLegendre};

use crate::error::{Error, Result};

type Rule = &'static [(f64, f64)];
/// Rule family, node count and the bit patterns of its two parameters.
type RuleKey = (u8, usize, u64, u64);

fn cache() -> &'static Mutex<HashMap<RuleKey, Rule>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(key: RuleKey, build: impl FnOnce() -> Vec<(f64, f64)>) -> Rule {
    let mut map = cache().lock().expect("quadrature cache poisoned");
    if let Some(rule) = map.get(&key) {
        return rule;
    }
    let rule: Rule = Box::leak(build().into_boxed_slice());
    map.insert(key, rule);
    rule
}

fn nz(n: usize) -> NonZeroUsize {
    NonZeroUsize::new(n.max(1)).expect("nonzero")
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn legendre_rule(n: usize) -> Rule {
    cached((0, n, 0, 0), || {
        GaussLegendre::new(nz(n)).as_node_weight_pairs().to_vec()
    })
}

/// Gauss-Hermite nodes and weights for the weight `exp(-x^2)` on the real line.
pub fn hermite_rule(n: usize) -> Rule {
    cached((1, n, 0, 0), || {
        GaussHermite::new(nz(n)).as_node_weight_pairs().to_vec()
    })
}

/// Gauss-Jacobi nodes and weights for the weight `(1-x)^alpha (1+x)^beta` on [-1, 1].
pub fn jacobi_rule(n: usize, alpha: f64, beta: f64) -> Result<Rule> {
    let a = FiniteAboveNegOneF64::new(alpha)
        .ok_or_else(|| Error::InvalidArgument(format!("Jacobi alpha {alpha} must exceed -1")))?;
    let b = FiniteAboveNegOneF64::new(beta)
        .ok_or_else(|| Error::InvalidArgument(format!("Jacobi beta {beta} must exceed -1")))?;
    Ok(cached((2, n, alpha.to_bits(), beta.to_bits()), || {
        GaussJacobi::new(nz(n), a, b)
            .as_node_weight_pairs()
            .to_vec()
    }))
}

/// Integrates `f` over `[a, b]` with an `n`-point Gauss-Legendre rule.
pub fn gauss_legendre(n: usize, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    legendre_rule(n)
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite Gauss-Legendre over `panels` equal sub-intervals.
pub fn composite_legendre(
    panels: usize,
    n: usize,
    a: f64,
    b: f64,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|p| {
            let lo = a + h * p as f64;
            gauss_legendre(n, lo, lo + h, &mut f)
        })
        .sum()
}

/// Result of an adaptive integration: the value and an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson integration to absolute tolerance `tol`.
///
/// The interval is first split into eight panels so that narrow features are
/// not missed by the initial five-point estimate.
pub fn adaptive_simpson(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
        });
    }
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut total = Quadrature {
        value: 0.0,
        error: 0.0,
    };
    for p in 0..panels {
        let lo = a + h * p as f64;
        let hi = if p + 1 == panels { b } else { lo + h };
        let flo = f(lo);
        let fhi = f(hi);
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        let part = simpson_rec(
            &mut f,
            lo,
            hi,
            flo,
            fmid,
            fhi,
            whole,
            tol / panels as f64,
            MAX_DEPTH,
        )?;
        total.value += part.value;
        total.error += part.error;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &mut impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<Quadrature> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(Error::QuadratureNonConvergence(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    if delta.abs() <= 15.0 * tol {
        return Ok(Quadrature {
            value: left + right + delta / 15.0,
            error: delta.abs() / 15.0,
        });
    }
    if depth == 0 || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
        return Err(Error::QuadratureNonConvergence(format!(
            "adaptive Simpson failed to reach tolerance {tol:.1e} on [{a}, {b}]"
        )));
    }
    let l = simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
    Ok(Quadrature {
        value: l.value + r.value,
        error: l.error + r.error,
    })
}
