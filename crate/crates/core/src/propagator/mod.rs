//! Backward propagators, their generators, and numerical residual checks of
//! the propagator identities.

mod canonical;
mod residuals;

pub use canonical::{
    canonical_functions, canonical_generators, canonical_matrix, run_canonical_matrix,
    CanonicalCase, CAUCHY_RATIO, CAUCHY_STEP, CAUCHY_TOL, COMPOSITION_TOL, DERIVATIVE_STEP,
    DERIVATIVE_TOL, INTEGRAL_TOL, TIME_PAIRS,
};
pub use residuals::{
    cauchy_uniqueness_check, composition_residual, integral_representation_residual, json_number,
    s_derivative_residual, t_derivative_residual, taylor2_residual, CauchyScheme, CheckContext,
    Residual, ResidualRecord,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::AtomLaw;
use crate::levy::JumpLaw;
use crate::mc::{McBudget, McEstimate};
use crate::rng::{Rng, StreamKey};
use crate::test_function::{Observable, Smooth};

/// How a propagator is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Closed-form expectation over the exact increment law.
    Exact,
    MonteCarlo,
}

/// A two-parameter family `Gamma(s, t)` acting on observables.
pub trait Propagator: Sync {
    fn dim(&self) -> usize;

    /// `Gamma(s, t) f (z)`; `s == t` returns `f(z)` exactly.
    fn apply(
        &self,
        s: f64,
        t: f64,
        f: &dyn Observable,
        z: &[f64],
        budget: &McBudget,
        key: &StreamKey,
    ) -> Result<McEstimate>;
}

/// Propagators acting by convolution with the law of an increment.
pub trait TranslationInvariant: Propagator {
    /// Adds an increment over `[s, t]` to `out`.
    fn sample_increment(&self, s: f64, t: f64, rng: &mut Rng, out: &mut [f64]) -> Result<()>;

    /// Exact law of the increment, when representable.
    fn increment_law(&self, s: f64, t: f64) -> Option<AtomLaw>;
}

/// Time-indexed generator `A(t)`.
pub trait Generator: Sync {
    fn dim(&self) -> usize;

    /// `A(t) f (z)`.
    fn apply(&self, t: f64, f: &dyn Observable, z: &[f64]) -> Result<f64>;

    /// Coefficients at time `t`.
    fn frozen(&self, t: f64) -> FrozenGenerator;

    /// Time derivative of the coefficients at `t`, the generator `A'(t)`.
    fn frozen_derivative(&self, t: f64) -> FrozenGenerator;

    /// Bound on `||A(t)||` from the once-smoother space, uniform on `[t0, t1]`.
    fn bound(&self, t0: f64, t1: f64) -> f64;
}

/// A Lévy generator with constant coefficients:
/// `A f = b . grad f + (1/2) sum_j c_j d_jj f + sum_k lambda_k E[f(z + J_k) - f(z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenGenerator {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub jumps: Vec<(f64, JumpLaw)>,
}

impl FrozenGenerator {
    pub fn zero(dim: usize) -> Self {
        FrozenGenerator {
            b: vec![0.0; dim],
            c: vec![0.0; dim],
            jumps: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Drift and diffusion part `b . grad f + (1/2) sum_j c_j d_jj f`.
    pub fn local_part(&self, f: &dyn Observable, z: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..self.dim() {
            if self.b[j] != 0.0 {
                total += self.b[j] * f.partial(z, &[j]).unwrap_or(f64::NAN);
            }
            if self.c[j] != 0.0 {
                total += 0.5 * self.c[j] * f.partial(z, &[j, j]).unwrap_or(f64::NAN);
            }
        }
        total
    }

    /// `A f (z)`; jump integrals use the default quadrature of each law.
    pub fn apply(&self, f: &dyn Observable, z: &[f64]) -> f64 {
        let mut total = self.local_part(f, z);
        if !self.jumps.is_empty() {
            let fz = f.eval(z);
            for (lambda, law) in &self.jumps {
                if *lambda != 0.0 {
                    let e = match (*law, f.smooth()) {
                        (JumpLaw::Gaussian { mu, sigma }, Some(g)) => {
                            g.gauss_expect(z[0] + mu, sigma * sigma, 0)
                        }
                        _ => law.expect(|y| f.eval(&[z[0] + y])),
                    };
                    total += lambda * (e - fz);
                }
            }
        }
        total
    }

    /// Law of the homogeneous increment over a time step `h` (one dimension).
    pub fn step_law(&self, h: f64) -> Option<AtomLaw> {
        if self.dim() != 1 {
            return None;
        }
        let mut law = AtomLaw::gaussian(h * self.b[0], h * self.c[0]);
        for (lambda, jl) in &self.jumps {
            if lambda * h > 0.0 {
                law = law.convolve(&AtomLaw::compound_poisson(lambda * h, &jl.atom_law()?));
            } else if *lambda < 0.0 {
                return None;
            }
        }
        Some(law)
    }

    /// `A g` as a smooth function of one variable.
    pub fn applied<'a>(&'a self, inner: &'a dyn Smooth) -> Applied<'a> {
        Applied { gen: self, inner }
    }
}

/// `A g` for a frozen one-dimensional generator. Translation-invariant
/// generators commute with Gaussian smoothing, so smoothed derivatives are
/// computed from those of `g`.
pub struct Applied<'a> {
    pub gen: &'a FrozenGenerator,
    pub inner: &'a dyn Smooth,
}

impl Smooth for Applied<'_> {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        let g = self.gen;
        let mut total = 0.0;
        if g.b[0] != 0.0 {
            total += g.b[0] * self.inner.deriv(w, n + 1);
        }
        if g.c[0] != 0.0 {
            total += 0.5 * g.c[0] * self.inner.deriv(w, n + 2);
        }
        for (lambda, law) in &g.jumps {
            if *lambda != 0.0 {
                let e = match *law {
                    JumpLaw::Gaussian { mu, sigma } => {
                        self.inner.gauss_expect(w + mu, sigma * sigma, n)
                    }
                    _ => law.expect(|y| self.inner.deriv(w + y, n)),
                };
                total += lambda * (e - self.inner.deriv(w, n));
            }
        }
        total
    }

    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        let g = self.gen;
        let mut total = 0.0;
        if g.b[0] != 0.0 {
            total += g.b[0] * self.inner.gauss_expect(m, v, n + 1);
        }
        if g.c[0] != 0.0 {
            total += 0.5 * g.c[0] * self.inner.gauss_expect(m, v, n + 2);
        }
        for (lambda, law) in &g.jumps {
            if *lambda != 0.0 {
                let e = match *law {
                    JumpLaw::Gaussian { mu, sigma } => {
                        self.inner.gauss_expect(m + mu, v + sigma * sigma, n)
                    }
                    _ => law.expect(|y| self.inner.gauss_expect(m + y, v, n)),
                };
                total += lambda * (e - self.inner.gauss_expect(m, v, n));
            }
        }
        total
    }
}

/// One term `coef E[g^{(order)}(w + shift + sqrt(var) N)]` of a [`Stencil`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilTerm {
    pub coef: f64,
    pub shift: f64,
    pub var: f64,
    pub order: usize,
}

impl FrozenGenerator {
    /// `A g` as a list of smoothed translates of `g` and its derivatives, or
    /// `None` when a jump law has no mixture form (one dimension only).
    pub fn stencil_terms(&self) -> Option<Vec<StencilTerm>> {
        if self.dim() != 1 {
            return None;
        }
        let term = |coef, shift, var, order| StencilTerm {
            coef,
            shift,
            var,
            order,
        };
        let mut out = vec![
            term(self.b[0], 0.0, 0.0, 1),
            term(0.5 * self.c[0], 0.0, 0.0, 2),
        ];
        for (lambda, law) in &self.jumps {
            if *lambda == 0.0 {
                continue;
            }
            for a in law.atom_law()?.atoms() {
                out.push(term(lambda * a.weight, a.mean, a.var, 0));
            }
            out.push(term(-lambda, 0.0, 0.0, 0));
        }
        Some(out)
    }
}

/// A finite combination of Gaussian-smoothed translates of a function and
/// its derivatives. Terms at the same translate are merged.
pub struct Stencil<'a> {
    inner: &'a dyn Smooth,
    terms: Vec<StencilTerm>,
}

impl<'a> Stencil<'a> {
    pub fn new(inner: &'a dyn Smooth, terms: impl IntoIterator<Item = StencilTerm>) -> Self {
        let mut merged: Vec<StencilTerm> = Vec::new();
        for t in terms {
            if t.coef == 0.0 {
                continue;
            }
            match merged
                .iter_mut()
                .find(|m| m.shift == t.shift && m.var == t.var && m.order == t.order)
            {
                Some(m) => m.coef += t.coef,
                None => merged.push(t),
            }
        }
        Stencil {
            inner,
            terms: merged,
        }
    }

    pub fn terms(&self) -> &[StencilTerm] {
        &self.terms
    }
}

impl Smooth for Stencil<'_> {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coef
                    * if t.var == 0.0 {
                        self.inner.deriv(w + t.shift, n + t.order)
                    } else {
                        self.inner.gauss_expect(w + t.shift, t.var, n + t.order)
                    }
            })
            .sum()
    }

    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * self.inner.gauss_expect(m + t.shift, v + t.var, n + t.order))
            .sum()
    }
}

/// [`Applied`] owning its generator.
pub struct OwnedApplied<'a> {
    pub gen: FrozenGenerator,
    pub inner: &'a dyn Smooth,
}

impl Smooth for OwnedApplied<'_> {
    fn deriv(&self, w: f64, n: usize) -> f64 {
        self.gen.applied(self.inner).deriv(w, n)
    }

    fn gauss_expect(&self, m: f64, v: f64, n: usize) -> f64 {
        self.gen.applied(self.inner).gauss_expect(m, v, n)
    }
}

/// Applies a translation-invariant propagator exactly when an increment law
/// and analytic view exist.
pub(crate) fn exact_apply<P: TranslationInvariant + ?Sized>(
    g: &P,
    s: f64,
    t: f64,
    f: &dyn Smooth,
    z: f64,
) -> Result<f64> {
    if s == t {
        return Ok(f.deriv(z, 0));
    }
    let law = g
        .increment_law(s, t)
        .ok_or_else(|| Error::Unsupported("exact increment law unavailable".into()))?;
    Ok(law.expect(f, z, 0))
}
