//! Averaged generator, Poisson equation and corrector, limit propagator, and
//! the diagnostics of the averaging limit.
//!
//! With stationary law `rho` of the embedded chain, mean sojourns `m1` and
//! mean cycle `M_rho`, the per-state operator is
//! `a(x, t) f = (m1(x) A_x(t) f + sum_y P(x, y) alpha(x, y) . grad f) / M_rho`
//! and the averaged generator is `Ahat(t) = sum_x rho_x a(x, t)`.

mod containment;
mod martingale;
mod sweep;

pub use containment::{compact_containment_probe, ContainmentReport, ContainmentRow};
pub use martingale::{
    martingale_diagnostics, step_bound, MartingaleReport, MartingaleRow, BRACKET_SLACK,
};
pub use sweep::{lln_sweep, SweepCell, SweepReport, SweepRow, SweepSettings};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::levy::{averaged_characteristics, LevyModel, StateLevy};
use crate::mc::{McBudget, McEstimate};
use crate::propagator::{EvalMode, OwnedApplied, Propagator, Stencil, StencilTerm};
use crate::random_evolution::{JumpOperatorFamily, RandomEvolution};
use crate::rng::StreamKey;
use crate::test_function::{Derivative, Linear, Smooth, TestFunction};

/// Relative size of `Pi rhs` above which a Poisson right-hand side is
/// rejected as uncentred.
pub const CENTERING_LIMIT: f64 = 1e-9;

/// Solution of `(P - I) g = rhs` with `Pi g = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolveResult {
    pub g: Vec<f64>,
    /// `max_x |((P - I) g - rhs)(x)|`
    pub residual: f64,
}

/// `Z = (I - P + Pi)^{-1}` where every row of `Pi` equals `rho`.
pub fn fundamental_matrix(p: &DMatrix<f64>, rho: &[f64]) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    if rho.len() != n || p.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rho.len(),
        });
    }
    let pi = DMatrix::from_fn(n, n, |_, j| rho[j]);
    let m = DMatrix::identity(n, n) - p + pi;
    let lu = m.clone().lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 1e-13 * max) {
        return Err(Error::SingularSystem(format!(
            "I - P + Pi has pivot ratio {:.3e}",
            min / max
        )));
    }
    lu.try_inverse()
        .ok_or_else(|| Error::SingularSystem("I - P + Pi is not invertible".into()))
}

/// Solves `(P - I) g = rhs` on the functions centred under `rho`.
pub fn poisson_solve(p: &DMatrix<f64>, rho: &[f64], rhs: &[f64]) -> Result<PoissonSolveResult> {
    let n = p.nrows();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let norm = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let defect: f64 = rho.iter().zip(rhs).map(|(r, v)| r * v).sum();
    if defect.abs() > CENTERING_LIMIT * norm {
        return Err(Error::CenteringViolation {
            defect,
            limit: CENTERING_LIMIT * norm,
        });
    }
    let z = fundamental_matrix(p, rho)?;
    let mut g = -(&z * DVector::from_column_slice(rhs));
    let mean: f64 = rho.iter().zip(g.iter()).map(|(r, v)| r * v).sum();
    g.add_scalar_mut(-mean);
    let lhs = p * &g - &g;
    let residual = lhs
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(PoissonSolveResult {
        g: g.iter().copied().collect(),
        residual,
    })
}

/// `alpha(x, y) . grad f (z)`.
pub fn d1_zero_apply(
    alpha: &JumpOperatorFamily,
    x: usize,
    y: usize,
    f: &TestFunction,
    z: &[f64],
) -> f64 {
    alpha
        .get(x, y)
        .iter()
        .enumerate()
        .filter(|(_, a)| **a != 0.0)
        .map(|(j, a)| a * f.partial(z, &[j]))
        .sum()
}

/// Deliberate corruptions used to confirm that the diagnostics catch errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Flips the sign of the averaged diffusion coefficient.
    NegateAveragedDiffusion,
}

/// Averaging data of a random evolution.
#[derive(Debug, Clone)]
pub struct Averager<'a> {
    evo: RandomEvolution<'a>,
    rho: Vec<f64>,
    m1: Vec<f64>,
    m_rho: f64,
    /// `sum_y P(x, y) alpha(x, y)` per state.
    alpha_bar: Vec<Vec<f64>>,
    /// `M_rho (Z - Pi)`, mapping `a(., t) f` to the corrector.
    kernel: DMatrix<f64>,
    averaged: LevyModel,
}

impl<'a> Averager<'a> {
    pub fn new(evo: RandomEvolution<'a>) -> Result<Self> {
        Self::with_fault(evo, None)
    }

    pub fn with_fault(evo: RandomEvolution<'a>, fault: Option<Fault>) -> Result<Self> {
        let st = evo.sm.stationary();
        let p = evo.sm.p();
        let n = evo.sm.n_states();
        let d = evo.dim();
        let z = fundamental_matrix(p, &st.rho)?;
        let pi = DMatrix::from_fn(n, n, |_, j| st.rho[j]);
        let kernel = (z - pi) * st.m_rho;
        let alpha_bar = (0..n)
            .map(|x| {
                (0..d)
                    .map(|j| (0..n).map(|y| p[(x, y)] * evo.alpha.get(x, y)[j]).sum())
                    .collect()
            })
            .collect();
        let mut averaged = averaged_characteristics(evo.levy, st, p, evo.alpha)?;
        if fault == Some(Fault::NegateAveragedDiffusion) {
            let mut state: StateLevy = averaged.state(0).clone();
            state.c = state.c.iter().map(|c| c.scaled(-1.0)).collect();
            averaged = LevyModel::new_unchecked(d, vec![state]);
        }
        Ok(Averager {
            rho: st.rho.clone(),
            m1: st.m1.clone(),
            m_rho: st.m_rho,
            evo,
            alpha_bar,
            kernel,
            averaged,
        })
    }

    pub fn evolution(&self) -> &RandomEvolution<'a> {
        &self.evo
    }

    pub fn averaged_model(&self) -> &LevyModel {
        &self.averaged
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn m1(&self) -> &[f64] {
        &self.m1
    }

    pub fn m_rho(&self) -> f64 {
        self.m_rho
    }

    /// `M_rho (Z - Pi)`.
    pub fn corrector_kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn alpha_bar(&self, x: usize) -> &[f64] {
        &self.alpha_bar[x]
    }

    /// `a(x, t) f (z)`.
    pub fn a_operator(&self, x: usize, t: f64, f: &TestFunction, z: &[f64]) -> Result<f64> {
        let shift: f64 = self.alpha_bar[x]
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(j, a)| a * f.partial(z, &[j]))
            .sum();
        Ok((self.m1[x] * self.evo.levy.generator_apply(x, t, f, z)? + shift) / self.m_rho)
    }

    /// `Ahat(t) f (z)` as the `rho`-weighted sum of `a(x, t) f (z)`.
    pub fn a_hat(&self, t: f64, f: &TestFunction, z: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for (x, r) in self.rho.iter().enumerate() {
            total += r * self.a_operator(x, t, f, z)?;
        }
        Ok(total)
    }

    /// `Ahat(t) f (z)` from the generator of the averaged model.
    pub fn a_hat_averaged(&self, t: f64, f: &TestFunction, z: &[f64]) -> Result<f64> {
        self.averaged.generator_apply(0, t, f, z)
    }

    /// Right-hand side `M_rho (Ahat - a(x)) f (z)` of the corrector equation.
    pub fn poisson_rhs(&self, t: f64, f: &TestFunction, z: &[f64]) -> Result<Vec<f64>> {
        let a: Vec<f64> = (0..self.rho.len())
            .map(|x| self.a_operator(x, t, f, z))
            .collect::<Result<_>>()?;
        let a_hat: f64 = self.rho.iter().zip(&a).map(|(r, v)| r * v).sum();
        Ok(a.iter().map(|v| self.m_rho * (a_hat - v)).collect())
    }

    /// Corrector values `f1(x, t)(z)` for every state, by solving the Poisson
    /// equation at the point `z`.
    pub fn corrector(&self, t: f64, f: &TestFunction, z: &[f64]) -> Result<PoissonSolveResult> {
        let rhs = self.poisson_rhs(t, f, z)?;
        poisson_solve(self.evo.sm.p(), &self.rho, &rhs)
    }

    /// `a(w, u) f` as a one-dimensional smooth function.
    pub fn a_smooth<'b>(&'b self, w: usize, u: f64, f: &'b dyn Smooth) -> Linear<'b> {
        let mut out = Linear::default();
        out.push(
            self.m1[w] / self.m_rho,
            OwnedApplied {
                gen: self.evo.levy.frozen(w, u),
                inner: f,
            },
        );
        let ab = self.alpha_bar[w][0];
        if ab != 0.0 {
            out.push(ab / self.m_rho, Derivative { inner: f, order: 1 });
        }
        out
    }

    /// `f1(y, u)` as a one-dimensional smooth function,
    /// `sum_w K(y, w) a(w, u) f` with `K = M_rho (Z - Pi)`.
    pub fn corrector_smooth<'b>(&'b self, y: usize, u: f64, f: &'b dyn Smooth) -> Linear<'b> {
        let mut out = Linear::default();
        if let Some(terms) = self.corrector_terms(y, u) {
            out.push(1.0, Stencil::new(f, terms));
            return out;
        }
        for w in 0..self.rho.len() {
            let k = self.kernel[(y, w)];
            if k != 0.0 {
                out.push(k, self.a_smooth(w, u, f));
            }
        }
        out
    }

    /// The terms of `f1(y, u)` as a stencil on `f`, when every jump law has
    /// a mixture form.
    pub fn corrector_terms(&self, y: usize, u: f64) -> Option<Vec<StencilTerm>> {
        if self.evo.dim() != 1 {
            return None;
        }
        let mut out = Vec::new();
        for w in 0..self.rho.len() {
            let k = self.kernel[(y, w)];
            if k == 0.0 {
                continue;
            }
            let scale = k * self.m1[w] / self.m_rho;
            for t in self.evo.levy.frozen(w, u).stencil_terms()? {
                out.push(StencilTerm {
                    coef: scale * t.coef,
                    ..t
                });
            }
            out.push(StencilTerm {
                coef: k * self.alpha_bar[w][0] / self.m_rho,
                shift: 0.0,
                var: 0.0,
                order: 1,
            });
        }
        Some(out)
    }

    /// `Gammahat(s, t) f (z)`: exact when the averaged increment law has a
    /// mixture form and `f` a one-dimensional view, Monte Carlo otherwise.
    pub fn limit_propagator(
        &self,
        s: f64,
        t: f64,
        f: &TestFunction,
        z: &[f64],
        budget: &McBudget,
        key: &StreamKey,
    ) -> Result<McEstimate> {
        let exact = self.averaged.dim() == 1 && self.averaged.increment_law(0, s, t).is_some();
        let mode = if exact {
            EvalMode::Exact
        } else {
            EvalMode::MonteCarlo
        };
        let est = self
            .averaged
            .propagator(0, mode)
            .apply(s, t, f, z, budget, key)?;
        if mode == EvalMode::MonteCarlo && est.n > 1 && est.half_width() > f.sup_norm(0) {
            return Err(Error::BudgetTooSmall {
                what: "limit propagator".into(),
                half_width: est.half_width(),
                scale: f.sup_norm(0),
            });
        }
        Ok(est)
    }
}
