//! Lévy processes with time-dependent local characteristics, one set per
//! state of the driving chain.
//!
//! The drift `b` stored in a model is the finite-activity drift: jumps enter
//! the generator uncompensated, `A f = b f' + c f''/2 + lambda E[f(z+J) - f(z)]`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::law::{Atom, AtomLaw};
use crate::mc::{run_mc_scalar, McBudget, McEstimate};
use crate::propagator::{EvalMode, FrozenGenerator, Generator, Propagator, TranslationInvariant};
use crate::quadrature::{hermite_rule, legendre_rule};
use crate::random_evolution::JumpOperatorFamily;
use crate::rng::{Rng, StreamKey};
use crate::semi_markov::StationaryData;
use crate::test_function::{Observable, Smooth, TestFunction};

/// A scalar coefficient `t -> v(t)` with closed-form derivative and integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientFn {
    Const(f64),
    /// `v0 + v1 t`
    Affine {
        v0: f64,
        v1: f64,
    },
    /// `v0 + v1 sin(omega t)`
    Trig {
        v0: f64,
        v1: f64,
        omega: f64,
    },
    /// `constant + sum_i w_i g_i(t)`
    Sum {
        constant: f64,
        terms: Vec<(f64, CoefficientFn)>,
    },
}

impl CoefficientFn {
    pub fn zero() -> Self {
        CoefficientFn::Const(0.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            CoefficientFn::Const(v) => *v,
            CoefficientFn::Affine { v0, v1 } => v0 + v1 * t,
            CoefficientFn::Trig { v0, v1, omega } => v0 + v1 * (omega * t).sin(),
            CoefficientFn::Sum { constant, terms } => {
                constant + terms.iter().map(|(w, g)| w * g.value(t)).sum::<f64>()
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            CoefficientFn::Const(_) => 0.0,
            CoefficientFn::Affine { v1, .. } => *v1,
            CoefficientFn::Trig { v1, omega, .. } => v1 * omega * (omega * t).cos(),
            CoefficientFn::Sum { terms, .. } => {
                terms.iter().map(|(w, g)| w * g.derivative(t)).sum()
            }
        }
    }

    /// Antiderivative vanishing at `t = 0`.
    pub fn antiderivative(&self, t: f64) -> f64 {
        match self {
            CoefficientFn::Const(v) => v * t,
            CoefficientFn::Affine { v0, v1 } => v0 * t + 0.5 * v1 * t * t,
            CoefficientFn::Trig { v0, v1, omega } => {
                if *omega == 0.0 {
                    v0 * t
                } else {
                    v0 * t + v1 * (1.0 - (omega * t).cos()) / omega
                }
            }
            CoefficientFn::Sum { constant, terms } => {
                constant * t
                    + terms
                        .iter()
                        .map(|(w, g)| w * g.antiderivative(t))
                        .sum::<f64>()
            }
        }
    }

    /// `int_s^t v(u) du`.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        if s == t {
            return 0.0;
        }
        match self {
            CoefficientFn::Const(v) => v * (t - s),
            _ => self.antiderivative(t) - self.antiderivative(s),
        }
    }

    /// Lower and upper bounds of the coefficient on `[t0, t1]`.
    pub fn range(&self, t0: f64, t1: f64) -> (f64, f64) {
        match self {
            CoefficientFn::Const(v) => (*v, *v),
            CoefficientFn::Affine { .. } => {
                let (a, b) = (self.value(t0), self.value(t1));
                (a.min(b), a.max(b))
            }
            CoefficientFn::Trig { v0, v1, .. } => (v0 - v1.abs(), v0 + v1.abs()),
            CoefficientFn::Sum { constant, terms } => {
                let mut lo = *constant;
                let mut hi = *constant;
                for (w, g) in terms {
                    let (a, b) = g.range(t0, t1);
                    if *w >= 0.0 {
                        lo += w * a;
                        hi += w * b;
                    } else {
                        lo += w * b;
                        hi += w * a;
                    }
                }
                (lo, hi)
            }
        }
    }

    pub fn sup_abs(&self, t0: f64, t1: f64) -> f64 {
        let (lo, hi) = self.range(t0, t1);
        lo.abs().max(hi.abs())
    }

    pub fn scaled(&self, w: f64) -> Self {
        CoefficientFn::Sum {
            constant: 0.0,
            terms: vec![(w, self.clone())],
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            CoefficientFn::Const(v) => v.is_finite(),
            CoefficientFn::Affine { v0, v1 } => v0.is_finite() && v1.is_finite(),
            CoefficientFn::Trig { v0, v1, omega } => {
                v0.is_finite() && v1.is_finite() && omega.is_finite()
            }
            CoefficientFn::Sum { constant, terms } => {
                constant.is_finite() && terms.iter().all(|(w, g)| w.is_finite() && g.is_finite())
            }
        }
    }
}

/// Law of a single jump. Time-independent; only the intensity varies in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    /// `h_plus` with probability `p`, otherwise `h_minus`.
    TwoPoint {
        h_plus: f64,
        p: f64,
        h_minus: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    Gaussian {
        mu: f64,
        sigma: f64,
    },
}

const JUMP_NODES: usize = 32;

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            JumpLaw::TwoPoint { h_plus, p, h_minus } => {
                (0.0..=1.0).contains(&p) && h_plus.is_finite() && h_minus.is_finite()
            }
            JumpLaw::Uniform { a, b } => a < b && a.is_finite() && b.is_finite(),
            JumpLaw::Gaussian { mu, sigma } => sigma > 0.0 && mu.is_finite() && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Construction(format!("invalid jump law {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            JumpLaw::TwoPoint { h_plus, p, h_minus } => {
                if rng.random::<f64>() < p {
                    h_plus
                } else {
                    h_minus
                }
            }
            JumpLaw::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            JumpLaw::Gaussian { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                mu + sigma * z
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::TwoPoint { h_plus, p, h_minus } => p * h_plus + (1.0 - p) * h_minus,
            JumpLaw::Uniform { a, b } => 0.5 * (a + b),
            JumpLaw::Gaussian { mu, .. } => mu,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            JumpLaw::TwoPoint { h_plus, p, h_minus } => {
                p * h_plus * h_plus + (1.0 - p) * h_minus * h_minus
            }
            JumpLaw::Uniform { a, b } => (a * a + a * b + b * b) / 3.0,
            JumpLaw::Gaussian { mu, sigma } => mu * mu + sigma * sigma,
        }
    }

    /// Largest possible jump size (infinite for Gaussian jumps).
    pub fn max_abs(&self) -> f64 {
        match *self {
            JumpLaw::TwoPoint {
                h_plus, h_minus, ..
            } => h_plus.abs().max(h_minus.abs()),
            JumpLaw::Uniform { a, b } => a.abs().max(b.abs()),
            JumpLaw::Gaussian { .. } => f64::INFINITY,
        }
    }

    /// `E[exp(i u J)]`.
    pub fn char_fn(&self, u: f64) -> Complex64 {
        match *self {
            JumpLaw::TwoPoint { h_plus, p, h_minus } => {
                Complex64::from_polar(p, u * h_plus) + Complex64::from_polar(1.0 - p, u * h_minus)
            }
            JumpLaw::Uniform { a, b } => {
                if u == 0.0 {
                    return Complex64::new(1.0, 0.0);
                }
                (Complex64::from_polar(1.0, u * b) - Complex64::from_polar(1.0, u * a))
                    / Complex64::new(0.0, u * (b - a))
            }
            JumpLaw::Gaussian { mu, sigma } => {
                Complex64::from_polar((-0.5 * u * u * sigma * sigma).exp(), u * mu)
            }
        }
    }

    /// `E[J 1{|J| <= 1}]`, the small-jump part entering the compensated drift.
    pub fn truncated_mean(&self) -> f64 {
        match *self {
            JumpLaw::TwoPoint { h_plus, p, h_minus } => {
                let part = |h: f64, w: f64| if h.abs() <= 1.0 { w * h } else { 0.0 };
                part(h_plus, p) + part(h_minus, 1.0 - p)
            }
            JumpLaw::Uniform { a, b } => {
                let lo = a.max(-1.0);
                let hi = b.min(1.0);
                if lo >= hi {
                    0.0
                } else {
                    (hi * hi - lo * lo) / (2.0 * (b - a))
                }
            }
            JumpLaw::Gaussian { mu, sigma } => {
                let n = Normal::standard();
                let (lo, hi) = ((-1.0 - mu) / sigma, (1.0 - mu) / sigma);
                mu * (n.cdf(hi) - n.cdf(lo)) - sigma * (n.pdf(hi) - n.pdf(lo))
            }
        }
    }

    /// Exact mixture representation, when the family admits one.
    pub fn atom_law(&self) -> Option<AtomLaw> {
        match *self {
            JumpLaw::TwoPoint { h_plus, p, h_minus } => Some(AtomLaw::from_atoms(vec![
                Atom {
                    weight: p,
                    mean: h_plus,
                    var: 0.0,
                },
                Atom {
                    weight: 1.0 - p,
                    mean: h_minus,
                    var: 0.0,
                },
            ])),
            JumpLaw::Gaussian { mu, sigma } => Some(AtomLaw::gaussian(mu, sigma * sigma)),
            JumpLaw::Uniform { .. } => None,
        }
    }

    /// `E[g(J)]` using `n` quadrature nodes for continuous laws.
    pub fn expect_with(&self, n: usize, g: impl Fn(f64) -> f64) -> f64 {
        match *self {
            JumpLaw::TwoPoint { h_plus, p, h_minus } => p * g(h_plus) + (1.0 - p) * g(h_minus),
            JumpLaw::Uniform { a, b } => {
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                0.5 * legendre_rule(n)
                    .iter()
                    .map(|&(x, w)| w * g(mid + half * x))
                    .sum::<f64>()
            }
            JumpLaw::Gaussian { mu, sigma } => {
                let s = std::f64::consts::SQRT_2 * sigma;
                hermite_rule(n)
                    .iter()
                    .map(|&(x, w)| w * g(mu + s * x))
                    .sum::<f64>()
                    / std::f64::consts::PI.sqrt()
            }
        }
    }

    /// `E[g(J)]` with the default 32-node rule.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.expect_with(JUMP_NODES, g)
    }

    /// `E[g(J)]` checked against a 64-node rule.
    pub fn expect_checked(&self, g: impl Fn(f64) -> f64, tol: f64) -> Result<f64> {
        let coarse = self.expect_with(JUMP_NODES, &g);
        if matches!(self, JumpLaw::TwoPoint { .. }) {
            return Ok(coarse);
        }
        let fine = self.expect_with(2 * JUMP_NODES, &g);
        if (coarse - fine).abs() > tol * (1.0 + fine.abs()) {
            return Err(Error::QuadratureNonConvergence(format!(
                "jump integral changed by {:.3e} between {} and {} nodes",
                (coarse - fine).abs(),
                JUMP_NODES,
                2 * JUMP_NODES
            )));
        }
        Ok(fine)
    }
}

/// Compound-Poisson component with intensity `lambda_t` and a fixed jump law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpPart {
    pub intensity: CoefficientFn,
    pub law: JumpLaw,
}

/// Local characteristics of one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateLevy {
    /// Drift per coordinate.
    pub b: Vec<CoefficientFn>,
    /// Diagonal diffusion per coordinate.
    pub c: Vec<CoefficientFn>,
    #[serde(default)]
    pub jumps: Vec<JumpPart>,
}

impl StateLevy {
    pub fn drift(b: CoefficientFn) -> Self {
        StateLevy {
            b: vec![b],
            c: vec![CoefficientFn::zero()],
            jumps: vec![],
        }
    }

    pub fn diffusion(c: CoefficientFn) -> Self {
        StateLevy {
            b: vec![CoefficientFn::zero()],
            c: vec![c],
            jumps: vec![],
        }
    }

    pub fn zero(dim: usize) -> Self {
        StateLevy {
            b: vec![CoefficientFn::zero(); dim],
            c: vec![CoefficientFn::zero(); dim],
            jumps: vec![],
        }
    }
}

/// Per-state Lévy characteristics on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    dim: usize,
    states: Vec<StateLevy>,
}

/// Integrated characteristics `(B_t, C_t, nu_bar_t)` from time 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotCharacteristics {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Cumulative intensity of each jump component with its law.
    pub nu_bar: Vec<(f64, JumpLaw)>,
}

impl LevyModel {
    /// Checks shapes, nonnegativity of diffusion and intensity on `[0, horizon]`,
    /// and that jumps are only used in one dimension.
    pub fn new(dim: usize, states: Vec<StateLevy>, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Construction("dimension must be at least 1".into()));
        }
        if states.is_empty() {
            return Err(Error::Construction(
                "Levy model needs at least one state".into(),
            ));
        }
        for (x, st) in states.iter().enumerate() {
            if st.b.len() != dim || st.c.len() != dim {
                return Err(Error::Construction(format!(
                    "state {x}: drift and diffusion need {dim} coordinates (got {} and {})",
                    st.b.len(),
                    st.c.len()
                )));
            }
            for g in st.b.iter().chain(&st.c) {
                if !g.is_finite() {
                    return Err(Error::Construction(format!(
                        "state {x}: non-finite coefficient"
                    )));
                }
            }
            for (j, c) in st.c.iter().enumerate() {
                let (lo, _) = c.range(0.0, horizon);
                if lo < 0.0 {
                    return Err(Error::Construction(format!(
                        "state {x}: diffusion coefficient {j} can be negative on [0, {horizon}] (lower bound {lo})"
                    )));
                }
            }
            if !st.jumps.is_empty() && dim != 1 {
                return Err(Error::Unsupported(format!(
                    "state {x}: jump components are only supported in dimension 1"
                )));
            }
            for part in &st.jumps {
                part.law.validate()?;
                let (lo, _) = part.intensity.range(0.0, horizon);
                if lo < 0.0 || !part.intensity.is_finite() {
                    return Err(Error::Construction(format!(
                        "state {x}: jump intensity can be negative on [0, {horizon}]"
                    )));
                }
            }
        }
        Ok(LevyModel { dim, states })
    }

    /// Builds a model without range checks (used for deliberate fault injection).
    pub fn new_unchecked(dim: usize, states: Vec<StateLevy>) -> Self {
        LevyModel { dim, states }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, x: usize) -> &StateLevy {
        &self.states[x]
    }

    pub fn states(&self) -> &[StateLevy] {
        &self.states
    }

    pub fn has_jumps(&self) -> bool {
        self.states.iter().any(|s| !s.jumps.is_empty())
    }

    /// Propagator and generator of a single state.
    pub fn propagator(&self, x: usize, mode: EvalMode) -> LevyPropagator<'_> {
        LevyPropagator {
            model: self,
            state: x,
            mode,
        }
    }

    /// Adds one increment of state `x` over `[s, t]` to `out`.
    ///
    /// Drift and variance integrals are exact; the jump part draws a Poisson
    /// count and that many jumps. A zero-length interval consumes no draws.
    pub fn sample_increment_into(
        &self,
        x: usize,
        s: f64,
        t: f64,
        rng: &mut Rng,
        out: &mut [f64],
    ) -> Result<()> {
        if s == t {
            return Ok(());
        }
        let st = &self.states[x];
        for j in 0..self.dim {
            out[j] += st.b[j].integral(s, t);
            let var = st.c[j].integral(s, t);
            if var < 0.0 {
                if var < -1e-14 * (1.0 + (t - s).abs()) {
                    return Err(Error::NegativeVarianceIntegral { value: var, s, t });
                }
            } else if var > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                out[j] += var.sqrt() * z;
            }
        }
        for part in &st.jumps {
            let lambda = part.intensity.integral(s, t);
            if lambda > 0.0 {
                let count = Poisson::new(lambda)
                    .map_err(|e| {
                        Error::InvalidArgument(format!("Poisson intensity {lambda}: {e}"))
                    })?
                    .sample(rng) as u64;
                for _ in 0..count {
                    out[0] += part.law.sample(rng);
                }
            }
        }
        Ok(())
    }

    pub fn sample_increment(&self, x: usize, s: f64, t: f64, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.sample_increment_into(x, s, t, rng, &mut out)?;
        Ok(out)
    }

    /// Exact law of the increment over `[s, t]` (one dimension, jump laws
    /// with a mixture form).
    pub fn increment_law(&self, x: usize, s: f64, t: f64) -> Option<AtomLaw> {
        if self.dim != 1 {
            return None;
        }
        let st = &self.states[x];
        let mut law = AtomLaw::gaussian(st.b[0].integral(s, t), st.c[0].integral(s, t).max(0.0));
        for part in &st.jumps {
            let lambda = part.intensity.integral(s, t);
            if lambda > 0.0 {
                let jump = part.law.atom_law()?;
                law = law.convolve(&AtomLaw::compound_poisson(lambda, &jump));
            }
        }
        Some(law)
    }

    /// Mean of the increment over `[s, t]` in coordinate `j`.
    pub fn increment_mean(&self, x: usize, s: f64, t: f64, j: usize) -> f64 {
        let st = &self.states[x];
        st.b[j].integral(s, t)
            + st.jumps
                .iter()
                .map(|p| p.intensity.integral(s, t) * p.law.mean())
                .sum::<f64>()
    }

    /// Variance of the increment over `[s, t]` in coordinate `j`.
    pub fn increment_variance(&self, x: usize, s: f64, t: f64, j: usize) -> f64 {
        let st = &self.states[x];
        st.c[j].integral(s, t)
            + st.jumps
                .iter()
                .map(|p| p.intensity.integral(s, t) * p.law.second_moment())
                .sum::<f64>()
    }

    /// Coefficients of state `x` frozen at time `t`.
    pub fn frozen(&self, x: usize, t: f64) -> FrozenGenerator {
        let st = &self.states[x];
        FrozenGenerator {
            b: st.b.iter().map(|g| g.value(t)).collect(),
            c: st.c.iter().map(|g| g.value(t)).collect(),
            jumps: st
                .jumps
                .iter()
                .map(|p| (p.intensity.value(t), p.law))
                .collect(),
        }
    }

    /// Time derivative of the frozen coefficients.
    pub fn frozen_derivative(&self, x: usize, t: f64) -> FrozenGenerator {
        let st = &self.states[x];
        FrozenGenerator {
            b: st.b.iter().map(|g| g.derivative(t)).collect(),
            c: st.c.iter().map(|g| g.derivative(t)).collect(),
            jumps: st
                .jumps
                .iter()
                .map(|p| (p.intensity.derivative(t), p.law))
                .collect(),
        }
    }

    /// `A_x(t) f(z)`. Gaussian jump integrals use the Gaussian smoothing of
    /// `f`; other laws use checked quadrature.
    pub fn generator_apply(&self, x: usize, t: f64, f: &TestFunction, z: &[f64]) -> Result<f64> {
        if f.dim() != self.dim || z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len().min(f.dim()),
            });
        }
        let gen = self.frozen(x, t);
        let mut total = gen.local_part(f, z);
        let fz = f.eval(z);
        for (lambda, law) in &gen.jumps {
            if *lambda != 0.0 {
                let e = match *law {
                    JumpLaw::Gaussian { mu, sigma } => f.gauss_expect(z[0] + mu, sigma * sigma, 0),
                    _ => law.expect_checked(|y| f.eval(&[z[0] + y]), 1e-8)?,
                };
                total += lambda * (e - fz);
            }
        }
        Ok(total)
    }

    /// Explicit bound on `||A_x(t)||` from the once-smoother space into the
    /// continuous functions, uniform over `[t0, t1]`.
    pub fn generator_bound(&self, x: usize, t0: f64, t1: f64) -> f64 {
        let st = &self.states[x];
        st.b.iter().map(|g| g.sup_abs(t0, t1)).sum::<f64>()
            + 0.5 * st.c.iter().map(|g| g.sup_abs(t0, t1)).sum::<f64>()
            + 2.0
                * st.jumps
                    .iter()
                    .map(|p| p.intensity.sup_abs(t0, t1))
                    .sum::<f64>()
    }

    pub fn spot_from_local(&self, x: usize, t: f64) -> SpotCharacteristics {
        let st = &self.states[x];
        SpotCharacteristics {
            b: st.b.iter().map(|g| g.antiderivative(t)).collect(),
            c: st.c.iter().map(|g| g.antiderivative(t)).collect(),
            nu_bar: st
                .jumps
                .iter()
                .map(|p| (p.intensity.antiderivative(t), p.law))
                .collect(),
        }
    }

    /// Lévy-Khintchine exponent of `L_t - L_0`, written with the truncation
    /// function `1{|y| <= 1}`.
    pub fn characteristic_exponent(&self, x: usize, u: &[f64], t: f64) -> Complex64 {
        let spot = self.spot_from_local(x, t);
        let mut psi = Complex64::new(0.0, 0.0);
        for j in 0..self.dim {
            psi -= 0.5 * u[j] * u[j] * spot.c[j];
        }
        // The configured drift is the finite-activity drift B^0; the
        // compensated drift adds the small-jump mean of nu_bar.
        let mut big_b: Vec<f64> = spot.b.clone();
        for (lambda, law) in &spot.nu_bar {
            big_b[0] += lambda * law.truncated_mean();
            let k = law.char_fn(u[0]) - 1.0 - Complex64::new(0.0, u[0] * law.truncated_mean());
            psi += lambda * k;
        }
        for j in 0..self.dim {
            psi += Complex64::new(0.0, u[j] * big_b[j]);
        }
        psi
    }
}

/// Averaged characteristics: drift and diffusion are `rho m1`-weighted means
/// over states plus the stationary mean of the switch shifts; the jump measure
/// is the weighted mixture of the per-state jump components.
pub fn averaged_characteristics(
    levy: &LevyModel,
    st: &StationaryData,
    p: &DMatrix<f64>,
    alpha: &JumpOperatorFamily,
) -> Result<LevyModel> {
    let n = levy.n_states();
    if st.rho.len() != n || p.nrows() != n || alpha.n_states() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if st.rho.len() != n {
                st.rho.len()
            } else if p.nrows() != n {
                p.nrows()
            } else {
                alpha.n_states()
            },
        });
    }
    if alpha.dim() != levy.dim() {
        return Err(Error::DimensionMismatch {
            expected: levy.dim(),
            got: alpha.dim(),
        });
    }
    let d = levy.dim();
    let weights: Vec<f64> = (0..n).map(|x| st.rho[x] * st.m1[x] / st.m_rho).collect();
    let mut b = Vec::with_capacity(d);
    let mut c = Vec::with_capacity(d);
    for j in 0..d {
        let shift: f64 = (0..n)
            .map(|x| st.rho[x] * (0..n).map(|y| p[(x, y)] * alpha.get(x, y)[j]).sum::<f64>())
            .sum::<f64>()
            / st.m_rho;
        b.push(CoefficientFn::Sum {
            constant: shift,
            terms: (0..n)
                .filter(|&x| weights[x] != 0.0)
                .map(|x| (weights[x], levy.state(x).b[j].clone()))
                .collect(),
        });
        c.push(CoefficientFn::Sum {
            constant: 0.0,
            terms: (0..n)
                .filter(|&x| weights[x] != 0.0)
                .map(|x| (weights[x], levy.state(x).c[j].clone()))
                .collect(),
        });
    }
    let weights = &weights;
    let jumps = (0..n)
        .filter(|&x| weights[x] != 0.0)
        .flat_map(|x| {
            levy.state(x).jumps.iter().map(move |part| JumpPart {
                intensity: part.intensity.scaled(weights[x]),
                law: part.law,
            })
        })
        .collect();
    Ok(LevyModel {
        dim: d,
        states: vec![StateLevy { b, c, jumps }],
    })
}

/// One state of a [`LevyModel`] viewed as a propagator and as a generator.
#[derive(Clone, Copy)]
pub struct LevyPropagator<'a> {
    pub model: &'a LevyModel,
    pub state: usize,
    pub mode: EvalMode,
}

impl Propagator for LevyPropagator<'_> {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn apply(
        &self,
        s: f64,
        t: f64,
        f: &dyn Observable,
        z: &[f64],
        budget: &McBudget,
        key: &StreamKey,
    ) -> Result<McEstimate> {
        if s == t {
            return Ok(McEstimate::exact(f.eval(z)));
        }
        match self.mode {
            EvalMode::Exact => {
                let law = self.increment_law(s, t).ok_or_else(|| {
                    Error::Unsupported("exact increment law unavailable for this model".into())
                })?;
                let g = f.smooth().ok_or_else(|| {
                    Error::Unsupported(
                        "exact evaluation needs a one-dimensional analytic function".into(),
                    )
                })?;
                Ok(McEstimate::exact(law.expect(g, z[0], 0)))
            }
            EvalMode::MonteCarlo => {
                let d = self.model.dim;
                let failed = std::sync::atomic::AtomicBool::new(false);
                let est = run_mc_scalar(budget, key.label(), |i| {
                    let mut rng = key.rng(i);
                    let mut y = z.to_vec();
                    if self
                        .model
                        .sample_increment_into(self.state, s, t, &mut rng, &mut y[..d])
                        .is_err()
                    {
                        failed.store(true, std::sync::atomic::Ordering::Relaxed);
                    }
                    f.eval(&y)
                });
                if failed.into_inner() {
                    let var = self.model.state(self.state).c[0].integral(s, t);
                    return Err(Error::NegativeVarianceIntegral { value: var, s, t });
                }
                Ok(est)
            }
        }
    }
}

impl TranslationInvariant for LevyPropagator<'_> {
    fn sample_increment(&self, s: f64, t: f64, rng: &mut Rng, out: &mut [f64]) -> Result<()> {
        self.model.sample_increment_into(self.state, s, t, rng, out)
    }

    fn increment_law(&self, s: f64, t: f64) -> Option<AtomLaw> {
        self.model.increment_law(self.state, s, t)
    }
}

impl Generator for LevyPropagator<'_> {
    fn dim(&self) -> usize {
        self.model.dim
    }

    fn apply(&self, t: f64, f: &dyn Observable, z: &[f64]) -> Result<f64> {
        Ok(self.model.frozen(self.state, t).apply(f, z))
    }

    fn frozen(&self, t: f64) -> FrozenGenerator {
        self.model.frozen(self.state, t)
    }

    fn frozen_derivative(&self, t: f64) -> FrozenGenerator {
        self.model.frozen_derivative(self.state, t)
    }

    fn bound(&self, t0: f64, t1: f64) -> f64 {
        self.model.generator_bound(self.state, t0, t1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_integrals_match_quadrature() {
        let fns = [
            CoefficientFn::Const(1.5),
            CoefficientFn::Affine { v0: 1.0, v1: 1.0 },
            CoefficientFn::Trig {
                v0: 0.5,
                v1: 0.8,
                omega: 3.0,
            },
            CoefficientFn::Sum {
                constant: 0.2,
                terms: vec![(
                    2.0,
                    CoefficientFn::Trig {
                        v0: 0.0,
                        v1: 1.0,
                        omega: 1.0,
                    },
                )],
            },
        ];
        for g in &fns {
            let q = crate::quadrature::gauss_legendre(20, 0.3, 1.7, |u| g.value(u));
            assert!((g.integral(0.3, 1.7) - q).abs() < 1e-12, "{g:?}");
            let h = 1e-6;
            let fd = (g.value(0.9 + h) - g.value(0.9 - h)) / (2.0 * h);
            assert!((g.derivative(0.9) - fd).abs() < 1e-8);
        }
        assert_eq!(
            CoefficientFn::Affine { v0: 1.0, v1: 1.0 }.antiderivative(2.0),
            4.0
        );
    }

    #[test]
    fn truncated_mean_of_gaussian_matches_quadrature() {
        let law = JumpLaw::Gaussian {
            mu: 0.3,
            sigma: 0.9,
        };
        let oracle = crate::quadrature::gauss_legendre(40, -1.0, 1.0, |y| {
            y * (-(y - 0.3f64).powi(2) / (2.0 * 0.81)).exp()
                / (2.0 * std::f64::consts::PI * 0.81).sqrt()
        });
        // statrs evaluates the normal cdf to about 1e-11.
        let diff = (law.truncated_mean() - oracle).abs();
        assert!(diff < 1e-10, "{diff:e} {} {oracle}", law.truncated_mean());
        let u = JumpLaw::Uniform { a: -0.5, b: 2.0 };
        assert!((u.truncated_mean() - (1.0 - 0.25) / 5.0).abs() < 1e-15);
    }

    #[test]
    fn jump_expectations_match_moments() {
        for law in [
            JumpLaw::TwoPoint {
                h_plus: 1.0,
                p: 0.3,
                h_minus: -0.5,
            },
            JumpLaw::Uniform { a: -1.0, b: 3.0 },
            JumpLaw::Gaussian {
                mu: 0.2,
                sigma: 0.7,
            },
        ] {
            assert!((law.expect(|y| y) - law.mean()).abs() < 1e-12);
            assert!((law.expect(|y| y * y) - law.second_moment()).abs() < 1e-12);
            let cf = law.expect(|y| (1.3 * y).cos());
            assert!((cf - law.char_fn(1.3).re).abs() < 1e-12);
        }
    }
}
