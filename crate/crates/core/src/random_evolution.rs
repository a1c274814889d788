//! Random evolutions: Lévy propagators switched by a rescaled semi-Markov
//! path, with a shift operator applied at every switch.
//!
//! With switching times `T_k` of the unscaled path started at `s`, the
//! rescaled times are `T^eps_k = s + eps (T_k - s)`. On `[T^eps_{k-1},
//! T^eps_k)` the displacement evolves with the Lévy characteristics of
//! `x_{k-1}`, and at `T^eps_k` it jumps by `eps alpha(x_{k-1}, x_k)`.

use crate::error::{Error, Result};
use crate::law::AtomLaw;
use crate::levy::LevyModel;
use crate::mc::{run_mc, McBudget, McEstimate};
use crate::quadrature::adaptive_simpson;
use crate::rng::StreamKey;
use crate::semi_markov::{RenewalPath, SemiMarkovModel};
use crate::test_function::Smooth;

/// Atom mass the integral representation may drop per segment.
pub const PRUNED_MASS: f64 = 1e-10;

/// Shift vectors `alpha(x, y)` applied at a switch from `x` to `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperatorFamily {
    dim: usize,
    n_states: usize,
    table: Vec<Vec<f64>>,
}

impl JumpOperatorFamily {
    /// `entries[x][y]` is the shift vector for a switch `x -> y`.
    pub fn new(dim: usize, entries: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = entries.len();
        let mut table = Vec::with_capacity(n * n);
        for (x, row) in entries.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (y, v) in row.into_iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: v.len(),
                    });
                }
                if v.iter().any(|a| !a.is_finite()) {
                    return Err(Error::Construction(format!(
                        "alpha({x}, {y}) is not finite"
                    )));
                }
                table.push(v);
            }
        }
        Ok(JumpOperatorFamily {
            dim,
            n_states: n,
            table,
        })
    }

    /// One-dimensional shifts from a scalar matrix.
    pub fn from_scalars(entries: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            1,
            entries
                .into_iter()
                .map(|row| row.into_iter().map(|a| vec![a]).collect())
                .collect(),
        )
    }

    pub fn zeros(dim: usize, n_states: usize) -> Self {
        JumpOperatorFamily {
            dim,
            n_states,
            table: vec![vec![0.0; dim]; n_states * n_states],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn get(&self, x: usize, y: usize) -> &[f64] {
        &self.table[x * self.n_states + y]
    }

    /// `max_{x, y} |alpha(x, y)|` in the Euclidean norm.
    pub fn sup_norm(&self) -> f64 {
        self.table
            .iter()
            .map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// A semi-Markov path on the rescaled clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledPath {
    pub epsilon: f64,
    /// `T^eps_0 = s, T^eps_1, ...`
    pub times: Vec<f64>,
    pub states: Vec<usize>,
    /// Rescaled time up to which switches are known.
    pub horizon: f64,
}

impl ScaledPath {
    pub fn new(path: &RenewalPath, epsilon: f64) -> Self {
        let s = path.start;
        ScaledPath {
            epsilon,
            times: path
                .jump_times
                .iter()
                .map(|&t| s + epsilon * (t - s))
                .collect(),
            states: path.states.clone(),
            horizon: s + epsilon * (path.horizon - s),
        }
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    /// Number of switches in `(s, t]`; a switch exactly at `t` counts.
    pub fn count(&self, t: f64) -> usize {
        self.times[1..].partition_point(|&tk| tk <= t)
    }

    /// State in force at `t` (the post-switch state at a switch time).
    pub fn state_at(&self, t: f64) -> usize {
        self.states[self.count(t)]
    }
}

/// One path of the evolution up to a single time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionDisplacement {
    pub total: Vec<f64>,
    pub path: ScaledPath,
    /// Lévy increment of each segment, the last one ending at `t`.
    pub per_segment: Vec<Vec<f64>>,
    /// Shift `eps alpha(x_{k-1}, x_k)` of each switch up to `t`.
    pub per_switch: Vec<Vec<f64>>,
}

/// The displacement of one path at one time, as exported.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementRow {
    pub path: u64,
    pub t: f64,
    pub total: Vec<f64>,
    pub n_switches: usize,
}

/// Values just before and after a switch.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    pub before: Vec<f64>,
    pub after: Vec<f64>,
}

/// A semi-Markov model, per-state Lévy characteristics and switch shifts.
#[derive(Debug, Clone)]
pub struct RandomEvolution<'a> {
    pub sm: &'a SemiMarkovModel,
    pub levy: &'a LevyModel,
    pub alpha: &'a JumpOperatorFamily,
}

impl<'a> RandomEvolution<'a> {
    pub fn new(
        sm: &'a SemiMarkovModel,
        levy: &'a LevyModel,
        alpha: &'a JumpOperatorFamily,
    ) -> Result<Self> {
        let n = sm.n_states();
        for got in [levy.n_states(), alpha.n_states()] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        if alpha.dim() != levy.dim() {
            return Err(Error::DimensionMismatch {
                expected: levy.dim(),
                got: alpha.dim(),
            });
        }
        Ok(RandomEvolution { sm, levy, alpha })
    }

    pub fn dim(&self) -> usize {
        self.levy.dim()
    }

    /// Samples path `i` of the switching process far enough to cover `t`
    /// on the rescaled clock. The stream does not depend on `epsilon`, so
    /// paths are coupled across scales.
    pub fn scaled_path(
        &self,
        s: f64,
        t: f64,
        epsilon: f64,
        key: &StreamKey,
        i: u64,
    ) -> Result<ScaledPath> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if t < s {
            return Err(Error::InvalidArgument(format!("t = {t} precedes s = {s}")));
        }
        let mut rng = key.child("sm").rng(i);
        let fast = s + (t - s) / epsilon;
        Ok(ScaledPath::new(
            &self.sm.sample_path(s, fast, &mut rng),
            epsilon,
        ))
    }

    /// Evolves the displacement along `path` and records it at each of the
    /// ascending times `ts`. Lévy increments are drawn from stream `i` of
    /// `key`. When `switches` is given, pre- and post-switch values are
    /// appended to it.
    pub fn evolve_on_path(
        &self,
        path: &ScaledPath,
        ts: &[f64],
        key: &StreamKey,
        i: u64,
        mut switches: Option<&mut Vec<SwitchRecord>>,
    ) -> Result<Vec<(Vec<f64>, usize)>> {
        let d = self.dim();
        let eps = path.epsilon;
        let mut rng = key.child("levy").rng(i);
        let mut pos = vec![0.0; d];
        let mut k = 0usize;
        let mut cur = path.start();
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            if t < cur {
                return Err(Error::InvalidArgument(format!(
                    "times must be ascending and >= s, got {t}"
                )));
            }
            if t > path.horizon {
                return Err(Error::HorizonExceeded {
                    t,
                    horizon: path.horizon,
                });
            }
            while k + 1 < path.times.len() && path.times[k + 1] <= t {
                let (x, y) = (path.states[k], path.states[k + 1]);
                let next = path.times[k + 1];
                self.levy
                    .sample_increment_into(x, cur, next, &mut rng, &mut pos)?;
                let before = switches.as_ref().map(|_| pos.clone());
                for (p, a) in pos.iter_mut().zip(self.alpha.get(x, y)) {
                    *p += eps * a;
                }
                if let (Some(rec), Some(before)) = (switches.as_deref_mut(), before) {
                    rec.push(SwitchRecord {
                        time: next,
                        from: x,
                        to: y,
                        before,
                        after: pos.clone(),
                    });
                }
                k += 1;
                cur = next;
            }
            self.levy
                .sample_increment_into(path.states[k], cur, t, &mut rng, &mut pos)?;
            cur = t;
            out.push((pos.clone(), k));
        }
        Ok(out)
    }

    /// Path `i` evolved to `t`, keeping every segment increment and shift.
    pub fn evolve_sample(
        &self,
        s: f64,
        t: f64,
        epsilon: f64,
        key: &StreamKey,
        i: u64,
    ) -> Result<EvolutionDisplacement> {
        let path = self.scaled_path(s, t, epsilon, key, i)?;
        let d = self.dim();
        let mut rng = key.child("levy").rng(i);
        let n = path.count(t);
        let mut per_segment = Vec::with_capacity(n + 1);
        let mut per_switch = Vec::with_capacity(n);
        let mut total = vec![0.0; d];
        for k in 0..=n {
            let a = path.times[k];
            let b = if k < n { path.times[k + 1] } else { t };
            let mut inc = vec![0.0; d];
            self.levy
                .sample_increment_into(path.states[k], a, b, &mut rng, &mut inc)?;
            for (tot, v) in total.iter_mut().zip(&inc) {
                *tot += v;
            }
            per_segment.push(inc);
            if k < n {
                let shift: Vec<f64> = self
                    .alpha
                    .get(path.states[k], path.states[k + 1])
                    .iter()
                    .map(|a| epsilon * a)
                    .collect();
                for (tot, v) in total.iter_mut().zip(&shift) {
                    *tot += v;
                }
                per_switch.push(shift);
            }
        }
        Ok(EvolutionDisplacement {
            total,
            path,
            per_segment,
            per_switch,
        })
    }

    /// Monte Carlo estimate of `V_eps(s, t) f (z)`.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate_v(
        &self,
        s: f64,
        t: f64,
        epsilon: f64,
        f: &dyn Smooth,
        z: f64,
        budget: &McBudget,
        key: &StreamKey,
    ) -> Result<McEstimate> {
        let mut est = self.expectations(s, epsilon, &[(f, z, t)], budget, key)?;
        Ok(est.pop().expect("one cell"))
    }

    /// Displacements of `n_paths` independent paths at the times `ts`.
    pub fn evolve_multi(
        &self,
        s: f64,
        ts: &[f64],
        epsilon: f64,
        n_paths: u64,
        key: &StreamKey,
    ) -> Result<Vec<DisplacementRow>> {
        let t_max = ts.iter().copied().fold(s, f64::max);
        let mut out = Vec::with_capacity(ts.len() * n_paths as usize);
        for i in 0..n_paths {
            let path = self.scaled_path(s, t_max, epsilon, key, i)?;
            for (&t, (total, n)) in ts.iter().zip(self.evolve_on_path(&path, ts, key, i, None)?) {
                out.push(DisplacementRow {
                    path: i,
                    t,
                    total,
                    n_switches: n,
                });
            }
        }
        Ok(out)
    }

    /// Monte Carlo estimates of `E[f_j(z_j + X_t)]` for each cell
    /// `(f_j, z_j, t_j)`, with every cell sharing the same paths.
    pub fn expectations(
        &self,
        s: f64,
        epsilon: f64,
        cells: &[(&dyn Smooth, f64, f64)],
        budget: &McBudget,
        key: &StreamKey,
    ) -> Result<Vec<McEstimate>> {
        let mut ts: Vec<f64> = cells.iter().map(|c| c.2).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        ts.dedup();
        let t_max = ts.last().copied().unwrap_or(s);
        let index: Vec<usize> = cells
            .iter()
            .map(|c| ts.iter().position(|&t| t == c.2).expect("time present"))
            .collect();
        let failure = std::sync::Mutex::new(None);
        let run = run_mc(budget, key.label(), cells.len(), |i, out| {
            let sample = self
                .scaled_path(s, t_max, epsilon, key, i)
                .and_then(|p| self.evolve_on_path(&p, &ts, key, i, None));
            match sample {
                Ok(vals) => {
                    for (j, cell) in cells.iter().enumerate() {
                        out[j] = cell.0.deriv(cell.1 + vals[index[j]].0[0], 0);
                    }
                }
                Err(e) => {
                    *failure.lock().expect("poisoned") = Some(e);
                    out.fill(f64::NAN);
                }
            }
        });
        if let Some(e) = failure.into_inner().expect("poisoned") {
            return Err(e);
        }
        Ok(run.estimates)
    }

    /// Exact law of the displacement at `t` given the switching path
    /// (one dimension, mixture jump laws). With `left_limit` the shift of a
    /// switch exactly at `t` is excluded.
    pub fn path_law(&self, path: &ScaledPath, t: f64, left_limit: bool) -> Result<AtomLaw> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(
                "exact path laws are one-dimensional".into(),
            ));
        }
        let unsupported = || Error::Unsupported("increment law has no mixture form".into());
        let mut law = AtomLaw::dirac(0.0);
        let mut cur = path.start();
        let mut k = 0usize;
        while k + 1 < path.times.len() && path.times[k + 1] <= t {
            let (x, y) = (path.states[k], path.states[k + 1]);
            let next = path.times[k + 1];
            if next > cur {
                law = law.convolve(
                    &self
                        .levy
                        .increment_law(x, cur, next)
                        .ok_or_else(unsupported)?,
                );
            }
            cur = next;
            if left_limit && next == t {
                return Ok(law);
            }
            law = law.shift(path.epsilon * self.alpha.get(x, y)[0]);
            k += 1;
        }
        if t > cur {
            law = law.convolve(
                &self
                    .levy
                    .increment_law(path.states[k], cur, t)
                    .ok_or_else(unsupported)?,
            );
        }
        Ok(law)
    }

    /// Laws of the displacement at each of the ascending times `ts`, from a
    /// single walk along the path. Equivalent to calling [`Self::path_law`]
    /// at each time.
    pub fn laws_at(&self, path: &ScaledPath, ts: &[f64]) -> Result<Vec<AtomLaw>> {
        if self.dim() != 1 {
            return Err(Error::Unsupported(
                "exact path laws are one-dimensional".into(),
            ));
        }
        let unsupported = || Error::Unsupported("increment law has no mixture form".into());
        let mut out = Vec::with_capacity(ts.len());
        let mut law = AtomLaw::dirac(0.0);
        let mut cur = path.start();
        let mut k = 0usize;
        for &t in ts {
            if t < cur {
                return Err(Error::InvalidArgument(format!(
                    "times must ascend from {cur}, got {t}"
                )));
            }
            while k + 1 < path.times.len() && path.times[k + 1] <= t {
                let next = path.times[k + 1];
                if next > cur {
                    law = law.convolve(
                        &self
                            .levy
                            .increment_law(path.states[k], cur, next)
                            .ok_or_else(unsupported)?,
                    );
                }
                law =
                    law.shift(path.epsilon * self.alpha.get(path.states[k], path.states[k + 1])[0]);
                cur = next;
                k += 1;
            }
            if t > cur {
                law = law.convolve(
                    &self
                        .levy
                        .increment_law(path.states[k], cur, t)
                        .ok_or_else(unsupported)?,
                );
                cur = t;
            }
            out.push(law.clone());
        }
        Ok(out)
    }

    /// `V_eps(s, t) f (z)` conditional on the switching path.
    pub fn evaluate_on_path(
        &self,
        path: &ScaledPath,
        t: f64,
        f: &dyn Smooth,
        z: f64,
    ) -> Result<f64> {
        Ok(self.path_law(path, t, false)?.expect(f, z, 0))
    }

    /// Pathwise residual of
    /// `V f = f + int_s^t V(s,u) A_{x(u)}(u) f du + sum_k V(s,T_k-)[D_k - I] f`,
    /// where `D_k` is the shift at the `k`-th switch. The right side runs on
    /// laws with at most [`PRUNED_MASS`] dropped per segment.
    pub fn integral_representation_residual(
        &self,
        path: &ScaledPath,
        t: f64,
        f: &dyn Smooth,
        z: f64,
        tol: f64,
    ) -> Result<(f64, f64)> {
        let lhs = self.evaluate_on_path(path, t, f, z)?;
        let mut rhs = f.deriv(z, 0);
        let mut quad_err = 0.0;
        let unsupported = || Error::Unsupported("increment law has no mixture form".into());
        let n = path.count(t);
        // Law of the displacement at `T_k`, after the shift of switch `k`.
        let mut law = AtomLaw::dirac(0.0);
        for k in 0..=n {
            let a = path.times[k];
            let b = if k < n { path.times[k + 1] } else { t };
            let x = path.states[k];
            // Light atoms cost as much as heavy ones at every quadrature node.
            law = law.pruned(PRUNED_MASS).0;
            let mut left = law.clone();
            if b > a {
                // Integrating only over the partial segment keeps the switch
                // at `b` out of it.
                let q = adaptive_simpson(
                    |u| {
                        let gen = self.levy.frozen(x, u);
                        match self.levy.increment_law(x, a, u) {
                            Some(seg) => law.expect_convolved(&seg, &gen.applied(f), z, 0),
                            None => f64::NAN,
                        }
                    },
                    a,
                    b,
                    tol,
                )?;
                rhs += q.value;
                quad_err += q.error;
                left = law.convolve(&self.levy.increment_law(x, a, b).ok_or_else(unsupported)?);
            }
            if k < n {
                let shift = path.epsilon * self.alpha.get(x, path.states[k + 1])[0];
                rhs += left.expect(f, z + shift, 0) - left.expect(f, z, 0);
                law = left.shift(shift);
            }
        }
        Ok(((lhs - rhs).abs(), quad_err))
    }
}

/// Residual of `V(s, T_n) f = V(s, T_n-) D_n f` at the `n`-th switch of
/// `path` (counting from one), from the exact conditional laws.
pub fn jump_discontinuity_residual(
    evo: &RandomEvolution<'_>,
    path: &ScaledPath,
    n: usize,
    f: &dyn Smooth,
    z: f64,
) -> Result<f64> {
    if n == 0 || n >= path.times.len() {
        return Err(Error::InvalidArgument(format!(
            "switch {n} is not on a path with {} switches",
            path.times.len() - 1
        )));
    }
    let tn = path.times[n];
    let after = evo.path_law(path, tn, false)?.expect(f, z, 0);
    let shift = path.epsilon * evo.alpha.get(path.states[n - 1], path.states[n])[0];
    let before = evo.path_law(path, tn, true)?.expect(f, z + shift, 0);
    Ok((after - before).abs())
}

/// Largest ratio `|f(z + eps alpha) - f(z)| / (eps |alpha| ||f'||)` over all
/// shifts and grid points; the shift operators satisfy the bound when this
/// is at most one.
pub fn shift_bound_ratio(
    alpha: &JumpOperatorFamily,
    epsilon: f64,
    f: &dyn Smooth,
    f_prime_sup: f64,
    z_grid: &[f64],
) -> f64 {
    let mut worst: f64 = 0.0;
    for x in 0..alpha.n_states() {
        for y in 0..alpha.n_states() {
            let a = alpha.get(x, y)[0];
            let bound = epsilon * a.abs() * f_prime_sup;
            for &z in z_grid {
                let diff = (f.deriv(z + epsilon * a, 0) - f.deriv(z, 0)).abs();
                if bound > 0.0 {
                    worst = worst.max(diff / bound);
                } else if diff > 0.0 {
                    worst = f64::INFINITY;
                }
            }
        }
    }
    worst
}

/// Monte Carlo mean of `eps N_eps(t)` over `n_paths` paths, to compare with
/// `(t - s) / m_rho`.
pub fn rescaled_switch_rate(
    evo: &RandomEvolution<'_>,
    s: f64,
    t: f64,
    epsilon: f64,
    n_paths: u64,
    key: &StreamKey,
) -> Result<McEstimate> {
    let mut est = McEstimate::empty(key.label());
    for i in 0..n_paths {
        let path = evo.scaled_path(s, t, epsilon, key, i)?;
        est.push(epsilon * path.count(t) as f64);
    }
    Ok(est)
}
