//! The compensated martingale of the corrected test function along the
//! switching path.
//!
//! Write `Phi_k = V_eps(s, T_k) f_eps(x_k, T_k) (z)` with
//! `f_eps(y, u) = f + eps f1(y, u)`, conditional on the switching path. The
//! increments `dM_k = Phi_{k+1} - E[Phi_{k+1} | x_k, T_k]` are computed with
//! the conditional expectation over the next sojourn and the next state taken
//! by quadrature, and `M_t = sum_{k <= N(t)} dM_k`.

use super::Averager;
use crate::error::{Error, Result};
use crate::law::AtomLaw;
use crate::mc::{run_mc, McBudget, McEstimate};
use crate::propagator::{Stencil, StencilTerm};
use crate::random_evolution::{ScaledPath, PRUNED_MASS};
use crate::rng::StreamKey;
use crate::test_function::{Linear, Smooth, TestFunction};

/// Relative tolerance of the sojourn quadrature.
const SOJOURN_TOL: f64 = 1e-8;
const SOJOURN_NODES: usize = 8;

/// Slack allowed on the bracket bound.
pub const BRACKET_SLACK: f64 = 0.1;

/// One CSV row.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MartingaleRow {
    pub epsilon: f64,
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub bracket_mean: f64,
    pub bracket_bound: f64,
}

#[derive(Debug, Clone)]
pub struct MartingaleReport {
    pub epsilon: f64,
    pub z: f64,
    pub rows: Vec<MartingaleRow>,
    /// Per-path `max_t |M_t|`.
    pub sup_abs: McEstimate,
    /// Per-time mean of `|R_t|`, the remainder of the Riemann-sum expansion.
    pub residual_abs: Vec<McEstimate>,
    /// Bound `C` on `|Phi_{k+1} - Phi_k| / eps`.
    pub step_bound: f64,
}

impl MartingaleReport {
    /// Every grid mean lies within three standard errors of zero.
    pub fn null_mean_pass(&self) -> bool {
        self.rows.iter().all(|r| r.mean.abs() <= 3.0 * r.stderr)
    }

    /// Every bracket mean lies under its bound with [`BRACKET_SLACK`].
    pub fn bracket_pass(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.bracket_mean <= r.bracket_bound * (1.0 + BRACKET_SLACK))
    }
}

/// The constant `C` with `|dM_k| <= 2 C eps`:
/// `C = tau_bar sup_x ||A_x|| ||f||_1 + ||alpha|| ||f'|| + 2 sup ||f1||`, where
/// `||f1|| <= ||K||_inf max_w (m1(w) ||A_w|| ||f||_1 + |alpha_bar(w)| ||f'||) / M_rho`.
pub fn step_bound(avg: &Averager<'_>, f: &TestFunction, s: f64, t: f64) -> f64 {
    let evo = avg.evolution();
    let n = evo.sm.n_states();
    let y1 = f.y1_norm();
    let f1 = f.sup_norm(1);
    let a_norm: Vec<f64> = (0..n).map(|x| evo.levy.generator_bound(x, s, t)).collect();
    let a_sup = a_norm.iter().copied().fold(0.0, f64::max);
    let k = avg.corrector_kernel();
    let k_inf = (0..n)
        .map(|y| (0..n).map(|w| k[(y, w)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let a_op = (0..n)
        .map(|w| {
            let ab = avg.alpha_bar(w).iter().map(|a| a * a).sum::<f64>().sqrt();
            (avg.m1()[w] * a_norm[w] * y1 + ab * f1) / avg.m_rho()
        })
        .fold(0.0, f64::max);
    evo.sm.tau_bar() * a_sup * y1 + evo.alpha.sup_norm() * f1 + 2.0 * k_inf * a_op
}

/// `f + eps f1(y, u)`.
fn corrected<'b>(
    avg: &'b Averager<'_>,
    f: &'b dyn Smooth,
    eps: f64,
    y: usize,
    u: f64,
) -> Box<dyn Smooth + 'b> {
    if let Some(terms) = avg.corrector_terms(y, u) {
        let unit = StencilTerm {
            coef: 1.0,
            shift: 0.0,
            var: 0.0,
            order: 0,
        };
        let scaled = terms.into_iter().map(|t| StencilTerm {
            coef: eps * t.coef,
            ..t
        });
        return Box::new(Stencil::new(f, std::iter::once(unit).chain(scaled)));
    }
    let mut out = Linear::default();
    out.push(1.0, f);
    out.push(eps, avg.corrector_smooth(y, u, f));
    Box::new(out)
}

/// Per-path quantities at each grid time.
struct PathValues {
    martingale: Vec<f64>,
    bracket: Vec<f64>,
    counts: Vec<f64>,
    remainder: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn one_path(
    avg: &Averager<'_>,
    s: f64,
    t_grid: &[f64],
    eps: f64,
    f: &TestFunction,
    z: f64,
    key: &StreamKey,
    i: u64,
) -> Result<PathValues> {
    let evo = avg.evolution();
    let sm = evo.sm;
    let t_max = t_grid.last().copied().unwrap_or(s);
    let mut rng = key.child("sm").rng(i);
    let raw = sm.sample_path_beyond(s, s + (t_max - s) / eps, &mut rng);
    let path = ScaledPath::new(&raw, eps);
    let n_max = path.count(t_max);

    // dM_k for k = 0..=n_max; needs T_{n_max + 1}, which lies beyond t_max.
    let mut dm = Vec::with_capacity(n_max + 1);
    let mut law = AtomLaw::dirac(0.0);
    for k in 0..=n_max {
        law = law.pruned(PRUNED_MASS).0;
        let (x, tk) = (path.states[k], path.times[k]);
        let (y_next, t_next) = (path.states[k + 1], path.times[k + 1]);
        let seg = evo.levy.increment_law(x, tk, t_next).ok_or_else(|| {
            Error::Unsupported("martingale diagnostics need mixture increment laws".into())
        })?;
        let next_law = law.convolve(&seg).shift(eps * evo.alpha.get(x, y_next)[0]);
        let realised = next_law.expect(&corrected(avg, f, eps, y_next, t_next), z, 0);

        // The next sojourn's increment does not depend on the next state, so
        // one convolution per node serves every branch.
        let p = sm.p();
        let mut failed = None;
        let expected = sm
            .sojourn(x)
            .expect_nodes(SOJOURN_TOL, SOJOURN_NODES, |tau| {
                let u = tk + eps * tau;
                let Some(seg) = evo.levy.increment_law(x, tk, u) else {
                    failed = Some(Error::Unsupported("increment law unavailable".into()));
                    return f64::NAN;
                };
                let moved = law.convolve(&seg);
                (0..sm.n_states())
                    .filter(|&y| p[(x, y)] != 0.0)
                    .map(|y| {
                        let shift = eps * evo.alpha.get(x, y)[0];
                        p[(x, y)] * moved.expect(&corrected(avg, f, eps, y, u), z + shift, 0)
                    })
                    .sum()
            });
        if let Some(err) = failed {
            return Err(err);
        }
        let expected = expected?;
        dm.push(realised - expected);
        law = next_law;
    }

    let a_hat = avg.averaged_model();
    let fz = f.deriv(z, 0);
    let mut out = PathValues {
        martingale: Vec::with_capacity(t_grid.len()),
        bracket: Vec::with_capacity(t_grid.len()),
        counts: Vec::with_capacity(t_grid.len()),
        remainder: Vec::with_capacity(t_grid.len()),
    };
    for &t in t_grid {
        let n = path.count(t);
        let m: f64 = dm[..=n].iter().sum();
        out.martingale.push(m);
        out.bracket.push(dm[..=n].iter().map(|d| d * d).sum());
        out.counts.push((n + 1) as f64);

        let n_eps = 1 + ((t - s) / (eps * avg.m_rho())).floor() as usize;
        let mut times: Vec<f64> = (1..=n_eps)
            .map(|k| s + k as f64 * (t - s) / n_eps as f64)
            .collect();
        times.push(t);
        let laws = evo.laws_at(&path, &times)?;
        let v = laws[n_eps].expect(f, z, 0);
        let riemann: f64 = times[..n_eps]
            .iter()
            .zip(&laws)
            .map(|(&tk, law)| law.expect(&a_hat.frozen(0, tk).applied(f), z, 0))
            .sum();
        out.remainder
            .push((v - fz - eps * avg.m_rho() * riemann - m).abs());
    }
    Ok(out)
}

/// Martingale diagnostics at one scale: per-time mean, standard error and
/// bracket of `M_t(z)` over independent paths, with the bracket bound
/// `4 C^2 eps^2 E[N(t) + 1]`.
#[allow(clippy::too_many_arguments)]
pub fn martingale_diagnostics(
    avg: &Averager<'_>,
    s: f64,
    t_grid: &[f64],
    epsilon: f64,
    f: &TestFunction,
    z: f64,
    budget: &McBudget,
    key: &StreamKey,
) -> Result<MartingaleReport> {
    if avg.evolution().dim() != 1 {
        return Err(Error::Unsupported(
            "martingale diagnostics are one-dimensional".into(),
        ));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) || t_grid[0] < s {
        return Err(Error::InvalidArgument(
            "time grid must be ascending and start at or after s".into(),
        ));
    }
    let nt = t_grid.len();
    let failure = std::sync::Mutex::new(None);
    let run = run_mc(budget, key.label(), 4 * nt + 1, |i, out| {
        match one_path(avg, s, t_grid, epsilon, f, z, key, i) {
            Ok(v) => {
                for j in 0..nt {
                    out[j] = v.martingale[j];
                    out[nt + j] = v.bracket[j];
                    out[2 * nt + j] = v.counts[j];
                    out[3 * nt + j] = v.remainder[j];
                }
                out[4 * nt] = v.martingale.iter().map(|m| m.abs()).fold(0.0, f64::max);
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
    let est = run.estimates;
    let c = step_bound(avg, f, s, t_grid[nt - 1]);
    let rows = (0..nt)
        .map(|j| MartingaleRow {
            epsilon,
            t: t_grid[j],
            mean: est[j].mean,
            stderr: est[j].stderr(),
            bracket_mean: est[nt + j].mean,
            bracket_bound: 4.0 * c * c * epsilon * epsilon * est[2 * nt + j].mean,
        })
        .collect();
    Ok(MartingaleReport {
        epsilon,
        z,
        rows,
        sup_abs: est[4 * nt].clone(),
        residual_abs: est[3 * nt..4 * nt].to_vec(),
        step_bound: c,
    })
}
