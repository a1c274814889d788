//! Probe of the event `{eps N(s + (T - s)/eps) <= n00}` that keeps the
//! rescaled number of switches bounded, and the containment radius built
//! from it.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::random_evolution::RandomEvolution;
use crate::rng::StreamKey;
use crate::test_function::TestFunction;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ContainmentRow {
    pub epsilon: f64,
    /// Empirical `P[eps N <= n00]`.
    pub probability: f64,
    /// 95% Wilson half-width of `probability`.
    pub half_width: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ContainmentReport {
    pub delta: f64,
    pub n_paths: u64,
    /// `(1 - delta/2)`-quantile of the raw switch count at the coarsest scale.
    pub n0: f64,
    /// `max(1 + (T - s) / M_rho, n0)`.
    pub n00: f64,
    pub rows: Vec<ContainmentRow>,
    /// Radius outside which `|f| < delta`.
    pub c_delta: f64,
    /// `||alpha|| n00`
    pub shift_term: f64,
    /// `sigma sqrt(T - s) Phi^{-1}(1 - delta / (4 ||f||))`
    pub k_delta: f64,
    /// `r (T - s)` with `r` the largest drift.
    pub drift_term: f64,
    /// `c_delta + shift_term + k_delta + drift_term`.
    pub radius: f64,
}

impl ContainmentReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Wilson score interval half-width at 95%.
fn wilson_half_width(p: f64, n: f64) -> f64 {
    let z = 1.96;
    let denom = 1.0 + z * z / n;
    z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom
}

#[allow(clippy::too_many_arguments)]
pub fn compact_containment_probe(
    evo: &RandomEvolution<'_>,
    s: f64,
    horizon: f64,
    delta: f64,
    epsilons: &[f64],
    f: &TestFunction,
    n_paths: u64,
    key: &StreamKey,
) -> Result<ContainmentReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    if epsilons.is_empty() || n_paths == 0 {
        return Err(Error::InvalidArgument(
            "need at least one epsilon and one path".into(),
        ));
    }
    let coarse = epsilons.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts: Vec<usize> = (0..n_paths)
        .map(|i| {
            evo.scaled_path(s, horizon, coarse, key, i)
                .map(|p| p.count(horizon))
        })
        .collect::<Result<_>>()?;
    counts.sort_unstable();
    let q = 1.0 - delta / 2.0;
    let idx = ((q * n_paths as f64).ceil() as usize).clamp(1, counts.len()) - 1;
    let n0 = counts[idx] as f64;
    let m_rho = evo.sm.stationary().m_rho;
    let n00 = (1.0 + (horizon - s) / m_rho).max(n0);

    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut inside = 0u64;
        for i in 0..n_paths {
            let path = evo.scaled_path(s, horizon, eps, key, i)?;
            if eps * path.count(horizon) as f64 <= n00 {
                inside += 1;
            }
        }
        let p = inside as f64 / n_paths as f64;
        let hw = wilson_half_width(p, n_paths as f64);
        rows.push(ContainmentRow {
            epsilon: eps,
            probability: p,
            half_width: hw,
            pass: p >= 1.0 - delta - hw,
        });
    }

    let levy = evo.levy;
    let d = levy.dim();
    let mut r: f64 = 0.0;
    let mut c_max: f64 = 0.0;
    for x in 0..levy.n_states() {
        let st = levy.state(x);
        let b: f64 = (0..d)
            .map(|j| st.b[j].sup_abs(s, horizon).powi(2))
            .sum::<f64>()
            .sqrt();
        r = r.max(b);
        c_max = c_max.max(
            (0..d)
                .map(|j| st.c[j].sup_abs(s, horizon))
                .fold(0.0, f64::max),
        );
    }
    let f_sup = f.sup_norm(0);
    let tail = delta / (4.0 * f_sup);
    let k_delta = if tail >= 1.0 || c_max == 0.0 {
        0.0
    } else {
        c_max.sqrt() * (horizon - s).sqrt() * Normal::standard().inverse_cdf(1.0 - tail).max(0.0)
    };
    let c_delta = f.decay_radius(delta);
    let shift_term = evo.alpha.sup_norm() * n00;
    let drift_term = r * (horizon - s);
    Ok(ContainmentReport {
        delta,
        n_paths,
        n0,
        n00,
        rows,
        c_delta,
        shift_term,
        k_delta,
        drift_term,
        radius: c_delta + shift_term + k_delta + drift_term,
    })
}
