//! Convergence sweep of `V_eps(s, t) f (z)` towards `Gammahat(s, t) f (z)`
//! over a descending sequence of scales.

use statrs::distribution::{ContinuousCDF, Normal};

use super::Averager;
use crate::error::Result;
use crate::mc::{McBudget, McEstimate};
use crate::rng::StreamKey;
use crate::test_function::{Smooth, TestFunction};

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub s: f64,
    /// Strictly decreasing, in `(0, 1]`.
    pub epsilons: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub z_grid: Vec<f64>,
    pub functions: Vec<(String, TestFunction)>,
    pub budget: McBudget,
    /// Pooled half-widths below this never count as too wide.
    pub ci_floor: f64,
    /// Required ratio between the coarsest and the finest error.
    pub final_ratio: f64,
    /// Family-wise level of the pooled confidence bands.
    pub level: f64,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub f_id: String,
    pub t: f64,
    pub z: f64,
    pub v_eps_mean: f64,
    pub v_eps_hw: f64,
    pub gamma_hat_mean: f64,
    pub gamma_hat_hw: f64,
    pub abs_err: f64,
}

/// Summary at one scale.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SweepCell {
    pub epsilon: f64,
    /// `max` over the grid of `|V_eps f - Gammahat f|`.
    pub err: f64,
    /// Simultaneous half-width over the grid.
    pub pooled: f64,
    /// Grid cell with the widest interval.
    pub widest: String,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
    /// Errors do not increase beyond the pooled slack.
    pub monotone_pass: bool,
    /// The finest error is below the coarsest divided by `final_ratio`,
    /// with slack.
    pub final_pass: bool,
    /// Pooled half-widths are small enough for the comparison to mean
    /// anything.
    pub budget_ok: bool,
    /// Least-squares slope of `log err` against `log eps`.
    pub rate: f64,
}

impl SweepReport {
    pub fn pass(&self) -> bool {
        self.budget_ok && self.monotone_pass && self.final_pass
    }

    /// The scale and cell whose interval is the widest.
    pub fn limiting_cell(&self) -> Option<&SweepCell> {
        self.cells
            .iter()
            .max_by(|a, b| a.pooled.partial_cmp(&b.pooled).expect("finite"))
    }
}

/// Bonferroni normal quantile for `m` simultaneous two-sided intervals.
pub fn bonferroni_quantile(level: f64, m: usize) -> f64 {
    Normal::standard().inverse_cdf(1.0 - level / (2.0 * m.max(1) as f64))
}

pub fn lln_sweep(avg: &Averager<'_>, cfg: &SweepSettings, key: &StreamKey) -> Result<SweepReport> {
    use crate::error::Error;
    if cfg.epsilons.is_empty()
        || cfg.t_grid.is_empty()
        || cfg.z_grid.is_empty()
        || cfg.functions.is_empty()
    {
        return Err(Error::InvalidArgument(
            "sweep grids must be nonempty".into(),
        ));
    }
    if cfg.epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "epsilons must be strictly decreasing".into(),
        ));
    }
    if cfg.epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err(Error::InvalidArgument("epsilons must lie in (0, 1]".into()));
    }

    let mut specs: Vec<(&str, &TestFunction, f64, f64)> = Vec::new();
    for (id, f) in &cfg.functions {
        for &t in &cfg.t_grid {
            for &z in &cfg.z_grid {
                specs.push((id.as_str(), f, t, z));
            }
        }
    }
    let m = specs.len();
    let q = bonferroni_quantile(cfg.level, m);

    let gamma_key = key.child("gamma-hat");
    let gamma: Vec<McEstimate> = specs
        .iter()
        .map(|&(id, f, t, z)| {
            avg.limit_propagator(
                cfg.s,
                t,
                f,
                &[z],
                &cfg.budget,
                &gamma_key.child(&format!("{id}/{t}/{z}")),
            )
        })
        .collect::<Result<_>>()?;

    let cells: Vec<(&dyn Smooth, f64, f64)> = specs
        .iter()
        .map(|&(_, f, t, z)| (f as &dyn Smooth, z, t))
        .collect();
    let v_key = key.child("v-eps");
    let mut rows = Vec::with_capacity(m * cfg.epsilons.len());
    let mut summary = Vec::with_capacity(cfg.epsilons.len());
    for &eps in &cfg.epsilons {
        let v = avg
            .evolution()
            .expectations(cfg.s, eps, &cells, &cfg.budget, &v_key)?;
        let mut err: f64 = 0.0;
        let mut widest = (0.0, String::new());
        for (j, &(id, _, t, z)) in specs.iter().enumerate() {
            let abs_err = (v[j].mean - gamma[j].mean).abs();
            err = err.max(abs_err);
            let sigma = v[j].stderr().hypot(if gamma[j].n > 1 {
                gamma[j].stderr()
            } else {
                0.0
            });
            if sigma >= widest.0 {
                widest = (sigma, format!("f_id={id} t={t} z={z}"));
            }
            rows.push(SweepRow {
                epsilon: eps,
                f_id: id.to_string(),
                t,
                z,
                v_eps_mean: v[j].mean,
                v_eps_hw: v[j].half_width(),
                gamma_hat_mean: gamma[j].mean,
                gamma_hat_hw: if gamma[j].n > 1 {
                    gamma[j].half_width()
                } else {
                    0.0
                },
                abs_err,
            });
        }
        summary.push(SweepCell {
            epsilon: eps,
            err,
            pooled: q * widest.0,
            widest: format!("epsilon={eps} {}", widest.1),
        });
    }

    let monotone_pass = summary
        .windows(2)
        .all(|w| w[1].err <= w[0].err + w[0].pooled + w[1].pooled);
    let first = &summary[0];
    let last = &summary[summary.len() - 1];
    let k = cfg.final_ratio;
    let final_pass = last.err <= first.err / k + last.pooled + first.pooled / k;
    let pooled_max = summary.iter().map(|c| c.pooled).fold(0.0, f64::max);
    let budget_ok = pooled_max <= (first.err / 2.0).max(cfg.ci_floor);

    let pts: Vec<(f64, f64)> = summary
        .iter()
        .filter(|c| c.err > 0.0)
        .map(|c| (c.epsilon.ln(), c.err.ln()))
        .collect();
    let rate = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };

    Ok(SweepReport {
        rows,
        cells: summary,
        monotone_pass,
        final_pass,
        budget_ok,
        rate,
    })
}
