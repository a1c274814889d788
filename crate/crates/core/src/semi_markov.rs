//! Finite-state Markov renewal processes with bounded sojourn times.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{ErgodicityFailure, Error, Result};
use crate::quadrature::{gauss_legendre, jacobi_rule};
use crate::rng::Rng;

/// Tolerance on the row sums of a transition matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Construction(
                "state space must contain at least one state".into(),
            ));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Construction(format!("duplicate state label '{l}'")));
            }
        }
        Ok(StateSpace { labels })
    }

    /// States labelled `0, 1, ..., n-1`.
    pub fn indexed(n: usize) -> Self {
        StateSpace {
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }
}

/// Holding-time distribution of one state. All families have bounded support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SojournLaw {
    Deterministic {
        c: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// `a + (b - a) X` with `X ~ Beta(alpha, beta)`.
    ScaledBeta {
        a: f64,
        b: f64,
        alpha: f64,
        beta: f64,
    },
}

impl SojournLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SojournLaw::Deterministic { c } => c > 0.0 && c.is_finite(),
            SojournLaw::Uniform { a, b } => a >= 0.0 && a < b && b.is_finite(),
            SojournLaw::ScaledBeta { a, b, alpha, beta } => {
                a >= 0.0
                    && a < b
                    && b.is_finite()
                    && alpha > 0.0
                    && beta > 0.0
                    && alpha.is_finite()
                    && beta.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Construction(format!("invalid sojourn law {self:?}")))
        }
    }

    /// Upper end of the support, the largest possible holding time.
    pub fn support_upper(&self) -> f64 {
        match *self {
            SojournLaw::Deterministic { c } => c,
            SojournLaw::Uniform { b, .. } | SojournLaw::ScaledBeta { b, .. } => b,
        }
    }

    /// Closed-form raw moment `E[tau^n]` for `1 <= n <= 4`.
    pub fn moment(&self, n: u32) -> Result<f64> {
        if n == 0 || n > 4 {
            return Err(Error::UnsupportedOrder(n));
        }
        let ni = n as i32;
        Ok(match *self {
            SojournLaw::Deterministic { c } => c.powi(ni),
            SojournLaw::Uniform { a, b } => {
                (b.powi(ni + 1) - a.powi(ni + 1)) / ((n + 1) as f64 * (b - a))
            }
            SojournLaw::ScaledBeta { a, b, alpha, beta } => {
                let width = b - a;
                let mut total = 0.0;
                let mut beta_moment = 1.0;
                let mut binom = 1.0;
                for k in 0..=n {
                    if k > 0 {
                        let j = (k - 1) as f64;
                        beta_moment *= (alpha + j) / (alpha + beta + j);
                        binom = binom * (n - k + 1) as f64 / k as f64;
                    }
                    total += binom * a.powi(ni - k as i32) * width.powi(k as i32) * beta_moment;
                }
                total
            }
        })
    }

    pub fn mean(&self) -> f64 {
        self.moment(1).expect("order 1 is supported")
    }

    /// Draws a holding time in `(0, support_upper]`.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            SojournLaw::Deterministic { c } => c,
            SojournLaw::Uniform { a, b } => {
                // 1 - U lies in (0, 1], so the draw never hits a zero-length sojourn.
                let u = 1.0 - rng.random::<f64>();
                a + (b - a) * u
            }
            SojournLaw::ScaledBeta { a, b, alpha, beta } => {
                let dist = Beta::new(alpha, beta).expect("validated parameters");
                loop {
                    let tau = a + (b - a) * dist.sample(rng);
                    if tau > 0.0 {
                        return tau;
                    }
                }
            }
        }
    }

    /// `E[g(tau)]` with an `n`-point Gauss rule matched to the family.
    pub fn expect_with(&self, n: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
        match *self {
            SojournLaw::Deterministic { c } => g(c),
            SojournLaw::Uniform { a, b } => gauss_legendre(n, a, b, g) / (b - a),
            SojournLaw::ScaledBeta { a, b, alpha, beta } => {
                let rule = jacobi_rule(n, beta - 1.0, alpha - 1.0).expect("validated parameters");
                let mut num = 0.0;
                let mut den = 0.0;
                for &(x, w) in rule {
                    let u = 0.5 * (1.0 + x);
                    num += w * g(a + (b - a) * u);
                    den += w;
                }
                num / den
            }
        }
    }

    /// `E[g(tau)]`, checked by comparing a 16-point rule against a 32-point rule.
    pub fn expect(&self, tol: f64, g: impl FnMut(f64) -> f64) -> Result<f64> {
        self.expect_nodes(tol, 16, g)
    }

    /// `E[g(tau)]`, checked by comparing an `n`-point rule against a
    /// `2n`-point rule.
    pub fn expect_nodes(&self, tol: f64, n: usize, mut g: impl FnMut(f64) -> f64) -> Result<f64> {
        if let SojournLaw::Deterministic { c } = *self {
            return Ok(g(c));
        }
        let coarse = self.expect_with(n, &mut g);
        let fine = self.expect_with(2 * n, &mut g);
        if (coarse - fine).abs() > tol * (1.0 + fine.abs()) {
            return Err(Error::QuadratureNonConvergence(format!(
                "sojourn expectation changed by {:.3e} between {n} and {} nodes",
                (coarse - fine).abs(),
                2 * n
            )));
        }
        Ok(fine)
    }
}

/// One structural precondition and whether it holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
    #[serde(skip)]
    first_error: Option<String>,
    #[serde(skip)]
    first_kind: Option<FailureKind>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FailureKind {
    Construction,
    Ergodicity(ErgodicityFailure),
}

impl ValidationReport {
    pub fn usable(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn record(&mut self, name: &str, pass: bool, detail: String, kind: FailureKind) {
        if !pass && self.first_error.is_none() {
            self.first_error = Some(detail.clone());
            self.first_kind = Some(kind);
        }
        self.checks.push(CheckOutcome {
            name: name.into(),
            pass,
            detail,
        });
    }

    /// The error matching the first failed check, if any.
    pub fn into_result(self) -> Result<()> {
        match (self.first_kind, self.first_error) {
            (None, _) => Ok(()),
            (Some(FailureKind::Construction), Some(d)) => Err(Error::Construction(d)),
            (Some(FailureKind::Ergodicity(kind)), Some(detail)) => {
                Err(Error::Ergodicity { kind, detail })
            }
            (Some(_), None) => unreachable!("failure kind recorded without detail"),
        }
    }
}

/// Checks that `p` is row-stochastic, irreducible and aperiodic and that every
/// sojourn law has bounded support.
pub fn validate_model(p: &[Vec<f64>], sojourn: &[SojournLaw]) -> ValidationReport {
    let mut report = ValidationReport {
        checks: Vec::new(),
        first_error: None,
        first_kind: None,
    };
    let n = p.len();
    let mut stochastic = n > 0;
    let mut detail = format!("{n} rows sum to 1");
    if n == 0 {
        detail = "transition matrix is empty".into();
    }
    for (i, row) in p.iter().enumerate() {
        if row.len() != n {
            stochastic = false;
            detail = format!("row {i} of P has {} entries, expected {n}", row.len());
            break;
        }
        if let Some(j) = row.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            stochastic = false;
            detail = format!(
                "entry ({i}, {j}) of P is {} (must be a finite nonnegative number)",
                row[j]
            );
            break;
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            stochastic = false;
            detail = format!("row {i} of P sums to {sum}, not 1");
            break;
        }
    }
    report.record(
        "row_stochastic",
        stochastic,
        detail,
        FailureKind::Construction,
    );

    if stochastic {
        let adj: Vec<Vec<usize>> = p
            .iter()
            .map(|row| (0..n).filter(|&j| row[j] > 0.0).collect())
            .collect();
        let irreducible = strongly_connected(&adj);
        report.record(
            "irreducible",
            irreducible,
            if irreducible {
                "support digraph is strongly connected".into()
            } else {
                "support digraph of P is not strongly connected".into()
            },
            FailureKind::Ergodicity(ErgodicityFailure::Irreducibility),
        );
        if irreducible {
            let d = period(&adj);
            report.record(
                "aperiodic",
                d == 1,
                format!("period {d}"),
                FailureKind::Ergodicity(ErgodicityFailure::Aperiodicity),
            );
        }
    }

    let mut bounded = sojourn.len() == n;
    let mut detail = format!("{} sojourn laws with bounded support", sojourn.len());
    if sojourn.len() != n {
        detail = format!("{} sojourn laws given for {n} states", sojourn.len());
    }
    for (i, law) in sojourn.iter().enumerate() {
        if law.validate().is_err() {
            bounded = false;
            detail = format!("sojourn law of state {i} is invalid: {law:?}");
            break;
        }
    }
    report.record(
        "bounded_sojourn",
        bounded,
        detail,
        FailureKind::Construction,
    );
    report
}

fn reach(adj: &[Vec<usize>], from: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn strongly_connected(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    let mut rev = vec![Vec::new(); n];
    for (u, out) in adj.iter().enumerate() {
        for &v in out {
            rev[v].push(u);
        }
    }
    reach(adj, 0).iter().all(|&b| b) && reach(&rev, 0).iter().all(|&b| b)
}

/// Period of a strongly connected digraph: the gcd over edges `u -> v` of
/// `level(u) + 1 - level(v)` for breadth-first levels from state 0.
fn period(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0usize;
    for (u, out) in adj.iter().enumerate() {
        for &v in out {
            let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs() as usize;
            g = gcd(g, diff);
        }
    }
    g
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Solves `rho P = rho`, `sum(rho) = 1` directly.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p.ncols(),
        });
    }
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = a.lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-13 * max) {
        return Err(Error::SingularSystem(format!(
            "stationary system has pivot ratio {:.3e}; null space of P^T - I is not one-dimensional",
            min / max
        )));
    }
    lu.solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("stationary system is singular".into()))
}

/// `M_rho = sum_x rho_x m1(x)`.
pub fn mean_cycle(rho: &[f64], m1: &[f64]) -> Result<f64> {
    if rho.len() != m1.len() {
        return Err(Error::DimensionMismatch {
            expected: rho.len(),
            got: m1.len(),
        });
    }
    Ok(rho.iter().zip(m1).map(|(r, m)| r * m).sum())
}

/// Max-row-sum norm of `P^n - Pi`, where every row of `Pi` equals `rho`.
pub fn ergodicity_gap(p: &DMatrix<f64>, rho: &[f64], n: u32) -> f64 {
    let k = p.nrows();
    let mut pn = p.clone();
    for _ in 1..n {
        pn = &pn * p;
    }
    (0..k)
        .map(|i| (0..k).map(|j| (pn[(i, j)] - rho[j]).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Modulus of the second-largest eigenvalue of `P` (zero for one state).
pub fn second_eigenvalue_modulus(p: &DMatrix<f64>) -> f64 {
    if p.nrows() < 2 {
        return 0.0;
    }
    let mut mods: Vec<f64> = p.complex_eigenvalues().iter().map(|z| z.norm()).collect();
    mods.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    mods[1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryData {
    pub rho: Vec<f64>,
    pub m1: Vec<f64>,
    pub m_rho: f64,
}

#[derive(Debug, Clone)]
pub struct SemiMarkovModel {
    states: StateSpace,
    p: DMatrix<f64>,
    cumulative: Vec<Vec<f64>>,
    sojourn: Vec<SojournLaw>,
    initial: Option<Vec<f64>>,
    stationary: StationaryData,
    tau_bar: f64,
}

impl SemiMarkovModel {
    /// Validates the ingredients and precomputes the stationary data.
    pub fn new(
        states: StateSpace,
        p: Vec<Vec<f64>>,
        sojourn: Vec<SojournLaw>,
        initial: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = states.len();
        if p.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: p.len(),
            });
        }
        if sojourn.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: sojourn.len(),
            });
        }
        validate_model(&p, &sojourn).into_result()?;
        if let Some(init) = &initial {
            if init.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: init.len(),
                });
            }
            let sum: f64 = init.iter().sum();
            if init.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Construction(format!(
                    "initial law must be a probability vector (sums to {sum})"
                )));
            }
        }
        let pm = DMatrix::from_fn(n, n, |i, j| p[i][j]);
        let rho_v = stationary_distribution(&pm)?;
        let rho: Vec<f64> = rho_v.iter().map(|v| v.max(0.0)).collect();
        let m1: Vec<f64> = sojourn.iter().map(SojournLaw::mean).collect();
        let m_rho = mean_cycle(&rho, &m1)?;
        let cumulative = p
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect()
            })
            .collect();
        let tau_bar = sojourn
            .iter()
            .map(SojournLaw::support_upper)
            .fold(0.0, f64::max);
        Ok(SemiMarkovModel {
            states,
            p: pm,
            cumulative,
            sojourn,
            initial,
            stationary: StationaryData { rho, m1, m_rho },
            tau_bar,
        })
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn sojourn(&self, x: usize) -> &SojournLaw {
        &self.sojourn[x]
    }

    pub fn sojourns(&self) -> &[SojournLaw] {
        &self.sojourn
    }

    pub fn stationary(&self) -> &StationaryData {
        &self.stationary
    }

    pub fn tau_bar(&self) -> f64 {
        self.tau_bar
    }

    /// Initial law of `x_0`; defaults to the stationary distribution.
    pub fn initial_law(&self) -> &[f64] {
        self.initial.as_deref().unwrap_or(&self.stationary.rho)
    }

    /// Returns a copy of the model that starts from `law`.
    pub fn with_initial(&self, law: Option<Vec<f64>>) -> Result<Self> {
        let p = (0..self.n_states())
            .map(|i| self.p.row(i).iter().cloned().collect())
            .collect();
        SemiMarkovModel::new(self.states.clone(), p, self.sojourn.clone(), law)
    }

    pub fn ergodicity_gap(&self, n: u32) -> f64 {
        ergodicity_gap(&self.p, &self.stationary.rho, n)
    }

    fn draw_from(cumulative: &[f64], rng: &mut Rng) -> usize {
        let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
        cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(cumulative.len() - 1)
    }

    fn draw_initial(&self, rng: &mut Rng) -> usize {
        let law = self.initial_law();
        let mut acc = 0.0;
        let cum: Vec<f64> = law
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Self::draw_from(&cum, rng)
    }

    /// Next state drawn from row `x` of `P`.
    pub fn next_state(&self, x: usize, rng: &mut Rng) -> usize {
        Self::draw_from(&self.cumulative[x], rng)
    }

    fn sample(&self, s: f64, horizon: f64, strict: bool, rng: &mut Rng) -> RenewalPath {
        let horizon = horizon.max(s);
        let mut x = self.draw_initial(rng);
        let mut t = s;
        let mut jump_times = vec![s];
        let mut states = vec![x];
        while t < horizon || (strict && t <= horizon) {
            t += self.sojourn[x].sample(rng);
            x = self.next_state(x, rng);
            jump_times.push(t);
            states.push(x);
        }
        RenewalPath {
            start: s,
            horizon,
            jump_times,
            states,
        }
    }

    /// Samples jump times and states from `s` until the last jump time reaches
    /// `horizon`.
    pub fn sample_path(&self, s: f64, horizon: f64, rng: &mut Rng) -> RenewalPath {
        self.sample(s, horizon, false, rng)
    }

    /// Like [`sample_path`](Self::sample_path) but continues until the last
    /// jump time strictly exceeds `horizon`, so the jump after `horizon` is
    /// always available.
    pub fn sample_path_beyond(&self, s: f64, horizon: f64, rng: &mut Rng) -> RenewalPath {
        self.sample(s, horizon, true, rng)
    }
}

/// One realisation of the Markov renewal process started at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalPath {
    pub start: f64,
    pub horizon: f64,
    /// `T_0 = start < T_1 < T_2 < ...`
    pub jump_times: Vec<f64>,
    /// `x_k` is the state occupied on `[T_k, T_{k+1})`.
    pub states: Vec<usize>,
}

impl RenewalPath {
    /// Number of jump times in `(s, t]`.
    pub fn counting_process(&self, s: f64, t: f64) -> Result<usize> {
        if t > self.horizon {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        if t <= s {
            return Ok(0);
        }
        Ok(self.jump_times[1..]
            .iter()
            .filter(|&&tk| tk > s && tk <= t)
            .count())
    }

    /// State in force at time `u` (right-continuous).
    pub fn state_at(&self, u: f64) -> usize {
        let k = self.jump_times.partition_point(|&tk| tk <= u);
        self.states[k.saturating_sub(1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn model(p: Vec<Vec<f64>>, law: SojournLaw) -> Result<SemiMarkovModel> {
        let n = p.len();
        SemiMarkovModel::new(StateSpace::indexed(n), p, vec![law; n], None)
    }

    #[test]
    fn periodic_and_reducible_chains_are_rejected() {
        let u = SojournLaw::Uniform { a: 0.0, b: 1.0 };
        let e = model(vec![vec![0.0, 1.0], vec![1.0, 0.0]], u).unwrap_err();
        assert!(matches!(
            e,
            Error::Ergodicity {
                kind: ErgodicityFailure::Aperiodicity,
                ..
            }
        ));
        let e = model(vec![vec![1.0, 0.0], vec![0.0, 1.0]], u).unwrap_err();
        assert!(matches!(
            e,
            Error::Ergodicity {
                kind: ErgodicityFailure::Irreducibility,
                ..
            }
        ));
        assert!(model(vec![vec![0.5, 0.5], vec![0.5, 0.5]], u).is_ok());
    }

    #[test]
    fn bad_row_names_the_row() {
        let r = validate_model(
            &[vec![0.5, 0.5], vec![0.5, 0.4]],
            &[SojournLaw::Deterministic { c: 1.0 }; 2],
        );
        assert!(!r.usable());
        let msg = r.into_result().unwrap_err().to_string();
        assert!(msg.contains("row 1"), "{msg}");
    }

    #[test]
    fn two_state_stationary_matches_balance_equations() {
        let (a, b) = (0.1, 0.2);
        let p = DMatrix::from_row_slice(2, 2, &[1.0 - a, a, b, 1.0 - b]);
        let rho = stationary_distribution(&p).unwrap();
        // Detailed balance for two states: rho_0 a = rho_1 b.
        let oracle = [b / (a + b), a / (a + b)];
        assert!((rho[0] - oracle[0]).abs() < 1e-14);
        assert!((rho[1] - oracle[1]).abs() < 1e-14);
        assert!((rho[0] - 2.0 / 3.0).abs() < 1e-14);
        let periodic = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let rho = stationary_distribution(&periodic).unwrap();
        assert!((rho[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sojourn_moments() {
        assert_eq!(SojournLaw::Deterministic { c: 2.0 }.moment(3).unwrap(), 8.0);
        let u = SojournLaw::Uniform { a: 0.0, b: 2.0 };
        assert!((u.moment(1).unwrap() - 1.0).abs() < 1e-15);
        let oracle = gauss_legendre(8, 0.0, 2.0, |t| t * t / 2.0);
        assert!((u.moment(2).unwrap() - oracle).abs() < 1e-14);
        assert!((u.moment(2).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!(matches!(u.moment(5), Err(Error::UnsupportedOrder(5))));
    }

    #[test]
    fn scaled_beta_moments_match_quadrature() {
        let law = SojournLaw::ScaledBeta {
            a: 0.5,
            b: 2.0,
            alpha: 2.0,
            beta: 3.0,
        };
        // Beta(2,3) density 12 u (1-u)^2 integrated against the scaled power.
        for n in 1..=4 {
            let oracle = gauss_legendre(20, 0.0, 1.0, |u| {
                12.0 * u * (1.0 - u).powi(2) * (0.5 + 1.5 * u).powi(n)
            });
            assert!((law.moment(n as u32).unwrap() - oracle).abs() < 1e-12);
            let q = law.expect(1e-10, |t| t.powi(n)).unwrap();
            assert!((q - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_cycle_examples() {
        assert_eq!(mean_cycle(&[0.5, 0.5], &[1.0, 3.0]).unwrap(), 2.0);
        let m = mean_cycle(&[2.0 / 3.0, 1.0 / 3.0], &[1.0, 1.5]).unwrap();
        assert!((m - 7.0 / 6.0).abs() < 1e-15);
        assert!(mean_cycle(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gap_decays_with_second_eigenvalue() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let rho = [2.0 / 3.0, 1.0 / 3.0];
        let g1 = ergodicity_gap(&p, &rho, 1);
        let g2 = ergodicity_gap(&p, &rho, 2);
        assert!((g2 / g1 - 0.7).abs() < 1e-12);
        assert!((second_eigenvalue_modulus(&p) - 0.7).abs() < 1e-12);
        let flat = DMatrix::from_element(2, 2, 0.5);
        assert!(ergodicity_gap(&flat, &[0.5, 0.5], 1).abs() < 1e-15);
    }

    #[test]
    fn deterministic_path_and_counts() {
        let m = model(vec![vec![1.0]], SojournLaw::Deterministic { c: 1.0 }).unwrap();
        let mut rng = StreamKey::root(1, "t").rng(0);
        let path = m.sample_path(0.0, 3.5, &mut rng);
        assert_eq!(path.jump_times, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(path.states.iter().all(|&x| x == 0));
        assert_eq!(path.counting_process(0.0, 3.5).unwrap(), 3);
        assert_eq!(path.counting_process(2.0, 2.0).unwrap(), 0);
        assert!(matches!(
            path.counting_process(0.0, 5.0),
            Err(Error::OutOfHorizon { .. })
        ));
        let empty = m.sample_path(2.0, 2.0, &mut rng);
        assert_eq!(empty.jump_times, vec![2.0]);
        assert_eq!(
            m.sample_path_beyond(0.0, 3.0, &mut rng).jump_times.last(),
            Some(&4.0)
        );
    }

    #[test]
    fn state_at_is_right_continuous() {
        let path = RenewalPath {
            start: 0.0,
            horizon: 3.0,
            jump_times: vec![0.0, 1.0, 2.5],
            states: vec![0, 1, 0],
        };
        assert_eq!(path.state_at(0.5), 0);
        assert_eq!(path.state_at(1.0), 1);
        assert_eq!(path.state_at(2.4), 1);
        assert_eq!(path.state_at(2.5), 0);
    }
}
