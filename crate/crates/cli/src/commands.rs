//! The four commands. Each loads and checks the configuration, runs inside a
//! worker pool of the configured size, writes its outputs and, except for
//! `validate`, a manifest listing them.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use randevo_core::averaging::{
    compact_containment_probe, lln_sweep, martingale_diagnostics, Averager, MartingaleReport,
    SweepReport, SweepSettings,
};
use randevo_core::propagator::{
    composition_residual, integral_representation_residual, json_number, run_canonical_matrix,
    CheckContext, COMPOSITION_TOL, INTEGRAL_TOL,
};
use randevo_core::random_evolution::{
    jump_discontinuity_residual, rescaled_switch_rate, shift_bound_ratio,
};
use randevo_core::semi_markov::CheckOutcome;
use randevo_core::{Error, EvalMode, RandomEvolution, Residual, ResidualRecord, StreamKey};

use crate::config::{load, ExperimentConfig, LoadedConfig, Models, Overrides, Suite};
use crate::error::CliError;
use crate::manifest::{
    sha256_hex, write_atomic, CheckSummary, OutputDir, RunManifest, MANIFEST_FILE,
};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "RANDEVO_THREADS";

/// Pathwise identities hold to rounding; these are the allowed residuals.
pub const PATH_INTEGRAL_TOL: f64 = 1e-6;
pub const JUMP_RELATION_TOL: f64 = 1e-10;
/// Stationary and Poisson identities, relative to the size of the data.
pub const LINEAR_ALGEBRA_TOL: f64 = 1e-10;
pub const TWO_ROUTE_TOL: f64 = 1e-9;
/// Paths used for the exact pathwise checks at each scale.
const PATHWISE_PATHS: u64 = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Passed,
    ChecksFailed(Vec<String>),
    BudgetTooSmall(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Passed => 0,
            Status::ChecksFailed(_) => 5,
            Status::BudgetTooSmall(_) => 6,
        }
    }

    fn from_checks(checks: &[CheckSummary]) -> Self {
        let failed: Vec<String> = checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.clone())
            .collect();
        if failed.is_empty() {
            Status::Passed
        } else {
            Status::ChecksFailed(failed)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationSummary {
    pub valid: bool,
    pub checks: Vec<CheckOutcome>,
    pub n_states: usize,
    pub dim: usize,
    pub m_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub epsilon: f64,
    /// `eps E[N_eps(T)] / (T - s)`.
    pub rate: f64,
    pub stderr: f64,
    /// `1 / M_rho`
    pub expected: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub n_paths: u64,
    pub path_files: u64,
    pub rates: Vec<RateRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<Suite>,
    pub records: Vec<ResidualRecord>,
    /// Checks that could not run on this model, with the reason.
    pub skipped: Vec<String>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub enum Report {
    Validation(ValidationSummary),
    Simulate(SimulateSummary),
    Verify(VerifyReport),
    Sweep(SweepReport),
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub report: Report,
    pub manifest: Option<RunManifest>,
    pub out_dir: Option<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }
}

/// Worker count: the configured value, else the machine's parallelism,
/// capped by `RANDEVO_THREADS` when set.
pub fn thread_count(cfg: &ExperimentConfig) -> usize {
    let base = cfg
        .run
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    match cap {
        Some(c) if c > 0 => base.min(c),
        _ => base,
    }
}

pub fn validate(config: &Path, overrides: &Overrides) -> Result<Outcome, CliError> {
    let loaded = load(config, overrides)?;
    let models = loaded.config.models()?;
    let report = randevo_core::semi_markov::validate_model(
        &loaded.config.semi_markov.p,
        &loaded.config.semi_markov.sojourn,
    );
    let summary = ValidationSummary {
        valid: true,
        checks: report.checks,
        n_states: models.sm.n_states(),
        dim: models.levy.dim(),
        m_rho: models.sm.stationary().m_rho,
    };
    Ok(Outcome {
        status: Status::Passed,
        report: Report::Validation(summary),
        manifest: None,
        out_dir: None,
    })
}

/// Shared plumbing: models, pool, output directory and manifest.
fn execute(
    command: &str,
    loaded: LoadedConfig,
    body: impl FnOnce(
            &ExperimentConfig,
            &Models,
            &mut OutputDir,
        ) -> Result<(Vec<CheckSummary>, Status, Report), CliError>
        + Send,
) -> Result<Outcome, CliError> {
    let started = chrono::Utc::now();
    let cfg = &loaded.config;
    let models = cfg.models()?;
    let threads = thread_count(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::runtime("building the worker pool", e))?;
    let mut out = OutputDir::create(&cfg.output.dir)?;
    let (checks, status, report) = pool.install(|| body(cfg, &models, &mut out))?;

    let canonical = serde_json::to_vec(&loaded.resolved)
        .map_err(|e| CliError::runtime("hashing the config", e))?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_sha256: sha256_hex(&canonical),
        seed_root: cfg.run.seed,
        threads,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        exit_code: status.exit_code(),
        checks,
        outputs: out.into_files(),
        resolved_config: loaded.resolved.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| CliError::runtime("encoding the manifest", e))?;
    bytes.push(b'\n');
    write_atomic(&cfg.output.dir.join(MANIFEST_FILE), &bytes)?;
    Ok(Outcome {
        status,
        report,
        manifest: Some(manifest),
        out_dir: Some(cfg.output.dir.clone()),
    })
}

fn core_err(context: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| CliError::runtime(context, e)
}

fn fmt_eps(eps: f64) -> String {
    format!("{eps}")
}

#[derive(Serialize)]
struct PathRow<'a> {
    k: usize,
    #[serde(rename = "T_k")]
    t_k: f64,
    state_k: &'a str,
}

#[derive(Serialize)]
struct DisplacementCsvRow {
    seed: u64,
    t: f64,
    total: String,
    n_switches: usize,
}

#[derive(Serialize)]
struct SpotRow {
    state: String,
    t: f64,
    coordinate: usize,
    b_spot: f64,
    c_spot: f64,
}

fn join_coords(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn simulate(config: &Path, overrides: &Overrides) -> Result<Outcome, CliError> {
    let loaded = load(config, overrides)?;
    execute("simulate", loaded, |cfg, m, out| {
        let run = &cfg.run;
        let root = StreamKey::root(run.seed, "simulate");
        let path_key = root.child("paths");
        let path_files = run.n_paths.min(cfg.output.max_path_files);
        let labels = m.sm.states().labels();
        for i in 0..path_files {
            let path = m.sm.sample_path(run.s, run.horizon, &mut path_key.rng(i));
            let rows: Vec<PathRow> = path
                .jump_times
                .iter()
                .zip(&path.states)
                .take_while(|(t, _)| **t <= run.horizon)
                .enumerate()
                .map(|(k, (t, x))| PathRow {
                    k,
                    t_k: *t,
                    state_k: labels[*x].as_str(),
                })
                .collect();
            out.write_csv(&format!("paths/path_{i}.csv"), &rows)?;
        }

        let mut spot = Vec::new();
        for x in 0..m.levy.n_states() {
            for &t in &run.t_grid {
                let sc = m.levy.spot_from_local(x, t);
                for j in 0..m.levy.dim() {
                    spot.push(SpotRow {
                        state: labels[x].clone(),
                        t,
                        coordinate: j,
                        b_spot: sc.b[j],
                        c_spot: sc.c[j],
                    });
                }
            }
        }
        out.write_csv("spot_characteristics.csv", &spot)?;

        let evo = RandomEvolution::new(&m.sm, &m.levy, &m.alpha)
            .map_err(core_err("building the evolution"))?;
        let evo_key = root.child("evolution");
        let mut rates = Vec::new();
        let expected = 1.0 / m.sm.stationary().m_rho;
        for &eps in &run.epsilons {
            let rows = evo
                .evolve_multi(run.s, &run.t_grid, eps, run.n_paths, &evo_key)
                .map_err(core_err("evolving paths"))?;
            let csv: Vec<DisplacementCsvRow> = rows
                .into_iter()
                .map(|r| DisplacementCsvRow {
                    seed: r.path,
                    t: r.t,
                    total: join_coords(&r.total),
                    n_switches: r.n_switches,
                })
                .collect();
            out.write_csv(&format!("displacements/eps_{}.csv", fmt_eps(eps)), &csv)?;
            if run.horizon > run.s {
                let est =
                    rescaled_switch_rate(&evo, run.s, run.horizon, eps, run.n_paths, &evo_key)
                        .map_err(core_err("counting switches"))?;
                let span = run.horizon - run.s;
                rates.push(RateRow {
                    epsilon: eps,
                    rate: est.mean / span,
                    stderr: est.stderr() / span,
                    expected,
                });
            }
        }
        let summary = SimulateSummary {
            n_paths: run.n_paths,
            path_files,
            rates,
        };
        out.write_json("simulate_summary.json", &summary)?;
        Ok((Vec::new(), Status::Passed, Report::Simulate(summary)))
    })
}

fn record(check: &str, params: Vec<(&str, Value)>, value: f64, tol: f64) -> ResidualRecord {
    let r = Residual {
        value,
        half_width: 0.0,
        quad_error: 0.0,
        scale: 1.0,
    };
    ResidualRecord::new(check, params, &r, tol)
}

fn failed(check: &str, params: Vec<(&str, Value)>, err: &Error, tol: f64) -> ResidualRecord {
    ResidualRecord::failed(check, params, err, tol)
}

struct Checks<'a> {
    cfg: &'a ExperimentConfig,
    m: &'a Models,
    key: StreamKey,
    records: Vec<ResidualRecord>,
    skipped: Vec<String>,
    martingale: Vec<MartingaleReport>,
    containment: Vec<randevo_core::averaging::ContainmentRow>,
}

impl Checks<'_> {
    fn exact_laws(&self) -> bool {
        let run = &self.cfg.run;
        self.m.levy.dim() == 1
            && (0..self.m.levy.n_states())
                .all(|x| self.m.levy.increment_law(x, run.s, run.horizon).is_some())
    }

    fn propagator(&mut self) {
        let run = &self.cfg.run;
        self.records.extend(run_canonical_matrix(
            run.n_samples,
            &self.key.child("canonical"),
        ));
        if self.m.levy.dim() != 1 {
            self.skipped.push(
                "propagator identities of the configured states: only one-dimensional models"
                    .into(),
            );
            return;
        }
        let t_mid = run.t_grid[run.t_grid.len() / 2].max(run.s);
        let t_end = run.horizon;
        for x in 0..self.m.levy.n_states() {
            let exact = self.m.levy.increment_law(x, run.s, t_end).is_some();
            let ctx = if exact {
                CheckContext::exact()
            } else {
                CheckContext::monte_carlo(self.cfg.budget(), self.key.child(&format!("state-{x}")))
            };
            let mode = if exact {
                EvalMode::Exact
            } else {
                EvalMode::MonteCarlo
            };
            let g = self.m.levy.propagator(x, mode);
            for (id, f) in &self.m.functions {
                let base = || {
                    vec![
                        ("state", json!(x)),
                        ("f", json!(id)),
                        ("s", json!(run.s)),
                        ("t", json!(t_end)),
                    ]
                };
                let comp_tol = if exact { COMPOSITION_TOL } else { 0.0 };
                match composition_residual(&g, run.s, t_mid, t_end, f, &run.z_grid, &ctx) {
                    Ok(r) => self.records.push(ResidualRecord::new(
                        "state_composition",
                        base(),
                        &r,
                        comp_tol,
                    )),
                    Err(e) => self
                        .records
                        .push(failed("state_composition", base(), &e, comp_tol)),
                }
                if exact {
                    for &z in &run.z_grid {
                        let mut p = base();
                        p.push(("z", json!(z)));
                        match integral_representation_residual(&g, run.s, t_end, f, z, &ctx) {
                            Ok(r) => self.records.push(ResidualRecord::new(
                                "state_integral_representation",
                                p,
                                &r,
                                INTEGRAL_TOL,
                            )),
                            Err(e) => self.records.push(failed(
                                "state_integral_representation",
                                p,
                                &e,
                                INTEGRAL_TOL,
                            )),
                        }
                    }
                }
            }
        }
    }

    fn evolution(&mut self) -> Result<(), CliError> {
        let run = &self.cfg.run;
        let m = self.m;
        let evo = RandomEvolution::new(&m.sm, &m.levy, &m.alpha)
            .map_err(core_err("building the evolution"))?;
        let key = self.key.child("evolution");
        let (id, f) = &m.functions[0];
        let z = run.z_grid[0];
        let exact = self.exact_laws();
        if !exact {
            self.skipped.push(
                "pathwise integral representation and jump relation: need one-dimensional mixture laws".into(),
            );
        }
        for &eps in &run.epsilons {
            if exact {
                let mut worst_int: f64 = 0.0;
                let mut worst_jump: f64 = 0.0;
                let mut err = None;
                for i in 0..PATHWISE_PATHS.min(run.n_paths) {
                    let res = evo
                        .scaled_path(run.s, run.horizon, eps, &key, i)
                        .and_then(|path| {
                            let (r, _) = evo.integral_representation_residual(
                                &path,
                                run.horizon,
                                f,
                                z,
                                1e-8,
                            )?;
                            worst_int = worst_int.max(r);
                            for n in 1..=path.count(run.horizon) {
                                worst_jump = worst_jump
                                    .max(jump_discontinuity_residual(&evo, &path, n, f, z)?);
                            }
                            Ok(())
                        });
                    if let Err(e) = res {
                        err = Some(e);
                        break;
                    }
                }
                let p = || vec![("epsilon", json!(eps)), ("f", json!(id)), ("z", json!(z))];
                match err {
                    None => {
                        self.records.push(record(
                            "path_integral_representation",
                            p(),
                            worst_int,
                            PATH_INTEGRAL_TOL,
                        ));
                        self.records.push(record(
                            "jump_relation",
                            p(),
                            worst_jump,
                            JUMP_RELATION_TOL,
                        ));
                    }
                    Some(e) => self.records.push(failed(
                        "path_integral_representation",
                        p(),
                        &e,
                        PATH_INTEGRAL_TOL,
                    )),
                }
            }
            for (fid, f) in &m.functions {
                if m.levy.dim() == 1 {
                    let ratio = shift_bound_ratio(&m.alpha, eps, f, f.sup_norm(1), &run.z_grid);
                    self.records.push(record(
                        "shift_bound",
                        vec![("epsilon", json!(eps)), ("f", json!(fid))],
                        json_ratio(ratio),
                        1.0 + 1e-12,
                    ));
                }
            }
        }

        if run.horizon > run.s {
            let eps = *run.epsilons.last().expect("nonempty");
            let span = run.horizon - run.s;
            let est = rescaled_switch_rate(
                &evo,
                run.s,
                run.horizon,
                eps,
                run.n_paths,
                &key.child("rate"),
            )
            .map_err(core_err("counting switches"))?;
            let st = m.sm.stationary();
            let expected = span / st.m_rho;
            // Renewal counts differ from the rate by at most a few cycles:
            // allow `2 eps tau_bar / M_rho` on top of the sampling error.
            let tol = 3.0 * est.stderr() + 2.0 * eps * m.sm.tau_bar() / st.m_rho;
            self.records.push(record(
                "rescaled_switch_rate",
                vec![
                    ("epsilon", json!(eps)),
                    ("mean", json_number(est.mean)),
                    ("expected", json_number(expected)),
                ],
                (est.mean - expected).abs(),
                tol,
            ));
        }
        Ok(())
    }

    fn averaging(&mut self) -> Result<(), CliError> {
        let run = &self.cfg.run;
        let m = self.m;
        let st = m.sm.stationary();
        let n = m.sm.n_states();
        let p = m.sm.p();
        let rho_max = st.rho.iter().copied().fold(0.0, f64::max);
        let balance = (0..n)
            .map(|j| ((0..n).map(|i| st.rho[i] * p[(i, j)]).sum::<f64>() - st.rho[j]).abs())
            .fold(0.0, f64::max);
        self.records.push(record(
            "stationary_balance",
            vec![],
            balance / rho_max,
            LINEAR_ALGEBRA_TOL,
        ));
        let mass: f64 = st.rho.iter().sum();
        self.records.push(record(
            "stationary_mass",
            vec![],
            (mass - 1.0).abs(),
            LINEAR_ALGEBRA_TOL,
        ));

        let evo = RandomEvolution::new(&m.sm, &m.levy, &m.alpha)
            .map_err(core_err("building the evolution"))?;
        let avg = Averager::with_fault(evo, self.cfg.checks.inject_fault)
            .map_err(core_err("averaging the model"))?;

        let mut worst_route: (f64, Vec<(&str, Value)>) = (0.0, vec![]);
        let mut route_err = None;
        let mut worst_poisson: f64 = 0.0;
        let mut worst_centre: f64 = 0.0;
        for &t in &run.t_grid {
            for &z in &run.z_grid {
                let zv = vec![z; m.levy.dim()];
                for (id, f) in &m.functions {
                    match (avg.a_hat(t, f, &zv), avg.a_hat_averaged(t, f, &zv)) {
                        (Ok(a), Ok(b)) => {
                            let d = (a - b).abs();
                            if d >= worst_route.0 {
                                worst_route =
                                    (d, vec![("t", json!(t)), ("z", json!(z)), ("f", json!(id))]);
                            }
                        }
                        (Err(e), _) | (_, Err(e)) => route_err = Some(e),
                    }
                    match avg.corrector(t, f, &zv) {
                        Ok(sol) => {
                            let scale = avg
                                .poisson_rhs(t, f, &zv)
                                .map(|r| r.iter().map(|v| v.abs()).fold(0.0, f64::max))
                                .unwrap_or(0.0)
                                .max(f64::MIN_POSITIVE);
                            worst_poisson = worst_poisson.max(sol.residual / scale);
                            let centre: f64 = st.rho.iter().zip(&sol.g).map(|(r, g)| r * g).sum();
                            worst_centre = worst_centre.max(centre.abs() / scale);
                        }
                        Err(e) => route_err = Some(e),
                    }
                }
            }
        }
        match route_err {
            Some(e) => self
                .records
                .push(failed("two_route_a_hat", vec![], &e, TWO_ROUTE_TOL)),
            None => {
                self.records.push(record(
                    "two_route_a_hat",
                    worst_route.1,
                    worst_route.0,
                    TWO_ROUTE_TOL,
                ));
                self.records.push(record(
                    "poisson_residual",
                    vec![],
                    worst_poisson,
                    LINEAR_ALGEBRA_TOL,
                ));
                self.records.push(record(
                    "poisson_centering",
                    vec![],
                    worst_centre,
                    LINEAR_ALGEBRA_TOL,
                ));
            }
        }

        if !self.exact_laws() {
            self.skipped
                .push("martingale diagnostics: need one-dimensional mixture laws".into());
            return Ok(());
        }
        let (id, f) = &m.functions[0];
        let z = run.z_grid[0];
        let budget = randevo_core::McBudget {
            n_samples: self.cfg.checks.martingale_paths,
            ..self.cfg.budget()
        };
        for &eps in &self.cfg.checks.martingale_epsilons {
            let p = || vec![("epsilon", json!(eps)), ("f", json!(id)), ("z", json!(z))];
            match martingale_diagnostics(
                &avg,
                run.s,
                &run.t_grid,
                eps,
                f,
                z,
                &budget,
                &self.key.child("martingale"),
            ) {
                Ok(rep) => {
                    let worst_mean = rep
                        .rows
                        .iter()
                        .map(|r| {
                            if r.stderr > 0.0 {
                                r.mean.abs() / r.stderr
                            } else if r.mean == 0.0 {
                                0.0
                            } else {
                                f64::INFINITY
                            }
                        })
                        .fold(0.0, f64::max);
                    let mut rec = record("martingale_null_mean", p(), json_ratio(worst_mean), 3.0);
                    rec.pass = rep.null_mean_pass();
                    self.records.push(rec);
                    let worst_bracket = rep
                        .rows
                        .iter()
                        .map(|r| r.bracket_mean / r.bracket_bound.max(f64::MIN_POSITIVE))
                        .fold(0.0, f64::max);
                    let mut rec = record(
                        "martingale_bracket",
                        p(),
                        worst_bracket,
                        1.0 + randevo_core::averaging::BRACKET_SLACK,
                    );
                    rec.pass = rep.bracket_pass();
                    self.records.push(rec);
                    self.martingale.push(rep);
                }
                Err(e) => self
                    .records
                    .push(failed("martingale_null_mean", p(), &e, 3.0)),
            }
        }
        if self.martingale.len() >= 2 {
            let coarse = &self.martingale[0];
            let fine = &self.martingale[self.martingale.len() - 1];
            let pooled = 1.96 * coarse.sup_abs.stderr().hypot(fine.sup_abs.stderr());
            self.records.push(record(
                "martingale_sup_decrease",
                vec![
                    ("epsilon_coarse", json!(coarse.epsilon)),
                    ("epsilon_fine", json!(fine.epsilon)),
                    ("sup_coarse", json_number(coarse.sup_abs.mean)),
                    ("sup_fine", json_number(fine.sup_abs.mean)),
                    ("pooled", json_number(pooled)),
                ],
                fine.sup_abs.mean - (coarse.sup_abs.mean - pooled),
                0.0,
            ));
        }
        Ok(())
    }

    fn containment(&mut self) -> Result<(), CliError> {
        let run = &self.cfg.run;
        let m = self.m;
        let evo = RandomEvolution::new(&m.sm, &m.levy, &m.alpha)
            .map_err(core_err("building the evolution"))?;
        let delta = self.cfg.checks.delta;
        let report = compact_containment_probe(
            &evo,
            run.s,
            run.horizon,
            delta,
            &run.epsilons,
            &m.functions[0].1,
            run.n_paths,
            &self.key.child("containment"),
        )
        .map_err(core_err("containment probe"))?;
        for row in &report.rows {
            let mut params = vec![
                ("epsilon", json!(row.epsilon)),
                ("delta", json!(delta)),
                ("probability", json_number(row.probability)),
                ("n00", json_number(report.n00)),
                ("radius", json_number(report.radius)),
            ];
            params.push(("half_width", json_number(row.half_width)));
            let mut rec = record(
                "containment",
                params,
                (1.0 - delta) - row.probability,
                row.half_width,
            );
            rec.pass = row.pass;
            self.records.push(rec);
        }
        self.containment = report.rows;
        Ok(())
    }
}

fn json_ratio(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::MAX
    }
}

fn expand(suites: &[Suite]) -> Vec<Suite> {
    let mut out: Vec<Suite> = Vec::new();
    for s in suites {
        let items: &[Suite] = if *s == Suite::All {
            &Suite::EACH
        } else {
            std::slice::from_ref(s)
        };
        for i in items {
            if !out.contains(i) {
                out.push(*i);
            }
        }
    }
    out.sort_by_key(|s| Suite::EACH.iter().position(|e| e == s));
    out
}

pub fn verify(
    config: &Path,
    overrides: &Overrides,
    suite: Option<Suite>,
) -> Result<Outcome, CliError> {
    let loaded = load(config, overrides)?;
    let requested = match suite {
        Some(s) => vec![s],
        None => loaded.config.checks.suites.clone(),
    };
    let suites = expand(&requested);
    execute("verify", loaded, move |cfg, m, out| {
        let mut checks = Checks {
            cfg,
            m,
            key: StreamKey::root(cfg.run.seed, "verify"),
            records: Vec::new(),
            skipped: Vec::new(),
            martingale: Vec::new(),
            containment: Vec::new(),
        };
        for s in &suites {
            match s {
                Suite::Propagator => checks.propagator(),
                Suite::Evolution => checks.evolution()?,
                Suite::Averaging => checks.averaging()?,
                Suite::Containment => checks.containment()?,
                Suite::All => unreachable!("expanded"),
            }
        }
        if !checks.martingale.is_empty() {
            let rows: Vec<_> = checks
                .martingale
                .iter()
                .flat_map(|r| r.rows.iter().cloned())
                .collect();
            out.write_csv("martingale.csv", &rows)?;
        }
        if !checks.containment.is_empty() {
            out.write_csv("containment.csv", &checks.containment)?;
        }

        // One summary line per check name.
        let mut summary: Vec<CheckSummary> = Vec::new();
        for r in &checks.records {
            match summary.iter_mut().find(|c| c.name == r.check) {
                Some(c) => c.pass &= r.pass,
                None => summary.push(CheckSummary {
                    name: r.check.clone(),
                    pass: r.pass,
                    detail: String::new(),
                }),
            }
        }
        for c in &mut summary {
            let n = checks.records.iter().filter(|r| r.check == c.name).count();
            let bad = checks
                .records
                .iter()
                .filter(|r| r.check == c.name && !r.pass)
                .count();
            c.detail = format!("{} of {n} records pass", n - bad);
        }
        let status = Status::from_checks(&summary);
        let report = VerifyReport {
            suites: suites.clone(),
            records: checks.records,
            skipped: checks.skipped,
            pass: status == Status::Passed,
        };
        out.write_json("verify_report.json", &report)?;
        Ok((summary, status, Report::Verify(report)))
    })
}

/// Sweep needs at least this many scales to say anything about a trend.
pub const MIN_SWEEP_EPSILONS: usize = 3;

pub fn sweep(config: &Path, overrides: &Overrides) -> Result<Outcome, CliError> {
    let loaded = load(config, overrides)?;
    let n_eps = loaded.config.run.epsilons.len();
    if n_eps < MIN_SWEEP_EPSILONS {
        return Err(CliError::Schema(format!(
            "run.epsilons: sweep needs at least {MIN_SWEEP_EPSILONS} values, got {n_eps}"
        )));
    }
    execute("sweep", loaded, |cfg, m, out| {
        let evo = RandomEvolution::new(&m.sm, &m.levy, &m.alpha)
            .map_err(core_err("building the evolution"))?;
        let avg = Averager::with_fault(evo, cfg.checks.inject_fault)
            .map_err(core_err("averaging the model"))?;
        let settings = SweepSettings {
            s: cfg.run.s,
            epsilons: cfg.run.epsilons.clone(),
            t_grid: cfg.run.t_grid.clone(),
            z_grid: cfg.run.z_grid.clone(),
            functions: m.functions.clone(),
            budget: cfg.budget(),
            ci_floor: cfg.checks.ci_floor,
            final_ratio: cfg.checks.final_ratio,
            level: cfg.checks.level,
        };
        let report = match lln_sweep(&avg, &settings, &StreamKey::root(cfg.run.seed, "sweep")) {
            Ok(r) => r,
            Err(Error::BudgetTooSmall {
                what,
                half_width,
                scale,
            }) => {
                let msg = format!("{what}: half-width {half_width:.3e} exceeds {scale:.3e}");
                let checks = vec![CheckSummary {
                    name: "budget".into(),
                    pass: false,
                    detail: msg.clone(),
                }];
                let empty = SweepReport {
                    rows: vec![],
                    cells: vec![],
                    monotone_pass: false,
                    final_pass: false,
                    budget_ok: false,
                    rate: f64::NAN,
                };
                return Ok((checks, Status::BudgetTooSmall(msg), Report::Sweep(empty)));
            }
            Err(e) => return Err(CliError::runtime("sweep", e)),
        };
        out.write_csv("sweep.csv", &report.rows)?;
        out.write_json(
            "sweep_summary.json",
            &json!({
                "cells": report.cells,
                "monotone_pass": report.monotone_pass,
                "final_pass": report.final_pass,
                "budget_ok": report.budget_ok,
                "rate": json_number(report.rate),
            }),
        )?;
        let limiting = report
            .limiting_cell()
            .map(|c| format!("{} (pooled half-width {:.3e})", c.widest, c.pooled))
            .unwrap_or_default();
        let checks = vec![
            CheckSummary {
                name: "budget".into(),
                pass: report.budget_ok,
                detail: if report.budget_ok {
                    String::new()
                } else {
                    format!("limiting cell {limiting}")
                },
            },
            CheckSummary {
                name: "monotone_decrease".into(),
                pass: report.monotone_pass,
                detail: String::new(),
            },
            CheckSummary {
                name: "final_ratio".into(),
                pass: report.final_pass,
                detail: String::new(),
            },
        ];
        let status = if !report.budget_ok {
            Status::BudgetTooSmall(format!("limiting cell {limiting}"))
        } else {
            Status::from_checks(&checks)
        };
        Ok((checks, status, Report::Sweep(report)))
    })
}

/// Reads back a manifest written by a previous run.
pub fn read_manifest(dir: &Path) -> Result<RunManifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::runtime(&format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::runtime(&format!("parsing {}", path.display()), e))
}
