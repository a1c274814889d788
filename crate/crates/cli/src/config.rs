//! The experiment configuration: a single JSON document with one section per
//! model component, loaded, patched with `--set` overrides and checked before
//! anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use randevo_core::averaging::Fault;
use randevo_core::semi_markov::validate_model;
use randevo_core::{
    JumpOperatorFamily, LevyModel, McBudget, SemiMarkovModel, SojournLaw, StateLevy, StateSpace,
    TestFunction,
};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub semi_markov: SemiMarkovSection,
    pub levy: LevySection,
    #[serde(default)]
    pub jumps: JumpsSection,
    pub run: RunSection,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiMarkovSection {
    pub states: Vec<String>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub sojourn: Vec<SojournLaw>,
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub dim: usize,
    pub states: Vec<StateLevy>,
}

/// A number, or a vector of `dim` numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVector {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScalarOrVector {
    fn to_vec(&self, dim: usize) -> Vec<f64> {
        match self {
            ScalarOrVector::Scalar(v) => vec![*v; dim],
            ScalarOrVector::Vector(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpsSection {
    /// Shift `alpha(x, y)` per pair of states; zero when absent.
    #[serde(default)]
    pub alpha: Option<Vec<Vec<ScalarOrVector>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFunction {
    pub id: String,
    pub profile: randevo_core::test_function::Profile,
    pub center: ScalarOrVector,
    pub width: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub s: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub epsilons: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub z_grid: Vec<f64>,
    pub test_functions: Vec<NamedFunction>,
    /// Paths written by `simulate` and used by the pathwise checks.
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    /// Monte Carlo samples per estimate.
    pub n_samples: u64,
    #[serde(default)]
    pub max_wall_seconds: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Propagator,
    Evolution,
    Averaging,
    Containment,
    All,
}

impl Suite {
    pub const EACH: [Suite; 4] = [
        Suite::Propagator,
        Suite::Evolution,
        Suite::Averaging,
        Suite::Containment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Propagator => "propagator",
            Suite::Evolution => "evolution",
            Suite::Averaging => "averaging",
            Suite::Containment => "containment",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSection {
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    /// Containment level: the probe asks for probability at least `1 - delta`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub inject_fault: Option<Fault>,
    /// Pooled half-widths below this are never too wide for the sweep.
    #[serde(default = "default_ci_floor")]
    pub ci_floor: f64,
    /// The finest sweep error must fall below the coarsest over this ratio.
    #[serde(default = "default_final_ratio")]
    pub final_ratio: f64,
    #[serde(default = "default_martingale_epsilons")]
    pub martingale_epsilons: Vec<f64>,
    /// Paths for the martingale diagnostics, which cost far more per path
    /// than a plain expectation.
    #[serde(default = "default_martingale_paths")]
    pub martingale_paths: u64,
    /// Family-wise level of the pooled sweep bands.
    #[serde(default = "default_level")]
    pub level: f64,
}

impl Default for ChecksSection {
    fn default() -> Self {
        ChecksSection {
            suites: default_suites(),
            delta: default_delta(),
            inject_fault: None,
            ci_floor: default_ci_floor(),
            final_ratio: default_final_ratio(),
            martingale_epsilons: default_martingale_epsilons(),
            martingale_paths: default_martingale_paths(),
            level: default_level(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// `simulate` writes at most this many `paths/path_{i}.csv` files.
    #[serde(default = "default_max_path_files")]
    pub max_path_files: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            max_path_files: default_max_path_files(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn default_paths() -> u64 {
    1000
}
fn default_suites() -> Vec<Suite> {
    vec![Suite::All]
}
fn default_delta() -> f64 {
    0.1
}
fn default_ci_floor() -> f64 {
    0.01
}
fn default_final_ratio() -> f64 {
    4.0
}
fn default_martingale_epsilons() -> Vec<f64> {
    vec![0.2, 0.05]
}
fn default_martingale_paths() -> u64 {
    4000
}
fn default_level() -> f64 {
    0.05
}
fn default_max_path_files() -> u64 {
    1000
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line adjustments applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `dotted.key=value` pairs; values are JSON, or strings when they do
    /// not parse as JSON.
    pub set: Vec<String>,
}

/// A configuration after overrides, with the JSON it was decoded from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub resolved: Value,
}

/// Reads a configuration file. A run manifest is accepted too, in which case
/// its recorded configuration is used.
pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get("resolved_config") {
        value = inner.clone();
    }
    for item in &overrides.set {
        apply_set(&mut value, item)?;
    }
    if let Some(seed) = overrides.seed {
        set_path(&mut value, "run.seed", Value::from(seed))?;
    }
    if let Some(out) = &overrides.out {
        set_path(
            &mut value,
            "output.dir",
            Value::from(out.to_string_lossy().into_owned()),
        )?;
    }
    let config = decode(&value)?;
    check_run(&config)?;
    // Re-encode so defaults appear in the manifest.
    let resolved = serde_json::to_value(&config).map_err(|e| CliError::Schema(e.to_string()))?;
    Ok(LoadedConfig { config, resolved })
}

fn decode(value: &Value) -> Result<ExperimentConfig, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            CliError::Schema(e.inner().to_string())
        } else {
            CliError::Schema(format!("{path}: {}", e.inner()))
        }
    })
}

fn apply_set(value: &mut Value, item: &str) -> Result<(), CliError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| CliError::Schema(format!("--set expects key=value, got `{item}`")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(value, key.trim(), parsed)
}

fn set_path(value: &mut Value, key: &str, new: Value) -> Result<(), CliError> {
    let mut cur = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), new);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    CliError::Schema(format!("`{key}`: `{part}` is not an array index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    CliError::Schema(format!("`{key}`: index {idx} out of range (length {len})"))
                })?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Schema(format!(
                    "`{key}`: `{part}` is inside a scalar"
                )))
            }
        };
    }
    Err(CliError::Schema("empty override key".into()))
}

fn check_run(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let run = &cfg.run;
    let bad = |field: &str, why: String| Err(CliError::Schema(format!("run.{field}: {why}")));
    if !(run.s.is_finite() && run.horizon.is_finite() && run.horizon >= run.s) {
        return bad("T", format!("must be finite and at least s = {}", run.s));
    }
    if run.epsilons.is_empty() {
        return bad("epsilons", "must not be empty".into());
    }
    if let Some(e) = run.epsilons.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
        return bad("epsilons", format!("{e} is outside (0, 1]"));
    }
    if run.epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return bad("epsilons", "must be strictly decreasing".into());
    }
    if run.t_grid.is_empty() || run.t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return bad("t_grid", "must be nonempty and strictly increasing".into());
    }
    if let Some(t) = run.t_grid.iter().find(|t| **t < run.s || **t > run.horizon) {
        return bad("t_grid", format!("{t} lies outside [s, T]"));
    }
    if run.z_grid.is_empty() {
        return bad("z_grid", "must not be empty".into());
    }
    if run.test_functions.is_empty() {
        return bad("test_functions", "must not be empty".into());
    }
    if run.threads == Some(0) {
        return bad("threads", "must be positive".into());
    }
    let c = &cfg.checks;
    if !(c.delta > 0.0 && c.delta < 1.0) {
        return Err(CliError::Schema(format!(
            "checks.delta: {} is outside (0, 1)",
            c.delta
        )));
    }
    if let Some(e) = c
        .martingale_epsilons
        .iter()
        .find(|e| !(**e > 0.0 && **e <= 1.0))
    {
        return Err(CliError::Schema(format!(
            "checks.martingale_epsilons: {e} is outside (0, 1]"
        )));
    }
    Ok(())
}

/// The models described by a configuration.
#[derive(Debug, Clone)]
pub struct Models {
    pub sm: SemiMarkovModel,
    pub levy: LevyModel,
    pub alpha: JumpOperatorFamily,
    pub functions: Vec<(String, TestFunction)>,
}

impl ExperimentConfig {
    /// Builds and validates every model; failures are model errors.
    pub fn models(&self) -> Result<Models, CliError> {
        let sm_cfg = &self.semi_markov;
        let report = validate_model(&sm_cfg.p, &sm_cfg.sojourn);
        if !report.usable() {
            let msg = report
                .into_result()
                .err()
                .map(|e| e.to_string())
                .unwrap_or_default();
            return Err(CliError::Model(format!("semi_markov: {msg}")));
        }
        let states = StateSpace::new(sm_cfg.states.clone())
            .map_err(|e| CliError::Model(format!("semi_markov.states: {e}")))?;
        let sm = SemiMarkovModel::new(
            states,
            sm_cfg.p.clone(),
            sm_cfg.sojourn.clone(),
            sm_cfg.initial.clone(),
        )
        .map_err(|e| CliError::Model(format!("semi_markov: {e}")))?;

        let n = sm.n_states();
        let d = self.levy.dim;
        if self.levy.states.len() != n {
            return Err(CliError::Model(format!(
                "levy.states: {} entries for {n} semi-Markov states",
                self.levy.states.len()
            )));
        }
        let levy = LevyModel::new(d, self.levy.states.clone(), self.run.horizon)
            .map_err(|e| CliError::Model(format!("levy: {e}")))?;

        let alpha = match &self.jumps.alpha {
            None => JumpOperatorFamily::zeros(d, n),
            Some(rows) => {
                let entries = rows
                    .iter()
                    .map(|r| r.iter().map(|a| a.to_vec(d)).collect())
                    .collect();
                JumpOperatorFamily::new(d, entries)
                    .map_err(|e| CliError::Model(format!("jumps.alpha: {e}")))?
            }
        };

        let mut functions = Vec::with_capacity(self.run.test_functions.len());
        for (i, nf) in self.run.test_functions.iter().enumerate() {
            let f = TestFunction {
                profile: nf.profile,
                center: nf.center.to_vec(d),
                width: nf.width,
                amplitude: nf.amplitude,
            };
            f.validate().map_err(|e| {
                CliError::Model(format!("run.test_functions[{i}] ({}): {e}", nf.id))
            })?;
            if f.center.len() != d {
                return Err(CliError::Model(format!(
                    "run.test_functions[{i}] ({}): center has {} coordinates, dim is {d}",
                    nf.id,
                    f.center.len()
                )));
            }
            functions.push((nf.id.clone(), f));
        }
        Ok(Models {
            sm,
            levy,
            alpha,
            functions,
        })
    }

    pub fn budget(&self) -> McBudget {
        McBudget {
            n_samples: self.run.n_samples,
            max_wall_seconds: self.run.max_wall_seconds.unwrap_or(f64::INFINITY),
        }
    }
}
