//! A fixed matrix of generators, test functions and time pairs on which every
//! propagator identity is checked.

use super::residuals::{
    cauchy_uniqueness_check, composition_residual, integral_representation_residual, json_number,
    s_derivative_residual, t_derivative_residual, taylor2_residual, CauchyScheme, CheckContext,
    Residual, ResidualRecord,
};
use super::EvalMode;
use crate::error::Result;
use crate::levy::{CoefficientFn, JumpLaw, JumpPart, LevyModel, StateLevy};
use crate::mc::McBudget;
use crate::rng::StreamKey;
use crate::test_function::TestFunction;

pub const COMPOSITION_TOL: f64 = 1e-10;
pub const DERIVATIVE_TOL: f64 = 1e-4;
pub const DERIVATIVE_STEP: f64 = 1e-3;
pub const INTEGRAL_TOL: f64 = 1e-6;
pub const CAUCHY_TOL: f64 = 1e-4;
pub const CAUCHY_STEP: f64 = 0.01;
/// Halving the step of the midpoint scheme must shrink the error by a factor
/// in this range.
pub const CAUCHY_RATIO: (f64, f64) = (3.0, 5.0);

const Z_GRID: [f64; 4] = [-1.0, 0.0, 0.5, 1.5];
const Z_POINT: f64 = 0.4;

/// One cell of the matrix.
#[derive(Debug, Clone)]
pub struct CanonicalCase {
    pub generator: &'static str,
    pub function: &'static str,
    pub s: f64,
    pub t: f64,
}

/// Time-dependent drift, Brownian motion with growing variance, and a
/// compound-Poisson process with constant drift and oscillating intensity.
pub fn canonical_generators() -> Vec<(&'static str, LevyModel)> {
    let drift = StateLevy::drift(CoefficientFn::Trig {
        v0: 0.5,
        v1: 0.8,
        omega: 3.0,
    });
    let brownian = StateLevy::diffusion(CoefficientFn::Affine { v0: 1.0, v1: 1.0 });
    let jump = StateLevy {
        b: vec![CoefficientFn::Const(0.3)],
        c: vec![CoefficientFn::zero()],
        jumps: vec![JumpPart {
            intensity: CoefficientFn::Trig {
                v0: 1.0,
                v1: 0.5,
                omega: 2.0,
            },
            law: JumpLaw::TwoPoint {
                h_plus: 0.7,
                p: 0.6,
                h_minus: -0.4,
            },
        }],
    };
    vec![
        ("drift", LevyModel::new_unchecked(1, vec![drift])),
        ("brownian", LevyModel::new_unchecked(1, vec![brownian])),
        ("jump", LevyModel::new_unchecked(1, vec![jump])),
    ]
}

pub fn canonical_functions() -> Vec<(&'static str, TestFunction)> {
    vec![
        ("gaussian", TestFunction::gaussian(0.3, 1.0, 1.0)),
        ("narrow_gaussian", TestFunction::gaussian(0.0, 0.3, 1.0)),
        ("bump", TestFunction::bump(0.2, 1.5, 1.0)),
    ]
}

pub const TIME_PAIRS: [(f64, f64); 3] = [(0.0, 0.5), (0.2, 1.0), (0.0, 1.0)];

pub fn canonical_matrix() -> Vec<CanonicalCase> {
    let mut out = Vec::new();
    for (g, _) in canonical_generators() {
        for (f, _) in canonical_functions() {
            for &(s, t) in &TIME_PAIRS {
                out.push(CanonicalCase {
                    generator: g,
                    function: f,
                    s,
                    t,
                });
            }
        }
    }
    out
}

fn record(
    check: &str,
    case: &CanonicalCase,
    extra: Vec<(&str, serde_json::Value)>,
    outcome: Result<Residual>,
    tol: f64,
) -> ResidualRecord {
    let mut params = vec![
        ("generator", case.generator.into()),
        ("function", case.function.into()),
        ("s", json_number(case.s)),
        ("t", json_number(case.t)),
    ];
    params.extend(extra);
    match outcome {
        Ok(r) => ResidualRecord::new(check, params, &r, tol),
        Err(e) => ResidualRecord::failed(check, params, &e, tol),
    }
}

/// Runs every identity on every cell with exact evaluation, then a Monte
/// Carlo composition check for the Brownian generator with `mc_samples`
/// samples.
pub fn run_canonical_matrix(mc_samples: u64, key: &StreamKey) -> Vec<ResidualRecord> {
    let gens = canonical_generators();
    let funcs = canonical_functions();
    let exact = CheckContext::exact();
    let mut out = Vec::new();
    for case in canonical_matrix() {
        let model = &gens
            .iter()
            .find(|(n, _)| *n == case.generator)
            .expect("generator")
            .1;
        let f = &funcs
            .iter()
            .find(|(n, _)| *n == case.function)
            .expect("function")
            .1;
        let g = model.propagator(0, EvalMode::Exact);
        let (s, t) = (case.s, case.t);
        let r = 0.5 * (s + t);
        out.push(record(
            "composition",
            &case,
            vec![("r", json_number(r))],
            composition_residual(&g, s, r, t, f, &Z_GRID, &exact),
            COMPOSITION_TOL,
        ));
        let h = vec![
            ("h", json_number(DERIVATIVE_STEP)),
            ("z", json_number(Z_POINT)),
        ];
        out.push(record(
            "t_derivative",
            &case,
            h.clone(),
            t_derivative_residual(&g, s, t, f, Z_POINT, DERIVATIVE_STEP, &exact),
            DERIVATIVE_TOL,
        ));
        out.push(record(
            "s_derivative",
            &case,
            h,
            s_derivative_residual(&g, s, t, f, Z_POINT, DERIVATIVE_STEP, &exact),
            DERIVATIVE_TOL,
        ));
        let zp = vec![("z", json_number(Z_POINT))];
        out.push(record(
            "integral_representation",
            &case,
            zp.clone(),
            integral_representation_residual(&g, s, t, f, Z_POINT, &exact),
            INTEGRAL_TOL,
        ));
        out.push(record(
            "taylor2",
            &case,
            zp.clone(),
            taylor2_residual(&g, s, t, f, Z_POINT, &exact),
            INTEGRAL_TOL,
        ));
        out.extend(cauchy_records(&g, &case, f));
    }

    let brownian = &gens
        .iter()
        .find(|(n, _)| *n == "brownian")
        .expect("brownian")
        .1;
    let g = brownian.propagator(0, EvalMode::MonteCarlo);
    let f = &funcs[0].1;
    let case = CanonicalCase {
        generator: "brownian",
        function: funcs[0].0,
        s: 0.0,
        t: 1.0,
    };
    let ctx = CheckContext::monte_carlo(McBudget::samples(mc_samples), key.child("canonical-mc"));
    out.push(record(
        "composition_mc",
        &case,
        vec![
            ("r", json_number(0.5)),
            ("n_samples", json_number(mc_samples as f64)),
        ],
        composition_residual(&g, 0.0, 0.5, 1.0, f, &[Z_POINT], &ctx),
        0.0,
    ));
    out
}

fn cauchy_records(
    g: &crate::levy::LevyPropagator<'_>,
    case: &CanonicalCase,
    f: &TestFunction,
) -> Vec<ResidualRecord> {
    let grid = [0.5 * (case.s + case.t), case.t];
    let fine = cauchy_uniqueness_check(
        g,
        case.s,
        None,
        &grid,
        f,
        Z_POINT,
        CAUCHY_STEP,
        CauchyScheme::ExponentialMidpoint,
    );
    let coarse = cauchy_uniqueness_check(
        g,
        case.s,
        None,
        &grid,
        f,
        Z_POINT,
        2.0 * CAUCHY_STEP,
        CauchyScheme::ExponentialMidpoint,
    );
    let step = vec![
        ("step", json_number(CAUCHY_STEP)),
        ("z", json_number(Z_POINT)),
    ];
    let mut out = Vec::new();
    let ratio = match (&fine, &coarse) {
        (Ok(a), Ok(b)) if a.value > 1e-12 => Some(b.value / a.value),
        _ => None,
    };
    out.push(record(
        "cauchy_uniqueness",
        case,
        step.clone(),
        fine,
        CAUCHY_TOL,
    ));
    if let Some(ratio) = ratio {
        let mut params = step;
        params.push(("generator", case.generator.into()));
        params.push(("function", case.function.into()));
        params.push(("s", json_number(case.s)));
        params.push(("t", json_number(case.t)));
        params.push(("min_ratio", json_number(CAUCHY_RATIO.0)));
        out.push(ResidualRecord {
            check: "cauchy_order".into(),
            params: params
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            residual: ratio,
            tolerance: CAUCHY_RATIO.1,
            pass: (CAUCHY_RATIO.0..=CAUCHY_RATIO.1).contains(&ratio),
        });
    }
    out
}
