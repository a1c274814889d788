//! End-to-end acceptance criteria. Each criterion prints one PASS or FAIL
//! line; the test fails if any of them does.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use randevo_cli::{commands, load, Overrides, Report, Status, Suite};
use randevo_core::averaging::Averager;
use randevo_core::propagator::run_canonical_matrix;
use randevo_core::{
    CoefficientFn, JumpLaw, JumpOperatorFamily, JumpPart, LevyModel, RandomEvolution,
    SemiMarkovModel, SojournLaw, StateLevy, StateSpace, StreamKey, TestFunction,
};
use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn overrides(out: &Path, set: &[&str]) -> Overrides {
    Overrides {
        seed: None,
        out: Some(out.to_path_buf()),
        set: set.iter().map(|s| s.to_string()).collect(),
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn renewal_rate() -> Verdict {
    let models = load(&config("reference.json"), &Overrides::default())
        .and_then(|l| l.config.models())
        .expect("reference config");
    let horizon = 1e4;
    let key = StreamKey::root(20240611, "renewal");
    let mean = (0..32u64)
        .map(|i| {
            let path = models.sm.sample_path(0.0, horizon, &mut key.rng(i));
            path.counting_process(0.0, horizon).unwrap() as f64 / horizon
        })
        .sum::<f64>()
        / 32.0;
    let expected = 1.0 / models.sm.stationary().m_rho;
    let rel = (mean - expected).abs() / expected;
    verdict(
        rel <= 0.02,
        format!("mean N(t)/t = {mean:.5} at t = 1e4 over 32 paths, 1/M_rho = {expected}, relative gap {rel:.2e}"),
    )
}

fn random_chain(rng: &mut impl Rng) -> SemiMarkovModel {
    loop {
        let n = rng.random_range(2..=6);
        let p: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let w: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.random_bool(0.25) {
                            0.0
                        } else {
                            rng.random_range(0.05..1.0)
                        }
                    })
                    .collect();
                let total: f64 = w.iter().sum();
                if total == 0.0 {
                    vec![1.0 / n as f64; n]
                } else {
                    w.iter().map(|v| v / total).collect()
                }
            })
            .collect();
        let sojourn = (0..n)
            .map(|_| {
                let a = rng.random_range(0.0..1.0);
                SojournLaw::Uniform {
                    a,
                    b: a + rng.random_range(0.1..2.0),
                }
            })
            .collect();
        if let Ok(sm) = SemiMarkovModel::new(StateSpace::indexed(n), p, sojourn, None) {
            return sm;
        }
    }
}

fn random_levy(n: usize, rng: &mut impl Rng) -> LevyModel {
    let states = (0..n)
        .map(|_| StateLevy {
            b: vec![CoefficientFn::Affine {
                v0: rng.random_range(-1.0..1.0),
                v1: rng.random_range(-0.5..0.5),
            }],
            c: vec![CoefficientFn::Const(rng.random_range(0.0..1.0))],
            jumps: if rng.random_bool(0.5) {
                vec![JumpPart {
                    intensity: CoefficientFn::Const(rng.random_range(0.1..2.0)),
                    law: JumpLaw::TwoPoint {
                        h_plus: 0.4,
                        p: 0.5,
                        h_minus: -0.3,
                    },
                }]
            } else {
                vec![]
            },
        })
        .collect();
    LevyModel::new(1, states, 10.0).unwrap()
}

fn linear_algebra_on_random_chains() -> Verdict {
    let mut rng = StreamKey::root(5, "chains").rng(0);
    let f = TestFunction::gaussian(0.1, 0.7, 1.0);
    let mut worst: f64 = 0.0;
    let mut sizes = Vec::new();
    for _ in 0..20 {
        let sm = random_chain(&mut rng);
        let n = sm.n_states();
        sizes.push(n);
        let levy = random_levy(n, &mut rng);
        let alpha = JumpOperatorFamily::from_scalars(
            (0..n)
                .map(|_| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect())
                .collect(),
        )
        .unwrap();
        let evo = RandomEvolution::new(&sm, &levy, &alpha).unwrap();
        let avg = Averager::new(evo).unwrap();
        let p = sm.p();
        let rho = DVector::from_column_slice(&sm.stationary().rho);
        let rho_max = rho.amax();
        let balance = (p.transpose() * &rho - &rho).amax() / rho_max;
        let mass = (rho.sum() - 1.0).abs();
        worst = worst.max(balance).max(mass);
        for (t, z) in [(0.3, -0.4), (1.1, 0.5)] {
            let rhs = DVector::from_vec(avg.poisson_rhs(t, &f, &[z]).unwrap());
            let scale = rhs.amax().max(f64::MIN_POSITIVE);
            let g = DVector::from_vec(avg.corrector(t, &f, &[z]).unwrap().g);
            let residual = (p * &g - &g - &rhs).amax() / scale;
            let centre = rho.dot(&g).abs() / scale;
            worst = worst.max(residual).max(centre);
        }
    }
    verdict(
        worst <= 1e-10,
        format!("worst relative residual {worst:.2e} over 20 chains with sizes {sizes:?}"),
    )
}

fn canonical_matrix() -> Verdict {
    let records = run_canonical_matrix(100_000, &StreamKey::root(3, "canonical"));
    let failed: Vec<String> = records
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} {:?}", r.check, r.params))
        .collect();
    verdict(
        failed.is_empty() && !records.is_empty(),
        format!(
            "{} of {} records pass {:?}",
            records.len() - failed.len(),
            records.len(),
            failed
        ),
    )
}

fn two_route_averaged_generator() -> Verdict {
    let models = load(&config("jumps_and_diffusion.json"), &Overrides::default())
        .and_then(|l| l.config.models())
        .expect("jumps config");
    let evo = RandomEvolution::new(&models.sm, &models.levy, &models.alpha).unwrap();
    let avg = Averager::new(evo).unwrap();
    let functions = [
        TestFunction::gaussian(0.0, 1.0, 1.0),
        TestFunction::gaussian(-0.3, 0.5, 2.0),
        TestFunction::bump(0.2, 1.5, 1.0),
    ];
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for t in [0.0, 0.4, 1.3] {
        for z in [-0.6, 0.1, 0.9] {
            for f in &functions {
                let a = avg.a_hat(t, f, &[z]).unwrap();
                let b = avg.a_hat_averaged(t, f, &[z]).unwrap();
                worst = worst.max((a - b).abs());
                points += 1;
            }
        }
    }
    verdict(
        worst <= 1e-9,
        format!("max difference {worst:.2e} over {points} points"),
    )
}

fn sweep_passes(name: &str, out: &Path) -> (bool, String) {
    match commands::sweep(&config(name), &overrides(out, &[])) {
        Ok(outcome) => {
            let Report::Sweep(rep) = &outcome.report else {
                return (false, format!("{name}: unexpected report"));
            };
            let errs: Vec<String> = rep
                .cells
                .iter()
                .map(|c| format!("{}:{:.4}", c.epsilon, c.err))
                .collect();
            let pass = outcome.status == Status::Passed && rep.pass();
            (
                pass,
                format!(
                    "{name}: err {} monotone {} final {} budget {}",
                    errs.join(" "),
                    rep.monotone_pass,
                    rep.final_pass,
                    rep.budget_ok
                ),
            )
        }
        Err(e) => (false, format!("{name}: {e}")),
    }
}

fn headline_sweep(tmp: &Path) -> Verdict {
    let (a, da) = sweep_passes("reference.json", &tmp.join("sweep_reference"));
    let (b, db) = sweep_passes("alpha_driven.json", &tmp.join("sweep_alpha"));
    verdict(a && b, format!("{da}; {db}"))
}

fn verify_records(
    suite: Suite,
    out: &Path,
    set: &[&str],
) -> Result<Vec<randevo_core::ResidualRecord>, String> {
    let outcome = commands::verify(&config("reference.json"), &overrides(out, set), Some(suite))
        .map_err(|e| e.to_string())?;
    match outcome.report {
        Report::Verify(rep) => Ok(rep.records),
        _ => Err("unexpected report".into()),
    }
}

fn martingale(tmp: &Path) -> Verdict {
    let records = match verify_records(
        Suite::Averaging,
        &tmp.join("martingale"),
        &["checks.martingale_epsilons=[0.2,0.05]"],
    ) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let wanted = [
        "martingale_null_mean",
        "martingale_bracket",
        "martingale_sup_decrease",
    ];
    let picked: Vec<_> = records
        .iter()
        .filter(|r| wanted.contains(&r.check.as_str()))
        .collect();
    let summary: Vec<String> = picked
        .iter()
        .map(|r| format!("{} {:.3}/{:.3}", r.check, r.residual, r.tolerance))
        .collect();
    verdict(
        picked.len() == 5 && picked.iter().all(|r| r.pass),
        summary.join(", "),
    )
}

fn containment(tmp: &Path) -> Verdict {
    let records = match verify_records(
        Suite::Containment,
        &tmp.join("containment"),
        &["run.epsilons=[0.2,0.1,0.05]", "checks.delta=0.1"],
    ) {
        Ok(r) => r,
        Err(e) => return verdict(false, e),
    };
    let probs: Vec<String> = records
        .iter()
        .map(|r| format!("eps {} P {}", r.params["epsilon"], r.params["probability"]))
        .collect();
    verdict(
        records.len() == 3 && records.iter().all(|r| r.pass),
        probs.join(", "),
    )
}

fn sweep_determinism(tmp: &Path) -> Verdict {
    let dirs = [tmp.join("det_a"), tmp.join("det_b")];
    for d in &dirs {
        if let Err(e) = commands::sweep(
            &config("reference.json"),
            &overrides(d, &["run.n_samples=20000"]),
        ) {
            return verdict(false, e.to_string());
        }
    }
    let same = ["sweep.csv", "sweep_summary.json"]
        .iter()
        .all(|f| fs::read(dirs[0].join(f)).ok() == fs::read(dirs[1].join(f)).ok());
    verdict(
        same,
        "sweep.csv and sweep_summary.json compared byte for byte",
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

#[test]
fn acceptance() {
    std::env::remove_var("RANDEVO_THREADS");
    println!();
    let tmp = TempDir::new().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("renewal rate", Box::new(renewal_rate)),
        (
            "stationary and Poisson linear algebra",
            Box::new(linear_algebra_on_random_chains),
        ),
        ("propagator residual matrix", Box::new(canonical_matrix)),
        (
            "two-route averaged generator",
            Box::new(two_route_averaged_generator),
        ),
        ("convergence sweep", Box::new(|| headline_sweep(tmp.path()))),
        (
            "martingale diagnostics",
            Box::new(|| martingale(tmp.path())),
        ),
        ("compact containment", Box::new(|| containment(tmp.path()))),
        (
            "sweep determinism",
            Box::new(|| sweep_determinism(tmp.path())),
        ),
    ];
    let mut failed = Vec::new();
    for (name, check) in &criteria {
        let v = check();
        println!(
            "{} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
