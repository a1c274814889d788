use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use randevo_cli::RunManifest;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn randevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randevo"))
        .args(args)
        .env_remove("RANDEVO_THREADS")
        .output()
        .expect("binary runs")
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    randevo(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut v: Value =
        serde_json::from_slice(&fs::read(config("reference.json")).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn validate_accepts_the_shipped_configs_and_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    for name in [
        "reference.json",
        "alpha_driven.json",
        "single_state.json",
        "jumps_and_diffusion.json",
    ] {
        let out = tmp.path().join(name);
        let o = run("validate", &config(name), &out, &[]);
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
        assert!(!out.exists());
    }
}

#[test]
fn schema_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");

    let bad = write_config(tmp.path(), |v| {
        v["run"]["colour"] = Value::from("blue");
    });
    let o = run("validate", &bad, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let missing = write_config(tmp.path(), |v| {
        v["run"].as_object_mut().unwrap().remove("epsilons");
    });
    let o = run("validate", &missing, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("epsilons"));

    let o = run(
        "sweep",
        &config("reference.json"),
        &out,
        &["--set", "run.epsilons=[0.5,0.2]"],
    );
    assert_eq!(code(&o), 2);
    assert!(!out.join("sweep.csv").exists());

    let o = run(
        "validate",
        &config("reference.json"),
        &out,
        &["--set", "run.n_paths"],
    );
    assert_eq!(code(&o), 2);

    let o = run("validate", &tmp.path().join("absent.json"), &out, &[]);
    assert_ne!(code(&o), 0);
}

#[test]
fn model_errors_exit_with_three_and_name_the_row() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        "validate",
        &config("reference.json"),
        &tmp.path().join("out"),
        &["--set", "semi_markov.P.0=[0.4,0.5]"],
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("row 0"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_with_four() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = run(
        "sweep",
        &config("reference.json"),
        &blocker.join("out"),
        &["--set", "run.n_samples=2000"],
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn injected_fault_fails_verification_with_five() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let diffusive = ["--set", "levy.states.0.c.0.const=0.5"];
    let o = run(
        "verify",
        &config("reference.json"),
        &out,
        &[&diffusive[..], &["--suite", "averaging"]].concat(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let o = run(
        "verify",
        &config("reference.json"),
        &out,
        &[
            &diffusive[..],
            &[
                "--suite",
                "averaging",
                "--set",
                "checks.inject_fault=\"negate_averaged_diffusion\"",
            ],
        ]
        .concat(),
    );
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL two_route_a_hat"), "{stdout}");
    let m = manifest(&out);
    assert_eq!(m.exit_code, 5);
    assert!(m
        .checks
        .iter()
        .any(|c| c.name == "two_route_a_hat" && !c.pass));
    let report: Value =
        serde_json::from_slice(&fs::read(out.join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], Value::Bool(false));
}

#[test]
fn starved_budget_exits_with_six_and_names_the_cell() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        "sweep",
        &config("reference.json"),
        &out,
        &["--set", "run.n_samples=10"],
    );
    assert_eq!(code(&o), 6, "{}", stderr(&o));
    assert!(stderr(&o).contains("epsilon="), "{}", stderr(&o));
    assert_eq!(manifest(&out).exit_code, 6);
}

#[test]
fn manifest_lists_every_output_with_its_digest() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        "sweep",
        &config("reference.json"),
        &out,
        &["--seed", "99", "--set", "run.n_samples=20000"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m.command, "sweep");
    assert_eq!(m.seed_root, 99);
    assert_eq!(m.exit_code, 0);
    assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(m.resolved_config["run"]["seed"], Value::from(99));
    assert_eq!(m.resolved_config["run"]["n_samples"], Value::from(20000));
    assert!(m.finished_at >= m.started_at);
    let names: Vec<&str> = m.outputs.iter().map(|f| f.path.as_str()).collect();
    assert!(
        names.contains(&"sweep.csv") && names.contains(&"sweep_summary.json"),
        "{names:?}"
    );
    for f in &m.outputs {
        let bytes = fs::read(out.join(&f.path)).unwrap();
        assert_eq!(bytes.len() as u64, f.bytes);
        let digest: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(digest, f.sha256, "{}", f.path);
    }
    for entry in fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(!name.to_string_lossy().ends_with(".tmp"));
    }

    let header = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(header
        .starts_with("epsilon,f_id,t,z,v_eps_mean,v_eps_hw,gamma_hat_mean,gamma_hat_hw,abs_err\n"));
}

#[test]
fn a_manifest_reproduces_its_run() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    let o = run(
        "sweep",
        &config("reference.json"),
        &first,
        &["--set", "run.n_samples=5000"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run("sweep", &first.join("manifest.json"), &second, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("sweep.csv")).unwrap(),
        fs::read(second.join("sweep.csv")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let o = run(
            "sweep",
            &config("reference.json"),
            &out,
            &[
                "--set",
                "run.n_samples=5000",
                "--set",
                &format!("run.threads={threads}"),
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert_eq!(manifest(&out).threads, threads.parse::<usize>().unwrap());
        csvs.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn thread_cap_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_randevo"))
        .args([
            "simulate",
            "--config",
            config("reference.json").to_str().unwrap(),
        ])
        .args([
            "--out",
            out.to_str().unwrap(),
            "--set",
            "run.threads=4",
            "--set",
            "run.n_paths=5",
        ])
        .env("RANDEVO_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(manifest(&out).threads, 2);
}

#[test]
fn simulate_writes_the_documented_files() {
    let tmp = TempDir::new().unwrap();
    let mut runs = Vec::new();
    for r in ["a", "b"] {
        let out = tmp.path().join(r);
        let o = run(
            "simulate",
            &config("reference.json"),
            &out,
            &[
                "--seed",
                "1",
                "--set",
                "run.n_paths=12",
                "--set",
                "output.max_path_files=4",
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        runs.push(out);
    }
    let m = manifest(&runs[0]);
    let files: Vec<&str> = m.outputs.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(files.iter().filter(|f| f.starts_with("paths/")).count(), 4);
    for eps in ["0.5", "0.2", "0.1", "0.05"] {
        let rel = format!("displacements/eps_{eps}.csv");
        assert!(files.contains(&rel.as_str()), "{rel}");
        let text = fs::read_to_string(runs[0].join(&rel)).unwrap();
        assert!(text.starts_with("seed,t,total,n_switches\n"));
        // 12 paths at three grid times.
        assert_eq!(text.lines().count(), 1 + 12 * 3);
    }
    let path = fs::read_to_string(runs[0].join("paths/path_0.csv")).unwrap();
    assert!(path.starts_with("k,T_k,state_k\n0,0.0,"));
    let spot = fs::read_to_string(runs[0].join("spot_characteristics.csv")).unwrap();
    assert!(spot.starts_with("state,t,coordinate,b_spot,c_spot\n"));

    // Same seed, same bytes.
    let m2 = manifest(&runs[1]);
    let digests = |m: &RunManifest| {
        m.outputs
            .iter()
            .map(|f| (f.path.clone(), f.sha256.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(digests(&m), digests(&m2));
}

#[test]
fn verify_report_has_one_record_per_check_cell() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(
        "verify",
        &config("reference.json"),
        &out,
        &["--suite", "containment"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value =
        serde_json::from_slice(&fs::read(out.join("verify_report.json")).unwrap()).unwrap();
    let records = report["records"].as_array().unwrap();
    assert_eq!(records.len(), 4);
    for r in records {
        for key in ["check", "params", "residual", "tolerance", "pass"] {
            assert!(r.get(key).is_some(), "{key} missing from {r}");
        }
    }
    let csv = fs::read_to_string(out.join("containment.csv")).unwrap();
    assert!(csv.starts_with("epsilon,probability,half_width,pass\n"));
    assert_eq!(csv.lines().count(), 5);
}
