use std::fs;
use std::path::Path;
use std::process::Command;

use qsing::cli::run;

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<&str> = std::iter::once("qsing").chain(args.iter().copied()).collect();
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn small_config(dir: &Path, model: &str) -> String {
    let path = dir.join(format!("{model}.toml"));
    fs::write(
        &path,
        format!(
            "model_id = \"{model}\"\nmaster_seed = 11\nn_grid = [300, 600]\nrepetitions = 3\n\n\
             [mh]\nn_samples = 800\nburn_in = 150\n"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn help_on_every_subcommand() {
    let (code, out, _) = call(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["run", "theory", "models", "check-shadows", "plot-data"] {
        assert!(out.contains(sub), "{sub} missing from top-level help");
    }
    let flags: [(&str, &[&str]); 5] = [
        ("run", &["--config", "--out", "--threads"]),
        ("theory", &["--model", "--variant", "--theta", "--fd-step"]),
        ("models", &[]),
        ("check-shadows", &["--states", "--seed", "--qubits"]),
        ("plot-data", &["--in", "--metric", "--out", "--overlay"]),
    ];
    for (sub, expected) in flags {
        let (code, out, _) = call(&[sub, "--help"]);
        assert_eq!(code, 0, "{sub} --help");
        for f in expected {
            assert!(out.contains(f), "{sub} help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(call(&[]).0, 1);
    assert_eq!(call(&["frobnicate"]).0, 1);
    let (code, _, err) = call(&["models", "--bogus"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"));
    assert_eq!(call(&["theory", "--model", "unknown"]).0, 1);
    assert_eq!(call(&["theory", "--model", "ex41_regular", "--theta", "0.1,0.2"]).0, 1);
}

#[test]
fn theory_json() {
    let (code, out, _) = call(&["theory", "--model", "sec42_regular"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let j = v["report"]["j"][0][0].as_f64().unwrap();
    let jq = v["report"]["j_q"][0][0].as_f64().unwrap();
    assert!((j - 1.308).abs() < 0.01 && (jq - 10.565).abs() < 0.01);
    assert_eq!(v["reference"]["trace_jq_jinv"]["value"].as_f64(), Some(8.08));

    let (code, out, _) = call(&["theory", "--model", "ex42_singular"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["reference"]["lambda"]["value"].as_f64(), Some(0.5));
    assert_eq!(v["reference"]["r_cq"]["value"].as_f64(), Some(3.0));
    assert!(v["report"]["note"].as_str().unwrap().contains("singular"));
    assert!(v["report"]["lambda_q"].is_null());

    let (code, out, _) = call(&["theory", "--model", "ex41_regular"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let flagged: Vec<&str> = v["discrepancies"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|d| d["flagged"].as_bool() == Some(true))
        .map(|d| d["quantity"].as_str().unwrap())
        .collect();
    assert_eq!(flagged, vec!["lambda_q", "nu_q", "nu_prime_q", "learning_coefficient"]);

    let (code, _, _) = call(&["theory", "--model", "ex43_depol", "--variant", "cusp", "--theta", "0,0"]);
    assert_eq!(code, 0);
}

#[test]
fn theory_boundary_is_runtime_error() {
    let (code, _, err) = call(&["theory", "--model", "ex41_regular", "--theta", "0.0"]);
    assert_eq!(code, 2, "{err}");
    let (code, _, err) = call(&["theory", "--model", "ex41_regular", "--theta", "3.0"]);
    assert_eq!(code, 1);
    assert!(err.contains("outside"), "{err}");
}

#[test]
fn models_lists_builtins() {
    let (code, out, _) = call(&["models"]);
    assert_eq!(code, 0);
    for id in qsing::models::BUILTIN_IDS {
        assert!(out.contains(id));
    }
}

#[test]
fn check_shadows_modes() {
    let (code, out, _) = call(&["check-shadows"]);
    assert_eq!(code, 0);
    assert!(out.contains("max error") && out.contains("< 1e-12"), "{out}");
    assert_eq!(call(&["check-shadows", "--states", "1"]).0, 0);
    assert_eq!(call(&["check-shadows", "--qubits", "2", "--states", "3"]).0, 0);
    assert_eq!(call(&["check-shadows", "--inject-fault"]).0, 2);
}

#[test]
fn run_writes_outputs_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "sec42_regular");
    let out_dir = dir.path().join("out");
    let (code, out, err) = call(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("qwaic_gap"));
    for f in ["runs.csv", "aggregate.csv", "config.json", "plot_c_n_q.dat", "plot_qwaic_gap.dat"] {
        assert!(out_dir.join(f).exists(), "{f} missing");
    }
    let runs = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert_eq!(
        runs.lines().next().unwrap(),
        "model_id,n,rep,seed,g_n_q,t_n_q,c_n_q,qwaic,g_n,t_n,waic,acceptance_rate,wall_time_ms"
    );
    assert_eq!(runs.lines().count(), 1 + 6);

    let runs_path = out_dir.join("runs.csv");
    let runs_arg = runs_path.to_str().unwrap();
    let (code, out, _) = call(&["plot-data", "--in", runs_arg, "--metric", "c_n_q", "--overlay", "c_over_n", "8.08"]);
    assert_eq!(code, 0);
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 4));

    let plot = dir.path().join("gap.dat");
    let (code, _, _) = call(&["plot-data", "--in", runs_arg, "--metric", "qwaic_gap", "--out", plot.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(&plot).unwrap().lines().count(), 3);

    assert_eq!(call(&["plot-data", "--in", runs_arg, "--metric", "nope"]).0, 1);
    assert_eq!(call(&["plot-data", "--in", runs_arg, "--metric", "c_n_q", "--overlay", "other", "1"]).0, 1);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(call(&["plot-data", "--in", empty.to_str().unwrap(), "--metric", "c_n_q"]).0, 1);
    let header_only = dir.path().join("header.csv");
    fs::write(&header_only, runs.lines().next().unwrap().to_string() + "\n").unwrap();
    assert_eq!(call(&["plot-data", "--in", header_only.to_str().unwrap(), "--metric", "c_n_q"]).0, 1);
}

#[test]
fn run_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "master_seed = 3\n").unwrap();
    let (code, _, err) = call(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("model_id"), "{err}");

    fs::write(&cfg, "model_id = \"nope\"\nmaster_seed = 3\n").unwrap();
    assert_eq!(call(&["run", "--config", cfg.to_str().unwrap()]).0, 1);
    assert_eq!(call(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]).0, 1);

    fs::write(
        &cfg,
        "model_id = \"ex41_regular\"\nmaster_seed = 3\nn_grid = [100]\nrepetitions = 1\n\
         [mh]\nn_samples = 300\nburn_in = 100\nstep_scale = 1000.0\nadapt_during_burn_in = false\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let (code, _, err) = call(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("n=100 rep=0"), "{err}");
}

#[test]
fn thread_count_does_not_change_runs_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "ex42_singular");
    let mut outputs = Vec::new();
    for t in ["1", "8"] {
        let out = dir.path().join(format!("t{t}"));
        let (code, _, err) = call(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", t]);
        assert_eq!(code, 0, "{err}");
        outputs.push(fs::read(out.join("runs.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn binary_honours_thread_env_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "ex41_regular");
    let out = dir.path().join("env");
    let status = Command::new(env!("CARGO_BIN_EXE_qsing"))
        .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("QSING_THREADS", "3")
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(out.join("runs.csv").exists());

    let bad = Command::new(env!("CARGO_BIN_EXE_qsing"))
        .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
        .env("QSING_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));

    let help = Command::new(env!("CARGO_BIN_EXE_qsing")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
    let unknown = Command::new(env!("CARGO_BIN_EXE_qsing")).arg("--nope").output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));
}
