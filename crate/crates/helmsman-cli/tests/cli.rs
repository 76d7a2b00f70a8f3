//! End-to-end tests: drive the compiled binary on sub-second configs and
//! check exit codes, file sets, and byte determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_helmsman"));
    // isolate from the ambient environment
    cmd.env_remove("HELMSMAN_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// 0.2 s of simulated time on a small battery with fast actuators: a run
/// takes well under a second.
const QUICK_CONFIG: &str = r#"
[system]
total_time_s = 0.2

[pgm]
tau_s = 0.0

[pcm]
tau_s = 0.0
capacity_ah = 10.0
initial_ah = 8.0
bus_kv = 1.2

[load]
baseline_mw = 5.0
pulses = [{ start_s = 0.05, duration_s = 0.05, height_mw = 3.0 }]

[noise]
percent = 5.0
seed = 7

[ems]
plant_dt_s = 1e-3

[sweep]
noise_levels = [2.0]
soc_targets = [0.7, 0.75, 0.8]
replicates = 1
base_seed = 5
plant_dt_s = 1e-3
"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("quick.toml");
    std::fs::write(&path, QUICK_CONFIG).unwrap();
    path
}

#[test]
fn simulate_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("run1");
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--solver")
        .arg("centralized")
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(
        lines[0],
        "t_s,p_g_w,p_b_w,load_w,forecast_w,soc,mismatch_w,status"
    );
    // 0.2 s at a 1 ms control period → 200 rows plus the header
    assert_eq!(lines.len(), 201);

    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(value["steps"], 200);
    assert!(value["capacity_loss_pct"].as_f64().unwrap() >= 0.0);
    assert_eq!(value["violations"], 0);
}

#[test]
fn simulate_with_plot_emits_svg_charts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("run1");
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .arg("--plot"));
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    for name in ["supply_vs_load.svg", "soc_trace.svg"] {
        let svg = std::fs::read_to_string(out_dir.join(name)).unwrap();
        assert!(svg.starts_with("<svg"), "{name} is not svg");
        assert!(svg.contains("polyline"), "{name} has no data");
    }
}

#[test]
fn missing_config_exits_1_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(dir.path().join("absent.toml"))
        .arg("--out")
        .arg(dir.path().join("x")));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("absent.toml"), "stderr: {}", stderr(&out));
}

#[test]
fn bad_config_key_exits_1_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("typo.toml");
    std::fs::write(&config, "[pgm]\nrated_mv = 29.0\n").unwrap();
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("x")));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("rated_mv"), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_flag_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("x"))
        .arg("--turbo"));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("--turbo"), "stderr: {}", stderr(&out));
}

#[test]
fn reruns_are_byte_identical_and_seeds_matter() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let run_with = |name: &str, extra: &[&str], env_seed: Option<&str>| {
        let out_dir = dir.path().join(name);
        let mut cmd = bin();
        cmd.arg("simulate")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out_dir)
            .args(extra);
        if let Some(seed) = env_seed {
            cmd.env("HELMSMAN_SEED", seed);
        }
        let out = run(&mut cmd);
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
        (
            std::fs::read(out_dir.join("trace.csv")).unwrap(),
            std::fs::read(out_dir.join("summary.json")).unwrap(),
        )
    };
    let (trace_a, summary_a) = run_with("a", &[], None);
    let (trace_b, summary_b) = run_with("b", &[], None);
    assert_eq!(trace_a, trace_b, "same config, different trace bytes");
    assert_eq!(summary_a, summary_b);

    let (trace_c, _) = run_with("c", &["--seed", "99"], None);
    assert_ne!(trace_a, trace_c, "--seed had no effect");

    // the environment variable beats the flag: forcing the config's own seed
    // back via HELMSMAN_SEED must reproduce the baseline bytes
    let (trace_d, _) = run_with("d", &["--seed", "99"], Some("7"));
    assert_eq!(trace_a, trace_d, "HELMSMAN_SEED did not override --seed");
}

#[test]
fn sweep_writes_records_and_fit_and_is_worker_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let sweep_into = |name: &str, jobs: &str| {
        let out_dir = dir.path().join(name);
        let out = run(bin()
            .arg("sweep")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out_dir)
            .arg("--jobs")
            .arg(jobs)
            .arg("--plot"));
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
        out_dir
    };
    let one = sweep_into("s1", "1");
    let many = sweep_into("s2", "4");

    let sweep_csv = std::fs::read_to_string(one.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = sweep_csv.lines().collect();
    assert_eq!(
        lines[0],
        "noise_pct,target_soc,seed,capacity_loss_pct,gen_life_pct,violations,failures"
    );
    assert_eq!(lines.len(), 4, "1 noise x 3 targets x 1 replicate + header");

    let fit_csv = std::fs::read_to_string(one.join("fit.csv")).unwrap();
    assert_eq!(fit_csv.lines().count(), 2);
    assert!(fit_csv.lines().next().unwrap().starts_with("noise_pct,a,b,c,r_squared"));

    let svg = std::fs::read_to_string(one.join("degradation_curve.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    assert_eq!(
        std::fs::read(one.join("sweep.csv")).unwrap(),
        std::fs::read(many.join("sweep.csv")).unwrap(),
        "worker count changed sweep.csv bytes"
    );
    assert_eq!(
        std::fs::read(one.join("fit.csv")).unwrap(),
        std::fs::read(many.join("fit.csv")).unwrap()
    );
}

#[test]
fn solve_reports_the_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("scalar.qp");
    // minimize (x - 1)^2 over a free variable
    std::fs::write(
        &problem,
        "qp 1\nn 1 meq 0 mineq 0\nH\n2\nf\n-2\nconst 1\nAeq\nbeq\nA\nb\nlb\n-inf\nub\ninf\n",
    )
    .unwrap();
    let out = run(bin().arg("solve").arg(&problem));
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("status      optimal"), "stdout: {text}");
    let x_line = text.lines().find(|l| l.starts_with("x[0]")).unwrap();
    let x: f64 = x_line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!((x - 1.0).abs() < 1e-8, "x = {x}");
}

#[test]
fn solve_flags_an_impossible_problem_as_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("impossible.qp");
    // 0·x = 1 has no solution
    std::fs::write(
        &problem,
        "qp 1\nn 1 meq 1 mineq 0\nH\n2\nf\n0\nconst 0\nAeq\n0\nbeq\n1\nA\nb\nlb\n-inf\nub\ninf\n",
    )
    .unwrap();
    let out = run(bin().arg("solve").arg(&problem));
    assert_eq!(exit_code(&out), 2, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("infeasible"), "stderr: {}", stderr(&out));
}

#[test]
fn solve_rejects_a_malformed_file() {
    let dir = tempfile::tempdir().unwrap();
    let problem = dir.path().join("garbage.qp");
    std::fs::write(&problem, "this is not a problem\n").unwrap();
    let out = run(bin().arg("solve").arg(&problem));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("garbage.qp"), "stderr: {}", stderr(&out));
}

#[test]
fn report_rerenders_charts_from_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_dir = dir.path().join("run1");
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));

    let out = run(bin().arg("report").arg("--out").arg(&out_dir));
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    assert!(out_dir.join("supply_vs_load.svg").exists());
    assert!(out_dir.join("soc_trace.svg").exists());

    // a directory with no CSVs has nothing to report
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = run(bin().arg("report").arg("--out").arg(&empty));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("trace.csv"), "stderr: {}", stderr(&out));

    // a trace with the wrong header is called out, not half-plotted
    let mangled = dir.path().join("mangled");
    std::fs::create_dir(&mangled).unwrap();
    std::fs::write(mangled.join("trace.csv"), "a,b\n1,2\n").unwrap();
    let out = run(bin().arg("report").arg("--out").arg(&mangled));
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("header"), "stderr: {}", stderr(&out));
}

#[test]
fn admm_solver_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("short.toml");
    std::fs::write(
        &config,
        QUICK_CONFIG.replace("total_time_s = 0.2", "total_time_s = 0.05"),
    )
    .unwrap();
    let out_dir = dir.path().join("run-admm");
    let out = run(bin()
        .arg("simulate")
        .arg("--config")
        .arg(&config)
        .arg("--solver")
        .arg("admm")
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(value["steps"], 50);
    assert_eq!(value["failures"], 0);
}
