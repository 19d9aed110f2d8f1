use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use raman_core::fit::{synthesize, FitParameter};
use raman_core::sequence::ExperimentSetup;
use raman_core::DephasingModel;
use tempfile::TempDir;

const ENERGY_LINEAR: &str = r#"
[relaxation.dephasing]
model = "energy_linear"
slope_thz_per_ujcm2 = 0.16
offset_ghz = 10.0
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raman-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_cmd(cmd: &str, config: &Path, out: &Path) -> Output {
    run(&[
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn single_zero_energy_returns_prepared_population() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", "[single]\nenergies = [0.0]\n");
    let out = run_cmd("single", &cfg, dir.path());
    assert_ok(&out);
    let (header, rows) = csv_rows(&dir.path().join("single.csv"));
    assert_eq!(header, "energy_ujcm2,rho22,rotation_angle_rad,fidelity");
    assert_eq!(rows.len(), 1);
    assert!((rows[0][1] - 0.06).abs() < 1e-6, "{}", rows[0][1]);
}

#[test]
fn single_energy_linear_saturates() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", ENERGY_LINEAR);
    assert_ok(&run_cmd("single", &cfg, dir.path()));
    let (_, rows) = csv_rows(&dir.path().join("single.csv"));
    let last = rows.last().unwrap()[1];
    assert!((0.45..=0.55).contains(&last), "final ρ22 {last}");
    let summary = json(&dir.path().join("single_summary.json"));
    assert_eq!(summary["model"], "energy_linear");
    assert!(summary["saturation_rho22"].as_f64().is_some());
    assert_eq!(
        summary["config"]["relaxation"]["dephasing"]["model"],
        "energy_linear"
    );
}

#[test]
fn single_constant_model_oscillates() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[single]\nenergies = { start = 0.0, stop = 80.0, step = 4.0 }\n",
    );
    assert_ok(&run_cmd("single", &cfg, dir.path()));
    let (_, rows) = csv_rows(&dir.path().join("single.csv"));
    let rho: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (imax, max) = rho
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    // rises well past one half, then turns over
    assert!(max > 0.7, "max {max}");
    assert!(imax < rho.len() - 1);
    assert!(*rho.last().unwrap() < max - 0.1);
}

#[test]
fn double_finds_larmor_frequency() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.toml", ENERGY_LINEAR);
    assert_ok(&run_cmd("double", &cfg, dir.path()));
    let (header, rows) = csv_rows(&dir.path().join("double.csv"));
    assert_eq!(header, "tau_d_ps,rho22");
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]));
    let s = json(&dir.path().join("double_summary.json"));
    let f = s["frequency_ghz"].as_f64().unwrap();
    assert!((f - 42.0).abs() <= 0.5, "frequency {f}");
    assert!(s["visibility"].as_f64().unwrap() > 0.0);
    assert_eq!(s["baseline"].as_f64().unwrap(), 0.06);
}

#[test]
fn double_visibility_falls_with_energy() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "{ENERGY_LINEAR}\n[double]\ntau_d = {{ start = 20.0, stop = 68.0, step = 1.0 }}\nvisibility_energies = [5.0, 10.0, 20.0]\n"
    );
    let cfg = write(dir.path(), "c.toml", &text);
    assert_ok(&run_cmd("double", &cfg, dir.path()));
    let (header, rows) = csv_rows(&dir.path().join("visibility_vs_energy.csv"));
    assert_eq!(header, "energy_ujcm2,visibility");
    let v: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}

#[test]
fn train_eight_pulses_and_staircase() {
    let dir = TempDir::new().unwrap();
    let text = format!(
        "prepared_populations = [1.0, 0.0, 0.0]\n{ENERGY_LINEAR}\n[train]\npulse_counts = [8, 1]\nstaircase_pulses = 2\n"
    );
    let cfg = write(dir.path(), "c.toml", &text);
    assert_ok(&run_cmd("train", &cfg, dir.path()));
    let (header, rows) = csv_rows(&dir.path().join("train.csv"));
    assert_eq!(header, "n_pulses,fidelity");
    assert_eq!(rows[0][0], 1.0);
    assert_eq!(rows[1][0], 8.0);
    assert!((rows[1][1] - 0.80).abs() <= 0.05, "F(8) = {}", rows[1][1]);
    let (header, stairs) = csv_rows(&dir.path().join("staircase.csv"));
    assert_eq!(header, "time_ps,rho22");
    assert!(stairs.len() > 10);
    assert!(stairs.windows(2).all(|w| w[0][0] < w[1][0]));
}

#[test]
fn outputs_are_byte_identical_and_summary_reruns() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let text = format!("seed = 9\n{ENERGY_LINEAR}\n[single]\nenergies = [0.0, 5.0, 10.0]\n");
    let cfg = write(a.path(), "c.toml", &text);
    assert_ok(&run_cmd("single", &cfg, a.path()));
    assert_ok(&run_cmd("single", &cfg, b.path()));
    for f in ["single.csv", "single_summary.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ok(&run_cmd(
        "single",
        &a.path().join("single_summary.json"),
        c.path(),
    ));
    assert_eq!(
        std::fs::read(a.path().join("single.csv")).unwrap(),
        std::fs::read(c.path().join("single.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[system]\nomega_l_ghz = 42.0\ntypo = 1\n",
    );
    let out = run_cmd("single", &cfg, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 3") && msg.contains("typo"), "{msg}");

    let cfg = write(
        dir.path(),
        "d.toml",
        "prepared_populations = [0.5, 0.6, 0.0]\n",
    );
    assert_eq!(run_cmd("single", &cfg, dir.path()).status.code(), Some(2));

    let missing = dir.path().join("nope.toml");
    assert_eq!(
        run_cmd("single", &missing, dir.path()).status.code(),
        Some(2)
    );
}

const FIT_CONFIG: &str = r#"
[relaxation.dephasing]
model = "energy_linear"
slope_thz_per_ujcm2 = 0.16
offset_ghz = 10.0

[integrator]
dt_pulse_fs = 10.0

[fit]
restarts = 2
[[fit.free]]
parameter = "gamma3_slope"
lower = 0.05
upper = 0.4
initial = INITIAL
"#;

fn fit_fixture(dir: &Path, noise: f64) -> PathBuf {
    let mut setup = ExperimentSetup::default();
    setup.shared.relaxation = setup
        .shared
        .relaxation
        .with_dephasing(DephasingModel::energy_linear_default());
    setup.shared.integrator.dt_pulse_fs = 10.0;
    let tl = setup.shared.system.larmor_period_ps();
    let data = synthesize(
        &[(FitParameter::Gamma3Slope, 0.16)],
        &setup,
        &[2.0, 6.0, 10.0, 20.0, 30.0],
        &[tl, 1.25 * tl, 1.5 * tl, 1.75 * tl],
        10.0,
        noise,
        3,
    )
    .unwrap();
    write(dir, "data.json", &serde_json::to_string(&data).unwrap())
}

fn run_fit(dir: &Path, config: &str, data: &Path) -> Output {
    let cfg = write(dir, "fit.toml", config);
    run(&[
        "fit",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        "5",
    ])
}

#[test]
fn fit_round_trip_recovers_slope() {
    let dir = TempDir::new().unwrap();
    let data = fit_fixture(dir.path(), 0.01);
    let out = run_fit(dir.path(), &FIT_CONFIG.replace("INITIAL", "0.1"), &data);
    assert_ok(&out);
    let report = json(&dir.path().join("fit_report.json"));
    let slope = report["report"]["values"][0]["value"].as_f64().unwrap();
    assert!((slope - 0.16).abs() / 0.16 < 0.05, "slope {slope}");
    assert_eq!(report["config"]["seed"], 5);
}

#[test]
fn fit_from_optimum_converges_first_restart() {
    let dir = TempDir::new().unwrap();
    let data = fit_fixture(dir.path(), 0.0);
    assert_ok(&run_fit(
        dir.path(),
        &FIT_CONFIG.replace("INITIAL", "0.16"),
        &data,
    ));
    let report = json(&dir.path().join("fit_report.json"));
    assert_eq!(report["report"]["first_converged_restart"], 0);
}

#[test]
fn fit_exit_codes() {
    let dir = TempDir::new().unwrap();
    let empty = write(dir.path(), "empty.json", "");
    let cfg = FIT_CONFIG.replace("INITIAL", "0.1");
    assert_eq!(run_fit(dir.path(), &cfg, &empty).status.code(), Some(2));

    let no_points = write(dir.path(), "none.json", "{}");
    assert_eq!(run_fit(dir.path(), &cfg, &no_points).status.code(), Some(2));

    let data = fit_fixture(dir.path(), 0.01);
    let starved = cfg.replace("restarts = 2", "restarts = 1\nmax_evals = 3");
    assert_eq!(run_fit(dir.path(), &starved, &data).status.code(), Some(4));
    assert!(dir.path().join("fit_report.json").exists());
}
