mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use raman_core::fit::{fit, DataSet};
use raman_core::model::DephasingModel;
use raman_core::sequence::{
    double_pulse_sweep, pulse_train, pulse_train_scan, single_pulse_sweep, visibility,
    ExperimentSetup, TrainEnergy,
};
use serde::Serialize;

use config::{Command, RunConfig};
use output::{write_json, Csv};

#[derive(Parser)]
#[command(
    name = "raman-sim",
    version,
    about = "Raman spin-rotation simulator for Λ systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration (a .json summary from a previous run also works)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// ρ22, rotation angle and fidelity versus single-pulse energy
    Single(Common),
    /// ρ22 versus two-pulse delay, with the fitted Larmor oscillation
    Double(Common),
    /// π-rotation fidelity versus number of in-phase pulses
    Train(Common),
    /// Fit dephasing and calibration to measured curves
    Fit {
        #[command(flatten)]
        common: Common,
        /// DataSet JSON
        #[arg(long)]
        data: PathBuf,
    },
}

enum Failure {
    Config(anyhow::Error),
    Simulation(anyhow::Error),
    NotConverged,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Simulation(_) => 3,
            Failure::NotConverged => 4,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

/// Parameter and sequence errors are configuration mistakes; anything else
/// raised while simulating is a simulation failure.
fn sim_err(e: raman_core::Error) -> Failure {
    let mut root = &e;
    while let raman_core::Error::AtPoint { source, .. } = root {
        root = source;
    }
    match root {
        raman_core::Error::InvalidParameter { .. } | raman_core::Error::Sequence(_) => {
            Failure::Config(e.into())
        }
        _ => Failure::Simulation(e.into()),
    }
}

type Outcome = Result<(), Failure>;

fn load_config(common: &Common, command: Command) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        None => RunConfig::default(),
        Some(path) if path.extension().is_some_and(|e| e == "json") => {
            load_json_config(path).map_err(config_err)?
        }
        Some(path) => RunConfig::load(path).map_err(config_err)?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(fit) = cfg.fit.as_mut() {
        fit.seed = cfg.seed;
    }
    cfg.validate_for(command).map_err(config_err)?;
    Ok(cfg)
}

/// Accepts either a bare config object or a summary with a `config` key.
fn load_json_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("invalid JSON in {}", path.display()))?;
    let inner = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(inner).with_context(|| format!("invalid config {}", path.display()))
}

fn model_name(setup: &ExperimentSetup) -> &'static str {
    match setup.shared.relaxation.dephasing {
        DephasingModel::Constant { .. } => "constant",
        DephasingModel::EnergyLinear { .. } => "energy_linear",
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

#[derive(Serialize)]
struct SingleSummary<'a> {
    command: &'static str,
    model: &'static str,
    points: usize,
    /// Energy giving a 0.9 rad rotation.
    anchor_energy_ujcm2: f64,
    /// Mean ρ22 over energies ≥ 3× the anchor energy, when any were swept.
    saturation_rho22: Option<f64>,
    final_rho22: f64,
    config: &'a RunConfig,
}

fn cmd_single(common: &Common) -> Outcome {
    let cfg = load_config(common, Command::Single)?;
    let setup = cfg.setup();
    let energies = sorted(cfg.single.energies.values().map_err(config_err)?);
    let result = single_pulse_sweep(&energies, &setup).map_err(sim_err)?;

    let mut csv = Csv::new("energy_ujcm2,rho22,rotation_angle_rad,fidelity");
    for p in &result.points {
        csv.row(&[p.x, p.rho22, p.rotation_angle, p.fidelity])
            .map_err(Failure::Simulation)?;
    }
    let anchor = setup.energy_for_rotation(0.9).map_err(sim_err)?;
    let plateau: Vec<f64> = result
        .points
        .iter()
        .filter(|p| p.x >= 3.0 * anchor)
        .map(|p| p.rho22)
        .collect();
    let summary = SingleSummary {
        command: "single",
        model: model_name(&setup),
        points: result.points.len(),
        anchor_energy_ujcm2: anchor,
        saturation_rho22: (!plateau.is_empty())
            .then(|| plateau.iter().sum::<f64>() / plateau.len() as f64),
        final_rho22: result.points.last().map_or(f64::NAN, |p| p.rho22),
        config: &cfg,
    };
    finish(
        &common.out,
        [("single.csv", csv)],
        "single_summary.json",
        &summary,
    )
}

#[derive(Serialize)]
struct DoubleSummary<'a> {
    command: &'static str,
    model: &'static str,
    energy_ujcm2: f64,
    frequency_ghz: f64,
    period_ps: f64,
    visibility: f64,
    baseline: f64,
    amplitude: f64,
    i_max: f64,
    i_min: f64,
    visibility_vs_energy: Option<Vec<(f64, f64)>>,
    config: &'a RunConfig,
}

fn cmd_double(common: &Common) -> Outcome {
    let cfg = load_config(common, Command::Double)?;
    let setup = cfg.setup();
    let taus = sorted(cfg.double.tau_d.values().map_err(config_err)?);
    let baseline = cfg.double.baseline.unwrap_or(cfg.prepared_populations[1]);
    let result = double_pulse_sweep(cfg.double.energy, &taus, &setup).map_err(sim_err)?;
    let rho22 = result.rho22();
    let vis = visibility(&taus, &rho22, baseline).map_err(sim_err)?;

    let mut csv = Csv::new("tau_d_ps,rho22");
    for (t, r) in taus.iter().zip(&rho22) {
        csv.row(&[*t, *r]).map_err(Failure::Simulation)?;
    }
    let mut files = vec![("double.csv", csv)];

    let mut by_energy = None;
    if let Some(sweep) = &cfg.double.visibility_energies {
        let mut csv = Csv::new("energy_ujcm2,visibility");
        let mut rows = Vec::new();
        for u in sorted(sweep.values().map_err(config_err)?) {
            let r = double_pulse_sweep(u, &taus, &setup).map_err(sim_err)?;
            let v = visibility(&taus, &r.rho22(), baseline).map_err(sim_err)?;
            csv.row(&[u, v.visibility]).map_err(Failure::Simulation)?;
            rows.push((u, v.visibility));
        }
        files.push(("visibility_vs_energy.csv", csv));
        by_energy = Some(rows);
    }

    let summary = DoubleSummary {
        command: "double",
        model: model_name(&setup),
        energy_ujcm2: cfg.double.energy,
        frequency_ghz: vis.frequency_ghz,
        period_ps: 1e3 / vis.frequency_ghz,
        visibility: vis.visibility,
        baseline,
        amplitude: vis.amplitude,
        i_max: vis.i_max,
        i_min: vis.i_min,
        visibility_vs_energy: by_energy,
        config: &cfg,
    };
    finish(&common.out, files, "double_summary.json", &summary)
}

#[derive(Serialize)]
struct TrainRow {
    n_pulses: usize,
    per_pulse_energy_ujcm2: f64,
    total_rotation_rad: f64,
    fidelity: f64,
    rho22: f64,
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    command: &'static str,
    model: &'static str,
    spacing_ps: f64,
    best_n_pulses: usize,
    best_fidelity: f64,
    rows: Vec<TrainRow>,
    config: &'a RunConfig,
}

fn cmd_train(common: &Common) -> Outcome {
    let cfg = load_config(common, Command::Train)?;
    let setup = cfg.setup();
    let spacing = cfg.train_spacing_ps();
    let mut counts = cfg.train.pulse_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    let (_, trains) =
        pulse_train_scan(&counts, cfg.train.energy, spacing, &setup).map_err(sim_err)?;

    let mut csv = Csv::new("n_pulses,fidelity");
    for t in &trains {
        csv.row(&[t.pulse_count as f64, t.fidelity])
            .map_err(Failure::Simulation)?;
    }
    let mut files = vec![("train.csv", csv)];

    if let Some(n) = cfg.train.staircase_pulses {
        let u = match cfg.train.energy {
            TrainEnergy::Fixed { energy } => energy,
            TrainEnergy::PiOverN => setup
                .energy_for_rotation(std::f64::consts::PI / n as f64)
                .map_err(sim_err)?,
        };
        let mut recorded = setup.clone();
        recorded.shared.record_trajectory = true;
        let t = pulse_train(n, u, spacing, &recorded).map_err(sim_err)?;
        let mut csv = Csv::new("time_ps,rho22");
        for (time, r) in &t.staircase {
            csv.row(&[*time, *r]).map_err(Failure::Simulation)?;
        }
        files.push(("staircase.csv", csv));
    }

    let best = trains
        .iter()
        .max_by(|a, b| a.fidelity.total_cmp(&b.fidelity))
        .expect("non-empty pulse counts");
    let summary = TrainSummary {
        command: "train",
        model: model_name(&setup),
        spacing_ps: spacing,
        best_n_pulses: best.pulse_count,
        best_fidelity: best.fidelity,
        rows: trains
            .iter()
            .map(|t| TrainRow {
                n_pulses: t.pulse_count,
                per_pulse_energy_ujcm2: t.per_pulse_energy,
                total_rotation_rad: t.total_rotation,
                fidelity: t.fidelity,
                rho22: t.rho22,
            })
            .collect(),
        config: &cfg,
    };
    finish(&common.out, files, "train_summary.json", &summary)
}

#[derive(Serialize)]
struct FitOutput<'a> {
    command: &'static str,
    data: String,
    report: raman_core::fit::FitReport,
    config: &'a RunConfig,
}

fn cmd_fit(common: &Common, data_path: &Path) -> Outcome {
    let cfg = load_config(common, Command::Fit)?;
    let text = std::fs::read_to_string(data_path)
        .with_context(|| format!("cannot read data {}", data_path.display()))
        .map_err(config_err)?;
    let data: DataSet = serde_json::from_str(&text)
        .with_context(|| format!("malformed data {}", data_path.display()))
        .map_err(config_err)?;
    data.validate().map_err(config_err)?;
    let spec = cfg.fit.as_ref().expect("validated");
    let report = fit(&data, spec, &cfg.setup()).map_err(sim_err)?;
    let converged = report.converged;
    let out = FitOutput {
        command: "fit",
        data: data_path.display().to_string(),
        report,
        config: &cfg,
    };
    let path = write_json(&common.out, "fit_report.json", &out).map_err(Failure::Simulation)?;
    println!("{}", path.display());
    if converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn finish<T: Serialize>(
    dir: &Path,
    files: impl IntoIterator<Item = (&'static str, Csv)>,
    summary_name: &str,
    summary: &T,
) -> Outcome {
    for (name, csv) in files {
        let path = csv.write(dir, name).map_err(Failure::Simulation)?;
        println!("{}", path.display());
    }
    let path = write_json(dir, summary_name, summary).map_err(Failure::Simulation)?;
    println!("{}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Cmd::Single(c) => cmd_single(c),
        Cmd::Double(c) => cmd_double(c),
        Cmd::Train(c) => cmd_train(c),
        Cmd::Fit { common, data } => cmd_fit(common, data),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(e) => eprintln!("configuration error: {e:#}"),
                Failure::Simulation(e) => eprintln!("simulation failed: {e:#}"),
                Failure::NotConverged => eprintln!("fit did not converge"),
            }
            ExitCode::from(f.code())
        }
    }
}
