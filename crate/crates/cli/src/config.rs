//! TOML run configuration. Every table is optional; omitted keys take the
//! library defaults, unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, ensure, Context};
use raman_core::fit::FitParams;
use raman_core::lindblad::IntegratorConfig;
use raman_core::sequence::{ExperimentSetup, SharedConfig, TrainEnergy, PUMPED_POPULATIONS};
use raman_core::{LambdaSystem, PulseSpec, RabiCalibration, RelaxationParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> anyhow::Result<Vec<f64>> {
        match self {
            Sweep::List(v) => {
                ensure!(!v.is_empty(), "sweep list is empty");
                ensure!(
                    v.iter().all(|x| x.is_finite()),
                    "sweep values must be finite"
                );
                Ok(v.clone())
            }
            &Sweep::Range { start, stop, step } => {
                ensure!(
                    start.is_finite() && stop.is_finite() && step > 0.0 && stop >= start,
                    "range needs finite start ≤ stop and step > 0"
                );
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                ensure!(n < 1_000_000, "range has too many points");
                Ok((0..=n).map(|i| start + i as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleSection {
    /// μJ/cm²
    pub energies: Sweep,
}

impl Default for SingleSection {
    fn default() -> Self {
        Self {
            energies: Sweep::Range {
                start: 0.0,
                stop: 30.0,
                step: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoubleSection {
    /// Per-pulse energy, μJ/cm².
    pub energy: f64,
    /// Delays between pulse peaks, ps.
    pub tau_d: Sweep,
    /// Subtracted before computing visibility; defaults to the prepared ρ22.
    pub baseline: Option<f64>,
    /// When set, also writes visibility versus per-pulse energy.
    pub visibility_energies: Option<Sweep>,
}

impl Default for DoubleSection {
    fn default() -> Self {
        Self {
            energy: 10.0,
            tau_d: Sweep::Range {
                start: 20.0,
                stop: 120.0,
                step: 1.0,
            },
            baseline: None,
            visibility_energies: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub pulse_counts: Vec<usize>,
    pub energy: TrainEnergy,
    /// Pulse spacing in Larmor periods.
    pub spacing_periods: u32,
    /// Pulse count whose ρ22(t) staircase is written out.
    pub staircase_pulses: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            pulse_counts: vec![1, 2, 4, 8, 16, 32],
            energy: TrainEnergy::PiOverN,
            spacing_periods: 1,
            staircase_pulses: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub system: LambdaSystem,
    #[serde(default)]
    pub relaxation: RelaxationParams,
    #[serde(default)]
    pub calibration: RabiCalibration,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    /// Shape, width and polarisation; energy and arrival are set per run.
    #[serde(default)]
    pub pulse: PulseSpec,
    #[serde(default = "pumped")]
    pub prepared_populations: Vec<f64>,
    #[serde(default)]
    pub single: SingleSection,
    #[serde(default)]
    pub double: DoubleSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub fit: Option<FitParams>,
}

fn pumped() -> Vec<f64> {
    PUMPED_POPULATIONS.to_vec()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            system: LambdaSystem::default(),
            relaxation: RelaxationParams::default(),
            calibration: RabiCalibration::default(),
            integrator: IntegratorConfig::default(),
            pulse: PulseSpec::default(),
            prepared_populations: pumped(),
            single: SingleSection::default(),
            double: DoubleSection::default(),
            train: TrainSection::default(),
            fit: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn setup(&self) -> ExperimentSetup {
        ExperimentSetup {
            shared: SharedConfig {
                system: self.system.clone(),
                relaxation: self.relaxation,
                calibration: self.calibration,
                integrator: self.integrator,
                record_trajectory: false,
            },
            pulse: self.pulse.clone(),
            prepared_populations: self.prepared_populations.clone(),
        }
    }

    /// Checks everything the selected command will use before any simulation.
    pub fn validate_for(&self, command: Command) -> anyhow::Result<()> {
        let setup = self.setup();
        setup.validate()?;
        match command {
            Command::Single => {
                let e = self.single.energies.values().context("single.energies")?;
                ensure!(e.iter().all(|&u| u >= 0.0), "single.energies must be ≥ 0");
            }
            Command::Double => {
                ensure!(self.double.energy >= 0.0, "double.energy must be ≥ 0");
                let taus = self.double.tau_d.values().context("double.tau_d")?;
                let window = self.pulse.window_length();
                if let Some(t) = taus.iter().find(|&&t| t < window) {
                    bail!("double.tau_d value {t} ps is shorter than the {window} ps pulse window");
                }
                ensure!(taus.len() >= 4, "double.tau_d needs at least four delays");
                if let Some(v) = &self.double.visibility_energies {
                    let e = v.values().context("double.visibility_energies")?;
                    ensure!(
                        e.iter().all(|&u| u >= 0.0),
                        "double.visibility_energies must be ≥ 0"
                    );
                }
            }
            Command::Train => {
                let t = &self.train;
                ensure!(!t.pulse_counts.is_empty(), "train.pulse_counts is empty");
                ensure!(
                    t.pulse_counts.iter().all(|&n| n >= 1),
                    "train.pulse_counts must be ≥ 1"
                );
                ensure!(t.spacing_periods >= 1, "train.spacing_periods must be ≥ 1");
                let spacing = self.train_spacing_ps();
                let window = self.pulse.window_length();
                ensure!(
                    spacing >= window,
                    "pulse spacing {spacing} ps is shorter than the {window} ps pulse window"
                );
                if let TrainEnergy::Fixed { energy } = t.energy {
                    ensure!(
                        energy >= 0.0 && energy.is_finite(),
                        "train.energy must be ≥ 0"
                    );
                }
            }
            Command::Fit => {
                let Some(fit) = &self.fit else {
                    bail!("the fit command needs a [fit] table");
                };
                fit.validate()?;
                for p in &fit.free {
                    p.parameter.read(&setup)?;
                }
            }
        }
        Ok(())
    }

    pub fn train_spacing_ps(&self) -> f64 {
        self.train.spacing_periods as f64 * self.system.larmor_period_ps()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Single,
    Double,
    Train,
    Fit,
}
