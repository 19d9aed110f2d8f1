//! Simultaneous least-squares fit of the single- and double-pulse curves,
//! plus seeded synthetic data for round-trip checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DephasingModel;
use crate::sequence::{double_pulse_sweep, single_pulse_sweep, ExperimentSetup};

/// Sigma stored with noiseless synthetic points.
pub const NOISELESS_SIGMA: f64 = 0.01;

const MIN_POINTS_PER_CURVE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPoint {
    /// Energy density (μJ/cm²) or delay (ps), depending on the curve.
    pub x: f64,
    pub rho22: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataMetadata {
    /// Per-pulse energy of the double-pulse curve.
    pub double_pulse_energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Default for DataMetadata {
    fn default() -> Self {
        Self {
            double_pulse_energy: 10.0,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSet {
    #[serde(default)]
    pub single_pulse: Vec<DataPoint>,
    #[serde(default)]
    pub double_pulse: Vec<DataPoint>,
    #[serde(default)]
    pub metadata: DataMetadata,
}

impl DataSet {
    pub fn validate(&self) -> Result<()> {
        if self.single_pulse.is_empty() && self.double_pulse.is_empty() {
            return Err(Error::param("data", "no data points"));
        }
        for (name, curve) in [
            ("single_pulse", &self.single_pulse),
            ("double_pulse", &self.double_pulse),
        ] {
            if !curve.is_empty() && curve.len() < MIN_POINTS_PER_CURVE {
                return Err(Error::param(
                    "data",
                    format!(
                        "{name} has {} points, need at least {MIN_POINTS_PER_CURVE}",
                        curve.len()
                    ),
                ));
            }
            for (i, p) in curve.iter().enumerate() {
                if !(p.sigma > 0.0 && p.sigma.is_finite()) {
                    return Err(Error::param(
                        "data",
                        format!("{name}[{i}]: sigma must be > 0"),
                    ));
                }
                if !(p.x >= 0.0 && p.x.is_finite()) || !p.rho22.is_finite() {
                    return Err(Error::param(
                        "data",
                        format!("{name}[{i}]: abscissa must be ≥ 0 and values finite"),
                    ));
                }
            }
        }
        if !self.double_pulse.is_empty()
            && !(self.metadata.double_pulse_energy >= 0.0
                && self.metadata.double_pulse_energy.is_finite())
        {
            return Err(Error::param(
                "metadata.double_pulse_energy",
                "must be finite and ≥ 0",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.single_pulse.len() + self.double_pulse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParameter {
    /// Rabi calibration constant, rad/s per √(μJ/cm²).
    Kappa,
    /// THz per μJ/cm².
    Gamma3Slope,
    /// GHz; the constant rate when the model is `Constant`.
    Gamma3Offset,
}

impl FitParameter {
    pub fn name(self) -> &'static str {
        match self {
            Self::Kappa => "kappa",
            Self::Gamma3Slope => "gamma3_slope",
            Self::Gamma3Offset => "gamma3_offset",
        }
    }

    /// Current value in `setup`.
    pub fn read(self, setup: &ExperimentSetup) -> Result<f64> {
        match (self, &setup.shared.relaxation.dephasing) {
            (Self::Kappa, _) => Ok(setup.shared.calibration.kappa),
            (
                Self::Gamma3Slope,
                DephasingModel::EnergyLinear {
                    slope_thz_per_ujcm2,
                    ..
                },
            ) => Ok(*slope_thz_per_ujcm2),
            (Self::Gamma3Offset, DephasingModel::EnergyLinear { offset_ghz, .. }) => {
                Ok(*offset_ghz)
            }
            (Self::Gamma3Offset, DephasingModel::Constant { gamma3_ghz }) => Ok(*gamma3_ghz),
            (Self::Gamma3Slope, DephasingModel::Constant { .. }) => Err(Error::param(
                "gamma3_slope",
                "only defined for the energy_linear dephasing model",
            )),
        }
    }

    pub fn write(self, setup: &mut ExperimentSetup, value: f64) -> Result<()> {
        match (self, &mut setup.shared.relaxation.dephasing) {
            (Self::Kappa, _) => setup.shared.calibration.kappa = value,
            (
                Self::Gamma3Slope,
                DephasingModel::EnergyLinear {
                    slope_thz_per_ujcm2,
                    ..
                },
            ) => *slope_thz_per_ujcm2 = value,
            (Self::Gamma3Offset, DephasingModel::EnergyLinear { offset_ghz, .. }) => {
                *offset_ghz = value
            }
            (Self::Gamma3Offset, DephasingModel::Constant { gamma3_ghz }) => *gamma3_ghz = value,
            (Self::Gamma3Slope, DephasingModel::Constant { .. }) => {
                return Err(Error::param(
                    "gamma3_slope",
                    "only defined for the energy_linear dephasing model",
                ))
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub parameter: FitParameter,
    pub lower: f64,
    pub upper: f64,
    pub initial: f64,
}

impl ParamSpec {
    fn unit_of(&self, v: f64) -> f64 {
        (v - self.lower) / (self.upper - self.lower)
    }

    fn value_at(&self, u: f64) -> f64 {
        self.lower + u.clamp(0.0, 1.0) * (self.upper - self.lower)
    }
}

fn default_restarts() -> usize {
    5
}
fn default_max_evals() -> usize {
    2000
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_jitter() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitParams {
    pub free: Vec<ParamSpec>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Evaluation budget per restart.
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    /// Converged when max − min RSS over the simplex falls below this.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Restart offsets, as a fraction of each bound interval.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FitParams {
    pub fn new(free: Vec<ParamSpec>) -> Self {
        Self {
            free,
            restarts: default_restarts(),
            max_evals: default_max_evals(),
            tolerance: default_tolerance(),
            jitter: default_jitter(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::param("free", "at least one free parameter"));
        }
        for (i, p) in self.free.iter().enumerate() {
            if self.free[..i].iter().any(|q| q.parameter == p.parameter) {
                return Err(Error::param(
                    "free",
                    format!("{} listed twice", p.parameter.name()),
                ));
            }
            if !(p.lower.is_finite() && p.upper.is_finite() && p.lower < p.upper) {
                return Err(Error::param(
                    p.parameter.name(),
                    format!(
                        "bounds [{}, {}] must be finite and ordered",
                        p.lower, p.upper
                    ),
                ));
            }
            if !(p.initial >= p.lower && p.initial <= p.upper) {
                return Err(Error::param(
                    p.parameter.name(),
                    format!(
                        "initial guess {} outside [{}, {}]",
                        p.initial, p.lower, p.upper
                    ),
                ));
            }
        }
        if self.restarts == 0 || self.max_evals == 0 {
            return Err(Error::param(
                "restarts",
                "restarts and max_evals must be ≥ 1",
            ));
        }
        if !(self.tolerance > 0.0) || !(0.0..=1.0).contains(&self.jitter) {
            return Err(Error::param(
                "tolerance",
                "tolerance > 0 and jitter in [0, 1] required",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedValue {
    pub parameter: FitParameter,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub start: Vec<f64>,
    pub initial_rss: f64,
    pub final_rss: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub values: Vec<FittedValue>,
    pub rss: f64,
    pub single_residuals: Vec<f64>,
    pub double_residuals: Vec<f64>,
    pub converged: bool,
    /// Index of the first restart that met the tolerance.
    pub first_converged_restart: Option<usize>,
    pub evaluations: usize,
    pub restarts: Vec<RestartSummary>,
}

impl FitReport {
    pub fn value(&self, parameter: FitParameter) -> Option<f64> {
        self.values
            .iter()
            .find(|v| v.parameter == parameter)
            .map(|v| v.value)
    }
}

/// Copy of `setup` with the given parameter values substituted.
pub fn apply_params(
    setup: &ExperimentSetup,
    values: &[(FitParameter, f64)],
) -> Result<ExperimentSetup> {
    let mut s = setup.clone();
    for &(p, v) in values {
        p.write(&mut s, v)?;
    }
    s.validate()?;
    Ok(s)
}

/// Model ρ22 at the data abscissae: (single curve, double curve).
pub fn forward_model(data: &DataSet, setup: &ExperimentSetup) -> Result<(Vec<f64>, Vec<f64>)> {
    let single = if data.single_pulse.is_empty() {
        Vec::new()
    } else {
        let xs: Vec<f64> = data.single_pulse.iter().map(|p| p.x).collect();
        single_pulse_sweep(&xs, setup)?.rho22()
    };
    let double = if data.double_pulse.is_empty() {
        Vec::new()
    } else {
        let xs: Vec<f64> = data.double_pulse.iter().map(|p| p.x).collect();
        double_pulse_sweep(data.metadata.double_pulse_energy, &xs, setup)?.rho22()
    };
    Ok((single, double))
}

fn weighted(model: &[f64], points: &[DataPoint]) -> Vec<f64> {
    model
        .iter()
        .zip(points)
        .map(|(m, p)| (m - p.rho22) / p.sigma)
        .collect()
}

/// (model − data)/σ, single-pulse curve first, then double-pulse.
pub fn residuals(
    values: &[(FitParameter, f64)],
    data: &DataSet,
    setup: &ExperimentSetup,
) -> Result<Vec<f64>> {
    let (s, d) = split_residuals(values, data, setup)?;
    Ok(s.into_iter().chain(d).collect())
}

fn split_residuals(
    values: &[(FitParameter, f64)],
    data: &DataSet,
    setup: &ExperimentSetup,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = apply_params(setup, values)?;
    let (single, double) = forward_model(data, &s)?;
    Ok((
        weighted(&single, &data.single_pulse),
        weighted(&double, &data.double_pulse),
    ))
}

pub fn rss(residuals: &[f64]) -> f64 {
    residuals.iter().map(|r| r * r).sum()
}

struct Objective<'a> {
    spec: &'a FitParams,
    data: &'a DataSet,
    setup: &'a ExperimentSetup,
    evaluations: usize,
    last_error: Option<Error>,
}

impl Objective<'_> {
    fn values(&self, unit: &[f64]) -> Vec<(FitParameter, f64)> {
        self.spec
            .free
            .iter()
            .zip(unit)
            .map(|(p, &u)| (p.parameter, p.value_at(u)))
            .collect()
    }

    fn eval(&mut self, unit: &[f64]) -> f64 {
        self.evaluations += 1;
        let values = self.values(unit);
        match residuals(&values, self.data, self.setup) {
            Ok(r) => rss(&r),
            Err(e) => {
                log::debug!("objective failed at {values:?}: {e}");
                self.last_error = Some(e);
                f64::INFINITY
            }
        }
    }
}

struct SimplexResult {
    best: Vec<f64>,
    best_rss: f64,
    initial_rss: f64,
    evaluations: usize,
    converged: bool,
}

/// Nelder–Mead on the unit box; trial points are clamped onto the box.
fn nelder_mead(obj: &mut Objective, start: &[f64], max_evals: usize, tol: f64) -> SimplexResult {
    let n = start.len();
    let before = obj.evaluations;
    let clamp = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect() };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = obj.eval(start);
    simplex.push((start.to_vec(), f0));
    for i in 0..n {
        let mut v = start.to_vec();
        let step = 0.05;
        v[i] = if v[i] + step <= 1.0 {
            v[i] + step
        } else {
            v[i] - step
        };
        let f = obj.eval(&v);
        simplex.push((v, f));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        if spread.is_finite() && spread < tol {
            converged = true;
            break;
        }
        if obj.evaluations - before >= max_evals {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(v, _)| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(worst)
                    .map(|(c, w)| c + t * (c - w))
                    .collect(),
            )
        };
        let worst = simplex[n].0.clone();
        let xr = along(alpha, &worst);
        let fr = obj.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(gamma, &worst);
            let fe = obj.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(rho, &worst);
                let fc = obj.eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho, &worst);
                let fc = obj.eval(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let v: Vec<f64> = best
                        .iter()
                        .zip(&entry.0)
                        .map(|(b, x)| b + sigma * (x - b))
                        .collect();
                    let f = obj.eval(&v);
                    *entry = (v, f);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (best, best_rss) = simplex.swap_remove(0);
    SimplexResult {
        best,
        best_rss,
        initial_rss: f0,
        evaluations: obj.evaluations - before,
        converged,
    }
}

/// Bounded simplex fit with restarts. Restart 0 starts at the initial
/// guesses, later ones at seeded jitter around them; the lowest-RSS result
/// wins. Non-convergence is reported, not raised.
pub fn fit(data: &DataSet, spec: &FitParams, setup: &ExperimentSetup) -> Result<FitReport> {
    data.validate()?;
    spec.validate()?;
    setup.validate()?;
    for p in &spec.free {
        p.parameter.read(setup)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let initial: Vec<f64> = spec.free.iter().map(|p| p.unit_of(p.initial)).collect();
    let mut obj = Objective {
        spec,
        data,
        setup,
        evaluations: 0,
        last_error: None,
    };

    let mut summaries = Vec::with_capacity(spec.restarts);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for k in 0..spec.restarts {
        let start: Vec<f64> = if k == 0 {
            initial.clone()
        } else {
            initial
                .iter()
                .map(|&u| (u + spec.jitter * rng.gen_range(-1.0..=1.0)).clamp(0.0, 1.0))
                .collect()
        };
        let r = nelder_mead(&mut obj, &start, spec.max_evals, spec.tolerance);
        log::info!(
            "restart {k}: rss {:.6e} → {:.6e} in {} evaluations{}",
            r.initial_rss,
            r.best_rss,
            r.evaluations,
            if r.converged { "" } else { " (not converged)" }
        );
        summaries.push(RestartSummary {
            start: obj.values(&start).into_iter().map(|v| v.1).collect(),
            initial_rss: r.initial_rss,
            final_rss: r.best_rss,
            evaluations: r.evaluations,
            converged: r.converged,
        });
        if best.as_ref().is_none_or(|b| r.best_rss < b.1) {
            best = Some((r.best, r.best_rss));
        }
    }

    let (best_unit, best_rss) = best.expect("at least one restart");
    if !best_rss.is_finite() {
        return Err(obj
            .last_error
            .unwrap_or_else(|| Error::param("fit", "objective is not finite anywhere")));
    }
    let values = obj.values(&best_unit);
    let (single_residuals, double_residuals) = split_residuals(&values, data, setup)?;
    let first_converged_restart = summaries.iter().position(|s| s.converged);
    Ok(FitReport {
        values: spec
            .free
            .iter()
            .zip(&values)
            .map(|(p, &(parameter, value))| FittedValue {
                parameter,
                value,
                lower: p.lower,
                upper: p.upper,
            })
            .collect(),
        rss: best_rss,
        single_residuals,
        double_residuals,
        converged: first_converged_restart.is_some(),
        first_converged_restart,
        evaluations: obj.evaluations,
        restarts: summaries,
    })
}

/// Adds seeded N(0, σ²) noise; σ = 0 returns the input unchanged.
pub fn add_noise(values: &[f64], sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("noise_sigma", "must be finite and ≥ 0"));
    }
    if sigma == 0.0 {
        return Ok(values.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma > 0");
    Ok(values.iter().map(|v| v + normal.sample(&mut rng)).collect())
}

/// Forward model at `true_values` plus seeded Gaussian noise. Points carry
/// σ = `noise_sigma`, or [`NOISELESS_SIGMA`] when noiseless.
pub fn synthesize(
    true_values: &[(FitParameter, f64)],
    setup: &ExperimentSetup,
    single_energies: &[f64],
    double_delays: &[f64],
    double_energy: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<DataSet> {
    let s = apply_params(setup, true_values)?;
    let template = DataSet {
        single_pulse: single_energies
            .iter()
            .map(|&x| DataPoint {
                x,
                rho22: 0.0,
                sigma: 1.0,
            })
            .collect(),
        double_pulse: double_delays
            .iter()
            .map(|&x| DataPoint {
                x,
                rho22: 0.0,
                sigma: 1.0,
            })
            .collect(),
        metadata: DataMetadata {
            double_pulse_energy: double_energy,
            note: Some(format!("synthetic, noise sigma {noise_sigma}, seed {seed}")),
        },
    };
    let (single, double) = forward_model(&template, &s)?;
    let model: Vec<f64> = single.iter().chain(&double).copied().collect();
    let noisy = add_noise(&model, noise_sigma, seed)?;
    let sigma = if noise_sigma > 0.0 {
        noise_sigma
    } else {
        NOISELESS_SIGMA
    };
    let mut it = noisy.into_iter();
    let mut data = template;
    for p in data
        .single_pulse
        .iter_mut()
        .chain(data.double_pulse.iter_mut())
    {
        p.rho22 = it.next().expect("one value per point");
        p.sigma = sigma;
    }
    Ok(data)
}
