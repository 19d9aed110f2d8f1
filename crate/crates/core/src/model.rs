//! Physical model assembly: Λ-system level structure, sech pulses, the
//! rotating-frame Hamiltonians, the adiabatically eliminated two-level
//! Hamiltonian and the three-level relaxation super-operator.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::units;

/// Ground Zeeman splitting at 7 T.
pub const DEFAULT_ZEEMAN_GHZ: f64 = 42.0;
/// Red detuning of the fast pulse below the lowest excited level.
pub const DEFAULT_DETUNING_THZ: f64 = 1.0;
pub const DEFAULT_FWHM_PS: f64 = 2.0;
pub const DEFAULT_ENERGY_SCALE: f64 = 0.8;
/// Single-pulse rotation at the reference energy, used to anchor κ.
pub const ANCHOR_ROTATION_RAD: f64 = 0.9;
pub const ANCHOR_ENERGY_UJCM2: f64 = 10.0;
pub const DEFAULT_TEMPERATURE_K: f64 = 1.5;

/// Sech pulse-window half width in units of the FWHM.
pub const WINDOW_HALF_WIDTH_FWHM: f64 = 5.0;

/// Level structure of an n-level Λ system: two ground states |1⟩, |2⟩ and
/// n−2 excited states |k⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaSystem {
    /// Ground-state splitting ωL, ordinary frequency in GHz.
    pub omega_l_ghz: f64,
    /// Δk = ν(|1⟩↔|k⟩) − ν_laser in THz, one per excited level; positive is red detuning.
    pub detunings_thz: Vec<f64>,
    /// Relative dipole weights (w_k1, w_k2) per excited level.
    pub coupling_weights: Vec<(f64, f64)>,
}

impl Default for LambdaSystem {
    fn default() -> Self {
        Self {
            omega_l_ghz: DEFAULT_ZEEMAN_GHZ,
            detunings_thz: vec![DEFAULT_DETUNING_THZ],
            coupling_weights: vec![(1.0, 1.0)],
        }
    }
}

impl LambdaSystem {
    pub fn new(
        omega_l_ghz: f64,
        detunings_thz: Vec<f64>,
        coupling_weights: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let sys = Self {
            omega_l_ghz,
            detunings_thz,
            coupling_weights,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn three_level(omega_l_ghz: f64, detuning_thz: f64) -> Result<Self> {
        Self::new(omega_l_ghz, vec![detuning_thz], vec![(1.0, 1.0)])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega_l_ghz.is_finite() {
            return Err(Error::param("omega_l_ghz", "must be finite"));
        }
        if self.detunings_thz.is_empty() {
            return Err(Error::param(
                "detunings_thz",
                "need at least one excited level",
            ));
        }
        if self.detunings_thz.len() != self.coupling_weights.len() {
            return Err(Error::param(
                "coupling_weights",
                format!(
                    "{} weight pairs for {} excited levels",
                    self.coupling_weights.len(),
                    self.detunings_thz.len()
                ),
            ));
        }
        if self
            .detunings_thz
            .iter()
            .any(|d| *d == 0.0 || !d.is_finite())
        {
            return Err(Error::param(
                "detunings_thz",
                "every detuning must be finite and non-zero",
            ));
        }
        if self
            .coupling_weights
            .iter()
            .any(|(a, b)| !a.is_finite() || !b.is_finite())
        {
            return Err(Error::param("coupling_weights", "weights must be finite"));
        }
        if self.n() > crate::linalg::MAX_DIM {
            return Err(Error::param("detunings_thz", "at most 8 levels supported"));
        }
        Ok(())
    }

    /// Total level count n.
    pub fn n(&self) -> usize {
        self.detunings_thz.len() + 2
    }

    /// ωL in rad/ps.
    pub fn omega_l(&self) -> f64 {
        units::ghz_to_rad_per_ps(self.omega_l_ghz)
    }

    /// Δk in rad/ps for excited index `k` (0 for |3⟩).
    pub fn detuning(&self, k: usize) -> f64 {
        units::thz_to_rad_per_ps(self.detunings_thz[k])
    }

    /// Larmor period in ps.
    pub fn larmor_period_ps(&self) -> f64 {
        1e3 / self.omega_l_ghz
    }

    /// Per-level Rabi pairs obtained by weighting a base pair.
    pub fn level_rabi_pairs(&self, base: RabiPair) -> Vec<RabiPair> {
        self.coupling_weights
            .iter()
            .map(|&(w1, w2)| RabiPair {
                omega_1: base.omega_1 * w1,
                omega_2: base.omega_2 * w2,
            })
            .collect()
    }

    /// Unperturbed diagonal (0, ωL, Δ3, …, Δn) in rad/ps.
    pub fn bare_energies(&self) -> Vec<f64> {
        let mut e = vec![0.0, self.omega_l()];
        e.extend((0..self.detunings_thz.len()).map(|k| self.detuning(k)));
        e
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    #[default]
    Sech,
}

/// One fast optical pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSpec {
    #[serde(default)]
    pub shape: PulseShape,
    /// Intensity FWHM in ps.
    pub fwhm_ps: f64,
    /// Energy density in μJ/cm².
    pub energy_density: f64,
    /// Angle from the magnetic-field axis in radians.
    pub polarization_angle: f64,
    /// Peak time in ps.
    pub arrival_time_ps: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            shape: PulseShape::Sech,
            fwhm_ps: DEFAULT_FWHM_PS,
            energy_density: ANCHOR_ENERGY_UJCM2,
            polarization_angle: std::f64::consts::FRAC_PI_4,
            arrival_time_ps: 0.0,
        }
    }
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_ps > 0.0 && self.fwhm_ps.is_finite()) {
            return Err(Error::param("fwhm_ps", "must be positive"));
        }
        if !(self.energy_density >= 0.0 && self.energy_density.is_finite()) {
            return Err(Error::param(
                "energy_density",
                "must be finite and non-negative",
            ));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.polarization_angle) {
            return Err(Error::param("polarization_angle", "must lie in [0, π/2]"));
        }
        if !self.arrival_time_ps.is_finite() {
            return Err(Error::param("arrival_time_ps", "must be finite"));
        }
        Ok(())
    }

    pub fn with_energy(mut self, energy_density: f64) -> Self {
        self.energy_density = energy_density;
        self
    }

    pub fn at(mut self, arrival_time_ps: f64) -> Self {
        self.arrival_time_ps = arrival_time_ps;
        self
    }

    /// Sech time constant τs such that sech²(t/τs) has the configured FWHM.
    pub fn tau_s(&self) -> f64 {
        self.fwhm_ps / (2.0 * std::f64::consts::SQRT_2.acosh())
    }

    /// Integration window [arrival − 5·FWHM, arrival + 5·FWHM].
    pub fn window(&self) -> (f64, f64) {
        let half = WINDOW_HALF_WIDTH_FWHM * self.fwhm_ps;
        (self.arrival_time_ps - half, self.arrival_time_ps + half)
    }

    pub fn window_length(&self) -> f64 {
        2.0 * WINDOW_HALF_WIDTH_FWHM * self.fwhm_ps
    }
}

/// Peak field envelope at time `t` (ps), in [0, 1].
pub fn envelope(pulse: &PulseSpec, t: f64) -> f64 {
    match pulse.shape {
        PulseShape::Sech => {
            let x = (t - pulse.arrival_time_ps) / pulse.tau_s();
            // sech overflows gracefully to 0 for |x| > ~710
            1.0 / x.cosh()
        }
    }
}

/// Maps pulse energy density onto the peak total Rabi frequency,
/// Ω_tot = κ·√(s·U).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiCalibration {
    /// rad/s per √(μJ/cm²).
    pub kappa: f64,
    /// Multiplier applied to configured energies before the Rabi map.
    pub energy_scale_factor: f64,
}

impl Default for RabiCalibration {
    /// κ anchored so a 2 ps, 10 μJ/cm², 45° pulse at 1 THz detuning gives a 0.9 rad rotation.
    fn default() -> Self {
        Self::for_rotation(
            ANCHOR_ROTATION_RAD,
            &PulseSpec::default(),
            &LambdaSystem::default(),
            DEFAULT_ENERGY_SCALE,
        )
        .expect("default anchor is valid")
    }
}

impl RabiCalibration {
    pub fn new(kappa: f64, energy_scale_factor: f64) -> Result<Self> {
        let cal = Self {
            kappa,
            energy_scale_factor,
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::param("kappa", "must be positive"));
        }
        if !(self.energy_scale_factor > 0.0 && self.energy_scale_factor <= 2.0) {
            return Err(Error::param("energy_scale_factor", "must lie in (0, 2]"));
        }
        Ok(())
    }

    /// Inverts `rotation_angle`: the κ for which `pulse` produces `theta`.
    pub fn for_rotation(
        theta: f64,
        pulse: &PulseSpec,
        sys: &LambdaSystem,
        energy_scale_factor: f64,
    ) -> Result<Self> {
        pulse.validate()?;
        sys.validate()?;
        // θ = 2τs·|Ω_eff,peak| and Ω_eff,peak = ½ Σ w1 w2 Ω_tot² cos sin / Δk, Ω_tot² = κ² s U
        let (c, s) = (
            pulse.polarization_angle.cos(),
            pulse.polarization_angle.sin(),
        );
        let sum: f64 = sys
            .coupling_weights
            .iter()
            .enumerate()
            .map(|(k, &(w1, w2))| w1 * w2 / sys.detuning(k))
            .sum();
        let denom = pulse.tau_s() * sum.abs() * energy_scale_factor * pulse.energy_density * c * s;
        if !(denom > 0.0) || !(theta > 0.0) {
            return Err(Error::param(
                "kappa",
                "anchor pulse produces no Raman coupling; cannot calibrate",
            ));
        }
        let kappa_per_ps = (theta / denom).sqrt();
        Self::new(units::per_ps_to_per_s(kappa_per_ps), energy_scale_factor)
    }

    /// κ in rad/ps per √(μJ/cm²).
    pub fn kappa_per_ps(&self) -> f64 {
        units::per_s_to_per_ps(self.kappa)
    }
}

/// Peak Rabi frequencies (rad/ps) for the |1⟩↔|k⟩ and |2⟩↔|k⟩ transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RabiPair {
    pub omega_1: f64,
    pub omega_2: f64,
}

impl RabiPair {
    pub fn scaled(self, s: f64) -> Self {
        Self {
            omega_1: self.omega_1 * s,
            omega_2: self.omega_2 * s,
        }
    }
}

/// (Ω31, Ω32) at the pulse peak in rad/ps.
pub fn rabi_pair_from_pulse(pulse: &PulseSpec, cal: &RabiCalibration) -> RabiPair {
    let total = cal.kappa_per_ps() * (cal.energy_scale_factor * pulse.energy_density).sqrt();
    RabiPair {
        omega_1: total * pulse.polarization_angle.cos(),
        omega_2: total * pulse.polarization_angle.sin(),
    }
}

/// n-level rotating-frame Hamiltonian (rad/ps). `peak_pairs` holds one pair
/// per excited level; all share the field envelope value `envelope`.
pub fn build_hamiltonian_n(
    sys: &LambdaSystem,
    peak_pairs: &[RabiPair],
    envelope: f64,
) -> Result<ComplexMatrix> {
    let n = sys.n();
    if peak_pairs.len() != n - 2 {
        return Err(Error::DimensionMismatch {
            expected: n - 2,
            got: peak_pairs.len(),
        });
    }
    let mut h = ComplexMatrix::from_real_diagonal(&sys.bare_energies());
    for (idx, pair) in peak_pairs.iter().enumerate() {
        let k = idx + 2;
        let a = C64::new(-0.5 * pair.omega_1 * envelope, 0.0);
        let b = C64::new(-0.5 * pair.omega_2 * envelope, 0.0);
        h[(0, k)] = a;
        h[(k, 0)] = a.conj();
        h[(1, k)] = b;
        h[(k, 1)] = b.conj();
    }
    Ok(h)
}

/// Three-level Hamiltonian with diagonal (0, ωL, Δ).
pub fn build_hamiltonian_3(
    sys: &LambdaSystem,
    peak: RabiPair,
    envelope: f64,
) -> Result<ComplexMatrix> {
    if sys.n() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: sys.n(),
        });
    }
    build_hamiltonian_n(sys, &[peak], envelope)
}

/// Second-order couplings after eliminating the excited levels (rad/ps).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveCouplings {
    /// |Ω1| = ½ Σ |Ωk1|²/Δk
    pub light_shift_1: f64,
    /// |Ω2| = ½ Σ |Ωk2|²/Δk
    pub light_shift_2: f64,
    /// Ω_eff = ½ Σ Ωk1 Ωk2* / Δk
    pub omega_eff: Complex64,
}

pub fn effective_couplings(
    sys: &LambdaSystem,
    peak_pairs: &[RabiPair],
    envelope: f64,
) -> Result<EffectiveCouplings> {
    if peak_pairs.len() != sys.n() - 2 {
        return Err(Error::DimensionMismatch {
            expected: sys.n() - 2,
            got: peak_pairs.len(),
        });
    }
    let mut out = EffectiveCouplings {
        light_shift_1: 0.0,
        light_shift_2: 0.0,
        omega_eff: C64::new(0.0, 0.0),
    };
    for (k, pair) in peak_pairs.iter().enumerate() {
        let delta = sys.detuning(k);
        let o1 = pair.omega_1 * envelope;
        let o2 = pair.omega_2 * envelope;
        let worst = o1.abs().max(o2.abs()) / delta.abs();
        if worst > 0.5 {
            log::warn!(
                "adiabatic elimination outside its regime: |Ω|/|Δ| = {worst:.3} for excited level {}",
                k + 3
            );
        }
        out.light_shift_1 += 0.5 * o1 * o1 / delta;
        out.light_shift_2 += 0.5 * o2 * o2 / delta;
        out.omega_eff += C64::new(0.5 * o1 * o2 / delta, 0.0);
    }
    Ok(out)
}

/// Effective two-level Hamiltonian
/// H₂ = −[[|Ω1|/2, Ω_eff/2], [Ω_eff*/2, |Ω2|/2 − ωL]] in rad/ps.
pub fn effective_two_level(
    sys: &LambdaSystem,
    peak_pairs: &[RabiPair],
    envelope: f64,
) -> Result<ComplexMatrix> {
    let c = effective_couplings(sys, peak_pairs, envelope)?;
    let mut h = ComplexMatrix::zeros(2);
    h[(0, 0)] = C64::new(-0.5 * c.light_shift_1, 0.0);
    h[(0, 1)] = -0.5 * c.omega_eff;
    h[(1, 0)] = -0.5 * c.omega_eff.conj();
    h[(1, 1)] = C64::new(-(0.5 * c.light_shift_2 - sys.omega_l()), 0.0);
    Ok(h)
}

/// θ = ∫|Ω_eff(t)| dt = 2τs·|Ω_eff,peak| for a sech field (sech² effective envelope).
pub fn rotation_angle(pulse: &PulseSpec, sys: &LambdaSystem, cal: &RabiCalibration) -> f64 {
    let pairs = sys.level_rabi_pairs(rabi_pair_from_pulse(pulse, cal));
    let omega_eff: f64 = pairs
        .iter()
        .enumerate()
        .map(|(k, p)| 0.5 * p.omega_1 * p.omega_2 / sys.detuning(k))
        .sum();
    2.0 * pulse.tau_s() * omega_eff.abs()
}

/// Energy density (μJ/cm²) at which a pulse shaped like `template` yields rotation `theta`.
pub fn energy_for_rotation(
    theta: f64,
    template: &PulseSpec,
    sys: &LambdaSystem,
    cal: &RabiCalibration,
) -> Result<f64> {
    // rotation_angle is linear in energy density
    let unit = rotation_angle(&template.clone().with_energy(1.0), sys, cal);
    if !(unit > 0.0) {
        return Err(Error::param(
            "polarization_angle",
            "pulse produces no Raman coupling",
        ));
    }
    Ok(theta / unit)
}

/// Model for the excited-state dephasing γ3(t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DephasingModel {
    /// Constant rate in units of 10⁹ s⁻¹.
    Constant { gamma3_ghz: f64 },
    /// Peak rate offset + slope·U, following the instantaneous pulse intensity.
    EnergyLinear {
        /// 10¹² s⁻¹ per μJ/cm².
        slope_thz_per_ujcm2: f64,
        /// 10⁹ s⁻¹.
        offset_ghz: f64,
    },
}

impl DephasingModel {
    pub const DEFAULT_CONSTANT_GHZ: f64 = 10.0;
    pub const DEFAULT_SLOPE: f64 = 0.16;
    pub const DEFAULT_OFFSET_GHZ: f64 = 10.0;

    pub fn constant_default() -> Self {
        DephasingModel::Constant {
            gamma3_ghz: Self::DEFAULT_CONSTANT_GHZ,
        }
    }

    pub fn energy_linear_default() -> Self {
        DephasingModel::EnergyLinear {
            slope_thz_per_ujcm2: Self::DEFAULT_SLOPE,
            offset_ghz: Self::DEFAULT_OFFSET_GHZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DephasingModel::Constant { gamma3_ghz } => gamma3_ghz >= 0.0 && gamma3_ghz.is_finite(),
            DephasingModel::EnergyLinear {
                slope_thz_per_ujcm2,
                offset_ghz,
            } => {
                slope_thz_per_ujcm2 >= 0.0
                    && offset_ghz >= 0.0
                    && slope_thz_per_ujcm2.is_finite()
                    && offset_ghz.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(
                "dephasing",
                "rates must be finite and non-negative",
            ))
        }
    }

    /// Peak γ3 for a pulse of the given energy density, in 1/ps.
    pub fn peak_rate(&self, energy_density: f64) -> f64 {
        match *self {
            DephasingModel::Constant { gamma3_ghz } => units::ghz_rate_to_per_ps(gamma3_ghz),
            DephasingModel::EnergyLinear {
                slope_thz_per_ujcm2,
                offset_ghz,
            } => {
                units::ghz_rate_to_per_ps(offset_ghz)
                    + units::thz_rate_to_per_ps(slope_thz_per_ujcm2 * energy_density)
            }
        }
    }
}

/// γ3(t) in 1/ps while `pulse` is applied.
pub fn gamma3_of_pulse(model: &DephasingModel, pulse: &PulseSpec, t: f64) -> f64 {
    match model {
        DephasingModel::Constant { .. } => model.peak_rate(pulse.energy_density),
        DephasingModel::EnergyLinear { .. } => {
            let e = envelope(pulse, t);
            model.peak_rate(pulse.energy_density) * e * e
        }
    }
}

/// γ3 with no field present, in 1/ps.
pub fn gamma3_field_free(model: &DephasingModel) -> f64 {
    match model {
        DephasingModel::Constant { .. } => model.peak_rate(0.0),
        DephasingModel::EnergyLinear { .. } => 0.0,
    }
}

/// Relaxation rates for the three-level model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxationParams {
    /// Γ12, longitudinal |1⟩→|2⟩ rate, 1/ns.
    pub gamma_12: f64,
    /// Γ3, half the total radiative rate of |3⟩, 1/ns.
    pub gamma_3: f64,
    /// γ2, ground-state transverse rate, 1/ns.
    pub gamma_2: f64,
    pub dephasing: DephasingModel,
    /// e^(E12/kT); Γ21 = Γ12 × ratio.
    pub zeeman_thermal_ratio: f64,
}

impl Default for RelaxationParams {
    fn default() -> Self {
        Self {
            // T1 of order milliseconds; irrelevant on ns timescales
            gamma_12: 1e-6,
            gamma_3: 0.5,
            gamma_2: 1.0,
            dephasing: DephasingModel::constant_default(),
            zeeman_thermal_ratio: units::boltzmann_ratio(DEFAULT_ZEEMAN_GHZ, DEFAULT_TEMPERATURE_K),
        }
    }
}

impl RelaxationParams {
    /// Every rate zero: purely unitary evolution.
    pub fn none() -> Self {
        Self {
            gamma_12: 0.0,
            gamma_3: 0.0,
            gamma_2: 0.0,
            dephasing: DephasingModel::Constant { gamma3_ghz: 0.0 },
            zeeman_thermal_ratio: 1.0,
        }
    }

    pub fn with_dephasing(mut self, dephasing: DephasingModel) -> Self {
        self.dephasing = dephasing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_12", self.gamma_12),
            ("gamma_3", self.gamma_3),
            ("gamma_2", self.gamma_2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, "rate must be finite and non-negative"));
            }
        }
        if !(self.zeeman_thermal_ratio > 0.0 && self.zeeman_thermal_ratio.is_finite()) {
            return Err(Error::param("zeeman_thermal_ratio", "must be positive"));
        }
        self.dephasing.validate()
    }

    /// Γ21 = Γ12 · e^(E12/kT), 1/ns.
    pub fn gamma_21(&self) -> f64 {
        self.gamma_12 * self.zeeman_thermal_ratio
    }

    pub fn is_zero(&self) -> bool {
        let dephasing_zero = match self.dephasing {
            DephasingModel::Constant { gamma3_ghz } => gamma3_ghz == 0.0,
            DephasingModel::EnergyLinear {
                slope_thz_per_ujcm2,
                offset_ghz,
            } => slope_thz_per_ujcm2 == 0.0 && offset_ghz == 0.0,
        };
        self.gamma_12 == 0.0 && self.gamma_3 == 0.0 && self.gamma_2 == 0.0 && dephasing_zero
    }

    pub(crate) fn rates_per_ps(&self) -> Rates {
        Rates {
            g12: units::per_ns_to_per_ps(self.gamma_12),
            g21: units::per_ns_to_per_ps(self.gamma_21()),
            g3: units::per_ns_to_per_ps(self.gamma_3),
            g2: units::per_ns_to_per_ps(self.gamma_2),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Rates {
    pub g12: f64,
    pub g21: f64,
    pub g3: f64,
    pub g2: f64,
}

impl Rates {
    /// out += L(ρ) for a 3×3 ρ, all in 1/ps.
    #[inline]
    pub(crate) fn accumulate(&self, gamma3: f64, rho: &[C64], out: &mut [C64]) {
        let Rates { g12, g21, g3, g2 } = *self;
        let (r11, r22, r33) = (rho[0].re, rho[4].re, rho[8].re);
        out[0] += C64::new(-g12 * r11 + g21 * r22 + g3 * r33, 0.0);
        out[4] += C64::new(g12 * r11 - g21 * r22 + g3 * r33, 0.0);
        out[8] += C64::new(-2.0 * g3 * r33, 0.0);
        let d12 = 0.5 * (g12 + g21) + g2;
        let d13 = 0.5 * (g12 + 2.0 * g3) + gamma3;
        let d23 = 0.5 * (g21 + 2.0 * g3) + gamma3;
        out[1] -= rho[1] * d12;
        out[3] -= rho[3] * d12;
        out[2] -= rho[2] * d13;
        out[6] -= rho[6] * d13;
        out[5] -= rho[5] * d23;
        out[7] -= rho[7] * d23;
    }
}

/// Three-level relaxation super-operator L(ρ) in 1/ps; `gamma3` in 1/ps.
pub fn relaxation_superop(
    params: &RelaxationParams,
    gamma3: f64,
    rho: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    rho.check_dim(3)?;
    let mut out = ComplexMatrix::zeros(3);
    params
        .rates_per_ps()
        .accumulate(gamma3, rho.as_slice(), out.as_mut_slice());
    Ok(out)
}
