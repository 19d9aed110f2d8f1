//! Fixed-step RK4 integration of ρ̇ = −i[H,ρ] + L(ρ) over piecewise
//! schedules, and a matrix-exponential propagator used as an oracle.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitize_in_place, matrix_exp, min_eigenvalue_hermitian, ComplexMatrix, DensityMatrix, C64,
    POSITIVITY_TOL, TRACE_TOL,
};
use crate::model::{
    build_hamiltonian_n, envelope, gamma3_field_free, gamma3_of_pulse, LambdaSystem, PulseSpec,
    RabiPair, Rates, RelaxationParams,
};

/// Largest allowed Hermiticity defect produced by a single RK4 step.
pub const STEP_HERMITICITY_TOL: f64 = 1e-10;

/// Time-dependent controls for one schedule segment.
pub trait Drive: Send + Sync {
    fn dim(&self) -> usize;
    /// Writes H(t) (rad/ps) into `out`.
    fn hamiltonian_into(&self, t: f64, out: &mut ComplexMatrix);
    /// Excited-state dephasing γ3(t) in 1/ps.
    fn gamma3(&self, _t: f64) -> f64 {
        0.0
    }
}

/// Time-independent Hamiltonian with a fixed γ3.
#[derive(Debug, Clone)]
pub struct ConstantDrive {
    pub hamiltonian: ComplexMatrix,
    pub gamma3: f64,
}

impl ConstantDrive {
    pub fn new(hamiltonian: ComplexMatrix) -> Self {
        Self {
            hamiltonian,
            gamma3: 0.0,
        }
    }
}

impl Drive for ConstantDrive {
    fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }
    fn hamiltonian_into(&self, _t: f64, out: &mut ComplexMatrix) {
        out.as_mut_slice()
            .copy_from_slice(self.hamiltonian.as_slice());
    }
    fn gamma3(&self, _t: f64) -> f64 {
        self.gamma3
    }
}

/// One sech pulse acting on an n-level Λ system.
#[derive(Debug, Clone)]
pub struct PulseDrive {
    system: LambdaSystem,
    pulse: PulseSpec,
    // H(t) = bare + envelope(t)·coupling
    bare: ComplexMatrix,
    coupling: ComplexMatrix,
    relaxation: Option<RelaxationParams>,
}

impl PulseDrive {
    pub fn new(
        system: LambdaSystem,
        pulse: PulseSpec,
        peak: RabiPair,
        relaxation: Option<RelaxationParams>,
    ) -> Self {
        let peak_pairs = system.level_rabi_pairs(peak);
        let bare = build_hamiltonian_n(&system, &peak_pairs, 0.0)
            .expect("pulse drive needs a validated system");
        let full = build_hamiltonian_n(&system, &peak_pairs, 1.0)
            .expect("pulse drive needs a validated system");
        let coupling = &full - &bare;
        Self {
            system,
            pulse,
            bare,
            coupling,
            relaxation,
        }
    }
}

impl Drive for PulseDrive {
    fn dim(&self) -> usize {
        self.system.n()
    }
    fn hamiltonian_into(&self, t: f64, out: &mut ComplexMatrix) {
        let e = envelope(&self.pulse, t);
        for ((o, b), c) in out
            .as_mut_slice()
            .iter_mut()
            .zip(self.bare.as_slice())
            .zip(self.coupling.as_slice())
        {
            *o = b + c * e;
        }
    }
    fn gamma3(&self, t: f64) -> f64 {
        self.relaxation
            .as_ref()
            .map_or(0.0, |r| gamma3_of_pulse(&r.dephasing, &self.pulse, t))
    }
}

/// Field-free evolution under the bare level energies.
#[derive(Debug, Clone)]
pub struct FreeDrive {
    bare: ComplexMatrix,
    gamma3: f64,
}

impl FreeDrive {
    pub fn new(system: &LambdaSystem, relaxation: Option<&RelaxationParams>) -> Self {
        Self {
            bare: ComplexMatrix::from_real_diagonal(&system.bare_energies()),
            gamma3: relaxation.map_or(0.0, |r| gamma3_field_free(&r.dephasing)),
        }
    }
}

impl Drive for FreeDrive {
    fn dim(&self) -> usize {
        self.bare.dim()
    }
    fn hamiltonian_into(&self, _t: f64, out: &mut ComplexMatrix) {
        out.as_mut_slice().copy_from_slice(self.bare.as_slice());
    }
    fn gamma3(&self, _t: f64) -> f64 {
        self.gamma3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    /// Integrated with `dt_pulse`.
    Pulse,
    /// Integrated with `dt_free`.
    Free,
}

#[derive(Clone)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub kind: SegmentKind,
    pub drive: Arc<dyn Drive>,
    /// Three-level relaxation; `None` means closed-system evolution.
    pub relaxation: Option<RelaxationParams>,
}

impl std::fmt::Debug for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Segment")
            .field("start", &self.start)
            .field("end", &self.end)
            .field("kind", &self.kind)
            .field("dim", &self.drive.dim())
            .field("relaxation", &self.relaxation)
            .finish()
    }
}

/// Ordered, contiguous segments.
#[derive(Debug, Clone)]
pub struct ControlSchedule {
    segments: Vec<Segment>,
}

impl ControlSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Sequence("schedule has no segments".into()));
        }
        let dim = segments[0].drive.dim();
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.start.is_finite() && seg.end.is_finite() && seg.end > seg.start) {
                return Err(Error::Sequence(format!(
                    "segment {i} has non-increasing times [{}, {}]",
                    seg.start, seg.end
                )));
            }
            if seg.drive.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: seg.drive.dim(),
                });
            }
            if seg.relaxation.is_some() && dim != 3 {
                return Err(Error::DimensionMismatch {
                    expected: 3,
                    got: dim,
                });
            }
            if let Some(r) = &seg.relaxation {
                r.validate()?;
            }
            if i > 0 {
                let prev = segments[i - 1].end;
                if (seg.start - prev).abs() > 1e-9 * (1.0 + prev.abs()) {
                    return Err(Error::Sequence(format!(
                        "segment {i} starts at {} but previous ends at {prev}",
                        seg.start
                    )));
                }
            }
        }
        Ok(Self { segments })
    }

    pub fn single(segment: Segment) -> Result<Self> {
        Self::new(vec![segment])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn dim(&self) -> usize {
        self.segments[0].drive.dim()
    }

    pub fn start(&self) -> f64 {
        self.segments[0].start
    }

    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Step inside pulse segments, fs.
    pub dt_pulse_fs: f64,
    /// Step inside field-free segments, ps.
    pub dt_free_ps: f64,
    /// Record every n-th step (segment ends are always recorded).
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_pulse_fs: 2.0,
            dt_free_ps: 0.1,
            record_stride: 50,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_pulse_fs > 0.0 && self.dt_pulse_fs <= 10.0) {
            return Err(Error::param("dt_pulse_fs", "must lie in (0, 10] fs"));
        }
        if !(self.dt_free_ps > 0.0 && self.dt_free_ps <= 1.0) {
            return Err(Error::param("dt_free_ps", "must lie in (0, 1] ps"));
        }
        if self.record_stride == 0 {
            return Err(Error::param("record_stride", "must be at least 1"));
        }
        Ok(())
    }

    fn step_for(&self, kind: SegmentKind) -> f64 {
        match kind {
            SegmentKind::Pulse => self.dt_pulse_fs * 1e-3,
            SegmentKind::Free => self.dt_free_ps,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    /// ps
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }

    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Appends `other`, dropping its first sample when it duplicates our last time.
    pub fn extend(&mut self, other: Trajectory) {
        let skip = match (self.times.last(), other.times.first()) {
            (Some(a), Some(b)) if (a - b).abs() < 1e-12 => 1,
            _ => 0,
        };
        self.times.extend(other.times.into_iter().skip(skip));
        self.states.extend(other.states.into_iter().skip(skip));
    }

    pub fn population_series(&self, level: usize) -> Vec<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| (t, s.population(level)))
            .collect()
    }
}

/// −i[H,ρ] + L(ρ)
pub fn rhs(h: &ComplexMatrix, l_rho: &ComplexMatrix, rho: &DensityMatrix) -> Result<ComplexMatrix> {
    let n = rho.dim();
    h.check_dim(n)?;
    l_rho.check_dim(n)?;
    let mut out = l_rho.clone();
    commutator_acc(h.as_slice(), rho.matrix().as_slice(), n, out.as_mut_slice());
    Ok(out)
}

/// out += −i(Hρ − ρH)
#[inline]
fn commutator_acc(h: &[C64], rho: &[C64], n: usize, out: &mut [C64]) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += h[i * n + k] * rho[k * n + j] - rho[i * n + k] * h[k * n + j];
            }
            // −i·acc
            out[i * n + j] += C64::new(acc.im, -acc.re);
        }
    }
}

struct Workspace {
    n: usize,
    h: ComplexMatrix,
    k: [Vec<C64>; 4],
    tmp: Vec<C64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n * n];
        Self {
            n,
            h: ComplexMatrix::zeros(n),
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z,
        }
    }

    fn eval(&mut self, slot: usize, t: f64, rho: &[C64], drive: &dyn Drive, rates: Option<&Rates>) {
        drive.hamiltonian_into(t, &mut self.h);
        let out = &mut self.k[slot];
        out.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        commutator_acc(self.h.as_slice(), rho, self.n, out);
        if let Some(r) = rates {
            r.accumulate(drive.gamma3(t), rho, out);
        }
    }

    /// Classic RK4 step of size `h` from `t`; updates `rho` in place.
    fn step(&mut self, t: f64, dt: f64, rho: &mut [C64], drive: &dyn Drive, rates: Option<&Rates>) {
        self.eval(0, t, rho, drive, rates);
        for (tmp, (r, k)) in self.tmp.iter_mut().zip(rho.iter().zip(&self.k[0])) {
            *tmp = r + k * (0.5 * dt);
        }
        let tmp = std::mem::take(&mut self.tmp);
        self.eval(1, t + 0.5 * dt, &tmp, drive, rates);
        self.tmp = tmp;
        for (tmp, (r, k)) in self.tmp.iter_mut().zip(rho.iter().zip(&self.k[1])) {
            *tmp = r + k * (0.5 * dt);
        }
        let tmp = std::mem::take(&mut self.tmp);
        self.eval(2, t + 0.5 * dt, &tmp, drive, rates);
        self.tmp = tmp;
        for (tmp, (r, k)) in self.tmp.iter_mut().zip(rho.iter().zip(&self.k[2])) {
            *tmp = r + k * dt;
        }
        let tmp = std::mem::take(&mut self.tmp);
        self.eval(3, t + dt, &tmp, drive, rates);
        self.tmp = tmp;
        let w = dt / 6.0;
        for (idx, r) in rho.iter_mut().enumerate() {
            *r +=
                (self.k[0][idx] + self.k[1][idx] * 2.0 + self.k[2][idx] * 2.0 + self.k[3][idx]) * w;
        }
    }
}

/// Integrates the master equation over `schedule`, returning recorded states.
///
/// Each step is followed by Hermitian symmetrisation. Trace is monitored
/// but never renormalised. Positivity is checked at every recorded sample.
pub fn integrate(
    rho0: &DensityMatrix,
    schedule: &ControlSchedule,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    integrate_unchecked_config(rho0, schedule, cfg, |k| cfg.step_for(k))
}

/// Like [`integrate`] but with an explicit step size (ps) for every segment,
/// bypassing the configured step limits. Used for convergence studies.
pub fn integrate_with_step(
    rho0: &DensityMatrix,
    schedule: &ControlSchedule,
    dt_ps: f64,
    record_stride: usize,
) -> Result<Trajectory> {
    if !(dt_ps > 0.0 && dt_ps.is_finite()) {
        return Err(Error::param("dt", "must be positive"));
    }
    let cfg = IntegratorConfig {
        record_stride: record_stride.max(1),
        ..IntegratorConfig::default()
    };
    integrate_unchecked_config(rho0, schedule, &cfg, |_| dt_ps)
}

fn integrate_unchecked_config(
    rho0: &DensityMatrix,
    schedule: &ControlSchedule,
    cfg: &IntegratorConfig,
    step_for: impl Fn(SegmentKind) -> f64,
) -> Result<Trajectory> {
    let n = schedule.dim();
    if rho0.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rho0.dim(),
        });
    }
    let mut ws = Workspace::new(n);
    let mut rho = rho0.matrix().clone();
    let t_start = schedule.start();
    let mut traj = Trajectory {
        times: vec![t_start],
        states: vec![rho0.clone()],
    };
    let mut step_count = 0usize;

    for seg in schedule.segments() {
        let rates = seg.relaxation.as_ref().map(|r| r.rates_per_ps());
        let len = seg.end - seg.start;
        let nominal = step_for(seg.kind);
        let steps = ((len / nominal) - 1e-9).ceil().max(1.0) as usize;
        let dt = len / steps as f64;
        for i in 0..steps {
            let t = seg.start + i as f64 * dt;
            ws.step(
                t,
                dt,
                rho.as_mut_slice(),
                seg.drive.as_ref(),
                rates.as_ref(),
            );
            step_count += 1;
            let t_next = if i + 1 == steps {
                seg.end
            } else {
                seg.start + (i + 1) as f64 * dt
            };

            let drift = rho.hermitian_deviation();
            if drift > STEP_HERMITICITY_TOL || !rho.is_finite() {
                return Err(Error::IntegrationFailure {
                    time_ps: t_next,
                    invariant: "hermiticity",
                    value: drift,
                });
            }
            hermitize_in_place(&mut rho);

            let elapsed_ns = (t_next - t_start) * 1e-3;
            let trace_err = (rho.trace().re - 1.0).abs();
            if trace_err > TRACE_TOL * elapsed_ns.max(1.0) {
                return Err(Error::IntegrationFailure {
                    time_ps: t_next,
                    invariant: "unit trace",
                    value: trace_err,
                });
            }

            let last = i + 1 == steps;
            if last || step_count.is_multiple_of(cfg.record_stride) {
                let min_eig = min_eigenvalue_hermitian(&rho)?;
                if min_eig < POSITIVITY_TOL {
                    return Err(Error::IntegrationFailure {
                        time_ps: t_next,
                        invariant: "positivity",
                        value: min_eig,
                    });
                }
                traj.times.push(t_next);
                traj.states.push(DensityMatrix::new_unchecked(rho.clone()));
            }
        }
    }
    Ok(traj)
}

/// U ρ0 U† with U = exp(−iH·dt); closed-system oracle for constant H.
pub fn propagate_exact(rho0: &DensityMatrix, h: &ComplexMatrix, dt: f64) -> Result<DensityMatrix> {
    h.check_dim(rho0.dim())?;
    let u = matrix_exp(&h.scale(C64::new(0.0, -dt)))?;
    let out = u.matmul(rho0.matrix()).matmul(&u.adjoint());
    let mut out = out;
    hermitize_in_place(&mut out);
    Ok(DensityMatrix::new_unchecked(out))
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use crate::linalg::StateVector;
    use crate::model::{relaxation_superop, DephasingModel};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn constant_segment(
        h: ComplexMatrix,
        start: f64,
        end: f64,
        relax: Option<RelaxationParams>,
    ) -> Segment {
        Segment {
            start,
            end,
            kind: SegmentKind::Free,
            drive: Arc::new(ConstantDrive::new(h)),
            relaxation: relax,
        }
    }

    #[test]
    fn rhs_commuting_is_zero() {
        let h = ComplexMatrix::from_real_diagonal(&[0.0, 0.3, 6.0]);
        let rho = DensityMatrix::from_populations(&[0.5, 0.3, 0.2]).unwrap();
        let out = rhs(&h, &ComplexMatrix::zeros(3), &rho).unwrap();
        assert_eq!(out.norm_frobenius(), 0.0);
    }

    #[test]
    fn rhs_zero_hamiltonian_is_relaxation() {
        let rho = DensityMatrix::from_populations(&[0.2, 0.3, 0.5]).unwrap();
        let l = relaxation_superop(&RelaxationParams::default(), 0.01, rho.matrix()).unwrap();
        let out = rhs(&ComplexMatrix::zeros(3), &l, &rho).unwrap();
        assert_eq!(out, l);
    }

    #[test]
    fn rhs_dimension_mismatch() {
        let rho = DensityMatrix::from_populations(&[1.0, 0.0]).unwrap();
        assert!(rhs(&ComplexMatrix::zeros(3), &ComplexMatrix::zeros(2), &rho).is_err());
    }

    #[test]
    fn zero_dynamics_is_constant() {
        let rho0 = DensityMatrix::from_populations(&[0.94, 0.06, 0.0]).unwrap();
        let sched =
            ControlSchedule::single(constant_segment(ComplexMatrix::zeros(3), 0.0, 10.0, None))
                .unwrap();
        let traj = integrate(&rho0, &sched, &IntegratorConfig::default()).unwrap();
        for s in &traj.states {
            assert_eq!(s, &rho0);
        }
    }

    #[test]
    fn excited_state_decay_closed_form() {
        let relax = RelaxationParams {
            gamma_12: 0.0,
            gamma_3: 0.5,
            gamma_2: 0.0,
            dephasing: DephasingModel::Constant { gamma3_ghz: 0.0 },
            zeeman_thermal_ratio: 1.0,
        };
        let rho0 = DensityMatrix::from_populations(&[0.0, 0.0, 1.0]).unwrap();
        let sched = ControlSchedule::single(constant_segment(
            ComplexMatrix::zeros(3),
            0.0,
            1000.0,
            Some(relax),
        ))
        .unwrap();
        let traj = integrate(&rho0, &sched, &IntegratorConfig::default()).unwrap();
        let last = traj.final_state().unwrap();
        assert!((last.population(2) - (-1.0f64).exp()).abs() < 1e-9);
        assert!((last.population(0) - last.population(1)).abs() < 1e-15);
    }

    #[test]
    fn two_level_rabi_flop_exact() {
        let omega = 0.7;
        let h = ComplexMatrix::from_real_rows(&[vec![0.0, omega / 2.0], vec![omega / 2.0, 0.0]])
            .unwrap();
        let rho0 = DensityMatrix::from_populations(&[1.0, 0.0]).unwrap();
        let out = propagate_exact(&rho0, &h, PI / omega).unwrap();
        assert!((out.population(1) - 1.0).abs() < 1e-12);
        assert_eq!(propagate_exact(&rho0, &h, 0.0).unwrap(), rho0);
        let diag = ComplexMatrix::from_real_diagonal(&[0.0, 2.0]);
        let psi = StateVector::normalized(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]).unwrap();
        let r = DensityMatrix::pure(&psi);
        let out = propagate_exact(&r, &diag, 1.3).unwrap();
        assert!((out.population(0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rk4_matches_exact_for_constant_hamiltonian() {
        let h = ComplexMatrix::from_rows(&[
            vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(-1.2, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(0.26, 0.0), C64::new(-1.2, 0.3)],
            vec![
                C64::new(-1.2, 0.0),
                C64::new(-1.2, -0.3),
                C64::new(6.3, 0.0),
            ],
        ])
        .unwrap();
        let rho0 = DensityMatrix::from_populations(&[0.94, 0.06, 0.0]).unwrap();
        let mut seg = constant_segment(h.clone(), 0.0, 5.0, None);
        seg.kind = SegmentKind::Pulse;
        let traj = integrate(
            &rho0,
            &ControlSchedule::single(seg).unwrap(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        let exact = propagate_exact(&rho0, &h, 5.0).unwrap();
        assert!(
            traj.final_state()
                .unwrap()
                .matrix()
                .max_abs_diff(exact.matrix())
                < 1e-8
        );
    }

    #[test]
    fn schedule_validation() {
        let a = constant_segment(ComplexMatrix::zeros(3), 0.0, 1.0, None);
        let b = constant_segment(ComplexMatrix::zeros(3), 1.5, 2.0, None);
        assert!(ControlSchedule::new(vec![a.clone(), b]).is_err());
        let c = constant_segment(ComplexMatrix::zeros(3), 1.0, 0.5, None);
        assert!(ControlSchedule::new(vec![a.clone(), c]).is_err());
        let d = constant_segment(ComplexMatrix::zeros(2), 1.0, 2.0, None);
        assert!(ControlSchedule::new(vec![a, d]).is_err());
        let e = constant_segment(
            ComplexMatrix::zeros(2),
            0.0,
            1.0,
            Some(RelaxationParams::default()),
        );
        assert!(ControlSchedule::new(vec![e]).is_err());
        assert!(ControlSchedule::new(vec![]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = IntegratorConfig::default();
        c.dt_pulse_fs = 20.0;
        assert!(c.validate().is_err());
        let mut c = IntegratorConfig::default();
        c.dt_free_ps = 2.0;
        assert!(c.validate().is_err());
        let mut c = IntegratorConfig::default();
        c.record_stride = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn invariant_violation_is_reported() {
        // non-Hermitian generator breaks Hermiticity of ρ on the first step
        let mut h = ComplexMatrix::zeros(2);
        h[(0, 1)] = C64::new(5.0, 0.0);
        let rho0 = DensityMatrix::from_populations(&[1.0, 0.0]).unwrap();
        let sched = ControlSchedule::single(constant_segment(h, 0.0, 1.0, None)).unwrap();
        let err = integrate(&rho0, &sched, &IntegratorConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::IntegrationFailure {
                invariant: "hermiticity",
                ..
            }
        ));
    }

    proptest! {
        #[test]
        fn rhs_is_trace_free_and_hermitian(
            hv in prop::collection::vec(-5.0..5.0f64, 9),
            pops in prop::collection::vec(0.01..1.0f64, 3),
            coh in (-0.1..0.1f64, -0.1..0.1f64),
            g3 in 0.0..3.0f64,
        ) {
            let h = crate::linalg::hermitize(&ComplexMatrix::from_vec(
                hv.iter().enumerate().map(|(i, &x)| C64::new(x, if i % 2 == 0 { 0.3 * x } else { 0.0 })).collect()
            ).unwrap());
            let sum: f64 = pops.iter().sum();
            let mut m = ComplexMatrix::from_real_diagonal(&pops.iter().map(|p| p / sum).collect::<Vec<_>>());
            m[(0, 1)] = C64::new(coh.0, coh.1) * 0.1;
            m[(1, 0)] = m[(0, 1)].conj();
            let rho = DensityMatrix::new_unchecked(m);
            let mut p = RelaxationParams::default();
            p.gamma_12 = 0.2;
            let l = relaxation_superop(&p, g3, rho.matrix()).unwrap();
            let out = rhs(&h, &l, &rho).unwrap();
            prop_assert!(out.trace().norm() < 1e-12);
            prop_assert!(out.hermitian_deviation() < 1e-12);
        }
    }
}
