//! Dense complex linear algebra for the small (n ≤ 8) matrices used by the
//! master-equation integrator: Hermitian hygiene, the matrix exponential,
//! Hermitian eigenvalues and state fidelity.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const POSITIVITY_TOL: f64 = -1e-8;
pub const NORM_TOL: f64 = 1e-12;

/// Largest dimension the dense routines are meant for.
pub const MAX_DIM: usize = 8;

/// Square complex matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be at least 1");
        Self {
            dim,
            data: vec![C64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries; the length must be a perfect square.
    pub fn from_vec(data: Vec<C64>) -> Result<Self> {
        let dim = (data.len() as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != data.len() {
            return Err(Error::NotSquare {
                rows: dim,
                len: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::NotSquare { rows: 0, len: 0 });
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::NotSquare {
                    rows: dim,
                    len: row.len() * dim,
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub(crate) fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    /// Matrix product; panics on mismatched dimensions (use `try_matmul` for checked input).
    pub fn matmul(&self, rhs: &Self) -> Self {
        self.try_matmul(rhs).expect("matmul dimension mismatch")
    }

    pub fn try_matmul(&self, rhs: &Self) -> Result<Self> {
        self.check_dim(rhs.dim)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        Ok(out)
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim,
            });
        }
        Ok(())
    }

    /// Largest |m_ij − conj(m_ji)|.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let d = (self[(i, j)] - self[(j, i)].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "max_abs_diff dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Induced 1-norm (max column sum).
    pub fn norm_one(&self) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|j| (0..n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Sub<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Normalised pure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidState("empty state vector".into()));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "state vector norm² = {norm_sq}, expected 1"
            )));
        }
        Ok(Self { amplitudes })
    }

    /// Rescales arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidState("cannot normalise zero vector".into()));
        }
        Self::new(amplitudes.into_iter().map(|a| a / norm).collect())
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index out of range");
        let mut amplitudes = vec![C64::new(0.0, 0.0); dim];
        amplitudes[k] = C64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// |ψ⟩⟨ψ|
    pub fn projector(&self) -> ComplexMatrix {
        let n = self.dim();
        let mut m = ComplexMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.amplitudes[i] * self.amplitudes[j].conj();
            }
        }
        m
    }
}

/// Hermitian, unit-trace, positive semi-definite state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates all three invariants.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let dev = matrix.hermitian_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = min_eigenvalue_hermitian(&matrix)?;
        if min_eig < POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn new_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    /// Diagonal state with the given level populations.
    pub fn from_populations(populations: &[f64]) -> Result<Self> {
        if populations.is_empty() {
            return Err(Error::InvalidState("no populations given".into()));
        }
        if populations.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidState(format!(
                "populations must be finite and non-negative: {populations:?}"
            )));
        }
        let sum: f64 = populations.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "populations sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            matrix: ComplexMatrix::from_real_diagonal(populations),
        })
    }

    pub fn pure(state: &StateVector) -> Self {
        Self {
            matrix: state.projector(),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// Population of level `k` (0-based).
    pub fn population(&self, k: usize) -> f64 {
        self.matrix[(k, k)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.population(k)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Tr(ρ²)
    pub fn purity(&self) -> f64 {
        // Tr(ρρ) = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ
        self.matrix.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }
}

/// (m + m†)/2
pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    let n = m.dim();
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    out
}

pub(crate) fn hermitize_in_place(m: &mut ComplexMatrix) {
    let n = m.dim();
    for i in 0..n {
        let d = m[(i, i)].re;
        m[(i, i)] = C64::new(d, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Scaling-and-squaring with a Taylor core.
pub fn matrix_exp(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = m.dim();
    let norm = m.norm_one();
    if !norm.is_finite() {
        return Err(Error::ExpOverflow { norm });
    }
    // scale to norm ≤ 1/2 so the Taylor tail is below machine precision after ~20 terms
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    if squarings > 1000 {
        return Err(Error::ExpOverflow { norm });
    }
    let scaled = m.scale_real(0.5_f64.powi(squarings as i32));

    let mut result = ComplexMatrix::identity(n);
    let mut term = ComplexMatrix::identity(n);
    for k in 1..=40 {
        term = term.matmul(&scaled).scale_real(1.0 / k as f64);
        result += &term;
        if term.norm_one() <= f64::EPSILON * 1e-3 * result.norm_one() {
            break;
        }
    }
    for _ in 0..squarings {
        result = result.matmul(&result);
        if !result.is_finite() {
            return Err(Error::ExpOverflow { norm });
        }
    }
    Ok(result)
}

/// All eigenvalues of a Hermitian matrix in ascending order.
///
/// The n×n complex problem is embedded as the 2n×2n real symmetric matrix
/// [[Re A, −Im A], [Im A, Re A]], whose spectrum is that of A with every
/// eigenvalue doubled; cyclic Jacobi rotations diagonalise it.
pub fn eigenvalues_hermitian(m: &ComplexMatrix) -> Result<Vec<f64>> {
    let dev = m.hermitian_deviation();
    if dev > 1e-10 {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let n = m.dim();
    let size = 2 * n;
    let mut a = vec![0.0_f64; size * size];
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            a[i * size + j] = z.re;
            a[(i + n) * size + (j + n)] = z.re;
            a[i * size + (j + n)] = -z.im;
            a[(i + n) * size + j] = z.im;
        }
    }
    // symmetrise exactly
    for i in 0..size {
        for j in (i + 1)..size {
            let avg = 0.5 * (a[i * size + j] + a[j * size + i]);
            a[i * size + j] = avg;
            a[j * size + i] = avg;
        }
    }
    jacobi_eigenvalues(&mut a, size);
    let mut eig: Vec<f64> = (0..size).map(|i| a[i * size + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    // pairs are degenerate; keep one of each
    Ok(eig.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect())
}

fn jacobi_eigenvalues(a: &mut [f64], n: usize) {
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        return;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            return;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
}

pub fn min_eigenvalue_hermitian(m: &ComplexMatrix) -> Result<f64> {
    Ok(eigenvalues_hermitian(m)?[0])
}

/// F = ⟨ψ|ρ|ψ⟩
pub fn fidelity(target: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    let n = rho.dim();
    if target.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: target.dim(),
        });
    }
    let psi = target.amplitudes();
    let m = rho.matrix();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += psi[i].conj() * m[(i, j)] * psi[j];
        }
    }
    let f = acc.re;
    const SLACK: f64 = 1e-9;
    if (-SLACK..0.0).contains(&f) {
        Ok(0.0)
    } else if f > 1.0 && f <= 1.0 + SLACK {
        Ok(1.0)
    } else {
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn series_exp(m: &ComplexMatrix) -> ComplexMatrix {
        // plain power series, no scaling; oracle for ‖m‖ ≤ 1
        let mut result = ComplexMatrix::identity(m.dim());
        let mut term = ComplexMatrix::identity(m.dim());
        for k in 1..60 {
            term = (&term * m).scale_real(1.0 / k as f64);
            result += &term;
        }
        result
    }

    fn arb_matrix(n: usize, bound: f64) -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec((-bound..bound, -bound..bound), n * n).prop_map(|v| {
            ComplexMatrix::from_vec(v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    fn arb_density(n: usize) -> impl Strategy<Value = DensityMatrix> {
        // ρ = A A† / Tr(A A†)
        arb_matrix(n, 1.0).prop_filter_map("degenerate", |a| {
            let m = &a * &a.adjoint();
            let tr = m.trace().re;
            if tr < 1e-6 {
                return None;
            }
            Some(DensityMatrix::new_unchecked(hermitize(
                &m.scale_real(1.0 / tr),
            )))
        })
    }

    #[test]
    fn hermitize_fixed_point_and_symmetrization() {
        let h = ComplexMatrix::from_rows(&[
            vec![c(1.0, 0.0), c(0.5, -0.25)],
            vec![c(0.5, 0.25), c(-2.0, 0.0)],
        ])
        .unwrap();
        assert_eq!(hermitize(&h), h);

        let m = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let expected = ComplexMatrix::from_real_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        assert_eq!(hermitize(&m), expected);
    }

    #[test]
    fn matrix_exp_closed_forms() {
        let z = matrix_exp(&ComplexMatrix::zeros(3)).unwrap();
        assert_eq!(z, ComplexMatrix::identity(3));

        let d = matrix_exp(&ComplexMatrix::from_real_diagonal(&[0.3, -1.7])).unwrap();
        assert!((d[(0, 0)].re - 0.3_f64.exp()).abs() < 1e-14);
        assert!((d[(1, 1)].re - (-1.7_f64).exp()).abs() < 1e-14);
        assert!(d[(0, 1)].norm() < 1e-15);

        for &theta in &[0.1, 1.0, 2.5, 7.0] {
            let m = ComplexMatrix::from_real_rows(&[vec![0.0, theta], vec![-theta, 0.0]]).unwrap();
            let e = matrix_exp(&m).unwrap();
            let expected = ComplexMatrix::from_real_rows(&[
                vec![theta.cos(), theta.sin()],
                vec![-theta.sin(), theta.cos()],
            ])
            .unwrap();
            assert!(e.max_abs_diff(&expected) < 1e-12, "theta = {theta}");
        }
    }

    #[test]
    fn matrix_exp_overflow_is_an_error() {
        let m = ComplexMatrix::from_real_diagonal(&[f64::INFINITY, 0.0]);
        assert!(matches!(matrix_exp(&m), Err(Error::ExpOverflow { .. })));
        let m = ComplexMatrix::from_real_diagonal(&[1e6, 0.0]);
        assert!(matches!(matrix_exp(&m), Err(Error::ExpOverflow { .. })));
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert!(
            (min_eigenvalue_hermitian(&ComplexMatrix::identity(4)).unwrap() - 1.0).abs() < 1e-12
        );
        let d = ComplexMatrix::from_real_diagonal(&[0.94, 0.06, 0.0]);
        assert!(min_eigenvalue_hermitian(&d).unwrap().abs() < 1e-12);
        let p = ComplexMatrix::from_real_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let eig = eigenvalues_hermitian(&p).unwrap();
        assert!(eig[0].abs() < 1e-12 && (eig[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_complex_hermitian() {
        // [[2, i],[−i, 2]] has eigenvalues 1 and 3
        let m = ComplexMatrix::from_rows(&[
            vec![c(2.0, 0.0), c(0.0, 1.0)],
            vec![c(0.0, -1.0), c(2.0, 0.0)],
        ])
        .unwrap();
        let eig = eigenvalues_hermitian(&m).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-12 && (eig[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            min_eigenvalue_hermitian(&m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn fidelity_examples() {
        let psi = StateVector::normalized(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.5, 0.0)]).unwrap();
        let rho = DensityMatrix::pure(&psi);
        assert!((fidelity(&psi, &rho).unwrap() - 1.0).abs() < 1e-12);

        let mixed = DensityMatrix::maximally_mixed(2);
        let phi = StateVector::normalized(vec![c(0.3, 0.1), c(-0.7, 0.2)]).unwrap();
        assert!((fidelity(&phi, &mixed).unwrap() - 0.5).abs() < 1e-12);

        let pumped = DensityMatrix::from_populations(&[0.94, 0.06]).unwrap();
        assert!((fidelity(&StateVector::basis(2, 0), &pumped).unwrap() - 0.94).abs() < 1e-12);

        assert!(matches!(
            fidelity(&StateVector::basis(3, 0), &pumped),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::from_populations(&[0.5, 0.6]).is_err());
        assert!(DensityMatrix::from_populations(&[1.1, -0.1]).is_err());
        let bad = ComplexMatrix::from_real_rows(&[vec![1.5, 0.0], vec![0.0, -0.5]]).unwrap();
        assert!(DensityMatrix::new(bad).is_err());
        let ok = ComplexMatrix::from_real_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(DensityMatrix::new(ok).is_ok());
    }

    #[test]
    fn state_vector_requires_unit_norm() {
        assert!(StateVector::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(StateVector::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn hermitize_output_is_hermitian(m in arb_matrix(3, 5.0)) {
            let h = hermitize(&m);
            let anti = &h - &h.adjoint();
            prop_assert_eq!(anti.norm_frobenius(), 0.0);
        }

        #[test]
        fn matrix_exp_matches_series_for_small_norm(m in arb_matrix(3, 0.3)) {
            prop_assume!(m.norm_one() <= 1.0);
            let e = matrix_exp(&m).unwrap();
            let s = series_exp(&m);
            let rel = e.max_abs_diff(&s) / s.norm_frobenius();
            prop_assert!(rel <= 1e-10, "relative error {}", rel);
        }

        #[test]
        fn matrix_exp_inverse_pair(h in arb_matrix(4, 1.0)) {
            // m = iH with ‖m‖ ≤ 5
            let herm = hermitize(&h);
            let m = herm.scale(C64::new(0.0, 1.0));
            prop_assume!(m.norm_one() <= 5.0);
            let prod = &matrix_exp(&m).unwrap() * &matrix_exp(&m.scale_real(-1.0)).unwrap();
            prop_assert!(prod.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-9);
        }

        #[test]
        fn matrix_exp_of_hermitian_generator_is_unitary(h in arb_matrix(3, 3.0), dt in 0.0..2.0f64) {
            let herm = hermitize(&h);
            let u = matrix_exp(&herm.scale(C64::new(0.0, -dt))).unwrap();
            let uu = &u * &u.adjoint();
            prop_assert!(uu.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-9);
        }

        #[test]
        fn fidelity_is_linear_in_rho(
            r1 in arb_density(3),
            r2 in arb_density(3),
            a in 0.0..1.0f64,
            amps in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3),
        ) {
            let psi = StateVector::normalized(amps.into_iter().map(|(x, y)| c(x, y)).collect());
            prop_assume!(psi.is_ok());
            let psi = psi.unwrap();
            let mix = DensityMatrix::new_unchecked(
                &r1.matrix().scale_real(a) + &r2.matrix().scale_real(1.0 - a),
            );
            let lhs = fidelity(&psi, &mix).unwrap();
            let rhs = a * fidelity(&psi, &r1).unwrap() + (1.0 - a) * fidelity(&psi, &r2).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn eigenvalues_of_random_density_are_nonnegative(r in arb_density(4)) {
            let eig = eigenvalues_hermitian(r.matrix()).unwrap();
            prop_assert!(eig[0] > -1e-10);
            let sum: f64 = eig.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-10);
        }
    }
}
