//! Small dense complex linear algebra and single-qubit channel representations.
//!
//! Operators are stored as `nalgebra` dense complex matrices. A qubit channel is
//! represented by its process matrix in the unnormalized Pauli basis
//! `A = {I, σx, σy, σz}`:
//!
//! ```text
//! E(ρ) = Σ_ij χ_ij A_i ρ A_j†
//! ```
//!
//! with the normalization `Σ_i χ_ii = 1` for trace-preserving channels. A unitary
//! `U = Σ_i c_i A_i` has `c_i = Tr(A_i† U) / 2` and `χ_ij = c_i c_j*`.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Largest Hilbert space handled by [`expm_dense`] (electron plus five spin-1/2 nuclei).
pub const MAX_DENSE_DIM: usize = 64;

const HERMITIAN_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-10;
const DENSITY_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I_UNIT: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }
}

pub fn pauli(p: Pauli) -> CMat {
    let entries = match p {
        Pauli::I => [ONE, ZERO, ZERO, ONE],
        Pauli::X => [ZERO, ONE, ONE, ZERO],
        Pauli::Y => [ZERO, -I_UNIT, I_UNIT, ZERO],
        Pauli::Z => [ONE, ZERO, ZERO, -ONE],
    };
    DMatrix::from_row_slice(2, 2, &entries)
}

pub fn identity(dim: usize) -> CMat {
    DMatrix::identity(dim, dim)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Largest entry-wise modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_error(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn unitarity_error(u: &CMat) -> f64 {
    max_abs(&(u.adjoint() * u - identity(u.nrows())))
}

fn check_hermitian(h: &CMat) -> Result<()> {
    if !h.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    // Hamiltonians in rad/s can have entries of order 1e7, so the tolerance scales with the norm.
    let err = hermiticity_error(h);
    if err > HERMITIAN_TOL * max_abs(h).max(1.0) {
        return Err(Error::NonHermitianInput(err));
    }
    Ok(())
}

pub fn check_unitary(u: &CMat) -> Result<()> {
    if !u.is_square() {
        return Err(Error::NotUnitary(f64::INFINITY));
    }
    let err = unitarity_error(u);
    if err > UNITARY_TOL {
        return Err(Error::NotUnitary(err));
    }
    Ok(())
}

/// Expansion `H = c0·I + c⃗·σ⃗` of a 2×2 Hermitian matrix.
pub fn pauli_vector(h: &CMat) -> (f64, [f64; 3]) {
    let c = |p: Pauli| (trace(&(pauli(p) * h)) / 2.0).re;
    (c(Pauli::I), [c(Pauli::X), c(Pauli::Y), c(Pauli::Z)])
}

/// `exp(-i·H·t)` for a 2×2 Hermitian `H`, in closed axis-angle form.
pub fn expm_2x2(h: &CMat, t: f64) -> Result<CMat> {
    if h.shape() != (2, 2) {
        return Err(Error::DimensionMismatch(format!(
            "expm_2x2 needs a 2x2 matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    check_hermitian(h)?;
    let (c0, c) = pauli_vector(h);
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let phase = C64::from_polar(1.0, -c0 * t);
    if norm == 0.0 {
        return Ok(identity(2) * phase);
    }
    let (s, co) = (norm * t).sin_cos();
    let n = [c[0] / norm, c[1] / norm, c[2] / norm];
    let gen = pauli(Pauli::X) * C64::from(n[0])
        + pauli(Pauli::Y) * C64::from(n[1])
        + pauli(Pauli::Z) * C64::from(n[2]);
    Ok((identity(2) * C64::from(co) - gen * (I_UNIT * s)) * phase)
}

/// Apply a real function to the spectrum of a Hermitian matrix: `V·f(Λ)·V†`.
pub fn hermitian_map(h: &CMat, f: impl Fn(f64) -> C64) -> Result<CMat> {
    check_hermitian(h)?;
    let herm = (h + h.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(herm);
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let fj = f(*lambda);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= fj;
        }
    }
    Ok(scaled * v.adjoint())
}

/// `exp(-i·H·t)` through the Hermitian eigendecomposition of `H`.
pub fn expm_dense(h: &CMat, t: f64) -> Result<CMat> {
    let dim = h.nrows();
    if dim > MAX_DENSE_DIM {
        return Err(Error::DimensionTooLarge { dim, max: MAX_DENSE_DIM });
    }
    if dim == 2 && h.ncols() == 2 {
        return expm_2x2(h, t);
    }
    hermitian_map(h, |lambda| C64::from_polar(1.0, -lambda * t))
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let herm = (h + h.adjoint()) * C64::from(0.5);
    let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Process matrix of a qubit channel in the `{I, σx, σy, σz}` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Chi(Matrix4<C64>);

impl Chi {
    pub fn from_matrix(m: Matrix4<C64>) -> Self {
        Chi(m)
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn get(&self, i: Pauli, j: Pauli) -> C64 {
        self.0[(i.index(), j.index())]
    }

    pub fn identity_channel() -> Self {
        let mut m = Matrix4::zeros();
        m[(0, 0)] = ONE;
        Chi(m)
    }

    /// Depolarizing channel `ρ → (1-p)ρ + p·I/2`.
    pub fn depolarizing(p: f64) -> Self {
        let mut m = Matrix4::zeros();
        m[(0, 0)] = C64::from(1.0 - 0.75 * p);
        for k in 1..4 {
            m[(k, k)] = C64::from(p / 4.0);
        }
        Chi(m)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (self.0 + self.0.adjoint()) * C64::from(0.5);
        let mut ev: Vec<f64> = SymmetricEigen::new(herm).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.hermiticity_error() < tol && self.min_eigenvalue() >= -tol
    }

    /// Frobenius distance to another process matrix.
    pub fn distance(&self, other: &Chi) -> f64 {
        (self.0 - other.0).norm()
    }
}

/// Pauli-basis coefficients `c_i = Tr(A_i† U)/2`.
pub fn pauli_coefficients(u: &CMat) -> [C64; 4] {
    let mut c = [ZERO; 4];
    for p in Pauli::ALL {
        c[p.index()] = trace(&(pauli(p).adjoint() * u)) / 2.0;
    }
    c
}

pub fn unitary_to_chi(u: &CMat) -> Result<Chi> {
    if u.shape() != (2, 2) {
        return Err(Error::DimensionMismatch("unitary_to_chi needs a 2x2 unitary".into()));
    }
    check_unitary(u)?;
    let c = pauli_coefficients(u);
    let m = Matrix4::from_fn(|i, j| c[i] * c[j].conj());
    Ok(Chi(m))
}

/// Process matrix of the channel `ρ → Σ_k K_k ρ K_k†`.
pub fn kraus_to_chi(kraus: &[CMat]) -> Result<Chi> {
    if kraus.is_empty() {
        return Err(Error::DimensionMismatch("no Kraus operators".into()));
    }
    let mut m = Matrix4::<C64>::zeros();
    let mut completeness = CMat::zeros(2, 2);
    for k in kraus {
        if k.shape() != (2, 2) {
            return Err(Error::DimensionMismatch("Kraus operators must be 2x2".into()));
        }
        let c = pauli_coefficients(k);
        m += Matrix4::from_fn(|i, j| c[i] * c[j].conj());
        completeness += k.adjoint() * k;
    }
    let dev = max_abs(&(completeness - identity(2)));
    if dev > 1e-9 {
        return Err(Error::UnnormalizedChannel(dev));
    }
    Ok(Chi(m))
}

pub fn check_density(rho: &CMat) -> Result<()> {
    if rho.shape() != (2, 2) {
        return Err(Error::InvalidDensityMatrix(format!(
            "expected 2x2, got {}x{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let herm = hermiticity_error(rho);
    if herm > DENSITY_TOL {
        return Err(Error::InvalidDensityMatrix(format!("not Hermitian ({herm:.3e})")));
    }
    let tr = trace(rho);
    if (tr - ONE).norm() > DENSITY_TOL {
        return Err(Error::InvalidDensityMatrix(format!("trace {:.12} != 1", tr.re)));
    }
    let min_ev = hermitian_eigenvalues(rho)[0];
    if min_ev < -DENSITY_TOL {
        return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min_ev:.3e}")));
    }
    Ok(())
}

/// `E(ρ) = Σ_ij χ_ij A_i ρ A_j†` without validating `ρ`; used on operator bases.
pub fn apply_channel_unchecked(chi: &Chi, rho: &CMat) -> CMat {
    let basis: Vec<CMat> = Pauli::ALL.iter().map(|&p| pauli(p)).collect();
    let mut out = CMat::zeros(2, 2);
    for i in 0..4 {
        let left = &basis[i] * rho;
        for j in 0..4 {
            let w = chi.0[(i, j)];
            if w != ZERO {
                out += (&left * basis[j].adjoint()) * w;
            }
        }
    }
    out
}

pub fn apply_channel(chi: &Chi, rho: &CMat) -> Result<CMat> {
    check_density(rho)?;
    Ok(apply_channel_unchecked(chi, rho))
}

/// Bloch-vector density matrix `(I + r⃗·σ⃗)/2`.
pub fn density_from_bloch(r: [f64; 3]) -> CMat {
    (identity(2)
        + pauli(Pauli::X) * C64::from(r[0])
        + pauli(Pauli::Y) * C64::from(r[1])
        + pauli(Pauli::Z) * C64::from(r[2]))
        * C64::from(0.5)
}

/// `Tr(σ·ρ)` for each Pauli axis.
pub fn bloch_vector(rho: &CMat) -> [f64; 3] {
    let e = |p| trace(&(pauli(p) * rho)).re;
    [e(Pauli::X), e(Pauli::Y), e(Pauli::Z)]
}

/// Projector onto a pure state.
pub fn projector(psi: &[C64]) -> CMat {
    let v = nalgebra::DVector::from_column_slice(psi);
    &v * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        max_abs(&(a - b)) < tol
    }

    fn series_expm(h: &CMat, t: f64) -> CMat {
        // scaling and squaring on a Taylor series, independent of the eigen route
        let a = h * C64::new(0.0, -t);
        let norm = max_abs(&a) * a.nrows() as f64;
        let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
        let scaled = &a * C64::from(0.5f64.powi(squarings));
        let mut term = identity(a.nrows());
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &scaled * C64::from(1.0 / k as f64);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (pauli(Pauli::X), pauli(Pauli::Y), pauli(Pauli::Z));
        assert!(close(&(&z * &z), &identity(2), 1e-15));
        assert!(close(&(&x * &x), &identity(2), 1e-15));
        assert!(trace(&(&x * &y)).norm() < 1e-15);
        assert!(close(&(&x * &y), &(&z * I_UNIT), 1e-15));
    }

    #[test]
    fn resonant_pi_rotation() {
        let h = pauli(Pauli::X) * C64::from(0.5);
        let u = expm_2x2(&h, std::f64::consts::PI).unwrap();
        assert!(close(&u, &(pauli(Pauli::X) * -I_UNIT), 1e-12));
        assert!(close(&expm_2x2(&CMat::zeros(2, 2), 3.3).unwrap(), &identity(2), 1e-15));
    }

    #[test]
    fn detuned_rotation_matches_series() {
        let h = (pauli(Pauli::Z) + pauli(Pauli::X)) * C64::from(0.5);
        let t = std::f64::consts::PI;
        let u = expm_2x2(&h, t).unwrap();
        assert!(close(&u, &series_expm(&h, t), 1e-10));
        assert!(unitarity_error(&u) < 1e-12);
        // rotation angle π√2 about (1,0,1)/√2
        let c = pauli_coefficients(&u);
        let half = std::f64::consts::PI * 2f64.sqrt() / 2.0;
        assert!((c[0].re - half.cos()).abs() < 1e-12);
        assert!((c[1].im + half.sin() / 2f64.sqrt()).abs() < 1e-12);
        assert!((c[3].im + half.sin() / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn non_hermitian_rejected() {
        let mut h = pauli(Pauli::X);
        h[(0, 1)] = C64::new(1.0, 0.3);
        assert!(matches!(expm_2x2(&h, 1.0), Err(Error::NonHermitianInput(_))));
        let big = CMat::zeros(4, 4) + {
            let mut m = CMat::zeros(4, 4);
            m[(0, 3)] = ONE;
            m
        };
        assert!(matches!(expm_dense(&big, 1.0), Err(Error::NonHermitianInput(_))));
    }

    #[test]
    fn dense_too_large() {
        let h = CMat::zeros(128, 128);
        assert!(matches!(expm_dense(&h, 1.0), Err(Error::DimensionTooLarge { .. })));
    }

    #[test]
    fn dense_block_diagonal() {
        let h0 = pauli(Pauli::Z) * C64::from(0.7);
        let h1 = (pauli(Pauli::X) * C64::from(0.3)) + pauli(Pauli::Z) * C64::from(-0.2);
        let p0 = projector(&[ONE, ZERO]);
        let p1 = projector(&[ZERO, ONE]);
        let h = kron(&p0, &h0) + kron(&p1, &h1);
        let u = expm_dense(&h, 1.9).unwrap();
        let expect = kron(&p0, &expm_2x2(&h0, 1.9).unwrap()) + kron(&p1, &expm_2x2(&h1, 1.9).unwrap());
        assert!(close(&u, &expect, 1e-12));
    }

    #[test]
    fn dense_random_against_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = CMat::from_fn(8, 8, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let h = (&a + a.adjoint()) * C64::from(0.5);
        let u = expm_dense(&h, 0.8).unwrap();
        assert!(close(&u, &series_expm(&h, 0.8), 1e-9));
        assert!(unitarity_error(&u) < 1e-10);
        let u1 = expm_dense(&h, 0.3).unwrap();
        let u2 = expm_dense(&h, 0.5).unwrap();
        assert!(close(&(&u1 * &u2), &u, 1e-10));
    }

    #[test]
    fn chi_of_basic_unitaries() {
        let chi = unitary_to_chi(&pauli(Pauli::X)).unwrap();
        assert!((chi.get(Pauli::X, Pauli::X) - ONE).norm() < 1e-15);
        assert!((chi.trace() - 1.0).abs() < 1e-15);
        let chi = unitary_to_chi(&identity(2)).unwrap();
        assert!((chi.get(Pauli::I, Pauli::I) - ONE).norm() < 1e-15);
        let bad = pauli(Pauli::X) * C64::from(1.1);
        assert!(matches!(unitary_to_chi(&bad), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn chi_of_z_rotation_reproduces_conjugation() {
        let u = expm_2x2(&(pauli(Pauli::Z) * C64::from(1.0)), std::f64::consts::FRAC_PI_4).unwrap();
        let chi = unitary_to_chi(&u).unwrap();
        let c8 = std::f64::consts::FRAC_PI_4.cos();
        assert!((chi.get(Pauli::I, Pauli::I).re - c8 * c8).abs() < 1e-12);
        // rank one
        let ev = chi.eigenvalues();
        assert!(ev[..3].iter().all(|e| e.abs() < 1e-12));
        assert!((ev[3] - 1.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let inputs = [
            projector(&[ONE, ZERO]),
            projector(&[ZERO, ONE]),
            projector(&[C64::from(s), C64::from(s)]),
            projector(&[C64::from(s), C64::new(0.0, -s)]),
        ];
        for rho in &inputs {
            let direct = &u * rho * u.adjoint();
            assert!(close(&apply_channel(&chi, rho).unwrap(), &direct, 1e-12));
        }
    }

    #[test]
    fn channel_application() {
        let ket0 = projector(&[ONE, ZERO]);
        let ket1 = projector(&[ZERO, ONE]);
        let chi_x = unitary_to_chi(&pauli(Pauli::X)).unwrap();
        assert!(close(&apply_channel(&chi_x, &ket0).unwrap(), &ket1, 1e-15));
        let rho = density_from_bloch([0.3, -0.2, 0.5]);
        let id = Chi::identity_channel();
        assert!(close(&apply_channel(&id, &rho).unwrap(), &rho, 1e-15));
        // depolarizing against a Kraus sum
        let p = 0.2;
        let out = apply_channel(&Chi::depolarizing(p), &ket0).unwrap();
        let kraus: Vec<CMat> = Pauli::ALL
            .iter()
            .map(|&q| {
                let w = if q == Pauli::I { 1.0 - 0.75 * p } else { p / 4.0 };
                pauli(q) * C64::from(w.sqrt())
            })
            .collect();
        let by_kraus = kraus.iter().fold(CMat::zeros(2, 2), |acc, k| acc + k * &ket0 * k.adjoint());
        assert!(close(&out, &by_kraus, 1e-15));
        let expect = ket0 * C64::from(1.0 - p / 2.0) + ket1 * C64::from(p / 2.0);
        assert!(close(&out, &expect, 1e-15));
    }

    #[test]
    fn invalid_density_rejected() {
        let chi = Chi::identity_channel();
        let rho = density_from_bloch([0.0, 0.0, 1.0]) * C64::from(2.0);
        assert!(matches!(apply_channel(&chi, &rho), Err(Error::InvalidDensityMatrix(_))));
        let rho = density_from_bloch([0.0, 0.0, 1.5]);
        assert!(matches!(apply_channel(&chi, &rho), Err(Error::InvalidDensityMatrix(_))));
    }

    #[test]
    fn kraus_composition() {
        let u = expm_2x2(&pauli(Pauli::Y), 0.4).unwrap();
        assert!(kraus_to_chi(std::slice::from_ref(&u)).unwrap().distance(&unitary_to_chi(&u).unwrap()) < 1e-14);
        let p: f64 = 0.2;
        let kraus: Vec<CMat> = Pauli::ALL
            .iter()
            .map(|&q| {
                let w = if q == Pauli::I { 1.0 - 0.75 * p } else { p / 4.0 };
                pauli(q) * C64::from(w.sqrt())
            })
            .collect();
        assert!(kraus_to_chi(&kraus).unwrap().distance(&Chi::depolarizing(p)) < 1e-14);
        assert!(matches!(kraus_to_chi(&[u * C64::from(0.5)]), Err(Error::UnnormalizedChannel(_))));
    }
}
