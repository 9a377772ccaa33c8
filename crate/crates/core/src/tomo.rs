//! Simulated single-qubit process tomography.
//!
//! Four input states `{|0⟩, |1⟩, |+⟩, |−i⟩}` are sent through the channel and
//! the output Bloch vector is read out as three Pauli expectation values. The
//! process matrix follows by linear inversion; finite sampling can leave it
//! with negative eigenvalues, which [`mle_project`] removes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::qcore::{
    apply_channel_unchecked, bloch_vector, density_from_bloch, pauli, projector, CMat, Chi, Pauli, C64, I_UNIT, ONE,
    ZERO,
};

const PHYSICAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InputState {
    Zero,
    One,
    Plus,
    MinusI,
}

impl InputState {
    pub const ALL: [InputState; 4] = [InputState::Zero, InputState::One, InputState::Plus, InputState::MinusI];

    pub fn density(self) -> CMat {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            InputState::Zero => projector(&[ONE, ZERO]),
            InputState::One => projector(&[ZERO, ONE]),
            InputState::Plus => projector(&[C64::from(s), C64::from(s)]),
            InputState::MinusI => projector(&[C64::from(s), C64::new(0.0, -s)]),
        }
    }
}

impl fmt::Display for InputState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputState::Zero => "0",
            InputState::One => "1",
            InputState::Plus => "plus",
            InputState::MinusI => "minus_i",
        })
    }
}

impl FromStr for InputState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "0" => Ok(InputState::Zero),
            "1" => Ok(InputState::One),
            "plus" => Ok(InputState::Plus),
            "minus_i" => Ok(InputState::MinusI),
            other => Err(Error::Parse(format!("unknown input state `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Observable {
    X,
    Y,
    Z,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::X, Observable::Y, Observable::Z];

    fn axis(self) -> usize {
        match self {
            Observable::X => 0,
            Observable::Y => 1,
            Observable::Z => 2,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Observable::X => "x",
            Observable::Y => "y",
            Observable::Z => "z",
        })
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" => Ok(Observable::X),
            "y" => Ok(Observable::Y),
            "z" => Ok(Observable::Z),
            other => Err(Error::Parse(format!("unknown observable `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomoRecord {
    pub input: InputState,
    pub observable: Observable,
    /// Estimated expectation value in `[-1, 1]`.
    pub mean: f64,
    /// Number of shots; `0` marks an exact (noise-free) record.
    pub shots: u64,
}

pub const CSV_HEADER: &str = "input,observable,mean,shots";

pub fn records_to_csv(records: &[TomoRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.input,
            r.observable,
            crate::sweep::format_sig(r.mean, 9),
            r.shots
        ));
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<TomoRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("expected header `{CSV_HEADER}`, got {other:?}"))),
    }
    lines
        .map(|line| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 4 {
                return Err(Error::Parse(format!("malformed record `{line}`")));
            }
            let mean: f64 = cells[2].trim().parse().map_err(|_| Error::Parse(format!("bad mean in `{line}`")))?;
            let shots: u64 = cells[3].trim().parse().map_err(|_| Error::Parse(format!("bad shots in `{line}`")))?;
            Ok(TomoRecord { input: cells[0].parse()?, observable: cells[1].parse()?, mean, shots })
        })
        .collect()
}

/// Twelve records (every input × observable). `shots == 0` returns exact
/// expectation values; otherwise each mean is a binomial estimate.
pub fn simulate_tomography(chi: &Chi, shots: u64, seed: u64) -> Result<Vec<TomoRecord>> {
    if (chi.trace() - 1.0).abs() > 1e-6 || !chi.is_physical(PHYSICAL_TOL) {
        return Err(Error::UnphysicalChannel(chi.min_eigenvalue()));
    }
    let mut records = Vec::with_capacity(12);
    for (i, input) in InputState::ALL.iter().enumerate() {
        let out = apply_channel_unchecked(chi, &input.density());
        let bloch = bloch_vector(&out);
        for (j, obs) in Observable::ALL.iter().enumerate() {
            let exact = bloch[obs.axis()].clamp(-1.0, 1.0);
            let mean = if shots == 0 {
                exact
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((3 * i + j) as u64);
                let p_up = ((1.0 + exact) / 2.0).clamp(0.0, 1.0);
                let ups = Binomial::new(shots, p_up)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?
                    .sample(&mut rng);
                2.0 * ups as f64 / shots as f64 - 1.0
            };
            records.push(TomoRecord { input: *input, observable: *obs, mean, shots });
        }
    }
    Ok(records)
}

fn output_states(records: &[TomoRecord]) -> Result<BTreeMap<InputState, CMat>> {
    let mut table: BTreeMap<(InputState, Observable), f64> = BTreeMap::new();
    for r in records {
        if table.insert((r.input, r.observable), r.mean).is_some() {
            return Err(Error::DuplicateRecord(format!("{} / {}", r.input, r.observable)));
        }
    }
    let mut states = BTreeMap::new();
    for input in InputState::ALL {
        let mut r = [0.0; 3];
        for obs in Observable::ALL {
            r[obs.axis()] = *table
                .get(&(input, obs))
                .ok_or_else(|| Error::IncompleteRecordSet(format!("{input} / {obs}")))?;
        }
        states.insert(input, density_from_bloch(r));
    }
    Ok(states)
}

/// Matrix unit `|a⟩⟨b|`.
fn unit(a: usize, b: usize) -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(a, b)] = ONE;
    m
}

/// Linear-inversion estimate of χ from a complete record set.
pub fn linear_inversion(records: &[TomoRecord]) -> Result<Chi> {
    let out = output_states(records)?;
    let (r0, r1, rp, rm) = (
        &out[&InputState::Zero],
        &out[&InputState::One],
        &out[&InputState::Plus],
        &out[&InputState::MinusI],
    );
    let diag_sum = r0 + r1;
    // |0⟩⟨1| = |+⟩⟨+| − i|−i⟩⟨−i| − (1−i)/2·I, and its adjoint for |1⟩⟨0|
    let e01 = rp - rm * I_UNIT - &diag_sum * C64::new(0.5, -0.5);
    let e10 = rp + rm * I_UNIT - &diag_sum * C64::new(0.5, 0.5);
    let images = [(unit(0, 0), r0.clone()), (unit(0, 1), e01), (unit(1, 0), e10), (unit(1, 1), r1.clone())];

    let basis: Vec<CMat> = Pauli::ALL.iter().map(|&p| pauli(p)).collect();
    let mut design = DMatrix::<C64>::zeros(16, 16);
    let mut rhs = DVector::<C64>::zeros(16);
    for (u, (input, image)) in images.iter().enumerate() {
        for m in 0..4 {
            for n in 0..4 {
                let term = &basis[m] * input * basis[n].adjoint();
                for a in 0..2 {
                    for b in 0..2 {
                        design[(4 * u + 2 * a + b, 4 * m + n)] = term[(a, b)];
                    }
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                rhs[4 * u + 2 * a + b] = image[(a, b)];
            }
        }
    }
    let sol = design
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("tomography design matrix is singular".into()))?;
    let raw = Matrix4::from_fn(|m, n| sol[4 * m + n]);
    Ok(Chi::from_matrix((raw + raw.adjoint()) * C64::from(0.5)))
}

/// Frobenius-nearest positive semidefinite χ (eigenvalue clipping), rescaled to
/// unit trace.
pub fn mle_project(chi_raw: &Chi) -> Result<Chi> {
    let m = chi_raw.matrix();
    let herm_err = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if herm_err > 1e-8 {
        return Err(Error::NonHermitianInput(herm_err));
    }
    let eig = SymmetricEigen::new((m + m.adjoint()) * C64::from(0.5));
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let v = &eig.eigenvectors;
    let mut out = Matrix4::<C64>::zeros();
    for (k, &l) in clipped.iter().enumerate() {
        if l > 0.0 {
            let col = v.column(k);
            out += col * col.adjoint() * C64::from(l / total);
        }
    }
    Ok(Chi::from_matrix((out + out.adjoint()) * C64::from(0.5)))
}
