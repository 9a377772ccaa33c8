//! Pulse sequences and their realized propagators under detuning and
//! amplitude errors.
//!
//! Everything is expressed in units of the nominal Rabi frequency `Ω`: a
//! segment of nominal angle `θ` lasts `θ/Ω`, during which the rotating-frame
//! Hamiltonian is
//!
//! ```text
//! H = (Δ/2)·σz + ((1+ε)Ω/2)·(cos φ·σx + sin φ·σy)
//! ```
//!
//! so only `Δ/Ω`, `ε`, `θ` and `φ` enter the propagator.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{expm_2x2, expm_dense, identity, kron, pauli, CMat, Pauli, C64};
use crate::sweep::SweepResult;

/// Wraps an angle into `[-π, π]`.
pub fn wrap_phase(phase: f64) -> f64 {
    let mut p = (phase + PI).rem_euclid(TAU) - PI;
    if p < -PI {
        p = -PI;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    /// Nominal rotation angle in radians at zero amplitude error.
    #[serde(rename = "angle_rad")]
    pub angle: f64,
    /// Rotation axis `cos φ·x̂ + sin φ·ŷ`.
    #[serde(rename = "phase_rad")]
    pub phase: f64,
}

impl PulseSegment {
    pub fn new(angle: f64, phase: f64) -> Result<Self> {
        let seg = PulseSegment { angle, phase };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.angle > 0.0 && self.angle <= 4.0 * PI) {
            return Err(Error::InvalidParameter(format!(
                "segment angle {} outside (0, 4π]",
                self.angle
            )));
        }
        if !(-PI - 1e-12..=PI + 1e-12).contains(&self.phase) {
            return Err(Error::InvalidParameter(format!(
                "segment phase {} outside [-π, π]",
                self.phase
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    /// Detuning over Rabi frequency, `Δ/Ω`.
    pub delta_ratio: f64,
    /// Fractional amplitude error; the realized Rabi frequency is `(1+ε)Ω`.
    pub eps: f64,
}

impl ErrorPoint {
    pub const IDEAL: ErrorPoint = ErrorPoint { delta_ratio: 0.0, eps: 0.0 };

    pub fn new(delta_ratio: f64, eps: f64) -> Result<Self> {
        let p = ErrorPoint { delta_ratio, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_ratio.abs() <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "|Δ/Ω| = {} exceeds 2",
                self.delta_ratio
            )));
        }
        if !(self.eps.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!("|ε| = {} must be < 1", self.eps)));
        }
        Ok(())
    }
}

/// The plain rectangular π pulse about x.
pub fn rectangular_pi() -> Vec<PulseSegment> {
    vec![PulseSegment { angle: PI, phase: 0.0 }]
}

/// Five-piece composite π pulse `(0.5π)_x (1.12π)_y (0.44π)_{-y} (1.12π)_y (0.5π)_x`.
pub fn composite_pi() -> Vec<PulseSegment> {
    vec![
        PulseSegment { angle: 0.5 * PI, phase: 0.0 },
        PulseSegment { angle: 1.12 * PI, phase: FRAC_PI_2 },
        PulseSegment { angle: 0.44 * PI, phase: -FRAC_PI_2 },
        PulseSegment { angle: 1.12 * PI, phase: FRAC_PI_2 },
        PulseSegment { angle: 0.5 * PI, phase: 0.0 },
    ]
}

pub fn total_angle(seq: &[PulseSegment]) -> f64 {
    seq.iter().map(|s| s.angle).sum()
}

/// Rotating-frame Hamiltonian (rad/s) of a segment driven at Rabi frequency `omega`,
/// together with its duration in seconds.
pub fn segment_hamiltonian(seg: &PulseSegment, err: &ErrorPoint, omega: f64) -> (CMat, f64) {
    let drive = (1.0 + err.eps) * omega / 2.0;
    let h = pauli(Pauli::Z) * C64::from(err.delta_ratio * omega / 2.0)
        + pauli(Pauli::X) * C64::from(drive * seg.phase.cos())
        + pauli(Pauli::Y) * C64::from(drive * seg.phase.sin());
    (h, seg.angle / omega)
}

pub fn segment_propagator(seg: &PulseSegment, err: &ErrorPoint) -> CMat {
    let (h, t) = segment_hamiltonian(seg, err, 1.0);
    expm_2x2(&h, t).expect("segment Hamiltonian is Hermitian by construction")
}

/// Ordered product of segment propagators; the first segment acts first.
pub fn sequence_propagator(seq: &[PulseSegment], err: &ErrorPoint) -> Result<CMat> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(seq
        .iter()
        .fold(identity(2), |acc, seg| segment_propagator(seg, err) * acc))
}

/// Same pulse with every segment phase advanced by `offset`.
pub fn shift_phase(seq: &[PulseSegment], offset: f64) -> Vec<PulseSegment> {
    seq.iter()
        .map(|s| PulseSegment { angle: s.angle, phase: wrap_phase(s.phase + offset) })
        .collect()
}

/// The time-reversed sequence with each rotation inverted (phase + π).
pub fn inverse_sequence(seq: &[PulseSegment]) -> Vec<PulseSegment> {
    seq.iter()
        .rev()
        .map(|s| PulseSegment { angle: s.angle, phase: wrap_phase(s.phase + PI) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DdPattern {
    Cpmg,
    Xy4,
    Kdd,
}

impl DdPattern {
    /// Phase offsets applied to successive π pulses, cycled through the train.
    pub fn phases(self) -> Vec<f64> {
        match self {
            DdPattern::Cpmg => vec![0.0],
            DdPattern::Xy4 => vec![0.0, FRAC_PI_2, 0.0, FRAC_PI_2],
            DdPattern::Kdd => {
                let knill = [FRAC_PI_6, 0.0, FRAC_PI_2, 0.0, FRAC_PI_6];
                [0.0, FRAC_PI_2, 0.0, FRAC_PI_2]
                    .iter()
                    .flat_map(|base| knill.iter().map(move |k| wrap_phase(base + k)))
                    .collect()
            }
        }
    }
}

impl std::str::FromStr for DdPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cpmg" => Ok(DdPattern::Cpmg),
            "xy4" => Ok(DdPattern::Xy4),
            "kdd" => Ok(DdPattern::Kdd),
            other => Err(Error::InvalidParameter(format!("unknown DD pattern `{other}`"))),
        }
    }
}

/// A train `[τ/2 − Π − τ − Π − τ/2]^{N/2}` with instantaneous π operations.
#[derive(Debug, Clone, PartialEq)]
pub struct DdSequence {
    pub n_pulses: usize,
    /// Spacing between consecutive π pulses, seconds.
    pub tau: f64,
    pub pattern: DdPattern,
    pub pulse: Vec<PulseSegment>,
}

impl DdSequence {
    pub fn new(n_pulses: usize, tau: f64, pattern: DdPattern, pulse: Vec<PulseSegment>) -> Result<Self> {
        let dd = DdSequence { n_pulses, tau, pattern, pulse };
        dd.validate()?;
        Ok(dd)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 || !self.n_pulses.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "pulse number {} must be even and positive",
                self.n_pulses
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau {} must be positive", self.tau)));
        }
        let period = self.pattern.phases().len();
        if !self.n_pulses.is_multiple_of(period) {
            return Err(Error::InvalidParameter(format!(
                "{:?} needs N to be a multiple of {period}",
                self.pattern
            )));
        }
        if self.pulse.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(())
    }

    /// Realized propagator of every π pulse in the train, in order.
    pub fn pulse_propagators(&self, err: &ErrorPoint) -> Result<Vec<CMat>> {
        let phases = self.pattern.phases();
        let distinct: Vec<CMat> = phases
            .iter()
            .map(|&p| sequence_propagator(&shift_phase(&self.pulse, p), err))
            .collect::<Result<_>>()?;
        Ok((0..self.n_pulses).map(|k| distinct[k % phases.len()].clone()).collect())
    }
}

/// Propagator of a decoupling train. `free_h` acts on `electron ⊗ bath` with the
/// electron as the leading factor; π pulses act as `Π ⊗ I_bath`.
pub fn dd_propagator(dd: &DdSequence, err: &ErrorPoint, free_h: &CMat) -> Result<CMat> {
    dd.validate()?;
    let dim = free_h.nrows();
    if dim < 2 || !dim.is_multiple_of(2) || !free_h.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "free Hamiltonian of dimension {}x{} cannot host a qubit factor",
            free_h.nrows(),
            free_h.ncols()
        )));
    }
    let bath_id = identity(dim / 2);
    let half = expm_dense(free_h, dd.tau / 2.0)?;
    let full = &half * &half;
    let pulses: Vec<CMat> = dd
        .pulse_propagators(err)?
        .iter()
        .map(|p| kron(p, &bath_id))
        .collect();
    let mut u = identity(dim);
    for pair in pulses.chunks(2) {
        u = &half * &pair[1] * &full * &pair[0] * &half * u;
    }
    Ok(u)
}

/// Damped nutation `P0(t) = 1 − (C/2)(1 − cos 2π f t)·exp(−t/T1ρ)` on a uniform grid.
pub fn simulate_rabi(rabi_hz: f64, t_max: f64, t1rho: f64, contrast: f64, n_points: usize) -> Result<SweepResult> {
    for (name, v) in [("rabi frequency", rabi_hz), ("t_max", t_max), ("T1rho", t1rho), ("contrast", contrast)] {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
    }
    if n_points < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let mut out = SweepResult::new(["t_s", "p0"]);
    out.meta("rabi_hz", rabi_hz);
    out.meta("t1rho_s", t1rho);
    out.meta("contrast", contrast);
    for i in 0..n_points {
        let t = t_max * i as f64 / (n_points - 1) as f64;
        out.push(vec![t, rabi_population(rabi_hz, t1rho, contrast, t)]);
    }
    Ok(out)
}

pub fn rabi_population(rabi_hz: f64, t1rho: f64, contrast: f64, t: f64) -> f64 {
    1.0 - contrast / 2.0 * (1.0 - (TAU * rabi_hz * t).cos()) * (-t / t1rho).exp()
}

/// Transition amplitude `|⟨1|U|0⟩|`.
pub fn flip_amplitude(u: &CMat) -> f64 {
    u[(1, 0)].norm()
}
