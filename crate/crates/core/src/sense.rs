//! Spin-echo AC magnetometry.
//!
//! The sequence is `π/2_x τ/2 Π τ/2 π/2_x` with a square-wave field
//! that changes sign at `Π`. The π/2 pulses are ideal; `Π` is the realized
//! propagator of a pulse under an [`ErrorPoint`]. Each half accumulates the
//! signal phase `±φ/2` (`φ = γ_e·b0·t_sense`) plus a quasi-static offset `β`
//! drawn from the inhomogeneous line, and the coherence decays by
//! `D = exp(−(t_sense/T2)^p)` before the final π/2.
//!
//! Readout reports normalized fluorescence `S = 1 − C·(1 − P0)`, which spans
//! `[1 − C, 1]`. Photon shot noise is Poissonian with mean `n·t_r·S` per shot.

use std::f64::consts::{FRAC_PI_2, SQRT_2, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::control::{sequence_propagator, ErrorPoint, PulseSegment};
use crate::dephasing::{average_phase, PhaseSpread};
use crate::error::{Error, Result};
use crate::evalfn::pulse_f_qs;
use crate::qcore::{expm_2x2, pauli, CMat, Pauli, C64};
use crate::sweep::SweepResult;

/// Number of standard errors the fitted fringe amplitude must exceed.
pub const MIN_SLOPE_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorParams {
    /// Electron gyromagnetic ratio, rad s⁻¹ T⁻¹.
    pub gamma_e: f64,
    pub t2: f64,
    pub stretch_p: f64,
    pub contrast: f64,
    /// Detected photon rate from the bright state, counts/s.
    pub counts_rate: f64,
    pub t_read: f64,
    pub t_overhead: f64,
    /// Free-induction dephasing time; sets the width of the static detuning
    /// distribution `σ_δ = √2/T2*`.
    pub t2_star: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        SensorParams {
            gamma_e: TAU * 28.024e9,
            t2: 0.84e-3,
            stretch_p: 2.0,
            contrast: 0.24,
            counts_rate: 4.8e4,
            t_read: 270e-9,
            t_overhead: 2e-6,
            t2_star: 5.6e-6,
        }
    }
}

impl SensorParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gamma_e", self.gamma_e),
            ("t2", self.t2),
            ("stretch_p", self.stretch_p),
            ("counts_rate", self.counts_rate),
            ("t_read", self.t_read),
            ("t_overhead", self.t_overhead),
            ("t2_star", self.t2_star),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.contrast > 0.0 && self.contrast < 1.0) {
            return Err(Error::InvalidParameter(format!("contrast {} outside (0, 1)", self.contrast)));
        }
        Ok(())
    }

    /// Mean detected photons per readout of the bright state.
    pub fn photons_per_shot(&self) -> f64 {
        self.counts_rate * self.t_read
    }

    pub fn decay(&self, t: f64) -> f64 {
        (-(t / self.t2).powf(self.stretch_p)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoConfig {
    /// Square-wave amplitude, T.
    pub b0: f64,
    /// Total free precession time, s.
    pub t_sense: f64,
    pub pi_pulse: Vec<PulseSegment>,
    pub err: ErrorPoint,
    /// Repetitions averaged into one signal estimate; `0` returns the noiseless value.
    pub shots: u64,
    pub seed: u64,
}

impl EchoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.b0 >= 0.0) || !self.b0.is_finite() {
            return Err(Error::InvalidParameter(format!("b0 {} must be >= 0", self.b0)));
        }
        if !(self.t_sense > 0.0) {
            return Err(Error::InvalidParameter(format!("t_sense {} must be positive", self.t_sense)));
        }
        if self.pi_pulse.is_empty() {
            return Err(Error::EmptySequence);
        }
        self.err.validate()
    }
}

fn rz(theta: f64) -> CMat {
    CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::from_polar(1.0, -theta / 2.0),
        C64::from_polar(1.0, theta / 2.0),
    ]))
}

fn rx_half() -> CMat {
    expm_2x2(&pauli(Pauli::X), FRAC_PI_2 / 2.0).expect("Hermitian")
}

/// Bright-state population after the echo for signal phase `phi`, static phase
/// `beta` per half, realized π propagator `pi_u` and coherence factor `d`.
pub fn echo_population(pi_u: &CMat, phi: f64, beta: f64, d: f64) -> f64 {
    let half = rx_half();
    let mut psi = CMat::zeros(2, 1);
    psi[(0, 0)] = C64::from(1.0);
    let psi = rz(-phi / 2.0 + beta) * pi_u * rz(phi / 2.0 + beta) * &half * psi;
    let mut rho = &psi * psi.adjoint();
    rho[(0, 1)] *= d;
    rho[(1, 0)] *= d;
    let out = &half * rho * half.adjoint();
    out[(0, 0)].re.clamp(0.0, 1.0)
}

/// Fluorescence normalized to the bright level.
pub fn fluorescence(p0: f64, contrast: f64) -> f64 {
    1.0 - contrast * (1.0 - p0)
}

/// Relative population from a fluorescence level and the two reference
/// levels of the bright and dark states.
pub fn normalize_population(signal: f64, bright: f64, dark: f64) -> Result<f64> {
    if !((bright - dark).abs() > 0.0) {
        return Err(Error::InvalidParameter("reference levels coincide".into()));
    }
    Ok((signal - dark) / (bright - dark))
}

fn static_spread(params: &SensorParams, t_sense: f64) -> PhaseSpread {
    PhaseSpread::Gaussian(SQRT_2 / params.t2_star * t_sense / 2.0)
}

fn noiseless_signal(pi_u: &CMat, cfg: &EchoConfig, params: &SensorParams) -> f64 {
    let phi = params.gamma_e * cfg.b0 * cfg.t_sense;
    let d = params.decay(cfg.t_sense);
    let p0 = average_phase(2, 0.0, static_spread(params, cfg.t_sense), |beta| {
        echo_population(pi_u, phi, beta, d)
    });
    fluorescence(p0, params.contrast)
}

/// Shot-noise estimate of `S` from `shots` repetitions: one Poisson draw of the
/// total photon count, normalized by the bright-state expectation.
fn sample_signal(s: f64, shots: u64, params: &SensorParams, seed: u64, stream: u64) -> Result<f64> {
    let expected = shots as f64 * params.photons_per_shot();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let counts = Poisson::new(expected * s)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?
        .sample(&mut rng);
    Ok(counts / expected)
}

/// Normalized echo signal; sampled with photon shot noise when `cfg.shots > 0`.
pub fn echo_signal(cfg: &EchoConfig, params: &SensorParams) -> Result<f64> {
    cfg.validate()?;
    params.validate()?;
    let pi_u = sequence_propagator(&cfg.pi_pulse, &cfg.err)?;
    let s = noiseless_signal(&pi_u, cfg, params);
    if cfg.shots == 0 {
        return Ok(s);
    }
    sample_signal(s, cfg.shots, params, cfg.seed, 0)
}

/// `(1/√(n·t_r)) / (C·γ_e·√(T2/2))`.
pub fn intrinsic_sensitivity(params: &SensorParams) -> f64 {
    (1.0 / params.photons_per_shot().sqrt()) / (params.contrast * params.gamma_e * (params.t2 / 2.0).sqrt())
}

/// Expected η of a perfect-Π echo read out at mid-fringe under the photon
/// shot-noise model.
pub fn shot_noise_limit(params: &SensorParams, t_sense: f64) -> f64 {
    let amp = params.contrast * params.decay(t_sense) / 2.0;
    let level = 1.0 - params.contrast / 2.0;
    let sigma = (level / params.photons_per_shot()).sqrt();
    let k = params.gamma_e * t_sense;
    sigma * (t_sense + params.t_read + params.t_overhead).sqrt() / (k * amp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityEstimate {
    /// T/√Hz.
    pub eta: f64,
    /// Maximum `|dS/dB|`, 1/T.
    pub slope: f64,
    /// Single-shot standard deviation of `S` at the bias point.
    pub sigma: f64,
    /// Field of maximum slope.
    pub bias_b0: f64,
    pub amplitude: f64,
    pub amplitude_std_err: f64,
    /// Sampled signal at every `b0`, in input order.
    pub samples: Vec<f64>,
}

/// Fits `S(b) = A + B cos(kb) + C sin(kb)` with `k = γ_e·t_sense` to shot-noise
/// samples at each `b0`, then returns `σ·√t_cycle / max|dS/dB|`.
pub fn estimate_sensitivity(base: &EchoConfig, b0_values: &[f64], params: &SensorParams) -> Result<SensitivityEstimate> {
    base.validate()?;
    params.validate()?;
    if b0_values.len() < 5 {
        return Err(Error::InvalidParameter(format!("need at least 5 bias fields, got {}", b0_values.len())));
    }
    if base.shots == 0 {
        return Err(Error::InvalidParameter("sensitivity estimate needs shots > 0".into()));
    }
    let k = params.gamma_e * base.t_sense;
    let pi_u = sequence_propagator(&base.pi_pulse, &base.err)?;
    let samples = b0_values
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let cfg = EchoConfig { b0: b, ..base.clone() };
            cfg.validate()?;
            let s = noiseless_signal(&pi_u, &cfg, params);
            sample_signal(s, base.shots, params, base.seed, i as u64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for (&b, &y) in b0_values.iter().zip(&samples) {
        let row = Vector3::new(1.0, (k * b).cos(), (k * b).sin());
        xtx += row * row.transpose();
        xty += row * y;
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("bias fields do not resolve the fringe".into()))?;
    let coef = inv * xty;
    let (a, bc, bs) = (coef[0], coef[1], coef[2]);
    let amplitude = bc.hypot(bs);

    let photons = base.shots as f64 * params.photons_per_shot();
    let point_var = a.max(0.0) / photons;
    let cov_bc = inv.fixed_view::<2, 2>(1, 1) * point_var;
    let amplitude_std_err = if amplitude > 0.0 {
        let u = nalgebra::Vector2::new(bc / amplitude, bs / amplitude);
        (u.transpose() * cov_bc * u)[0].max(0.0).sqrt()
    } else {
        cov_bc[(0, 0)].max(cov_bc[(1, 1)]).sqrt()
    };
    if !(amplitude > MIN_SLOPE_SIGMAS * amplitude_std_err) {
        return Err(Error::SlopeTooSmall { amplitude, std_err: amplitude_std_err });
    }
    let slope = k * amplitude;
    let sigma = (a.max(0.0) / params.photons_per_shot()).sqrt();
    let t_cycle = base.t_sense + params.t_read + params.t_overhead;
    // A + amp·cos(kb − θ) is steepest where kb − θ = π/2
    let theta = bs.atan2(bc);
    let bias_b0 = (theta + FRAC_PI_2).rem_euclid(TAU) / k;
    Ok(SensitivityEstimate {
        eta: sigma * t_cycle.sqrt() / slope,
        slope,
        sigma,
        bias_b0,
        amplitude,
        amplitude_std_err,
        samples,
    })
}

/// `n` bias fields evenly covering half a fringe from zero field.
pub fn half_fringe_bias(params: &SensorParams, t_sense: f64, n: usize) -> Vec<f64> {
    let period = TAU / (params.gamma_e * t_sense);
    (0..n).map(|i| 0.5 * period * i as f64 / (n - 1).max(1) as f64).collect()
}

/// `η_r(rect) / η_r(composite)` at a shared error point and bias sweep.
pub fn relative_enhancement(
    composite: &[PulseSegment],
    rect: &[PulseSegment],
    base: &EchoConfig,
    b0_values: &[f64],
    params: &SensorParams,
) -> Result<f64> {
    let comp = estimate_sensitivity(&EchoConfig { pi_pulse: composite.to_vec(), ..base.clone() }, b0_values, params)?;
    let rect = estimate_sensitivity(&EchoConfig { pi_pulse: rect.to_vec(), ..base.clone() }, b0_values, params)?;
    Ok(rect.eta / comp.eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySweep {
    /// Columns `delta_ratio,eps,eta_r_T_per_sqrtHz,f_qs,eta_r_times_fqs`;
    /// degenerate points carry NaN in the two η columns.
    pub table: SweepResult,
    /// Error points where the fringe slope was not resolved.
    pub degenerate: Vec<ErrorPoint>,
}

/// Runs [`estimate_sensitivity`] at every error point. Each point uses its own
/// noise substream (`seed + index`).
pub fn sensitivity_sweep(
    base: &EchoConfig,
    points: &[ErrorPoint],
    b0_values: &[f64],
    params: &SensorParams,
) -> Result<SensitivitySweep> {
    use rayon::prelude::*;
    let rows: Vec<Result<(Vec<f64>, bool)>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let cfg = EchoConfig { err: *p, seed: base.seed.wrapping_add(i as u64), ..base.clone() };
            let fqs = pulse_f_qs(&base.pi_pulse, p)?;
            match estimate_sensitivity(&cfg, b0_values, params) {
                Ok(est) => Ok((vec![p.delta_ratio, p.eps, est.eta, fqs, est.eta * fqs], false)),
                Err(Error::SlopeTooSmall { .. }) => Ok((vec![p.delta_ratio, p.eps, f64::NAN, fqs, f64::NAN], true)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut table = SweepResult::new(["delta_ratio", "eps", "eta_r_T_per_sqrtHz", "f_qs", "eta_r_times_fqs"]);
    table.meta("gamma_e_rad_per_s_per_T", crate::sweep::format_sig(params.gamma_e, 9));
    table.meta("eta_in_T_per_sqrtHz", crate::sweep::format_sig(intrinsic_sensitivity(params), 9));
    let mut degenerate = Vec::new();
    for (row, p) in rows.into_iter().zip(points) {
        let (row, flagged) = row?;
        if flagged {
            degenerate.push(*p);
        }
        table.push(row);
    }
    Ok(SensitivitySweep { table, degenerate })
}
