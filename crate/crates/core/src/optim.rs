//! Gradient-ascent design of composite π pulses.
//!
//! The parameter vector interleaves `(angle, phase)` per segment. Gradients are
//! central finite differences; each iteration runs a backtracking line search
//! along the normalized gradient and only accepts strict improvements, so the
//! recorded objective history never decreases.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{sequence_propagator, total_angle, wrap_phase, PulseSegment};
use crate::error::{Error, Result};
use crate::evalfn::{ensemble_average, f_qs_unitary, ErrorGrid};

/// Finite-difference step on every parameter, radians.
pub const FD_STEP: f64 = 1e-6;
const MIN_ANGLE: f64 = 1e-6;
const MAX_FAILED_SEARCHES: usize = 10;
const HALVINGS: usize = 30;
const FLAT_GRADIENT: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub n_segments: usize,
    pub grid: ErrorGrid,
    pub max_iters: usize,
    pub step_init: f64,
    pub tol: f64,
    pub duration_penalty: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            n_segments: 5,
            grid: ErrorGrid::uniform((-0.5, 0.5), 9, (-0.1, 0.1), 5).expect("static grid"),
            max_iters: 400,
            step_init: 0.5,
            tol: 1e-10,
            duration_penalty: 0.0,
            seed: 7,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(Error::InvalidParameter("need at least one segment".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if !(self.step_init > 0.0) {
            return Err(Error::InvalidParameter("step_init must be positive".into()));
        }
        if !(self.duration_penalty >= 0.0) {
            return Err(Error::InvalidParameter("duration_penalty must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimStatus {
    Converged,
    MaxIters,
    /// No line search ever improved on the initial sequence; the initial
    /// sequence is returned unchanged.
    NoImprovement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub seq: Vec<PulseSegment>,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub status: OptimStatus,
    pub iterations: usize,
}

impl OptimResult {
    pub fn objective(&self) -> f64 {
        *self.history.last().expect("history starts with the initial objective")
    }
}

/// Mean `F_QS` over the grid minus `duration_penalty·Σθ/π`.
pub fn objective(seq: &[PulseSegment], grid: &ErrorGrid, duration_penalty: f64) -> f64 {
    let mean = ensemble_average(
        |p| {
            let u = sequence_propagator(seq, p).expect("non-empty sequence");
            f_qs_unitary(&u).expect("segment propagators are unitary")
        },
        grid,
    );
    mean - duration_penalty * total_angle(seq) / PI
}

pub fn to_params(seq: &[PulseSegment]) -> Vec<f64> {
    seq.iter().flat_map(|s| [s.angle, s.phase]).collect()
}

/// Inverse of [`to_params`] without projection; used for gradient probes.
fn raw_segments(x: &[f64]) -> Vec<PulseSegment> {
    x.chunks(2).map(|c| PulseSegment { angle: c[0], phase: c[1] }).collect()
}

/// Clamps angles into `(0, 2π]` and wraps phases.
pub fn from_params(x: &[f64]) -> Vec<PulseSegment> {
    x.chunks(2)
        .map(|c| PulseSegment { angle: c[0].clamp(MIN_ANGLE, TAU), phase: wrap_phase(c[1]) })
        .collect()
}

/// Central-difference gradient of [`objective`] with respect to the interleaved
/// parameters.
pub fn fd_gradient(seq: &[PulseSegment], grid: &ErrorGrid, duration_penalty: f64) -> Vec<f64> {
    let x = to_params(seq);
    (0..x.len())
        .map(|k| {
            let (mut hi, mut lo) = (x.clone(), x.clone());
            hi[k] += FD_STEP;
            lo[k] -= FD_STEP;
            let f_hi = objective(&raw_segments(&hi), grid, duration_penalty);
            let f_lo = objective(&raw_segments(&lo), grid, duration_penalty);
            (f_hi - f_lo) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Seeded random start: angles uniform in `(0.2π, 1.5π)`, phases in `[−π, π]`.
pub fn random_init(n_segments: usize, seed: u64) -> Vec<PulseSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_segments)
        .map(|_| PulseSegment {
            angle: rng.random_range(0.2 * PI..1.5 * PI),
            phase: rng.random_range(-PI..=PI),
        })
        .collect()
}

/// Runs the ascent from `init`, or from [`random_init`] with the configured
/// seed and segment count.
pub fn grad_ascent(config: &OptimConfig, init: Option<&[PulseSegment]>) -> Result<OptimResult> {
    config.validate()?;
    let start: Vec<PulseSegment> = match init {
        Some(seq) => {
            if seq.is_empty() {
                return Err(Error::EmptySequence);
            }
            for s in seq {
                s.validate()?;
            }
            seq.to_vec()
        }
        None => random_init(config.n_segments, config.seed),
    };
    let obj = |s: &[PulseSegment]| objective(s, &config.grid, config.duration_penalty);

    let mut seq = start.clone();
    let mut f = obj(&seq);
    let mut history = vec![f];
    let mut step = config.step_init;
    let mut failures = 0;
    let mut accepted_any = false;
    let mut iterations = 0;
    let mut status = OptimStatus::MaxIters;

    while iterations < config.max_iters {
        iterations += 1;
        let g = fd_gradient(&seq, &config.grid, config.duration_penalty);
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < FLAT_GRADIENT {
            status = OptimStatus::Converged;
            break;
        }
        let x = to_params(&seq);
        let mut s = step;
        let mut next = None;
        for _ in 0..HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + s * gi / gnorm).collect();
            let cand = from_params(&trial);
            let fc = obj(&cand);
            if fc > f {
                next = Some((cand, fc));
                break;
            }
            s *= 0.5;
        }
        match next {
            Some((cand, fc)) => {
                let gain = fc - f;
                seq = cand;
                f = fc;
                history.push(f);
                accepted_any = true;
                failures = 0;
                step = config.step_init;
                if gain < config.tol {
                    status = OptimStatus::Converged;
                    break;
                }
            }
            None => {
                failures += 1;
                step *= 0.1;
                if failures >= MAX_FAILED_SEARCHES {
                    status = if accepted_any || gnorm < 1e-4 {
                        OptimStatus::Converged
                    } else {
                        OptimStatus::NoImprovement
                    };
                    break;
                }
            }
        }
    }
    if status == OptimStatus::NoImprovement {
        return Ok(OptimResult { seq: start, history, status, iterations });
    }
    Ok(OptimResult { seq, history, status, iterations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub final_objective: f64,
}

/// On-disk pulse description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseFile {
    pub segments: Vec<PulseSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl PulseFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PulseFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.segments.is_empty() {
            return Err(Error::EmptySequence);
        }
        for s in &file.segments {
            s.validate()?;
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{composite_pi, rectangular_pi, ErrorPoint};

    #[test]
    fn objective_values() {
        let single = ErrorGrid::single(ErrorPoint::IDEAL);
        assert!((objective(&rectangular_pi(), &single, 0.0) - 1.0).abs() < 1e-14);
        let comp = composite_pi();
        assert!((objective(&comp, &single, 0.0) - 1.0).abs() < 1e-10);
        let grid = ErrorGrid::uniform((0.0, 1.0), 5, (0.0, 0.0), 1).unwrap();
        let diff = objective(&comp, &grid, 0.0) - objective(&comp, &grid, 0.01);
        assert!((diff - 0.0368).abs() < 1e-12);
    }

    #[test]
    fn optimal_start_converges_immediately() {
        let cfg = OptimConfig { grid: ErrorGrid::single(ErrorPoint::IDEAL), ..OptimConfig::default() };
        let res = grad_ascent(&cfg, Some(&rectangular_pi())).unwrap();
        assert_eq!(res.status, OptimStatus::Converged);
        assert!(res.iterations <= 1);
        assert!((res.objective() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn params_round_trip() {
        let seq = composite_pi();
        assert_eq!(from_params(&to_params(&seq)), seq);
        let clamped = from_params(&[7.0, 4.0, -1.0, 0.0]);
        assert_eq!(clamped[0].angle, TAU);
        assert!((clamped[0].phase - (4.0 - TAU)).abs() < 1e-15);
        assert_eq!(clamped[1].angle, MIN_ANGLE);
    }

    #[test]
    fn random_init_ranges() {
        let a = random_init(50, 3);
        assert_eq!(a, random_init(50, 3));
        assert!(a.iter().all(|s| s.angle > 0.2 * PI && s.angle < 1.5 * PI && s.phase.abs() <= PI));
    }

    #[test]
    fn short_run_improves() {
        let cfg = OptimConfig {
            grid: ErrorGrid::uniform((-0.3, 0.3), 3, (0.0, 0.0), 1).unwrap(),
            max_iters: 15,
            n_segments: 3,
            ..OptimConfig::default()
        };
        let res = grad_ascent(&cfg, None).unwrap();
        assert!(res.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(res.objective() >= res.history[0]);
    }

    #[test]
    fn pulse_json() {
        let file = PulseFile {
            segments: composite_pi(),
            provenance: Some(Provenance { config_hash: "ab".into(), seed: 1, final_objective: 0.9 }),
        };
        let text = file.to_json();
        assert!(text.contains("\"angle_rad\""));
        assert_eq!(PulseFile::from_json(&text).unwrap(), file);
        let bare = PulseFile::from_json(r#"{"segments":[{"angle_rad":3.14,"phase_rad":0.0}]}"#).unwrap();
        assert!(bare.provenance.is_none());
        assert!(PulseFile::from_json(r#"{"segments":[]}"#).is_err());
        assert!(PulseFile::from_json(r#"{"segments":[{"angle_rad":-1.0,"phase_rad":0.0}]}"#).is_err());
    }
}
