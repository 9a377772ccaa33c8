//! Averaging over a quasi-static Gaussian phase offset.
//!
//! A static electron detuning `δ` enters every free-evolution block through
//! `exp(-i δ t |1⟩⟨1|)`. When all free intervals are integer multiples of a
//! unit `t_u`, a signal is a real trigonometric polynomial in `β = δ·t_u` whose
//! degree is the total free time in units of `t_u`. Sampling `2D+1` equally
//! spaced phases recovers its Fourier coefficients exactly, and the Gaussian
//! average of harmonic `m` is `exp(-m²s²/2)`.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::sweep::pairwise_sum;

/// Distribution of the quasi-static phase `β` per unit interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseSpread {
    /// Fixed phase, no averaging.
    None,
    /// Gaussian with the given standard deviation (radians).
    Gaussian(f64),
    /// Infinitely broad: only the refocused (zero-frequency) component survives.
    Complete,
}

/// `E[f(mean + β)]` for `β` distributed per `spread`, where `f` is a real
/// trigonometric polynomial of degree at most `degree`.
pub fn average_phase<F>(degree: usize, mean: f64, spread: PhaseSpread, f: F) -> f64
where
    F: Fn(f64) -> f64 + Sync,
{
    if spread == PhaseSpread::None {
        return f(mean);
    }
    let m = 2 * degree + 1;
    let samples: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| f(mean + TAU * j as f64 / m as f64))
        .collect();
    let c0 = pairwise_sum(&samples) / m as f64;
    let std = match spread {
        PhaseSpread::Complete => return c0,
        PhaseSpread::Gaussian(s) => s,
        PhaseSpread::None => unreachable!(),
    };
    let mut total = c0;
    for k in 1..=degree {
        let terms: Vec<f64> = samples
            .iter()
            .enumerate()
            .map(|(j, v)| v * (TAU * (k * j) as f64 / m as f64).cos())
            .collect();
        let re_ck = pairwise_sum(&terms) / m as f64;
        total += 2.0 * re_ck * (-(k as f64 * std).powi(2) / 2.0).exp();
    }
    total
}
