//! CPMG detection of a small nuclear spin bath.
//!
//! The sensor electron and up to five spin-1/2 nuclei evolve under the
//! secular Hamiltonian
//!
//! ```text
//! H = δ·|1⟩⟨1| ⊗ I + |0⟩⟨0| ⊗ H⁽⁰⁾ + |1⟩⟨1| ⊗ H⁽¹⁾
//! H⁽ᵐ⁾ = Σₙ Ω⃗ₙ⁽ᵐ⁾·I⃗ₙ + Σₙ<ₖ Σₐ Jₙₖᵃ Iₙᵃ Iₖᵃ
//! ```
//!
//! with the electron as the leading tensor factor. The sensor starts in `|x⟩`
//! and the reported signal is `s = 2·P(|x⟩) − 1`, so an undisturbed sensor
//! gives `s = 1`.
//!
//! Pulse spacing `τ` is the full interval between consecutive π pulses. The
//! `k`-th coherence dip of a nucleus with mean conditional Larmor frequency
//! `ω̄` sits at `τ = (2k−1)π/ω̄`, i.e. a half-interval of `(2k−1)π/(2ω̄)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use rayon::prelude::*;

use crate::control::{dd_propagator, DdSequence, ErrorPoint};
use crate::dephasing::{average_phase, PhaseSpread};
use crate::error::{Error, Result};
use crate::evalfn::pulse_f_qs;
use crate::fit::{gaussian_decay, gaussian_dip, levenberg_marquardt, FitResult};
use crate::qcore::{expm_dense, identity, kron, pauli, projector, trace, CMat, Pauli, C64, ONE, ZERO};
use crate::sweep::SweepResult;

pub const MAX_BATH_SPINS: usize = 5;

/// ¹³C gyromagnetic ratio, rad s⁻¹ G⁻¹ (γ/2π = 1.0705 kHz/G).
pub const GAMMA_C13: f64 = TAU * 1.0705e3;

/// Bare ¹³C Larmor frequency (rad/s) at a field in gauss.
pub fn larmor_c13(field_gauss: f64) -> f64 {
    GAMMA_C13 * field_gauss
}

/// Half-interval `(2k−1)π/(2ω̄)` of the `k`-th resonance.
pub fn resonance_half_spacing(k: usize, omega_bar: f64) -> f64 {
    (2 * k - 1) as f64 * PI / (2.0 * omega_bar)
}

/// Full pulse spacing of the `k`-th resonance, twice [`resonance_half_spacing`].
pub fn resonance_spacing(k: usize, omega_bar: f64) -> f64 {
    2.0 * resonance_half_spacing(k, omega_bar)
}

fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    /// Larmor vectors with the electron in `m_s = 0`, rad/s.
    pub larmor_0: Vec<[f64; 3]>,
    /// Larmor vectors with the electron in `m_s = 1` (Zeeman plus hyperfine), rad/s.
    pub larmor_1: Vec<[f64; 3]>,
    /// Diagonal coupling tensors `(Jxx, Jyy, Jzz)` between pairs, rad/s. Must be
    /// symmetric with a zero diagonal.
    pub couplings: Option<Vec<Vec<[f64; 3]>>>,
}

impl BathSpec {
    /// Uncoupled nuclei at Zeeman frequency `omega_l` along z with hyperfine vectors `hyperfine`.
    pub fn from_hyperfine(omega_l: f64, hyperfine: &[[f64; 3]]) -> Self {
        let zeeman = [0.0, 0.0, omega_l];
        BathSpec {
            larmor_0: vec![zeeman; hyperfine.len()],
            larmor_1: hyperfine
                .iter()
                .map(|a| [a[0], a[1], omega_l + a[2]])
                .collect(),
            couplings: None,
        }
    }

    /// The same nuclei with the hyperfine contrast removed; the electron no
    /// longer sees them.
    pub fn decoupled(&self) -> Self {
        BathSpec { larmor_0: self.larmor_0.clone(), larmor_1: self.larmor_0.clone(), couplings: self.couplings.clone() }
    }

    pub fn n_spins(&self) -> usize {
        self.larmor_0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_spins();
        if n > MAX_BATH_SPINS {
            return Err(Error::DimensionTooLarge { dim: n, max: MAX_BATH_SPINS });
        }
        if self.larmor_1.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} m_s=0 Larmor vectors but {} m_s=1 vectors",
                self.larmor_1.len()
            )));
        }
        if self.larmor_0.iter().chain(&self.larmor_1).flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite Larmor vector".into()));
        }
        if let Some(c) = &self.couplings {
            if c.len() != n || c.iter().any(|row| row.len() != n) {
                return Err(Error::DimensionMismatch(format!("coupling matrix must be {n}x{n}")));
            }
            for i in 0..n {
                if c[i][i] != [0.0; 3] {
                    return Err(Error::InvalidParameter(format!("self-coupling on spin {i}")));
                }
                for j in 0..i {
                    if c[i][j] != c[j][i] {
                        return Err(Error::InvalidParameter(format!("coupling ({i},{j}) is not symmetric")));
                    }
                }
            }
        }
        Ok(())
    }

    /// `(|Ω⃗⁽⁰⁾| + |Ω⃗⁽¹⁾|)/2` for spin `n`.
    pub fn mean_larmor(&self, n: usize) -> f64 {
        0.5 * (norm3(&self.larmor_0[n]) + norm3(&self.larmor_1[n]))
    }
}

/// `I_a` acting on nucleus `n` of an `n_spins` register.
fn spin_op(n_spins: usize, n: usize, a: Pauli) -> CMat {
    (0..n_spins).fold(identity(1), |acc, k| {
        let factor = if k == n { pauli(a) * C64::from(0.5) } else { identity(2) };
        kron(&acc, &factor)
    })
}

fn conditional_hamiltonian(bath: &BathSpec, larmor: &[[f64; 3]]) -> CMat {
    let n = bath.n_spins();
    let dim = 1 << n;
    let axes = [Pauli::X, Pauli::Y, Pauli::Z];
    let ops: Vec<[CMat; 3]> = (0..n)
        .map(|k| axes.map(|a| spin_op(n, k, a)))
        .collect();
    let mut h = CMat::zeros(dim, dim);
    for (k, v) in larmor.iter().enumerate() {
        for a in 0..3 {
            h += &ops[k][a] * C64::from(v[a]);
        }
    }
    if let Some(c) = &bath.couplings {
        for i in 0..n {
            for j in (i + 1)..n {
                for a in 0..3 {
                    if c[i][j][a] != 0.0 {
                        h += &ops[i][a] * &ops[j][a] * C64::from(c[i][j][a]);
                    }
                }
            }
        }
    }
    h
}

/// Secular electron–bath Hamiltonian in rad/s, electron first.
pub fn build_joint_hamiltonian(bath: &BathSpec, electron_detuning: f64) -> Result<CMat> {
    bath.validate()?;
    let h0 = conditional_hamiltonian(bath, &bath.larmor_0);
    let h1 = conditional_hamiltonian(bath, &bath.larmor_1);
    let p0 = projector(&[ONE, ZERO]);
    let p1 = projector(&[ZERO, ONE]);
    let bath_id = identity(h0.nrows());
    Ok(kron(&p0, &h0) + kron(&p1, &h1) + kron(&p1, &bath_id) * C64::from(electron_detuning))
}

/// Initial nuclear state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BathState {
    MaximallyMixed,
    /// `exp(−β H⁽⁰⁾)/Z` with `β = ħ/k_B T` in seconds.
    Thermal { beta: f64 },
}

fn bath_density(bath: &BathSpec, state: BathState) -> Result<CMat> {
    let dim = 1 << bath.n_spins();
    match state {
        BathState::MaximallyMixed => Ok(identity(dim) * C64::from(1.0 / dim as f64)),
        BathState::Thermal { beta } => {
            let h0 = conditional_hamiltonian(bath, &bath.larmor_0);
            let rho = crate::qcore::hermitian_map(&h0, |e| C64::from((-beta * e).exp()))?;
            let z = trace(&rho).re;
            Ok(rho / C64::from(z))
        }
    }
}

/// Quasi-static electron detuning distribution during free evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetuningSpread {
    None,
    /// Gaussian with standard deviation `sigma` in rad/s (`√2/T2*`).
    Gaussian { sigma: f64 },
    /// Broad compared with `1/τ`: only the refocused signal survives.
    Complete,
}

impl DetuningSpread {
    pub fn from_t2_star(t2_star: f64) -> Self {
        DetuningSpread::Gaussian { sigma: std::f64::consts::SQRT_2 / t2_star }
    }

    fn phase_spread(self, tau: f64) -> PhaseSpread {
        match self {
            DetuningSpread::None => PhaseSpread::None,
            DetuningSpread::Gaussian { sigma } => PhaseSpread::Gaussian(sigma * tau / 2.0),
            DetuningSpread::Complete => PhaseSpread::Complete,
        }
    }
}

/// Baseline that a dip depth is measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthReference {
    /// Same sequence at another pulse spacing (seconds) away from any resonance.
    Spacing(f64),
    /// Same sequence with the hyperfine contrast removed.
    Decoupled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmrConfig {
    pub bath: BathSpec,
    pub dd: DdSequence,
    pub err: ErrorPoint,
    /// Mean electron detuning during free evolution, rad/s.
    pub electron_detuning: f64,
    pub spread: DetuningSpread,
    pub bath_state: BathState,
    pub reference: DepthReference,
}

impl NmrConfig {
    pub fn validate(&self) -> Result<()> {
        self.bath.validate()?;
        self.dd.validate()?;
        if let DepthReference::Spacing(t) = self.reference {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("reference spacing {t} must be positive")));
            }
        }
        self.err.validate()
    }
}

fn x_projector() -> CMat {
    let s = C64::from(FRAC_1_SQRT_2);
    projector(&[s, s])
}

/// Probability of finding the sensor back in `|x⟩` at one fixed detuning.
fn x_probability(cfg: &NmrConfig, rho_bath: &CMat, detuning: f64) -> Result<f64> {
    let h = build_joint_hamiltonian(&cfg.bath, detuning)?;
    let u = dd_propagator(&cfg.dd, &cfg.err, &h)?;
    let px = x_projector();
    let rho0 = kron(&px, rho_bath);
    let rho = &u * rho0 * u.adjoint();
    let p = trace(&(kron(&px, &identity(rho_bath.nrows())) * rho));
    debug_assert!(p.im.abs() < 1e-10, "imaginary probability {p}");
    Ok(p.re)
}

/// `s = 2·P(|x⟩) − 1` averaged over the configured detuning spread.
pub fn cpmg_signal(cfg: &NmrConfig) -> Result<f64> {
    cfg.validate()?;
    let rho_bath = bath_density(&cfg.bath, cfg.bath_state)?;
    let tau = cfg.dd.tau;
    let degree = 2 * cfg.dd.n_pulses;
    // probe once outside the averaging closure so errors surface here
    x_probability(cfg, &rho_bath, cfg.electron_detuning)?;
    let p = average_phase(
        degree,
        cfg.electron_detuning * tau / 2.0,
        cfg.spread.phase_spread(tau),
        |beta| x_probability(cfg, &rho_bath, 2.0 * beta / tau).expect("validated above"),
    );
    Ok(2.0 * p - 1.0)
}

/// Baseline signal minus the signal at the configured spacing.
pub fn dip_depth(cfg: &NmrConfig) -> Result<f64> {
    let reference = match cfg.reference {
        DepthReference::Spacing(tau) => NmrConfig { dd: DdSequence { tau, ..cfg.dd.clone() }, ..cfg.clone() },
        DepthReference::Decoupled => NmrConfig { bath: cfg.bath.decoupled(), ..cfg.clone() },
    };
    Ok(cpmg_signal(&reference)? - cpmg_signal(cfg)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DipFit {
    pub center: f64,
    pub depth: f64,
    pub width: f64,
    pub base: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauScan {
    /// Columns `tau_s,signal`.
    pub table: SweepResult,
    pub dips: Vec<DipFit>,
    /// Dips whose lineshape fit failed, with the seed position.
    pub failed: Vec<(f64, Error)>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Local minima below the baseline (90th percentile of the signal), each fitted with a Gaussian over the span
/// where the signal stays below half depth.
pub fn find_dips(taus: &[f64], signal: &[f64]) -> (Vec<DipFit>, Vec<(f64, Error)>) {
    let n = signal.len();
    let (mut dips, mut failed) = (Vec::new(), Vec::new());
    if n < 5 {
        return (dips, failed);
    }
    let mut sorted = signal.to_vec();
    sorted.sort_by(f64::total_cmp);
    let base = sorted[(9 * (n - 1)) / 10];
    let steps: Vec<f64> = signal.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let noise = 1.4826 * median(&steps) / std::f64::consts::SQRT_2;
    let threshold = base - (3.0 * noise).max(1e-3);
    for i in 1..n - 1 {
        if !(signal[i] < signal[i - 1] && signal[i] <= signal[i + 1] && signal[i] < threshold) {
            continue;
        }
        let half = 0.5 * (base + signal[i]);
        let (mut lo, mut hi) = (i, i);
        while lo > 0 && signal[lo - 1] < half && signal[lo - 1] >= signal[lo] {
            lo -= 1;
        }
        while hi + 1 < n && signal[hi + 1] < half && signal[hi + 1] >= signal[hi] {
            hi += 1;
        }
        let span = (hi - lo).max(2);
        let (lo, hi) = (lo.saturating_sub(span / 2 + 1), (hi + span / 2 + 1).min(n - 1));
        if hi - lo + 1 < 5 {
            failed.push((taus[i], Error::FitDidNotConverge("too few points across the dip".into())));
            continue;
        }
        let (xs, ys) = (&taus[lo..=hi], &signal[lo..=hi]);
        let width0 = ((taus[hi] - taus[lo]) / 4.0).max(f64::MIN_POSITIVE);
        let p0 = [base, base - signal[i], taus[i], width0];
        match levenberg_marquardt(gaussian_dip, xs, ys, &p0, 200) {
            Ok(FitResult { params, rms, .. })
                if params[2] >= taus[lo] && params[2] <= taus[hi] && params[1] > 0.0 =>
            {
                dips.push(DipFit { center: params[2], depth: params[1], width: params[3].abs(), base: params[0], rms });
            }
            Ok(_) => failed.push((taus[i], Error::FitDidNotConverge("fitted center left the window".into()))),
            Err(e) => failed.push((taus[i], e)),
        }
    }
    (dips, failed)
}

/// Signal on `n_points` equally spaced spacings over `tau_range`, with dip fits.
pub fn scan_tau(cfg: &NmrConfig, tau_range: (f64, f64), n_points: usize) -> Result<TauScan> {
    let (lo, hi) = tau_range;
    if !(lo > 0.0 && hi > lo) || n_points < 2 {
        return Err(Error::InvalidParameter(format!("bad tau range ({lo}, {hi}) with {n_points} points")));
    }
    let taus: Vec<f64> = (0..n_points).map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64).collect();
    let signal: Vec<f64> = taus
        .par_iter()
        .map(|&tau| {
            let dd = DdSequence { tau, ..cfg.dd.clone() };
            cpmg_signal(&NmrConfig { dd, ..cfg.clone() })
        })
        .collect::<Result<_>>()?;
    let mut table = SweepResult::new(["tau_s", "signal"]);
    table.meta("n_pulses", cfg.dd.n_pulses);
    table.meta("n_spins", cfg.bath.n_spins());
    for (t, s) in taus.iter().zip(&signal) {
        table.push(vec![*t, *s]);
    }
    let (dips, failed) = find_dips(&taus, &signal);
    Ok(TauScan { table, dips, failed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NScan {
    /// Columns `N,dip_depth,fit_a,fit_lambda,fit_b`; the fit parameters repeat on every row.
    pub table: SweepResult,
    pub fit: FitResult,
}

/// Dip depth against pulse number at fixed spacing, fitted with `a·exp(−λN²) + b`.
pub fn scan_n(cfg: &NmrConfig, n_values: &[usize]) -> Result<NScan> {
    if n_values.len() < 3 {
        return Err(Error::InvalidParameter("need at least three pulse numbers".into()));
    }
    let depths: Vec<f64> = n_values
        .par_iter()
        .map(|&n| {
            let dd = DdSequence { n_pulses: n, ..cfg.dd.clone() };
            dip_depth(&NmrConfig { dd, ..cfg.clone() })
        })
        .collect::<Result<_>>()?;
    let ns: Vec<f64> = n_values.iter().map(|&n| n as f64).collect();
    let last = *depths.last().expect("non-empty");
    let first = depths[0];
    let target = 0.5 * (first + last);
    let n_half = ns
        .iter()
        .zip(&depths)
        .find(|(_, d)| (**d - first).abs() >= (target - first).abs())
        .map(|(n, _)| *n)
        .unwrap_or(ns[ns.len() / 2]);
    let p0 = [first - last, std::f64::consts::LN_2 / (n_half * n_half), last];
    let fit = levenberg_marquardt(gaussian_decay, &ns, &depths, &p0, 500)?;
    let mut table = SweepResult::new(["N", "dip_depth", "fit_a", "fit_lambda", "fit_b"]);
    table.meta("tau_s", crate::sweep::format_sig(cfg.dd.tau, 9));
    table.meta("fit_rms", crate::sweep::format_sig(fit.rms, 9));
    for (n, d) in ns.iter().zip(&depths) {
        table.push(vec![*n, *d, fit.params[0], fit.params[1], fit.params[2]]);
    }
    Ok(NScan { table, fit })
}

/// Dip depth at each `Δ/Ω` against the prediction `F_QS^N · depth(0)`.
///
/// The pulse error is `(Δ/Ω, cfg.err.eps)` and the same detuning
/// `Δ = (Δ/Ω)·rabi` shifts the free-evolution electron frequency.
pub fn fqs_scaling_check(cfg: &NmrConfig, delta_ratios: &[f64], rabi: f64) -> Result<SweepResult> {
    if !(rabi > 0.0) {
        return Err(Error::InvalidParameter("rabi frequency must be positive".into()));
    }
    let at = |r: f64| -> Result<(f64, f64)> {
        let err = ErrorPoint::new(r, cfg.err.eps)?;
        let point = NmrConfig { err, electron_detuning: cfg.electron_detuning + r * rabi, ..cfg.clone() };
        Ok((dip_depth(&point)?, pulse_f_qs(&cfg.dd.pulse, &err)?))
    };
    let (depth0, fqs0) = at(0.0)?;
    let rows: Vec<(f64, f64)> = delta_ratios.par_iter().map(|&r| at(r)).collect::<Result<_>>()?;
    let n = cfg.dd.n_pulses as i32;
    let mut table = SweepResult::new(["delta_ratio", "f_qs", "s_delta", "predicted", "difference", "depth_ratio"]);
    table.meta("n_pulses", n);
    table.meta("s_0", crate::sweep::format_sig(depth0, 9));
    for (&r, (depth, fqs)) in delta_ratios.iter().zip(rows) {
        let predicted = (fqs / fqs0).powi(n) * depth0;
        table.push(vec![r, fqs, depth, predicted, depth - predicted, depth / depth0]);
    }
    Ok(table)
}

/// Free-evolution propagator of the joint system, exposed for diagnostics.
pub fn free_propagator(bath: &BathSpec, electron_detuning: f64, t: f64) -> Result<CMat> {
    expm_dense(&build_joint_hamiltonian(bath, electron_detuning)?, t)
}
