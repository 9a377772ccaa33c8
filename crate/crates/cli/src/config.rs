//! Run configuration: a TOML file with one section per command, plus
//! command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fqs_core::control::{composite_pi, rectangular_pi, PulseSegment};
use fqs_core::optim::PulseFile;
use fqs_core::sense::SensorParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; absent or 0 means one per core. Never affects output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub format: Format,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub fidelity_map: FidelityMapConfig,
    pub optimize: OptimizeConfig,
    pub echo_sense: EchoSenseConfig,
    pub nmr: NmrConfigFile,
    pub qpt: QptConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: None,
            format: Format::Csv,
            out: None,
            fidelity_map: FidelityMapConfig::default(),
            optimize: OptimizeConfig::default(),
            echo_sense: EchoSenseConfig::default(),
            nmr: NmrConfigFile::default(),
            qpt: QptConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityMapConfig {
    pub pulse: String,
    pub delta: [f64; 2],
    pub n_delta: usize,
    pub eps: [f64; 2],
    pub n_eps: usize,
}

impl Default for FidelityMapConfig {
    fn default() -> Self {
        FidelityMapConfig { pulse: "composite".into(), delta: [0.0, 1.0], n_delta: 21, eps: [0.0, 0.0], n_eps: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    /// `random`, or a pulse name or JSON path to start from.
    pub init: String,
    pub n_segments: usize,
    pub delta: [f64; 2],
    pub n_delta: usize,
    pub eps: [f64; 2],
    pub n_eps: usize,
    pub max_iters: usize,
    pub step_init: f64,
    pub tol: f64,
    pub duration_penalty: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            init: "random".into(),
            n_segments: 5,
            delta: [-0.5, 0.5],
            n_delta: 9,
            eps: [-0.1, 0.1],
            n_eps: 5,
            max_iters: 400,
            step_init: 0.5,
            tol: 1e-10,
            duration_penalty: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoSenseConfig {
    pub pulse: String,
    pub delta: [f64; 2],
    pub n_delta: usize,
    pub eps: f64,
    /// Free precession time; defaults to `T2/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_sense: Option<f64>,
    pub shots: u64,
    pub n_bias: usize,
    pub sensor: SensorParams,
}

impl Default for EchoSenseConfig {
    fn default() -> Self {
        EchoSenseConfig {
            pulse: "rect".into(),
            delta: [0.0, 1.0],
            n_delta: 5,
            eps: 0.0,
            t_sense: None,
            shots: 100_000_000,
            n_bias: 9,
            sensor: SensorParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NmrMode {
    Tau,
    N,
    Scaling,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmrConfigFile {
    pub mode: NmrMode,
    pub pulse: String,
    pub pattern: String,
    pub n_pulses: usize,
    pub field_gauss: f64,
    /// Hyperfine vectors `(A_x, A_y, A_z)` per nucleus, Hz.
    pub hyperfine_hz: Vec<[f64; 3]>,
    /// Pulse spacing; defaults to the first resonance of the first nucleus.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Spacing scan range; defaults to 0.6–1.4 × `tau`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_range: Option<[f64; 2]>,
    pub n_points: usize,
    pub n_values: Vec<usize>,
    pub delta_ratios: Vec<f64>,
    /// Pulse error used by the `tau` and `n` modes.
    pub delta_ratio: f64,
    pub eps: f64,
    pub rabi_hz: f64,
    pub electron_detuning_hz: f64,
    /// `none`, `gaussian` (uses `t2_star`) or `complete`.
    pub spread: String,
    pub t2_star: f64,
    /// `spacing` or `decoupled`.
    pub reference: String,
    /// Baseline spacing for `reference = "spacing"`; defaults to 1.3π/ω̄.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_tau: Option<f64>,
    /// `ħ/k_B T` in seconds for a thermal bath; absent means maximally mixed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal_beta: Option<f64>,
}

impl Default for NmrConfigFile {
    fn default() -> Self {
        NmrConfigFile {
            mode: NmrMode::Tau,
            pulse: "rect".into(),
            pattern: "CPMG".into(),
            n_pulses: 16,
            field_gauss: 380.0,
            hyperfine_hz: vec![[25e3, 0.0, 40e3], [-15e3, 8e3, -30e3]],
            tau: None,
            tau_range: None,
            n_points: 161,
            n_values: vec![2, 4, 8, 16, 24, 32],
            delta_ratios: vec![0.0, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0],
            delta_ratio: 0.0,
            eps: 0.0,
            rabi_hz: 10e6,
            electron_detuning_hz: 0.0,
            spread: "complete".into(),
            t2_star: 5.6e-6,
            reference: "spacing".into(),
            reference_tau: None,
            thermal_beta: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QptConfig {
    pub pulse: String,
    pub delta_ratio: f64,
    pub eps: f64,
    /// Depolarizing probability applied after the pulse.
    pub depolarizing: f64,
    /// Shots per record; 0 gives exact expectation values.
    pub shots: u64,
}

impl Default for QptConfig {
    fn default() -> Self {
        QptConfig { pulse: "rect".into(), delta_ratio: 0.0, eps: 0.0, depolarizing: 0.0, shots: 10_000 }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// SHA-256 of the effective configuration, leaving out the thread count
    /// and output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.threads = None;
        canonical.out = None;
        let text = toml::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A builtin pulse name or a JSON pulse file (relative paths resolve against `base`).
pub fn resolve_pulse(spec: &str, base: &Path) -> Result<Vec<PulseSegment>, String> {
    match spec {
        "rect" => Ok(rectangular_pi()),
        "composite" => Ok(composite_pi()),
        path => {
            let p = base.join(path);
            let text = std::fs::read_to_string(&p).map_err(|e| format!("pulse file {}: {e}", p.display()))?;
            PulseFile::from_json(&text)
                .map(|f| f.segments)
                .map_err(|e| format!("pulse file {}: {e}", p.display()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.nmr.n_pulses, 16);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap().hash(), cfg.hash());
    }

    #[test]
    fn hash_ignores_threads_and_out() {
        let a = RunConfig::parse("seed = 3").unwrap();
        let b = RunConfig::parse("seed = 3\nthreads = 8\nout = \"x\"").unwrap();
        let c = RunConfig::parse("seed = 4").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = RunConfig::parse("seed = 1\n[nmr]\nn_pulses = \"many\"\n").unwrap_err();
        assert!(err.contains("line 3"), "{err}");
        let err = RunConfig::parse("[qpt]\nbogus = 1\n").unwrap_err();
        assert!(err.contains("line 2") && err.contains("bogus"), "{err}");
    }
}
