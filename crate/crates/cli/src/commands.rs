use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use serde_json::json;

use fqs_core::control::{sequence_propagator, DdPattern, DdSequence, ErrorPoint};
use fqs_core::evalfn::{f_qc, f_qs, robustness_profile, ErrorGrid};
use fqs_core::nmr::{
    fqs_scaling_check, larmor_c13, resonance_spacing, scan_n, scan_tau, BathSpec, BathState, DepthReference,
    DetuningSpread, NmrConfig,
};
use fqs_core::optim::{grad_ascent, OptimConfig, OptimStatus, Provenance, PulseFile};
use fqs_core::qcore::{kraus_to_chi, pauli, CMat, Chi, Pauli, C64};
use fqs_core::sense::{half_fringe_bias, sensitivity_sweep, EchoConfig};
use fqs_core::sweep::{format_sig, SweepResult};
use fqs_core::tomo::{linear_inversion, mle_project, records_to_csv, simulate_tomography};

use crate::config::{resolve_pulse, Format, NmrMode, RunConfig};
use crate::output::{comment_header, json_number, meta_json, write_file, write_table, RunMeta};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Optimizer(String),
    Degenerate(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Optimizer(_) => 3,
            CliError::Degenerate(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Optimizer(m) | CliError::Degenerate(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn config_err(section: &str) -> impl Fn(fqs_core::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("[{section}] {e}"))
}

pub struct Context {
    pub cfg: RunConfig,
    pub base_dir: PathBuf,
    pub out_dir: PathBuf,
    pub meta: RunMeta,
}

impl Context {
    fn format(&self) -> Format {
        self.cfg.format
    }
}

fn axis(range: [f64; 2], n: usize, key: &str) -> Result<Vec<f64>, CliError> {
    if n == 0 {
        return Err(CliError::Config(format!("{key}: need at least one point")));
    }
    if n == 1 {
        return Ok(vec![range[0]]);
    }
    Ok((0..n).map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64).collect())
}

fn pulse(ctx: &Context, spec: &str, section: &str) -> Result<Vec<fqs_core::control::PulseSegment>, CliError> {
    resolve_pulse(spec, &ctx.base_dir).map_err(|e| CliError::Config(format!("[{section}] {e}")))
}

pub fn fidelity_map(ctx: &Context) -> Result<Vec<String>, CliError> {
    let c = &ctx.cfg.fidelity_map;
    let seq = pulse(ctx, &c.pulse, "fidelity_map")?;
    let mut pts = Vec::new();
    for d in axis(c.delta, c.n_delta, "fidelity_map.n_delta")? {
        for e in axis(c.eps, c.n_eps, "fidelity_map.n_eps")? {
            pts.push((ErrorPoint::new(d, e).map_err(config_err("fidelity_map"))?, 1.0));
        }
    }
    let grid = ErrorGrid::new(pts).map_err(config_err("fidelity_map"))?;
    let profile = robustness_profile(&seq, &grid).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut table = profile.to_sweep();
    table.meta("pulse", &c.pulse);
    let path = write_table(&ctx.out_dir, "fidelity_map", &table, &ctx.meta, ctx.format())?;
    Ok(vec![path.display().to_string()])
}

pub fn optimize(ctx: &Context) -> Result<Vec<String>, CliError> {
    let c = &ctx.cfg.optimize;
    let grid = ErrorGrid::uniform((c.delta[0], c.delta[1]), c.n_delta, (c.eps[0], c.eps[1]), c.n_eps)
        .map_err(config_err("optimize"))?;
    let config = OptimConfig {
        n_segments: c.n_segments,
        grid,
        max_iters: c.max_iters,
        step_init: c.step_init,
        tol: c.tol,
        duration_penalty: c.duration_penalty,
        seed: ctx.cfg.seed,
    };
    config.validate().map_err(config_err("optimize"))?;
    let init = match c.init.as_str() {
        "random" => None,
        spec => Some(pulse(ctx, spec, "optimize")?),
    };
    let res = grad_ascent(&config, init.as_deref()).map_err(config_err("optimize"))?;

    let file = PulseFile {
        segments: res.seq.clone(),
        provenance: Some(Provenance {
            config_hash: ctx.meta.config_hash.clone(),
            seed: ctx.cfg.seed,
            final_objective: res.objective(),
        }),
    };
    let mut doc = serde_json::to_value(&file).expect("pulse file serializes");
    doc["metadata"] = meta_json(&ctx.meta);
    doc["status"] = json!(res.status);
    let pulse_path = ctx.out_dir.join("optimize_pulse.json");
    write_file(&pulse_path, &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;

    let mut history = SweepResult::new(["iteration", "objective"]);
    history.meta("status", format!("{:?}", res.status));
    for (i, v) in res.history.iter().enumerate() {
        history.push(vec![i as f64, *v]);
    }
    let hist_path = write_table(&ctx.out_dir, "optimize_history", &history, &ctx.meta, ctx.format())?;
    let written = vec![pulse_path.display().to_string(), hist_path.display().to_string()];
    if res.status == OptimStatus::NoImprovement {
        return Err(CliError::Optimizer(format!(
            "no line search improved the initial objective {}; wrote {}",
            format_sig(res.history[0], 9),
            written.join(", ")
        )));
    }
    Ok(written)
}

pub fn echo_sense(ctx: &Context) -> Result<Vec<String>, CliError> {
    let c = &ctx.cfg.echo_sense;
    c.sensor.validate().map_err(config_err("echo_sense.sensor"))?;
    let seq = pulse(ctx, &c.pulse, "echo_sense")?;
    if c.shots == 0 {
        return Err(CliError::Config("[echo_sense] shots must be positive".into()));
    }
    if c.n_bias < 5 {
        return Err(CliError::Config("[echo_sense] n_bias must be at least 5".into()));
    }
    let points = axis(c.delta, c.n_delta, "echo_sense.n_delta")?
        .into_iter()
        .map(|d| ErrorPoint::new(d, c.eps))
        .collect::<Result<Vec<_>, _>>()
        .map_err(config_err("echo_sense"))?;
    let t_sense = c.t_sense.unwrap_or(c.sensor.t2 / 2.0);
    let base = EchoConfig { b0: 0.0, t_sense, pi_pulse: seq, err: ErrorPoint::IDEAL, shots: c.shots, seed: ctx.cfg.seed };
    base.validate().map_err(config_err("echo_sense"))?;
    let bias = half_fringe_bias(&c.sensor, t_sense, c.n_bias);
    let sweep = sensitivity_sweep(&base, &points, &bias, &c.sensor).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut table = sweep.table;
    table.meta("pulse", &c.pulse);
    table.meta("t_sense_s", format_sig(t_sense, 9));
    table.meta("shots_per_point", c.shots);
    let path = write_table(&ctx.out_dir, "echo_sense", &table, &ctx.meta, ctx.format())?;
    if !sweep.degenerate.is_empty() {
        let pts: Vec<String> = sweep
            .degenerate
            .iter()
            .map(|p| format!("({}, {})", p.delta_ratio, p.eps))
            .collect();
        return Err(CliError::Degenerate(format!(
            "fringe slope unresolved at {}; rows carry NaN in {}",
            pts.join(", "),
            path.display()
        )));
    }
    Ok(vec![path.display().to_string()])
}

fn nmr_config(ctx: &Context) -> Result<(NmrConfig, f64), CliError> {
    let c = &ctx.cfg.nmr;
    let err = config_err("nmr");
    if c.hyperfine_hz.is_empty() {
        return Err(CliError::Config("[nmr] hyperfine_hz needs at least one nucleus".into()));
    }
    let hyperfine: Vec<[f64; 3]> = c.hyperfine_hz.iter().map(|a| a.map(|v| TAU * v)).collect();
    let bath = BathSpec::from_hyperfine(larmor_c13(c.field_gauss), &hyperfine);
    bath.validate().map_err(&err)?;
    let w = bath.mean_larmor(0);
    let tau = c.tau.unwrap_or_else(|| resonance_spacing(1, w));
    let pattern: DdPattern = c.pattern.parse().map_err(&err)?;
    let dd = DdSequence::new(c.n_pulses, tau, pattern, pulse(ctx, &c.pulse, "nmr")?).map_err(&err)?;
    let spread = match c.spread.as_str() {
        "none" => DetuningSpread::None,
        "complete" => DetuningSpread::Complete,
        "gaussian" => {
            if !(c.t2_star > 0.0) {
                return Err(CliError::Config("[nmr] t2_star must be positive".into()));
            }
            DetuningSpread::from_t2_star(c.t2_star)
        }
        other => return Err(CliError::Config(format!("[nmr] unknown spread `{other}`"))),
    };
    let reference = match c.reference.as_str() {
        "spacing" => DepthReference::Spacing(c.reference_tau.unwrap_or(1.3 * PI / w)),
        "decoupled" => DepthReference::Decoupled,
        other => return Err(CliError::Config(format!("[nmr] unknown reference `{other}`"))),
    };
    let bath_state = match c.thermal_beta {
        Some(beta) => BathState::Thermal { beta },
        None => BathState::MaximallyMixed,
    };
    if !(c.rabi_hz > 0.0) {
        return Err(CliError::Config("[nmr] rabi_hz must be positive".into()));
    }
    let cfg = NmrConfig {
        bath,
        dd,
        err: ErrorPoint::new(c.delta_ratio, c.eps).map_err(&err)?,
        electron_detuning: TAU * c.electron_detuning_hz,
        spread,
        bath_state,
        reference,
    };
    cfg.validate().map_err(&err)?;
    Ok((cfg, w))
}

pub fn nmr(ctx: &Context, warnings: &mut Vec<String>) -> Result<Vec<String>, CliError> {
    let c = &ctx.cfg.nmr;
    let (cfg, w) = nmr_config(ctx)?;
    let runtime = |e: fqs_core::Error| CliError::Runtime(e.to_string());
    let mut written = Vec::new();
    match c.mode {
        NmrMode::Tau => {
            let range = c.tau_range.unwrap_or([0.6 * cfg.dd.tau, 1.4 * cfg.dd.tau]);
            let scan = scan_tau(&cfg, (range[0], range[1]), c.n_points).map_err(|e| match e {
                fqs_core::Error::InvalidParameter(m) => CliError::Config(format!("[nmr] {m}")),
                other => runtime(other),
            })?;
            let mut table = scan.table;
            table.meta("mean_larmor_rad_per_s", format_sig(w, 9));
            written.push(write_table(&ctx.out_dir, "nmr_tau", &table, &ctx.meta, ctx.format())?);
            let mut dips = SweepResult::new(["center_s", "half_spacing_s", "depth", "width_s", "base", "rms"]);
            for d in &scan.dips {
                dips.push(vec![d.center, d.center / 2.0, d.depth, d.width, d.base, d.rms]);
            }
            for (seed_tau, e) in &scan.failed {
                warnings.push(format!("dip near tau = {} s: {e}", format_sig(*seed_tau, 9)));
            }
            written.push(write_table(&ctx.out_dir, "nmr_dips", &dips, &ctx.meta, ctx.format())?);
        }
        NmrMode::N => match scan_n(&cfg, &c.n_values) {
            Ok(scan) => written.push(write_table(&ctx.out_dir, "nmr_n", &scan.table, &ctx.meta, ctx.format())?),
            Err(fqs_core::Error::FitDidNotConverge(m)) => warnings.push(format!("N scan fit: {m}")),
            Err(fqs_core::Error::InvalidParameter(m)) => return Err(CliError::Config(format!("[nmr] {m}"))),
            Err(e) => return Err(runtime(e)),
        },
        NmrMode::Scaling => {
            let table = fqs_scaling_check(&cfg, &c.delta_ratios, TAU * c.rabi_hz).map_err(|e| match e {
                fqs_core::Error::InvalidParameter(m) => CliError::Config(format!("[nmr] {m}")),
                other => runtime(other),
            })?;
            written.push(write_table(&ctx.out_dir, "nmr_scaling", &table, &ctx.meta, ctx.format())?);
        }
    }
    Ok(written.iter().map(|p| p.display().to_string()).collect())
}

fn chi_table_csv(chi: &Chi, part: fn(C64) -> f64) -> String {
    let labels = ["I", "X", "Y", "Z"];
    let mut out = String::from("basis,I,X,Y,Z\n");
    for (i, l) in labels.iter().enumerate() {
        out.push_str(l);
        for j in 0..4 {
            out.push(',');
            out.push_str(&format_sig(part(chi.matrix()[(i, j)]), 9));
        }
        out.push('\n');
    }
    out
}

fn chi_json(chi: &Chi, part: fn(C64) -> f64) -> serde_json::Value {
    let rows: Vec<Vec<serde_json::Value>> =
        (0..4).map(|i| (0..4).map(|j| json_number(part(chi.matrix()[(i, j)]))).collect()).collect();
    json!(rows)
}

pub fn qpt(ctx: &Context) -> Result<Vec<String>, CliError> {
    let c = &ctx.cfg.qpt;
    let err = config_err("qpt");
    let seq = pulse(ctx, &c.pulse, "qpt")?;
    if !(0.0..=1.0).contains(&c.depolarizing) {
        return Err(CliError::Config(format!("[qpt] depolarizing {} outside [0, 1]", c.depolarizing)));
    }
    let point = ErrorPoint::new(c.delta_ratio, c.eps).map_err(&err)?;
    let u = sequence_propagator(&seq, &point).map_err(&err)?;
    let target = sequence_propagator(&seq, &ErrorPoint::IDEAL).map_err(&err)?;
    let p = c.depolarizing;
    let kraus: Vec<CMat> = Pauli::ALL
        .iter()
        .map(|&q| {
            let w = if q == Pauli::I { 1.0 - 0.75 * p } else { p / 4.0 };
            pauli(q) * &u * C64::from(w.sqrt())
        })
        .collect();
    let truth = kraus_to_chi(&kraus).map_err(&err)?;
    let records = simulate_tomography(&truth, c.shots, ctx.cfg.seed).map_err(&err)?;
    let raw = linear_inversion(&records).map_err(|e| CliError::Runtime(e.to_string()))?;
    let chi = mle_project(&raw).map_err(|e| CliError::Runtime(e.to_string()))?;
    let rt = |e: fqs_core::Error| CliError::Runtime(e.to_string());
    let mut summary = SweepResult::new(["f_qs", "f_qc", "f_qs_true", "f_qc_true", "raw_min_eigenvalue"]);
    summary.meta("pulse", &c.pulse);
    summary.meta("shots", c.shots);
    summary.push(vec![
        f_qs(&chi).map_err(rt)?,
        f_qc(&chi, &target).map_err(rt)?,
        f_qs(&truth).map_err(rt)?,
        f_qc(&truth, &target).map_err(rt)?,
        raw.min_eigenvalue(),
    ]);

    let re = |z: C64| z.re;
    let im = |z: C64| z.im;
    let mut written: Vec<PathBuf> = Vec::new();
    match ctx.format() {
        Format::Csv => {
            let header = comment_header(&ctx.meta);
            for (name, body) in [
                ("qpt_records.csv", records_to_csv(&records)),
                ("qpt_chi_re.csv", chi_table_csv(&chi, re)),
                ("qpt_chi_im.csv", chi_table_csv(&chi, im)),
            ] {
                let path = ctx.out_dir.join(name);
                write_file(&path, &format!("{header}{body}"))?;
                written.push(path);
            }
            written.push(write_table(&ctx.out_dir, "qpt_summary", &summary, &ctx.meta, Format::Csv)?);
        }
        Format::Json => {
            let recs: Vec<serde_json::Value> = records
                .iter()
                .map(|r| {
                    json!({
                        "input": r.input.to_string(),
                        "observable": r.observable.to_string(),
                        "mean": json_number(r.mean),
                        "shots": r.shots,
                    })
                })
                .collect();
            let doc = json!({
                "metadata": meta_json(&ctx.meta),
                "records": recs,
                "chi_re": chi_json(&chi, re),
                "chi_im": chi_json(&chi, im),
                "summary": crate::output::table_json(&summary, &ctx.meta),
            });
            let path = ctx.out_dir.join("qpt.json");
            write_file(&path, &(serde_json::to_string_pretty(&doc).expect("json") + "\n"))?;
            written.push(path);
        }
    }
    Ok(written.iter().map(|p| p.display().to_string()).collect())
}

pub fn base_dir(config_path: Option<&Path>) -> PathBuf {
    config_path
        .and_then(|p| p.parent())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
