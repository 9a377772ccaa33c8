//! Operation-quality metrics for decoupling π pulses.
//!
//! `F_QS` is the probability that an operation flips the sensor about some
//! axis in the equatorial plane. In the Pauli-basis process matrix it is the
//! weight `χ_xx + χ_yy`; for a unitary `ξ` it reduces to
//! `1/2 − Tr(σz ξ σz ξ†)/4`. `F_QC` is the conventional overlap with a fixed
//! target, taken phase-insensitively.

use rayon::prelude::*;

use crate::control::{sequence_propagator, ErrorPoint, PulseSegment};
use crate::error::{Error, Result};
use crate::qcore::{check_unitary, pauli, trace, unitary_to_chi, CMat, Chi, Pauli};
use crate::sweep::{pairwise_sum, SweepResult};

/// Smallest `F_QS` accepted by [`sensitivity_link`].
pub const DEGENERATE_FQS: f64 = 1e-6;

const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorGrid {
    points: Vec<(ErrorPoint, f64)>,
}

impl ErrorGrid {
    /// Builds a grid from non-negative weights, normalizing them to sum to one.
    pub fn new(points: Vec<(ErrorPoint, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("error grid is empty".into()));
        }
        for (p, w) in &points {
            p.validate()?;
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!("grid weight {w} must be non-negative")));
            }
        }
        let weights: Vec<f64> = points.iter().map(|(_, w)| *w).collect();
        let total = pairwise_sum(&weights);
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("grid weights sum to zero".into()));
        }
        Ok(ErrorGrid { points: points.into_iter().map(|(p, w)| (p, w / total)).collect() })
    }

    pub fn single(point: ErrorPoint) -> Self {
        ErrorGrid { points: vec![(point, 1.0)] }
    }

    /// Equal-weight rectangular grid, `n_delta × n_eps` points including the ends.
    pub fn uniform(delta: (f64, f64), n_delta: usize, eps: (f64, f64), n_eps: usize) -> Result<Self> {
        let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
            if n <= 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            }
        };
        let mut pts = Vec::with_capacity(n_delta * n_eps);
        for d in axis(delta, n_delta) {
            for e in axis(eps, n_eps) {
                pts.push((ErrorPoint::new(d, e)?, 1.0));
            }
        }
        ErrorGrid::new(pts)
    }

    /// Gaussian detuning distribution of width `sigma` (in units of Ω) sampled on
    /// `n` equally spaced points over `±n_sigma·sigma`, at fixed amplitude error.
    pub fn gaussian_detuning(sigma: f64, n: usize, n_sigma: f64, eps: f64) -> Result<Self> {
        if !(sigma > 0.0) || n < 2 {
            return Err(Error::InvalidParameter("gaussian grid needs sigma > 0 and n >= 2".into()));
        }
        let span = n_sigma * sigma;
        let pts = (0..n)
            .map(|i| {
                let d = -span + 2.0 * span * i as f64 / (n - 1) as f64;
                Ok((ErrorPoint::new(d, eps)?, (-0.5 * (d / sigma).powi(2)).exp()))
            })
            .collect::<Result<Vec<_>>>()?;
        ErrorGrid::new(pts)
    }

    pub fn points(&self) -> &[(ErrorPoint, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_normalized(chi: &Chi) -> Result<()> {
    let tr = chi.trace();
    if (tr - 1.0).abs() > NORMALIZATION_TOL || chi.hermiticity_error() > NORMALIZATION_TOL {
        return Err(Error::UnnormalizedChannel(tr));
    }
    Ok(())
}

pub fn f_qs(chi: &Chi) -> Result<f64> {
    check_normalized(chi)?;
    Ok((chi.get(Pauli::X, Pauli::X) + chi.get(Pauli::Y, Pauli::Y)).re)
}

/// `1/2 − Tr(σz ξ σz ξ†)/4` for a unitary `ξ`.
pub fn f_qs_unitary(u: &CMat) -> Result<f64> {
    check_unitary(u)?;
    let z = pauli(Pauli::Z);
    Ok(0.5 - trace(&(&z * u * &z * u.adjoint())).re / 4.0)
}

/// Phase-insensitive overlap with a unitary target: `sqrt(Tr(χ·χ_target))`,
/// which equals `|Tr(ξ U†)|/2` when the channel is itself unitary.
pub fn f_qc(chi: &Chi, target: &CMat) -> Result<f64> {
    check_unitary(target).map_err(|e| match e {
        Error::NotUnitary(d) => Error::NotUnitaryTarget(d),
        other => other,
    })?;
    check_normalized(chi)?;
    let chi_t = unitary_to_chi(target)?;
    let overlap = (chi.matrix() * chi_t.matrix()).trace().re;
    Ok(overlap.max(0.0).sqrt())
}

/// `|Tr(ξ U†)|/2` evaluated directly on two unitaries.
pub fn f_qc_unitary(u: &CMat, target: &CMat) -> f64 {
    trace(&(u * target.adjoint())).norm() / 2.0
}

/// Realistic sensitivity `η_r = η_in / F_QS`.
pub fn sensitivity_link(eta_in: f64, fqs: f64) -> Result<f64> {
    if !(fqs > DEGENERATE_FQS) {
        return Err(Error::DegenerateOperation(fqs));
    }
    Ok(eta_in / fqs)
}

/// Weighted mean of `metric` over a grid, reduced in grid order.
pub fn ensemble_average<F>(metric: F, grid: &ErrorGrid) -> f64
where
    F: Fn(&ErrorPoint) -> f64 + Sync,
{
    let terms: Vec<f64> = grid
        .points()
        .par_iter()
        .map(|(p, w)| w * metric(p))
        .collect();
    pairwise_sum(&terms)
}

/// Both metrics of a pulse at one error point; `F_QC` is taken against the
/// pulse's own error-free propagator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointQuality {
    pub point: ErrorPoint,
    pub weight: f64,
    pub f_qs: f64,
    pub f_qc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessProfile {
    pub points: Vec<PointQuality>,
    pub mean_f_qs: f64,
    pub mean_f_qc: f64,
}

impl RobustnessProfile {
    pub fn to_sweep(&self) -> SweepResult {
        let mut out = SweepResult::new(["delta_ratio", "eps", "f_qs", "f_qc"]);
        for q in &self.points {
            out.push(vec![q.point.delta_ratio, q.point.eps, q.f_qs, q.f_qc]);
        }
        out.meta("mean_f_qs", crate::sweep::format_sig(self.mean_f_qs, 9));
        out.meta("mean_f_qc", crate::sweep::format_sig(self.mean_f_qc, 9));
        out
    }
}

/// Evaluates `F_QS` and `F_QC` of a realized pulse on every grid point.
pub fn point_quality(seq: &[PulseSegment], point: &ErrorPoint, target: &CMat) -> Result<(f64, f64)> {
    let u = sequence_propagator(seq, point)?;
    let chi = unitary_to_chi(&u)?;
    Ok((f_qs(&chi)?, f_qc(&chi, target)?))
}

pub fn robustness_profile(seq: &[PulseSegment], grid: &ErrorGrid) -> Result<RobustnessProfile> {
    let target = sequence_propagator(seq, &ErrorPoint::IDEAL)?;
    let points = grid
        .points()
        .par_iter()
        .map(|(p, w)| {
            let (fs, fc) = point_quality(seq, p, &target)?;
            Ok(PointQuality { point: *p, weight: *w, f_qs: fs, f_qc: fc })
        })
        .collect::<Result<Vec<_>>>()?;
    let qs: Vec<f64> = points.iter().map(|q| q.weight * q.f_qs).collect();
    let qc: Vec<f64> = points.iter().map(|q| q.weight * q.f_qc).collect();
    Ok(RobustnessProfile { mean_f_qs: pairwise_sum(&qs), mean_f_qc: pairwise_sum(&qc), points })
}

/// `F_QS` of a realized pulse at a single error point.
pub fn pulse_f_qs(seq: &[PulseSegment], point: &ErrorPoint) -> Result<f64> {
    f_qs(&unitary_to_chi(&sequence_propagator(seq, point)?)?)
}

/// Closed form of `F_QS` for a rectangular π pulse at zero amplitude error.
pub fn rect_pi_f_qs_closed_form(delta_ratio: f64) -> f64 {
    let g = 1.0 + delta_ratio * delta_ratio;
    (1.0 - (std::f64::consts::PI * g.sqrt()).cos()) / (2.0 * g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{composite_pi, rectangular_pi};
    use crate::qcore::{expm_2x2, identity, C64};

    #[test]
    fn f_qs_limits() {
        let chi = unitary_to_chi(&pauli(Pauli::X)).unwrap();
        assert!((f_qs(&chi).unwrap() - 1.0).abs() < 1e-15);
        let chi = unitary_to_chi(&identity(2)).unwrap();
        assert!(f_qs(&chi).unwrap().abs() < 1e-15);
        assert!((f_qs_unitary(&identity(2)).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn rect_at_unit_detuning() {
        let err = ErrorPoint::new(1.0, 0.0).unwrap();
        let u = sequence_propagator(&rectangular_pi(), &err).unwrap();
        // brute force: build H, exponentiate, read off χ
        let h = (pauli(Pauli::Z) + pauli(Pauli::X)) * C64::from(0.5);
        let u_direct = expm_2x2(&h, std::f64::consts::PI).unwrap();
        let chi = unitary_to_chi(&u_direct).unwrap();
        let expect = (1.0 - (std::f64::consts::PI * 2f64.sqrt()).cos()) / 4.0;
        assert!((f_qs(&chi).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 0.3166).abs() < 1e-4);
        let fqc = f_qc(&chi, &pauli(Pauli::X)).unwrap();
        let closed = (std::f64::consts::PI * 2f64.sqrt() / 2.0).sin() / 2f64.sqrt();
        assert!((fqc - closed).abs() < 1e-12);
        assert!((fqc - 0.563).abs() < 1e-3);
        assert!((f_qc_unitary(&u, &pauli(Pauli::X)) - closed).abs() < 1e-12);
    }

    #[test]
    fn f_qc_edges() {
        let chi = unitary_to_chi(&pauli(Pauli::Y)).unwrap();
        assert!((f_qc(&chi, &pauli(Pauli::Y)).unwrap() - 1.0).abs() < 1e-12);
        let chi = unitary_to_chi(&identity(2)).unwrap();
        assert!(f_qc(&chi, &pauli(Pauli::X)).unwrap() < 1e-12);
        let bad = pauli(Pauli::X) * C64::from(2.0);
        assert!(matches!(f_qc(&chi, &bad), Err(Error::NotUnitaryTarget(_))));
    }

    #[test]
    fn unnormalized_rejected() {
        let chi = Chi::from_matrix(Chi::identity_channel().matrix() * C64::from(2.0));
        assert!(matches!(f_qs(&chi), Err(Error::UnnormalizedChannel(_))));
    }

    #[test]
    fn sensitivity_link_cases() {
        assert!((sensitivity_link(41e-9, 1.0).unwrap() - 41e-9).abs() < 1e-20);
        assert!((sensitivity_link(41e-9, 0.5).unwrap() - 82e-9).abs() < 1e-20);
        assert!(matches!(sensitivity_link(41e-9, 1e-7), Err(Error::DegenerateOperation(_))));
    }

    #[test]
    fn profile_single_point() {
        let p = robustness_profile(&rectangular_pi(), &ErrorGrid::single(ErrorPoint::IDEAL)).unwrap();
        assert!((p.points[0].f_qs - 1.0).abs() < 1e-12);
        assert!((p.points[0].f_qc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composite_at_full_detuning() {
        let grid = ErrorGrid::single(ErrorPoint::new(1.0, 0.0).unwrap());
        let p = robustness_profile(&composite_pi(), &grid).unwrap();
        assert!(p.points[0].f_qs >= 0.9, "{}", p.points[0].f_qs);
        assert!(p.points[0].f_qc < 0.3);
    }

    #[test]
    fn rect_monotone_decrease() {
        let vals: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&r| pulse_f_qs(&rectangular_pi(), &ErrorPoint::new(r, 0.0).unwrap()).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    #[test]
    fn ensemble_cases() {
        let metric = |p: &ErrorPoint| pulse_f_qs(&rectangular_pi(), p).unwrap();
        assert!((ensemble_average(metric, &ErrorGrid::single(ErrorPoint::IDEAL)) - 1.0).abs() < 1e-12);
        let two = ErrorGrid::new(vec![
            (ErrorPoint::new(0.4, 0.0).unwrap(), 1.0),
            (ErrorPoint::new(-0.4, 0.0).unwrap(), 1.0),
        ])
        .unwrap();
        let plus = metric(&ErrorPoint::new(0.4, 0.0).unwrap());
        let minus = metric(&ErrorPoint::new(-0.4, 0.0).unwrap());
        assert!((plus - minus).abs() < 1e-12);
        assert!((ensemble_average(metric, &two) - plus).abs() < 1e-12);
        let gauss = ErrorGrid::gaussian_detuning(0.3, 41, 3.0, 0.0).unwrap();
        let comp = ensemble_average(|p| pulse_f_qs(&composite_pi(), p).unwrap(), &gauss);
        let rect = ensemble_average(metric, &gauss);
        assert!(comp >= rect, "{comp} < {rect}");
    }

    #[test]
    fn grid_construction() {
        let g = ErrorGrid::uniform((-0.5, 0.5), 9, (-0.1, 0.1), 5).unwrap();
        assert_eq!(g.len(), 45);
        let total: f64 = g.points().iter().map(|(_, w)| w).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(ErrorGrid::new(vec![]).is_err());
        assert!(ErrorGrid::new(vec![(ErrorPoint::IDEAL, -1.0)]).is_err());
    }
}
