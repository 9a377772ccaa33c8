//! Small Levenberg–Marquardt least-squares fitter and the two lineshapes used
//! by the NMR analysis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// Root-mean-square residual.
    pub rms: f64,
    pub iterations: usize,
}

/// Minimizes `Σ (y_i − model(x_i, p))²` starting from `p0`. The Jacobian is
/// taken by central differences with steps scaled to each parameter.
pub fn levenberg_marquardt<F>(model: F, xs: &[f64], ys: &[f64], p0: &[f64], max_iters: usize) -> Result<FitResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch(format!("{} abscissae vs {} values", xs.len(), ys.len())));
    }
    let (m, n) = (xs.len(), p0.len());
    if m < n {
        return Err(Error::FitDidNotConverge(format!("{m} points cannot fix {n} parameters")));
    }
    let residuals = |p: &[f64]| -> DVector<f64> { DVector::from_fn(m, |i, _| ys[i] - model(xs[i], p)) };
    let cost = |r: &DVector<f64>| r.norm_squared();

    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let mut c = cost(&r);
    if !c.is_finite() {
        return Err(Error::FitDidNotConverge("initial guess gives non-finite residuals".into()));
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut jac = DMatrix::<f64>::zeros(m, n);
        for k in 0..n {
            let h = 1e-7 * p[k].abs().max(1e-7);
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi[k] += h;
            lo[k] -= h;
            for i in 0..m {
                jac[(i, k)] = (model(xs[i], &hi) - model(xs[i], &lo)) / (2.0 * h);
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c {
                let rel = (c - ct) / c.max(f64::MIN_POSITIVE);
                let step_norm = step.norm();
                let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                p = trial;
                r = rt;
                c = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-14 || c < 1e-28 * m as f64 || step_norm <= 1e-13 * (scale + 1e-300) {
                    return Ok(FitResult { params: p, rms: (c / m as f64).sqrt(), iterations });
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no downhill step at any damping: stationary point
            return Ok(FitResult { params: p, rms: (c / m as f64).sqrt(), iterations });
        }
    }
    Err(Error::FitDidNotConverge(format!("no convergence after {max_iters} iterations")))
}

/// `base − depth·exp(−(x − center)²/(2 width²))`; params `[base, depth, center, width]`.
pub fn gaussian_dip(x: f64, p: &[f64]) -> f64 {
    p[0] - p[1] * (-(x - p[2]).powi(2) / (2.0 * p[3] * p[3])).exp()
}

/// `a·exp(−λ N²) + b`; params `[a, λ, b]`.
pub fn gaussian_decay(n: f64, p: &[f64]) -> f64 {
    p[0] * (-p[1] * n * n).exp() + p[2]
}
