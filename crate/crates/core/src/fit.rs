//! Weighted nonlinear least squares (Levenberg–Marquardt) and a Lorentzian
//! peak fit built on it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// `(JᵀWJ)⁻¹` at the optimum. For unit weights scale by `chi2/dof`.
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

impl LmResult {
    pub fn std_err(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }

    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

/// Minimizes `Σ wᵢ·(yᵢ − model(xᵢ, p))²` starting at `p0`. Parameters are
/// clamped to `bounds` after every step.
pub fn levenberg_marquardt<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    w: &[f64],
    p0: &[f64],
    bounds: &[(f64, f64)],
    max_iter: usize,
) -> Result<LmResult>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = x.len();
    let k = p0.len();
    if y.len() != n || w.len() != n || bounds.len() != k {
        return Err(Error::config("least-squares inputs have mismatched lengths"));
    }
    if n <= k {
        return Err(Error::config(format!("{n} points cannot constrain {k} parameters")));
    }

    let clamp = |p: &mut [f64]| {
        for (v, (lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };
    let chi2_of = |p: &[f64]| -> f64 {
        x.iter().zip(y).zip(w).map(|((&xi, &yi), &wi)| wi * (yi - model(xi, p)).powi(2)).sum()
    };
    let jacobian = |p: &[f64]| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(n, k);
        let mut pp = p.to_vec();
        for j in 0..k {
            let h = 1e-6 * (p[j].abs() + 1e-3);
            pp[j] = p[j] + h;
            let up: Vec<f64> = x.iter().map(|&xi| model(xi, &pp)).collect();
            pp[j] = p[j] - h;
            let dn: Vec<f64> = x.iter().map(|&xi| model(xi, &pp)).collect();
            pp[j] = p[j];
            for i in 0..n {
                jac[(i, j)] = (up[i] - dn[i]) / (2.0 * h);
            }
        }
        jac
    };
    let normal_eqs = |p: &[f64], jac: &DMatrix<f64>| -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::zeros(k, k);
        let mut g = DVector::zeros(k);
        for i in 0..n {
            let r = y[i] - model(x[i], p);
            for j in 0..k {
                g[j] += w[i] * jac[(i, j)] * r;
                for l in 0..k {
                    a[(j, l)] += w[i] * jac[(i, j)] * jac[(i, l)];
                }
            }
        }
        (a, g)
    };

    let mut p = p0.to_vec();
    clamp(&mut p);
    let mut chi2 = chi2_of(&p);
    if !chi2.is_finite() {
        return Err(Error::numerical("initial guess gives a non-finite residual"));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let jac = jacobian(&p);
        let (a, g) = normal_eqs(&p, &jac);

        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for j in 0..k {
                damped[(j, j)] += lambda * a[(j, j)].max(1e-300);
            }
            let Some(step) = damped.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(pi, si)| pi + si).collect();
            clamp(&mut trial);
            let c = chi2_of(&trial);
            if c.is_finite() && c <= chi2 {
                let rel = (chi2 - c) / chi2.max(1e-300);
                let moved = trial.iter().zip(&p).map(|(a, b)| (a - b).abs() / (b.abs() + 1e-9)).fold(0.0, f64::max);
                p = trial;
                chi2 = c;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-10 || moved < 1e-9 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: already at the minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::numerical(format!(
            "least squares did not converge in {max_iter} iterations (chi² = {chi2:.6e})"
        )));
    }

    let jac = jacobian(&p);
    let (a, _) = normal_eqs(&p, &jac);
    let covariance = a
        .clone()
        .try_inverse()
        .or_else(|| a.pseudo_inverse(1e-14).ok())
        .ok_or_else(|| Error::numerical(format!("singular normal matrix at chi² = {chi2:.6e}")))?;

    Ok(LmResult { params: p, covariance, chi2, dof: n - k, iterations })
}

/// `offset + amplitude / (1 + (2(x − center)/fwhm)²)`.
pub fn lorentz_peak(x: f64, p: &[f64]) -> f64 {
    let z = 2.0 * (x - p[1]) / p[2];
    p[3] + p[0] / (1.0 + z * z)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LorentzFit {
    pub amplitude: f64,
    pub center: f64,
    pub fwhm: f64,
    pub offset: f64,
    pub r_squared: f64,
}

/// Unweighted Lorentzian-plus-offset fit.
pub fn fit_lorentzian(x: &[f64], y: &[f64]) -> Result<LorentzFit> {
    if x.len() < 5 || x.len() != y.len() {
        return Err(Error::config("Lorentzian fit needs at least five matched points"));
    }
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let ymin = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let half = ymin + 0.5 * (ymax - ymin);
    let above: Vec<f64> = x.iter().zip(y).filter(|(_, &v)| v >= half).map(|(&xi, _)| xi).collect();
    let span = (x[x.len() - 1] - x[0]).abs();
    let width0 = (above.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - above.iter().cloned().fold(f64::INFINITY, f64::min))
    .max(span / x.len() as f64);

    let p0 = [ymax - ymin, x[imax], width0, ymin];
    let bounds = [
        (0.0, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
        (1e-12 * span.max(1e-300), 10.0 * span),
        (f64::NEG_INFINITY, f64::INFINITY),
    ];
    let w = vec![1.0; x.len()];
    let res = levenberg_marquardt(lorentz_peak, x, y, &w, &p0, &bounds, 500)?;

    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - res.chi2 / ss_tot } else { 1.0 };
    let p = &res.params;
    Ok(LorentzFit { amplitude: p[0], center: p[1], fwhm: p[2], offset: p[3], r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_lorentzian() {
        let x: Vec<f64> = (0..200).map(|i| -2.0 + 0.02 * i as f64).collect();
        let truth = [3.0, 0.3, 0.4, 0.1];
        let y: Vec<f64> = x.iter().map(|&xi| lorentz_peak(xi, &truth)).collect();
        let f = fit_lorentzian(&x, &y).unwrap();
        assert!((f.amplitude - 3.0).abs() < 1e-6);
        assert!((f.center - 0.3).abs() < 1e-7);
        assert!((f.fwhm - 0.4).abs() < 1e-6);
        assert!(f.r_squared > 0.999_999);
    }

    #[test]
    fn linear_model_covariance_matches_closed_form() {
        // y = a + b·x with unit weights: cov = (XᵀX)⁻¹.
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v + if (*v as i32) % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let w = vec![1.0; 10];
        let r = levenberg_marquardt(
            |xi, p| p[0] + p[1] * xi,
            &x,
            &y,
            &w,
            &[0.0, 0.0],
            &[(f64::NEG_INFINITY, f64::INFINITY); 2],
            100,
        )
        .unwrap();
        let sx: f64 = x.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let det = 10.0 * sxx - sx * sx;
        assert!((r.covariance[(1, 1)] - 10.0 / det).abs() < 1e-9);
        assert!((r.covariance[(0, 0)] - sxx / det).abs() < 1e-9);
        assert!((r.params[1] - 2.0).abs() < 0.05);
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(fit_lorentzian(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }
}
