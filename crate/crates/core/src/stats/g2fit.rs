//! Antibunching-dip fits with and without detector-response convolution,
//! and the signal-to-background relation of measured g²(0).
//!
//! Model: `g²(τ) = B·[1 − (1 − g0)·K(τ)]` where `K` is `exp(−|τ|/τc)`
//! convolved with a zero-mean Gaussian of standard deviation σ:
//!
//! ```text
//! K(τ) = ½·e^{σ²/2τc²}·[e^{−τ/τc}·erfc((σ²/τc − τ)/(√2σ)) + e^{τ/τc}·erfc((σ²/τc + τ)/(√2σ))]
//! ```
//!
//! At zero delay the dip depth is reduced by `f(r) = e^{1/(2r²)}·erfc(1/(√2·r))`
//! with `r = τc/σ`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::histogram::G2Curve;
use crate::error::{Error, Result};
use crate::fit::levenberg_marquardt;

/// `exp(a)·erfc(y)` without overflow for large `a` and `y`.
fn exp_erfc(a: f64, y: f64) -> f64 {
    if y < 8.0 {
        a.exp() * erfc(y)
    } else {
        // erfc(y) = e^{−y²}·erfcx(y), asymptotic series for erfcx.
        let y2 = y * y;
        let inv = 1.0 / (2.0 * y2);
        let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv.powi(3) + 105.0 * inv.powi(4);
        (a - y2).exp() * series / (y * std::f64::consts::PI.sqrt())
    }
}

/// Dip-reduction factor `f(τc/σ)`; 1 without jitter, 0 for an infinitely slow detector.
pub fn dip_reduction_factor(tau_c: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 1.0;
    }
    if tau_c <= 0.0 {
        return 0.0;
    }
    let r = tau_c / sigma;
    exp_erfc(1.0 / (2.0 * r * r), 1.0 / (std::f64::consts::SQRT_2 * r))
}

/// Exponential dip kernel convolved with the Gaussian response.
pub fn convolved_kernel(tau: f64, tau_c: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return (-tau.abs() / tau_c).exp();
    }
    let s2 = sigma * sigma;
    let a = s2 / (2.0 * tau_c * tau_c);
    let k = std::f64::consts::SQRT_2 * sigma;
    0.5 * (exp_erfc(a - tau / tau_c, (s2 / tau_c - tau) / k) + exp_erfc(a + tau / tau_c, (s2 / tau_c + tau) / k))
}

/// Measured (convolved) g² curve for intrinsic dip `g0` and correlation time `tau_c`.
pub fn g2_model(tau: f64, g0: f64, tau_c: f64, baseline: f64, sigma: f64) -> f64 {
    baseline * (1.0 - (1.0 - g0) * convolved_kernel(tau, tau_c, sigma))
}

/// 4-point Gauss–Legendre nodes and weights on [−1, 1].
const GL_NODES: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

fn gauss_legendre(f: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    GL_NODES.iter().map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Mean of `f` over `[center − width/2, center + width/2]`. The interval is
/// split at zero delay, where the unconvolved kernel has its cusp.
fn bin_average(f: impl Fn(f64) -> f64, center: f64, width: f64) -> f64 {
    if width <= 0.0 {
        return f(center);
    }
    let (lo, hi) = (center - 0.5 * width, center + 0.5 * width);
    let total = if lo < 0.0 && hi > 0.0 {
        gauss_legendre(&f, lo, 0.0) + gauss_legendre(&f, 0.0, hi)
    } else {
        gauss_legendre(&f, lo, hi)
    };
    total / width
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct G2Uncertainties {
    pub g2_raw: f64,
    pub g2_corrected: f64,
    pub tau_c_ps: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2FitResult {
    /// Convolved model at zero delay, relative to the asymptote.
    pub g2_raw: f64,
    /// Fitted intrinsic dip `g0`.
    pub g2_corrected: f64,
    pub tau_c_ps: f64,
    pub sigma_ps: f64,
    pub baseline: f64,
    pub uncertainties: G2Uncertainties,
    /// Reduced χ² of the fit.
    pub residual: f64,
}

impl G2FitResult {
    /// Ratio of measured to intrinsic dip depth.
    pub fn dip_reduction(&self) -> f64 {
        (1.0 - self.g2_raw) / (1.0 - self.g2_corrected)
    }
}

fn initial_guess(curve: &G2Curve) -> (f64, f64, f64) {
    let n = curve.g2.len();
    let edge = (n / 5).max(1);
    let outer: Vec<f64> = curve.g2[..edge].iter().chain(&curve.g2[n - edge..]).cloned().collect();
    let baseline = (outer.iter().sum::<f64>() / outer.len() as f64).max(1e-12);
    let dip = curve.value_at_zero(1) / baseline;
    let depth = (1.0 - dip).max(1e-3);
    // First delay where the dip has recovered to 1/e of its depth.
    let span = curve.delays_ps.iter().cloned().fold(0.0, |m: f64, d| m.max(d.abs()));
    let tau_c = curve
        .delays_ps
        .iter()
        .zip(&curve.g2)
        .filter(|(d, _)| **d > 0.0)
        .find(|(_, g)| (1.0 - **g / baseline) < depth / std::f64::consts::E)
        .map_or(span / 10.0, |(d, _)| *d)
        .max(span / curve.g2.len() as f64);
    (dip.clamp(0.0, 1.0), tau_c, baseline)
}

/// Fits the dip model to `curve` with a Gaussian response of width
/// `irf_sigma_ps` (0 for an ideal detector).
///
/// Histogram curves are compared with the model averaged over each bin.
/// Measured curves are fitted with Poisson weights (one reweighting pass with
/// the model expectation; bins with zero expectation drop out). Noise-free
/// curves are fitted unweighted with uncertainties scaled by the residual.
pub fn fit_g2(curve: &G2Curve, irf_sigma_ps: f64) -> Result<G2FitResult> {
    let n = curve.g2.len();
    if n < 20 || curve.delays_ps.len() != n {
        return Err(Error::config(format!("g² fit needs at least 20 bins, got {n}")));
    }
    if !(irf_sigma_ps >= 0.0) {
        return Err(Error::config("IRF sigma must be non-negative"));
    }
    let sigma = irf_sigma_ps;
    let bin = curve.bin_ps;
    let model = |tau: f64, p: &[f64]| bin_average(|t| g2_model(t, p[0], p[1], p[2], sigma), tau, bin);
    let (g0, tau0, b0) = initial_guess(curve);
    let span = curve.delays_ps[n - 1] - curve.delays_ps[0];
    let bounds = [(0.0, 2.0), (1e-3, 10.0 * span), (1e-12, f64::INFINITY)];
    let x = &curve.delays_ps;
    let y = &curve.g2;

    let res = match curve.counts_per_unit {
        Some(norm) => {
            // Var(g) = expected counts / norm².
            let w0: Vec<f64> = y.iter().map(|&g| norm / g.max(1.0 / norm)).collect();
            let first = levenberg_marquardt(model, x, y, &w0, &[g0, tau0, b0], &bounds, 1000)?;
            let w1: Vec<f64> = x
                .iter()
                .map(|&t| {
                    let m = model(t, &first.params);
                    if m * norm > 0.0 { norm / m } else { 0.0 }
                })
                .collect();
            levenberg_marquardt(model, x, y, &w1, &first.params, &bounds, 1000)?
        }
        None => {
            let w = vec![1.0; n];
            let mut r = levenberg_marquardt(model, x, y, &w, &[g0, tau0, b0], &bounds, 1000)?;
            let scale = r.reduced_chi2();
            r.covariance *= scale;
            r
        }
    };

    let (g0, tau_c, baseline) = (res.params[0], res.params[1], res.params[2]);
    if span < 5.0 * tau_c {
        return Err(Error::config(format!(
            "delay span {span:.1} ps is shorter than 5·τc = {:.1} ps",
            5.0 * tau_c
        )));
    }

    let raw = |g0: f64, tc: f64| if sigma > 0.0 { 1.0 - (1.0 - g0) * dip_reduction_factor(tc, sigma) } else { g0 };
    let g2_raw = raw(g0, tau_c);
    // Delta method for the derived zero-delay value.
    let h = 1e-6 * tau_c.max(1e-9);
    let grad = [raw(g0 + 1e-7, tau_c) - raw(g0 - 1e-7, tau_c), raw(g0, tau_c + h) - raw(g0, tau_c - h)];
    let grad = [grad[0] / 2e-7, grad[1] / (2.0 * h)];
    let c = &res.covariance;
    let var_raw = grad[0] * grad[0] * c[(0, 0)] + 2.0 * grad[0] * grad[1] * c[(0, 1)] + grad[1] * grad[1] * c[(1, 1)];

    Ok(G2FitResult {
        g2_raw,
        g2_corrected: g0,
        tau_c_ps: tau_c,
        sigma_ps: sigma,
        baseline,
        uncertainties: G2Uncertainties {
            g2_raw: var_raw.max(0.0).sqrt(),
            g2_corrected: res.std_err(0),
            tau_c_ps: res.std_err(1),
            baseline: res.std_err(2),
        },
        residual: res.reduced_chi2(),
    })
}

fn check_fraction(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("signal fraction {rho} must lie in (0, 1]")))
    }
}

/// `g_meas = 1 + ρ²·(g_sig − 1)` for a Poissonian background.
pub fn predict_measured_g2(g_signal: f64, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::config(format!("signal fraction {rho} must lie in [0, 1]")));
    }
    Ok(1.0 + rho * rho * (g_signal - 1.0))
}

/// Inverse of [`predict_measured_g2`]: intrinsic g² of the signal.
pub fn background_corrected_g2(g_measured: f64, rho: f64) -> Result<f64> {
    check_fraction(rho)?;
    Ok(1.0 + (g_measured - 1.0) / (rho * rho))
}

/// Signal fraction that turns `g_signal` into `g_measured`.
pub fn signal_fraction(g_measured: f64, g_signal: f64) -> Result<f64> {
    if !(g_signal < 1.0) || !(g_measured >= g_signal && g_measured <= 1.0) {
        return Err(Error::config("need g_signal ≤ g_measured ≤ 1 and g_signal < 1"));
    }
    Ok(((1.0 - g_measured) / (1.0 - g_signal)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_factor_limits_and_value() {
        assert_eq!(dip_reduction_factor(300.0, 0.0), 1.0);
        assert!((dip_reduction_factor(1e9, 1.0) - 1.0).abs() < 1e-6);
        assert!(dip_reduction_factor(1.0, 1e6) < 1e-5);
        // e^{1/8}·erfc(1/(2√2))
        assert!((dip_reduction_factor(2.0, 1.0) - 0.699_237_67).abs() < 1e-8);
    }

    #[test]
    fn kernel_is_continuous_across_the_asymptotic_branch() {
        let (tc, s) = (300.0, 150.0);
        let mut prev = convolved_kernel(0.0, tc, s);
        assert!((prev - dip_reduction_factor(tc, s)).abs() < 1e-12);
        for i in 1..4000 {
            let v = convolved_kernel(i as f64, tc, s);
            assert!(v <= prev + 1e-15 && v.is_finite());
            prev = v;
        }
        // Far tail approaches the bare exponential.
        let t = 5000.0;
        let bare = (-t / tc).exp() * (s * s / (2.0 * tc * tc)).exp();
        assert!((convolved_kernel(t, tc, s) / bare - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_sigma_fit_has_raw_equal_corrected() {
        let d: Vec<f64> = (-100..=100).map(|i| 20.0 * i as f64).collect();
        let g: Vec<f64> = d.iter().map(|&t| g2_model(t, 0.2, 300.0, 1.0, 0.0)).collect();
        let fit = fit_g2(&G2Curve::noise_free(d, g), 0.0).unwrap();
        assert_eq!(fit.g2_raw, fit.g2_corrected);
        assert!((fit.g2_corrected - 0.2).abs() < 1e-6);
        assert!((fit.tau_c_ps - 300.0).abs() < 1e-3);
    }

    #[test]
    fn bin_average_handles_the_cusp() {
        // Mean of 1 − e^{−|τ|/τc} over a bin centered on zero.
        let (tc, w) = (300.0f64, 20.0f64);
        let exact = 1.0 - 2.0 * tc / w * (1.0 - (-w / (2.0 * tc)).exp());
        let got = bin_average(|t| g2_model(t, 0.0, tc, 1.0, 0.0), 0.0, w);
        assert!((got - exact).abs() < 1e-12, "{got} vs {exact}");
        assert_eq!(bin_average(|t| t * t, 3.0, 0.0), 9.0);
    }

    #[test]
    fn fit_rejects_short_curves() {
        let d: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(fit_g2(&G2Curve::noise_free(d.clone(), d), 0.0).is_err());
        // 41 bins of 10 ps cannot span 5·τc for τc = 300 ps.
        let d: Vec<f64> = (-20..=20).map(|i| 10.0 * i as f64).collect();
        let g: Vec<f64> = d.iter().map(|&t| g2_model(t, 0.0, 300.0, 1.0, 0.0)).collect();
        assert!(matches!(fit_g2(&G2Curve::noise_free(d, g), 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn background_relation() {
        assert!((predict_measured_g2(0.3, 1.0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(predict_measured_g2(0.3, 0.0).unwrap(), 1.0);
        assert!((background_corrected_g2(0.3, 1.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((signal_fraction(0.40, 0.0).unwrap() - 0.7746).abs() < 1e-4);
        assert!((signal_fraction(0.13, 0.0).unwrap() - 0.9327).abs() < 1e-4);
        let g = predict_measured_g2(0.1, 0.8).unwrap();
        assert!((background_corrected_g2(g, 0.8).unwrap() - 0.1).abs() < 1e-12);
        assert!(background_corrected_g2(0.5, 0.0).is_err());
    }
}
