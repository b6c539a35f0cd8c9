use super::msd::MsdCurve;
use crate::error::{Error, Result};

/// Result of fitting `msd = 2 D tau^alpha` on log-log axes.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLawFit {
    pub alpha_hat: f64,
    /// μm²/s^α.
    pub d_hat: f64,
    /// Covariance of `(ln 2D, alpha)`.
    pub covariance: [[f64; 2]; 2],
    /// Seconds, inclusive.
    pub fit_range: (f64, f64),
    pub residual_norm: f64,
    pub n_lags: usize,
}

impl PowerLawFit {
    pub fn alpha_stderr(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

/// Which lags enter the fit.
#[derive(Clone, Debug, PartialEq)]
pub enum FitRange {
    /// `decades` decades starting at the first lag `>= min_tau` whose
    /// (corrected) MSD exceeds `floor_factor * 2 sigma^2`.
    Auto {
        floor_factor: f64,
        decades: f64,
        min_tau: f64,
    },
    Explicit {
        tau_min: f64,
        tau_max: f64,
    },
}

impl Default for FitRange {
    fn default() -> Self {
        FitRange::Auto {
            floor_factor: 10.0,
            decades: 1.0,
            min_tau: 0.0,
        }
    }
}

/// Turns a [`FitRange`] into explicit lag bounds for `curve`, whose white
/// noise σ is `sigma`.
pub fn resolve_fit_range(curve: &MsdCurve, sigma: f64, range: &FitRange) -> Result<(f64, f64)> {
    match *range {
        FitRange::Explicit { tau_min, tau_max } => {
            if !(tau_min > 0.0 && tau_max > tau_min) {
                return Err(Error::invalid(
                    "fit range",
                    format!("need 0 < tau_min < tau_max, got ({tau_min}, {tau_max})"),
                ));
            }
            Ok((tau_min, tau_max))
        }
        FitRange::Auto {
            floor_factor,
            decades,
            min_tau,
        } => {
            let threshold = floor_factor * 2.0 * sigma * sigma;
            let start = curve
                .lags
                .iter()
                .zip(&curve.msd)
                .find(|(t, m)| **t >= min_tau * (1.0 - 1e-9) && **m > threshold)
                .map(|(t, _)| *t)
                .ok_or_else(|| {
                    Error::Numerical(format!(
                        "no lag has MSD above {floor_factor} x the noise floor ({threshold:.3e} um^2)"
                    ))
                })?;
            Ok((start, start * 10f64.powf(decades)))
        }
    }
}

fn in_range(t: f64, range: (f64, f64)) -> bool {
    t >= range.0 * (1.0 - 1e-9) && t <= range.1 * (1.0 + 1e-9)
}

/// Weighted least squares of `ln msd = ln 2D + alpha ln tau` with weights
/// `(msd / stderr)^2`.
///
/// When any stderr in range is zero (exact input) the fit is unweighted and
/// the covariance is scaled by the residual variance.
pub fn fit_power_law(curve: &MsdCurve, fit_range: (f64, f64)) -> Result<PowerLawFit> {
    let idx: Vec<usize> = (0..curve.len())
        .filter(|&i| in_range(curve.lags[i], fit_range))
        .collect();
    if idx.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} lags in fit range [{:.4e}, {:.4e}] s, need >= 3",
            idx.len(),
            fit_range.0,
            fit_range.1
        )));
    }
    if let Some(&i) = idx.iter().find(|&&i| curve.msd[i] <= 0.0) {
        return Err(Error::Numerical(format!(
            "MSD at lag {:.4e} s is {:.3e} <= 0; narrow the fit range or revisit the noise-floor correction",
            curve.lags[i], curve.msd[i]
        )));
    }
    let exact = idx.iter().any(|&i| curve.stderr[i] == 0.0);
    let pts: Vec<(f64, f64, f64)> = idx
        .iter()
        .map(|&i| {
            let w = if exact {
                1.0
            } else {
                (curve.msd[i] / curve.stderr[i]).powi(2)
            };
            (curve.lags[i].ln(), curve.msd[i].ln(), w)
        })
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xbar = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Numerical(
            "degenerate lag spread in fit range".into(),
        ));
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let chi2: f64 = pts
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let scale = if exact {
        chi2 / (pts.len() - 2) as f64
    } else {
        1.0
    };
    let var_slope = scale / sxx;
    let var_icpt = scale / sw + xbar * xbar * var_slope;
    let cov = -xbar * var_slope;
    if !slope.is_finite() || !intercept.is_finite() {
        return Err(Error::Numerical("non-finite fit estimates".into()));
    }
    Ok(PowerLawFit {
        alpha_hat: slope,
        d_hat: intercept.exp() / 2.0,
        covariance: [[var_icpt, cov], [cov, var_slope]],
        fit_range,
        residual_norm: chi2.sqrt(),
        n_lags: pts.len(),
    })
}

/// Logarithmic slope of the MSD on the lag grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalAlpha {
    /// Seconds, as in the curve.
    pub tau: Vec<f64>,
    /// `1 / tau`, rad/s.
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Centred differences of `ln msd` against `ln tau`; one-sided at the ends.
pub fn local_alpha(curve: &MsdCurve) -> Result<LocalAlpha> {
    let n = curve.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} lags, need >= 3")));
    }
    if let Some(i) = curve.msd.iter().position(|&m| m <= 0.0) {
        return Err(Error::Numerical(format!(
            "MSD at lag {:.4e} s is {:.3e} <= 0",
            curve.lags[i], curve.msd[i]
        )));
    }
    let x: Vec<f64> = curve.lags.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = curve.msd.iter().map(|m| m.ln()).collect();
    let alpha = (0..n)
        .map(|j| {
            let (a, b) = if j == 0 {
                (0, 1)
            } else if j == n - 1 {
                (n - 2, n - 1)
            } else {
                (j - 1, j + 1)
            };
            (y[b] - y[a]) / (x[b] - x[a])
        })
        .collect();
    Ok(LocalAlpha {
        tau: curve.lags.clone(),
        omega: curve.lags.iter().map(|t| 1.0 / t).collect(),
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..31)
            .map(|j| 1e-3 * 10f64.powf(j as f64 / 15.0))
            .collect()
    }

    fn power_curve(coef: f64, alpha: f64) -> MsdCurve {
        let lags = grid();
        let msd = lags.iter().map(|t| coef * t.powf(alpha)).collect();
        MsdCurve::exact(lags, msd, 0.05).unwrap()
    }

    #[test]
    fn exact_brownian_line() {
        let f = fit_power_law(&power_curve(2.0, 1.0), (1e-3, 1e-1)).unwrap();
        assert!((f.alpha_hat - 1.0).abs() < 1e-10);
        assert!((f.d_hat - 1.0).abs() < 1e-10);
        assert!(f.residual_norm < 1e-9);
    }

    #[test]
    fn exact_subdiffusive_line() {
        let f = fit_power_law(&power_curve(0.6, 0.7), (1e-3, 1e-1)).unwrap();
        assert!((f.alpha_hat - 0.7).abs() < 1e-10);
        assert!((f.d_hat / 0.3 - 1.0).abs() < 1e-10);
        let c = f.covariance;
        assert_eq!(c[0][1], c[1][0]);
        assert!(c[0][0] >= 0.0 && c[1][1] >= 0.0 && c[0][0] * c[1][1] >= c[0][1] * c[0][1]);
    }

    #[test]
    fn fit_errors() {
        let c = power_curve(2.0, 1.0);
        assert!(matches!(
            fit_power_law(&c, (1e-3, 1.1e-3)),
            Err(Error::InsufficientData(_))
        ));
        let mut neg = c.clone();
        neg.msd[3] = -1e-6;
        assert!(matches!(
            fit_power_law(&neg, (1e-3, 1e-1)),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn auto_range_starts_above_floor() {
        let c = power_curve(2.0, 1.0);
        // 2 sigma^2 = 2.1e-3, so the first lag with 2 tau > 2.1e-2 is tau > 1.05e-2
        let (lo, hi) = resolve_fit_range(&c, (1.05e-3f64).sqrt(), &FitRange::default()).unwrap();
        assert!(lo > 1.05e-2 && lo < 1.2e-2, "{lo}");
        assert!((hi / lo - 10.0).abs() < 1e-12);
        assert!(resolve_fit_range(&c, 10.0, &FitRange::default()).is_err());
    }

    #[test]
    fn local_alpha_power_law() {
        let la = local_alpha(&power_curve(3.0, 0.5)).unwrap();
        assert!(la.alpha.iter().all(|a| (a - 0.5).abs() < 1e-8));
        let la = local_alpha(&power_curve(2.0, 1.0)).unwrap();
        assert!(la.alpha.iter().all(|a| (a - 1.0).abs() < 1e-8));
        assert!((la.omega[0] - 1e3).abs() < 1e-9);
    }

    #[test]
    fn local_alpha_with_offset() {
        let lags: Vec<f64> = (0..61)
            .map(|j| 1e-2 * 10f64.powf(j as f64 / 15.0))
            .collect();
        let msd: Vec<f64> = lags.iter().map(|t| 2.0 * t + 0.5).collect();
        let la = local_alpha(&MsdCurve::exact(lags.clone(), msd, 0.01).unwrap()).unwrap();
        assert!(la.alpha.windows(2).all(|w| w[1] > w[0]));
        assert!(la.alpha[0] < 0.1);
        assert!((la.alpha.last().unwrap() - 1.0).abs() < 0.02);
        // analytic slope 2 tau / (2 tau + 0.5) at interior points
        for (j, &t) in lags.iter().enumerate().take(60).skip(1) {
            let exact = 2.0 * t / (2.0 * t + 0.5);
            assert!(
                (la.alpha[j] - exact).abs() < 0.01,
                "{} vs {exact}",
                la.alpha[j]
            );
        }
    }
}
