//! Ground-truth particle motion: fractional Brownian motion whose ensemble
//! MSD is exactly `2 D tau^alpha`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, GaussianStream};

/// Generative parameters. Positions in μm, time in s, `d_coeff` in μm²/s^α.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionParams {
    d_coeff: f64,
    alpha: f64,
    dt: f64,
    n_samples: usize,
}

impl DiffusionParams {
    pub fn new(d_coeff: f64, alpha: f64, dt: f64, n_samples: usize) -> Result<Self> {
        if !(d_coeff.is_finite() && d_coeff > 0.0) {
            return Err(Error::invalid(
                "d_coeff",
                format!("must be > 0, got {d_coeff}"),
            ));
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 2.0) {
            return Err(Error::invalid(
                "alpha",
                format!("alpha must lie in (0, 2), got {alpha}"),
            ));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        if n_samples < 2 {
            return Err(Error::invalid(
                "n_samples",
                format!("must be >= 2, got {n_samples}"),
            ));
        }
        Ok(Self {
            d_coeff,
            alpha,
            dt,
            n_samples,
        })
    }

    pub fn d_coeff(&self) -> f64 {
        self.d_coeff
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
    pub fn duration(&self) -> f64 {
        (self.n_samples - 1) as f64 * self.dt
    }

    pub fn with_d_coeff(&self, d_coeff: f64) -> Result<Self> {
        Self::new(d_coeff, self.alpha, self.dt, self.n_samples)
    }

    pub fn with_n_samples(&self, n_samples: usize) -> Result<Self> {
        Self::new(self.d_coeff, self.alpha, self.dt, n_samples)
    }

    /// Increment variance `2 D dt^alpha`.
    pub fn increment_variance(&self) -> f64 {
        2.0 * self.d_coeff * self.dt.powf(self.alpha)
    }

    /// Increment autocovariance at lag `k` samples.
    pub fn increment_autocovariance(&self, k: usize) -> f64 {
        self.d_coeff * self.dt.powf(self.alpha) * unit_fgn_autocovariance(self.alpha, k)
    }
}

/// One piece of a piecewise trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub params: DiffusionParams,
    /// Seconds.
    pub duration: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub params: DiffusionParams,
    pub positions: Vec<f64>,
    pub seed: u64,
    /// Present for stitched trajectories.
    pub segments: Option<Vec<Segment>>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        self.params.dt
    }
    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `|k+1|^a + |k-1|^a - 2|k|^a`, the fGn autocovariance with the amplitude
/// `D dt^alpha` factored out.
pub fn unit_fgn_autocovariance(alpha: f64, k: usize) -> f64 {
    let k = k as f64;
    (k + 1.0).powf(alpha) + (k - 1.0).abs().powf(alpha) - 2.0 * k.powf(alpha)
}

/// Mean squared displacement `2 D tau^alpha`.
pub fn theoretical_msd(params: &DiffusionParams, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid("tau", format!("must be >= 0, got {tau}")));
    }
    if tau == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * params.d_coeff * tau.powf(params.alpha))
}

/// Eigenvalues of the minimal power-of-two circulant embedding of a
/// symmetric Toeplitz covariance. `None` when any eigenvalue is negative
/// beyond round-off.
pub fn circulant_eigenvalues(cov: &[f64]) -> Option<Vec<f64>> {
    let n = cov.len();
    let half = n.max(2).next_power_of_two();
    let m = 2 * half;
    let mut row: Vec<Complex64> = (0..m)
        .map(|j| {
            let lag = if j <= half { j } else { m - j };
            Complex64::new(cov.get(lag).copied().unwrap_or(0.0), 0.0)
        })
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    fft.process(&mut row);
    let scale = row.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let mut eig = Vec::with_capacity(m);
    for z in row {
        if z.re < -tol {
            return None;
        }
        eig.push(z.re.max(0.0));
    }
    Some(eig)
}

/// Draws `n` samples of a zero-mean stationary Gaussian sequence with the
/// given autocovariance, using the circulant eigenvalues `eig` from
/// [`circulant_eigenvalues`].
fn sample_circulant(
    eig: &[f64],
    n: usize,
    fft: &Arc<dyn rustfft::Fft<f64>>,
    gauss: &mut GaussianStream,
) -> Vec<f64> {
    let m = eig.len() as f64;
    let mut buf: Vec<Complex64> = eig
        .iter()
        .map(|&l| {
            let a = (l / m).sqrt();
            let re = gauss.normal();
            let im = gauss.normal();
            Complex64::new(a * re, a * im)
        })
        .collect();
    fft.process(&mut buf);
    buf.iter().take(n).map(|z| z.re).collect()
}

/// Lower Cholesky factor of the symmetric Toeplitz matrix built from `cov`.
fn toeplitz_cholesky(cov: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = cov.len();
    let mut l: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; i + 1];
        for j in 0..=i {
            let mut s = cov[i - j];
            let lj: &[f64] = if j == i { &row[..] } else { &l[j] };
            for k in 0..j {
                s -= row[k] * lj[k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "covariance not positive definite at row {i}"
                    )));
                }
                row[j] = s.sqrt();
            } else {
                row[j] = s / l[j][j];
            }
        }
        l.push(row);
    }
    Ok(l)
}

/// Exact sampling by Cholesky factorization; O(n³).
pub fn sample_stationary_cholesky(cov: &[f64], gauss: &mut GaussianStream) -> Result<Vec<f64>> {
    let l = toeplitz_cholesky(cov)?;
    let mut z = vec![0.0; cov.len()];
    gauss.fill_normal(&mut z);
    Ok(l.iter()
        .map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect())
}

/// Draws a stationary Gaussian sequence with autocovariance `cov`
/// (length = number of samples), via circulant embedding when it is
/// non-negative definite and Cholesky otherwise.
pub fn sample_stationary(cov: &[f64], gauss: &mut GaussianStream) -> Result<Vec<f64>> {
    match circulant_eigenvalues(cov) {
        Some(eig) => {
            let fft = FftPlanner::<f64>::new().plan_fft_forward(eig.len());
            Ok(sample_circulant(&eig, cov.len(), &fft, gauss))
        }
        None => sample_stationary_cholesky(cov, gauss),
    }
}

fn cumulative(increments: &[f64], scale: f64) -> Vec<f64> {
    let mut positions = Vec::with_capacity(increments.len() + 1);
    let mut x = 0.0;
    positions.push(0.0);
    for &dx in increments {
        x += scale * dx;
        positions.push(x);
    }
    positions
}

/// Fractional Brownian motion sampled on `n_samples` points spaced `dt`.
///
/// Increments are fractional Gaussian noise with Hurst exponent `alpha/2`.
/// The unit-amplitude noise is drawn first and scaled by `sqrt(D dt^alpha)`,
/// so for a fixed seed positions scale exactly with `sqrt(D)`.
pub fn generate_fbm(params: &DiffusionParams, seed: u64) -> Result<Trajectory> {
    let n_inc = params.n_samples - 1;
    let cov: Vec<f64> = (0..n_inc)
        .map(|k| unit_fgn_autocovariance(params.alpha, k))
        .collect();
    let mut gauss = GaussianStream::new(seed);
    let increments = sample_stationary(&cov, &mut gauss)?;
    let scale = (params.d_coeff * params.dt.powf(params.alpha)).sqrt();
    Ok(Trajectory {
        params: *params,
        positions: cumulative(&increments, scale),
        seed,
        segments: None,
    })
}

/// Stitches independently generated segments end to end.
///
/// Segment `i` draws from `seed` when `i == 0` and from
/// `derive_seed(seed, SEGMENT, i)` otherwise. Each segment contributes
/// `round(duration / dt)` increments, offset to start where the previous
/// segment ended.
pub fn piecewise_trajectory(segments: &[Segment], seed: u64) -> Result<Trajectory> {
    let first = segments
        .first()
        .ok_or_else(|| Error::invalid("segments", "at least one segment is required"))?;
    let dt = first.params.dt;
    let mut positions = vec![0.0];
    for (i, seg) in segments.iter().enumerate() {
        if ((seg.params.dt - dt) / dt).abs() > 1e-12 {
            return Err(Error::invalid(
                "segments",
                format!(
                    "segment {i} has dt={} but segment 0 has dt={dt}",
                    seg.params.dt
                ),
            ));
        }
        let n_inc = (seg.duration / dt).round();
        if !(n_inc >= 1.0) {
            return Err(Error::invalid(
                "segments",
                format!("segment {i} duration {} is shorter than dt", seg.duration),
            ));
        }
        let params = seg.params.with_n_samples(n_inc as usize + 1)?;
        let seg_seed = if i == 0 {
            seed
        } else {
            derive_seed(seed, stream::SEGMENT, i as u64)
        };
        let piece = generate_fbm(&params, seg_seed)?;
        let offset = *positions.last().unwrap();
        positions.extend(piece.positions[1..].iter().map(|p| p + offset));
    }
    let params = first.params.with_n_samples(positions.len())?;
    Ok(Trajectory {
        params,
        positions,
        seed,
        segments: Some(segments.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rheology::stokes_einstein_diffusion;

    #[test]
    fn rejects_invalid_params() {
        assert!(DiffusionParams::new(1.0, 1.0, 1e-3, 1).is_err());
        assert!(DiffusionParams::new(1.0, 2.0, 1e-3, 10).is_err());
        assert!(DiffusionParams::new(1.0, 0.0, 1e-3, 10).is_err());
        assert!(DiffusionParams::new(0.0, 1.0, 1e-3, 10).is_err());
        assert!(DiffusionParams::new(1.0, 1.0, -1.0, 10).is_err());
    }

    #[test]
    fn theoretical_msd_values() {
        let p = DiffusionParams::new(1.0, 1.0, 1.0, 10).unwrap();
        assert_eq!(theoretical_msd(&p, 1.0).unwrap(), 2.0);
        assert_eq!(theoretical_msd(&p, 0.0).unwrap(), 0.0);
        assert!(theoretical_msd(&p, -1.0).is_err());
        let p = DiffusionParams::new(0.5, 0.5, 1.0, 10).unwrap();
        assert!((theoretical_msd(&p, 4.0).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn theoretical_msd_stokes_einstein_bead() {
        let d = stokes_einstein_diffusion(295.0, 1e-3, 1.0);
        assert!((d - 0.216).abs() < 5e-4, "D = {d}");
        let p = DiffusionParams::new(d, 1.0, 1e-3, 10).unwrap();
        let msd = theoretical_msd(&p, 0.1).unwrap();
        assert!((msd - 0.0432).abs() < 1e-4, "msd = {msd}");
        assert!((msd - 0.2 * d).abs() < 1e-15);
    }

    #[test]
    fn brownian_increments_are_white() {
        let p = DiffusionParams::new(1.0, 1.0, 1e-3, 100_001).unwrap();
        let t = generate_fbm(&p, 11).unwrap();
        let inc: Vec<f64> = t.positions.windows(2).map(|w| w[1] - w[0]).collect();
        let n = inc.len() as f64;
        let var = inc.iter().map(|x| x * x).sum::<f64>() / n;
        assert!((var / 2e-3 - 1.0).abs() < 0.02, "var = {var}");
        let lag1 = inc.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (n - 1.0) / var;
        assert!(lag1.abs() < 3.0 / n.sqrt(), "lag-1 autocorrelation {lag1}");
    }

    #[test]
    fn unit_autocovariance_closed_form() {
        assert_eq!(unit_fgn_autocovariance(0.5, 0), 2.0);
        assert!((unit_fgn_autocovariance(0.5, 1) - (2f64.sqrt() - 2.0)).abs() < 1e-15);
        assert_eq!(unit_fgn_autocovariance(1.0, 3), 0.0);
    }

    #[test]
    fn single_sample_rejected() {
        assert!(DiffusionParams::new(1.0, 0.5, 1.0, 1).is_err());
    }

    #[test]
    fn starts_at_zero_and_is_reproducible() {
        let p = DiffusionParams::new(0.3, 0.7, 1e-4, 1000).unwrap();
        let a = generate_fbm(&p, 5).unwrap();
        let b = generate_fbm(&p, 5).unwrap();
        let c = generate_fbm(&p, 6).unwrap();
        assert_eq!(a.positions[0], 0.0);
        assert_eq!(a.len(), 1000);
        assert!(a.positions.iter().all(|x| x.is_finite()));
        assert_eq!(a, b);
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn cholesky_fallback_on_non_embeddable_covariance() {
        // Toeplitz PD but with a circulant embedding that is indefinite.
        let cov = [1.0, 0.0, 0.0, 0.0, 0.6];
        assert!(circulant_eigenvalues(&cov).is_none());
        let mut g = GaussianStream::new(1);
        let x = sample_stationary(&cov, &mut g).unwrap();
        assert_eq!(x.len(), 5);
    }

    #[test]
    fn cholesky_matches_covariance() {
        let cov: Vec<f64> = (0..6).map(|k| unit_fgn_autocovariance(1.6, k)).collect();
        let runs = 20_000;
        let mut acc = [0.0; 3];
        let mut g = GaussianStream::new(99);
        for _ in 0..runs {
            let x = sample_stationary_cholesky(&cov, &mut g).unwrap();
            for (k, a) in acc.iter_mut().enumerate() {
                *a += x[0] * x[k];
            }
        }
        for (k, a) in acc.iter().enumerate() {
            let est = a / runs as f64;
            assert!((est - cov[k]).abs() < 0.06, "lag {k}: {est} vs {}", cov[k]);
        }
    }

    #[test]
    fn indefinite_covariance_reports_failure() {
        let cov = [1.0, 2.0, 0.0];
        let mut g = GaussianStream::new(1);
        assert!(matches!(
            sample_stationary(&cov, &mut g),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn piecewise_single_segment_matches_generate() {
        let p = DiffusionParams::new(1.0, 0.6, 1e-3, 2).unwrap();
        let seg = Segment {
            params: p,
            duration: 0.5,
        };
        let pw = piecewise_trajectory(&[seg], 17).unwrap();
        let direct = generate_fbm(&p.with_n_samples(501).unwrap(), 17).unwrap();
        assert_eq!(pw.positions, direct.positions);
    }

    #[test]
    fn piecewise_is_continuous_and_checks_dt() {
        let a = DiffusionParams::new(1.0, 0.6, 1e-3, 2).unwrap();
        let b = DiffusionParams::new(1.0, 0.9, 1e-3, 2).unwrap();
        let segs = [
            Segment {
                params: a,
                duration: 0.1,
            },
            Segment {
                params: b,
                duration: 0.2,
            },
        ];
        let t = piecewise_trajectory(&segs, 3).unwrap();
        assert_eq!(t.len(), 301);
        let first = generate_fbm(&a.with_n_samples(101).unwrap(), 3).unwrap();
        assert_eq!(&t.positions[..101], &first.positions[..]);
        let c = DiffusionParams::new(1.0, 0.9, 2e-3, 2).unwrap();
        assert!(piecewise_trajectory(
            &[
                segs[0],
                Segment {
                    params: c,
                    duration: 0.2
                }
            ],
            3
        )
        .is_err());
        assert!(piecewise_trajectory(&[], 3).is_err());
    }
}
