//! Power-law (1/f^beta) Gaussian noise by spectral shaping of white noise.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::rng::GaussianStream;

/// `n` samples at `sample_rate` with one-sided PSD `amp^2 / f^beta`.
///
/// Below the lowest resolvable frequency `1 / T` (with `T = n / sample_rate`)
/// the PSD is held flat at its value at `1 / T`, which keeps the DC bin finite.
/// The synthesized record is circular.
pub fn power_law_noise(
    n: usize,
    sample_rate: f64,
    amp: f64,
    beta: f64,
    gauss: &mut GaussianStream,
) -> Vec<f64> {
    if n == 0 || amp == 0.0 {
        return vec![0.0; n];
    }
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(gauss.normal(), 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = sample_rate / n as f64;
    for (k, z) in buf.iter_mut().enumerate() {
        let f = (k.min(n - k) as f64 * df).max(df);
        let psd = amp * amp / f.powf(beta);
        *z *= (psd * sample_rate / 2.0).sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}
