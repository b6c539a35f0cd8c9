//! Welch power spectral density estimate.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// One-sided PSD with a Hann window and 50 % overlap.
///
/// Returns `(frequencies, psd)`; units are `x^2 / Hz`.
pub fn welch(x: &[f64], sample_rate: f64, segment_len: usize) -> (Vec<f64>, Vec<f64>) {
    let seg = segment_len.min(x.len()).max(2);
    let step = (seg / 2).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos())
        .collect();
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut start = 0;
    while start + seg <= x.len() {
        let chunk = &x[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for ((b, v), w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, z) in acc.iter_mut().zip(&buf) {
            *a += z.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let freqs = (0..n_bins)
        .map(|k| k as f64 * sample_rate / seg as f64)
        .collect();
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (seg.is_multiple_of(2) && k == seg / 2) {
                1.0
            } else {
                2.0
            };
            one_sided * a / (count.max(1) as f64 * sample_rate * wpow)
        })
        .collect();
    (freqs, psd)
}

/// Mean PSD over `[f_lo, f_hi]`.
pub fn band_level(freqs: &[f64], psd: &[f64], f_lo: f64, f_hi: f64) -> f64 {
    let (sum, n) = freqs
        .iter()
        .zip(psd)
        .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
        .fold((0.0, 0usize), |(s, n), (_, p)| (s + p, n + 1));
    sum / n.max(1) as f64
}
