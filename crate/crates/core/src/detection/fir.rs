//! Kaiser-windowed sinc low-pass design.

use std::f64::consts::PI;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Number of taps the Kaiser formula asks for, before parity adjustment.
pub fn kaiser_length(transition: f64, atten_db: f64) -> usize {
    ((atten_db - 7.95) / (2.285 * 2.0 * PI * transition)).ceil() as usize + 1
}

/// Linear-phase low-pass taps with unit DC gain.
///
/// `cutoff` and `transition` are in cycles per sample. `len` may be odd or
/// even; the impulse response is symmetric about `(len - 1) / 2`.
pub fn lowpass(cutoff: f64, atten_db: f64, len: usize) -> Vec<f64> {
    let beta = kaiser_beta(atten_db);
    let center = (len as f64 - 1.0) / 2.0;
    let norm = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 - center;
            let sinc = if t == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * t).sin() / (PI * t)
            };
            let r = if center > 0.0 { t / center } else { 0.0 };
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm;
            sinc * w
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Complex gain magnitude at `freq` cycles per sample.
pub fn magnitude_response(taps: &[f64], freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, h) in taps.iter().enumerate() {
        let ph = -2.0 * PI * freq * i as f64;
        re += h * ph.cos();
        im += h * ph.sin();
    }
    re.hypot(im)
}
