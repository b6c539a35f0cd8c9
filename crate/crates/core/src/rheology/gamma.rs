//! Gamma function, Lanczos approximation (g = 7, 9 coefficients).

use std::f64::consts::PI;

const G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) for real `x` that is not a non-positive integer.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn reference_values() {
        let sqrt_pi = PI.sqrt();
        assert!(rel(gamma(1.0), 1.0) < 1e-12);
        assert!(rel(gamma(2.0), 1.0) < 1e-12);
        assert!(rel(gamma(3.0), 2.0) < 1e-12);
        assert!(rel(gamma(1.5), sqrt_pi / 2.0) < 1e-12);
        assert!(rel(gamma(0.5), sqrt_pi) < 1e-12);
        assert!(rel(gamma(2.5), 0.75 * sqrt_pi) < 1e-12);
        // Γ(1/3), Γ(0.1) from tables
        assert!(rel(gamma(1.0 / 3.0), 2.678_938_534_707_747_6) < 1e-12);
        assert!(rel(gamma(0.1), 9.513_507_698_668_732) < 1e-12);
    }

    #[test]
    fn recurrence_on_unit_interval() {
        for i in 1..200 {
            let x = 0.01 + i as f64 * 0.01;
            assert!(rel(gamma(x + 1.0), x * gamma(x)) < 1e-13, "x = {x}");
        }
    }
}
