use std::f64::consts::PI;

use super::fit::local_alpha;
use super::gamma::gamma;
use super::msd::MsdCurve;
use super::BOLTZMANN;
use crate::error::{Error, Result};

/// Converts a one-dimensional MSD to the three-dimensional `<Δr²>`.
pub const ISOTROPY_FACTOR: f64 = 3.0;

/// Complex shear modulus on an ascending ω grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ViscoelasticModuli {
    /// rad/s, ascending.
    pub omega: Vec<f64>,
    /// G′, Pa.
    pub g_storage: Vec<f64>,
    /// G″, Pa.
    pub g_loss: Vec<f64>,
    /// |G*|, Pa.
    pub g_mag: Vec<f64>,
    pub alpha_local: Vec<f64>,
    /// μm.
    pub bead_radius: f64,
    /// K.
    pub temperature: f64,
}

pub fn moduli_from_msd(
    curve: &MsdCurve,
    bead_radius: f64,
    temperature: f64,
) -> Result<ViscoelasticModuli> {
    moduli_from_msd_with(curve, bead_radius, temperature, ISOTROPY_FACTOR)
}

/// Local power-law generalized Stokes-Einstein relation:
/// `|G*(ω)| = k_B T / (π a <Δr²(1/ω)> Γ(1 + α(ω)))`, split into storage and
/// loss parts by the phase angle `π α / 2`.
pub fn moduli_from_msd_with(
    curve: &MsdCurve,
    bead_radius: f64,
    temperature: f64,
    isotropy: f64,
) -> Result<ViscoelasticModuli> {
    if !(bead_radius > 0.0 && bead_radius.is_finite()) {
        return Err(Error::invalid(
            "bead_radius",
            format!("must be > 0, got {bead_radius}"),
        ));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(
            "temperature",
            format!("must be > 0, got {temperature}"),
        ));
    }
    let la = local_alpha(curve)?;
    if let Some((i, a)) = la
        .alpha
        .iter()
        .enumerate()
        .find(|(_, a)| !(**a >= 0.0 && **a < 2.0))
    {
        return Err(Error::Numerical(format!(
            "local exponent {a:.4} at lag {:.4e} s is outside [0, 2): the local power-law model does not apply",
            la.tau[i]
        )));
    }
    let kt = BOLTZMANN * temperature;
    let a_m = bead_radius * 1e-6;
    let n = curve.len();
    let mut out = ViscoelasticModuli {
        omega: Vec::with_capacity(n),
        g_storage: Vec::with_capacity(n),
        g_loss: Vec::with_capacity(n),
        g_mag: Vec::with_capacity(n),
        alpha_local: Vec::with_capacity(n),
        bead_radius,
        temperature,
    };
    for i in (0..n).rev() {
        let alpha = la.alpha[i];
        let dr2 = isotropy * curve.msd[i] * 1e-12;
        let mag = kt / (PI * a_m * dr2 * gamma(1.0 + alpha));
        let (s, c) = (PI * alpha / 2.0).sin_cos();
        out.omega.push(la.omega[i]);
        out.g_storage.push(mag * c);
        out.g_loss.push(mag * s);
        out.g_mag.push(mag);
        out.alpha_local.push(alpha);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rheology::stokes_einstein_diffusion;

    fn lags() -> Vec<f64> {
        (0..31)
            .map(|j| 1e-3 * 10f64.powf(j as f64 / 15.0))
            .collect()
    }

    #[test]
    fn viscous_fluid_recovers_viscosity() {
        let eta = 1e-3;
        let d = stokes_einstein_diffusion(295.0, eta, 1.0);
        let l = lags();
        let msd = l.iter().map(|t| 2.0 * d * t).collect();
        let m = moduli_from_msd(&MsdCurve::exact(l, msd, 0.01).unwrap(), 1.0, 295.0).unwrap();
        assert!(m.omega.windows(2).all(|w| w[1] > w[0]));
        for i in 0..m.omega.len() {
            assert!((m.g_loss[i] / (eta * m.omega[i]) - 1.0).abs() < 1e-9);
            assert!(m.g_storage[i].abs() < 1e-3 * m.g_loss[i]);
        }
    }

    #[test]
    fn elastic_plateau() {
        let l = lags();
        let msd = vec![0.01; l.len()];
        let m = moduli_from_msd(&MsdCurve::exact(l, msd, 0.01).unwrap(), 0.5, 300.0).unwrap();
        let expected = BOLTZMANN * 300.0 / (3.0 * PI * 0.5e-6 * 0.01e-12);
        for i in 0..m.omega.len() {
            assert_eq!(m.g_loss[i], 0.0);
            assert!((m.g_storage[i] / expected - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn half_exponent_equal_moduli() {
        let l = lags();
        let msd = l.iter().map(|t| 0.2 * t.sqrt()).collect();
        let m = moduli_from_msd(&MsdCurve::exact(l, msd, 0.01).unwrap(), 1.0, 295.0).unwrap();
        for i in 0..m.omega.len() {
            assert!((m.g_storage[i] / m.g_loss[i] - 1.0).abs() < 1e-8);
            let mag2 = m.g_storage[i].powi(2) + m.g_loss[i].powi(2);
            assert!((mag2 / m.g_mag[i].powi(2) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let l = lags();
        let msd: Vec<f64> = l.iter().map(|t| 2.0 * t).collect();
        let c = MsdCurve::exact(l.clone(), msd, 0.01).unwrap();
        assert!(moduli_from_msd(&c, 0.0, 295.0).is_err());
        assert!(moduli_from_msd(&c, 1.0, -1.0).is_err());
        // decreasing MSD gives a negative local exponent
        let dec: Vec<f64> = l.iter().map(|t| 1.0 / t).collect();
        assert!(
            moduli_from_msd(&MsdCurve::exact(l.clone(), dec, 0.01).unwrap(), 1.0, 295.0).is_err()
        );
        let mut zero: Vec<f64> = l.iter().map(|t| 2.0 * t).collect();
        zero[4] = 0.0;
        let c = MsdCurve::new(l.clone(), zero, vec![0.1; l.len()], vec![0; l.len()]).unwrap();
        assert!(moduli_from_msd(&c, 1.0, 295.0).is_err());
    }
}
