//! MSD estimation, noise-floor correction, power-law fitting and
//! generalized Stokes-Einstein moduli.

mod fit;
pub mod gamma;
mod moduli;
mod msd;

pub use fit::{fit_power_law, local_alpha, resolve_fit_range, FitRange, LocalAlpha, PowerLawFit};
pub use moduli::{moduli_from_msd, moduli_from_msd_with, ViscoelasticModuli, ISOTROPY_FACTOR};
pub use msd::{estimate_msd, subtract_noise_floor, LagSpec, MsdCurve};

use std::f64::consts::PI;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Stokes-Einstein diffusion coefficient in μm²/s for a sphere of
/// `radius_um` in a fluid of `viscosity` Pa·s.
pub fn stokes_einstein_diffusion(temperature: f64, viscosity: f64, radius_um: f64) -> f64 {
    BOLTZMANN * temperature / (6.0 * PI * viscosity * radius_um * 1e-6) * 1e12
}
