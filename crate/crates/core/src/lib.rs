//! Simulation and analysis of particle tracking with shot-noise-limited and
//! squeezed-light detection.
//!
//! The pipeline is
//! [`trajectory`] (fractional Brownian motion) → [`detection`] (stroboscopic
//! gating, detection noise, lock-in demodulation) → [`rheology`] (MSD,
//! power-law fit, viscoelastic moduli), with [`harness`] running Monte Carlo
//! ensembles that compare coherent and squeezed detection.
//!
//! Units throughout: positions μm, time s, `D` in μm²/s^α, moduli Pa.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod error;
pub mod harness;
pub mod io;
pub mod rheology;
pub mod rng;
pub mod trajectory;

pub use detection::{
    add_noise, demodulate, detect, effective_noise_variance, modulate, LockInConfig, LossMap,
    NoiseModel, PositionRecord, RawStream, Regime,
};
pub use error::{Error, Result};
pub use harness::{
    alpha_timeseries, compare_regimes, run_ensemble, AlphaPoint, EnsembleReport, ExperimentConfig,
    FitOptions,
};
pub use rheology::{
    estimate_msd, fit_power_law, local_alpha, moduli_from_msd, subtract_noise_floor, FitRange,
    LagSpec, MsdCurve, PowerLawFit, ViscoelasticModuli,
};
pub use trajectory::{
    generate_fbm, piecewise_trajectory, theoretical_msd, DiffusionParams, Segment, Trajectory,
};
