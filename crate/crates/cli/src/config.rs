//! Run configuration: a strict TOML schema whose physical keys carry their
//! units in the key name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use squeezetrack::harness::ExperimentConfig;
use squeezetrack::{
    DiffusionParams, FitOptions, FitRange, LagSpec, LockInConfig, LossMap, NoiseModel, Regime,
    Segment,
};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Base seed; `--seed` takes precedence.
    pub seed: Option<u64>,
    pub trajectory: TrajectorySection,
    pub lockin: LockInSection,
    pub noise: NoiseSection,
    pub analysis: AnalysisSection,
    pub ensemble: EnsembleSection,
    pub track: TrackSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub d_um2_per_s_alpha: f64,
    pub alpha: f64,
    pub dt_s: f64,
    pub duration_s: f64,
    /// When non-empty, replaces the single (D, α) pair.
    pub segments: Vec<SegmentSection>,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            d_um2_per_s_alpha: 1.0,
            alpha: 0.75,
            dt_s: 1e-4,
            duration_s: 10.0,
            segments: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    pub d_um2_per_s_alpha: f64,
    pub alpha: f64,
    pub duration_s: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LockInSection {
    pub sample_rate_hz: f64,
    pub f_mod_hz: f64,
    pub duty_cycle: f64,
    pub lp_cutoff_hz: f64,
    pub decimation: usize,
}

impl Default for LockInSection {
    fn default() -> Self {
        Self {
            sample_rate_hz: 80_000.0,
            f_mod_hz: 20_000.0,
            duty_cycle: 0.5,
            lp_cutoff_hz: 4_000.0,
            decimation: 8,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub shot_std_um: f64,
    pub squeezing_db: f64,
    /// One-sided technical PSD is `technical_amp^2 / f^beta`, μm²/Hz at 1 Hz.
    pub technical_amp_um_per_sqrt_hz: f64,
    pub technical_beta: f64,
    pub efficiency: f64,
    /// Overrides `efficiency` when present.
    pub loss_map: Option<LossMapSection>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            shot_std_um: 0.72,
            squeezing_db: 2.4,
            technical_amp_um_per_sqrt_hz: 0.0,
            technical_beta: 1.0,
            efficiency: 1.0,
            loss_map: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LossMapSection {
    pub eta0: f64,
    pub slope_per_w: f64,
    pub trap_power_w: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub lags_per_decade: f64,
    pub min_lag_samples: usize,
    pub max_lag_samples: Option<usize>,
    /// Both bounds set: explicit fit range. Neither: automatic.
    pub fit_tau_min_s: Option<f64>,
    pub fit_tau_max_s: Option<f64>,
    pub floor_factor: f64,
    pub fit_decades: f64,
    pub bead_radius_um: f64,
    pub temperature_k: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            lags_per_decade: 15.0,
            min_lag_samples: 1,
            max_lag_samples: None,
            fit_tau_min_s: Some(2.5e-3),
            fit_tau_max_s: Some(2.5e-2),
            floor_factor: 10.0,
            fit_decades: 1.0,
            bead_radius_um: 1.0,
            temperature_k: 295.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_runs: usize,
    pub bootstrap_resamples: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_runs: 200,
            bootstrap_resamples: 1000,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrackSection {
    pub window_s: f64,
    pub stride_s: f64,
    /// Also write a Vega-Lite description of the series.
    pub plot: bool,
}

impl Default for TrackSection {
    fn default() -> Self {
        Self {
            window_s: 1.0,
            stride_s: 0.25,
            plot: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// `--out` takes precedence.
    pub dir: Option<PathBuf>,
    /// Regimes written by `simulate`.
    pub regimes: Vec<String>,
    pub verbose: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            regimes: vec!["coherent".into(), "squeezed".into()],
            verbose: false,
        }
    }
}

/// Parsed configuration plus the hash that identifies it in outputs.
pub struct Loaded {
    pub config: RunConfig,
    pub hash: String,
}

pub fn load(path: Option<&Path>) -> Result<Loaded, CliError> {
    let config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.message())))?
        }
        None => RunConfig::default(),
    };
    let hash = config.hash();
    Ok(Loaded { config, hash })
}

fn key(section: &str, e: squeezetrack::Error) -> CliError {
    match e {
        squeezetrack::Error::InvalidParameter { name, reason } => {
            CliError::Config(format!("[{section}] {name}: {reason}"))
        }
        other => CliError::from(other),
    }
}

impl RunConfig {
    /// First 16 hex digits of the SHA-256 of the canonical (defaults filled
    /// in) serialization.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(1)
    }

    /// Samples covering `duration_s`.
    pub fn n_samples(&self) -> Result<usize, CliError> {
        let t = &self.trajectory;
        if !(t.dt_s > 0.0 && t.dt_s.is_finite()) {
            return Err(CliError::Config(format!(
                "[trajectory] dt_s: must be > 0, got {}",
                t.dt_s
            )));
        }
        if !(t.duration_s > 0.0 && t.duration_s.is_finite()) {
            return Err(CliError::Config(format!(
                "[trajectory] duration_s: must be > 0, got {}",
                t.duration_s
            )));
        }
        Ok((t.duration_s / t.dt_s).round() as usize + 1)
    }

    pub fn diffusion(&self) -> Result<DiffusionParams, CliError> {
        let t = &self.trajectory;
        DiffusionParams::new(t.d_um2_per_s_alpha, t.alpha, t.dt_s, self.n_samples()?)
            .map_err(|e| key("trajectory", e))
    }

    pub fn segments(&self) -> Result<Option<Vec<Segment>>, CliError> {
        if self.trajectory.segments.is_empty() {
            return Ok(None);
        }
        self.trajectory
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| {
                if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
                    return Err(CliError::Config(format!(
                        "[trajectory.segments.{i}] duration_s: must be > 0, got {}",
                        s.duration_s
                    )));
                }
                let params =
                    DiffusionParams::new(s.d_um2_per_s_alpha, s.alpha, self.trajectory.dt_s, 2)
                        .map_err(|e| key(&format!("trajectory.segments.{i}"), e))?;
                Ok(Segment {
                    params,
                    duration: s.duration_s,
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    pub fn lockin(&self) -> Result<LockInConfig, CliError> {
        let l = &self.lockin;
        LockInConfig::new(
            l.sample_rate_hz,
            l.f_mod_hz,
            l.duty_cycle,
            l.lp_cutoff_hz,
            l.decimation,
        )
        .map_err(|e| key("lockin", e))
    }

    pub fn efficiency(&self) -> Result<f64, CliError> {
        match &self.noise.loss_map {
            None => Ok(self.noise.efficiency),
            Some(m) => {
                if !(0.0..=1.0).contains(&m.eta0)
                    || !(m.slope_per_w >= 0.0)
                    || !(m.trap_power_w >= 0.0)
                {
                    return Err(CliError::Config(
                        "[noise.loss_map] need eta0 in [0, 1], slope_per_w >= 0 and trap_power_w >= 0".into(),
                    ));
                }
                Ok(LossMap {
                    eta0: m.eta0,
                    slope_per_w: m.slope_per_w,
                }
                .efficiency(m.trap_power_w))
            }
        }
    }

    pub fn noise(&self) -> Result<NoiseModel, CliError> {
        let n = &self.noise;
        NoiseModel::new(
            n.shot_std_um,
            n.squeezing_db,
            n.technical_amp_um_per_sqrt_hz,
            n.technical_beta,
            self.efficiency()?,
        )
        .map_err(|e| key("noise", e))
    }

    pub fn fit_options(&self) -> Result<FitOptions, CliError> {
        let a = &self.analysis;
        if !(a.lags_per_decade > 0.0) {
            return Err(CliError::Config(format!(
                "[analysis] lags_per_decade: must be > 0, got {}",
                a.lags_per_decade
            )));
        }
        if a.min_lag_samples == 0 {
            return Err(CliError::Config(
                "[analysis] min_lag_samples: must be >= 1".into(),
            ));
        }
        let lags = LagSpec::LogSpaced {
            per_decade: a.lags_per_decade,
            min_lag: a.min_lag_samples,
            max_lag: a.max_lag_samples,
        };
        let range = match (a.fit_tau_min_s, a.fit_tau_max_s) {
            (Some(lo), Some(hi)) => {
                if !(lo > 0.0 && hi > lo) {
                    return Err(CliError::Config(format!(
                        "[analysis] fit_tau_min_s/fit_tau_max_s: need 0 < min < max, got ({lo}, {hi})"
                    )));
                }
                FitRange::Explicit {
                    tau_min: lo,
                    tau_max: hi,
                }
            }
            (None, None) => {
                if !(a.floor_factor > 0.0 && a.fit_decades > 0.0) {
                    return Err(CliError::Config(
                        "[analysis] floor_factor and fit_decades must be > 0".into(),
                    ));
                }
                FitRange::Auto {
                    floor_factor: a.floor_factor,
                    decades: a.fit_decades,
                    min_tau: 0.0,
                }
            }
            _ => {
                return Err(CliError::Config(
                    "[analysis] fit_tau_min_s and fit_tau_max_s must be given together".into(),
                ))
            }
        };
        Ok(FitOptions { lags, range })
    }

    pub fn regimes(&self) -> Result<Vec<Regime>, CliError> {
        if self.output.regimes.is_empty() {
            return Err(CliError::Config(
                "[output] regimes: must name at least one regime".into(),
            ));
        }
        self.output
            .regimes
            .iter()
            .map(|r| {
                r.parse::<Regime>()
                    .map_err(|e| CliError::Config(format!("[output] regimes: {e}")))
            })
            .collect()
    }

    pub fn experiment(&self, seed: u64) -> Result<ExperimentConfig, CliError> {
        let cfg = ExperimentConfig {
            diffusion: self.diffusion()?,
            segments: self.segments()?,
            lockin: self.lockin()?,
            noise: self.noise()?,
            n_runs: self.ensemble.n_runs,
            base_seed: seed,
            fit: self.fit_options()?,
            window: self.track.window_s,
            stride: self.track.stride_s,
            bootstrap_resamples: self.ensemble.bootstrap_resamples,
        };
        cfg.validate().map_err(|e| {
            let section = match &e {
                squeezetrack::Error::InvalidParameter {
                    name: "window" | "stride",
                    ..
                } => "track",
                _ => "ensemble",
            };
            key(section, e)
        })?;
        Ok(cfg)
    }
}
