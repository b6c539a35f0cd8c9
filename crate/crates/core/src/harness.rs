//! Monte Carlo runner comparing coherent and squeezed detection.
//!
//! Run `i` draws its trajectory from `derive_seed(base, TRAJECTORY, i)` and
//! its detection noise from `derive_seed(base, NOISE_COHERENT | NOISE_SQUEEZED, i)`,
//! so both regimes see the same trajectory with independent noise. Runs are
//! mapped in parallel and gathered in run order, which makes results
//! independent of the worker count.

use rayon::prelude::*;

use crate::detection::{
    detect, effective_noise_variance, LockInConfig, NoiseModel, PositionRecord, Regime,
};
use crate::error::{Error, Result};
use crate::rheology::{
    estimate_msd, fit_power_law, resolve_fit_range, subtract_noise_floor, FitRange, LagSpec,
    MsdCurve, PowerLawFit,
};
use crate::rng::{derive_seed, stream, GaussianStream};
use crate::trajectory::{
    generate_fbm, piecewise_trajectory, theoretical_msd, DiffusionParams, Segment, Trajectory,
};

#[derive(Clone, Debug, PartialEq, Default)]
pub struct FitOptions {
    pub lags: LagSpec,
    pub range: FitRange,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub diffusion: DiffusionParams,
    /// When present, trajectories are stitched from these segments instead
    /// of drawn from `diffusion`.
    pub segments: Option<Vec<Segment>>,
    pub lockin: LockInConfig,
    pub noise: NoiseModel,
    pub n_runs: usize,
    pub base_seed: u64,
    pub fit: FitOptions,
    /// α(t) window, s.
    pub window: f64,
    /// α(t) stride, s.
    pub stride: f64,
    pub bootstrap_resamples: usize,
}

impl ExperimentConfig {
    /// Detection-noise-dominated setup at 2.4 dB: α = 0.75, D = 1, dt = 0.1 ms,
    /// 80 kHz raw rate, 20 kHz gate at half duty, 4 kHz low-pass, decimation 8,
    /// and a shot floor whose demodulated MSD floor is about 16 times the
    /// thermal MSD at the 2.5 ms start of the fixed 2.5 to 25 ms fit range.
    pub fn noise_dominated(n_samples: usize) -> Result<Self> {
        Ok(Self {
            diffusion: DiffusionParams::new(1.0, 0.75, 1e-4, n_samples)?,
            segments: None,
            lockin: LockInConfig::new(80_000.0, 20_000.0, 0.5, 4_000.0, 8)?,
            noise: NoiseModel::new(0.72, 2.4, 0.0, 1.0, 1.0)?,
            n_runs: 200,
            base_seed: 1,
            fit: FitOptions {
                lags: LagSpec::default(),
                range: FitRange::Explicit {
                    tau_min: 2.5e-3,
                    tau_max: 2.5e-2,
                },
            },
            window: 0.1,
            stride: 0.05,
            bootstrap_resamples: 1000,
        })
    }

    /// Two 5 s segments at dt = 0.1 ms, α = 0.6 (D = 1) then α = 0.9 (D = 5),
    /// detected with the lock-in of [`Self::noise_dominated`] at a shot σ of
    /// 0.5 μm and 2.4 dB, fitted over 1 to 10 ms.
    pub fn alpha_step() -> Result<Self> {
        let dt = 1e-4;
        let segments = vec![
            Segment {
                params: DiffusionParams::new(1.0, 0.6, dt, 2)?,
                duration: 5.0,
            },
            Segment {
                params: DiffusionParams::new(5.0, 0.9, dt, 2)?,
                duration: 5.0,
            },
        ];
        let base = Self::noise_dominated(100_001)?;
        Ok(Self {
            segments: Some(segments),
            noise: base.noise.with_shot_std(0.5)?,
            n_runs: 100,
            fit: FitOptions {
                lags: LagSpec::default(),
                range: FitRange::Explicit {
                    tau_min: 1e-3,
                    tau_max: 1e-2,
                },
            },
            window: 1.0,
            stride: 0.25,
            ..base
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_runs < 2 {
            return Err(Error::invalid(
                "n_runs",
                format!("must be >= 2 to estimate a variance, got {}", self.n_runs),
            ));
        }
        let dt_out = self.lockin.dt_out();
        if !(self.window >= 10.0 * dt_out * (1.0 - 1e-9)) {
            return Err(Error::invalid(
                "window",
                format!(
                    "must span >= 10 output samples ({:.3e} s), got {}",
                    10.0 * dt_out,
                    self.window
                ),
            ));
        }
        if !(self.stride > 0.0) {
            return Err(Error::invalid(
                "stride",
                format!("must be > 0, got {}", self.stride),
            ));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::invalid("bootstrap_resamples", "must be >= 1"));
        }
        Ok(())
    }

    pub fn trajectory(&self, seed: u64) -> Result<Trajectory> {
        match &self.segments {
            Some(segs) => piecewise_trajectory(segs, seed),
            None => generate_fbm(&self.diffusion, seed),
        }
    }

    /// Position σ of the coherent white floor after demodulation, μm.
    pub fn coherent_output_noise_std(&self) -> f64 {
        let taps = self.lockin.filter_taps();
        let d = self.lockin.duty_cycle();
        let gain = taps.iter().map(|h| h * h).sum::<f64>();
        let white = self.noise.white_std(Regime::Coherent);
        if d >= 1.0 {
            white * gain.sqrt()
        } else {
            white * (gain / (d * (1.0 - d))).sqrt()
        }
    }

    /// Fit range shared by all runs and both regimes. An automatic range is
    /// resolved against the model MSD and the coherent noise floor.
    pub fn resolved_fit_range(&self) -> Result<(f64, f64)> {
        match self.fit.range {
            FitRange::Explicit { tau_min, tau_max } => Ok((tau_min, tau_max)),
            FitRange::Auto { .. } => {
                let dt_out = self.lockin.dt_out();
                let duration = match &self.segments {
                    Some(segs) => segs.iter().map(|s| s.duration).sum(),
                    None => self.diffusion.duration(),
                };
                let n_out = (duration / dt_out).round() as usize + 1;
                let lags: Vec<f64> = self
                    .fit
                    .lags
                    .resolve(n_out)?
                    .iter()
                    .map(|&k| k as f64 * dt_out)
                    .collect();
                let msd = lags
                    .iter()
                    .map(|&t| theoretical_msd(&self.diffusion, t))
                    .collect::<Result<Vec<_>>>()?;
                let curve = MsdCurve::exact(lags, msd, 0.0)?;
                resolve_fit_range(&curve, self.coherent_output_noise_std(), &self.fit.range)
            }
        }
    }
}

/// Seeds of one end-to-end run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub trajectory: u64,
    pub noise: u64,
}

pub fn run_seeds(base_seed: u64, run: usize, regime: Regime) -> RunSeeds {
    let tag = match regime {
        Regime::Coherent => stream::NOISE_COHERENT,
        Regime::Squeezed => stream::NOISE_SQUEEZED,
    };
    RunSeeds {
        trajectory: derive_seed(base_seed, stream::TRAJECTORY, run as u64),
        noise: derive_seed(base_seed, tag, run as u64),
    }
}

/// MSD with the record's white floor removed, fitted over `range`.
pub fn analyze_record(
    record: &PositionRecord,
    lags: &LagSpec,
    range: (f64, f64),
) -> Result<PowerLawFit> {
    let curve = subtract_noise_floor(&estimate_msd(record, lags)?, record.noise_std_est);
    fit_power_law(&curve, range)
}

fn run_one(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    regime: Regime,
    noise_seed: u64,
    range: (f64, f64),
) -> Result<PowerLawFit> {
    let record = detect(traj, &cfg.lockin, &cfg.noise, regime, noise_seed)?;
    analyze_record(&record, &cfg.fit.lags, range)
}

/// Runs the pipeline once per entry of `seeds`.
pub fn run_ensemble_seeded(
    cfg: &ExperimentConfig,
    regime: Regime,
    seeds: &[RunSeeds],
) -> Result<Vec<PowerLawFit>> {
    if seeds.len() < 2 {
        return Err(Error::invalid(
            "n_runs",
            format!("must be >= 2 to estimate a variance, got {}", seeds.len()),
        ));
    }
    let range = cfg.resolved_fit_range()?;
    seeds
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            cfg.trajectory(s.trajectory)
                .and_then(|traj| run_one(cfg, &traj, regime, s.noise, range))
                .map_err(|e| Error::Run {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// `n_runs` independent runs in one regime.
pub fn run_ensemble(cfg: &ExperimentConfig, regime: Regime) -> Result<Vec<PowerLawFit>> {
    cfg.validate()?;
    let seeds: Vec<RunSeeds> = (0..cfg.n_runs)
        .map(|i| run_seeds(cfg.base_seed, i, regime))
        .collect();
    run_ensemble_seeded(cfg, regime, &seeds)
}

/// Rate gain implied by a precision gain when σ_α ∝ 1/√T.
pub fn rate_gain_from_precision(precision_gain: f64) -> f64 {
    1.0 / (1.0 - precision_gain).powi(2) - 1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleReport {
    pub n_runs: usize,
    pub base_seed: u64,
    pub squeezing_db: f64,
    pub loss: f64,
    /// Squeezed white-floor power in shot-noise units.
    pub effective_variance: f64,
    pub fit_range: (f64, f64),
    pub mean_alpha_coherent: f64,
    pub mean_alpha_squeezed: f64,
    pub sigma_alpha_coherent: f64,
    pub sigma_alpha_squeezed: f64,
    /// `1 - sigma_squeezed / sigma_coherent`.
    pub precision_gain: f64,
    /// `1 / (1 - precision_gain)^2 - 1`.
    pub rate_gain: f64,
    pub confidence: f64,
    pub bootstrap_resamples: usize,
    pub sigma_coherent_ci: (f64, f64),
    pub sigma_squeezed_ci: (f64, f64),
    pub precision_gain_ci: (f64, f64),
    pub rate_gain_ci: (f64, f64),
    /// Pearson correlation of paired α̂ across runs.
    pub paired_correlation: f64,
    pub trajectory_seeds: Vec<u64>,
    pub alpha_coherent: Vec<f64>,
    pub alpha_squeezed: Vec<f64>,
}

impl EnsembleReport {
    /// Fractional noise-power reduction below the shot-noise limit.
    pub fn sub_qnl_fraction(&self) -> f64 {
        1.0 - self.effective_variance
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Percentile interval of `values` (sorted in place).
fn percentile_interval(values: &mut [f64], confidence: f64) -> (f64, f64) {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    let q = |p: f64| {
        let pos = p * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
    };
    let tail = (1.0 - confidence) / 2.0;
    (q(tail), q(1.0 - tail))
}

/// Paired comparison of coherent and squeezed detection.
pub fn compare_regimes(cfg: &ExperimentConfig) -> Result<EnsembleReport> {
    cfg.validate()?;
    let range = cfg.resolved_fit_range()?;
    let pairs: Vec<(u64, f64, f64)> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|i| {
            let coh = run_seeds(cfg.base_seed, i, Regime::Coherent);
            let sq = run_seeds(cfg.base_seed, i, Regime::Squeezed);
            let traj = cfg.trajectory(coh.trajectory)?;
            let a = run_one(cfg, &traj, Regime::Coherent, coh.noise, range)?;
            let b = run_one(cfg, &traj, Regime::Squeezed, sq.noise, range)?;
            Ok((coh.trajectory, a.alpha_hat, b.alpha_hat))
        })
        .enumerate()
        .map(|(i, r): (usize, Result<_>)| {
            r.map_err(|e| Error::Run {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let seeds: Vec<u64> = pairs.iter().map(|p| p.0).collect();
    let coh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let sq: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    let (s_coh, s_sq) = (std_dev(&coh), std_dev(&sq));
    if !(s_coh > 0.0 && s_sq > 0.0) {
        return Err(Error::Numerical(
            "degenerate ensemble: all alpha estimates identical".into(),
        ));
    }
    let precision_gain = 1.0 - s_sq / s_coh;

    let n = cfg.n_runs;
    let b = cfg.bootstrap_resamples;
    let mut g = GaussianStream::new(derive_seed(cfg.base_seed, stream::BOOTSTRAP, 0));
    let mut bs_coh = Vec::with_capacity(b);
    let mut bs_sq = Vec::with_capacity(b);
    let mut bs_p = Vec::with_capacity(b);
    let mut bs_r = Vec::with_capacity(b);
    let mut ra = vec![0.0; n];
    let mut rb = vec![0.0; n];
    for _ in 0..b {
        for j in 0..n {
            let k = g.below(n);
            ra[j] = coh[k];
            rb[j] = sq[k];
        }
        let (sa, sb) = (std_dev(&ra), std_dev(&rb));
        bs_coh.push(sa);
        bs_sq.push(sb);
        if sa > 0.0 {
            let p = 1.0 - sb / sa;
            bs_p.push(p);
            bs_r.push(rate_gain_from_precision(p));
        }
    }
    let confidence = 0.95;
    Ok(EnsembleReport {
        n_runs: n,
        base_seed: cfg.base_seed,
        squeezing_db: cfg.noise.squeezing_db(),
        loss: cfg.noise.loss(),
        effective_variance: effective_noise_variance(&cfg.noise),
        fit_range: range,
        mean_alpha_coherent: mean(&coh),
        mean_alpha_squeezed: mean(&sq),
        sigma_alpha_coherent: s_coh,
        sigma_alpha_squeezed: s_sq,
        precision_gain,
        rate_gain: rate_gain_from_precision(precision_gain),
        confidence,
        bootstrap_resamples: b,
        sigma_coherent_ci: percentile_interval(&mut bs_coh, confidence),
        sigma_squeezed_ci: percentile_interval(&mut bs_sq, confidence),
        precision_gain_ci: percentile_interval(&mut bs_p, confidence),
        rate_gain_ci: percentile_interval(&mut bs_r, confidence),
        paired_correlation: correlation(&coh, &sq),
        trajectory_seeds: seeds,
        alpha_coherent: coh,
        alpha_squeezed: sq,
    })
}

/// One window of an α(t) series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaPoint {
    /// Window start, s.
    pub t: f64,
    pub alpha: f64,
    pub stderr: f64,
}

/// Sliding-window MSD fits. Each window is floor-corrected with the
/// record's noise σ and fitted with `fit`; an automatic range is resolved
/// per window.
pub fn alpha_timeseries(
    record: &PositionRecord,
    window: f64,
    stride: f64,
    fit: &FitOptions,
) -> Result<Vec<AlphaPoint>> {
    let dt = record.dt_out;
    if !(stride > 0.0) || !stride.is_finite() {
        return Err(Error::invalid(
            "stride",
            format!("must be > 0, got {stride}"),
        ));
    }
    let w = (window / dt).round() as usize;
    let s = ((stride / dt).round() as usize).max(1);
    if w < 10 {
        return Err(Error::invalid(
            "window",
            format!("must span >= 10 samples, got {w}"),
        ));
    }
    if w > record.len() {
        return Err(Error::invalid(
            "window",
            format!(
                "{window} s exceeds the record duration {} s",
                record.duration()
            ),
        ));
    }
    let starts: Vec<usize> = (0..=(record.len() - w)).step_by(s).collect();
    starts
        .par_iter()
        .enumerate()
        .map(|(i, &start)| {
            let sub = record.slice(start, w);
            estimate_msd(&sub, &fit.lags)
                .map(|c| subtract_noise_floor(&c, sub.noise_std_est))
                .and_then(|curve| {
                    let range = resolve_fit_range(&curve, sub.noise_std_est, &fit.range)?;
                    fit_power_law(&curve, range)
                })
                .map(|f| AlphaPoint {
                    t: sub.t0,
                    alpha: f.alpha_hat,
                    stderr: f.alpha_stderr(),
                })
                .map_err(|e| Error::Run {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Empirical σ of α̂ for one window length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowPrecision {
    /// s.
    pub window: f64,
    pub sigma_alpha: f64,
    pub n_windows: usize,
}

/// Spread of windowed α̂ as a function of window length.
///
/// Every run is cut into non-overlapping windows of each length; windows
/// that straddle a segment boundary are discarded, and σ is the pooled
/// within-segment standard deviation (each segment has its own mean).
pub fn sigma_alpha_by_window(
    cfg: &ExperimentConfig,
    regime: Regime,
    windows: &[f64],
) -> Result<Vec<WindowPrecision>> {
    cfg.validate()?;
    let bounds: Vec<f64> = match &cfg.segments {
        Some(segs) => segs
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.duration;
                Some(*acc)
            })
            .collect(),
        None => vec![f64::INFINITY],
    };
    let segment_of = |t: f64| {
        bounds
            .iter()
            .position(|&b| t < b - 1e-12)
            .unwrap_or(bounds.len())
    };
    // per run: per window length: list of (segment, alpha)
    let per_run: Vec<Vec<Vec<(usize, f64)>>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|i| {
            let seeds = run_seeds(cfg.base_seed, i, regime);
            let traj = cfg.trajectory(seeds.trajectory)?;
            let record = detect(&traj, &cfg.lockin, &cfg.noise, regime, seeds.noise)?;
            let dt = record.dt_out;
            windows
                .iter()
                .map(|&win| {
                    let w = (win / dt).round() as usize;
                    let mut out = Vec::new();
                    let mut start = 0;
                    while start + w <= record.len() {
                        let sub = record.slice(start, w);
                        let (t_lo, t_hi) = (sub.t0, sub.t0 + sub.duration());
                        let seg = segment_of(t_lo);
                        if seg == segment_of(t_hi) && seg < bounds.len() {
                            let curve = subtract_noise_floor(
                                &estimate_msd(&sub, &cfg.fit.lags)?,
                                sub.noise_std_est,
                            );
                            let range =
                                resolve_fit_range(&curve, sub.noise_std_est, &cfg.fit.range)?;
                            out.push((seg, fit_power_law(&curve, range)?.alpha_hat));
                        }
                        start += w;
                    }
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Run {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;

    windows
        .iter()
        .enumerate()
        .map(|(wi, &win)| {
            let mut groups: Vec<Vec<f64>> = vec![Vec::new(); bounds.len()];
            for run in &per_run {
                for &(seg, a) in &run[wi] {
                    groups[seg].push(a);
                }
            }
            let (mut ss, mut dof, mut count) = (0.0, 0usize, 0usize);
            for g in groups.iter().filter(|g| g.len() >= 2) {
                let m = mean(g);
                ss += g.iter().map(|a| (a - m).powi(2)).sum::<f64>();
                dof += g.len() - 1;
                count += g.len();
            }
            if dof == 0 {
                return Err(Error::InsufficientData(format!(
                    "window {win} s yields fewer than two windows per segment"
                )));
            }
            Ok(WindowPrecision {
                window: win,
                sigma_alpha: (ss / dof as f64).sqrt(),
                n_windows: count,
            })
        })
        .collect()
}

/// Smallest window whose σ_α reaches `target`, by log-log interpolation
/// between the bracketing grid points. `None` when the target is not
/// bracketed by the grid.
pub fn minimal_window(points: &[WindowPrecision], target: f64) -> Option<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.window.total_cmp(&b.window));
    let i = pts.iter().position(|p| p.sigma_alpha <= target)?;
    if i == 0 {
        return None;
    }
    let (a, b) = (pts[i - 1], pts[i]);
    let (x0, x1) = (a.window.ln(), b.window.ln());
    let (y0, y1) = (a.sigma_alpha.ln(), b.sigma_alpha.ln());
    let x = x0 + (target.ln() - y0) * (x1 - x0) / (y1 - y0);
    Some(x.exp())
}
