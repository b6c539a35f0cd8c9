//! Measurement chain: stroboscopic gating, detection noise (white shot or
//! squeezed floor plus low-frequency technical noise) and lock-in
//! demodulation back to a position record.

pub mod colored;
pub mod fir;
pub mod spectrum;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, GaussianStream};
use crate::trajectory::Trajectory;

/// Stopband attenuation of the demodulation filter, dB.
pub const STOPBAND_DB: f64 = 80.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LockInConfig {
    sample_rate: f64,
    f_mod: f64,
    duty_cycle: f64,
    lp_cutoff: f64,
    decimation: usize,
}

impl LockInConfig {
    pub fn new(
        sample_rate: f64,
        f_mod: f64,
        duty_cycle: f64,
        lp_cutoff: f64,
        decimation: usize,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::invalid("sample_rate", "must be > 0"));
        }
        if !(f_mod > 0.0 && f_mod < sample_rate / 2.0) {
            return Err(Error::invalid(
                "f_mod",
                format!(
                    "must lie in (0, sample_rate/2 = {}), got {f_mod}",
                    sample_rate / 2.0
                ),
            ));
        }
        if !(duty_cycle > 0.0 && duty_cycle <= 1.0) {
            return Err(Error::invalid(
                "duty_cycle",
                format!("must lie in (0, 1], got {duty_cycle}"),
            ));
        }
        if !(lp_cutoff > 0.0 && lp_cutoff < f_mod / 2.0) {
            return Err(Error::invalid(
                "lp_cutoff",
                format!(
                    "must lie in (0, f_mod/2 = {}), got {lp_cutoff}",
                    f_mod / 2.0
                ),
            ));
        }
        if decimation == 0 {
            return Err(Error::invalid("decimation", "must be >= 1"));
        }
        Ok(Self {
            sample_rate,
            f_mod,
            duty_cycle,
            lp_cutoff,
            decimation,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }
    pub fn f_mod(&self) -> f64 {
        self.f_mod
    }
    pub fn duty_cycle(&self) -> f64 {
        self.duty_cycle
    }
    pub fn lp_cutoff(&self) -> f64 {
        self.lp_cutoff
    }
    pub fn decimation(&self) -> usize {
        self.decimation
    }
    pub fn dt_out(&self) -> f64 {
        self.decimation as f64 / self.sample_rate
    }

    /// Gate state at raw sample `k`.
    pub fn gate(&self, k: usize) -> bool {
        let phase = (k as f64 * self.f_mod / self.sample_rate).fract();
        phase < self.duty_cycle
    }

    /// Demodulation filter taps. The transition band is centred on
    /// `lp_cutoff` with width `min(lp_cutoff/2, f_mod - 2 lp_cutoff)`. The tap
    /// count is odd, so the group delay is a whole number of raw samples.
    pub fn filter_taps(&self) -> Vec<f64> {
        let fc = self.lp_cutoff / self.sample_rate;
        let tw = (0.5 * self.lp_cutoff).min(self.f_mod - 2.0 * self.lp_cutoff) / self.sample_rate;
        let len = fir::kaiser_length(tw, STOPBAND_DB) | 1;
        fir::lowpass(fc, STOPBAND_DB, len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Coherent,
    Squeezed,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Coherent => "coherent",
            Regime::Squeezed => "squeezed",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coherent" => Ok(Regime::Coherent),
            "squeezed" => Ok(Regime::Squeezed),
            other => Err(Error::invalid(
                "regime",
                format!("expected coherent|squeezed, got {other:?}"),
            )),
        }
    }
}

/// Detection noise. `shot_std` is the position-equivalent shot-noise σ per
/// raw sample (μm); `loss` is the detection efficiency η applied to the
/// squeezed variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    shot_std: f64,
    squeezing_db: f64,
    technical_amp: f64,
    technical_beta: f64,
    loss: f64,
}

impl NoiseModel {
    pub fn new(
        shot_std: f64,
        squeezing_db: f64,
        technical_amp: f64,
        technical_beta: f64,
        loss: f64,
    ) -> Result<Self> {
        if !(shot_std.is_finite() && shot_std >= 0.0) {
            return Err(Error::invalid(
                "shot_std",
                format!("must be >= 0, got {shot_std}"),
            ));
        }
        if !(squeezing_db.is_finite() && squeezing_db >= 0.0) {
            return Err(Error::invalid(
                "squeezing_db",
                format!("must be >= 0, got {squeezing_db}"),
            ));
        }
        if !(technical_amp.is_finite() && technical_amp >= 0.0) {
            return Err(Error::invalid(
                "technical_amp",
                format!("must be >= 0, got {technical_amp}"),
            ));
        }
        if !(technical_beta.is_finite() && technical_beta >= 0.0) {
            return Err(Error::invalid(
                "technical_beta",
                format!("must be >= 0, got {technical_beta}"),
            ));
        }
        if !(0.0..=1.0).contains(&loss) {
            return Err(Error::invalid(
                "loss",
                format!("efficiency must lie in [0, 1], got {loss}"),
            ));
        }
        Ok(Self {
            shot_std,
            squeezing_db,
            technical_amp,
            technical_beta,
            loss,
        })
    }

    /// Shot-noise-only model.
    pub fn shot_only(shot_std: f64) -> Result<Self> {
        Self::new(shot_std, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn shot_std(&self) -> f64 {
        self.shot_std
    }
    pub fn squeezing_db(&self) -> f64 {
        self.squeezing_db
    }
    pub fn technical_amp(&self) -> f64 {
        self.technical_amp
    }
    pub fn technical_beta(&self) -> f64 {
        self.technical_beta
    }
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn with_squeezing_db(&self, db: f64) -> Result<Self> {
        Self::new(
            self.shot_std,
            db,
            self.technical_amp,
            self.technical_beta,
            self.loss,
        )
    }
    pub fn with_shot_std(&self, s: f64) -> Result<Self> {
        Self::new(
            s,
            self.squeezing_db,
            self.technical_amp,
            self.technical_beta,
            self.loss,
        )
    }
    pub fn with_technical(&self, amp: f64, beta: f64) -> Result<Self> {
        Self::new(self.shot_std, self.squeezing_db, amp, beta, self.loss)
    }

    /// White-floor variance in shot-noise units for a regime.
    pub fn regime_variance(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Coherent => 1.0,
            Regime::Squeezed => effective_noise_variance(self),
        }
    }

    /// White-floor σ per raw sample for a regime, μm.
    pub fn white_std(&self, regime: Regime) -> f64 {
        self.shot_std * self.regime_variance(regime).sqrt()
    }
}

/// `eta * 10^(-dB/10) + (1 - eta)`: squeezed noise power relative to shot
/// noise after optical loss mixes in vacuum.
pub fn effective_noise_variance(model: &NoiseModel) -> f64 {
    let eta = model.loss;
    eta * 10f64.powf(-model.squeezing_db / 10.0) + (1.0 - eta)
}

/// Linear efficiency map `eta(P) = max(0, eta0 - slope * P)`, for squeezing
/// that degrades with trap power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossMap {
    pub eta0: f64,
    /// Efficiency lost per watt.
    pub slope_per_w: f64,
}

impl LossMap {
    pub fn efficiency(&self, trap_power_w: f64) -> f64 {
        (self.eta0 - self.slope_per_w * trap_power_w).clamp(0.0, 1.0)
    }
}

/// Raw detector samples at the lock-in sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RawStream {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

/// Demodulated position estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionRecord {
    pub dt_out: f64,
    /// Time of the first sample relative to the start of the trajectory, s.
    pub t0: f64,
    pub positions: Vec<f64>,
    pub regime: Regime,
    /// White-floor position σ per output sample, μm.
    pub noise_std_est: f64,
}

impl PositionRecord {
    /// Noise-free record sampled directly from a trajectory.
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self {
            dt_out: traj.dt(),
            t0: 0.0,
            positions: traj.positions.clone(),
            regime: Regime::Coherent,
            noise_std_est: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn duration(&self) -> f64 {
        self.positions.len().saturating_sub(1) as f64 * self.dt_out
    }

    /// Sub-record of `len` samples starting at sample `start`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            dt_out: self.dt_out,
            t0: self.t0 + start as f64 * self.dt_out,
            positions: self.positions[start..start + len].to_vec(),
            regime: self.regime,
            noise_std_est: self.noise_std_est,
        }
    }
}

/// Gates the trajectory with the stroboscopic illumination.
///
/// The trajectory is linearly interpolated onto the raw grid (raw sample `k`
/// sits at time `k / sample_rate`), covering the span from its first to its
/// last sample.
pub fn modulate(traj: &Trajectory, cfg: &LockInConfig) -> Result<RawStream> {
    let ratio = cfg.sample_rate * traj.dt();
    let n_raw = ((traj.len() - 1) as f64 * ratio + 1e-9).floor() as usize + 1;
    let period = cfg.sample_rate / cfg.f_mod;
    if (n_raw as f64) < 4.0 * period {
        return Err(Error::InsufficientData(format!(
            "trajectory spans {n_raw} raw samples, fewer than 4 modulation periods ({:.1} samples)",
            4.0 * period
        )));
    }
    let int_ratio = (ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0;
    let last = traj.len() - 1;
    let samples = (0..n_raw)
        .map(|k| {
            let (idx, frac) = if int_ratio {
                let r = ratio.round() as usize;
                (k / r, (k % r) as f64 / r as f64)
            } else {
                let u = k as f64 / ratio;
                let i = u.floor();
                (i as usize, u - i)
            };
            let x = if idx >= last {
                traj.positions[last]
            } else if frac == 0.0 {
                traj.positions[idx]
            } else {
                traj.positions[idx] * (1.0 - frac) + traj.positions[idx + 1] * frac
            };
            if cfg.gate(k) {
                x
            } else {
                0.0
            }
        })
        .collect();
    Ok(RawStream {
        sample_rate: cfg.sample_rate,
        samples,
    })
}

/// Adds the white detection floor (variance `shot_std^2` for coherent light,
/// `shot_std^2 * V_eff` for squeezed) and the technical power-law noise.
pub fn add_noise(stream: &RawStream, model: &NoiseModel, regime: Regime, seed: u64) -> RawStream {
    let mut samples = stream.samples.clone();
    let sigma = model.white_std(regime);
    if sigma > 0.0 {
        let mut g = GaussianStream::new(seed);
        for s in &mut samples {
            *s += sigma * g.normal();
        }
    }
    if model.technical_amp > 0.0 {
        let mut g = GaussianStream::new(derive_seed(seed, stream::TECHNICAL, 0));
        let tech = colored::power_law_noise(
            samples.len(),
            stream.sample_rate,
            model.technical_amp,
            model.technical_beta,
            &mut g,
        );
        for (s, t) in samples.iter_mut().zip(tech) {
            *s += t;
        }
    }
    RawStream {
        sample_rate: stream.sample_rate,
        samples,
    }
}

/// Lock-in demodulation.
///
/// The reference is the gate minus its mean on-fraction `d`, so it has no DC
/// component; the product is low-pass filtered, decimated and multiplied by
/// `1 / (d (1 - d))`, which returns a constant gated input unchanged. With a
/// duty cycle of 1 there is nothing to demodulate and the chain reduces to a
/// plain low-pass.
pub fn demodulate(
    stream: &RawStream,
    cfg: &LockInConfig,
    model: &NoiseModel,
    regime: Regime,
) -> Result<PositionRecord> {
    if (stream.sample_rate - cfg.sample_rate).abs() > 1e-9 * cfg.sample_rate {
        return Err(Error::invalid(
            "sample_rate",
            "stream and lock-in sample rates differ",
        ));
    }
    let n = stream.samples.len();
    let gate: Vec<bool> = (0..n).map(|k| cfg.gate(k)).collect();
    let on = gate.iter().filter(|g| **g).count();
    if on == 0 {
        return Err(Error::invalid(
            "duty_cycle",
            "gate is never on at this sample rate",
        ));
    }
    let d = on as f64 / n as f64;
    let (reference, cal): (Vec<f64>, f64) = if on == n {
        (vec![1.0; n], 1.0)
    } else {
        (
            gate.iter().map(|&g| if g { 1.0 - d } else { -d }).collect(),
            1.0 / (d * (1.0 - d)),
        )
    };
    let product: Vec<f64> = stream
        .samples
        .iter()
        .zip(&reference)
        .map(|(s, r)| s * r)
        .collect();

    let taps = cfg.filter_taps();
    let len = taps.len();
    if n < len {
        return Err(Error::InsufficientData(format!(
            "stream has {n} samples, filter warm-up needs {len}"
        )));
    }
    let dec = cfg.decimation;
    // output j is centred on raw sample j * dec
    let shift = -((len / 2) as isize);
    let mut positions = Vec::new();
    let mut first = None;
    let mut gain_sq = 0.0;
    let mut j = 0usize;
    loop {
        let start = (j * dec) as isize + shift;
        if start + len as isize > n as isize {
            break;
        }
        if start >= 0 {
            let s = start as usize;
            let win = &product[s..s + len];
            let acc: f64 = taps.iter().zip(win).map(|(h, p)| h * p).sum();
            let rwin = &reference[s..s + len];
            gain_sq += taps
                .iter()
                .zip(rwin)
                .map(|(h, r)| h * h * r * r)
                .sum::<f64>();
            positions.push(cal * acc);
            first.get_or_insert(j);
        }
        j += 1;
    }
    let first = first.ok_or_else(|| {
        Error::InsufficientData(format!("stream of {n} samples yields no settled output"))
    })?;
    let white = model.white_std(regime);
    let noise_std_est = cal * white * (gain_sq / positions.len() as f64).sqrt();
    Ok(PositionRecord {
        dt_out: cfg.dt_out(),
        t0: first as f64 * cfg.dt_out(),
        positions,
        regime,
        noise_std_est,
    })
}

/// Full chain: gate, add noise, demodulate.
pub fn detect(
    traj: &Trajectory,
    cfg: &LockInConfig,
    model: &NoiseModel,
    regime: Regime,
    seed: u64,
) -> Result<PositionRecord> {
    let raw = modulate(traj, cfg)?;
    let noisy = add_noise(&raw, model, regime, seed);
    demodulate(&noisy, cfg, model, regime)
}
