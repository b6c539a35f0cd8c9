use crate::detection::PositionRecord;
use crate::error::{Error, Result};

/// Time-averaged MSD with per-lag uncertainty.
#[derive(Clone, Debug, PartialEq)]
pub struct MsdCurve {
    /// Seconds, strictly increasing.
    pub lags: Vec<f64>,
    /// μm².
    pub msd: Vec<f64>,
    /// μm².
    pub stderr: Vec<f64>,
    pub n_pairs: Vec<usize>,
    /// `2 sigma^2` already removed from `msd`, μm².
    pub floor_subtracted: f64,
}

impl MsdCurve {
    pub fn new(
        lags: Vec<f64>,
        msd: Vec<f64>,
        stderr: Vec<f64>,
        n_pairs: Vec<usize>,
    ) -> Result<Self> {
        let n = lags.len();
        if msd.len() != n || stderr.len() != n || n_pairs.len() != n {
            return Err(Error::invalid("msd curve", "column lengths differ"));
        }
        if lags.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(Error::invalid("lags", "must be positive and finite"));
        }
        if lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("lags", "must be strictly increasing"));
        }
        if stderr.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid("stderr", "must be >= 0 and finite"));
        }
        if msd.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("msd", "must be finite"));
        }
        Ok(Self {
            lags,
            msd,
            stderr,
            n_pairs,
            floor_subtracted: 0.0,
        })
    }

    /// Curve from exact values with a fixed relative uncertainty.
    pub fn exact(lags: Vec<f64>, msd: Vec<f64>, rel_err: f64) -> Result<Self> {
        let stderr = msd.iter().map(|m| (m * rel_err).abs()).collect();
        let n = lags.len();
        Self::new(lags, msd, stderr, vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }
    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// Indices whose MSD is not positive (possible after floor subtraction).
    pub fn non_positive(&self) -> Vec<usize> {
        self.msd
            .iter()
            .enumerate()
            .filter(|(_, m)| **m <= 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Lags in samples.
#[derive(Clone, Debug, PartialEq)]
pub enum LagSpec {
    /// `round(10^(j / per_decade))` for j = 0, 1, ..., deduplicated, between
    /// `min_lag` and the cap (and `max_lag` if given).
    LogSpaced {
        per_decade: f64,
        min_lag: usize,
        max_lag: Option<usize>,
    },
    Samples(Vec<usize>),
}

impl Default for LagSpec {
    fn default() -> Self {
        LagSpec::LogSpaced {
            per_decade: 15.0,
            min_lag: 1,
            max_lag: None,
        }
    }
}

impl LagSpec {
    /// Resolves to sample lags for a record of `n` samples. Lags are capped at
    /// a quarter of the record duration.
    pub fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "record has {n} samples, need >= 2"
            )));
        }
        let cap = (n - 1) / 4;
        match self {
            LagSpec::Samples(lags) => {
                if lags.is_empty() {
                    return Err(Error::invalid("lags", "empty lag list"));
                }
                if let Some(&bad) = lags.iter().find(|&&k| k == 0 || k > cap) {
                    return Err(Error::invalid(
                        "lags",
                        format!("lag {bad} outside 1..={cap} (a quarter of the record)"),
                    ));
                }
                let mut v = lags.clone();
                v.sort_unstable();
                v.dedup();
                Ok(v)
            }
            LagSpec::LogSpaced {
                per_decade,
                min_lag,
                max_lag,
            } => {
                if !(*per_decade > 0.0) {
                    return Err(Error::invalid("per_decade", "must be > 0"));
                }
                let hi = max_lag.map_or(cap, |m| m.min(cap));
                let lo = (*min_lag).max(1);
                if hi < lo {
                    return Err(Error::InsufficientData(format!(
                        "record of {n} samples admits no lag >= {lo} (cap {cap})"
                    )));
                }
                let mut v = Vec::new();
                let mut j = 0.0;
                loop {
                    let k = 10f64.powf(j / per_decade).round() as usize;
                    if k > hi {
                        break;
                    }
                    if k >= lo && v.last() != Some(&k) {
                        v.push(k);
                    }
                    j += 1.0;
                }
                if v.first() != Some(&lo) {
                    v.insert(0, lo);
                }
                Ok(v)
            }
        }
    }
}

/// Time-averaged MSD over all overlapping pairs.
///
/// The standard error treats `n_pairs / (2k)` pairs at lag `k` as
/// independent.
pub fn estimate_msd(record: &PositionRecord, lag_spec: &LagSpec) -> Result<MsdCurve> {
    let x = &record.positions;
    let lags = lag_spec.resolve(x.len())?;
    let mut out_lags = Vec::with_capacity(lags.len());
    let mut msd = Vec::with_capacity(lags.len());
    let mut stderr = Vec::with_capacity(lags.len());
    let mut n_pairs = Vec::with_capacity(lags.len());
    for k in lags {
        let pairs = x.len() - k;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..pairs {
            let d = x[i + k] - x[i];
            let d2 = d * d;
            s += d2;
            s2 += d2 * d2;
        }
        let mean = s / pairs as f64;
        let var = if pairs > 1 {
            ((s2 - s * mean) / (pairs - 1) as f64).max(0.0)
        } else {
            0.0
        };
        let n_eff = (pairs as f64 / (2.0 * k as f64)).max(1.0);
        out_lags.push(k as f64 * record.dt_out);
        msd.push(mean);
        stderr.push((var / n_eff).sqrt());
        n_pairs.push(pairs);
    }
    MsdCurve::new(out_lags, msd, stderr, n_pairs)
}

/// Removes the white-noise contribution `2 sigma^2`. Negative results are kept.
pub fn subtract_noise_floor(curve: &MsdCurve, sigma: f64) -> MsdCurve {
    let floor = 2.0 * sigma * sigma;
    let mut out = curve.clone();
    for m in &mut out.msd {
        *m -= floor;
    }
    out.floor_subtracted += floor;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::Regime;
    use crate::rng::GaussianStream;

    fn record(positions: Vec<f64>, dt: f64) -> PositionRecord {
        PositionRecord {
            dt_out: dt,
            t0: 0.0,
            positions,
            regime: Regime::Coherent,
            noise_std_est: 0.0,
        }
    }

    #[test]
    fn lag_grid() {
        let lags = LagSpec::default().resolve(4001).unwrap();
        assert_eq!(lags[0], 1);
        assert_eq!(*lags.last().unwrap(), 1000);
        assert!(lags.windows(2).all(|w| w[1] > w[0]));
        // about 15 per decade once rounding stops merging
        let decade = lags.iter().filter(|&&k| (100..1000).contains(&k)).count();
        assert_eq!(decade, 15);
        assert!(LagSpec::Samples(vec![1, 2000]).resolve(4001).is_err());
        assert!(LagSpec::default().resolve(1).is_err());
        assert!(LagSpec::default().resolve(4).is_err());
    }

    #[test]
    fn constant_record_has_zero_msd() {
        let c = estimate_msd(&record(vec![1.5; 100], 0.1), &LagSpec::default()).unwrap();
        assert!(c.msd.iter().all(|&m| m == 0.0));
        assert!(c.stderr.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn drift_record_is_ballistic() {
        let dt = 0.01;
        let x: Vec<f64> = (0..1000).map(|i| i as f64 * dt).collect();
        let c = estimate_msd(&record(x, dt), &LagSpec::default()).unwrap();
        for (t, m) in c.lags.iter().zip(&c.msd) {
            assert!(
                (m - t * t).abs() < 1e-12 * t * t.max(1.0),
                "{m} vs {}",
                t * t
            );
        }
    }

    #[test]
    fn white_noise_floor() {
        let mut g = GaussianStream::new(3);
        let x: Vec<f64> = (0..100_000).map(|_| 0.1 * g.normal()).collect();
        let c = estimate_msd(&record(x, 1.0), &LagSpec::default()).unwrap();
        for (m, s) in c.msd.iter().zip(&c.stderr) {
            assert!((m - 0.02).abs() < 3.0 * s, "{m} ± {s}");
        }
        let corr = subtract_noise_floor(&c, 0.1);
        for (m, s) in corr.msd.iter().zip(&corr.stderr) {
            assert!(m.abs() < 3.0 * s);
        }
        assert!((corr.floor_subtracted - 0.02).abs() < 1e-15);
    }

    #[test]
    fn floor_subtraction_arithmetic() {
        let c = MsdCurve::new(vec![1.0], vec![2.5], vec![0.1], vec![10]).unwrap();
        assert_eq!(subtract_noise_floor(&c, 0.0), c);
        let s = subtract_noise_floor(&c, 0.5);
        assert!((s.msd[0] - 2.0).abs() < 1e-15);
        let neg = subtract_noise_floor(&c, 2.0);
        assert!(neg.msd[0] < 0.0);
        assert_eq!(neg.non_positive(), vec![0]);
    }

    #[test]
    fn curve_validation() {
        assert!(MsdCurve::new(vec![2.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0], vec![1, 1]).is_err());
        assert!(MsdCurve::new(vec![0.0], vec![1.0], vec![0.0], vec![1]).is_err());
        assert!(MsdCurve::new(vec![1.0], vec![1.0], vec![-1.0], vec![1]).is_err());
    }
}
