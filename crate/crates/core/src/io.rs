//! Text file formats.
//!
//! Position files start with a magic comment line and `# key=value`
//! metadata lines, followed by one decimal value per line (μm, 16
//! significant digits). Tabular outputs are CSV with the same comment
//! preamble; summaries are `key = value` documents. Every writer accepts
//! provenance pairs (seed, config hash, input path) that are embedded in
//! the preamble.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::detection::{PositionRecord, Regime};
use crate::error::{Error, Result};
use crate::harness::{AlphaPoint, EnsembleReport};
use crate::rheology::{MsdCurve, PowerLawFit, ViscoelasticModuli};
use crate::trajectory::Trajectory;

pub const TRAJECTORY_MAGIC: &str = "# squeezetrack-trajectory v1";
pub const RECORD_MAGIC: &str = "# squeezetrack-record v1";
pub const MSD_MAGIC: &str = "# squeezetrack-msd v1";
pub const MODULI_MAGIC: &str = "# squeezetrack-moduli v1";
pub const ALPHA_MAGIC: &str = "# squeezetrack-alpha-series v1";
pub const FIT_MAGIC: &str = "# squeezetrack-fit v1";
pub const REPORT_MAGIC: &str = "# squeezetrack-ensemble v1";

/// Ordered provenance pairs.
pub type Provenance = [(String, String)];

fn num(x: f64) -> String {
    format!("{x:.15e}")
}

fn write_provenance(w: &mut impl Write, prov: &Provenance) -> Result<()> {
    if !prov.is_empty() {
        let line: Vec<String> = prov.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(w, "# {}", line.join(" "))?;
    }
    Ok(())
}

pub fn write_trajectory(w: &mut impl Write, traj: &Trajectory, prov: &Provenance) -> Result<()> {
    let p = &traj.params;
    writeln!(w, "{TRAJECTORY_MAGIC}")?;
    writeln!(
        w,
        "# dt={} alpha={} D={} seed={}",
        num(p.dt()),
        num(p.alpha()),
        num(p.d_coeff()),
        traj.seed
    )?;
    writeln!(w, "# n={}", traj.len())?;
    if let Some(segs) = &traj.segments {
        for s in segs {
            writeln!(
                w,
                "# segment alpha={} D={} duration={}",
                num(s.params.alpha()),
                num(s.params.d_coeff()),
                num(s.duration)
            )?;
        }
    }
    write_provenance(w, prov)?;
    for x in &traj.positions {
        writeln!(w, "{}", num(*x))?;
    }
    Ok(())
}

pub fn write_record(w: &mut impl Write, rec: &PositionRecord, prov: &Provenance) -> Result<()> {
    writeln!(w, "{RECORD_MAGIC}")?;
    writeln!(
        w,
        "# dt_out={} regime={} noise_std={}",
        num(rec.dt_out),
        rec.regime,
        num(rec.noise_std_est)
    )?;
    writeln!(w, "# t0={} n={}", num(rec.t0), rec.len())?;
    write_provenance(w, prov)?;
    for x in &rec.positions {
        writeln!(w, "{}", num(*x))?;
    }
    Ok(())
}

/// Values and `key=value` metadata of a position file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PositionFile {
    pub magic: String,
    pub meta: BTreeMap<String, String>,
    pub values: Vec<f64>,
}

impl PositionFile {
    fn get_f64(&self, key: &str, line: usize) -> Result<Option<f64>> {
        self.meta
            .get(key)
            .map(|v| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("metadata {key}={v:?} is not a number"),
                })
            })
            .transpose()
    }
}

/// Reads a file in the position format. The declared count `n`, when
/// present, must match the number of values, and the last line must be
/// newline-terminated.
pub fn read_position_file(mut r: impl BufRead) -> Result<PositionFile> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut file = PositionFile::default();
    let mut last_line = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if lineno == 1 {
                file.magic = t.to_string();
                continue;
            }
            for tok in rest.split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    file.meta
                        .entry(k.to_string())
                        .or_insert_with(|| v.to_string());
                }
            }
            continue;
        }
        let v: f64 = t.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("expected a number, found {t:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("non-finite value {t:?}"),
            });
        }
        file.values.push(v);
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(Error::Parse {
            line: last_line,
            message: "last line is not newline-terminated (truncated file?)".into(),
        });
    }
    if let Some(n) = file.meta.get("n") {
        let n: usize = n.parse().map_err(|_| Error::Parse {
            line: 1,
            message: format!("bad count n={n:?}"),
        })?;
        if n != file.values.len() {
            return Err(Error::Parse {
                line: last_line + 1,
                message: format!(
                    "file declares n={n} values but contains {} (truncated?)",
                    file.values.len()
                ),
            });
        }
    }
    Ok(file)
}

/// Reads a record file; trajectory files are accepted as noise-free records.
pub fn read_record(r: impl BufRead) -> Result<(PositionRecord, PositionFile)> {
    let file = read_position_file(r)?;
    let record = if file.magic == RECORD_MAGIC {
        let dt = file.get_f64("dt_out", 2)?.ok_or_else(|| Error::Parse {
            line: 2,
            message: "missing dt_out".into(),
        })?;
        let regime = match file.meta.get("regime") {
            Some(s) => s.parse::<Regime>().map_err(|e| Error::Parse {
                line: 2,
                message: e.to_string(),
            })?,
            None => Regime::Coherent,
        };
        PositionRecord {
            dt_out: dt,
            t0: file.get_f64("t0", 3)?.unwrap_or(0.0),
            positions: file.values.clone(),
            regime,
            noise_std_est: file.get_f64("noise_std", 2)?.unwrap_or(0.0),
        }
    } else if file.magic == TRAJECTORY_MAGIC {
        let dt = file.get_f64("dt", 2)?.ok_or_else(|| Error::Parse {
            line: 2,
            message: "missing dt".into(),
        })?;
        PositionRecord {
            dt_out: dt,
            t0: 0.0,
            positions: file.values.clone(),
            regime: Regime::Coherent,
            noise_std_est: 0.0,
        }
    } else {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected {RECORD_MAGIC:?} or {TRAJECTORY_MAGIC:?} header, found {:?}",
                file.magic
            ),
        });
    };
    if !(record.dt_out > 0.0) {
        return Err(Error::Parse {
            line: 2,
            message: format!("dt must be > 0, got {}", record.dt_out),
        });
    }
    Ok((record, file))
}

/// Column selection for delimited third-party files.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Index(usize),
    Name(String),
}

/// How to read a third-party trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnMapping {
    pub column: Column,
    pub delimiter: char,
    /// First non-comment line holds column names.
    pub has_header: bool,
    /// Multiplier converting file units to μm.
    pub to_um: f64,
    /// Sample interval, s.
    pub dt: f64,
    /// White noise σ per sample, μm.
    pub noise_std: f64,
}

impl ColumnMapping {
    pub fn unit_factor(unit: &str) -> Option<f64> {
        match unit {
            "m" => Some(1e6),
            "mm" => Some(1e3),
            "um" | "μm" => Some(1.0),
            "nm" => Some(1e-3),
            _ => None,
        }
    }
}

pub fn read_columns(r: impl BufRead, map: &ColumnMapping) -> Result<PositionRecord> {
    let mut idx = match &map.column {
        Column::Index(i) => Some(*i),
        Column::Name(_) => None,
    };
    let mut header_seen = !map.has_header;
    let mut positions = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if map.delimiter.is_whitespace() {
            t.split_whitespace().collect()
        } else {
            t.split(map.delimiter).map(str::trim).collect()
        };
        if !header_seen {
            header_seen = true;
            if let Column::Name(name) = &map.column {
                idx = Some(
                    fields
                        .iter()
                        .position(|f| f == name)
                        .ok_or_else(|| Error::Parse {
                            line: lineno,
                            message: format!("column {name:?} not found in header"),
                        })?,
                );
            }
            continue;
        }
        let col = idx.ok_or_else(|| Error::Parse {
            line: lineno,
            message: "column given by name but the file has no header row".into(),
        })?;
        let field = fields.get(col).ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!(
                "expected at least {} fields, found {}",
                col + 1,
                fields.len()
            ),
        })?;
        let v: f64 = field.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("expected a number, found {field:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("non-finite value {field:?}"),
            });
        }
        positions.push(v * map.to_um);
    }
    Ok(PositionRecord {
        dt_out: map.dt,
        t0: 0.0,
        positions,
        regime: Regime::Coherent,
        noise_std_est: map.noise_std,
    })
}

pub fn write_msd(w: &mut impl Write, curve: &MsdCurve, prov: &Provenance) -> Result<()> {
    writeln!(w, "{MSD_MAGIC}")?;
    writeln!(w, "# floor_subtracted_um2={}", num(curve.floor_subtracted))?;
    write_provenance(w, prov)?;
    writeln!(w, "lag_s,msd_um2,stderr_um2,n_pairs")?;
    for i in 0..curve.len() {
        writeln!(
            w,
            "{},{},{},{}",
            num(curve.lags[i]),
            num(curve.msd[i]),
            num(curve.stderr[i]),
            curve.n_pairs[i]
        )?;
    }
    Ok(())
}

pub fn write_moduli(w: &mut impl Write, m: &ViscoelasticModuli, prov: &Provenance) -> Result<()> {
    writeln!(w, "{MODULI_MAGIC}")?;
    writeln!(
        w,
        "# bead_radius_um={} temperature_k={}",
        num(m.bead_radius),
        num(m.temperature)
    )?;
    write_provenance(w, prov)?;
    writeln!(w, "omega_rad_s,g_storage_pa,g_loss_pa,g_mag_pa,alpha_local")?;
    for i in 0..m.omega.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            num(m.omega[i]),
            num(m.g_storage[i]),
            num(m.g_loss[i]),
            num(m.g_mag[i]),
            num(m.alpha_local[i])
        )?;
    }
    Ok(())
}

pub fn write_alpha_series(
    w: &mut impl Write,
    series: &[AlphaPoint],
    prov: &Provenance,
) -> Result<()> {
    writeln!(w, "{ALPHA_MAGIC}")?;
    write_provenance(w, prov)?;
    writeln!(w, "t,alpha,stderr")?;
    for p in series {
        writeln!(w, "{},{},{}", num(p.t), num(p.alpha), num(p.stderr))?;
    }
    Ok(())
}

/// Parses the CSV written by [`write_alpha_series`].
pub fn read_alpha_series(r: impl BufRead) -> Result<Vec<AlphaPoint>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with("t,") {
            continue;
        }
        let f: Vec<f64> = t
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad row {t:?}"),
            })?;
        if f.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 fields, found {}", f.len()),
            });
        }
        out.push(AlphaPoint {
            t: f[0],
            alpha: f[1],
            stderr: f[2],
        });
    }
    Ok(out)
}

fn kv(w: &mut impl Write, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(w, "{key} = {value}")?;
    Ok(())
}

pub fn write_fit_summary(w: &mut impl Write, fit: &PowerLawFit, prov: &Provenance) -> Result<()> {
    writeln!(w, "{FIT_MAGIC}")?;
    for (k, v) in prov {
        kv(w, k, v)?;
    }
    kv(w, "alpha_hat", num(fit.alpha_hat))?;
    kv(w, "alpha_stderr", num(fit.alpha_stderr()))?;
    kv(w, "d_hat_um2_per_s_alpha", num(fit.d_hat))?;
    kv(w, "cov_ln2d_ln2d", num(fit.covariance[0][0]))?;
    kv(w, "cov_ln2d_alpha", num(fit.covariance[0][1]))?;
    kv(w, "cov_alpha_alpha", num(fit.covariance[1][1]))?;
    kv(w, "fit_tau_min_s", num(fit.fit_range.0))?;
    kv(w, "fit_tau_max_s", num(fit.fit_range.1))?;
    kv(w, "fit_n_lags", fit.n_lags)?;
    kv(w, "residual_norm", num(fit.residual_norm))?;
    Ok(())
}

pub fn write_report(w: &mut impl Write, r: &EnsembleReport, prov: &Provenance) -> Result<()> {
    writeln!(w, "{REPORT_MAGIC}")?;
    for (k, v) in prov {
        kv(w, k, v)?;
    }
    kv(w, "n_runs", r.n_runs)?;
    kv(w, "base_seed", r.base_seed)?;
    kv(w, "squeezing_db", num(r.squeezing_db))?;
    kv(w, "loss_efficiency", num(r.loss))?;
    kv(w, "effective_variance", num(r.effective_variance))?;
    kv(w, "sub_qnl_fraction", num(r.sub_qnl_fraction()))?;
    kv(w, "fit_tau_min_s", num(r.fit_range.0))?;
    kv(w, "fit_tau_max_s", num(r.fit_range.1))?;
    kv(w, "mean_alpha_coherent", num(r.mean_alpha_coherent))?;
    kv(w, "mean_alpha_squeezed", num(r.mean_alpha_squeezed))?;
    kv(w, "sigma_alpha_coherent", num(r.sigma_alpha_coherent))?;
    kv(w, "sigma_alpha_squeezed", num(r.sigma_alpha_squeezed))?;
    kv(w, "precision_gain", num(r.precision_gain))?;
    kv(w, "rate_gain", num(r.rate_gain))?;
    kv(w, "confidence", num(r.confidence))?;
    kv(w, "bootstrap_resamples", r.bootstrap_resamples)?;
    kv(
        w,
        "sigma_alpha_coherent_ci",
        format!(
            "{},{}",
            num(r.sigma_coherent_ci.0),
            num(r.sigma_coherent_ci.1)
        ),
    )?;
    kv(
        w,
        "sigma_alpha_squeezed_ci",
        format!(
            "{},{}",
            num(r.sigma_squeezed_ci.0),
            num(r.sigma_squeezed_ci.1)
        ),
    )?;
    kv(
        w,
        "precision_gain_ci",
        format!(
            "{},{}",
            num(r.precision_gain_ci.0),
            num(r.precision_gain_ci.1)
        ),
    )?;
    kv(
        w,
        "rate_gain_ci",
        format!("{},{}", num(r.rate_gain_ci.0), num(r.rate_gain_ci.1)),
    )?;
    kv(w, "paired_correlation", num(r.paired_correlation))?;
    writeln!(w)?;
    writeln!(w, "[runs]")?;
    writeln!(w, "run,trajectory_seed,alpha_coherent,alpha_squeezed")?;
    for i in 0..r.n_runs {
        writeln!(
            w,
            "{i},{},{},{}",
            r.trajectory_seeds[i],
            num(r.alpha_coherent[i]),
            num(r.alpha_squeezed[i])
        )?;
    }
    Ok(())
}

/// `key = value` pairs of a summary document, up to the first `[section]`.
pub fn read_key_values(r: impl BufRead) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.starts_with('[') {
            break;
        }
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, found {t:?}"),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
