use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use squeezetrack::harness::run_seeds;
use squeezetrack::io::{self, Column, ColumnMapping};
use squeezetrack::rheology::resolve_fit_range;
use squeezetrack::{
    alpha_timeseries, compare_regimes, detect, estimate_msd, fit_power_law, generate_fbm,
    moduli_from_msd, piecewise_trajectory, subtract_noise_floor, MsdCurve, PositionRecord,
    PowerLawFit,
};

use crate::config::{Loaded, RunConfig};
use crate::{plot, CliError, MappingArgs};

pub struct Context<'a> {
    pub config: &'a RunConfig,
    pub hash: &'a str,
    pub seed: u64,
    pub out: PathBuf,
}

impl<'a> Context<'a> {
    pub fn new(loaded: &'a Loaded, seed: Option<u64>, out: Option<&Path>) -> Self {
        let out = out
            .map(Path::to_path_buf)
            .or_else(|| loaded.config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Self {
            config: &loaded.config,
            hash: &loaded.hash,
            seed: loaded.config.seed(seed),
            out,
        }
    }

    fn provenance(&self, command: &str, extra: &[(&str, String)]) -> Vec<(String, String)> {
        let mut p = vec![
            ("command".to_string(), command.to_string()),
            ("config_hash".to_string(), self.hash.to_string()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        p.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        p
    }

    fn verbose(&self, msg: impl FnOnce() -> String) {
        if self.config.output.verbose {
            eprintln!("{}", msg());
        }
    }

    /// Writes `name` in the output directory through `body`.
    fn write(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> squeezetrack::Result<()>,
    ) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        body(&mut w).map_err(|e| match e {
            squeezetrack::Error::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
            other => CliError::from(other),
        })?;
        w.flush()
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.verbose(|| format!("wrote {}", path.display()));
        Ok(path)
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.config;
    let (lockin, noise, regimes) = (cfg.lockin()?, cfg.noise()?, cfg.regimes()?);
    let segments = cfg.segments()?;
    let traj_seed = run_seeds(ctx.seed, 0, regimes[0]).trajectory;
    let traj = match &segments {
        Some(segs) => piecewise_trajectory(segs, traj_seed)?,
        None => generate_fbm(&cfg.diffusion()?, traj_seed)?,
    };
    let prov = ctx.provenance("simulate", &[]);
    ctx.write("trajectory.csv", |w| io::write_trajectory(w, &traj, &prov))?;
    let mut written = vec!["trajectory.csv".to_string()];
    for regime in regimes {
        let rec = detect(
            &traj,
            &lockin,
            &noise,
            regime,
            run_seeds(ctx.seed, 0, regime).noise,
        )?;
        let name = format!("record_{regime}.csv");
        ctx.write(&name, |w| io::write_record(w, &rec, &prov))?;
        written.push(name);
    }
    println!(
        "simulate: {} samples at dt={} s, seed {}, config {} -> {} in {}",
        traj.len(),
        traj.dt(),
        ctx.seed,
        ctx.hash,
        written.join(", "),
        ctx.out.display()
    );
    Ok(())
}

fn read_input(input: &Path, mapping: &MappingArgs) -> Result<PositionRecord, CliError> {
    let file = File::open(input)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", input.display())))?;
    let reader = BufReader::new(file);
    let located = |e: squeezetrack::Error| match e {
        squeezetrack::Error::Parse { line, message } => {
            CliError::Parse(format!("{}:{line}: {message}", input.display()))
        }
        other => CliError::from(other),
    };
    let mut record = match &mapping.column {
        None => io::read_record(reader).map_err(located)?.0,
        Some(col) => {
            let dt = mapping
                .dt
                .ok_or_else(|| CliError::Config("--dt is required with --column".into()))?;
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(CliError::Config(format!("--dt: must be > 0, got {dt}")));
            }
            let to_um = ColumnMapping::unit_factor(&mapping.unit).ok_or_else(|| {
                CliError::Config(format!(
                    "--unit: expected m, mm, um or nm, got {:?}",
                    mapping.unit
                ))
            })?;
            let delimiter = match mapping.delimiter.as_str() {
                "whitespace" | "space" => ' ',
                "tab" | "\\t" => '\t',
                d if d.chars().count() == 1 => d.chars().next().unwrap_or(','),
                d => {
                    return Err(CliError::Config(format!(
                        "--delimiter: expected one character, got {d:?}"
                    )))
                }
            };
            let column = match col.parse::<usize>() {
                Ok(i) => Column::Index(i),
                Err(_) => Column::Name(col.clone()),
            };
            let map = ColumnMapping {
                column,
                delimiter,
                has_header: mapping.has_header,
                to_um,
                dt,
                noise_std: 0.0,
            };
            io::read_columns(reader, &map).map_err(located)?
        }
    };
    if let Some(s) = mapping.noise_std {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(CliError::Config(format!(
                "--noise-std: must be >= 0, got {s}"
            )));
        }
        record.noise_std_est = s;
    }
    if record.len() < 2 {
        return Err(CliError::Numeric(format!(
            "{} holds {} positions, need >= 2",
            input.display(),
            record.len()
        )));
    }
    Ok(record)
}

/// The fitted power law on the fit-range lags. Local slopes of a
/// floor-corrected MSD are too noisy for the local GSE relation, so the moduli
/// are evaluated on the model instead.
fn model_curve(curve: &MsdCurve, fit: &PowerLawFit) -> Result<MsdCurve, CliError> {
    let (lo, hi) = fit.fit_range;
    let lags: Vec<f64> = curve
        .lags
        .iter()
        .copied()
        .filter(|&t| t >= lo * (1.0 - 1e-9) && t <= hi * (1.0 + 1e-9))
        .collect();
    let msd = lags
        .iter()
        .map(|t| 2.0 * fit.d_hat * t.powf(fit.alpha_hat))
        .collect();
    Ok(MsdCurve::exact(lags, msd, 0.0)?)
}

pub fn analyze(ctx: &Context, input: &Path, mapping: &MappingArgs) -> Result<(), CliError> {
    let cfg = ctx.config;
    let fit_opts = cfg.fit_options()?;
    let record = read_input(input, mapping)?;
    let sigma = record.noise_std_est;
    let curve = subtract_noise_floor(&estimate_msd(&record, &fit_opts.lags)?, sigma);
    let range = resolve_fit_range(&curve, sigma, &fit_opts.range)?;
    let fit = fit_power_law(&curve, range)?;
    let moduli = moduli_from_msd(
        &model_curve(&curve, &fit)?,
        cfg.analysis.bead_radius_um,
        cfg.analysis.temperature_k,
    );

    let prov = ctx.provenance(
        "analyze",
        &[
            ("input", file_name(input)),
            ("noise_std_um", format!("{sigma:e}")),
        ],
    );
    ctx.write("msd.csv", |w| io::write_msd(w, &curve, &prov))?;
    ctx.write("fit_summary.txt", |w| io::write_fit_summary(w, &fit, &prov))?;
    // A fitted exponent outside [0, 2) has no viscoelastic reading; the fit stands alone.
    match moduli {
        Ok(moduli) => {
            let mut moduli_prov = prov.clone();
            moduli_prov.push(("msd_source".into(), "power_law_fit".into()));
            ctx.write("moduli.csv", |w| io::write_moduli(w, &moduli, &moduli_prov))?;
        }
        Err(squeezetrack::Error::Numerical(m)) => eprintln!("squeezetrack: moduli skipped: {m}"),
        Err(e) => return Err(e.into()),
    }
    println!(
        "analyze: alpha = {:.6} +- {:.6}, D = {:.6e} um^2/s^alpha over [{:.4e}, {:.4e}] s ({} lags)",
        fit.alpha_hat,
        fit.alpha_stderr(),
        fit.d_hat,
        fit.fit_range.0,
        fit.fit_range.1,
        fit.n_lags
    );
    Ok(())
}

pub fn compare(ctx: &Context) -> Result<(), CliError> {
    let exp = ctx.config.experiment(ctx.seed)?;
    ctx.verbose(|| format!("compare: {} paired runs", exp.n_runs));
    let report = compare_regimes(&exp)?;
    let prov = ctx.provenance("compare", &[]);
    ctx.write("report.txt", |w| io::write_report(w, &report, &prov))?;
    let pct = report.confidence * 100.0;
    println!(
        "precision_gain = {:.4} ({pct:.0}% CI {:.4} to {:.4})",
        report.precision_gain, report.precision_gain_ci.0, report.precision_gain_ci.1
    );
    println!(
        "rate_gain = {:.4} ({pct:.0}% CI {:.4} to {:.4})",
        report.rate_gain, report.rate_gain_ci.0, report.rate_gain_ci.1
    );
    println!(
        "sub_qnl = {:.1}% (effective variance {:.4}, exact)",
        report.sub_qnl_fraction() * 100.0,
        report.effective_variance
    );
    Ok(())
}

pub fn track(
    ctx: &Context,
    input: &Path,
    mapping: &MappingArgs,
    window: Option<f64>,
    stride: Option<f64>,
    plot_flag: bool,
) -> Result<(), CliError> {
    let cfg = ctx.config;
    let window = window.unwrap_or(cfg.track.window_s);
    let stride = stride.unwrap_or(cfg.track.stride_s);
    if !(stride > 0.0 && stride.is_finite()) {
        return Err(CliError::Config(format!(
            "stride: must be > 0, got {stride}"
        )));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(CliError::Config(format!(
            "window: must be > 0, got {window}"
        )));
    }
    let fit_opts = cfg.fit_options()?;
    let record = read_input(input, mapping)?;
    let series = alpha_timeseries(&record, window, stride, &fit_opts)?;
    let prov = ctx.provenance(
        "track",
        &[
            ("input", file_name(input)),
            ("window_s", format!("{window:e}")),
            ("stride_s", format!("{stride:e}")),
        ],
    );
    ctx.write("alpha_t.csv", |w| io::write_alpha_series(w, &series, &prov))?;
    let mut written = vec!["alpha_t.csv"];
    if plot_flag || cfg.track.plot {
        let spec = plot::alpha_series(&series, &prov);
        ctx.write("alpha_t.vl.json", |w| {
            w.write_all(spec.as_bytes())?;
            Ok(())
        })?;
        written.push("alpha_t.vl.json");
    }
    println!(
        "track: {} windows of {window} s every {stride} s -> {}",
        series.len(),
        written.join(", ")
    );
    Ok(())
}
