//! Subcommands. Each writes its primary output to a file (or stdout for
//! `analyze`) and a human-readable summary to the `err` stream.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use homodyne_core::estimators::{
    classify_state, covariance_to_normalized_variance, db_std_error, PairMoments,
    DEFAULT_Z_THRESHOLD,
};
use homodyne_core::experiments::{calibrate_from_ladder, DEFAULT_LADDER_FACTORS};
use homodyne_core::{
    calibrate_snl, run_attenuation_sweep, run_en_robustness, run_phase_scan, sample_trace_pair,
    squeezing_db, VACUUM_VARIANCE,
};

use crate::config::{ExperimentKind, RunConfig};
use crate::error::CliError;
use crate::io;
use crate::results::{pass_summary, AttenuationRecord, EnRobustnessRecord, PhaseScanRecord};

#[derive(Debug, Parser)]
#[command(
    name = "homodyne",
    version,
    about = "Balanced homodyne detection simulator and estimators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a two-channel photocurrent trace as CSV.
    Simulate(RunArgs),
    /// Covariance against LO phase.
    PhaseScan(RunArgs),
    /// Squeezing against attenuator transmission, both methods.
    AttenSweep(RunArgs),
    /// Covariance and difference variance against electronic-noise level.
    EnRobustness(RunArgs),
    /// Estimate covariance, difference variance and squeezing from a trace file.
    Analyze(AnalyzeArgs),
    /// Fit the shot-noise level against LO power.
    CalibrateSnl(CalibrateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration (defaults apply when omitted).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; falls back to the config's `output`.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Overrides the config sample count.
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Trace CSV (`i1,i2`).
    #[arg(long, value_name = "PATH")]
    pub trace: PathBuf,
    /// Electronic-noise-free shot-noise variance at the trace's LO power.
    #[arg(long, conflicts_with = "calibration")]
    pub snl: Option<f64>,
    /// Calibration file from `calibrate-snl`.
    #[arg(long, value_name = "PATH")]
    pub calibration: Option<PathBuf>,
    /// LO power for the calibration; defaults to the trace's `lo_power` metadata.
    #[arg(long)]
    pub lo_power: Option<f64>,
    /// LO amplitude-quadrature variance.
    #[arg(long, default_value_t = VACUUM_VARIANCE)]
    pub lo_variance: f64,
    /// Classification threshold in standard errors.
    #[arg(long, default_value_t = DEFAULT_Z_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrateArgs {
    /// `power,variance` CSV, or a directory of trace CSVs with `lo_power` metadata.
    /// Without it a Monte Carlo ladder is simulated from the config.
    #[arg(long, value_name = "PATH")]
    pub ladder: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Parses `args` and runs the command. Returns the process exit status.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return e.exit_code();
        }
    };
    match execute(&cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(
    command: &Command,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    match command {
        Command::Simulate(a) => cmd_simulate(a, err),
        Command::PhaseScan(a) => cmd_phase_scan(a, err),
        Command::AttenSweep(a) => cmd_atten_sweep(a, err),
        Command::EnRobustness(a) => cmd_en_robustness(a, err),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::CalibrateSnl(a) => cmd_calibrate_snl(a, err),
    }
}

fn load(args: &RunArgs, kind: ExperimentKind) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.check_experiment(kind)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.samples {
        cfg.n_samples = n;
    }
    Ok(cfg)
}

fn output_path(args: &RunArgs, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    args.out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| {
            CliError::Usage("no output path: pass --out or set `output` in the config".into())
        })
}

fn note(err: &mut dyn Write, line: impl AsRef<str>) {
    let _ = writeln!(err, "{}", line.as_ref());
}

pub fn cmd_simulate(args: &RunArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(args, ExperimentKind::Simulate)?;
    let sim = cfg.simulation()?;
    let path = output_path(args, &cfg)?;
    let traces = sample_trace_pair(&sim)?;
    io::write_trace_file(&path, &traces)?;
    note(
        err,
        format!("wrote {} samples to {}", traces.len(), path.display()),
    );
    Ok(())
}

pub fn cmd_phase_scan(args: &RunArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(args, ExperimentKind::PhaseScan)?;
    let sim = cfg.simulation()?;
    let path = output_path(args, &cfg)?;
    let result = run_phase_scan(&sim, &cfg.phase_grid()?)?;
    let records: Vec<PhaseScanRecord> = result.rows.iter().map(Into::into).collect();
    io::write_rows(&path, &records)?;

    note(err, "phase-scan summary");
    note(err, pass_summary(result.rows.len(), result.passed()));
    if let (Some(max), Some(min)) = (result.analytic_max(), result.analytic_min()) {
        note(
            err,
            format!(
                "analytic covariance: max {:+.4} at phase {:.4}, min {:+.4} at phase {:.4}",
                max.cov_analytic, max.phase, min.cov_analytic, min.phase
            ),
        );
    }
    let positive = result.rows.iter().filter(|r| r.cov_analytic > 0.0).count();
    note(
        err,
        format!(
            "squeezed-quadrature rows (positive covariance): {positive}/{}",
            result.rows.len()
        ),
    );
    note(err, format!("wrote {}", path.display()));
    Ok(())
}

pub fn cmd_atten_sweep(args: &RunArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(args, ExperimentKind::AttenSweep)?;
    let sim = cfg.simulation()?;
    let path = output_path(args, &cfg)?;
    let result = run_attenuation_sweep(&sim, &cfg.transmission_grid()?, cfg.snl_mode.into())?;
    let records: Vec<AttenuationRecord> = result.rows.iter().map(Into::into).collect();
    io::write_rows(&path, &records)?;

    note(err, "atten-sweep summary");
    note(err, pass_summary(result.rows.len(), result.passed()));
    if let Some(cal) = &result.calibration {
        note(
            err,
            format!(
                "calibrated SNL: slope {:.6}, EN floor {:.6}, r² {:.6}",
                cal.slope, cal.intercept, cal.r_squared
            ),
        );
    }
    match result.subtraction_zero_crossing() {
        Some(t) => note(
            err,
            format!("subtraction crosses 0 dB at t≈{t:.2} (t = {t:.4})"),
        ),
        None => note(err, "subtraction does not cross 0 dB on this grid"),
    }
    match result.covariance_zero_crossing() {
        Some(t) => note(err, format!("covariance crosses 0 dB at t≈{t:.2}")),
        None => note(err, "covariance does not cross 0 dB on this grid"),
    }
    let agree = result
        .rows
        .iter()
        .filter(|r| match &r.measurement {
            Ok(m) => match &m.sq_covariance_db {
                Ok(c) => {
                    (m.sq_subtraction_db - c).abs()
                        <= 4.0 * m.sq_subtraction_se_db.hypot(m.sq_covariance_se_db)
                }
                Err(_) => false,
            },
            Err(_) => false,
        })
        .count();
    note(
        err,
        format!(
            "both methods agree within 4·SE at {agree}/{} rows",
            result.rows.len()
        ),
    );
    let tracking = result
        .rows
        .iter()
        .filter(|r| r.covariance_tracks_ideal())
        .count();
    note(
        err,
        format!(
            "covariance method within 4·SE of the noise-free curve at {tracking}/{} rows",
            result.rows.len()
        ),
    );
    note(err, format!("wrote {}", path.display()));
    Ok(())
}

pub fn cmd_en_robustness(args: &RunArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(args, ExperimentKind::EnRobustness)?;
    let sim = cfg.simulation()?;
    let path = output_path(args, &cfg)?;
    let result = run_en_robustness(&sim, &cfg.en_scales, cfg.en_rho)?;
    let records: Vec<EnRobustnessRecord> = result.rows.iter().map(Into::into).collect();
    io::write_rows(&path, &records)?;

    note(err, "en-robustness summary");
    note(err, pass_summary(result.rows.len(), result.passed()));
    let bias_ok = result.rows.iter().filter(|r| r.bias_ok()).count();
    let dv_ok = result.rows.iter().filter(|r| r.diff_var_ok()).count();
    note(
        err,
        format!(
            "covariance bias matches rho·sigma1·sigma2 at {bias_ok}/{n} rows; difference variance matches at {dv_ok}/{n} rows",
            n = result.rows.len()
        ),
    );
    note(err, format!("wrote {}", path.display()));
    Ok(())
}

fn snl_source(
    args: &AnalyzeArgs,
    traces: &homodyne_core::TracePair,
) -> Result<(f64, String), CliError> {
    if let Some(snl) = args.snl {
        if !(snl > 0.0 && snl.is_finite()) {
            return Err(CliError::Usage(format!("--snl {snl} must be > 0")));
        }
        return Ok((snl, "given".into()));
    }
    if let Some(path) = &args.calibration {
        let cal = io::read_calibration(path)?;
        let power = args
            .lo_power
            .or_else(|| io::trace_lo_power(traces))
            .ok_or_else(|| {
                CliError::Usage(
                    "no LO power: pass --lo-power or use a trace with `lo_power` metadata".into(),
                )
            })?;
        return Ok((
            cal.snl_at(power),
            format!("calibration {} at LO power {power}", path.display()),
        ));
    }
    Err(CliError::Usage(
        "no SNL source: pass --snl or --calibration".into(),
    ))
}

pub fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let traces = io::read_trace_file(&args.trace)?;
    let (snl, source) = snl_source(args, &traces)?;
    let moments = PairMoments::from_traces(&traces);
    let cov = moments.covariance()?;
    let dv = moments.difference_variance()?;
    let verdict = classify_state(&cov, args.threshold);

    let mut lines = vec![
        format!("samples: {}", cov.n),
        format!("covariance: {} ± {}", cov.value, cov.std_error),
        format!("difference_variance: {} ± {}", dv.value, dv.std_error),
        format!("snl: {snl} ({source})"),
    ];
    lines.push(match squeezing_db(dv.value, snl) {
        Ok(db) => format!(
            "squeezing_subtraction_db: {db:.4} ± {:.4}",
            db_std_error(dv.value / snl, dv.std_error / snl)
        ),
        Err(_) => "squeezing_subtraction_db: undefined (zero difference variance)".into(),
    });
    lines.push(
        match covariance_to_normalized_variance(cov.value, snl, args.lo_variance) {
            Ok(ratio) => format!(
                "squeezing_covariance_db: {:.4} ± {:.4}",
                10.0 * ratio.log10(),
                db_std_error(ratio, cov.std_error / (snl * VACUUM_VARIANCE))
            ),
            Err(e) => format!("squeezing_covariance_db: out of range ({e})"),
        },
    );
    lines.push(format!(
        "verdict: {} (z = {:.3})",
        verdict.class, verdict.z_score
    ));
    for line in lines {
        writeln!(out, "{line}").map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    }
    Ok(())
}

pub fn cmd_calibrate_snl(args: &CalibrateArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(&args.run, ExperimentKind::CalibrateSnl)?;
    let path = output_path(&args.run, &cfg)?;
    let cal = match &args.ladder {
        Some(ladder) => calibrate_snl(&io::read_ladder(ladder)?)?,
        None => calibrate_from_ladder(&cfg.simulation()?, &DEFAULT_LADDER_FACTORS)?,
    };
    io::write_calibration(&path, &cal)?;
    note(
        err,
        format!(
            "SNL slope {} per unit LO power, EN floor {}, r² {} from {} points",
            cal.slope,
            cal.intercept,
            cal.r_squared,
            cal.fit_points.len()
        ),
    );
    note(err, format!("wrote {}", path.display()));
    Ok(())
}
