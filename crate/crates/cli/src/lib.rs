//! Command-line front end of the `ripple-ageing` toolkit.
//!
//! [`run`] takes the argument list and output streams so that commands can
//! be exercised in-process; the binary only forwards `std::env::args_os`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ripple_ageing::circuit::{
    cutoff_frequency, dc_steady_state, impedance, intercalation_divider, overpotential_for_current,
};
use ripple_ageing::regression::ParamBounds;
use ripple_ageing::simulator::simulate_strided;
use ripple_ageing::{
    ageing_sweep, fit_ap_points, fit_circuit_params, log_frequency_grid, CellParams, CellState,
    FitParam, IdentOptions, LoadProfile, MeasuredTrace, SimOptions, SweepOptions,
};

use config::{Format, RunConfig};
use output::{number, write_atomic, Columns, Table};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    /// Bad flags, configuration or input files. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Numerical failure or non-convergence. Exit code 3.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<ripple_ageing::Error> for CliError {
    fn from(e: ripple_ageing::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ripple-ageing",
    version,
    about = "Ageing potential of lithium-ion cells under rippled load"
)]
pub struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweeps; 0 or absent uses every processor.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Small-signal impedance and its high-pass approximation.
    Impedance(ImpedanceArgs),
    /// Time-domain response to a load profile.
    Simulate(SimulateArgs),
    /// Ageing potential over the configured frequency grid.
    Sweep(SweepArgs),
    /// Fit `AP = a·exp(b/√(c + f²))` to a sweep output file.
    FitAp(FitApArgs),
    /// Identify cell parameters from a `t_s,i_a,v_v` trace.
    FitCircuit(FitCircuitArgs),
}

#[derive(Debug, Args)]
pub struct ImpedanceArgs {
    /// Comma-separated frequencies in Hz; the sweep grid when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub freqs: Option<String>,
    /// DC current at which the charge-transfer element is linearized, A.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub bias_current: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Dc,
    Sine,
    Rect,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "dc")]
    pub profile: ProfileArg,
    /// Mean current, A; `[sweep] i_dc` when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub i_dc: Option<f64>,
    /// Ripple amplitude, A; `[sweep] i_ac` when absent.
    #[arg(long)]
    pub i_ac: Option<f64>,
    /// Hz; required for sine and rect profiles.
    #[arg(long)]
    pub frequency: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub duty: f64,
    /// Edge slew rate of rect profiles, A/s.
    #[arg(long, default_value_t = LoadProfile::DEFAULT_SLEW_RATE)]
    pub slew_rate: f64,
    /// Seconds; `[sim] duration` when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub duration: Option<f64>,
    /// Integration step, s; `[sim] dt` or the profile default when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Keep every N-th sample; `[output] stride` when absent.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Start from a relaxed cell instead of the DC steady state at `i_dc`.
    #[arg(long)]
    pub from_rest: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub f_max: Option<f64>,
    #[arg(long)]
    pub points_per_decade: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub i_dc: Option<f64>,
    #[arg(long)]
    pub i_ac: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitApArgs {
    /// Sweep output (CSV or JSON) with `f_hz` and `ap` columns.
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitCircuitArgs {
    /// CSV with `t_s,i_a,v_v` columns, uniformly sampled.
    pub trace: PathBuf,
    /// Comma-separated parameter names to adjust; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub free: Option<Vec<String>>,
    /// Bounds override, `name=lower:upper`; repeatable.
    #[arg(long = "bound", value_name = "NAME=LO:HI")]
    pub bounds: Vec<String>,
    #[arg(long, default_value_t = 5000)]
    pub max_evaluations: usize,
    #[arg(long, default_value_t = 200)]
    pub polish_iterations: usize,
    /// Current the cell had settled at before the first sample, A.
    #[arg(long, allow_negative_numbers = true)]
    pub warm_start_current: Option<f64>,
}

struct Context<'a> {
    config: RunConfig,
    out: Option<PathBuf>,
    format: Format,
    jobs: usize,
    verbose: bool,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Context<'_> {
    /// Writes the primary result to `--out` (atomically) or standard output.
    fn emit(&mut self, text: &str) -> Result<(), CliError> {
        match &self.out {
            Some(path) => write_atomic(path, text),
            None => self
                .stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Usage(format!("cannot write output: {e}"))),
        }
    }

    /// Human-readable summary lines; kept off standard output when the
    /// result itself goes there.
    fn report(&mut self, line: &str) {
        let sink: &mut dyn Write = if self.out.is_some() {
            self.stdout
        } else {
            self.stderr
        };
        let _ = writeln!(sink, "{line}");
    }

    fn log(&mut self, line: &str) {
        if self.verbose {
            let _ = writeln!(self.stderr, "{line}");
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    2
                }
            };
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(()) => 0,
        Err((e, stderr)) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn execute<'a>(
    cli: Cli,
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
) -> Result<(), (CliError, &'a mut dyn Write)> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let config = match config {
        Ok(c) => c,
        Err(e) => return Err((e, stderr)),
    };
    let mut ctx = Context {
        out: cli
            .out
            .clone()
            .or_else(|| config.output.path.clone().map(PathBuf::from)),
        format: cli.format.unwrap_or(config.output.format),
        jobs: cli.jobs.unwrap_or(0),
        verbose: cli.verbose,
        config,
        stdout,
        stderr,
    };
    let result = match &cli.command {
        Command::Impedance(a) => cmd_impedance(&mut ctx, a),
        Command::Simulate(a) => cmd_simulate(&mut ctx, a),
        Command::Sweep(a) => cmd_sweep(&mut ctx, a),
        Command::FitAp(a) => cmd_fit_ap(&mut ctx, a),
        Command::FitCircuit(a) => cmd_fit_circuit(&mut ctx, a),
    };
    result.map_err(|e| (e, ctx.stderr))
}

fn parse_freqs(list: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|f| f.is_finite() && *f >= 0.0)
                .ok_or_else(|| CliError::Usage(format!("--freqs: `{s}` is not a frequency >= 0")))
        })
        .collect()
}

fn sweep_grid(config: &RunConfig) -> Result<Vec<f64>, CliError> {
    let s = &config.sweep;
    Ok(log_frequency_grid(s.f_min, s.f_max, s.points_per_decade)?)
}

fn cmd_impedance(ctx: &mut Context<'_>, args: &ImpedanceArgs) -> Result<(), CliError> {
    let p = ctx.config.cell_params();
    let freqs = match &args.freqs {
        Some(list) => parse_freqs(list)?,
        None => sweep_grid(&ctx.config)?,
    };
    let bias_eta = overpotential_for_current(args.bias_current, &p.electrochem)?;
    let fc = cutoff_frequency(&p);
    let mut table = Table::new(&[
        "f_hz",
        "re_ohm",
        "im_ohm",
        "mag_ohm",
        "phase_deg",
        "highpass",
    ])
    .meta("bias_current_a", args.bias_current)
    .meta("cutoff_hz", fc)
    .meta("cell_fingerprint", format!("{:016x}", p.fingerprint()));
    for f in freqs {
        let z = impedance(f, &p, bias_eta)?;
        table.push(vec![
            f.into(),
            z.re.into(),
            z.im.into(),
            z.norm().into(),
            z.arg().to_degrees().into(),
            intercalation_divider(f, fc).into(),
        ]);
    }
    ctx.log(&format!(
        "{} frequencies, fc = {fc:.3} Hz",
        table.rows.len()
    ));
    let text = table.render(ctx.format);
    ctx.emit(&text)
}

fn build_profile(args: &SimulateArgs, i_dc: f64, i_ac: f64) -> Result<LoadProfile, CliError> {
    let frequency = || {
        args.frequency.ok_or_else(|| {
            CliError::Usage("--frequency is required for sine and rect profiles".into())
        })
    };
    let profile = match args.profile {
        ProfileArg::Dc => LoadProfile::dc(i_dc),
        ProfileArg::Sine => LoadProfile::sine(i_dc, i_ac, frequency()?),
        ProfileArg::Rect => {
            LoadProfile::rect(i_dc, i_ac, frequency()?, args.duty).with_slew_rate(args.slew_rate)
        }
    };
    profile.validate().map_err(|e| {
        CliError::Usage(format!(
            "profile flags (--i-dc/--i-ac/--frequency/--duty/--slew-rate): {e}"
        ))
    })?;
    Ok(profile)
}

fn cmd_simulate(ctx: &mut Context<'_>, args: &SimulateArgs) -> Result<(), CliError> {
    let p = ctx.config.cell_params();
    let i_dc = args.i_dc.unwrap_or(ctx.config.sweep.i_dc);
    let i_ac = args.i_ac.unwrap_or(ctx.config.sweep.i_ac);
    let profile = build_profile(args, i_dc, i_ac)?;
    let duration = args.duration.unwrap_or(ctx.config.sim.duration);
    let stride = args.stride.unwrap_or(ctx.config.output.stride);
    let dt = args
        .dt
        .or(ctx.config.sim.dt)
        .unwrap_or_else(|| profile.default_dt());
    if !(duration.is_finite() && duration > 0.0) {
        return Err(CliError::Usage(format!(
            "--duration must be > 0, got {duration}"
        )));
    }
    if stride == 0 {
        return Err(CliError::Usage("--stride must be >= 1".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CliError::Usage(format!("--dt must be > 0, got {dt}")));
    }
    let limit = profile
        .period()
        .map_or(f64::INFINITY, |t| t / 200.0)
        .min(p.min_rc_time_constant() / 10.0);
    if dt > limit * (1.0 + 1e-12) {
        return Err(CliError::Usage(format!(
            "--dt {dt:e} s exceeds the limit {limit:e} s (period/200 and smallest RC time constant/10)"
        )));
    }
    if duration < dt {
        return Err(CliError::Usage(format!(
            "--duration {duration:e} s is shorter than one step ({dt:e} s)"
        )));
    }
    let initial = if args.from_rest {
        CellState::ZERO
    } else {
        dc_steady_state(i_dc, &p)?
    };

    let started = Instant::now();
    let trace = simulate_strided(&profile, &p, dt, duration, initial, stride)?;
    ctx.log(&format!(
        "simulated {duration:e} s in {:.2} s",
        started.elapsed().as_secs_f64()
    ));

    let mut table = Table::new(&[
        "t_s",
        "i_a",
        "v_v",
        "eta_ct_v",
        "i_int_a",
        "i_dl_a",
        "ageing_rate_a",
    ])
    .meta("profile", profile.kind.to_string())
    .meta("i_dc_a", profile.i_dc)
    .meta("i_ac_a", profile.i_ac)
    .meta("frequency_hz", profile.frequency)
    .meta("duty", profile.duty)
    .meta("dt_s", dt)
    .meta("duration_s", duration)
    .meta("stride", stride)
    .meta(
        "initial",
        if args.from_rest {
            "rest"
        } else {
            "dc_steady_state"
        },
    )
    .meta("cell_fingerprint", format!("{:016x}", p.fingerprint()));
    for k in 0..trace.len() {
        table.push(vec![
            trace.time[k].into(),
            trace.i_load[k].into(),
            trace.v_terminal[k].into(),
            trace.eta_ct[k].into(),
            trace.i_int[k].into(),
            trace.i_dl[k].into(),
            trace.ageing_rate[k].into(),
        ]);
    }
    let text = table.render(ctx.format);
    ctx.emit(&text)?;

    let n = trace.len() as f64;
    let v = &trace.v_terminal;
    let mean_v = v.iter().sum::<f64>() / n;
    let min_v = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max_v = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean_eta = trace.eta_ct.iter().sum::<f64>() / n;
    ctx.report(&format!("samples = {}", trace.len()));
    ctx.report(&format!("v_terminal_mean_v = {}", number(mean_v)));
    ctx.report(&format!("v_terminal_min_v = {}", number(min_v)));
    ctx.report(&format!("v_terminal_max_v = {}", number(max_v)));
    ctx.report(&format!("eta_ct_mean_v = {}", number(mean_eta)));
    Ok(())
}

fn cmd_sweep(ctx: &mut Context<'_>, args: &SweepArgs) -> Result<(), CliError> {
    let mut s = ctx.config.sweep;
    s.f_min = args.f_min.unwrap_or(s.f_min);
    s.f_max = args.f_max.unwrap_or(s.f_max);
    s.points_per_decade = args.points_per_decade.unwrap_or(s.points_per_decade);
    s.i_dc = args.i_dc.unwrap_or(s.i_dc);
    s.i_ac = args.i_ac.unwrap_or(s.i_ac);
    let grid = log_frequency_grid(s.f_min, s.f_max, s.points_per_decade).map_err(|e| {
        CliError::Usage(format!(
            "sweep grid (--f-min/--f-max/--points-per-decade): {e}"
        ))
    })?;
    let p = ctx.config.cell_params();
    let opts = SweepOptions {
        sim: SimOptions {
            dt: ctx.config.sim.dt,
            tol: ctx.config.sim.tolerance,
            max_cycles: ctx.config.sim.max_cycles,
            stride: 1,
        },
        jobs: ctx.jobs,
    };
    let started = Instant::now();
    let curve = ageing_sweep(&grid, s.i_dc, s.i_ac, &p, &opts)?;
    ctx.log(&format!(
        "{} frequencies in {:.1} s",
        grid.len(),
        started.elapsed().as_secs_f64()
    ));
    let mut table = Table::new(&["f_hz", "ap"])
        .meta("i_dc_a", curve.meta.i_dc)
        .meta("i_ac_a", curve.meta.i_ac)
        .meta("profile", curve.meta.kind.to_string())
        .meta(
            "cell_fingerprint",
            format!("{:016x}", curve.meta.fingerprint),
        );
    for pt in &curve.points {
        table.push(vec![pt.frequency.into(), pt.ap.into()]);
    }
    let text = table.render(ctx.format);
    ctx.emit(&text)
}

fn read_input(path: &std::path::Path) -> Result<Columns, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Columns::parse(&text, &path.display().to_string())
}

fn cmd_fit_ap(ctx: &mut Context<'_>, args: &FitApArgs) -> Result<(), CliError> {
    let cols = read_input(&args.input)?;
    let points: Vec<(f64, f64)> = cols
        .get("f_hz")?
        .iter()
        .copied()
        .zip(cols.get("ap")?.iter().copied())
        .collect();
    let fit = fit_ap_points(&points)?;
    let mut table = Table::new(&[
        "a",
        "b_hz",
        "c_hz2",
        "r_squared",
        "residual_rms",
        "iterations",
        "converged",
        "degenerate",
    ])
    .meta("points", points.len());
    table.push(vec![
        fit.model.a.into(),
        fit.model.b.into(),
        fit.model.c.into(),
        fit.r_squared.into(),
        fit.residual_rms.into(),
        fit.iterations.into(),
        fit.converged.into(),
        fit.degenerate.into(),
    ]);
    let text = table.render(ctx.format);
    ctx.emit(&text)?;
    ctx.report(&format!(
        "a = {}, b = {} Hz, c = {} Hz², R² = {}",
        number(fit.model.a),
        number(fit.model.b),
        number(fit.model.c),
        number(fit.r_squared)
    ));
    if fit.converged {
        Ok(())
    } else {
        Err(CliError::Numeric(
            "fit did not converge (c at the edge of the scanned range)".into(),
        ))
    }
}

fn ident_options(args: &FitCircuitArgs) -> Result<IdentOptions, CliError> {
    let lookup = |name: &str| {
        FitParam::from_name(name.trim()).ok_or_else(|| {
            let known: Vec<&str> = FitParam::ALL.iter().map(|p| p.name()).collect();
            CliError::Usage(format!(
                "unknown parameter `{name}` (expected one of {})",
                known.join(", ")
            ))
        })
    };
    let free = match &args.free {
        Some(names) => names.iter().map(|n| lookup(n)).collect::<Result<_, _>>()?,
        None => FitParam::ALL.to_vec(),
    };
    let mut bounds = Vec::new();
    for spec in &args.bounds {
        let bad = || CliError::Usage(format!("--bound `{spec}`: expected NAME=LO:HI"));
        let (name, range) = spec.split_once('=').ok_or_else(bad)?;
        let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
        bounds.push(ParamBounds {
            param: lookup(name)?,
            lower: lo.trim().parse().map_err(|_| bad())?,
            upper: hi.trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(IdentOptions {
        free,
        bounds,
        max_evaluations: args.max_evaluations,
        warm_start_current: args.warm_start_current,
        polish_iterations: args.polish_iterations,
        ..Default::default()
    })
}

fn cmd_fit_circuit(ctx: &mut Context<'_>, args: &FitCircuitArgs) -> Result<(), CliError> {
    let opts = ident_options(args)?;
    let cols = read_input(&args.trace)?;
    let trace = MeasuredTrace::new(
        cols.get("t_s")?.to_vec(),
        cols.get("i_a")?.to_vec(),
        cols.get("v_v")?.to_vec(),
    )
    .map_err(|e| CliError::Usage(format!("{}: {e}", args.trace.display())))?;
    let initial: CellParams = ctx.config.cell_params();
    let started = Instant::now();
    let fit = fit_circuit_params(&trace, &initial, &opts)?;
    ctx.log(&format!(
        "{} evaluations in {:.1} s",
        fit.evaluations,
        started.elapsed().as_secs_f64()
    ));

    let mut identified = ctx.config.clone();
    identified.cell = fit.params.into();
    identified.output.path = None;
    let hit: Vec<&str> = fit.bounds_hit.iter().map(|p| p.name()).collect();
    let mut text = String::new();
    text.push_str(&format!(
        "# rmse_voltage_v = {}\n",
        number(fit.rmse_voltage)
    ));
    text.push_str(&format!("# evaluations = {}\n", fit.evaluations));
    text.push_str(&format!("# converged = {}\n", fit.converged));
    text.push_str(&format!("# bounds_hit = [{}]\n\n", hit.join(", ")));
    text.push_str(&identified.to_toml());
    ctx.emit(&text)?;
    ctx.report(&format!(
        "rmse_voltage_v = {}, evaluations = {}, converged = {}",
        number(fit.rmse_voltage),
        fit.evaluations,
        fit.converged
    ));
    if fit.converged {
        Ok(())
    } else {
        Err(CliError::Numeric(
            "identification did not converge within the evaluation budget".into(),
        ))
    }
}

/// Value of a `# key = value` metadata line, for callers that read our own
/// CSV output.
pub fn csv_meta<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(" = "))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}
