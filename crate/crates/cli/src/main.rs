//! `wva`: point evaluations, figure data, oracle verification and
//! Monte-Carlo Cramér–Rao experiments.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use wva_core::closed_form::{self as cf, NoisyMeterReport, ProtocolConfig, WvaReport};
use wva_core::estimation::{crb_check, CrbConfig, Measurement, Strategy};
use wva_core::grid::SweepGrid;
use wva_core::oracle::{self, CircuitSpec, OracleResult, Quantity};
use wva_core::sweep::{self, Figure, FigureOptions};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<wva_core::Error> for CliError {
    fn from(e: wva_core::Error) -> Self {
        match e {
            wva_core::Error::Io(m) => CliError::Io(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "wva", version, about = "Fisher-information analysis of weak-value-amplified qubit sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed forms and circuit simulation at one configuration.
    Point(PointArgs),
    /// Regenerate the data behind a figure as CSV.
    Figure(FigureArgs),
    /// Compare every closed form with the circuit simulation over a grid.
    Verify(VerifyArgs),
    /// Monte-Carlo maximum-likelihood experiment against the Cramér–Rao bound.
    Mle(MleArgs),
}

#[derive(Args, Debug, Default)]
struct ProtocolArgs {
    /// Flat JSON object with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measurement strength in [0, 1].
    #[arg(long = "G")]
    g: Option<f64>,
    /// Postselection angle relative to the accumulated phase, θ − tδB.
    #[arg(long = "theta-rel", allow_hyphen_values = true)]
    theta_rel: Option<String>,
    /// Absolute postselection angle θ.
    #[arg(long = "theta", allow_hyphen_values = true)]
    theta: Option<String>,
    /// Control-observable angle Θ; defaults to θ + π/2.
    #[arg(long = "Theta", allow_hyphen_values = true)]
    control_angle: Option<String>,
    /// System attenuation Ξ(t).
    #[arg(long)]
    xi: Option<f64>,
    /// Exponential dephasing rate; sets Ξ = exp(−Γt) when --xi is absent.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long = "delta-b", allow_hyphen_values = true)]
    delta_b: Option<f64>,
    /// Meter attenuation Σ(t).
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct PointArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Args, Debug)]
struct FigureArgs {
    /// fig2, fig3, fig4 or fig5.
    name: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long = "G")]
    g: Option<f64>,
    /// Steps per axis of the two-dimensional grids.
    #[arg(long)]
    resolution: Option<usize>,
    /// Comma-separated attenuations for fig3.
    #[arg(long = "xi-list", value_delimiter = ',')]
    xi_list: Option<Vec<f64>>,
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    #[arg(long = "gamma-max")]
    gamma_max: Option<f64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// JSON grid `{"axes": [{"name", "min", "max", "steps"}], "fixed": {..}}`;
    /// defaults to the standard 10⁴-point grid.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = oracle::DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Negative control: scale a closed form, e.g. `h_wva=1.001`.
    #[arg(long)]
    perturb: Vec<String>,
}

#[derive(Args, Debug)]
struct MleArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Trials per experiment.
    #[arg(long = "N")]
    n: Option<u64>,
    /// Number of experiments.
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `direct` or `postselected`.
    #[arg(long)]
    strategy: Option<String>,
    /// `sigma-x`, `optimal` or `equatorial:<angle>`.
    #[arg(long)]
    measurement: Option<String>,
}

/// Flag values layered over an optional flat JSON file.
struct Settings {
    file: Map<String, Value>,
}

impl Settings {
    fn load(path: Option<&PathBuf>) -> CliResult<Self> {
        let file = match path {
            None => Map::new(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::Config("config file must hold a JSON object".into())),
                    Err(e) => return Err(CliError::Config(format!("{}: {e}", p.display()))),
                }
            }
        };
        Ok(Settings { file })
    }

    fn number(&self, key: &str, flag: Option<f64>) -> CliResult<Option<f64>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(other) => Err(CliError::Config(format!("`{key}` must be a number, got {other}"))),
        }
    }

    fn angle(&self, key: &str, flag: Option<&String>) -> CliResult<Option<f64>> {
        let text = match (flag, self.file.get(key)) {
            (Some(s), _) => s.clone(),
            (None, None | Some(Value::Null)) => return Ok(None),
            (None, Some(Value::Number(n))) => return Ok(n.as_f64()),
            (None, Some(Value::String(s))) => s.clone(),
            (None, Some(other)) => return Err(CliError::Config(format!("`{key}` must be an angle, got {other}"))),
        };
        Ok(Some(sweep::parse_angle(&text)?))
    }

    fn string(&self, key: &str, flag: Option<&String>) -> CliResult<Option<String>> {
        match (flag, self.file.get(key)) {
            (Some(s), _) => Ok(Some(s.clone())),
            (None, None | Some(Value::Null)) => Ok(None),
            (None, Some(Value::String(s))) => Ok(Some(s.clone())),
            (None, Some(other)) => Err(CliError::Config(format!("`{key}` must be a string, got {other}"))),
        }
    }

    fn integer(&self, key: &str, flag: Option<u64>) -> CliResult<Option<u64>> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| CliError::Config(format!("`{key}` must be a non-negative integer, got {v}"))),
        }
    }
}

fn required(name: &str, v: Option<f64>) -> CliResult<f64> {
    v.ok_or_else(|| CliError::Config(format!("missing required parameter --{name}")))
}

/// Optional fallbacks for parameters a subcommand does not need.
#[derive(Default)]
struct Fallbacks {
    g: Option<f64>,
    theta_rel: Option<f64>,
}

fn protocol_config(args: &ProtocolArgs, settings: &Settings, fallbacks: Fallbacks) -> CliResult<ProtocolConfig> {
    let g = required("G", settings.number("G", args.g)?.or(fallbacks.g))?;
    let t = required("t", settings.number("t", args.t)?)?;
    let delta_b = settings.number("delta-b", args.delta_b)?.unwrap_or(0.0);
    let xi = match (settings.number("xi", args.xi)?, settings.number("gamma", args.gamma)?) {
        (Some(xi), _) => xi,
        (None, Some(gamma)) => (-gamma * t).exp(),
        (None, None) => return Err(CliError::Config("missing required parameter --xi (or --gamma)".into())),
    };
    let theta = match (
        settings.angle("theta-rel", args.theta_rel.as_ref())?,
        settings.angle("theta", args.theta.as_ref())?,
    ) {
        (Some(_), Some(_)) => return Err(CliError::Config("give only one of --theta-rel and --theta".into())),
        (Some(rel), None) => rel + t * delta_b,
        (None, Some(abs)) => abs,
        (None, None) => required("theta-rel", fallbacks.theta_rel)? + t * delta_b,
    };
    let control_angle = settings
        .angle("Theta", args.control_angle.as_ref())?
        .unwrap_or(theta + FRAC_PI_2);
    let cfg = ProtocolConfig {
        g,
        theta,
        control_angle,
        delta_b,
        t,
        xi,
        sigma: settings.number("sigma", args.sigma)?.unwrap_or(1.0),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn ok_or_note<T>(r: wva_core::Result<T>, label: &str, notes: &mut Vec<String>) -> CliResult<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(
            e @ (wva_core::Error::Degenerate { .. }
            | wva_core::Error::Singular { .. }
            | wva_core::Error::UndefinedConditionalState(_)),
        ) => {
            notes.push(format!("{label}: {e}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct PointOutput {
    config: ProtocolConfig,
    theta_rel: f64,
    closed_form: Option<WvaReport>,
    h_wva_over_h_d: Option<f64>,
    f_direct: Option<f64>,
    /// At the configured control angle.
    h_anc: Option<f64>,
    noisy_meter: Option<NoisyMeterReport>,
    oracle: Option<OracleResult>,
    notes: Vec<String>,
}

fn cmd_point(args: &PointArgs) -> CliResult<()> {
    let settings = Settings::load(args.protocol.config.as_ref())?;
    let cfg = protocol_config(&args.protocol, &settings, Fallbacks::default())?;
    let mut notes = Vec::new();
    let main_angle = ProtocolConfig {
        control_angle: cfg.theta + FRAC_PI_2,
        ..cfg
    };
    let closed_form = ok_or_note(cf::wva_report(&main_angle), "closed forms", &mut notes)?;
    let h_wva_over_h_d = closed_form.and_then(|r| (r.h_d > 0.0).then(|| r.h_wva / r.h_d));
    let f_direct = ok_or_note(cf::f_direct(&cfg), "F_d", &mut notes)?;
    let h_anc = ok_or_note(cf::h_anc(&cfg), "H_anc", &mut notes)?;
    let noisy_meter = ok_or_note(cf::noisy_meter_report(&cfg), "noisy meter", &mut notes)?;
    if (cfg.control_angle - main_angle.control_angle).abs() > 1e-12 {
        notes.push("closed_form assumes Theta = theta + pi/2; the oracle uses the given Theta".into());
    }
    let oracle = ok_or_note(
        oracle::simulate_protocol(&CircuitSpec::main_text(cfg)),
        "oracle",
        &mut notes,
    )?;
    print_json(&PointOutput {
        config: cfg,
        theta_rel: cfg.theta_rel(),
        closed_form,
        h_wva_over_h_d,
        f_direct,
        h_anc,
        noisy_meter,
        oracle,
        notes,
    })
}

fn cmd_figure(args: &FigureArgs) -> CliResult<()> {
    let fig: Figure = args.name.parse()?;
    let settings = Settings::load(args.config.as_ref())?;
    let mut opts = FigureOptions::default();
    if let Some(xi) = settings.number("xi", args.xi)? {
        opts.xi = xi;
    }
    if let Some(t) = settings.number("t", args.t)? {
        opts.t = t;
    }
    if let Some(g) = settings.number("G", args.g)? {
        opts.g = g;
    }
    if let Some(r) = settings.integer("resolution", args.resolution.map(|r| r as u64))? {
        opts.resolution = r as usize;
    }
    if let Some(v) = settings.number("t-max", args.t_max)? {
        opts.t_max = v;
    }
    if let Some(v) = settings.number("gamma-max", args.gamma_max)? {
        opts.gamma_max = v;
    }
    if let Some(list) = &args.xi_list {
        opts.xi_list = list.clone();
    } else if let Some(v) = settings.file.get("xi-list") {
        opts.xi_list = serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("xi-list: {e}")))?;
    }
    let paths = sweep::write_figure(fig, &opts, &args.out)?;
    print_json(&paths)
}

fn parse_perturbation(spec: &str) -> CliResult<(Quantity, f64)> {
    let (name, factor) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("perturbation `{spec}` is not NAME=FACTOR")))?;
    let factor: f64 = factor
        .parse()
        .map_err(|_| CliError::Config(format!("bad factor in `{spec}`")))?;
    Ok((name.parse()?, factor))
}

fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let grid = match &args.grid {
        None => oracle::default_verification_grid(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            let grid: SweepGrid =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            grid.validate()?;
            grid
        }
    };
    let perturbations = args
        .perturb
        .iter()
        .map(|s| parse_perturbation(s))
        .collect::<CliResult<Vec<_>>>()?;
    let bias = |q: Quantity| {
        perturbations
            .iter()
            .filter(|(p, _)| *p == q)
            .map(|(_, f)| f)
            .product::<f64>()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let report = pool.install(|| oracle::verify_closed_forms_with(&grid, args.tolerance, &bias))?;
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    print_json(&report)?;
    if report.passed {
        return Ok(());
    }
    for f in report.failures.iter().take(10) {
        eprintln!(
            "{:>14}  deviation {:.3e}  closed {:.6e}  oracle {:.6e}  at {}",
            f.comparison.quantity.name(),
            f.comparison.deviation,
            f.comparison.closed,
            f.comparison.oracle,
            serde_json::to_string(&f.point).unwrap_or_default(),
        );
    }
    Err(CliError::Verification(format!(
        "{} comparisons above tolerance {:e}, {} point errors",
        report.failure_count,
        report.tolerance,
        report.errors.len()
    )))
}

fn parse_measurement(s: &str) -> CliResult<Measurement> {
    match s {
        "sigma-x" | "sigma_x" => Ok(Measurement::SigmaX),
        "optimal" => Ok(Measurement::Optimal),
        other => match other.strip_prefix("equatorial:") {
            Some(phi) => Ok(Measurement::Equatorial {
                phi: sweep::parse_angle(phi)?,
            }),
            None => Err(CliError::Config(format!("unknown measurement `{other}`"))),
        },
    }
}

fn cmd_mle(args: &MleArgs) -> CliResult<()> {
    let settings = Settings::load(args.protocol.config.as_ref())?;
    let strategy = match settings.string("strategy", args.strategy.as_ref())?.as_deref() {
        None | Some("direct") => Strategy::Direct,
        Some("postselected") => Strategy::Postselected,
        Some(other) => return Err(CliError::Config(format!("unknown strategy `{other}`"))),
    };
    let fallbacks = match strategy {
        Strategy::Direct => Fallbacks {
            g: Some(1.0),
            theta_rel: Some(PI),
        },
        Strategy::Postselected => Fallbacks::default(),
    };
    let cfg = protocol_config(&args.protocol, &settings, fallbacks)?;
    let measurement = match settings.string("measurement", args.measurement.as_ref())? {
        Some(s) => parse_measurement(&s)?,
        None if strategy == Strategy::Direct => Measurement::SigmaX,
        None => Measurement::Optimal,
    };
    let mut config = CrbConfig::new(cfg, strategy, measurement);
    config.n_trials = settings.integer("N", args.n)?.unwrap_or(1000);
    config.n_experiments = settings.integer("M", args.m.map(|m| m as u64))?.unwrap_or(300) as usize;
    config.seed = settings.integer("seed", args.seed)?.unwrap_or(42);
    let report = crb_check(&config)?;
    print_json(&report)
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Point(a) => cmd_point(a),
        Command::Figure(a) => cmd_figure(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Mle(a) => cmd_mle(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
