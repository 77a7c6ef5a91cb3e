use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cantor_sss::analysis::{
    linear_grid, log_grid, mixing_report, moment_curve, scaling_exponent, uniform_grid, DEFAULT_MOMENT_TOLERANCE,
};
use cantor_sss::checks::run_selfcheck;
use cantor_sss::confined::confined_kernel;
use cantor_sss::io;
use cantor_sss::simulator::{empirical_confined, empirical_kernel, simulate_confined, simulate_path};
use cantor_sss::spectral::{eigenvalues, transition_kernel_spectral};
use cantor_sss::{Error, Params, StreamKey, Word};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const EXIT_USAGE: u8 = 2;
const EXIT_RESOURCE: u8 = 3;
const EXIT_REJECTION: u8 = 4;
const EXIT_SELFCHECK: u8 = 5;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "cantor-sss", version, about = "Self-similar jump processes on the Cantor set")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the artifact here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues λ_0..λ_n of the level-n generator.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "depth")]
        level: u32,
    },
    /// The transition matrix P_n(t).
    Kernel {
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "depth")]
        level: u32,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
    },
    /// One exact path, or with --samples the empirical law at time t.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "level")]
        depth: u32,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        /// Starting word of length --depth (default all zeros).
        #[arg(long)]
        start: Option<Word>,
        #[arg(long)]
        samples: Option<u64>,
    },
    /// The process conditioned to stay in --cylinder.
    Confined {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cylinder: Word,
        /// Resolution m > level of the cylinder.
        #[arg(long, visible_alias = "depth")]
        level: u32,
        #[arg(long, allow_negative_numbers = true)]
        t: f64,
        /// Starting word of length --level inside the cylinder (default: cylinder then zeros).
        #[arg(long)]
        start: Option<Word>,
        /// Rejection-sample paths instead of evaluating the kernel.
        #[arg(long)]
        samples: Option<u64>,
        /// Attempt budget per accepted path (default ⌈100/acceptance⌉).
        #[arg(long)]
        max_attempts: Option<u64>,
    },
    /// Total variation to the invariant measure for levels 1..=max-level.
    Mixing {
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "level", default_value_t = 8)]
        max_level: u32,
        #[command(flatten)]
        grid: Grid,
    },
    /// Displacement moments M_r(t).
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        r: f64,
        #[command(flatten)]
        grid: Grid,
        #[arg(long, default_value_t = DEFAULT_MOMENT_TOLERANCE)]
        tol: f64,
    },
    /// Small-time log-log slope of M_r.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        r: f64,
        /// lo:hi:points
        #[arg(long, default_value = "1e-5:1e-3:101")]
        t_log: String,
    },
    /// Run the oracle suite.
    Selfcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, visible_alias = "level", default_value_t = 6)]
        max_level: u32,
    },
}

#[derive(Args, Clone)]
#[group(multiple = false)]
struct Grid {
    /// A single time, or lo:hi:step.
    #[arg(long)]
    t: Option<String>,
    /// lo:hi:points, log-spaced.
    #[arg(long)]
    t_log: Option<String>,
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match e {
            Error::Usage(_) => (EXIT_USAGE, "usage"),
            Error::Domain(_) => (EXIT_USAGE, "domain"),
            Error::Parse { .. } => (EXIT_USAGE, "parse"),
            Error::Resource { .. } => (EXIT_RESOURCE, "resource"),
            Error::RejectionBudget { .. } => (EXIT_REJECTION, "rejection_budget"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn usage_failure(message: String) -> Failure {
    Failure {
        code: EXIT_USAGE,
        kind: "usage",
        message,
    }
}

fn split3(spec: &str, flag: &str) -> Result<(f64, f64, String), Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(usage_failure(format!("--{flag} expects lo:hi:n, got {spec:?}")));
    }
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| usage_failure(format!("--{flag}: {s:?} is not a number")))
    };
    Ok((num(parts[0])?, num(parts[1])?, parts[2].trim().to_string()))
}

fn parse_log_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let (lo, hi, points) = split3(spec, "t-log")?;
    let points: usize = points
        .parse()
        .map_err(|_| usage_failure(format!("--t-log: point count {points:?} is not an integer")))?;
    Ok(log_grid(lo, hi, points)?)
}

fn parse_time_grid(grid: &Grid, default: impl FnOnce() -> Vec<f64>) -> Result<Vec<f64>, Failure> {
    match (&grid.t, &grid.t_log) {
        (Some(spec), None) if spec.contains(':') => {
            let (lo, hi, step) = split3(spec, "t")?;
            let step: f64 = step
                .parse()
                .map_err(|_| usage_failure(format!("--t: step {step:?} is not a number")))?;
            Ok(linear_grid(lo, hi, step)?)
        }
        (Some(spec), None) => Ok(vec![spec
            .parse()
            .map_err(|_| usage_failure(format!("--t: {spec:?} is not a number")))?]),
        (None, Some(spec)) => parse_log_grid(spec),
        _ => Ok(default()),
    }
}

fn params(common: &Common) -> Result<Params, Failure> {
    Ok(Params::new(common.gamma, common.theta)?)
}

fn check_samples(samples: u64) -> Result<u64, Failure> {
    if samples == 0 {
        return Err(usage_failure("--samples must be at least 1".to_string()));
    }
    Ok(samples)
}

/// The artifact of one run: CSV text and a JSON value.
struct Artifact {
    csv: String,
    json: Value,
    failed_checks: bool,
}

impl Artifact {
    fn new(csv: String, json: Value) -> Self {
        Artifact {
            csv,
            json,
            failed_checks: false,
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("artifacts serialize to JSON")
}

fn run(command: &Command) -> Result<Artifact, Failure> {
    Ok(match command {
        Command::Spectrum { common, level } => {
            let p = params(common)?;
            if *level > cantor_sss::word::MAX_WORD_LEVEL {
                return Err(Error::Resource {
                    what: "spectrum level",
                    requested: *level as u64,
                    limit: cantor_sss::word::MAX_WORD_LEVEL as u64,
                }
                .into());
            }
            let l = eigenvalues(*level, &p);
            let rows: Vec<Value> = l
                .iter()
                .enumerate()
                .map(|(m, &v)| json!({"m": m, "lambda_m": v + 0.0, "multiplicity": multiplicity(m)}))
                .collect();
            Artifact::new(io::eigenvalues_csv(&l), json!({"level": level, "eigenvalues": rows}))
        }
        Command::Kernel { common, level, t } => {
            let kernel = transition_kernel_spectral(*level, *t, &params(common)?)?;
            Artifact::new(io::matrix_csv(*level, kernel.entries()), to_json(&kernel))
        }
        Command::Simulate {
            common,
            depth,
            t,
            start,
            samples,
        } => {
            let p = params(common)?;
            let start = start.unwrap_or_else(|| Word::zeros(*depth));
            if start.level() != *depth {
                return Err(usage_failure(format!("--start {start} does not have length {depth}")));
            }
            match samples {
                None => {
                    let path = simulate_path(&start, *t, &p, StreamKey::new(common.seed))?;
                    Artifact::new(io::path_csv(&path), json!({ "path": to_json(&path), "final_state": path.final_state() }))
                }
                Some(samples) => {
                    let samples = check_samples(*samples)?;
                    let freq = empirical_kernel(&start, *t, *depth, samples, &p, common.seed)?;
                    let rows: Vec<Value> = Word::all(*depth)
                        .zip(&freq)
                        .map(|(w, f)| json!({"word": w, "frequency": f}))
                        .collect();
                    Artifact::new(
                        io::distribution_csv(*depth, &freq),
                        json!({"start": start, "t": t, "samples": samples, "distribution": rows}),
                    )
                }
            }
        }
        Command::Confined {
            common,
            cylinder,
            level,
            t,
            start,
            samples,
            max_attempts,
        } => {
            let p = params(common)?;
            let start = match start {
                Some(s) => *s,
                None if *level >= cylinder.level() => cylinder
                    .concat(&Word::zeros(level - cylinder.level()))
                    .map_err(Failure::from)?,
                None => return Err(usage_failure(format!("--level {level} is below the cylinder level"))),
            };
            if start.level() != *level {
                return Err(usage_failure(format!("--start {start} does not have length {level}")));
            }
            match samples {
                None if max_attempts.is_some() => {
                    let confined = simulate_confined(&start, cylinder, *t, &p, StreamKey::new(common.seed), *max_attempts)?;
                    Artifact::new(
                        io::path_csv(&confined.path),
                        json!({"cylinder": cylinder, "attempts": confined.attempts, "path": to_json(&confined.path)}),
                    )
                }
                None => {
                    let k = confined_kernel(cylinder, *t, &p, *level)?;
                    let states = k.states();
                    Artifact::new(
                        io::labelled_matrix_csv(&states, k.kernel().entries()),
                        json!({"cylinder": cylinder, "level": level, "t": t, "states": states,
                               "entries": to_json(k.kernel())["entries"]}),
                    )
                }
                Some(samples) => {
                    let samples = check_samples(*samples)?;
                    let (freq, attempts) = empirical_confined(&start, cylinder, *t, *level, samples, &p, common.seed)?;
                    let states: Vec<Word> = Word::all(level - cylinder.level())
                        .map(|tail| cylinder.concat(&tail).expect("within word cap"))
                        .collect();
                    let rows: Vec<Value> = states
                        .iter()
                        .zip(&freq)
                        .map(|(w, f)| json!({"word": w, "frequency": f}))
                        .collect();
                    Artifact::new(
                        io::labelled_distribution_csv(&states, &freq),
                        json!({"cylinder": cylinder, "start": start, "t": t, "samples": samples,
                               "attempts": attempts, "acceptance_rate": samples as f64 / attempts as f64,
                               "distribution": rows}),
                    )
                }
            }
        }
        Command::Mixing { common, max_level, grid } => {
            let p = params(common)?;
            let horizon = if p.is_degenerate() { 10.0 } else { 10.0 / p.base_rate() };
            let times = parse_time_grid(grid, || uniform_grid(0.0, horizon, 50))?;
            let report = mixing_report(&p, *max_level, &times)?;
            Artifact::new(io::mixing_csv(&report.curves), to_json(&report))
        }
        Command::Moments { common, r, grid, tol } => {
            let p = params(common)?;
            let times = parse_time_grid(grid, || log_grid(1e-6, 1e2, 81).expect("valid constant grid"))?;
            let curve = moment_curve(*r, &times, &p, *tol)?;
            Artifact::new(io::moments_csv(&curve), to_json(&curve))
        }
        Command::Scaling { common, r, t_log } => {
            let p = params(common)?;
            let (lo, hi, points) = split3(t_log, "t-log")?;
            let points: usize = points
                .parse()
                .map_err(|_| usage_failure(format!("--t-log: point count {points:?} is not an integer")))?;
            let fit = scaling_exponent(*r, &p, lo, hi, points)?;
            let value = to_json(&fit);
            let csv = format!(
                "r,gamma,theta,slope,expected,regime\n{},{},{},{},{},{}\n",
                io::format_float(fit.r),
                io::format_float(fit.gamma),
                io::format_float(fit.theta),
                io::format_float(fit.slope),
                io::format_float(fit.expected),
                value["regime"].as_str().unwrap_or_default()
            );
            Artifact::new(csv, value)
        }
        Command::Selfcheck { common, max_level } => {
            let results = run_selfcheck(&params(common)?, *max_level, common.seed)?;
            let failed = results.iter().any(|r| !r.passed);
            let mut csv = String::from("check,status,error,tolerance,detail\n");
            for r in &results {
                csv.push_str(&format!(
                    "{},{},{},{},\"{}\"\n",
                    r.name,
                    if r.passed { "PASS" } else { "FAIL" },
                    io::format_float(r.error),
                    io::format_float(r.tolerance),
                    r.detail.replace('"', "'")
                ));
            }
            Artifact {
                csv,
                json: json!({"max_level": max_level, "passed": !failed, "checks": to_json(&results)}),
                failed_checks: failed,
            }
        }
    })
}

fn multiplicity(m: usize) -> u64 {
    if m == 0 {
        1
    } else {
        1u64 << (m - 1).min(63)
    }
}

fn common(command: &Command) -> &Common {
    match command {
        Command::Spectrum { common, .. }
        | Command::Kernel { common, .. }
        | Command::Simulate { common, .. }
        | Command::Confined { common, .. }
        | Command::Mixing { common, .. }
        | Command::Moments { common, .. }
        | Command::Scaling { common, .. }
        | Command::Selfcheck { common, .. } => common,
    }
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::Spectrum { .. } => "spectrum",
        Command::Kernel { .. } => "kernel",
        Command::Simulate { .. } => "simulate",
        Command::Confined { .. } => "confined",
        Command::Mixing { .. } => "mixing",
        Command::Moments { .. } => "moments",
        Command::Scaling { .. } => "scaling",
        Command::Selfcheck { .. } => "selfcheck",
    }
}

fn render(command: &Command, artifact: Artifact) -> String {
    let c = common(command);
    match c.format {
        Format::Csv => artifact.csv,
        Format::Json => {
            let mut object = match artifact.json {
                Value::Object(map) => map,
                other => {
                    let mut map = serde_json::Map::new();
                    map.insert("result".into(), other);
                    map
                }
            };
            object.insert("command".into(), json!(name(command)));
            object.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
            object.insert("gamma".into(), json!(c.gamma));
            object.insert("theta".into(), json!(c.theta));
            object.insert("seed".into(), json!(c.seed));
            let mut text = serde_json::to_string_pretty(&Value::Object(object)).expect("JSON value");
            text.push('\n');
            text
        }
    }
}

fn emit(command: &Command, text: &str) -> Result<(), Failure> {
    let io_failure = |e: std::io::Error| Failure {
        code: EXIT_IO,
        kind: "io",
        message: e.to_string(),
    };
    match &common(command).out {
        Some(path) => std::fs::write(path, text).map_err(io_failure),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io_failure),
    }
}

fn report(failure: &Failure) -> ExitCode {
    let record = json!({"error": failure.kind, "message": failure.message, "exit_code": failure.code});
    eprintln!("{record}");
    ExitCode::from(failure.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            return report(&usage_failure(message.trim_end().to_string()));
        }
    };
    let outcome = run(&cli.command).and_then(|artifact| {
        let failed = artifact.failed_checks;
        emit(&cli.command, &render(&cli.command, artifact))?;
        Ok(failed)
    });
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => report(&Failure {
            code: EXIT_SELFCHECK,
            kind: "selfcheck",
            message: "one or more self-checks failed".to_string(),
        }),
        Err(f) => report(&f),
    }
}
