use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fuel_boundary::boundary::{self, ExtentOptions};
use fuel_boundary::oracle::{self, PsorOptions};
use fuel_boundary::sim::{self, SimConfig};
use fuel_boundary::value::ValueProfile;
use fuel_boundary::verify::{self, CheckReport, VerifyConfig};
use fuel_boundary::{derive_constants, Error, Model, ModelParams};
use serde::Serialize;

/// Moving free boundaries, value functions, oracles and simulation for the
/// finite-fuel stopping problem.
///
/// Every flag can also be set through an environment variable named
/// FUEL_BOUNDARY_<FLAG>, e.g. FUEL_BOUNDARY_LAMBDA=0.9.
#[derive(Parser, Debug)]
#[command(name = "fuel-boundary", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, env = "FUEL_BOUNDARY_ALPHA")]
    alpha: f64,
    #[arg(long, env = "FUEL_BOUNDARY_DELTA")]
    delta: f64,
    #[arg(long, env = "FUEL_BOUNDARY_LAMBDA")]
    lambda: f64,
    /// Output format; tables default to csv, everything else to json.
    #[arg(long, value_enum, env = "FUEL_BOUNDARY_FORMAT")]
    format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long, env = "FUEL_BOUNDARY_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, env = "FUEL_BOUNDARY_THREADS")]
    threads: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum OracleKind {
    Minorant,
    Psor,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// f0, lambda_star, lambda_dagger, B0 and the regime.
    Constants {
        #[command(flatten)]
        common: Common,
    },
    /// Table of F, G, A, B and G' over an evenly spaced fuel grid.
    Boundaries {
        #[command(flatten)]
        common: Common,
        /// Largest fuel level, or `auto` for 0.95·c0.
        #[arg(long, default_value = "auto", env = "FUEL_BOUNDARY_C_MAX")]
        c_max: String,
        #[arg(long, default_value_t = 64, env = "FUEL_BOUNDARY_C_STEPS")]
        c_steps: usize,
    },
    /// Value function profile at one fuel level (c = 0 gives the no-fuel problem).
    Value {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "FUEL_BOUNDARY_C")]
        c: f64,
        #[arg(long, default_value_t = 0.0, env = "FUEL_BOUNDARY_X_MIN")]
        x_min: f64,
        /// Defaults to f0 + c + 1.
        #[arg(long, env = "FUEL_BOUNDARY_X_MAX")]
        x_max: Option<f64>,
        #[arg(long, default_value_t = 512, env = "FUEL_BOUNDARY_X_STEPS")]
        x_steps: usize,
    },
    /// Runs the verification suite; exits 1 if any check fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated fuel levels, or `auto` for 0.9·c0·2^-k, k = 0..7.
        #[arg(long, default_value = "auto", env = "FUEL_BOUNDARY_C_LIST")]
        c_list: String,
        #[arg(long, default_value_t = 1.0, env = "FUEL_BOUNDARY_TOL_SCALE")]
        tol_scale: f64,
    },
    /// Independent numerical solution: convex minorant or PSOR.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, env = "FUEL_BOUNDARY_KIND")]
        kind: OracleKind,
        #[arg(long, env = "FUEL_BOUNDARY_C")]
        c: f64,
        #[arg(long, default_value_t = 100_000, env = "FUEL_BOUNDARY_N")]
        n: usize,
    },
    /// Monte Carlo cost of the boundary policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "FUEL_BOUNDARY_X0")]
        x0: f64,
        #[arg(long, env = "FUEL_BOUNDARY_C")]
        c: f64,
        #[arg(long, default_value_t = 100_000, env = "FUEL_BOUNDARY_PATHS")]
        paths: usize,
        #[arg(long, default_value_t = 1e-4, env = "FUEL_BOUNDARY_DT")]
        dt: f64,
        /// Defaults to 10/alpha.
        #[arg(long, env = "FUEL_BOUNDARY_HORIZON")]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 0, env = "FUEL_BOUNDARY_SEED")]
        seed: u64,
        #[arg(long, env = "FUEL_BOUNDARY_ANTITHETIC")]
        antithetic: bool,
    },
}

enum Failure {
    Core(Error),
    Io(io::Error),
    Json(serde_json::Error),
    Checks(Vec<String>),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Json(e)
    }
}

struct Output {
    csv: Option<String>,
    json: serde_json::Value,
}

fn output<T: Serialize>(value: &T, csv: Option<String>) -> Result<Output, Failure> {
    Ok(Output {
        csv,
        json: serde_json::to_value(value)?,
    })
}

fn params(c: &Common) -> Result<ModelParams, Failure> {
    Ok(ModelParams::new(c.alpha, c.delta, c.lambda)?)
}

fn regime_model(c: &Common) -> Result<Model, Failure> {
    Ok(Model::new_regime(params(c)?)?)
}

fn c0(m: &Model) -> Result<f64, Failure> {
    Ok(boundary::find_c0(m, &ExtentOptions::default())?.value)
}

fn usage(msg: String) -> Failure {
    Failure::Usage(msg)
}

#[derive(Serialize)]
struct ConstantsOut {
    alpha: f64,
    delta: f64,
    lambda: f64,
    #[serde(flatten)]
    constants: fuel_boundary::DerivedConstants,
}

fn constants(common: &Common) -> Result<Output, Failure> {
    let p = params(common)?;
    let d = derive_constants(&p)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
    let csv = format!(
        "alpha,delta,lambda,f0,lambda_star,lambda_dagger,B0,regime\n{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{},{}\n",
        p.alpha,
        p.delta,
        p.lambda,
        opt(d.f0),
        d.lambda_star,
        d.lambda_dagger,
        opt(d.b0),
        d.regime
    );
    output(
        &ConstantsOut {
            alpha: p.alpha,
            delta: p.delta,
            lambda: p.lambda,
            constants: d,
        },
        Some(csv),
    )
}

fn boundaries(common: &Common, c_max: &str, c_steps: usize) -> Result<Output, Failure> {
    let m = regime_model(common)?;
    let c_max = if c_max == "auto" {
        0.95 * c0(&m)?
    } else {
        c_max
            .parse::<f64>()
            .map_err(|_| usage(format!("--c-max must be a number or `auto`, got `{c_max}`")))?
    };
    if c_steps == 0 {
        return Err(usage("--c-steps must be positive".into()));
    }
    let grid: Vec<f64> = (1..=c_steps)
        .map(|k| c_max * k as f64 / c_steps as f64)
        .collect();
    let table = boundary::boundary_table(&m, &grid)?;
    output(&table, Some(table.to_csv()))
}

fn value(
    common: &Common,
    c: f64,
    x_min: f64,
    x_max: Option<f64>,
    x_steps: usize,
) -> Result<Output, Failure> {
    let m = regime_model(common)?;
    if x_steps < 2 {
        return Err(usage("--x-steps must be at least 2".into()));
    }
    let x_max = x_max.unwrap_or(m.spend_switch(c) + 1.0);
    let xs: Vec<f64> = (0..x_steps)
        .map(|i| x_min + (x_max - x_min) * i as f64 / (x_steps - 1) as f64)
        .collect();
    let profile = if c == 0.0 {
        ValueProfile::build(&m, None, &xs)?
    } else {
        let bp = boundary::solve_boundary(&m, c)?;
        ValueProfile::build(&m, Some(&bp), &xs)?
    };
    output(&profile, Some(profile.to_csv()))
}

fn reports_csv(reports: &[CheckReport]) -> String {
    let mut out =
        String::from("name,passed,worst_violation,location,c,tolerance,property,reason\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{:.16e},{:.16e},{},{:.16e},\"{}\",\"{}\"\n",
            r.name,
            r.passed,
            r.worst_violation,
            r.location,
            r.c.map_or(String::new(), |c| format!("{c:.16e}")),
            r.tolerance,
            r.property.replace('"', "'"),
            r.reason.as_deref().unwrap_or("").replace('"', "'"),
        ));
    }
    out
}

fn run_verify(common: &Common, c_list: &str, tol_scale: f64) -> Result<Output, Failure> {
    let m = regime_model(common)?;
    let cs = if c_list == "auto" {
        verify::default_c_list(&m)?
    } else if c_list.trim().is_empty() {
        Vec::new()
    } else {
        c_list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("--c-list entry `{s}` is not a number")))
            })
            .collect::<Result<_, _>>()?
    };
    let cfg = VerifyConfig {
        tol_scale,
        ..VerifyConfig::default()
    };
    let reports = verify::run_suite(m.params(), &cs, &cfg)?;
    output(&reports, Some(reports_csv(&reports)))
}

fn run_oracle(common: &Common, kind: OracleKind, c: f64, n: usize) -> Result<Output, Failure> {
    let m = regime_model(common)?;
    match kind {
        OracleKind::Minorant => {
            let r = oracle::minorant_oracle(&m, c, n, m.spend_switch(c) + 1.0)?;
            output(&r, Some(r.to_csv()))
        }
        OracleKind::Psor => {
            let r =
                oracle::psor_oracle(&m, c, n, verify::psor_x_max(&m, c), &PsorOptions::default())?;
            output(&r, Some(r.to_csv()))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    common: &Common,
    x0: f64,
    c: f64,
    paths: usize,
    dt: f64,
    horizon: Option<f64>,
    seed: u64,
    antithetic: bool,
) -> Result<Output, Failure> {
    let m = regime_model(common)?;
    let bp = boundary::solve_boundary(&m, c)?;
    let cfg = SimConfig {
        n_paths: paths,
        dt,
        horizon: horizon.unwrap_or(10.0 / m.alpha()),
        seed,
        antithetic,
        x0,
        fuel: c,
    };
    let r = sim::simulate_policy(&m, &bp, &cfg)?;
    let csv = format!(
        "mean_cost,std_error,n_paths,dt,horizon,n_jumped,n_stopped_left,truncated,tail_bound,coarse_step\n\
         {:.16e},{:.16e},{},{:.16e},{:.16e},{},{},{},{:.16e},{}\n",
        r.mean_cost,
        r.std_error,
        r.n_paths,
        r.dt,
        r.horizon,
        r.n_jumped,
        r.n_stopped_left,
        r.truncated,
        r.tail_bound,
        r.coarse_step
    );
    output(&r, Some(csv))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let common = match &cli.command {
        Command::Constants { common }
        | Command::Boundaries { common, .. }
        | Command::Value { common, .. }
        | Command::Verify { common, .. }
        | Command::Oracle { common, .. }
        | Command::Simulate { common, .. } => common,
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let (out, default_format) = match &cli.command {
        Command::Constants { common } => (constants(common)?, Format::Json),
        Command::Boundaries {
            common,
            c_max,
            c_steps,
        } => (boundaries(common, c_max, *c_steps)?, Format::Csv),
        Command::Value {
            common,
            c,
            x_min,
            x_max,
            x_steps,
        } => (value(common, *c, *x_min, *x_max, *x_steps)?, Format::Csv),
        Command::Verify {
            common,
            c_list,
            tol_scale,
        } => (run_verify(common, c_list, *tol_scale)?, Format::Json),
        Command::Oracle { common, kind, c, n } => (run_oracle(common, *kind, *c, *n)?, Format::Csv),
        Command::Simulate {
            common,
            x0,
            c,
            paths,
            dt,
            horizon,
            seed,
            antithetic,
        } => (
            simulate(common, *x0, *c, *paths, *dt, *horizon, *seed, *antithetic)?,
            Format::Json,
        ),
    };
    let text = match (common.format.unwrap_or(default_format), out.csv) {
        (Format::Csv, Some(csv)) => csv,
        _ => serde_json::to_string_pretty(&out.json)? + "\n",
    };
    match &common.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    if let Command::Verify { .. } = cli.command {
        let failed: Vec<String> = out
            .json
            .as_array()
            .into_iter()
            .flatten()
            .filter(|r| r["passed"] == false)
            .filter_map(|r| r["name"].as_str().map(String::from))
            .collect();
        if !failed.is_empty() {
            return Err(Failure::Checks(failed));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match failure {
                Failure::Core(Error::Regime { regime, message }) => {
                    eprintln!("error: parameters are in the {regime} regime: {message}")
                }
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Io(e) => eprintln!("error: {e}"),
                Failure::Json(e) => eprintln!("error: {e}"),
                Failure::Checks(names) => eprintln!("error: failed checks: {}", names.join(", ")),
                Failure::Usage(msg) => {
                    eprintln!("error: {msg}\n\nFor more information, try '--help'.");
                    return ExitCode::from(2);
                }
            }
            ExitCode::from(1)
        }
    }
}
