use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use freqsec::conic::{build_program, export_program, FrequencyProblem};
use freqsec::dispatch::{
    dispatch_program, solve_dispatch_with, sweep, DispatchCase, DispatchOptions, Method, SweepAxis,
};
use freqsec::io::SystemInput;
use freqsec::simulate::{ramp_providers, simulate, tune_droop, ProviderDynamics, SimConfig};
use freqsec::{dynamics, harness, security, Error, SecurityReport};

/// Exit status for a domain outcome that is not a fault: insecure snapshot,
/// infeasible case, failed self-check.
const EXIT_NEGATIVE: u8 = 1;
const EXIT_FAULT: u8 = 2;

#[derive(Parser)]
#[command(name = "freqsec", version, about = "Frequency-security assessment and scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assess a system snapshot; exits 0 iff every requirement holds.
    Check { system: PathBuf },
    /// Closed-form nadir instant, depth and active interval.
    Nadir { system: PathBuf },
    /// Least-cost secure dispatch of a case.
    Optimize {
        case: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Drop the frequency-security constraints.
        #[arg(long)]
        unsecured: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Integrate the swing equation and write the trajectory as CSV.
    Simulate {
        system: PathBuf,
        /// Providers JSON file, or `ramp` (exact ramps) or `droop` (tuned droop lags).
        providers: String,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 30.0)]
        t_end: f64,
        /// Load damping (MW/Hz).
        #[arg(long, default_value_t = 0.0)]
        damping: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Re-solve a case along one parameter axis and write the results as CSV.
    Sweep {
        case: PathBuf,
        /// `delay:<service>`, `provider_fraction:<class>:<service>`, `sigma`,
        /// `wind_scale` or `demand_inertia_fraction`.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Randomized self-checks of the closed forms, simulator and solver.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
    /// Write the conic program of a dispatch case or frequency problem.
    ExportProgram {
        input: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct SolverArgs {
    /// Relative optimality gap, in (0, 0.5].
    #[arg(long, default_value_t = 0.005, value_parser = parse_gap)]
    gap: f64,
    #[arg(long, default_value = "mi")]
    method: Method,
}

#[derive(Args)]
struct OutArg {
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl OutArg {
    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            Some(path) => Box::new(BufWriter::new(
                File::create(path).with_context(|| format!("creating {}", path.display()))?,
            )),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn parse_gap(s: &str) -> std::result::Result<f64, String> {
    let gap: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if gap > 0.0 && gap <= 0.5 {
        Ok(gap)
    } else {
        Err(format!("gap must lie in (0, 0.5], got {gap}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = matches!(e.downcast_ref::<Error>(), Some(Error::Infeasible(_)));
            ExitCode::from(if infeasible { EXIT_NEGATIVE } else { EXIT_FAULT })
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Check { system } => check(&system),
        Command::Nadir { system } => nadir(&system),
        Command::Optimize { case, solver, unsecured, out } => optimize(&case, &solver, !unsecured, &out),
        Command::Simulate { system, providers, dt, t_end, damping, out } => {
            simulate_cmd(&system, &providers, SimConfig::new(dt, t_end).with_damping(damping), &out)
        }
        Command::Sweep { case, axis, values, solver, out } => sweep_cmd(&case, &axis, &values, &solver, &out),
        Command::Verify { seed, cases } => verify(seed, cases),
        Command::ExportProgram { input, out } => export(&input, &out),
    }
}

fn write_json(value: &impl Serialize, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_system(path: &Path) -> Result<SystemInput> {
    SystemInput::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_case(path: &Path) -> Result<DispatchCase> {
    DispatchCase::from_json(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn check(path: &Path) -> Result<u8> {
    let input = load_system(path)?;
    let report = security::assess(&input.snapshot, &input.spec, input.chance.as_ref())?;
    write_json(&report, io::stdout().lock())?;
    eprint!("{}", report_table(&report));
    Ok(if report.is_secure() { 0 } else { EXIT_NEGATIVE })
}

fn report_table(r: &SecurityReport) -> String {
    let status = |ok: bool| if ok { "ok" } else { "VIOLATED" };
    let opt = |v: Option<f64>, unit: &str| v.map_or("n/a".to_string(), |v| format!("{v:.4} {unit}"));
    let mut s = String::new();
    s += &format!("{:<14}{:<10}detail\n", "requirement", "status");
    s += &format!(
        "{:<14}{:<10}margin {:.1} MW·s, rocof {}\n",
        "rocof",
        status(r.rocof_ok),
        r.rocof_margin,
        opt(r.rocof_value, "Hz/s")
    );
    s += &format!(
        "{:<14}{:<10}margin {:.1} MW\n",
        "steady-state",
        status(r.steady_state_ok),
        r.steady_state_margin
    );
    s += &format!(
        "{:<14}{:<10}depth {}, at {}, soc slack ratio {}\n",
        "nadir",
        status(r.nadir_ok),
        opt(r.nadir_depth, "Hz"),
        opt(r.nadir_time, "s"),
        r.soc_slack_ratio.map_or("n/a".to_string(), |v| format!("{:.2}%", 100.0 * v))
    );
    let violated = r.violations();
    if violated.is_empty() {
        s += "secure\n";
    } else {
        s += &format!("insecure: {} violated\n", violated.join(", "));
    }
    s
}

#[derive(Serialize)]
struct NadirOutput {
    t_nadir: f64,
    depth: f64,
    interval: usize,
}

fn nadir(path: &Path) -> Result<u8> {
    let input = load_system(path)?;
    let n = dynamics::nadir(&input.snapshot, &input.spec)?;
    write_json(&NadirOutput { t_nadir: n.time, depth: n.depth, interval: n.interval }, io::stdout().lock())?;
    Ok(0)
}

fn options(solver: &SolverArgs, secure: bool) -> DispatchOptions {
    DispatchOptions { gap: solver.gap, method: solver.method, secure, ..DispatchOptions::default() }
}

fn optimize(path: &Path, solver: &SolverArgs, secure: bool, out: &OutArg) -> Result<u8> {
    let case = load_case(path)?;
    let schedule = solve_dispatch_with(&case, &options(solver, secure))?;
    let mut w = out.writer()?;
    w.write_all(schedule.to_json().as_bytes())?;
    writeln!(w)?;
    w.flush()?;
    eprintln!(
        "{:?}: cost {:.2}, bound {:.2}, {} nodes",
        schedule.status, schedule.total_cost, schedule.bound, schedule.node_count
    );
    Ok(0)
}

fn providers_for(input: &SystemInput, which: &str) -> Result<Vec<ProviderDynamics>> {
    Ok(match which {
        "ramp" => ramp_providers(&input.snapshot),
        "droop" => tune_droop(&input.snapshot, &input.spec)?,
        file => {
            let text = read(Path::new(file))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Parse(e.to_string()))
                .with_context(|| format!("loading {file}"))?
        }
    })
}

fn simulate_cmd(path: &Path, which: &str, config: SimConfig, out: &OutArg) -> Result<u8> {
    let input = load_system(path)?;
    let providers = providers_for(&input, which)?;
    let traj = simulate(&input.snapshot, &input.spec, &providers, &config)?;
    let mut w = out.writer()?;
    traj.write_csv(&mut w)?;
    // the closed form needs a recovering portfolio; skip the comparison otherwise
    if let Ok(analytic) = dynamics::nadir(&input.snapshot, &input.spec) {
        writeln!(
            w,
            "# analytic_time={} analytic_depth={} margin={}",
            analytic.time,
            analytic.depth,
            analytic.depth - traj.nadir.depth
        )?;
    }
    w.flush()?;
    eprintln!("nadir {:.4} Hz at {:.3} s", traj.nadir.depth, traj.nadir.time);
    Ok(0)
}

fn sweep_cmd(path: &Path, axis: &SweepAxis, values: &[f64], solver: &SolverArgs, out: &OutArg) -> Result<u8> {
    let case = load_case(path)?;
    let result = sweep(&case, axis, values, &options(solver, true))?;
    result.write_csv(out.writer()?)?;
    if !result.monotone {
        eprintln!("warning: cost is not {:?} along {axis}", result.expected);
    }
    Ok(0)
}

fn verify(seed: u64, cases: usize) -> Result<u8> {
    if cases == 0 {
        bail!("--cases must be positive");
    }
    let checks = harness::verify(seed, cases)?;
    write_json(&checks, io::stdout().lock())?;
    for c in &checks {
        eprintln!(
            "{:<24}{:>6} cases  worst {:.3e}  {}",
            c.name,
            c.cases,
            c.worst,
            if c.passed() { "pass" } else { "FAIL" }
        );
    }
    Ok(if checks.iter().all(|c| c.passed()) { 0 } else { EXIT_NEGATIVE })
}

fn export(path: &Path, out: &OutArg) -> Result<u8> {
    let text = read(path)?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let program = if value.get("units").is_some() {
        let case = DispatchCase::from_json(&text)?;
        dispatch_program(&case)?
    } else {
        let problem: FrequencyProblem =
            serde_json::from_value(value).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        build_program(&problem)?.0
    };
    let mut w = out.writer()?;
    w.write_all(export_program(&program)?.as_bytes())?;
    w.flush()?;
    Ok(0)
}
