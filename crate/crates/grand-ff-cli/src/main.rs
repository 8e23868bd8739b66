//! Command-line front end: scenario loading, solver and simulator commands,
//! CSV/JSON reports. Exit codes: 0 success, 2 validation error, 3 numerical
//! failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grand_ff::engine::{CsvEventWriter, EventSink, PolicyKind};
use grand_ff::experiment::{
    self, default_horizon, default_warmup, ExperimentError, ExperimentPlan, SingleRunOptions,
};
use grand_ff::fluid::{self, FluidError};
use grand_ff::model::{ModelError, Scenario};
use grand_ff::optim::{self, OptimError};
use grand_ff::ranks::EmptyRule;
use grand_ff::stats::StatsError;

#[derive(Parser)]
#[command(
    name = "grandff",
    version,
    about = "Infinite-server packing simulator: greedy-random placement with \
             First-Fit ranked servers, plus the fluid-scale toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replication and report steady-state summaries.
    Simulate(SimulateArgs),
    /// Minimize the occupied-server mass over the load polytope (LP).
    Qstar(QstarArgs),
    /// Solve the convex surrogate for a fixed parameter a.
    Xstar(XstarArgs),
    /// Sweep a downward and tabulate q^{*,a} and the face distance.
    Asweep(AsweepArgs),
    /// Stability report of the linearized dynamics at the equilibrium.
    FluidCheck(FluidCheckArgs),
    /// r-grid convergence study with independent replications.
    Convergence(ConvergenceArgs),
    /// Replay shared logs under several empty-server rules.
    ReplayCompare(ReplayCompareArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: String,
}

#[derive(Args)]
struct PolicyArgs {
    /// Placement policy.
    #[arg(long, value_parser = ["grand-az", "grand-zp"], default_value = "grand-az")]
    policy: String,
    /// Virtual-empty fraction for grand-az.
    #[arg(long)]
    a: Option<f64>,
    /// Exponent for grand-zp.
    #[arg(long)]
    p: Option<f64>,
}

impl PolicyArgs {
    fn build(&self) -> Result<PolicyKind, CliError> {
        match self.policy.as_str() {
            "grand-az" => {
                let a = self.a.unwrap_or(0.1);
                if !(a > 0.0) {
                    return Err(CliError::validation(format!(
                        "--a must be positive, got {a}"
                    )));
                }
                Ok(PolicyKind::GrandAz { a })
            }
            "grand-zp" => {
                let p = self
                    .p
                    .ok_or_else(|| CliError::validation("--p is required for grand-zp".into()))?;
                if !(p > 0.0 && p < 1.0) {
                    return Err(CliError::validation(format!(
                        "--p must lie in (0,1), got {p}"
                    )));
                }
                Ok(PolicyKind::GrandZp { p })
            }
            other => Err(CliError::validation(format!("unknown policy {other}"))),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Empty-server rule for the online rank layer.
    #[arg(long, default_value = "ff")]
    rule: EmptyRule,
    /// Override the scenario's scale parameter r.
    #[arg(long)]
    r: Option<f64>,
    /// Model-time horizon (default: max(200, 20 r^0.3)).
    #[arg(long)]
    horizon: Option<f64>,
    /// Warmup excluded from averages (default: max(10/min mu, horizon/10)).
    #[arg(long)]
    warmup: Option<f64>,
    /// Replication seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rank boundary for G (defaults to the policy's target mass times r).
    #[arg(long)]
    g_target: Option<u64>,
    /// Record (t, Y, Z, Q) every this many model-time units after warmup.
    #[arg(long)]
    sample_interval: Option<f64>,
    /// Stream the event log to this CSV file.
    #[arg(long)]
    log_events: Option<String>,
    /// Write a one-row CSV summary.
    #[arg(long)]
    out: Option<String>,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct QstarArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Also certify against brute-force vertex enumeration (small sets).
    #[arg(long)]
    certify: bool,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct XstarArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 0.1)]
    a: f64,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AsweepArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Comma-separated decreasing grid of a values in (0,1).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.01, 0.001, 1e-4])]
    grid: Vec<f64>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FluidCheckArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long, default_value_t = 0.1)]
    a: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Comma-separated r grid.
    #[arg(long, value_delimiter = ',', required = true)]
    r_grid: Vec<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    /// Replications per grid point.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReplayCompareArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Empty-server rules to couple (comma-separated).
    #[arg(long, value_delimiter = ',', default_values_t = vec![
        EmptyRule::FirstFit, EmptyRule::RandomHole, EmptyRule::FreshServer
    ])]
    rule: Vec<EmptyRule>,
    #[arg(long, value_delimiter = ',', required = true)]
    r_grid: Vec<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn validation(message: String) -> Self {
        CliError { message, code: 2 }
    }

    fn numerical(message: String) -> Self {
        CliError { message, code: 3 }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::DomainA(_)
            | OptimError::Dimension { .. }
            | OptimError::TooLargeForEnumeration(_)
            | OptimError::NegativeComponent { .. } => CliError::validation(e.to_string()),
            _ => CliError::numerical(e.to_string()),
        }
    }
}

impl From<FluidError> for CliError {
    fn from(e: FluidError) -> Self {
        match e {
            FluidError::BadStep(_) => CliError::validation(e.to_string()),
            FluidError::Optim(inner) => inner.into(),
            _ => CliError::numerical(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::numerical(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidPlan(_) => CliError::validation(e.to_string()),
            ExperimentError::Model(inner) => inner.into(),
            ExperimentError::Optim(inner) => inner.into(),
            ExperimentError::Stats(inner) => inner.into(),
            ExperimentError::Io(inner) => CliError::validation(inner.to_string()),
            ExperimentError::Sim(inner) => CliError::numerical(inner.to_string()),
            ExperimentError::Rank(inner) => CliError::numerical(inner.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Qstar(args) => cmd_qstar(args),
        Command::Xstar(args) => cmd_xstar(args),
        Command::Asweep(args) => cmd_asweep(args),
        Command::FluidCheck(args) => cmd_fluid_check(args),
        Command::Convergence(args) => cmd_convergence(args),
        Command::ReplayCompare(args) => cmd_replay_compare(args),
    }
}

fn load_scenario(path: &str) -> Result<Scenario, CliError> {
    Ok(Scenario::from_file(path)?)
}

fn write_out(path: &str, content: &str) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(content.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn fmt_f(v: f64) -> String {
    format!("{v:.9}")
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut scenario = load_scenario(&args.scenario.scenario)?;
    if let Some(r) = args.r {
        if !(r > 0.0) {
            return Err(CliError::validation(format!(
                "--r must be positive, got {r}"
            )));
        }
        scenario = scenario.with_r(r);
    }
    let policy = args.policy.build()?;
    let horizon = args.horizon.unwrap_or_else(|| default_horizon(scenario.r));
    let warmup = args
        .warmup
        .unwrap_or_else(|| default_warmup(scenario.min_mu(), horizon));
    if horizon <= warmup {
        return Err(CliError::validation(format!(
            "horizon {horizon} must exceed warmup {warmup}"
        )));
    }
    let g_target = match args.g_target {
        Some(n) => Some(n),
        None => {
            let rho = scenario.rho();
            let mass = match policy {
                PolicyKind::GrandAz { a } => {
                    optim::solve_xstar_a(&scenario.configs, &rho, a)?.q_star_a
                }
                PolicyKind::GrandZp { .. } => optim::solve_qstar(&scenario.configs, &rho)?.q_star,
            };
            Some((mass * scenario.r).floor() as u64)
        }
    };
    let opts = SingleRunOptions {
        horizon,
        warmup,
        seed: args.seed,
        rule: args.rule,
        g_target,
        sample_interval: args.sample_interval,
    };
    let report = match &args.log_events {
        Some(path) => {
            let file = BufWriter::new(File::create(path)?);
            let mut writer =
                CsvEventWriter::new(file).map_err(|e| CliError::validation(e.to_string()))?;
            let sink: &mut dyn EventSink = &mut writer;
            experiment::run_single(&scenario, &policy, &opts, Some(sink))?
        }
        None => experiment::run_single(&scenario, &policy, &opts, None)?,
    };

    if let Some(path) = &args.out {
        let mut csv = String::from(
            "r,seed,horizon,warmup,events,z_mean,z_hw,q_mean,q_hw,u_mean,u_hw,g_target,g_mean,final_u\n",
        );
        let est = |e: &Option<grand_ff::stats::SteadyStateEstimate>| match e {
            Some(e) => (fmt_f(e.mean), fmt_f(e.half_width)),
            None => (String::new(), String::new()),
        };
        let (zm, zh) = est(&report.z);
        let (qm, qh) = est(&report.q);
        let (um, uh) = est(&report.u);
        let (gm, _) = est(&report.g);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(report.r),
            report.seed,
            fmt_f(report.horizon),
            fmt_f(report.warmup),
            report.events,
            zm,
            zh,
            qm,
            qh,
            um,
            uh,
            report.g_target.map(|g| g.to_string()).unwrap_or_default(),
            gm,
            report.final_u,
        ));
        write_out(path, &csv)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!(
            "policy {} rule {} r {} horizon {} warmup {} seed {}",
            report.policy.label(),
            report.rule.label(),
            report.r,
            report.horizon,
            report.warmup,
            report.seed
        );
        println!(
            "events {} (arrivals {}, departures {})",
            report.events, report.arrivals, report.departures
        );
        let line = |name: &str, e: &Option<grand_ff::stats::SteadyStateEstimate>| {
            if let Some(e) = e {
                println!(
                    "{name}: {:.4} +- {:.4} ({} batches)",
                    e.mean, e.half_width, e.batches
                );
            }
        };
        line("Z", &report.z);
        line("Q", &report.q);
        line("U", &report.u);
        line("G", &report.g);
        println!(
            "final: Z {} Q {} U {}; busy periods: {} completed, mean {:.4}, emptying rate {:.4}",
            report.final_z,
            report.final_q,
            report.final_u,
            report.busy_periods.count,
            report.busy_periods.mean,
            report.busy_periods.emptying_rate
        );
        if let Some(m) = &report.marginals {
            for (i, stat) in m.per_type.iter().enumerate() {
                println!(
                    "Y_{i}: mean {:.3} var {:.3} dispersion {:.3} ({})",
                    stat.mean,
                    stat.variance,
                    stat.dispersion,
                    if stat.pass { "pass" } else { "fail" }
                );
            }
        }
    }
    Ok(())
}

fn cmd_qstar(args: QstarArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario.scenario)?;
    let rho = scenario.rho();
    let lp = optim::solve_qstar(&scenario.configs, &rho)?;
    let certificate = if args.certify {
        let oracle = optim::qstar_by_enumeration(&scenario.configs, &rho)?;
        let gap = (oracle.value - lp.q_star).abs();
        if gap > 1e-9 {
            return Err(CliError::numerical(format!(
                "simplex value {} disagrees with vertex enumeration {}",
                lp.q_star, oracle.value
            )));
        }
        Some(oracle.value)
    } else {
        None
    };
    if let Some(path) = &args.out {
        let mut csv = String::from("config,x_star\n");
        for (k, x) in lp.x_star.x.iter().enumerate() {
            csv.push_str(&format!(
                "\"{}\",{}\n",
                scenario.configs.config(k),
                fmt_f(*x)
            ));
        }
        write_out(path, &csv)?;
    }
    if args.json {
        let report = serde_json::json!({
            "q_star": lp.q_star,
            "x_star": lp.x_star.x,
            "configs": scenario.configs.nonzero().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "is_unique": lp.is_unique,
            "certified": certificate.is_some(),
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("q* = {:.9} (unique vertex: {})", lp.q_star, lp.is_unique);
        for (k, x) in lp.x_star.x.iter().enumerate() {
            println!("  x*[{}] = {:.9}", scenario.configs.config(k), x);
        }
        if certificate.is_some() {
            println!("certified by vertex enumeration");
        }
    }
    Ok(())
}

fn cmd_xstar(args: XstarArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario.scenario)?;
    let rho = scenario.rho();
    let sol = optim::solve_xstar_a(&scenario.configs, &rho, args.a)?;
    if let Some(path) = &args.out {
        let mut csv = String::from("config,x_star_a\n");
        for (k, x) in sol.x_star_a.x.iter().enumerate() {
            csv.push_str(&format!(
                "\"{}\",{}\n",
                scenario.configs.config(k),
                fmt_f(*x)
            ));
        }
        write_out(path, &csv)?;
    }
    if args.json {
        let report = serde_json::json!({
            "a": args.a,
            "q_star_a": sol.q_star_a,
            "x_star_a": sol.x_star_a.x,
            "configs": scenario.configs.nonzero().iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "eta": sol.eta,
            "constraint_residual": sol.constraint_residual,
            "kkt_residual": sol.kkt_residual,
            "pg_value_gap": sol.pg_value_gap,
        });
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("q^(*,a) = {:.9} at a = {}", sol.q_star_a, args.a);
        for (k, x) in sol.x_star_a.x.iter().enumerate() {
            println!("  x[{}] = {:.9}", scenario.configs.config(k), x);
        }
        println!(
            "residuals: constraint {:.3e}, stationarity {:.3e}, oracle gap {:.3e}",
            sol.constraint_residual, sol.kkt_residual, sol.pg_value_gap
        );
    }
    Ok(())
}

fn cmd_asweep(args: AsweepArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario.scenario)?;
    let rho = scenario.rho();
    let rows = optim::a_sweep(&scenario.configs, &rho, &args.grid)?;
    let mut csv = String::from("a,q_star_a,distance_to_face\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            row.a,
            fmt_f(row.q_star_a),
            fmt_f(row.distance_to_face)
        ));
    }
    if let Some(path) = &args.out {
        write_out(path, &csv)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print!("{csv}");
    }
    Ok(())
}

fn cmd_fluid_check(args: FluidCheckArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario.scenario)?;
    let report = fluid::fluid_report(&scenario, args.a)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => write_out(path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn build_plan(
    scenario: Scenario,
    policy: PolicyKind,
    rules: Vec<EmptyRule>,
    r_grid: Vec<f64>,
    horizon: Option<f64>,
    warmup: Option<f64>,
    seeds: usize,
    master_seed: u64,
) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(scenario, policy);
    plan.rules = rules;
    plan.r_grid = r_grid;
    plan.horizon = horizon;
    plan.warmup = warmup;
    plan.seeds = seeds;
    plan.master_seed = master_seed;
    for w in plan.warnings() {
        eprintln!("warning: {w}");
    }
    plan
}

fn cmd_convergence(args: ConvergenceArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario.scenario)?;
    let policy = args.policy.build()?;
    let plan = build_plan(
        scenario,
        policy,
        vec![EmptyRule::FirstFit],
        args.r_grid,
        args.horizon,
        args.warmup,
        args.seeds,
        args.master_seed,
    );
    let table = experiment::run_convergence(&plan)?;
    let csv = table.to_csv();
    if let Some(path) = &args.out {
        write_out(path, &csv)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        print!("{csv}");
    }
    if table.rows.iter().any(|r| !r.lower_bound_ok) {
        return Err(CliError::numerical(
            "universal lower bound violated; see lower_bound_ok column".into(),
        ));
    }
    Ok(())
}

fn cmd_replay_compare(args: ReplayCompareArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args.scenario.scenario)?;
    let policy = args.policy.build()?;
    let plan = build_plan(
        scenario,
        policy,
        args.rule,
        args.r_grid,
        args.horizon,
        args.warmup,
        args.seeds,
        args.master_seed,
    );
    let report = experiment::run_replay_compare(&plan)?;
    let csv = report.to_csv();
    if let Some(path) = &args.out {
        write_out(path, &csv)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{csv}");
        if report.comparisons > 0 {
            println!(
                "first-fit strictly smallest mean U in {}/{} seeds",
                report.ff_wins, report.comparisons
            );
        }
    }
    Ok(())
}
