//! Command-line front end: config loading, subcommand dispatch, deterministic
//! seeding, and CSV/JSON emission.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on solver
//! convergence failures. Diagnostics go to stderr; data goes to stdout or to
//! the configured output path (plus a `.manifest.json` sidecar).

mod config;

use clap::{Parser, Subcommand, ValueEnum};
use config::{apply_env, load_config, Format, RunConfig, RunManifest};
use matchq::equilibrium::{
    solve_projection, solve_scalar_two_type, verify_ne_with, EquilibriumResult,
};
use matchq::experiments;
use matchq::model::{PolicyKind, PolicySpec, StrategyProfile};
use matchq::sim;
use matchq::{ctmc, Error};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "matchq", version)]
#[command(about = "Strategic matching queues: exact analysis, equilibria, simulation, sweeps")]
struct Cli {
    /// TOML run configuration (or a previously emitted manifest JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; stdout when omitted (sweeps fall back to a default name).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format for table-like results.
    #[arg(long, global = true, value_enum)]
    format: Option<CliFormat>,

    /// Uniform truncation cap override; 0 means adaptive.
    #[arg(long, global = true)]
    cap: Option<u64>,

    /// Simulation horizon override.
    #[arg(long, global = true)]
    horizon: Option<f64>,

    /// Replication count override.
    #[arg(long, global = true)]
    reps: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Exact long-run throughput at the configured strategy (add --sim for a
    /// Monte Carlo estimate alongside).
    Throughput {
        /// Also simulate and report a confidence interval.
        #[arg(long)]
        sim: bool,
        /// Write the simulation's event log as CSV to this path.
        #[arg(long, requires = "sim")]
        event_log: Option<PathBuf>,
    },
    /// Expected virtual waits per (agent type, queue).
    Waits,
    /// Solve for queue-joining equilibria under the configured policy.
    Equilibrium,
    /// Scripted parameter sweeps with CSV output.
    Sweep {
        #[command(subcommand)]
        which: SweepCommand,
    },
    /// Coupled value-of-flexibility comparison from the configured base state.
    Couple,
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Throughput of NCR/ACR/RCR against first best across mu_0.
    #[command(name = "fig4_7")]
    Fig4_7 {
        #[arg(long, default_value_t = 61)]
        points: usize,
    },
    /// ACR versus RCR equilibria across lambda_0.
    Fig6 {
        #[arg(long, default_value_t = 61)]
        points: usize,
    },
    /// Exact RCR-dominates-NCR grid over random markets.
    Thm2 {
        #[arg(long, default_value_t = 1)]
        ell: usize,
        #[arg(long)]
        n_params: Option<usize>,
        #[arg(long)]
        n_sigmas: Option<usize>,
    },
    /// Coupled dominance suite for the value-of-flexibility lemmas.
    Lemmas,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Convergence { .. } | Error::NoAbsorption => 3,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn require_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("this subcommand needs --config <file>"))?;
    let mut config = load_config(path).map_err(Failure::config)?;
    apply_env(&mut config).map_err(Failure::config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(cap) = cli.cap {
        config.solver.cap = cap;
    }
    if let Some(horizon) = cli.horizon {
        config.sim.horizon = horizon;
    }
    if let Some(reps) = cli.reps {
        config.sim.replications = reps;
    }
    if let Some(out) = &cli.out {
        config.output.path = Some(out.display().to_string());
    }
    if let Some(format) = cli.format {
        config.output.format = Some(match format {
            CliFormat::Csv => Format::Csv,
            CliFormat::Json => Format::Json,
        });
    }
    Ok(config)
}

/// Resolve the working strategy profile: the configured matrix, or the
/// policy's equilibrium (extremal selection: smallest for ACR, largest for
/// RCR; NCR has the unique profile).
fn resolve_sigma(
    config: &RunConfig,
    policy: &PolicySpec,
) -> Result<(StrategyProfile, &'static str), Failure> {
    if let Some(profile) = config.sigma.profile().map_err(Failure::config)? {
        profile
            .validate_for(policy, config.market.ell())
            .map_err(|e| Failure::config(e.to_string()))?;
        return Ok((profile, "configured"));
    }
    let ell = config.market.ell();
    match config.policy.kind {
        PolicyKind::Ncr => Ok((StrategyProfile::single_queue(ell), "unique")),
        kind if ell == 1 => {
            let results = solve_scalar_two_type(&config.market, policy, &config.solver.scalar())?;
            let pick = match kind {
                PolicyKind::Acr => results.first(),
                _ => results.last(),
            }
            .ok_or_else(|| Failure::config("no equilibrium found"))?;
            Ok((pick.sigma_star.clone(), "equilibrium"))
        }
        _ => {
            let init = StrategyProfile::truthful(ell);
            let r = solve_projection(&config.market, policy, &init, &config.solver.projection())?;
            if !r.converged {
                return Err(Failure::from(Error::Convergence {
                    what: "projection equilibrium",
                    residual: r.residual,
                    tol: config.solver.tol,
                }));
            }
            Ok((r.sigma_star.clone(), "equilibrium"))
        }
    }
}

fn emit(
    config: &RunConfig,
    command: &str,
    json: String,
    csv: Option<String>,
) -> Result<(), Failure> {
    let prefer_csv = matches!(config.output.format, Some(Format::Csv)) && csv.is_some();
    let body = if prefer_csv { csv.unwrap() } else { json };
    match &config.output.path {
        None => {
            println!("{body}");
            Ok(())
        }
        Some(path) => {
            let path = Path::new(path);
            std::fs::write(path, body + "\n").map_err(|e| Failure::config(e.to_string()))?;
            let manifest = RunManifest::new(command, config).map_err(Failure::config)?;
            let text = serde_json::to_string_pretty(&manifest)
                .map_err(|e| Failure::config(e.to_string()))?;
            let mut sidecar = path.as_os_str().to_owned();
            sidecar.push(".manifest.json");
            std::fs::write(PathBuf::from(sidecar), text + "\n")
                .map_err(|e| Failure::config(e.to_string()))?;
            Ok(())
        }
    }
}

fn solve_exact_tp(
    config: &RunConfig,
    policy: &PolicySpec,
    sigma: &StrategyProfile,
) -> Result<f64, Failure> {
    if config.solver.cap > 0 {
        Ok(ctmc::exact_throughput(
            &config.market,
            policy,
            sigma,
            config.solver.cap,
        )?)
    } else {
        Ok(
            ctmc::solve_chain_adaptive(&config.market, policy, sigma, &config.solver.adaptive())?
                .throughput()?,
        )
    }
}

#[derive(Serialize)]
struct ThroughputRecord {
    command: &'static str,
    policy: String,
    sigma_source: &'static str,
    sigma: Vec<Vec<f64>>,
    exact_tp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim_tp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim_half_width: Option<f64>,
    seed: u64,
}

fn cmd_throughput(cli: &Cli, with_sim: bool, event_log: Option<&PathBuf>) -> Result<(), Failure> {
    let config = require_config(cli)?;
    let policy = config.policy_spec().map_err(Failure::config)?;
    let (sigma, source) = resolve_sigma(&config, &policy)?;
    let exact_tp = solve_exact_tp(&config, &policy, &sigma)?;
    let (mut sim_tp, mut sim_half_width) = (None, None);
    if with_sim {
        let r = sim::run_opts(
            &config.market,
            &policy,
            &sigma,
            config.sim.horizon,
            &matchq::model::SystemState::empty(),
            &sim::EventStream::new(config.seed),
            event_log.is_some(),
        )?;
        if let (Some(path), Some(log)) = (event_log, &r.log) {
            let mut file =
                std::fs::File::create(path).map_err(|e| Failure::config(e.to_string()))?;
            sim::write_log_csv(log, &mut file)?;
        }
        sim_tp = Some(r.throughput);
        sim_half_width = Some(r.throughput_half_width);
    }
    let record = ThroughputRecord {
        command: "throughput",
        policy: config.policy.kind.as_str().to_string(),
        sigma_source: source,
        sigma: sigma.rows().to_vec(),
        exact_tp,
        sim_tp,
        sim_half_width,
        seed: config.seed,
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| Failure::config(e.to_string()))?;
    emit(&config, "throughput", json, None)
}

#[derive(Serialize)]
struct WaitRecord {
    agent_type: usize,
    queue: usize,
    /// `null` encodes an infinite wait.
    wait: Option<f64>,
}

fn cmd_waits(cli: &Cli) -> Result<(), Failure> {
    let config = require_config(cli)?;
    let policy = config.policy_spec().map_err(Failure::config)?;
    let (sigma, _) = resolve_sigma(&config, &policy)?;
    let table = if config.solver.cap > 0 {
        ctmc::virtual_wait_table(&config.market, &policy, &sigma, config.solver.cap)?
    } else {
        let opts = config.solver.adaptive();
        let solved = ctmc::solve_chain_adaptive(&config.market, &policy, &sigma, &opts)?;
        ctmc::wait_table_given(&solved, &opts.chain)?
    };
    let mut records = Vec::new();
    let mut csv = String::from("agent_type,queue,wait\n");
    for i in 0..table.num_types() {
        for &q in table.queues() {
            let wait = table.wait(i, q);
            csv.push_str(&format!(
                "{i},{q},{}\n",
                wait.map(|w| w.to_string()).unwrap_or_else(|| "inf".into())
            ));
            records.push(WaitRecord {
                agent_type: i,
                queue: q,
                wait,
            });
        }
    }
    csv.pop();
    let json =
        serde_json::to_string_pretty(&records).map_err(|e| Failure::config(e.to_string()))?;
    emit(&config, "waits", json, Some(csv))
}

#[derive(Serialize)]
struct EquilibriumRecord {
    sigma: Vec<Vec<f64>>,
    residual: f64,
    method: String,
    converged: bool,
    iterations: usize,
    verified_residual: f64,
    exact_tp: f64,
}

fn equilibrium_record(
    config: &RunConfig,
    policy: &PolicySpec,
    r: &EquilibriumResult,
) -> Result<EquilibriumRecord, Failure> {
    let report = verify_ne_with(
        &config.market,
        policy,
        &r.sigma_star,
        matchq::equilibrium::SUPPORT_EPS,
        config.solver.tol,
        &config.solver.adaptive(),
    )?;
    let exact_tp = solve_exact_tp(config, policy, &r.sigma_star)?;
    Ok(EquilibriumRecord {
        sigma: r.sigma_star.rows().to_vec(),
        residual: r.residual,
        method: r.method.to_string(),
        converged: r.converged,
        iterations: r.iterations,
        verified_residual: report.residual,
        exact_tp,
    })
}

fn cmd_equilibrium(cli: &Cli) -> Result<(), Failure> {
    let config = require_config(cli)?;
    let policy = config.policy_spec().map_err(Failure::config)?;
    let ell = config.market.ell();
    let results: Vec<EquilibriumResult> = match config.policy.kind {
        PolicyKind::Ncr => {
            let sigma = StrategyProfile::single_queue(ell);
            let report = verify_ne_with(
                &config.market,
                &policy,
                &sigma,
                matchq::equilibrium::SUPPORT_EPS,
                config.solver.tol,
                &config.solver.adaptive(),
            )?;
            vec![EquilibriumResult {
                sigma_star: sigma,
                residual: report.residual,
                wait_table: report.wait_table,
                iterations: 0,
                method: "unique",
                converged: true,
            }]
        }
        _ if ell == 1 => solve_scalar_two_type(&config.market, &policy, &config.solver.scalar())?,
        _ => vec![solve_projection(
            &config.market,
            &policy,
            &StrategyProfile::truthful(ell),
            &config.solver.projection(),
        )?],
    };
    let mut records = Vec::new();
    for r in &results {
        records.push(equilibrium_record(&config, &policy, r)?);
    }
    let mut csv =
        String::from("policy,sigma,residual,verified_residual,exact_tp,converged,method\n");
    for r in &records {
        let flat: Vec<String> = r
            .sigma
            .iter()
            .flat_map(|row| row.iter().map(|p| p.to_string()))
            .collect();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            config.policy.kind.as_str(),
            flat.join(";"),
            r.residual,
            r.verified_residual,
            r.exact_tp,
            r.converged,
            r.method
        ));
    }
    csv.pop();
    let json =
        serde_json::to_string_pretty(&records).map_err(|e| Failure::config(e.to_string()))?;
    emit(&config, "equilibrium", json, Some(csv))
}

#[derive(Serialize)]
struct CoupleRecord {
    policy: String,
    base_mean: f64,
    with_flexible_mean: f64,
    with_specialized_mean: f64,
    d1_mean: f64,
    d1_se: f64,
    d2_mean: f64,
    d2_se: f64,
    replications: usize,
    seed: u64,
}

fn cmd_couple(cli: &Cli) -> Result<(), Failure> {
    let config = require_config(cli)?;
    let couple = config
        .couple
        .clone()
        .ok_or_else(|| Failure::config("couple needs a [couple] config section"))?;
    let policy = config.policy_spec().map_err(Failure::config)?;
    let (sigma, _) = resolve_sigma(&config, &policy)?;
    let r = sim::coupled_value_of_flexibility(
        &config.market,
        config.policy.kind,
        &sigma,
        &couple.base_state(),
        couple.extra_type,
        couple.horizon,
        config.sim.replications,
        &sim::EventStream::new(config.seed),
    )?;
    let record = CoupleRecord {
        policy: config.policy.kind.as_str().to_string(),
        base_mean: r.base_mean,
        with_flexible_mean: r.with_flexible_mean,
        with_specialized_mean: r.with_specialized_mean,
        d1_mean: r.one_plus_base_minus_flexible.mean,
        d1_se: r.one_plus_base_minus_flexible.std_err,
        d2_mean: r.flexible_minus_specialized.mean,
        d2_se: r.flexible_minus_specialized.std_err,
        replications: config.sim.replications,
        seed: config.seed,
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| Failure::config(e.to_string()))?;
    emit(&config, "couple", json, None)
}

fn optional_config(cli: &Cli) -> Result<Option<RunConfig>, Failure> {
    match &cli.config {
        Some(_) => require_config(cli).map(Some),
        None => Ok(None),
    }
}

fn cmd_sweep(cli: &Cli, which: &SweepCommand) -> Result<(), Failure> {
    let config = optional_config(cli)?;
    let seed = cli.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
    let scalar = config
        .as_ref()
        .map(|c| c.solver.scalar())
        .unwrap_or_default();
    let default_name = match which {
        SweepCommand::Fig4_7 { .. } => "fig4_7.csv",
        SweepCommand::Fig6 { .. } => "fig6.csv",
        SweepCommand::Thm2 { .. } => "thm2.csv",
        SweepCommand::Lemmas => "lemmas.csv",
    };
    let out = cli
        .out
        .clone()
        .or_else(|| {
            config
                .as_ref()
                .and_then(|c| c.output.path.clone().map(PathBuf::from))
        })
        .unwrap_or_else(|| PathBuf::from(default_name));
    match which {
        SweepCommand::Fig4_7 { points } => {
            let mut spec = experiments::fig4_7_spec(*points);
            spec.scalar = scalar;
            experiments::sweep_fig4_7(Some(&out), &spec)?;
        }
        SweepCommand::Fig6 { points } => {
            let mut spec = experiments::fig6_spec(*points);
            spec.scalar = scalar;
            experiments::sweep_fig6(Some(&out), &spec)?;
        }
        SweepCommand::Thm2 {
            ell,
            n_params,
            n_sigmas,
        } => {
            let mut opts = experiments::Thm2Options::default();
            if *ell == 2 {
                opts.n_params = 10;
                opts.n_sigmas = 5;
            }
            if let Some(n) = n_params {
                opts.n_params = *n;
            }
            if let Some(n) = n_sigmas {
                opts.n_sigmas = *n;
            }
            let report = experiments::theorem2_grid(*ell, seed, Some(&out), &opts)?;
            eprintln!(
                "thm2: {} rows, {} violations, max gap {:.3e}, {} draws rejected",
                report.rows.len(),
                report.violations,
                report.max_gap,
                report.params_rejected
            );
            if report.violations > 0 {
                return Err(Failure {
                    code: 3,
                    message: format!("{} dominance violations", report.violations),
                });
            }
        }
        SweepCommand::Lemmas => {
            let reps = cli
                .reps
                .or(config.as_ref().map(|c| c.sim.replications))
                .unwrap_or(10_000);
            let report = experiments::lemma_suite(seed, reps, Some(&out))?;
            eprintln!(
                "lemmas: {} cases, {} failures",
                report.cases.len(),
                report.failures
            );
            if report.failures > 0 {
                return Err(Failure {
                    code: 3,
                    message: format!("{} dominance failures", report.failures),
                });
            }
        }
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Throughput { sim, event_log } => cmd_throughput(&cli, *sim, event_log.as_ref()),
        Command::Waits => cmd_waits(&cli),
        Command::Equilibrium => cmd_equilibrium(&cli),
        Command::Couple => cmd_couple(&cli),
        Command::Sweep { which } => cmd_sweep(&cli, which),
    }
}
