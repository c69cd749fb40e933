//! The `specforge` command.
//!
//! One subcommand per module verb: `validate`, `eval`, `search`, `pareto`,
//! `amortize`, and `diff`. Exit codes follow a fixed taxonomy: 0 success,
//! 1 validation or domain error, 2 I/O or transport error. `--json` swaps
//! the human report for a versioned machine report; `--stable` omits
//! volatile fields (paths, timings) so identical runs compare bytewise.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use specforge_core::edit::{edit_stats, Edit, Primitive};
use specforge_core::events::{EventBus, SessionEvent};
use specforge_core::gate::{score_report, GateError, ScoreReport, TaskRecord};
use specforge_core::harness::{HarnessError, Suite};
use specforge_core::proposers::{
    Proposer, ProposerError, RemoteProposer, ScriptableProposer, TemplateRandomProposer,
};
use specforge_core::search::{
    best_of_n, run_evolutionary, run_greedy, run_single_component, write_session_log,
    SearchConfig, SearchContext, SearchError, SearchSession,
};
use specforge_core::spec::{
    diff_specs, parse_spec_json, parse_spec_toml, Budget, GateConfig, Spec, SpecError,
};
use specforge_core::telemetry::{
    amortize, pareto_flags, Objective, ParetoPoint, TelemetryError, TelemetryRecord,
    TelemetryStore,
};

/// Environment variable naming the telemetry store path.
const ENV_STORE: &str = "SPECFORGE_STORE";

#[derive(Parser)]
#[command(name = "specforge", version, about = "Spec search over five-primitive AI stacks")]
struct Cli {
    /// Emit a versioned JSON report instead of the human-readable one.
    #[arg(long, global = true)]
    json: bool,
    /// Omit volatile fields (paths, timings) so outputs compare bytewise.
    #[arg(long, global = true)]
    stable: bool,
    /// Do not subscribe to session progress events on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a spec file, printing field-level errors.
    Validate {
        /// Spec file (TOML, or JSON with a .json extension).
        spec: PathBuf,
    },
    /// Score a spec on a suite with simulated meters and append telemetry.
    Eval {
        spec: PathBuf,
        #[arg(long)]
        suite: PathBuf,
        /// Telemetry store path (falls back to SPECFORGE_STORE, then to
        /// ./specforge-telemetry.jsonl).
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Run a search session and write its JSONL log.
    Search(SearchArgs),
    /// Report the Pareto frontier over per-spec telemetry aggregates as CSV.
    Pareto {
        /// Telemetry store path (falls back to SPECFORGE_STORE).
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Amortize a one-time search cost against per-query cloud pricing.
    Amortize {
        search_cost: f64,
        queries_per_day: u64,
        days: u64,
        cloud_cost_per_query: f64,
    },
    /// Show field-level differences between two spec files.
    Diff { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct SearchArgs {
    spec: PathBuf,
    #[arg(long)]
    suite: PathBuf,
    /// One of `greedy`, `evo`, or `single:<primitive>`.
    #[arg(long, default_value = "greedy")]
    algorithm: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent restarts; the best final score wins, ties to lowest seed.
    #[arg(long, default_value_t = 1)]
    restarts: u32,
    /// Allowed non-target cluster regression, in [0, 1] score units.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Consecutive rejected proposals before greedy stops.
    #[arg(long = "stagnation-k", default_value_t = 5)]
    stagnation_k: u32,
    #[arg(long = "budget-proposals", default_value_t = 200)]
    budget_proposals: u64,
    #[arg(long = "budget-execs", default_value_t = u64::MAX)]
    budget_execs: u64,
    /// Proposal source: `random`, `oracle`, `script:<path>`, or `remote`.
    #[arg(long, default_value = "random")]
    proposer: String,
    /// Session log path (JSONL). Defaults to ./specforge-session.jsonl.
    #[arg(long = "session-log")]
    session_log: Option<PathBuf>,
    /// Telemetry store path; search records gate evaluations when set
    /// (falls back to SPECFORGE_STORE).
    #[arg(long)]
    store: Option<PathBuf>,
}

/// Errors mapped onto the exit-code taxonomy.
enum CliError {
    /// Exit 1: the inputs were readable but invalid or inconsistent.
    Domain(String),
    /// Exit 2: a file or endpoint could not be reached.
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Domain(m) | CliError::Io(m) => m,
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> CliError {
        CliError::Domain(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::Io(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> CliError {
        match e {
            HarnessError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<GateError> for CliError {
    fn from(e: GateError) -> CliError {
        CliError::Domain(e.to_string())
    }
}

impl From<TelemetryError> for CliError {
    fn from(e: TelemetryError) -> CliError {
        match e {
            TelemetryError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<ProposerError> for CliError {
    fn from(e: ProposerError) -> CliError {
        match e {
            ProposerError::Remote(m) => CliError::Io(m),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> CliError {
        match e {
            SearchError::Io(io) => CliError::Io(io.to_string()),
            SearchError::Telemetry(t) => CliError::from(t),
            SearchError::Proposer(p) => CliError::from(p),
            other => CliError::Domain(other.to_string()),
        }
    }
}

/// What a successful command prints.
struct CommandResult {
    human: String,
    machine: serde_json::Value,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let opts = Options {
        json: cli.json,
        stable: cli.stable,
        quiet: cli.quiet,
    };
    match run(cli.command, &opts) {
        Ok(result) => {
            let out = if opts.json {
                serde_json::to_string_pretty(&result.machine).expect("report serializes")
            } else {
                result.human
            };
            if !out.is_empty() {
                // A closed pipe (`specforge ... | head`) is a normal way for
                // a consumer to stop reading, not an error.
                let mut stdout = io::stdout().lock();
                if let Err(e) = writeln!(stdout, "{out}") {
                    if e.kind() != io::ErrorKind::BrokenPipe {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

#[derive(Clone, Copy)]
struct Options {
    json: bool,
    stable: bool,
    quiet: bool,
}

fn run(command: Command, opts: &Options) -> Result<CommandResult, CliError> {
    match command {
        Command::Validate { spec } => cmd_validate(&spec),
        Command::Eval { spec, suite, store } => cmd_eval(&spec, &suite, store, opts),
        Command::Search(args) => cmd_search(args, opts),
        Command::Pareto { store } => cmd_pareto(store),
        Command::Amortize {
            search_cost,
            queries_per_day,
            days,
            cloud_cost_per_query,
        } => cmd_amortize(search_cost, queries_per_day, days, cloud_cost_per_query),
        Command::Diff { a, b } => cmd_diff(&a, &b),
    }
}

fn load_spec(path: &Path) -> Result<Spec, CliError> {
    let text = fs::read_to_string(path)?;
    let spec = if path.extension().is_some_and(|ext| ext == "json") {
        parse_spec_json(&text)?
    } else {
        parse_spec_toml(&text)?
    };
    Ok(spec)
}

fn load_suite(path: &Path) -> Result<Suite, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(Suite::from_json(&text)?)
}

fn store_path(flag: Option<PathBuf>, default: Option<&str>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(ENV_STORE).map(PathBuf::from))
        .or_else(|| default.map(PathBuf::from))
}

fn cmd_validate(path: &Path) -> Result<CommandResult, CliError> {
    let spec = load_spec(path)?;
    Ok(CommandResult {
        human: "OK".to_string(),
        machine: json!({
            "schema": "specforge.validate.v1",
            "spec_id": spec.spec_id(),
            "version": spec.version(),
            "content_hash": spec.content_hash(),
        }),
    })
}

/// One row of the five-axis summary: sums per cluster, power as the ratio
/// of the sums so the identity power = energy/latency holds row-wise.
struct AxisRow {
    label: String,
    accuracy: f64,
    energy_j: f64,
    latency_s: f64,
    power_w: f64,
    cost_usd: f64,
}

fn axis_rows(tasks: &[TaskRecord], report: &ScoreReport) -> Vec<AxisRow> {
    let mut rows: Vec<AxisRow> = Vec::new();
    let mut clusters: Vec<&str> = report.scores.per_cluster.keys().map(String::as_str).collect();
    clusters.push("overall");
    for label in clusters {
        let member = |task: &TaskRecord| label == "overall" || task.cluster_id == label;
        let mut energy = 0.0;
        let mut latency = 0.0;
        let mut cost = 0.0;
        for (task, outcome) in tasks.iter().zip(&report.outcomes) {
            if member(task) {
                energy += outcome.energy_j;
                latency += outcome.latency_s;
                cost += outcome.cost_usd;
            }
        }
        let accuracy = if label == "overall" {
            report.scores.overall
        } else {
            report.scores.per_cluster[label]
        };
        rows.push(AxisRow {
            label: label.to_string(),
            accuracy,
            energy_j: energy,
            latency_s: latency,
            power_w: if latency > 0.0 { energy / latency } else { 0.0 },
            cost_usd: cost,
        });
    }
    rows
}

fn cmd_eval(
    spec_path: &Path,
    suite_path: &Path,
    store: Option<PathBuf>,
    opts: &Options,
) -> Result<CommandResult, CliError> {
    let spec = load_spec(spec_path)?;
    let suite = load_suite(suite_path)?;
    let tasks = suite.tasks();
    let executor = suite.executor();
    let report = score_report(&spec, &tasks, &executor)?;

    let store_path = store_path(store, Some("specforge-telemetry.jsonl"))
        .expect("eval always has a default store path");
    let store = TelemetryStore::open(&store_path)?;
    for (task, outcome) in tasks.iter().zip(&report.outcomes) {
        let record = TelemetryRecord::new(
            task.task_id.clone(),
            spec.content_hash().to_string(),
            outcome.success,
            outcome.energy_j,
            outcome.latency_s,
            outcome.cost_usd,
            outcome.input_tokens,
            outcome.output_tokens,
        )?;
        store.append(&record)?;
    }

    let rows = axis_rows(&tasks, &report);
    let mut human = String::new();
    human.push_str(&format!(
        "{:<12} {:>9} {:>10} {:>10} {:>9} {:>9}\n",
        "cluster", "accuracy", "energy_j", "latency_s", "power_w", "cost_usd"
    ));
    for row in &rows {
        human.push_str(&format!(
            "{:<12} {:>9.4} {:>10.3} {:>10.3} {:>9.3} {:>9.4}\n",
            row.label, row.accuracy, row.energy_j, row.latency_s, row.power_w, row.cost_usd
        ));
    }
    human.push_str(&format!("overall score: {:.4}", report.scores.overall));

    let mut machine = json!({
        "schema": "specforge.eval.v1",
        "spec_hash": spec.content_hash(),
        "per_cluster": report.scores.per_cluster,
        "overall": report.scores.overall,
        "axes": rows.iter().map(|row| json!({
            "label": row.label,
            "accuracy": row.accuracy,
            "energy_j": row.energy_j,
            "latency_s": row.latency_s,
            "power_w": row.power_w,
            "cost_usd": row.cost_usd,
        })).collect::<Vec<_>>(),
    });
    if !opts.stable {
        machine["store"] = json!(store_path.display().to_string());
    }
    Ok(CommandResult { human, machine })
}

/// Where search proposals come from. Script files are read up front so
/// that a missing file surfaces as an I/O error before any session starts,
/// and each restart can rebuild a fresh proposer with a rewound cursor.
enum ProposerSource {
    Random,
    Oracle,
    Script(String),
    Remote,
}

impl ProposerSource {
    fn parse(s: &str) -> Result<ProposerSource, CliError> {
        match s {
            "random" => Ok(ProposerSource::Random),
            "oracle" => Ok(ProposerSource::Oracle),
            "remote" => Ok(ProposerSource::Remote),
            other => match other.strip_prefix("script:") {
                Some(path) if !path.is_empty() => {
                    Ok(ProposerSource::Script(fs::read_to_string(path)?))
                }
                _ => Err(CliError::Domain(format!(
                    "unknown proposer `{other}`: expected random, oracle, script:<path>, or remote"
                ))),
            },
        }
    }

    fn build(&self, suite: &Suite, seed: u64) -> Result<Box<dyn Proposer>, ProposerError> {
        match self {
            ProposerSource::Random => Ok(Box::new(TemplateRandomProposer::full(seed))),
            ProposerSource::Oracle => Ok(Box::new(ScriptableProposer::from_oracle(suite))),
            ProposerSource::Script(text) => Ok(Box::new(ScriptableProposer::from_json(text)?)),
            ProposerSource::Remote => match RemoteProposer::from_env()? {
                Some(remote) => Ok(Box::new(remote)),
                None => Err(ProposerError::Remote(format!(
                    "remote proposer requires {} to be set",
                    specforge_core::proposers::ENV_PROPOSER_URL
                ))),
            },
        }
    }
}

/// Which regime to run, parsed from `--algorithm`.
enum AlgorithmKind {
    Greedy,
    Evolutionary,
    Single(Primitive),
}

impl AlgorithmKind {
    fn parse(s: &str) -> Result<AlgorithmKind, CliError> {
        match s {
            "greedy" => Ok(AlgorithmKind::Greedy),
            "evo" => Ok(AlgorithmKind::Evolutionary),
            other => match other.strip_prefix("single:").and_then(Primitive::parse) {
                Some(primitive) => Ok(AlgorithmKind::Single(primitive)),
                None => Err(CliError::Domain(format!(
                    "unknown algorithm `{other}`: expected greedy, evo, or single:<primitive>"
                ))),
            },
        }
    }
}

fn render_event(event: &SessionEvent) -> String {
    match event {
        SessionEvent::Started {
            session_id,
            algorithm,
            seed,
        } => format!("session {session_id}: {algorithm}, seed {seed}"),
        SessionEvent::ProposalMade { sequence, .. } => format!("  proposal {sequence} evaluated"),
        SessionEvent::EditAccepted {
            sequence,
            overall_after,
        } => format!("  proposal {sequence} accepted, overall {overall_after:.4}"),
        SessionEvent::EditRejected {
            sequence,
            overall_after,
        } => format!("  proposal {sequence} rejected, overall stays behind {overall_after:.4}"),
        SessionEvent::StagnationTick { count, k } => format!("  stagnation {count}/{k}"),
        SessionEvent::Stopped {
            reason,
            final_overall,
        } => format!("stopped: {reason}, final overall {final_overall:.4}"),
    }
}

fn edit_summary(edit: &Edit) -> String {
    edit.ops
        .iter()
        .map(|op| match &op.value {
            Some(value) => format!(
                "{} {}={}",
                op.op.as_str(),
                op.path,
                serde_json::to_string(value).unwrap_or_default()
            ),
            None => format!("{} {}", op.op.as_str(), op.path),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn cmd_search(args: SearchArgs, opts: &Options) -> Result<CommandResult, CliError> {
    let spec = load_spec(&args.spec)?;
    let suite = load_suite(&args.suite)?;
    let algorithm = AlgorithmKind::parse(&args.algorithm)?;
    let proposer_source = ProposerSource::parse(&args.proposer)?;
    if args.restarts == 0 {
        return Err(CliError::Domain("--restarts must be at least 1".to_string()));
    }
    if !(args.epsilon.is_finite() && (0.0..=1.0).contains(&args.epsilon)) {
        return Err(CliError::Domain("--epsilon must be in [0, 1]".to_string()));
    }

    let tasks = suite.tasks();
    let executor = suite.executor();
    let store = match store_path(args.store, None) {
        Some(path) => Some(TelemetryStore::open(path)?),
        None => None,
    };

    let bus = EventBus::new();
    let printer = if opts.quiet {
        None
    } else {
        let rx = bus.subscribe();
        Some(std::thread::spawn(move || {
            for event in rx {
                eprintln!("{}", render_event(&event));
            }
        }))
    };

    let gate = GateConfig {
        epsilon: args.epsilon,
        stagnation_k: args.stagnation_k,
    };
    let budget = Budget {
        max_proposals: args.budget_proposals,
        max_task_executions: args.budget_execs,
    };

    let session = {
        let mut ctx = SearchContext::new(&tasks, &executor).with_bus(&bus);
        if let Some(store) = &store {
            ctx = ctx.with_store(store);
        }
        let run_one = |seed: u64| -> Result<SearchSession, SearchError> {
            let session_id = format!("sf-{}-{seed}", args.algorithm);
            let cfg = SearchConfig::new(session_id, seed, budget.clone()).with_gate(gate.clone());
            match &algorithm {
                AlgorithmKind::Greedy => {
                    let mut proposer = proposer_source.build(&suite, seed)?;
                    run_greedy(&spec, proposer.as_mut(), &ctx, &cfg)
                }
                AlgorithmKind::Evolutionary => {
                    let mut reflector = proposer_source.build(&suite, seed)?;
                    run_evolutionary(&spec, reflector.as_mut(), &ctx, &cfg)
                }
                AlgorithmKind::Single(primitive) => {
                    run_single_component(&spec, *primitive, &ctx, &cfg)
                }
            }
        };
        best_of_n(run_one, args.restarts, args.seed).map_err(CliError::from)?
    };

    drop(bus);
    if let Some(handle) = printer {
        let _ = handle.join();
    }

    let log_path = args
        .session_log
        .unwrap_or_else(|| PathBuf::from("specforge-session.jsonl"));
    write_session_log(&log_path, &session.log).map_err(CliError::from)?;

    let stats = edit_stats(&session.accepted_history());
    let mut human = String::new();
    human.push_str(&format!(
        "session {} ({}), seed {}\n",
        session.session_id, session.algorithm, session.seed
    ));
    human.push_str(&format!(
        "{:<5} {:<8} {:<12} {:>8} {:>8}  {}\n",
        "seq", "decision", "target", "before", "after", "edit"
    ));
    for entry in session.log.iter().filter(|entry| entry.accepted) {
        human.push_str(&format!(
            "{:<5} {:<8} {:<12} {:>8.4} {:>8.4}  {}\n",
            entry.seq,
            "accept",
            entry.report.target_cluster,
            entry.report.overall_before,
            entry.report.overall_after,
            edit_summary(&entry.edit)
        ));
    }
    if session.accepted_count() == 0 {
        human.push_str("(no accepted edits)\n");
    }
    human.push_str("accepted-edit distribution by primitive:\n");
    for primitive in Primitive::ALL {
        human.push_str(&format!(
            "  {:<13} {:.3}\n",
            primitive.as_str(),
            stats.get(&primitive).copied().unwrap_or(0.0)
        ));
    }
    human.push_str(&format!(
        "proposals used: {}, executions used: {}, stop: {}\n",
        session.proposals_used, session.executions_used, session.stop_reason
    ));
    human.push_str(&format!(
        "overall: {} -> {}",
        session
            .initial_overall
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".to_string()),
        session
            .final_overall
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".to_string()),
    ));

    let mut machine = json!({
        "schema": "specforge.search.v1",
        "session_id": session.session_id,
        "algorithm": session.algorithm,
        "seed": session.seed,
        "initial_spec_hash": session.initial_spec_hash,
        "final_spec_hash": session.final_spec_hash,
        "initial_overall": session.initial_overall,
        "final_overall": session.final_overall,
        "proposals_used": session.proposals_used,
        "executions_used": session.executions_used,
        "stop_reason": session.stop_reason,
        "stagnation_counter": session.stagnation_counter,
        "accepted": session.history.iter().filter(|e| e.accepted).map(|e| json!({
            "target": e.report.target_cluster,
            "overall_before": e.report.overall_before,
            "overall_after": e.report.overall_after,
            "edit": e.edit,
        })).collect::<Vec<_>>(),
        "edit_stats": stats.iter()
            .map(|(p, f)| (p.as_str().to_string(), json!(f)))
            .collect::<serde_json::Map<String, serde_json::Value>>(),
    });
    if !opts.stable {
        machine["session_log"] = json!(log_path.display().to_string());
    }
    Ok(CommandResult { human, machine })
}

fn cmd_pareto(store: Option<PathBuf>) -> Result<CommandResult, CliError> {
    let Some(path) = store_path(store, None) else {
        return Err(CliError::Domain(format!(
            "no telemetry store: pass --store or set {ENV_STORE}"
        )));
    };
    let store = TelemetryStore::open(&path)?;
    let records = store.load()?;
    if records.is_empty() {
        return Err(CliError::Domain(format!(
            "telemetry store {} holds no records",
            path.display()
        )));
    }
    let hashes: BTreeSet<&str> = records.iter().map(|r| r.spec_hash.as_str()).collect();
    let objectives = [
        Objective::maximize("accuracy"),
        Objective::minimize("cost_usd"),
        Objective::minimize("latency_s"),
        Objective::minimize("energy_j"),
    ];
    let mut points = Vec::new();
    for hash in hashes {
        let summary = specforge_core::telemetry::aggregate(&records, hash)?;
        points.push(ParetoPoint {
            label: hash.to_string(),
            values: vec![
                summary.mean_accuracy,
                summary.mean_cost_usd,
                summary.mean_latency_s,
                summary.mean_energy_j,
            ],
        });
    }
    let flags = pareto_flags(&points, &objectives)?;

    let mut human = String::from("label,accuracy,cost_usd,latency_s,energy_j,frontier\n");
    for (point, flag) in points.iter().zip(&flags) {
        human.push_str(&format!(
            "{},{},{},{},{},{}\n",
            point.label, point.values[0], point.values[1], point.values[2], point.values[3], flag
        ));
    }
    human.pop();

    let machine = json!({
        "schema": "specforge.pareto.v1",
        "points": points.iter().zip(&flags).map(|(point, flag)| json!({
            "label": point.label,
            "accuracy": point.values[0],
            "cost_usd": point.values[1],
            "latency_s": point.values[2],
            "energy_j": point.values[3],
            "frontier": flag,
        })).collect::<Vec<_>>(),
    });
    Ok(CommandResult { human, machine })
}

fn cmd_amortize(
    search_cost: f64,
    queries_per_day: u64,
    days: u64,
    cloud_cost_per_query: f64,
) -> Result<CommandResult, CliError> {
    let result = amortize(search_cost, queries_per_day, days, cloud_cost_per_query)?;
    Ok(CommandResult {
        human: result.to_string(),
        machine: json!({
            "schema": "specforge.amortize.v1",
            "amortized_per_query": result.amortized_per_query,
            "ratio": result.ratio,
            "direction": result.direction,
            "display": result.to_string(),
        }),
    })
}

fn cmd_diff(a_path: &Path, b_path: &Path) -> Result<CommandResult, CliError> {
    let a = load_spec(a_path)?;
    let b = load_spec(b_path)?;
    let diffs = diff_specs(&a, &b);
    let render = |side: &Option<String>| {
        side.clone().unwrap_or_else(|| "(absent)".to_string())
    };
    let human = diffs
        .iter()
        .map(|d| format!("{}: {} -> {}", d.path, render(&d.before), render(&d.after)))
        .collect::<Vec<_>>()
        .join("\n");
    let machine = json!({
        "schema": "specforge.diff.v1",
        "equal": diffs.is_empty(),
        "differences": diffs.iter().map(|d| json!({
            "path": d.path,
            "before": d.before,
            "after": d.after,
        })).collect::<Vec<_>>(),
    });
    Ok(CommandResult { human, machine })
}
