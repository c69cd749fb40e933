//! Search regimes over the spec space.
//!
//! Three algorithms share one session shape: greedy gated edits (diagnose,
//! propose, apply, gate), evolutionary Pareto search over per-cluster score
//! vectors, and a single-component baseline restricted to one primitive.
//! [`best_of_n`] wraps any of them in independent seeded restarts.
//!
//! A session is one logical control loop. Within one gate evaluation tasks
//! may run in parallel (see the gate module), but proposals are handled
//! serially and the session log is an ordered record: replaying it through
//! the gate reproduces every accept/reject decision bit for bit.
//!
//! Budget accounting is uniform: each proposer call costs one proposal, each
//! gate evaluation of a candidate costs one task execution per suite task.
//! A session never starts an evaluation it cannot afford.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{
    apply_with_inverse, enumerate_catalog, Edit, EditError, InverseOp, Primitive,
};
use crate::events::{EventBus, SessionEvent};
use crate::gate::{
    gate_ok, gate_report, score_report, Decision, GateError, GateReport, GateScores, ScoreReport,
    TaskExecutor, TaskRecord,
};
use crate::proposers::{
    template_random_propose, Diagnosis, Proposer, ProposerError, DEFAULT_EXCERPTS_PER_CLUSTER,
};
use crate::spec::{Budget, GateConfig, Spec, SpecSlots};
use crate::telemetry::{TelemetryError, TelemetryRecord, TelemetryStore};

/// Probability that an evolutionary child is merged with a second frontier
/// candidate. A declared constant, not a claim about any reference system.
pub const MERGE_PROBABILITY: f64 = 0.25;

/// Errors surfaced by the search loops.
#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    /// A session log could not be read or failed replay.
    #[error("session log: {0}")]
    Log(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which regime produced a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "primitive", rename_all = "snake_case")]
pub enum Algorithm {
    GreedyGated,
    Evolutionary,
    SingleComponent(Primitive),
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::GreedyGated => write!(f, "greedy_gated"),
            Algorithm::Evolutionary => write!(f, "evolutionary"),
            Algorithm::SingleComponent(p) => write!(f, "single_component:{p}"),
        }
    }
}

/// Why a session stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `stagnation_k` consecutive proposals yielded no accepted edit.
    Stagnated,
    /// A budget dimension was exhausted (or was zero to begin with).
    BudgetExhausted,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Stagnated => write!(f, "stagnated"),
            StopReason::BudgetExhausted => write!(f, "budget_exhausted"),
        }
    }
}

/// Everything a session needs besides the algorithm's own inputs: the task
/// list, the executor, and optional event and telemetry sinks.
pub struct SearchContext<'a> {
    pub tasks: &'a [TaskRecord],
    pub executor: &'a dyn TaskExecutor,
    pub bus: Option<&'a EventBus>,
    pub store: Option<&'a TelemetryStore>,
}

impl<'a> SearchContext<'a> {
    pub fn new(tasks: &'a [TaskRecord], executor: &'a dyn TaskExecutor) -> SearchContext<'a> {
        SearchContext {
            tasks,
            executor,
            bus: None,
            store: None,
        }
    }

    pub fn with_bus(mut self, bus: &'a EventBus) -> SearchContext<'a> {
        self.bus = Some(bus);
        self
    }

    pub fn with_store(mut self, store: &'a TelemetryStore) -> SearchContext<'a> {
        self.store = Some(store);
        self
    }
}

/// Tunables shared by all regimes.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub session_id: String,
    pub seed: u64,
    pub gate: GateConfig,
    pub budget: Budget,
    /// Trace excerpts per cluster passed to the proposer's diagnosis.
    pub excerpt_cap: usize,
}

impl SearchConfig {
    pub fn new(session_id: impl Into<String>, seed: u64, budget: Budget) -> SearchConfig {
        SearchConfig {
            session_id: session_id.into(),
            seed,
            gate: GateConfig::default(),
            budget,
            excerpt_cap: DEFAULT_EXCERPTS_PER_CLUSTER,
        }
    }

    pub fn with_gate(mut self, gate: GateConfig) -> SearchConfig {
        self.gate = gate;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> SearchConfig {
        self.seed = seed;
        self
    }
}

/// One gate decision in a session's history: the edit, the full gate report,
/// and whether the running algorithm committed the candidate. For greedy the
/// flag always equals the report's decision; the other regimes use their own
/// acceptance rules and keep the report as evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub edit: Edit,
    pub report: GateReport,
    pub accepted: bool,
}

/// One JSONL line of the persistent session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLogEntry {
    pub seq: u64,
    pub edit: Edit,
    pub report: GateReport,
    pub accepted: bool,
    pub proposals_remaining: u64,
    pub executions_remaining: u64,
    /// Snapshots that undo the edit, present only when it was committed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Vec<InverseOp>>,
    /// Content hash of the frontier partner a merged child drew slots from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_with: Option<String>,
}

/// The complete record of one search run.
#[derive(Debug, Clone)]
pub struct SearchSession {
    pub session_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub budget: Budget,
    pub history: Vec<HistoryEntry>,
    pub stagnation_counter: u32,
    pub initial_spec_hash: String,
    pub final_spec_hash: String,
    pub final_spec: Spec,
    /// Overall gate score of the initial spec, if the budget allowed the
    /// initial evaluation at all.
    pub initial_overall: Option<f64>,
    pub final_overall: Option<f64>,
    pub proposals_used: u64,
    pub executions_used: u64,
    pub stop_reason: StopReason,
    pub log: Vec<SessionLogEntry>,
}

impl SearchSession {
    /// The `(edit, accepted)` view consumed by [`crate::edit::edit_stats`].
    pub fn accepted_history(&self) -> Vec<(Edit, bool)> {
        self.history
            .iter()
            .map(|entry| (entry.edit.clone(), entry.accepted))
            .collect()
    }

    pub fn accepted_count(&self) -> usize {
        self.history.iter().filter(|entry| entry.accepted).count()
    }
}

/// Serializes a session log as JSONL, one entry per line, no timestamps.
pub fn write_session_log(path: &Path, entries: &[SessionLogEntry]) -> Result<(), SearchError> {
    let mut out = String::new();
    for entry in entries {
        let line =
            serde_json::to_string(entry).map_err(|e| SearchError::Log(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a JSONL session log written by [`write_session_log`].
pub fn read_session_log(path: &Path) -> Result<Vec<SessionLogEntry>, SearchError> {
    let file = fs::File::open(path)?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: SessionLogEntry = serde_json::from_str(&line)
            .map_err(|e| SearchError::Log(format!("line {}: {e}", i + 1)))?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Replays every logged decision through [`gate_ok`] and verifies that the
/// recorded decision matches. Returns the first mismatch as an error.
pub fn replay_decisions(entries: &[SessionLogEntry]) -> Result<(), SearchError> {
    for entry in entries {
        let before = GateScores {
            per_cluster: entry.report.per_cluster_before.clone(),
            overall: entry.report.overall_before,
        };
        let after = GateScores {
            per_cluster: entry.report.per_cluster_after.clone(),
            overall: entry.report.overall_after,
        };
        let ok = gate_ok(
            &before,
            &after,
            &entry.report.target_cluster,
            entry.report.epsilon,
        )?;
        let recorded = entry.report.decision == Decision::Accept;
        if ok != recorded {
            return Err(SearchError::Log(format!(
                "replay mismatch at seq {}: gate says {}, log says {}",
                entry.seq,
                if ok { "accept" } else { "reject" },
                if recorded { "accept" } else { "reject" },
            )));
        }
    }
    Ok(())
}

/// The lowest-scoring cluster, ties broken by lexicographically smallest id.
/// This is the default target when a proposal names none.
pub fn default_target(scores: &GateScores) -> Option<String> {
    let mut best: Option<(&String, f64)> = None;
    for (cluster, &score) in &scores.per_cluster {
        match best {
            Some((_, s)) if score >= s => {}
            _ => best = Some((cluster, score)),
        }
    }
    best.map(|(cluster, _)| cluster.clone())
}

/// Shared per-session bookkeeping: budget, telemetry, events, and the log.
struct SessionState<'a> {
    ctx: &'a SearchContext<'a>,
    cfg: &'a SearchConfig,
    proposals_used: u64,
    executions_used: u64,
    history: Vec<HistoryEntry>,
    log: Vec<SessionLogEntry>,
    seq: u64,
}

impl<'a> SessionState<'a> {
    fn new(ctx: &'a SearchContext<'a>, cfg: &'a SearchConfig) -> SessionState<'a> {
        SessionState {
            ctx,
            cfg,
            proposals_used: 0,
            executions_used: 0,
            history: Vec::new(),
            log: Vec::new(),
            seq: 0,
        }
    }

    fn suite_cost(&self) -> u64 {
        self.ctx.tasks.len() as u64
    }

    fn can_propose(&self) -> bool {
        self.proposals_used < self.cfg.budget.max_proposals
    }

    fn can_evaluate(&self) -> bool {
        self.executions_used + self.suite_cost() <= self.cfg.budget.max_task_executions
    }

    fn publish(&self, event: SessionEvent) {
        if let Some(bus) = self.ctx.bus {
            bus.publish(event);
        }
    }

    /// Scores `spec`, charges the execution budget, and mirrors every task
    /// outcome into the telemetry store when one is attached.
    fn evaluate(&mut self, spec: &Spec) -> Result<ScoreReport, SearchError> {
        let report = score_report(spec, self.ctx.tasks, self.ctx.executor)?;
        self.executions_used += self.suite_cost();
        if let Some(store) = self.ctx.store {
            for (task, outcome) in self.ctx.tasks.iter().zip(&report.outcomes) {
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
        }
        Ok(report)
    }

    fn record(
        &mut self,
        edit: &Edit,
        report: GateReport,
        accepted: bool,
        inverse: Option<Vec<InverseOp>>,
        merged_with: Option<String>,
    ) {
        self.seq += 1;
        self.publish(SessionEvent::ProposalMade {
            sequence: self.seq,
            edit: edit.clone(),
        });
        let event = if accepted {
            SessionEvent::EditAccepted {
                sequence: self.seq,
                overall_after: report.overall_after,
            }
        } else {
            SessionEvent::EditRejected {
                sequence: self.seq,
                overall_after: report.overall_after,
            }
        };
        self.publish(event);
        self.log.push(SessionLogEntry {
            seq: self.seq,
            edit: edit.clone(),
            report: report.clone(),
            accepted,
            proposals_remaining: self
                .cfg
                .budget
                .max_proposals
                .saturating_sub(self.proposals_used),
            executions_remaining: self
                .cfg
                .budget
                .max_task_executions
                .saturating_sub(self.executions_used),
            inverse,
            merged_with,
        });
        self.history.push(HistoryEntry {
            edit: edit.clone(),
            report,
            accepted,
        });
    }

    fn finish(
        self,
        algorithm: Algorithm,
        s0: &Spec,
        final_spec: Spec,
        initial_overall: Option<f64>,
        final_overall: Option<f64>,
        stagnation_counter: u32,
        stop_reason: StopReason,
    ) -> SearchSession {
        self.publish(SessionEvent::Stopped {
            reason: stop_reason.to_string(),
            final_overall: final_overall.unwrap_or(f64::NAN),
        });
        SearchSession {
            session_id: self.cfg.session_id.clone(),
            algorithm,
            seed: self.cfg.seed,
            budget: self.cfg.budget.clone(),
            history: self.history,
            stagnation_counter,
            initial_spec_hash: s0.content_hash().to_string(),
            final_spec_hash: final_spec.content_hash().to_string(),
            final_spec,
            initial_overall,
            final_overall,
            proposals_used: self.proposals_used,
            executions_used: self.executions_used,
            stop_reason,
            log: self.log,
        }
    }
}

/// Algorithm 1: greedy gated edits across primitives.
///
/// Each iteration diagnoses the current spec's failures, asks the proposer
/// for edits, and commits a candidate only when [`gate_ok`] accepts it
/// against the current scores. The target cluster is the proposal's own when
/// it names one, otherwise the lowest-scoring cluster (ties lexicographic).
/// Stops after `stagnation_k` consecutive proposals without an accepted
/// edit, or when either budget dimension runs out.
pub fn run_greedy(
    s0: &Spec,
    proposer: &mut dyn Proposer,
    ctx: &SearchContext,
    cfg: &SearchConfig,
) -> Result<SearchSession, SearchError> {
    if ctx.tasks.is_empty() {
        return Err(SearchError::Gate(GateError::EmptyTasks));
    }
    let mut state = SessionState::new(ctx, cfg);
    state.publish(SessionEvent::Started {
        session_id: cfg.session_id.clone(),
        algorithm: Algorithm::GreedyGated.to_string(),
        seed: cfg.seed,
    });

    let mut spec = s0.clone();
    let mut stagnation: u32 = 0;

    if !state.can_evaluate() {
        return Ok(state.finish(
            Algorithm::GreedyGated,
            s0,
            spec,
            None,
            None,
            stagnation,
            StopReason::BudgetExhausted,
        ));
    }
    let mut current = state.evaluate(&spec)?;
    let initial_overall = current.scores.overall;

    let stop_reason = loop {
        if stagnation >= cfg.gate.stagnation_k {
            break StopReason::Stagnated;
        }
        if !state.can_propose() {
            break StopReason::BudgetExhausted;
        }
        let diagnosis = Diagnosis::from_outcomes(ctx.tasks, &current.outcomes, cfg.excerpt_cap);
        state.proposals_used += 1;
        let proposals = match proposer.propose(&spec, &diagnosis) {
            Ok(proposals) => proposals,
            Err(e) => {
                log::warn!("proposer {} failed: {e}; proposal skipped", proposer.id());
                stagnation += 1;
                state.publish(SessionEvent::StagnationTick {
                    count: stagnation,
                    k: cfg.gate.stagnation_k,
                });
                continue;
            }
        };
        if proposals.is_empty() {
            stagnation += 1;
            state.publish(SessionEvent::StagnationTick {
                count: stagnation,
                k: cfg.gate.stagnation_k,
            });
            continue;
        }

        let mut accepted_any = false;
        let mut out_of_budget = false;
        for proposal in proposals {
            // A batched call costs one proposal but each evaluated edit
            // occupies a history slot, so the proposal budget still bounds
            // the history length.
            if state.history.len() as u64 >= cfg.budget.max_proposals {
                out_of_budget = true;
                break;
            }
            if !state.can_evaluate() {
                out_of_budget = true;
                break;
            }
            let (candidate, inverse) = match apply_with_inverse(&spec, &proposal.edit) {
                Ok(pair) => pair,
                Err(e) => {
                    log::warn!("proposed edit does not apply: {e}; skipped");
                    continue;
                }
            };
            let target = proposal
                .edit
                .target_cluster
                .clone()
                .or_else(|| default_target(&current.scores))
                .expect("non-empty task list yields at least one cluster");
            if !current.scores.per_cluster.contains_key(&target) {
                log::warn!("proposal targets unknown cluster `{target}`; skipped");
                continue;
            }
            let after = state.evaluate(&candidate)?;
            let report = gate_report(&current.scores, &after.scores, &target, cfg.gate.epsilon)?;
            let accepted = report.decision == Decision::Accept;
            let inverse = accepted.then_some(inverse);
            state.record(&proposal.edit, report, accepted, inverse, None);
            if accepted {
                spec = candidate;
                current = after;
                accepted_any = true;
            }
        }
        if out_of_budget {
            break StopReason::BudgetExhausted;
        }
        if accepted_any {
            stagnation = 0;
        } else {
            stagnation += 1;
            state.publish(SessionEvent::StagnationTick {
                count: stagnation,
                k: cfg.gate.stagnation_k,
            });
        }
    };

    let final_overall = current.scores.overall;
    Ok(state.finish(
        Algorithm::GreedyGated,
        s0,
        spec,
        Some(initial_overall),
        Some(final_overall),
        stagnation,
        stop_reason,
    ))
}

/// One evolutionary candidate: the spec, its scores, the outcomes that
/// produced them (kept for diagnosis), and its insertion rank.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub spec: Spec,
    pub scores: GateScores,
    pub outcomes: Vec<crate::gate::TaskOutcome>,
    pub insertion: u64,
    pub frontier: bool,
}

/// The evolutionary population: every evaluated candidate, with frontier
/// membership flags maintained under per-cluster score-vector dominance.
#[derive(Debug, Clone, Default)]
pub struct Population {
    pub candidates: Vec<Candidate>,
}

/// `a` dominates `b` when it is at least as good on every cluster and
/// strictly better on at least one. Higher scores are better everywhere.
fn dominates_vector(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> bool {
    let mut strictly_better = false;
    for (cluster, &score_a) in a {
        let score_b = match b.get(cluster) {
            Some(&s) => s,
            None => return false,
        };
        if score_a < score_b {
            return false;
        }
        if score_a > score_b {
            strictly_better = true;
        }
    }
    strictly_better
}

impl Population {
    pub fn new() -> Population {
        Population::default()
    }

    /// Adds a candidate, recomputes all frontier flags, and returns whether
    /// the newcomer joined the frontier.
    pub fn insert(&mut self, spec: Spec, report: &ScoreReport) -> bool {
        let insertion = self.candidates.len() as u64;
        self.candidates.push(Candidate {
            spec,
            scores: report.scores.clone(),
            outcomes: report.outcomes.clone(),
            insertion,
            frontier: false,
        });
        for i in 0..self.candidates.len() {
            let dominated = self.candidates.iter().any(|other| {
                dominates_vector(
                    &other.scores.per_cluster,
                    &self.candidates[i].scores.per_cluster,
                )
            });
            self.candidates[i].frontier = !dominated;
        }
        assert!(
            self.verify_frontier(),
            "frontier invariant violated after insert"
        );
        self.candidates.last().expect("just pushed").frontier
    }

    /// Indices of frontier members in insertion order.
    pub fn frontier_indices(&self) -> Vec<usize> {
        self.candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.frontier)
            .map(|(i, _)| i)
            .collect()
    }

    /// The O(n²) consistency check: no frontier member dominates another,
    /// and flags match dominance over the whole population.
    pub fn verify_frontier(&self) -> bool {
        for (i, candidate) in self.candidates.iter().enumerate() {
            let dominated = self
                .candidates
                .iter()
                .enumerate()
                .any(|(j, other)| {
                    j != i
                        && dominates_vector(
                            &other.scores.per_cluster,
                            &candidate.scores.per_cluster,
                        )
                });
            if candidate.frontier == dominated {
                return false;
            }
        }
        true
    }

    /// Best candidate by overall gate score, ties broken by earliest
    /// insertion.
    pub fn best(&self) -> Option<&Candidate> {
        self.candidates
            .iter()
            .fold(None, |best: Option<&Candidate>, candidate| match best {
                Some(b) if candidate.scores.overall <= b.scores.overall => Some(b),
                _ => Some(candidate),
            })
    }
}

/// Algorithm 2: evolutionary spec search over a Pareto frontier.
///
/// Each iteration samples a frontier parent uniformly, mutates it through
/// the reflector (one proposer call), optionally merges the child with a
/// distinct frontier candidate by uniform per-slot crossover (probability
/// [`MERGE_PROBABILITY`]), evaluates, and updates the frontier under
/// per-cluster dominance. "Accepted" means the child joined the frontier.
/// Runs until a budget dimension is exhausted; returns the best candidate
/// by overall score, ties broken by earliest insertion.
pub fn run_evolutionary(
    s0: &Spec,
    reflector: &mut dyn Proposer,
    ctx: &SearchContext,
    cfg: &SearchConfig,
) -> Result<SearchSession, SearchError> {
    if ctx.tasks.is_empty() {
        return Err(SearchError::Gate(GateError::EmptyTasks));
    }
    let mut state = SessionState::new(ctx, cfg);
    state.publish(SessionEvent::Started {
        session_id: cfg.session_id.clone(),
        algorithm: Algorithm::Evolutionary.to_string(),
        seed: cfg.seed,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    if !state.can_evaluate() {
        return Ok(state.finish(
            Algorithm::Evolutionary,
            s0,
            s0.clone(),
            None,
            None,
            0,
            StopReason::BudgetExhausted,
        ));
    }
    let initial_report = state.evaluate(s0)?;
    let initial_overall = initial_report.scores.overall;
    let mut population = Population::new();
    population.insert(s0.clone(), &initial_report);

    loop {
        if !state.can_propose()
            || !state.can_evaluate()
            || state.history.len() as u64 >= cfg.budget.max_proposals
        {
            break;
        }
        let frontier = population.frontier_indices();
        let parent_idx = frontier[rng.random_range(0..frontier.len())];
        let (parent_spec, parent_scores, diagnosis) = {
            let parent = &population.candidates[parent_idx];
            (
                parent.spec.clone(),
                parent.scores.clone(),
                Diagnosis::from_outcomes(ctx.tasks, &parent.outcomes, cfg.excerpt_cap),
            )
        };

        state.proposals_used += 1;
        let proposals = match reflector.propose(&parent_spec, &diagnosis) {
            Ok(proposals) => proposals,
            Err(e) => {
                log::warn!("reflector {} failed: {e}; skipped", reflector.id());
                continue;
            }
        };
        let Some(proposal) = proposals.into_iter().next() else {
            continue;
        };
        let (mut child, _) = match apply_with_inverse(&parent_spec, &proposal.edit) {
            Ok(pair) => pair,
            Err(e) => {
                log::warn!("mutation does not apply: {e}; skipped");
                continue;
            }
        };

        // Optional merge: uniform per-slot crossover with a distinct
        // frontier partner over the four editable primitives.
        let mut merged_with = None;
        if rng.random_bool(MERGE_PROBABILITY) && frontier.len() > 1 {
            let mut others: Vec<usize> =
                frontier.iter().copied().filter(|&i| i != parent_idx).collect();
            let partner_idx = others.remove(rng.random_range(0..others.len()));
            let partner = &population.candidates[partner_idx];
            let slots = SpecSlots {
                intelligence: if rng.random_bool(0.5) {
                    child.intelligence().clone()
                } else {
                    partner.spec.intelligence().clone()
                },
                engine: if rng.random_bool(0.5) {
                    child.engine().clone()
                } else {
                    partner.spec.engine().clone()
                },
                agent: if rng.random_bool(0.5) {
                    child.agent().clone()
                } else {
                    partner.spec.agent().clone()
                },
                tools: if rng.random_bool(0.5) {
                    child.tools().clone()
                } else {
                    partner.spec.tools().clone()
                },
                learning: child.learning().clone(),
            };
            match child.successor(slots) {
                Ok(merged) => {
                    merged_with = Some(partner.spec.content_hash().to_string());
                    child = merged;
                }
                Err(e) => log::warn!("merge produced an invalid spec: {e}; merge skipped"),
            }
        }

        let after = state.evaluate(&child)?;
        let target = proposal
            .edit
            .target_cluster
            .clone()
            .filter(|t| parent_scores.per_cluster.contains_key(t))
            .or_else(|| default_target(&parent_scores))
            .expect("non-empty task list yields at least one cluster");
        let report = gate_report(&parent_scores, &after.scores, &target, cfg.gate.epsilon)?;
        let admitted = population.insert(child, &after);
        state.record(&proposal.edit, report, admitted, None, merged_with);
    }

    let best = population.best().expect("population holds at least s0");
    let final_spec = best.spec.clone();
    let final_overall = best.scores.overall;
    Ok(state.finish(
        Algorithm::Evolutionary,
        s0,
        final_spec,
        Some(initial_overall),
        Some(final_overall),
        0,
        StopReason::BudgetExhausted,
    ))
}

/// Algorithm 3: the single-component baseline.
///
/// Proposals are drawn uniformly from the catalog restricted to `tau`, and a
/// candidate commits exactly when the overall validation score strictly
/// improves; there is no per-cluster rule. Runs until a budget dimension is
/// exhausted. An empty `tau` catalog returns `s0` untouched.
pub fn run_single_component(
    s0: &Spec,
    tau: Primitive,
    ctx: &SearchContext,
    cfg: &SearchConfig,
) -> Result<SearchSession, SearchError> {
    if ctx.tasks.is_empty() {
        return Err(SearchError::Gate(GateError::EmptyTasks));
    }
    let algorithm = Algorithm::SingleComponent(tau);
    let mut state = SessionState::new(ctx, cfg);
    state.publish(SessionEvent::Started {
        session_id: cfg.session_id.clone(),
        algorithm: algorithm.to_string(),
        seed: cfg.seed,
    });
    let move_space: BTreeSet<Primitive> = [tau].into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut spec = s0.clone();
    if !state.can_evaluate() {
        return Ok(state.finish(
            algorithm,
            s0,
            spec,
            None,
            None,
            0,
            StopReason::BudgetExhausted,
        ));
    }
    let mut current = state.evaluate(&spec)?;
    let initial_overall = current.scores.overall;

    loop {
        if !state.can_propose()
            || !state.can_evaluate()
            || state.history.len() as u64 >= cfg.budget.max_proposals
        {
            break;
        }
        state.proposals_used += 1;
        let catalog = enumerate_catalog(&spec, &move_space)?;
        let Some(edit) = template_random_propose(&catalog, &mut rng) else {
            break;
        };
        let (candidate, inverse) = match apply_with_inverse(&spec, &edit) {
            Ok(pair) => pair,
            Err(e) => {
                log::warn!("catalog edit does not apply: {e}; skipped");
                continue;
            }
        };
        let after = state.evaluate(&candidate)?;
        let accepted = after.scores.overall > current.scores.overall;
        let target =
            default_target(&current.scores).expect("non-empty task list yields a cluster");
        let report = gate_report(&current.scores, &after.scores, &target, cfg.gate.epsilon)?;
        let inverse = accepted.then_some(inverse);
        state.record(&edit, report, accepted, inverse, None);
        if accepted {
            spec = candidate;
            current = after;
        }
    }

    let final_overall = current.scores.overall;
    Ok(state.finish(
        algorithm,
        s0,
        spec,
        Some(initial_overall),
        Some(final_overall),
        0,
        StopReason::BudgetExhausted,
    ))
}

/// Independent restarts: runs `runner` with seeds `base_seed..base_seed+n`
/// and returns the session with the highest final overall gate score, ties
/// broken by lowest seed. Sessions that never scored rank below all scored
/// ones.
pub fn best_of_n<F>(mut runner: F, n: u32, base_seed: u64) -> Result<SearchSession, SearchError>
where
    F: FnMut(u64) -> Result<SearchSession, SearchError>,
{
    assert!(n >= 1, "best_of_n requires n >= 1");
    let mut best: Option<SearchSession> = None;
    for offset in 0..n {
        let session = runner(base_seed + u64::from(offset))?;
        let better = match &best {
            None => true,
            Some(b) => {
                session.final_overall.unwrap_or(f64::NEG_INFINITY)
                    > b.final_overall.unwrap_or(f64::NEG_INFINITY)
            }
        };
        if better {
            best = Some(session);
        }
    }
    Ok(best.expect("n >= 1 guarantees at least one session"))
}

/// Convenience: a greedy restart runner over a template-random proposer
/// spanning the full move space. Used by the CLI's `--restarts`.
pub fn greedy_restart_runner<'a>(
    s0: &'a Spec,
    ctx: &'a SearchContext<'a>,
    cfg: &'a SearchConfig,
) -> impl FnMut(u64) -> Result<SearchSession, SearchError> + 'a {
    move |seed| {
        let mut proposer = crate::proposers::TemplateRandomProposer::full(seed);
        let cfg = cfg.clone().with_seed(seed);
        run_greedy(s0, &mut proposer, ctx, &cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::FieldOp;
    use crate::gate::TaskOutcome;
    use crate::harness::{gen_coordinated_config, gen_suite};
    use crate::proposers::ScriptableProposer;
    use crate::spec::Budget;

    /// Success is 1.0 exactly when the named tool is enabled; everything
    /// else is deterministic filler.
    struct ToolExecutor {
        tool: &'static str,
    }

    impl TaskExecutor for ToolExecutor {
        fn execute(&self, spec: &Spec, _task: &TaskRecord) -> Result<TaskOutcome, String> {
            let hit = spec
                .tools()
                .enabled_tools
                .iter()
                .any(|t| t == self.tool);
            Ok(TaskOutcome {
                success: if hit { 1.0 } else { 0.0 },
                energy_j: 1.0,
                latency_s: 0.1,
                cost_usd: 0.0,
                failure_signature: (!hit).then(|| format!("missing_tool:{}", self.tool)),
                input_tokens: 8,
                output_tokens: 16,
            })
        }
    }

    fn tool_tasks(n: usize) -> Vec<TaskRecord> {
        (0..n)
            .map(|i| TaskRecord {
                task_id: format!("t{i}"),
                query: format!("use the tool, case {i}"),
                checker: "binary".into(),
                cluster_id: format!("c{}", i % 2),
                tags: Vec::new(),
            })
            .collect()
    }

    fn enable_tool_edit(tool: &str) -> Edit {
        Edit::single(FieldOp::list_append("tools.enabled_tools", tool))
    }

    fn cfg(budget: Budget) -> SearchConfig {
        SearchConfig::new("test-session", 7, budget)
    }

    #[test]
    fn zero_proposal_budget_returns_initial_spec() {
        let s0 = Spec::default();
        let tasks = tool_tasks(4);
        let executor = ToolExecutor { tool: "calc" };
        let ctx = SearchContext::new(&tasks, &executor);
        let mut proposer = ScriptableProposer::new(vec![enable_tool_edit("calc")]).unwrap();
        let budget = Budget {
            max_proposals: 0,
            max_task_executions: 1000,
        };
        let session = run_greedy(&s0, &mut proposer, &ctx, &cfg(budget)).unwrap();
        assert!(session.history.is_empty());
        assert_eq!(session.final_spec_hash, s0.content_hash());
        assert_eq!(session.stop_reason, StopReason::BudgetExhausted);
        assert_eq!(session.initial_overall, Some(0.0));
    }

    #[test]
    fn scripted_fixing_edit_is_accepted_and_committed() {
        let s0 = Spec::default();
        let tasks = tool_tasks(4);
        let executor = ToolExecutor { tool: "calc" };
        let ctx = SearchContext::new(&tasks, &executor);
        let mut proposer = ScriptableProposer::new(vec![enable_tool_edit("calc")]).unwrap();
        let budget = Budget {
            max_proposals: 20,
            max_task_executions: 10_000,
        };
        let session = run_greedy(&s0, &mut proposer, &ctx, &cfg(budget)).unwrap();
        assert_eq!(session.accepted_count(), 1);
        assert_eq!(session.history.len(), 1);
        assert!(session.history[0].accepted);
        let expected = crate::edit::apply(&s0, &enable_tool_edit("calc")).unwrap();
        assert_eq!(session.final_spec_hash, expected.content_hash());
        assert_eq!(session.final_overall, Some(1.0));
        // The script is exhausted afterwards, so the session stagnates out.
        assert_eq!(session.stop_reason, StopReason::Stagnated);
    }

    #[test]
    fn greedy_stagnates_after_k_consecutive_rejects() {
        let s0 = Spec::default();
        let tasks = tool_tasks(4);
        // Tool never matches anything the proposer enables, so the target
        // cluster can never strictly improve.
        let executor = ToolExecutor { tool: "calc" };
        let ctx = SearchContext::new(&tasks, &executor);
        let edits: Vec<Edit> = (0..10)
            .map(|i| Edit::single(FieldOp::list_append("tools.enabled_tools", format!("t{i}"))))
            .collect();
        let mut proposer = ScriptableProposer::new(edits).unwrap();
        let budget = Budget {
            max_proposals: 100,
            max_task_executions: 100_000,
        };
        let mut config = cfg(budget);
        config.gate.stagnation_k = 3;
        let session = run_greedy(&s0, &mut proposer, &ctx, &config).unwrap();
        assert_eq!(session.stop_reason, StopReason::Stagnated);
        assert_eq!(session.stagnation_counter, 3);
        assert_eq!(session.history.len(), 3);
        assert!(session.history.iter().all(|entry| !entry.accepted));
    }

    #[test]
    fn greedy_history_is_bounded_by_proposal_budget() {
        let suite = gen_suite(&gen_coordinated_config(3)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let ctx = SearchContext::new(&tasks, &executor);
        let mut proposer = crate::proposers::TemplateRandomProposer::full(11);
        let budget = Budget {
            max_proposals: 6,
            max_task_executions: 1_000_000,
        };
        let session = run_greedy(&Spec::default(), &mut proposer, &ctx, &cfg(budget)).unwrap();
        assert!(session.history.len() as u64 <= 6);
        assert!(session.proposals_used <= 6);
    }

    #[test]
    fn execution_budget_is_never_exceeded() {
        let s0 = Spec::default();
        let tasks = tool_tasks(4);
        let executor = ToolExecutor { tool: "calc" };
        let dir = tempfile::tempdir().unwrap();
        let store = TelemetryStore::open(dir.path().join("telemetry.jsonl")).unwrap();
        let ctx = SearchContext::new(&tasks, &executor).with_store(&store);
        let mut proposer = crate::proposers::TemplateRandomProposer::full(5);
        // Room for the initial eval plus exactly two candidate evals.
        let budget = Budget {
            max_proposals: 50,
            max_task_executions: 12,
        };
        let session = run_greedy(&s0, &mut proposer, &ctx, &cfg(budget)).unwrap();
        assert!(session.executions_used <= 12);
        let records = store.load().unwrap();
        assert!(records.len() as u64 <= 12);
        assert_eq!(records.len() as u64, session.executions_used);
    }

    #[test]
    fn greedy_sessions_are_deterministic() {
        let suite = gen_suite(&gen_coordinated_config(9)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let run = || {
            let ctx = SearchContext::new(&tasks, &executor);
            let mut proposer = crate::proposers::TemplateRandomProposer::full(21);
            let budget = Budget {
                max_proposals: 40,
                max_task_executions: 1_000_000,
            };
            run_greedy(&Spec::default(), &mut proposer, &ctx, &cfg(budget)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.final_spec_hash, b.final_spec_hash);
        assert_eq!(a.log.len(), b.log.len());
        let log_a = serde_json::to_string(&a.log).unwrap();
        let log_b = serde_json::to_string(&b.log).unwrap();
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn greedy_oracle_script_reaches_perfect_score_on_coordinated_suite() {
        let suite = gen_suite(&gen_coordinated_config(42)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let ctx = SearchContext::new(&tasks, &executor);
        let mut proposer = ScriptableProposer::from_oracle(&suite);
        let budget = Budget {
            max_proposals: 200,
            max_task_executions: 1_000_000,
        };
        let session = run_greedy(&Spec::default(), &mut proposer, &ctx, &cfg(budget)).unwrap();
        assert_eq!(session.final_overall, Some(1.0));
        // Greedy-only invariant: overall never drops below the start.
        assert!(session.final_overall >= session.initial_overall);
    }

    #[test]
    fn accepted_edits_strictly_improve_their_target_cluster() {
        let suite = gen_suite(&gen_coordinated_config(13)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let ctx = SearchContext::new(&tasks, &executor);
        let mut proposer = ScriptableProposer::from_oracle(&suite);
        let budget = Budget {
            max_proposals: 200,
            max_task_executions: 1_000_000,
        };
        let session = run_greedy(&Spec::default(), &mut proposer, &ctx, &cfg(budget)).unwrap();
        for entry in session.history.iter().filter(|e| e.accepted) {
            let target = &entry.report.target_cluster;
            assert!(
                entry.report.per_cluster_after[target] > entry.report.per_cluster_before[target]
            );
            for (cluster, before) in &entry.report.per_cluster_before {
                if cluster != target {
                    let after = entry.report.per_cluster_after[cluster];
                    assert!(after >= before - session.budget_epsilon());
                }
            }
        }
    }

    impl SearchSession {
        fn budget_epsilon(&self) -> f64 {
            self.history
                .first()
                .map(|entry| entry.report.epsilon)
                .unwrap_or(0.01)
        }
    }

    #[test]
    fn session_log_round_trips_and_replays() {
        let suite = gen_suite(&gen_coordinated_config(17)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let ctx = SearchContext::new(&tasks, &executor);
        let mut proposer = ScriptableProposer::from_oracle(&suite);
        let budget = Budget {
            max_proposals: 50,
            max_task_executions: 1_000_000,
        };
        let session = run_greedy(&Spec::default(), &mut proposer, &ctx, &cfg(budget)).unwrap();
        assert!(!session.log.is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.jsonl");
        write_session_log(&path, &session.log).unwrap();
        let loaded = read_session_log(&path).unwrap();
        assert_eq!(loaded, session.log);
        replay_decisions(&loaded).unwrap();

        // Flipping one recorded decision must fail replay.
        let mut tampered = loaded;
        let flip = &mut tampered[0];
        flip.report.decision = match flip.report.decision {
            Decision::Accept => Decision::Reject,
            Decision::Reject => Decision::Accept,
        };
        assert!(replay_decisions(&tampered).is_err());
    }

    #[test]
    fn default_target_prefers_lowest_then_lexicographic() {
        let scores = GateScores {
            per_cluster: [
                ("b".to_string(), 0.2),
                ("a".to_string(), 0.5),
                ("c".to_string(), 0.2),
            ]
            .into_iter()
            .collect(),
            overall: 0.3,
        };
        assert_eq!(default_target(&scores), Some("b".to_string()));
    }

    #[test]
    fn dominated_candidate_stays_off_frontier() {
        let mut population = Population::new();
        let spec = Spec::default();
        let report = |a: f64, b: f64| ScoreReport {
            scores: GateScores {
                per_cluster: [("c0".to_string(), a), ("c1".to_string(), b)]
                    .into_iter()
                    .collect(),
                overall: (a + b) / 2.0,
            },
            outcomes: Vec::new(),
        };
        assert!(population.insert(spec.clone(), &report(0.8, 0.8)));
        // Dominated on every cluster: frontier unchanged.
        assert!(!population.insert(spec.clone(), &report(0.5, 0.5)));
        assert_eq!(population.frontier_indices(), vec![0]);
        // Incomparable: both on the frontier.
        assert!(population.insert(spec.clone(), &report(0.9, 0.1)));
        assert_eq!(population.frontier_indices(), vec![0, 2]);
        // Dominates everything: alone on the frontier.
        assert!(population.insert(spec, &report(1.0, 1.0)));
        assert_eq!(population.frontier_indices(), vec![3]);
        assert!(population.verify_frontier());
    }

    #[test]
    fn population_best_breaks_ties_by_earliest_insertion() {
        let mut population = Population::new();
        let spec = Spec::default();
        let report = |a: f64, b: f64| ScoreReport {
            scores: GateScores {
                per_cluster: [("c0".to_string(), a), ("c1".to_string(), b)]
                    .into_iter()
                    .collect(),
                overall: (a + b) / 2.0,
            },
            outcomes: Vec::new(),
        };
        population.insert(spec.clone(), &report(0.9, 0.1));
        population.insert(spec, &report(0.1, 0.9));
        let best = population.best().unwrap();
        assert_eq!(best.insertion, 0);
    }

    #[test]
    fn evolutionary_is_deterministic_and_never_worse_than_start() {
        let suite = gen_suite(&gen_coordinated_config(23)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let run = || {
            let ctx = SearchContext::new(&tasks, &executor);
            let mut reflector = crate::proposers::TemplateRandomProposer::full(31);
            let budget = Budget {
                max_proposals: 30,
                max_task_executions: 1_000_000,
            };
            run_evolutionary(&Spec::default(), &mut reflector, &ctx, &cfg(budget)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(
            serde_json::to_string(&a.log).unwrap(),
            serde_json::to_string(&b.log).unwrap()
        );
        assert_eq!(a.final_spec_hash, b.final_spec_hash);
        // s0 stays in the population, so the returned best cannot be worse.
        assert!(a.final_overall >= a.initial_overall);
        assert_eq!(a.stop_reason, StopReason::BudgetExhausted);
    }

    #[test]
    fn single_component_accepts_only_strict_overall_improvements() {
        let suite = gen_suite(&gen_coordinated_config(29)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let ctx = SearchContext::new(&tasks, &executor);
        let budget = Budget {
            max_proposals: 60,
            max_task_executions: 1_000_000,
        };
        let session =
            run_single_component(&Spec::default(), Primitive::Tools, &ctx, &cfg(budget)).unwrap();
        let mut last = session.initial_overall.unwrap();
        for entry in session.history.iter().filter(|e| e.accepted) {
            assert!(entry.report.overall_after > last);
            last = entry.report.overall_after;
        }
        assert_eq!(session.final_overall, Some(last));
        for op in session
            .history
            .iter()
            .flat_map(|entry| &entry.edit.ops)
        {
            assert!(op.path.starts_with("tools."));
        }
    }

    #[test]
    fn best_of_n_picks_highest_score_with_lowest_seed_on_ties() {
        let suite = gen_suite(&gen_coordinated_config(37)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let ctx = SearchContext::new(&tasks, &executor);
        let base_cfg = cfg(Budget {
            max_proposals: 25,
            max_task_executions: 1_000_000,
        });
        let mut scores = Vec::new();
        let mut runner = |seed: u64| {
            let mut proposer = crate::proposers::TemplateRandomProposer::full(seed);
            let run_cfg = base_cfg.clone().with_seed(seed);
            let session = run_greedy(&Spec::default(), &mut proposer, &ctx, &run_cfg)?;
            scores.push((seed, session.final_overall.unwrap()));
            Ok(session)
        };
        let best = best_of_n(&mut runner, 5, 100).unwrap();
        let max = scores
            .iter()
            .map(|&(_, s)| s)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best.final_overall, Some(max));
        let lowest_winning_seed = scores
            .iter()
            .filter(|&&(_, s)| s == max)
            .map(|&(seed, _)| seed)
            .min()
            .unwrap();
        assert_eq!(best.seed, lowest_winning_seed);
    }

    #[test]
    fn best_of_one_matches_a_single_run() {
        let suite = gen_suite(&gen_coordinated_config(41)).unwrap();
        let tasks = suite.tasks();
        let executor = suite.executor();
        let ctx = SearchContext::new(&tasks, &executor);
        let base_cfg = cfg(Budget {
            max_proposals: 15,
            max_task_executions: 1_000_000,
        });
        let single = {
            let mut proposer = crate::proposers::TemplateRandomProposer::full(100);
            run_greedy(
                &Spec::default(),
                &mut proposer,
                &ctx,
                &base_cfg.clone().with_seed(100),
            )
            .unwrap()
        };
        let best = best_of_n(
            |seed| {
                let mut proposer = crate::proposers::TemplateRandomProposer::full(seed);
                run_greedy(&Spec::default(), &mut proposer, &ctx, &base_cfg.clone().with_seed(seed))
            },
            1,
            100,
        )
        .unwrap();
        assert_eq!(best.final_spec_hash, single.final_spec_hash);
        assert_eq!(best.final_overall, single.final_overall);
    }

    #[test]
    fn events_stream_in_publication_order() {
        let s0 = Spec::default();
        let tasks = tool_tasks(4);
        let executor = ToolExecutor { tool: "calc" };
        let bus = EventBus::new();
        let rx = bus.subscribe();
        let ctx = SearchContext::new(&tasks, &executor).with_bus(&bus);
        let mut proposer = ScriptableProposer::new(vec![enable_tool_edit("calc")]).unwrap();
        let budget = Budget {
            max_proposals: 3,
            max_task_executions: 1_000,
        };
        let mut config = cfg(budget);
        config.gate.stagnation_k = 1;
        let session = run_greedy(&s0, &mut proposer, &ctx, &config).unwrap();
        drop(session);
        let events: Vec<SessionEvent> = rx.try_iter().collect();
        assert!(matches!(events.first(), Some(SessionEvent::Started { .. })));
        assert!(matches!(events.last(), Some(SessionEvent::Stopped { .. })));
        assert!(events
            .iter()
            .any(|e| matches!(e, SessionEvent::EditAccepted { .. })));
        assert!(events
            .iter()
            .any(|e| matches!(e, SessionEvent::StagnationTick { .. })));
    }
}
