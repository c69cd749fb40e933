//! Held-out scoring and the edit acceptance gate.
//!
//! The gate owns two decisions. First, how a spec scores: every task in the
//! suite is executed, each cluster's score is the mean task success inside
//! it, and the overall score is the task-weighted mean over the whole suite
//! (a large cluster counts for more than a small one). Second, whether an
//! edit is accepted: the target cluster must strictly improve and no other
//! cluster may drop by more than epsilon.
//!
//! Task execution is delegated to a [`TaskExecutor`], so the same gate runs
//! against the simulation harness in tests and against any future real
//! executor. A task whose executor errors scores 0 and the error becomes its
//! failure signature; a degenerate candidate spec must not abort a search.
//!
//! With the `parallel` feature (on by default) tasks run on a rayon pool.
//! Outcomes are collected back in task order before any reduction, so
//! reports are identical however the tasks were scheduled.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::spec::Spec;

/// Errors raised while scoring or deciding acceptance.
#[derive(Debug, Error)]
pub enum GateError {
    /// score was called with no tasks.
    #[error("task list is empty")]
    EmptyTasks,
    /// A cluster (usually the target) was absent from a score map.
    #[error("cluster `{cluster}` missing from {side} scores")]
    MissingCluster { cluster: String, side: &'static str },
    /// The before and after maps cover different cluster sets.
    #[error("score maps cover different cluster sets")]
    ClusterSetMismatch,
    /// A suite file did not match the expected shape.
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
}

/// One held-out task: an opaque query plus a checker specification that the
/// executor knows how to interpret.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub query: String,
    pub checker: String,
    #[serde(default)]
    pub cluster_id: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// What executing one task produced: a success score in [0, 1], the three
/// measured axes, token counts, and a failure signature when it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub success: f64,
    pub energy_j: f64,
    pub latency_s: f64,
    pub cost_usd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_signature: Option<String>,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Executes one task under one spec. Implementations must be [`Sync`] so the
/// gate can fan tasks out across threads.
pub trait TaskExecutor: Sync {
    /// Runs the task. A returned error is not fatal: the gate records the
    /// task as a zero-success outcome carrying the error as its signature.
    fn execute(&self, spec: &Spec, task: &TaskRecord) -> Result<TaskOutcome, String>;
}

/// Per-cluster scores plus the task-weighted overall score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateScores {
    pub per_cluster: BTreeMap<String, f64>,
    pub overall: f64,
}

/// Scores together with the raw per-task outcomes, index-aligned with the
/// task list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub scores: GateScores,
    pub outcomes: Vec<TaskOutcome>,
}

fn run_one(spec: &Spec, task: &TaskRecord, executor: &dyn TaskExecutor) -> TaskOutcome {
    match executor.execute(spec, task) {
        Ok(mut outcome) => {
            outcome.success = outcome.success.clamp(0.0, 1.0);
            outcome
        }
        Err(message) => TaskOutcome {
            success: 0.0,
            energy_j: 0.0,
            latency_s: 0.0,
            cost_usd: 0.0,
            failure_signature: Some(format!("executor_error:{message}")),
            input_tokens: 0,
            output_tokens: 0,
        },
    }
}

fn reduce(tasks: &[TaskRecord], outcomes: Vec<TaskOutcome>) -> ScoreReport {
    let mut sums: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    let mut total = 0.0;
    for (task, outcome) in tasks.iter().zip(&outcomes) {
        let entry = sums.entry(&task.cluster_id).or_insert((0.0, 0));
        entry.0 += outcome.success;
        entry.1 += 1;
        total += outcome.success;
    }
    let per_cluster = sums
        .into_iter()
        .map(|(id, (sum, n))| (id.to_string(), sum / n as f64))
        .collect();
    ScoreReport {
        scores: GateScores {
            per_cluster,
            overall: total / tasks.len() as f64,
        },
        outcomes,
    }
}

/// Scores a spec sequentially. Always available, independent of the
/// `parallel` feature; the benchmark suite compares this against
/// [`score_report`].
pub fn score_report_seq(
    spec: &Spec,
    tasks: &[TaskRecord],
    executor: &dyn TaskExecutor,
) -> Result<ScoreReport, GateError> {
    if tasks.is_empty() {
        return Err(GateError::EmptyTasks);
    }
    let outcomes = tasks
        .iter()
        .map(|task| run_one(spec, task, executor))
        .collect();
    Ok(reduce(tasks, outcomes))
}

/// Scores a spec, running tasks in parallel when the `parallel` feature is
/// enabled. Outcomes keep task order either way.
pub fn score_report(
    spec: &Spec,
    tasks: &[TaskRecord],
    executor: &dyn TaskExecutor,
) -> Result<ScoreReport, GateError> {
    if tasks.is_empty() {
        return Err(GateError::EmptyTasks);
    }
    #[cfg(feature = "parallel")]
    let outcomes: Vec<TaskOutcome> = tasks
        .par_iter()
        .map(|task| run_one(spec, task, executor))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<TaskOutcome> = tasks
        .iter()
        .map(|task| run_one(spec, task, executor))
        .collect();
    Ok(reduce(tasks, outcomes))
}

/// Scores a spec and discards the per-task outcomes.
pub fn score(
    spec: &Spec,
    tasks: &[TaskRecord],
    executor: &dyn TaskExecutor,
) -> Result<GateScores, GateError> {
    score_report(spec, tasks, executor).map(|r| r.scores)
}

fn check_same_clusters(before: &GateScores, after: &GateScores) -> Result<(), GateError> {
    let b: BTreeSet<&String> = before.per_cluster.keys().collect();
    let a: BTreeSet<&String> = after.per_cluster.keys().collect();
    if a != b {
        return Err(GateError::ClusterSetMismatch);
    }
    Ok(())
}

fn cluster_score(
    scores: &GateScores,
    cluster: &str,
    side: &'static str,
) -> Result<f64, GateError> {
    scores
        .per_cluster
        .get(cluster)
        .copied()
        .ok_or_else(|| GateError::MissingCluster {
            cluster: cluster.to_string(),
            side,
        })
}

/// The acceptance rule: the target cluster strictly improves and every other
/// cluster's after-score stays within epsilon of its before-score.
pub fn gate_ok(
    before: &GateScores,
    after: &GateScores,
    target: &str,
    epsilon: f64,
) -> Result<bool, GateError> {
    check_same_clusters(before, after)?;
    let target_before = cluster_score(before, target, "before")?;
    let target_after = cluster_score(after, target, "after")?;
    if target_after <= target_before {
        return Ok(false);
    }
    for (cluster, b) in &before.per_cluster {
        if cluster == target {
            continue;
        }
        let a = after.per_cluster[cluster];
        if a < b - epsilon {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Accept or reject, as stored in a [`GateReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// The full record of one acceptance decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub per_cluster_before: BTreeMap<String, f64>,
    pub per_cluster_after: BTreeMap<String, f64>,
    pub overall_before: f64,
    pub overall_after: f64,
    pub target_cluster: String,
    pub epsilon: f64,
    pub decision: Decision,
    /// Non-target clusters that dropped, with their (negative) deltas.
    pub regressions: Vec<(String, f64)>,
}

/// Evaluates the acceptance rule and records everything that went into it.
pub fn gate_report(
    before: &GateScores,
    after: &GateScores,
    target: &str,
    epsilon: f64,
) -> Result<GateReport, GateError> {
    let ok = gate_ok(before, after, target, epsilon)?;
    let regressions = before
        .per_cluster
        .iter()
        .filter(|(cluster, _)| cluster.as_str() != target)
        .filter_map(|(cluster, b)| {
            let delta = after.per_cluster[cluster] - b;
            (delta < 0.0).then(|| (cluster.clone(), delta))
        })
        .collect();
    Ok(GateReport {
        per_cluster_before: before.per_cluster.clone(),
        per_cluster_after: after.per_cluster.clone(),
        overall_before: before.overall,
        overall_after: after.overall,
        target_cluster: target.to_string(),
        epsilon,
        decision: if ok { Decision::Accept } else { Decision::Reject },
        regressions,
    })
}

/// A group of tasks sharing a failure mode, annotated with how often the
/// student (the spec under search) and the teacher succeed on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCluster {
    pub cluster_id: String,
    pub description: String,
    pub member_task_ids: Vec<String>,
    pub student_success_rate: f64,
    pub teacher_success_rate: f64,
}

/// Groups observed outcomes by failure signature.
///
/// The outcome list may mention a task several times (one entry per
/// execution); an empty signature marks a success. Each distinct non-empty
/// signature becomes one cluster whose members are the distinct task ids
/// observed failing with it. The student rate is the success fraction over
/// every outcome of the member tasks, so a flaky task drags its cluster's
/// rate down without zeroing it. No teacher runs here, so the teacher rate
/// uses the optimistic fallback 1.0.
pub fn cluster_by_signature(outcomes: &[(TaskRecord, String)]) -> Vec<FailureCluster> {
    let mut members: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (task, signature) in outcomes {
        if !signature.is_empty() {
            members
                .entry(signature)
                .or_default()
                .insert(&task.task_id);
        }
    }
    members
        .into_iter()
        .map(|(signature, task_ids)| {
            let mut successes = 0u64;
            let mut total = 0u64;
            for (task, sig) in outcomes {
                if task_ids.contains(task.task_id.as_str()) {
                    total += 1;
                    if sig.is_empty() {
                        successes += 1;
                    }
                }
            }
            FailureCluster {
                cluster_id: signature.to_string(),
                description: format!("tasks failing with `{signature}`"),
                member_task_ids: task_ids.into_iter().map(String::from).collect(),
                student_success_rate: successes as f64 / total as f64,
                teacher_success_rate: 1.0,
            }
        })
        .collect()
}

/// A gate suite file: clusters of tasks, nothing more. Extra keys (the
/// harness stores its meter model and blueprints in the same file) are
/// ignored here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSuite {
    pub clusters: Vec<GateSuiteCluster>,
}

/// One cluster entry in a suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSuiteCluster {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub tasks: Vec<TaskRecord>,
}

impl GateSuite {
    pub fn from_json(s: &str) -> Result<GateSuite, GateError> {
        let suite: GateSuite =
            serde_json::from_str(s).map_err(|e| GateError::InvalidSuite(e.to_string()))?;
        for cluster in &suite.clusters {
            if cluster.tasks.is_empty() {
                return Err(GateError::InvalidSuite(format!(
                    "cluster `{}` has no tasks",
                    cluster.id
                )));
            }
            for task in &cluster.tasks {
                if !task.cluster_id.is_empty() && task.cluster_id != cluster.id {
                    return Err(GateError::InvalidSuite(format!(
                        "task `{}` names cluster `{}` but sits in `{}`",
                        task.task_id, task.cluster_id, cluster.id
                    )));
                }
            }
        }
        Ok(suite)
    }

    /// Flattens the suite into task records, stamping each with its
    /// enclosing cluster id.
    pub fn tasks(&self) -> Vec<TaskRecord> {
        self.clusters
            .iter()
            .flat_map(|cluster| {
                cluster.tasks.iter().map(|task| {
                    let mut task = task.clone();
                    task.cluster_id = cluster.id.clone();
                    task
                })
            })
            .collect()
    }
}
