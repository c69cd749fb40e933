//! Synthetic benchmark harness with planted, brute-force-verifiable structure.
//!
//! A suite plants one requirement predicate per cluster: a task succeeds
//! under a spec exactly when its cluster's predicate holds for that spec.
//! Because success is a pure function of the spec, the whole search landscape
//! can be enumerated, which is what lets the acceptance tests check search
//! dynamics against a brute-force oracle instead of against model quality.
//!
//! Meters are simulated the same way: latency is the task's base latency
//! scaled by the model's size factor and divided by the backend's throughput
//! factor, energy is latency times a constant power draw, and cost is zero
//! for local models. All constants live in the suite file, so an experiment
//! is reproducible from that one artifact plus a seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::prelude::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{Edit, FieldOp, BACKEND_REGISTRY, BATCH_SIZES, MAX_TOKENS_CHOICES,
    MAX_TURNS_CHOICES, PROMPT_LIBRARY, TEMPERATURES, TOOL_REGISTRY, TOP_PS};
use crate::gate::{TaskExecutor, TaskOutcome, TaskRecord};
use crate::spec::Spec;

/// Keywords that prompt predicates may require; every entry appears in at
/// least one `PROMPT_LIBRARY` prompt, so each is satisfiable by one edit.
pub const KEYWORDS: [&str; 5] = ["verify", "cite", "plan", "tools", "concise"];

/// Errors raised while building, loading, or executing suites.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid suite config: {0}")]
    InvalidConfig(String),
    #[error("invalid meter model: {0}")]
    InvalidMeter(String),
    #[error("unknown model_id `{0}` in model_size_factor")]
    UnknownModel(String),
    #[error("unknown backend `{0}` in engine_throughput_factor")]
    UnknownBackend(String),
    #[error("unknown cluster `{0}`")]
    UnknownCluster(String),
    #[error("task `{0}` succeeded; it has no failure signature")]
    NotAFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("suite JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// A requirement over spec fields, decidable from a spec alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    /// The named tool is enabled.
    ToolEnabled { tool: String },
    /// The system prompt contains the keyword.
    PromptContains { keyword: String },
    /// The scalar field at `path` renders exactly to `value`.
    FieldEquals { path: String, value: String },
    /// The numeric field at `path` lies in `[min, max]`.
    FieldInRange { path: String, min: f64, max: f64 },
    /// Every clause holds.
    All { clauses: Vec<Predicate> },
}

impl Predicate {
    /// Whether the predicate holds for the spec.
    pub fn eval(&self, spec: &Spec) -> bool {
        match self {
            Predicate::ToolEnabled { tool } => {
                spec.tools().enabled_tools.iter().any(|t| t == tool)
            }
            Predicate::PromptContains { keyword } => {
                spec.agent().system_prompt.contains(keyword)
            }
            Predicate::FieldEquals { path, value } => {
                spec.scalar_field(path).as_deref() == Some(value)
            }
            Predicate::FieldInRange { path, min, max } => spec
                .numeric_field(path)
                .map(|v| *min <= v && v <= *max)
                .unwrap_or(false),
            Predicate::All { clauses } => clauses.iter().all(|c| c.eval(spec)),
        }
    }

    /// Signature of the first unmet clause in declaration order, or `None`
    /// when the predicate holds.
    pub fn first_unmet(&self, spec: &Spec) -> Option<String> {
        match self {
            Predicate::All { clauses } => {
                clauses.iter().find_map(|c| c.first_unmet(spec))
            }
            _ if self.eval(spec) => None,
            Predicate::ToolEnabled { tool } => Some(format!("missing_tool:{tool}")),
            Predicate::PromptContains { keyword } => Some(format!("prompt_missing:{keyword}")),
            Predicate::FieldEquals { path, .. } => {
                Some(format!("field_mismatch:{}", last_segment(path)))
            }
            Predicate::FieldInRange { path, .. } => {
                Some(format!("param_out_of_range:{}", last_segment(path)))
            }
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let probe = Spec::default();
        match self {
            Predicate::ToolEnabled { tool } if tool.is_empty() => Err(
                HarnessError::InvalidConfig("tool_enabled needs a tool name".to_string()),
            ),
            Predicate::PromptContains { keyword } if keyword.is_empty() => Err(
                HarnessError::InvalidConfig("prompt_contains needs a keyword".to_string()),
            ),
            Predicate::FieldEquals { path, .. } if probe.scalar_field(path).is_none() => {
                Err(HarnessError::InvalidConfig(format!(
                    "field_equals path `{path}` is not a scalar spec field"
                )))
            }
            Predicate::FieldInRange { path, min, max } => {
                if probe.numeric_field(path).is_none() {
                    return Err(HarnessError::InvalidConfig(format!(
                        "field_in_range path `{path}` is not a numeric spec field"
                    )));
                }
                if !(min.is_finite() && max.is_finite() && min <= max) {
                    return Err(HarnessError::InvalidConfig(format!(
                        "field_in_range bounds for `{path}` are not a finite interval"
                    )));
                }
                Ok(())
            }
            Predicate::All { clauses } => {
                if clauses.is_empty() {
                    return Err(HarnessError::InvalidConfig(
                        "conjunction needs at least one clause".to_string(),
                    ));
                }
                clauses.iter().try_for_each(Predicate::validate)
            }
            _ => Ok(()),
        }
    }

    /// Ops that make each unmet clause hold, one op per clause, in clause
    /// order. Used to plant oracle edits.
    fn fix_ops(&self, spec: &Spec, out: &mut Vec<FieldOp>) -> Result<(), HarnessError> {
        match self {
            Predicate::All { clauses } => {
                for clause in clauses {
                    clause.fix_ops(spec, out)?;
                }
                Ok(())
            }
            _ if self.eval(spec) => Ok(()),
            Predicate::ToolEnabled { tool } => {
                out.push(FieldOp::list_append("tools.enabled_tools", tool.as_str()));
                Ok(())
            }
            Predicate::PromptContains { keyword } => {
                let prompt = PROMPT_LIBRARY
                    .iter()
                    .find(|p| p.contains(keyword.as_str()))
                    .ok_or_else(|| {
                        HarnessError::InvalidConfig(format!(
                            "no library prompt contains `{keyword}`"
                        ))
                    })?;
                out.push(FieldOp::set("agent.system_prompt", *prompt));
                Ok(())
            }
            Predicate::FieldEquals { path, value } => {
                out.push(typed_set(path, value)?);
                Ok(())
            }
            Predicate::FieldInRange { path, min, max } => {
                out.push(set_in_range(path, *min, *max)?);
                Ok(())
            }
        }
    }
}

fn last_segment(path: &str) -> &str {
    path.rsplit('.').next().unwrap_or(path)
}

/// Builds a `set` op whose value type matches the field at `path`.
fn typed_set(path: &str, value: &str) -> Result<FieldOp, HarnessError> {
    let bad = |expected: &str| {
        HarnessError::InvalidConfig(format!(
            "field_equals value `{value}` for `{path}` is not {expected}"
        ))
    };
    let op = match path {
        "intelligence.temperature" | "intelligence.top_p" => {
            FieldOp::set(path, value.parse::<f64>().map_err(|_| bad("a number"))?)
        }
        "intelligence.max_tokens" | "engine.batch_size" | "agent.max_turns" => {
            FieldOp::set(path, value.parse::<u64>().map_err(|_| bad("an integer"))?)
        }
        "engine.kv_cache_enabled" | "tools.cloud_as_tool" | "learning.enabled" => {
            FieldOp::set(path, value.parse::<bool>().map_err(|_| bad("a boolean"))?)
        }
        _ => FieldOp::set(path, value),
    };
    Ok(op)
}

/// Picks the first admissible catalog value inside `[min, max]` for `path`.
fn set_in_range(path: &str, min: f64, max: f64) -> Result<FieldOp, HarnessError> {
    let in_range = |v: f64| min <= v && v <= max;
    let op = match path {
        "intelligence.temperature" | "intelligence.top_p" => {
            let pool: &[f64] = if path.ends_with("temperature") {
                &TEMPERATURES
            } else {
                &TOP_PS
            };
            let v = pool.iter().copied().find(|v| in_range(*v));
            FieldOp::set(path, v.ok_or_else(|| range_unfixable(path, min, max))?)
        }
        "intelligence.max_tokens" | "engine.batch_size" | "agent.max_turns" => {
            let pool: &[u64] = match path {
                "intelligence.max_tokens" => &MAX_TOKENS_CHOICES,
                "engine.batch_size" => &BATCH_SIZES,
                _ => &MAX_TURNS_CHOICES,
            };
            let v = pool.iter().copied().find(|v| in_range(*v as f64));
            FieldOp::set(path, v.ok_or_else(|| range_unfixable(path, min, max))?)
        }
        _ => return Err(range_unfixable(path, min, max)),
    };
    Ok(op)
}

fn range_unfixable(path: &str, min: f64, max: f64) -> HarnessError {
    HarnessError::InvalidConfig(format!(
        "no admissible value for `{path}` lies in [{min}, {max}]"
    ))
}

/// Simulated measurement constants for one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMeterModel {
    /// Seconds a task takes on a size-1.0 model over a throughput-1.0
    /// backend.
    pub base_latency_s: f64,
    pub model_size_factor: BTreeMap<String, f64>,
    pub engine_throughput_factor: BTreeMap<String, f64>,
    pub energy_per_second: f64,
    /// Per-model cloud pricing; models absent from this map are local and
    /// cost nothing.
    #[serde(default)]
    pub cost_per_1k_tokens: BTreeMap<String, f64>,
}

impl Default for SimMeterModel {
    fn default() -> Self {
        let model_size_factor = [
            ("gemma4:4b-it", 0.5),
            ("qwen3.5:122b", 8.0),
            ("qwen3.5:4b", 0.5),
            ("qwen3.5:9b", 1.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let engine_throughput_factor = [
            ("llama_cpp", 1.0),
            ("mlx", 1.2),
            ("ollama", 1.0),
            ("vllm", 2.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        SimMeterModel {
            base_latency_s: 2.0,
            model_size_factor,
            engine_throughput_factor,
            energy_per_second: 15.0,
            cost_per_1k_tokens: BTreeMap::new(),
        }
    }
}

impl SimMeterModel {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(HarnessError::InvalidMeter(format!(
                    "{name} must be a positive finite number"
                )))
            }
        };
        positive("base_latency_s", self.base_latency_s)?;
        positive("energy_per_second", self.energy_per_second)?;
        for (k, v) in &self.model_size_factor {
            positive(&format!("model_size_factor[{k}]"), *v)?;
        }
        for (k, v) in &self.engine_throughput_factor {
            positive(&format!("engine_throughput_factor[{k}]"), *v)?;
        }
        for (k, v) in &self.cost_per_1k_tokens {
            positive(&format!("cost_per_1k_tokens[{k}]"), *v)?;
        }
        Ok(())
    }

    /// Latency, energy, and cost for one task under `spec`.
    pub fn measure(
        &self,
        spec: &Spec,
        total_tokens: u64,
    ) -> Result<(f64, f64, f64), HarnessError> {
        let model = &spec.intelligence().model_id;
        let size = self
            .model_size_factor
            .get(model)
            .ok_or_else(|| HarnessError::UnknownModel(model.clone()))?;
        let backend = &spec.engine().backend;
        let throughput = self
            .engine_throughput_factor
            .get(backend)
            .ok_or_else(|| HarnessError::UnknownBackend(backend.clone()))?;
        let latency = self.base_latency_s * size / throughput;
        let energy = latency * self.energy_per_second;
        let cost = self
            .cost_per_1k_tokens
            .get(model)
            .map(|rate| rate * total_tokens as f64 / 1000.0)
            .unwrap_or(0.0);
        Ok((latency, energy, cost))
    }
}

/// One planted cluster: its predicate plus the tasks that test it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCluster {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub predicate: Predicate,
    pub tasks: Vec<TaskRecord>,
}

/// One oracle entry: the minimal edit that makes `cluster_id`'s predicate
/// hold, starting from the default spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub cluster_id: String,
    pub edit: Edit,
}

/// A generated suite, self-describing: seed, meter constants, clusters with
/// predicates and tasks, and the oracle's minimal fixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub seed: u64,
    pub meter: SimMeterModel,
    pub clusters: Vec<SuiteCluster>,
    /// Minimal per-cluster fixes from the default spec; clusters that
    /// already pass have no entry.
    pub oracle: Vec<OracleEntry>,
}

impl Suite {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.meter.validate()?;
        if self.clusters.is_empty() {
            return Err(HarnessError::InvalidConfig("suite has no clusters".to_string()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for cluster in &self.clusters {
            if !seen.insert(&cluster.id) {
                return Err(HarnessError::InvalidConfig(format!(
                    "duplicate cluster id `{}`",
                    cluster.id
                )));
            }
            cluster.predicate.validate()?;
            if cluster.tasks.is_empty() {
                return Err(HarnessError::InvalidConfig(format!(
                    "cluster `{}` has no tasks",
                    cluster.id
                )));
            }
        }
        Ok(())
    }

    /// All tasks, stamped with their enclosing cluster id.
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

    pub fn predicate_for(&self, cluster_id: &str) -> Result<&Predicate, HarnessError> {
        self.clusters
            .iter()
            .find(|c| c.id == cluster_id)
            .map(|c| &c.predicate)
            .ok_or_else(|| HarnessError::UnknownCluster(cluster_id.to_string()))
    }

    /// Signature of the first unmet clause for a failing task.
    pub fn failure_signature(
        &self,
        spec: &Spec,
        task: &TaskRecord,
    ) -> Result<String, HarnessError> {
        self.predicate_for(&task.cluster_id)?
            .first_unmet(spec)
            .ok_or_else(|| HarnessError::NotAFailure(task.task_id.clone()))
    }

    /// An executor that scores tasks by their cluster predicates and meters
    /// them with this suite's constants.
    pub fn executor(&self) -> SimExecutor<'_> {
        SimExecutor { suite: self }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("suite serializes")
    }

    pub fn from_json(s: &str) -> Result<Suite, HarnessError> {
        let suite: Suite = serde_json::from_str(s)?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Suite, HarnessError> {
        Suite::from_json(&fs::read_to_string(path)?)
    }
}

/// Deterministic token accounting: tokens are derived from the query text,
/// roughly one per four characters, and answers run twice as long as
/// questions.
pub fn task_tokens(task: &TaskRecord) -> (u64, u64) {
    let input = task.query.chars().count() as u64 / 4 + 1;
    (input, input * 2)
}

/// Executes tasks against a suite's planted predicates and meter model.
pub struct SimExecutor<'a> {
    suite: &'a Suite,
}

impl TaskExecutor for SimExecutor<'_> {
    fn execute(&self, spec: &Spec, task: &TaskRecord) -> Result<TaskOutcome, String> {
        let predicate = self
            .suite
            .predicate_for(&task.cluster_id)
            .map_err(|e| e.to_string())?;
        let (input_tokens, output_tokens) = task_tokens(task);
        let (latency_s, energy_j, cost_usd) = self
            .suite
            .meter
            .measure(spec, input_tokens + output_tokens)
            .map_err(|e| e.to_string())?;
        let failure_signature = predicate.first_unmet(spec);
        Ok(TaskOutcome {
            success: if failure_signature.is_none() { 1.0 } else { 0.0 },
            energy_j,
            latency_s,
            cost_usd,
            failure_signature,
            input_tokens,
            output_tokens,
        })
    }
}

/// One cluster blueprint inside a [`SuiteConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blueprint {
    pub id: String,
    pub description: String,
    pub predicate: Predicate,
}

/// Everything [`gen_suite`] needs: a seed, a task count, the planted
/// blueprints, and the meter constants to embed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub n_tasks_per_cluster: usize,
    pub blueprints: Vec<Blueprint>,
    pub meter: SimMeterModel,
}

const QUERY_VERBS: [&str; 5] = ["compute", "summarize", "find", "compare", "translate"];
const QUERY_TOPICS: [&str; 5] = [
    "the quarterly report",
    "the train schedule",
    "a currency conversion",
    "the research abstract",
    "the error log",
];

/// Generates a suite from a config: `n_tasks_per_cluster` tasks per
/// blueprint, plus oracle entries holding the minimal fix for every cluster
/// the default spec fails. Deterministic under the config seed.
pub fn gen_suite(cfg: &SuiteConfig) -> Result<Suite, HarnessError> {
    if cfg.n_tasks_per_cluster == 0 {
        return Err(HarnessError::InvalidConfig(
            "n_tasks_per_cluster must be >= 1".to_string(),
        ));
    }
    if cfg.blueprints.is_empty() {
        return Err(HarnessError::InvalidConfig("no blueprints".to_string()));
    }
    cfg.meter.validate()?;
    let base = Spec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clusters = Vec::new();
    let mut oracle = Vec::new();
    for blueprint in &cfg.blueprints {
        blueprint.predicate.validate()?;
        let tasks = (0..cfg.n_tasks_per_cluster)
            .map(|i| {
                let verb = QUERY_VERBS.choose(&mut rng).expect("pool non-empty");
                let topic = QUERY_TOPICS.choose(&mut rng).expect("pool non-empty");
                TaskRecord {
                    task_id: format!("{}-t{}", blueprint.id, i),
                    query: format!("{verb} {topic} (case {i})"),
                    checker: "cluster_predicate".to_string(),
                    cluster_id: blueprint.id.clone(),
                    tags: Vec::new(),
                }
            })
            .collect();
        clusters.push(SuiteCluster {
            id: blueprint.id.clone(),
            description: blueprint.description.clone(),
            predicate: blueprint.predicate.clone(),
            tasks,
        });
        let mut ops = Vec::new();
        blueprint.predicate.fix_ops(&base, &mut ops)?;
        if !ops.is_empty() {
            oracle.push(OracleEntry {
                cluster_id: blueprint.id.clone(),
                edit: Edit::new(ops)
                    .with_target(blueprint.id.clone())
                    .with_rationale(format!("oracle fix for {}", blueprint.id)),
            });
        }
    }
    let suite = Suite {
        seed: cfg.seed,
        meter: cfg.meter.clone(),
        clusters,
        oracle,
    };
    suite.validate()?;
    Ok(suite)
}

/// A planted landscape whose optimum needs one coordinated two-primitive
/// edit: the main cluster requires a tool (tools slot) and a prompt keyword
/// (agent slot) together, and two side clusters require single-field fixes
/// in the engine and intelligence slots. No single-primitive search can
/// reach gate score 1.0 on it.
pub fn gen_coordinated_config(seed: u64) -> SuiteConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tool = *TOOL_REGISTRY.choose(&mut rng).expect("registry non-empty");
    let keyword = *KEYWORDS.choose(&mut rng).expect("pool non-empty");
    let backends: Vec<&str> = BACKEND_REGISTRY
        .iter()
        .copied()
        .filter(|b| *b != "ollama")
        .collect();
    let backend = *backends.choose(&mut rng).expect("pool non-empty");
    let (min, max) = if rng.random_range(0..2) == 0 {
        (0.0, 0.25)
    } else {
        (0.95, 1.2)
    };
    SuiteConfig {
        seed,
        n_tasks_per_cluster: 4,
        blueprints: vec![
            Blueprint {
                id: "c_coord".to_string(),
                description: format!("needs the {tool} tool plus a `{keyword}` prompt"),
                predicate: Predicate::All {
                    clauses: vec![
                        Predicate::ToolEnabled {
                            tool: tool.to_string(),
                        },
                        Predicate::PromptContains {
                            keyword: keyword.to_string(),
                        },
                    ],
                },
            },
            Blueprint {
                id: "c_engine".to_string(),
                description: format!("needs the {backend} backend"),
                predicate: Predicate::FieldEquals {
                    path: "engine.backend".to_string(),
                    value: backend.to_string(),
                },
            },
            Blueprint {
                id: "c_intel".to_string(),
                description: format!("needs temperature in [{min}, {max}]"),
                predicate: Predicate::FieldInRange {
                    path: "intelligence.temperature".to_string(),
                    min,
                    max,
                },
            },
        ],
        meter: SimMeterModel::default(),
    }
}
