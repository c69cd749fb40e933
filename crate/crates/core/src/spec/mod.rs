//! Typed five-primitive spec model.
//!
//! A [`Spec`] pins down one configuration of the stack: which model answers
//! (intelligence), how it is served (engine), how the loop around it is shaped
//! (agent), which tools and memory backend are wired in (tools & memory), and
//! how the stack is allowed to rewrite itself (learning). Specs are immutable
//! value objects; every mutation goes through [`crate::edit::apply`], which
//! bumps the version and recomputes the content hash.
//!
//! Identity is content-addressed: the hash covers the canonical serialization
//! of the five slots and deliberately excludes `spec_id` and `version`, so
//! two specs with identical slot contents are interchangeable to the gate and
//! the telemetry store no matter how they were produced.

mod canon;
mod parse;

pub use canon::{canonical_toml, diff_specs, spec_to_json, FieldDiff};
pub use parse::{parse_spec_json, parse_spec_toml};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::reward::RewardWeights;

/// Maximum number of stored exemplars in an agent slot.
pub const EXEMPLAR_CAP: usize = 16;

/// Errors raised while parsing, constructing, or validating specs.
#[derive(Debug, Error)]
pub enum SpecError {
    /// The document is not syntactically valid TOML. The message carries the
    /// parser's line/column annotation.
    #[error("TOML syntax error: {0}")]
    Syntax(String),
    /// The document is not syntactically valid JSON.
    #[error("JSON syntax error: {0}")]
    JsonSyntax(String),
    /// A key outside the schema was present. Unknown keys are rejected, not
    /// ignored, so typos fail loudly.
    #[error("unknown key `{path}`")]
    UnknownKey { path: String },
    /// A field and its compatibility alias were both present.
    #[error("conflicting keys: `{path}` is also set via `{alias}`")]
    ConflictingKeys { path: String, alias: String },
    /// A value had the wrong type for its field.
    #[error("invalid type for `{path}`: expected {expected}")]
    InvalidType { path: String, expected: &'static str },
    /// A string value was not a member of the field's enumeration.
    #[error("invalid value `{value}` for `{path}`: expected one of {allowed}")]
    UnknownVariant {
        path: String,
        value: String,
        allowed: &'static str,
    },
    /// A structural invariant of the schema was violated.
    #[error("invalid spec: {path}: {message}")]
    Invariant { path: String, message: String },
}

fn invariant(path: &str, message: impl Into<String>) -> SpecError {
    SpecError::Invariant {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Weight precision used by the intelligence slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantization {
    Fp16,
    Fp8,
    Q8,
    Q4,
}

impl Quantization {
    pub const ALL: [Quantization; 4] = [
        Quantization::Fp16,
        Quantization::Fp8,
        Quantization::Q8,
        Quantization::Q4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantization::Fp16 => "fp16",
            Quantization::Fp8 => "fp8",
            Quantization::Q8 => "q8",
            Quantization::Q4 => "q4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fp16" => Some(Quantization::Fp16),
            "fp8" => Some(Quantization::Fp8),
            "q8" => Some(Quantization::Q8),
            "q4" => Some(Quantization::Q4),
            _ => None,
        }
    }
}

impl fmt::Display for Quantization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Control-loop family run by the agent slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopType {
    Simple,
    React,
    Codeact,
    Orchestrator,
}

impl LoopType {
    pub const ALL: [LoopType; 4] = [
        LoopType::Simple,
        LoopType::React,
        LoopType::Codeact,
        LoopType::Orchestrator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LoopType::Simple => "simple",
            LoopType::React => "react",
            LoopType::Codeact => "codeact",
            LoopType::Orchestrator => "orchestrator",
        }
    }

    /// Parses a loop type, accepting legacy config vocabulary:
    /// `native_openhands` maps to `codeact`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "simple" => Some(LoopType::Simple),
            "react" => Some(LoopType::React),
            "codeact" | "native_openhands" => Some(LoopType::Codeact),
            "orchestrator" => Some(LoopType::Orchestrator),
            _ => None,
        }
    }
}

impl fmt::Display for LoopType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Retrieval backend for the memory subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryBackend {
    SqliteFts,
    Bm25,
    FaissLike,
    Hybrid,
}

impl MemoryBackend {
    pub const ALL: [MemoryBackend; 4] = [
        MemoryBackend::SqliteFts,
        MemoryBackend::Bm25,
        MemoryBackend::FaissLike,
        MemoryBackend::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryBackend::SqliteFts => "sqlite_fts",
            MemoryBackend::Bm25 => "bm25",
            MemoryBackend::FaissLike => "faiss_like",
            MemoryBackend::Hybrid => "hybrid",
        }
    }

    /// Parses a backend name, accepting legacy config vocabulary:
    /// `sqlite` maps to `sqlite_fts` and `faiss` to `faiss_like`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sqlite_fts" | "sqlite" => Some(MemoryBackend::SqliteFts),
            "bm25" => Some(MemoryBackend::Bm25),
            "faiss_like" | "faiss" => Some(MemoryBackend::FaissLike),
            "hybrid" => Some(MemoryBackend::Hybrid),
            _ => None,
        }
    }
}

impl fmt::Display for MemoryBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Self-improvement policy declared by the learning slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningPolicy {
    None,
    SpecSearch,
    Evolutionary,
    SingleComponent,
}

impl LearningPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            LearningPolicy::None => "none",
            LearningPolicy::SpecSearch => "spec_search",
            LearningPolicy::Evolutionary => "evolutionary",
            LearningPolicy::SingleComponent => "single_component",
        }
    }

    /// Parses a policy name, accepting legacy config vocabulary:
    /// `spec_distillation` maps to `spec_search`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(LearningPolicy::None),
            "spec_search" | "spec_distillation" => Some(LearningPolicy::SpecSearch),
            "evolutionary" => Some(LearningPolicy::Evolutionary),
            "single_component" => Some(LearningPolicy::SingleComponent),
            _ => None,
        }
    }
}

impl fmt::Display for LearningPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An input/output demonstration pair stored in the agent slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub input: String,
    pub output: String,
}

/// Which model answers, and with what sampling and precision settings.
#[derive(Debug, Clone, PartialEq)]
pub struct IntelligenceSlot {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u64,
    pub quantization: Quantization,
    /// Marker naming a pending training trigger (for example `"sft"` or
    /// `"lora"`); empty when no trigger is armed. The marker participates in
    /// hashing and search like any other field but has no runtime effect.
    pub train_marker: String,
}

impl Default for IntelligenceSlot {
    fn default() -> Self {
        IntelligenceSlot {
            model_id: "qwen3.5:9b".to_string(),
            temperature: 0.7,
            top_p: 0.95,
            max_tokens: 4096,
            quantization: Quantization::Fp16,
            train_marker: String::new(),
        }
    }
}

/// How the model is served.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineSlot {
    pub backend: String,
    pub batch_size: u64,
    pub kv_cache_enabled: bool,
    /// Backend-specific flags, serialized in key order.
    pub extra: BTreeMap<String, String>,
}

impl Default for EngineSlot {
    fn default() -> Self {
        EngineSlot {
            backend: "ollama".to_string(),
            batch_size: 1,
            kv_cache_enabled: true,
            extra: BTreeMap::new(),
        }
    }
}

/// Shape of the loop wrapped around the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSlot {
    pub loop_type: LoopType,
    pub system_prompt: String,
    pub exemplars: Vec<Exemplar>,
    pub max_turns: u64,
    pub tool_strategy: String,
}

impl Default for AgentSlot {
    fn default() -> Self {
        AgentSlot {
            loop_type: LoopType::Simple,
            system_prompt: String::new(),
            exemplars: Vec::new(),
            max_turns: 10,
            tool_strategy: "auto".to_string(),
        }
    }
}

/// Which tools are callable and how memory is backed.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolsMemorySlot {
    /// Enabled tool names. Order is preserved and duplicates are rejected.
    pub enabled_tools: Vec<String>,
    /// Optional per-tool descriptions; keys must name enabled tools.
    pub tool_descriptions: BTreeMap<String, String>,
    pub memory_backend: MemoryBackend,
    pub cloud_as_tool: bool,
}

impl Default for ToolsMemorySlot {
    fn default() -> Self {
        ToolsMemorySlot {
            enabled_tools: Vec::new(),
            tool_descriptions: BTreeMap::new(),
            memory_backend: MemoryBackend::SqliteFts,
            cloud_as_tool: false,
        }
    }
}

/// Acceptance-gate parameters carried by the learning slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    /// Allowed absolute regression on non-target clusters, on the [0, 1]
    /// score scale.
    pub epsilon: f64,
    /// Consecutive rejected proposals before a greedy session stops.
    pub stagnation_k: u32,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            epsilon: 0.01,
            stagnation_k: 5,
        }
    }
}

/// Hard resource limits for one search session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Budget {
    pub max_proposals: u64,
    pub max_task_executions: u64,
}

/// Whether and how the stack may rewrite its own spec.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningSlot {
    pub enabled: bool,
    pub policy: LearningPolicy,
    pub reward_weights: RewardWeights,
    pub gate: GateConfig,
    pub budget: Budget,
}

impl Default for LearningSlot {
    fn default() -> Self {
        LearningSlot {
            enabled: false,
            policy: LearningPolicy::None,
            reward_weights: RewardWeights::default(),
            gate: GateConfig::default(),
            budget: Budget::default(),
        }
    }
}

/// The five hashed slots of a spec, without identity metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpecSlots {
    pub intelligence: IntelligenceSlot,
    pub engine: EngineSlot,
    pub agent: AgentSlot,
    pub tools: ToolsMemorySlot,
    pub learning: LearningSlot,
}

/// An immutable, content-addressed stack configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Spec {
    spec_id: String,
    version: u32,
    slots: SpecSlots,
    content_hash: String,
}

impl Spec {
    /// Builds a spec with explicit identity, validating every invariant and
    /// computing the content hash.
    pub fn with_identity(
        spec_id: impl Into<String>,
        version: u32,
        slots: SpecSlots,
    ) -> Result<Spec, SpecError> {
        let spec_id = spec_id.into();
        if spec_id.is_empty() {
            return Err(invariant("spec_id", "must be non-empty"));
        }
        if version == 0 {
            return Err(invariant("version", "must be >= 1"));
        }
        validate_slots(&slots)?;
        let content_hash = hash_slots(&slots);
        Ok(Spec {
            spec_id,
            version,
            slots,
            content_hash,
        })
    }

    /// Builds a version-1 spec named `default`.
    pub fn new(slots: SpecSlots) -> Result<Spec, SpecError> {
        Spec::with_identity("default", 1, slots)
    }

    /// Builds the successor of this spec: same id, version + 1, new slots.
    pub fn successor(&self, slots: SpecSlots) -> Result<Spec, SpecError> {
        Spec::with_identity(self.spec_id.clone(), self.version + 1, slots)
    }

    pub fn spec_id(&self) -> &str {
        &self.spec_id
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Hex SHA-256 of the canonical slot serialization. Excludes `spec_id`
    /// and `version`.
    pub fn content_hash(&self) -> &str {
        &self.content_hash
    }

    pub fn slots(&self) -> &SpecSlots {
        &self.slots
    }

    pub fn intelligence(&self) -> &IntelligenceSlot {
        &self.slots.intelligence
    }

    pub fn engine(&self) -> &EngineSlot {
        &self.slots.engine
    }

    pub fn agent(&self) -> &AgentSlot {
        &self.slots.agent
    }

    pub fn tools(&self) -> &ToolsMemorySlot {
        &self.slots.tools
    }

    pub fn learning(&self) -> &LearningSlot {
        &self.slots.learning
    }

    /// Looks up a scalar field by dotted path, rendered canonically
    /// (`"0.7"`, `"true"`, `"q8"`). Collections and unknown paths yield
    /// `None`.
    pub fn scalar_field(&self, path: &str) -> Option<String> {
        let s = &self.slots;
        let v = match path {
            "intelligence.model_id" => s.intelligence.model_id.clone(),
            "intelligence.temperature" => canon::render_float(s.intelligence.temperature),
            "intelligence.top_p" => canon::render_float(s.intelligence.top_p),
            "intelligence.max_tokens" => s.intelligence.max_tokens.to_string(),
            "intelligence.quantization" => s.intelligence.quantization.to_string(),
            "intelligence.train_marker" => s.intelligence.train_marker.clone(),
            "engine.backend" => s.engine.backend.clone(),
            "engine.batch_size" => s.engine.batch_size.to_string(),
            "engine.kv_cache_enabled" => s.engine.kv_cache_enabled.to_string(),
            "agent.loop_type" => s.agent.loop_type.to_string(),
            "agent.system_prompt" => s.agent.system_prompt.clone(),
            "agent.max_turns" => s.agent.max_turns.to_string(),
            "agent.tool_strategy" => s.agent.tool_strategy.clone(),
            "tools.memory_backend" => s.tools.memory_backend.to_string(),
            "tools.cloud_as_tool" => s.tools.cloud_as_tool.to_string(),
            "learning.enabled" => s.learning.enabled.to_string(),
            "learning.policy" => s.learning.policy.to_string(),
            _ => return None,
        };
        Some(v)
    }

    /// Looks up a numeric field by dotted path.
    pub fn numeric_field(&self, path: &str) -> Option<f64> {
        let s = &self.slots;
        let v = match path {
            "intelligence.temperature" => s.intelligence.temperature,
            "intelligence.top_p" => s.intelligence.top_p,
            "intelligence.max_tokens" => s.intelligence.max_tokens as f64,
            "engine.batch_size" => s.engine.batch_size as f64,
            "agent.max_turns" => s.agent.max_turns as f64,
            _ => return None,
        };
        Some(v)
    }
}

impl Default for Spec {
    fn default() -> Self {
        Spec::new(SpecSlots::default()).expect("default slots are valid")
    }
}

fn finite(path: &str, v: f64) -> Result<(), SpecError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invariant(path, "must be finite"))
    }
}

fn validate_slots(slots: &SpecSlots) -> Result<(), SpecError> {
    let i = &slots.intelligence;
    if i.model_id.is_empty() {
        return Err(invariant("intelligence.model_id", "must be non-empty"));
    }
    finite("intelligence.temperature", i.temperature)?;
    if !(0.0..=2.0).contains(&i.temperature) {
        return Err(invariant(
            "intelligence.temperature",
            "must be within [0, 2]",
        ));
    }
    finite("intelligence.top_p", i.top_p)?;
    if !(i.top_p > 0.0 && i.top_p <= 1.0) {
        return Err(invariant("intelligence.top_p", "must be within (0, 1]"));
    }
    if i.max_tokens == 0 {
        return Err(invariant("intelligence.max_tokens", "must be >= 1"));
    }

    let e = &slots.engine;
    if e.backend.is_empty() {
        return Err(invariant("engine.backend", "must be non-empty"));
    }
    if e.batch_size == 0 {
        return Err(invariant("engine.batch_size", "must be >= 1"));
    }
    if e.extra.keys().any(|k| k.is_empty()) {
        return Err(invariant("engine.extra", "keys must be non-empty"));
    }

    let a = &slots.agent;
    if a.max_turns == 0 {
        return Err(invariant("agent.max_turns", "must be >= 1"));
    }
    if a.exemplars.len() > EXEMPLAR_CAP {
        return Err(invariant(
            "agent.exemplars",
            format!("at most {EXEMPLAR_CAP} exemplars allowed"),
        ));
    }
    if a.tool_strategy.is_empty() {
        return Err(invariant("agent.tool_strategy", "must be non-empty"));
    }

    let t = &slots.tools;
    let mut seen = std::collections::BTreeSet::new();
    for tool in &t.enabled_tools {
        if tool.is_empty() {
            return Err(invariant("tools.enabled_tools", "names must be non-empty"));
        }
        if !seen.insert(tool.as_str()) {
            return Err(invariant(
                "tools.enabled_tools",
                format!("duplicate tool `{tool}`"),
            ));
        }
    }
    for key in t.tool_descriptions.keys() {
        if !seen.contains(key.as_str()) {
            return Err(invariant(
                "tools.tool_descriptions",
                format!("`{key}` describes a tool that is not enabled"),
            ));
        }
    }

    let l = &slots.learning;
    l.reward_weights
        .validate()
        .map_err(|message| invariant("learning.reward_weights", message))?;
    finite("learning.gate.epsilon", l.gate.epsilon)?;
    if !(0.0..=1.0).contains(&l.gate.epsilon) {
        return Err(invariant("learning.gate.epsilon", "must be within [0, 1]"));
    }
    if l.gate.stagnation_k == 0 {
        return Err(invariant("learning.gate.stagnation_k", "must be >= 1"));
    }
    if !l.enabled && l.policy != LearningPolicy::None {
        return Err(invariant(
            "learning.policy",
            "must be `none` while learning is disabled",
        ));
    }
    Ok(())
}

fn hash_slots(slots: &SpecSlots) -> String {
    hex::encode(Sha256::digest(canon::slots_toml(slots).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_is_valid_and_hashed() {
        let spec = Spec::default();
        assert_eq!(spec.spec_id(), "default");
        assert_eq!(spec.version(), 1);
        assert_eq!(spec.content_hash().len(), 64);
        assert_eq!(spec.intelligence().temperature, 0.7);
        assert_eq!(spec.engine().backend, "ollama");
        assert!(spec.engine().kv_cache_enabled);
        assert_eq!(spec.tools().memory_backend, MemoryBackend::SqliteFts);
        assert!(!spec.learning().enabled);
    }

    #[test]
    fn hash_ignores_identity_metadata() {
        let slots = SpecSlots::default();
        let a = Spec::with_identity("a", 1, slots.clone()).unwrap();
        let b = Spec::with_identity("b", 9, slots).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn hash_tracks_slot_content() {
        let base = Spec::default();
        let mut slots = base.slots().clone();
        slots.agent.max_turns = 11;
        let changed = base.successor(slots).unwrap();
        assert_ne!(base.content_hash(), changed.content_hash());
        assert_eq!(changed.version(), 2);
    }

    #[test]
    fn rejects_orphan_tool_description() {
        let mut slots = SpecSlots::default();
        slots
            .tools
            .tool_descriptions
            .insert("calc".to_string(), "does math".to_string());
        let err = Spec::new(slots).unwrap_err();
        assert!(matches!(err, SpecError::Invariant { ref path, .. } if path == "tools.tool_descriptions"));
    }

    #[test]
    fn rejects_duplicate_tools() {
        let mut slots = SpecSlots::default();
        slots.tools.enabled_tools = vec!["calc".into(), "calc".into()];
        assert!(Spec::new(slots).is_err());
    }

    #[test]
    fn rejects_out_of_range_sampling_params() {
        let mut slots = SpecSlots::default();
        slots.intelligence.temperature = 2.5;
        assert!(Spec::new(slots.clone()).is_err());
        slots.intelligence.temperature = 0.7;
        slots.intelligence.top_p = 0.0;
        assert!(Spec::new(slots.clone()).is_err());
        slots.intelligence.top_p = 0.95;
        slots.intelligence.max_tokens = 0;
        assert!(Spec::new(slots).is_err());
    }

    #[test]
    fn rejects_exemplar_overflow() {
        let mut slots = SpecSlots::default();
        slots.agent.exemplars = (0..=EXEMPLAR_CAP)
            .map(|n| Exemplar {
                input: format!("q{n}"),
                output: format!("a{n}"),
            })
            .collect();
        assert!(Spec::new(slots).is_err());
    }

    #[test]
    fn rejects_policy_without_learning() {
        let mut slots = SpecSlots::default();
        slots.learning.policy = LearningPolicy::SpecSearch;
        assert!(Spec::new(slots.clone()).is_err());
        slots.learning.enabled = true;
        assert!(Spec::new(slots).is_ok());
    }

    #[test]
    fn scalar_lookup_renders_canonically() {
        let spec = Spec::default();
        assert_eq!(spec.scalar_field("intelligence.temperature").unwrap(), "0.7");
        assert_eq!(spec.scalar_field("engine.kv_cache_enabled").unwrap(), "true");
        assert_eq!(spec.scalar_field("intelligence.quantization").unwrap(), "fp16");
        assert_eq!(spec.scalar_field("intelligence.max_tokens").unwrap(), "4096");
        assert!(spec.scalar_field("intelligence.no_such").is_none());
        assert_eq!(spec.numeric_field("agent.max_turns").unwrap(), 10.0);
    }
}
