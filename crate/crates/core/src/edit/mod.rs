//! Edit catalog and atomic edit application.
//!
//! An [`Edit`] bundles one or more [`FieldOp`]s into a single proposed change.
//! Applying it to a [`Spec`] either produces a successor spec with every op
//! applied and the version bumped, or fails and leaves the input untouched;
//! there is no partial application. Edits may span several primitives at once,
//! which is what lets a search escape local optima that require coordinated
//! changes (say, enabling a tool and telling the prompt to use it).
//!
//! The move space covers four of the five slots. Learning paths are rejected:
//! that slot configures the optimizer and is not itself subject to search.
//!
//! [`apply_with_inverse`] additionally returns whole-field snapshots taken
//! before the first op that touches each field, so a session log can undo an
//! accepted edit and recover a spec hash-equal to the predecessor.

mod catalog;

pub use catalog::{
    enumerate_catalog, EditTemplate, BACKEND_REGISTRY, BATCH_SIZES, DESCRIPTION_LIBRARY,
    EXEMPLAR_LIBRARY, EXTRA_FLAGS, MAX_TOKENS_CHOICES, MAX_TURNS_CHOICES, MODEL_REGISTRY,
    PROMPT_LIBRARY, TEMPERATURES, TOOL_REGISTRY, TOOL_STRATEGIES, TOP_PS, TRAIN_MARKERS,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec::{
    Exemplar, LoopType, MemoryBackend, Quantization, Spec, SpecError, SpecSlots,
};

/// Errors raised while validating or applying edits.
#[derive(Debug, Error)]
pub enum EditError {
    /// The edit carried no ops.
    #[error("edit has no ops")]
    EmptyEdit,
    /// The move space given to the catalog was empty.
    #[error("move space is empty")]
    EmptyMoveSpace,
    /// An op path did not name an editable field.
    #[error("path not found: `{path}`")]
    PathNotFound { path: String },
    /// An op path pointed into the learning slot.
    #[error("`{path}` is not editable: learning configures the optimizer and is outside the move space")]
    LearningNotEditable { path: String },
    /// The op kind does not apply to the addressed field.
    #[error("op `{op}` does not apply to `{path}`")]
    OpMismatch { op: &'static str, path: String },
    /// The op value had the wrong shape for the field.
    #[error("invalid value for `{path}`: expected {expected}")]
    ValueType { path: String, expected: &'static str },
    /// The op was well-typed but could not be applied to this spec.
    #[error("cannot apply to `{path}`: {message}")]
    Apply { path: String, message: String },
    /// The edited slots violated a spec invariant.
    #[error(transparent)]
    Invalid(#[from] SpecError),
}

fn apply_err(path: &str, message: impl Into<String>) -> EditError {
    EditError::Apply {
        path: path.to_string(),
        message: message.into(),
    }
}

/// One of the four editable primitives.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    Intelligence,
    Engine,
    Agent,
    Tools,
}

impl Primitive {
    pub const ALL: [Primitive; 4] = [
        Primitive::Intelligence,
        Primitive::Engine,
        Primitive::Agent,
        Primitive::Tools,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Primitive::Intelligence => "intelligence",
            Primitive::Engine => "engine",
            Primitive::Agent => "agent",
            Primitive::Tools => "tools",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "intelligence" => Some(Primitive::Intelligence),
            "engine" => Some(Primitive::Engine),
            "agent" => Some(Primitive::Agent),
            "tools" => Some(Primitive::Tools),
            _ => None,
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a [`FieldOp`] changes its field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Set,
    ListAppend,
    ListRemove,
    MapPut,
    MapRemove,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Set => "set",
            OpKind::ListAppend => "list_append",
            OpKind::ListRemove => "list_remove",
            OpKind::MapPut => "map_put",
            OpKind::MapRemove => "map_remove",
        }
    }
}

/// A typed literal carried by an op.
///
/// Integers and floats are distinct variants so that `20` can address an
/// integer field and `0.7` a float field without guessing; integer values are
/// coerced when a float field receives one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EditValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Exemplar(Exemplar),
}

impl EditValue {
    fn as_str(&self) -> Option<&str> {
        match self {
            EditValue::Str(s) => Some(s),
            _ => None,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            EditValue::Float(v) => Some(*v),
            EditValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    fn as_u64(&self) -> Option<u64> {
        match self {
            EditValue::Int(v) if *v >= 0 => Some(*v as u64),
            _ => None,
        }
    }

    fn as_bool(&self) -> Option<bool> {
        match self {
            EditValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    fn as_exemplar(&self) -> Option<&Exemplar> {
        match self {
            EditValue::Exemplar(e) => Some(e),
            _ => None,
        }
    }
}

impl From<&str> for EditValue {
    fn from(v: &str) -> Self {
        EditValue::Str(v.to_string())
    }
}

impl From<String> for EditValue {
    fn from(v: String) -> Self {
        EditValue::Str(v)
    }
}

impl From<f64> for EditValue {
    fn from(v: f64) -> Self {
        EditValue::Float(v)
    }
}

impl From<i64> for EditValue {
    fn from(v: i64) -> Self {
        EditValue::Int(v)
    }
}

impl From<u64> for EditValue {
    fn from(v: u64) -> Self {
        EditValue::Int(v as i64)
    }
}

impl From<bool> for EditValue {
    fn from(v: bool) -> Self {
        EditValue::Bool(v)
    }
}

impl From<Exemplar> for EditValue {
    fn from(v: Exemplar) -> Self {
        EditValue::Exemplar(v)
    }
}

/// One field operation: a dotted path, an op kind, and an optional value.
///
/// Map ops address a single entry through the path (`engine.extra.num_gpu`);
/// `map_remove` is the only kind that carries no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldOp {
    pub path: String,
    pub op: OpKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<EditValue>,
}

impl FieldOp {
    pub fn set(path: impl Into<String>, value: impl Into<EditValue>) -> FieldOp {
        FieldOp {
            path: path.into(),
            op: OpKind::Set,
            value: Some(value.into()),
        }
    }

    pub fn list_append(path: impl Into<String>, value: impl Into<EditValue>) -> FieldOp {
        FieldOp {
            path: path.into(),
            op: OpKind::ListAppend,
            value: Some(value.into()),
        }
    }

    pub fn list_remove(path: impl Into<String>, value: impl Into<EditValue>) -> FieldOp {
        FieldOp {
            path: path.into(),
            op: OpKind::ListRemove,
            value: Some(value.into()),
        }
    }

    pub fn map_put(path: impl Into<String>, value: impl Into<EditValue>) -> FieldOp {
        FieldOp {
            path: path.into(),
            op: OpKind::MapPut,
            value: Some(value.into()),
        }
    }

    pub fn map_remove(path: impl Into<String>) -> FieldOp {
        FieldOp {
            path: path.into(),
            op: OpKind::MapRemove,
            value: None,
        }
    }
}

/// Who produced an edit, within which session, at which step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub proposer_id: String,
    pub session_id: String,
    pub sequence: u64,
}

/// A proposed change: ordered ops, an optional target cluster, a rationale.
///
/// Later ops see the effects of earlier ones, so a compound edit can enable a
/// tool and then describe it in a single version step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub edit_id: String,
    pub ops: Vec<FieldOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_cluster: Option<String>,
    #[serde(default)]
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl Edit {
    pub fn new(ops: Vec<FieldOp>) -> Edit {
        Edit {
            edit_id: String::new(),
            ops,
            target_cluster: None,
            rationale: String::new(),
            provenance: None,
        }
    }

    pub fn single(op: FieldOp) -> Edit {
        Edit::new(vec![op])
    }

    pub fn with_target(mut self, cluster: impl Into<String>) -> Edit {
        self.target_cluster = Some(cluster.into());
        self
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Edit {
        self.rationale = rationale.into();
        self
    }

    /// Checks the structural invariants: ops non-empty, every path editable.
    pub fn validate(&self) -> Result<(), EditError> {
        self.primitives().map(|_| ())
    }

    /// The set of primitives this edit touches; size is 1 to 4.
    pub fn primitives(&self) -> Result<BTreeSet<Primitive>, EditError> {
        if self.ops.is_empty() {
            return Err(EditError::EmptyEdit);
        }
        let mut set = BTreeSet::new();
        for op in &self.ops {
            set.insert(resolve(&op.path)?.primitive);
        }
        Ok(set)
    }
}

/// Every editable field, used internally to route ops and snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    ModelId,
    Temperature,
    TopP,
    MaxTokens,
    Quantization,
    TrainMarker,
    Backend,
    BatchSize,
    KvCache,
    Extra,
    LoopType,
    SystemPrompt,
    Exemplars,
    MaxTurns,
    ToolStrategy,
    EnabledTools,
    ToolDescriptions,
    MemoryBackend,
    CloudAsTool,
}

impl Field {
    /// Canonical dotted path of the whole field (entry keys excluded).
    fn path(self) -> &'static str {
        match self {
            Field::ModelId => "intelligence.model_id",
            Field::Temperature => "intelligence.temperature",
            Field::TopP => "intelligence.top_p",
            Field::MaxTokens => "intelligence.max_tokens",
            Field::Quantization => "intelligence.quantization",
            Field::TrainMarker => "intelligence.train_marker",
            Field::Backend => "engine.backend",
            Field::BatchSize => "engine.batch_size",
            Field::KvCache => "engine.kv_cache_enabled",
            Field::Extra => "engine.extra",
            Field::LoopType => "agent.loop_type",
            Field::SystemPrompt => "agent.system_prompt",
            Field::Exemplars => "agent.exemplars",
            Field::MaxTurns => "agent.max_turns",
            Field::ToolStrategy => "agent.tool_strategy",
            Field::EnabledTools => "tools.enabled_tools",
            Field::ToolDescriptions => "tools.tool_descriptions",
            Field::MemoryBackend => "tools.memory_backend",
            Field::CloudAsTool => "tools.cloud_as_tool",
        }
    }

    fn is_map(self) -> bool {
        matches!(self, Field::Extra | Field::ToolDescriptions)
    }
}

struct Resolved {
    primitive: Primitive,
    field: Field,
    /// Entry key for map fields addressed as `<field>.<key>`.
    key: Option<String>,
}

fn resolve(path: &str) -> Result<Resolved, EditError> {
    let not_found = || EditError::PathNotFound {
        path: path.to_string(),
    };
    let mut parts = path.splitn(3, '.');
    let slot = parts.next().unwrap_or("");
    let name = parts.next().ok_or_else(not_found)?;
    let rest = parts.next();
    if slot == "learning" {
        return Err(EditError::LearningNotEditable {
            path: path.to_string(),
        });
    }
    let (primitive, field) = match (slot, name) {
        ("intelligence", "model_id") => (Primitive::Intelligence, Field::ModelId),
        ("intelligence", "temperature") => (Primitive::Intelligence, Field::Temperature),
        ("intelligence", "top_p") => (Primitive::Intelligence, Field::TopP),
        ("intelligence", "max_tokens") => (Primitive::Intelligence, Field::MaxTokens),
        ("intelligence", "quantization") => (Primitive::Intelligence, Field::Quantization),
        ("intelligence", "train_marker") => (Primitive::Intelligence, Field::TrainMarker),
        ("engine", "backend") => (Primitive::Engine, Field::Backend),
        ("engine", "batch_size") => (Primitive::Engine, Field::BatchSize),
        ("engine", "kv_cache_enabled") => (Primitive::Engine, Field::KvCache),
        ("engine", "extra") => (Primitive::Engine, Field::Extra),
        ("agent", "loop_type") => (Primitive::Agent, Field::LoopType),
        ("agent", "system_prompt") => (Primitive::Agent, Field::SystemPrompt),
        ("agent", "exemplars") => (Primitive::Agent, Field::Exemplars),
        ("agent", "max_turns") => (Primitive::Agent, Field::MaxTurns),
        ("agent", "tool_strategy") => (Primitive::Agent, Field::ToolStrategy),
        ("tools", "enabled_tools") => (Primitive::Tools, Field::EnabledTools),
        ("tools", "tool_descriptions") => (Primitive::Tools, Field::ToolDescriptions),
        ("tools", "memory_backend") => (Primitive::Tools, Field::MemoryBackend),
        ("tools", "cloud_as_tool") => (Primitive::Tools, Field::CloudAsTool),
        _ => return Err(not_found()),
    };
    let key = match rest {
        Some(k) if field.is_map() => Some(k.to_string()),
        Some(_) => return Err(not_found()),
        None => None,
    };
    Ok(Resolved {
        primitive,
        field,
        key,
    })
}

fn expect_set<'a>(op: &'a FieldOp) -> Result<&'a EditValue, EditError> {
    if op.op != OpKind::Set {
        return Err(EditError::OpMismatch {
            op: op.op.as_str(),
            path: op.path.clone(),
        });
    }
    op.value.as_ref().ok_or(EditError::ValueType {
        path: op.path.clone(),
        expected: "a value",
    })
}

fn want<'a, T>(op: &FieldOp, v: Option<T>, expected: &'static str) -> Result<T, EditError>
where
    T: 'a,
{
    v.ok_or(EditError::ValueType {
        path: op.path.clone(),
        expected,
    })
}

fn set_str(field: &mut String, op: &FieldOp) -> Result<(), EditError> {
    let v = expect_set(op)?;
    *field = want(op, v.as_str(), "a string")?.to_string();
    Ok(())
}

fn set_f64(field: &mut f64, op: &FieldOp) -> Result<(), EditError> {
    let v = expect_set(op)?;
    *field = want(op, v.as_f64(), "a number")?;
    Ok(())
}

fn set_u64(field: &mut u64, op: &FieldOp) -> Result<(), EditError> {
    let v = expect_set(op)?;
    *field = want(op, v.as_u64(), "a non-negative integer")?;
    Ok(())
}

fn set_bool(field: &mut bool, op: &FieldOp) -> Result<(), EditError> {
    let v = expect_set(op)?;
    *field = want(op, v.as_bool(), "a boolean")?;
    Ok(())
}

fn map_op(
    map: &mut BTreeMap<String, String>,
    op: &FieldOp,
    key: Option<String>,
) -> Result<(), EditError> {
    let key = key.ok_or_else(|| {
        apply_err(
            &op.path,
            "map operations address an entry, e.g. `engine.extra.<key>`",
        )
    })?;
    match op.op {
        OpKind::MapPut => {
            let v = op.value.as_ref().ok_or(EditError::ValueType {
                path: op.path.clone(),
                expected: "a string",
            })?;
            let v = want(op, v.as_str(), "a string")?;
            map.insert(key, v.to_string());
        }
        OpKind::MapRemove => {
            if op.value.is_some() {
                return Err(EditError::ValueType {
                    path: op.path.clone(),
                    expected: "no value",
                });
            }
            if map.remove(&key).is_none() {
                return Err(apply_err(&op.path, format!("key `{key}` not present")));
            }
        }
        _ => {
            return Err(EditError::OpMismatch {
                op: op.op.as_str(),
                path: op.path.clone(),
            })
        }
    }
    Ok(())
}

fn apply_op(slots: &mut SpecSlots, op: &FieldOp) -> Result<(), EditError> {
    let r = resolve(&op.path)?;
    if !r.field.is_map() && r.key.is_some() {
        return Err(EditError::PathNotFound {
            path: op.path.clone(),
        });
    }
    match r.field {
        Field::ModelId => set_str(&mut slots.intelligence.model_id, op),
        Field::Temperature => set_f64(&mut slots.intelligence.temperature, op),
        Field::TopP => set_f64(&mut slots.intelligence.top_p, op),
        Field::MaxTokens => set_u64(&mut slots.intelligence.max_tokens, op),
        Field::Quantization => {
            let v = expect_set(op)?;
            let v = want(op, v.as_str(), "a string")?;
            slots.intelligence.quantization = Quantization::parse(v).ok_or_else(|| {
                apply_err(&op.path, format!("unknown quantization `{v}`"))
            })?;
            Ok(())
        }
        Field::TrainMarker => set_str(&mut slots.intelligence.train_marker, op),
        Field::Backend => set_str(&mut slots.engine.backend, op),
        Field::BatchSize => set_u64(&mut slots.engine.batch_size, op),
        Field::KvCache => set_bool(&mut slots.engine.kv_cache_enabled, op),
        Field::Extra => map_op(&mut slots.engine.extra, op, r.key),
        Field::LoopType => {
            let v = expect_set(op)?;
            let v = want(op, v.as_str(), "a string")?;
            slots.agent.loop_type = LoopType::parse(v)
                .ok_or_else(|| apply_err(&op.path, format!("unknown loop type `{v}`")))?;
            Ok(())
        }
        Field::SystemPrompt => set_str(&mut slots.agent.system_prompt, op),
        Field::Exemplars => match op.op {
            OpKind::ListAppend => {
                let v = expect_set_like(op)?;
                let ex = want(op, v.as_exemplar(), "an exemplar object")?;
                slots.agent.exemplars.push(ex.clone());
                Ok(())
            }
            OpKind::ListRemove => {
                let v = expect_set_like(op)?;
                let i = want(op, v.as_u64(), "a list index")? as usize;
                let len = slots.agent.exemplars.len();
                if i >= len {
                    return Err(apply_err(
                        &op.path,
                        format!("index {i} out of bounds (len {len})"),
                    ));
                }
                slots.agent.exemplars.remove(i);
                Ok(())
            }
            _ => Err(EditError::OpMismatch {
                op: op.op.as_str(),
                path: op.path.clone(),
            }),
        },
        Field::MaxTurns => set_u64(&mut slots.agent.max_turns, op),
        Field::ToolStrategy => set_str(&mut slots.agent.tool_strategy, op),
        Field::EnabledTools => match op.op {
            OpKind::ListAppend => {
                let v = expect_set_like(op)?;
                let v = want(op, v.as_str(), "a string")?;
                slots.tools.enabled_tools.push(v.to_string());
                Ok(())
            }
            OpKind::ListRemove => {
                let v = expect_set_like(op)?;
                let v = want(op, v.as_str(), "a string")?;
                let i = slots
                    .tools
                    .enabled_tools
                    .iter()
                    .position(|t| t == v)
                    .ok_or_else(|| apply_err(&op.path, format!("tool `{v}` not present")))?;
                slots.tools.enabled_tools.remove(i);
                Ok(())
            }
            _ => Err(EditError::OpMismatch {
                op: op.op.as_str(),
                path: op.path.clone(),
            }),
        },
        Field::ToolDescriptions => map_op(&mut slots.tools.tool_descriptions, op, r.key),
        Field::MemoryBackend => {
            let v = expect_set(op)?;
            let v = want(op, v.as_str(), "a string")?;
            slots.tools.memory_backend = MemoryBackend::parse(v)
                .ok_or_else(|| apply_err(&op.path, format!("unknown memory backend `{v}`")))?;
            Ok(())
        }
        Field::CloudAsTool => set_bool(&mut slots.tools.cloud_as_tool, op),
    }
}

/// Like [`expect_set`] but for list ops, which also require a value.
fn expect_set_like<'a>(op: &'a FieldOp) -> Result<&'a EditValue, EditError> {
    op.value.as_ref().ok_or(EditError::ValueType {
        path: op.path.clone(),
        expected: "a value",
    })
}

/// A whole-field snapshot taken before the field was first modified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FieldSnapshot {
    Str(String),
    Float(f64),
    Uint(u64),
    Bool(bool),
    StrList(Vec<String>),
    Exemplars(Vec<Exemplar>),
    StrMap(BTreeMap<String, String>),
}

/// One entry of an edit's inverse: restore `before` at `path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseOp {
    pub path: String,
    pub before: FieldSnapshot,
}

fn snapshot(slots: &SpecSlots, field: Field) -> FieldSnapshot {
    match field {
        Field::ModelId => FieldSnapshot::Str(slots.intelligence.model_id.clone()),
        Field::Temperature => FieldSnapshot::Float(slots.intelligence.temperature),
        Field::TopP => FieldSnapshot::Float(slots.intelligence.top_p),
        Field::MaxTokens => FieldSnapshot::Uint(slots.intelligence.max_tokens),
        Field::Quantization => {
            FieldSnapshot::Str(slots.intelligence.quantization.as_str().to_string())
        }
        Field::TrainMarker => FieldSnapshot::Str(slots.intelligence.train_marker.clone()),
        Field::Backend => FieldSnapshot::Str(slots.engine.backend.clone()),
        Field::BatchSize => FieldSnapshot::Uint(slots.engine.batch_size),
        Field::KvCache => FieldSnapshot::Bool(slots.engine.kv_cache_enabled),
        Field::Extra => FieldSnapshot::StrMap(slots.engine.extra.clone()),
        Field::LoopType => FieldSnapshot::Str(slots.agent.loop_type.as_str().to_string()),
        Field::SystemPrompt => FieldSnapshot::Str(slots.agent.system_prompt.clone()),
        Field::Exemplars => FieldSnapshot::Exemplars(slots.agent.exemplars.clone()),
        Field::MaxTurns => FieldSnapshot::Uint(slots.agent.max_turns),
        Field::ToolStrategy => FieldSnapshot::Str(slots.agent.tool_strategy.clone()),
        Field::EnabledTools => FieldSnapshot::StrList(slots.tools.enabled_tools.clone()),
        Field::ToolDescriptions => FieldSnapshot::StrMap(slots.tools.tool_descriptions.clone()),
        Field::MemoryBackend => {
            FieldSnapshot::Str(slots.tools.memory_backend.as_str().to_string())
        }
        Field::CloudAsTool => FieldSnapshot::Bool(slots.tools.cloud_as_tool),
    }
}

fn restore(slots: &mut SpecSlots, inv: &InverseOp) -> Result<(), EditError> {
    let r = resolve(&inv.path)?;
    let mismatch = || apply_err(&inv.path, "snapshot kind does not match the field");
    match (r.field, &inv.before) {
        (Field::ModelId, FieldSnapshot::Str(v)) => slots.intelligence.model_id = v.clone(),
        (Field::Temperature, FieldSnapshot::Float(v)) => slots.intelligence.temperature = *v,
        (Field::TopP, FieldSnapshot::Float(v)) => slots.intelligence.top_p = *v,
        (Field::MaxTokens, FieldSnapshot::Uint(v)) => slots.intelligence.max_tokens = *v,
        (Field::Quantization, FieldSnapshot::Str(v)) => {
            slots.intelligence.quantization =
                Quantization::parse(v).ok_or_else(mismatch)?;
        }
        (Field::TrainMarker, FieldSnapshot::Str(v)) => {
            slots.intelligence.train_marker = v.clone()
        }
        (Field::Backend, FieldSnapshot::Str(v)) => slots.engine.backend = v.clone(),
        (Field::BatchSize, FieldSnapshot::Uint(v)) => slots.engine.batch_size = *v,
        (Field::KvCache, FieldSnapshot::Bool(v)) => slots.engine.kv_cache_enabled = *v,
        (Field::Extra, FieldSnapshot::StrMap(v)) => slots.engine.extra = v.clone(),
        (Field::LoopType, FieldSnapshot::Str(v)) => {
            slots.agent.loop_type = LoopType::parse(v).ok_or_else(mismatch)?;
        }
        (Field::SystemPrompt, FieldSnapshot::Str(v)) => slots.agent.system_prompt = v.clone(),
        (Field::Exemplars, FieldSnapshot::Exemplars(v)) => slots.agent.exemplars = v.clone(),
        (Field::MaxTurns, FieldSnapshot::Uint(v)) => slots.agent.max_turns = *v,
        (Field::ToolStrategy, FieldSnapshot::Str(v)) => slots.agent.tool_strategy = v.clone(),
        (Field::EnabledTools, FieldSnapshot::StrList(v)) => {
            slots.tools.enabled_tools = v.clone()
        }
        (Field::ToolDescriptions, FieldSnapshot::StrMap(v)) => {
            slots.tools.tool_descriptions = v.clone()
        }
        (Field::MemoryBackend, FieldSnapshot::Str(v)) => {
            slots.tools.memory_backend = MemoryBackend::parse(v).ok_or_else(mismatch)?;
        }
        (Field::CloudAsTool, FieldSnapshot::Bool(v)) => slots.tools.cloud_as_tool = *v,
        _ => return Err(mismatch()),
    }
    Ok(())
}

/// Applies an edit, returning the successor spec. The input is unchanged; on
/// any error nothing is applied.
pub fn apply(s: &Spec, e: &Edit) -> Result<Spec, EditError> {
    apply_with_inverse(s, e).map(|(spec, _)| spec)
}

/// Applies an edit and returns the successor together with its inverse: one
/// whole-field snapshot per touched field, in first-touch order. Replaying
/// the inverse through [`undo`] yields a spec hash-equal to the input.
pub fn apply_with_inverse(s: &Spec, e: &Edit) -> Result<(Spec, Vec<InverseOp>), EditError> {
    if e.ops.is_empty() {
        return Err(EditError::EmptyEdit);
    }
    let mut slots = s.slots().clone();
    let mut inverse: Vec<InverseOp> = Vec::new();
    for op in &e.ops {
        let field = resolve(&op.path)?.field;
        let field_path = field.path();
        if !inverse.iter().any(|inv| inv.path == field_path) {
            inverse.push(InverseOp {
                path: field_path.to_string(),
                before: snapshot(&slots, field),
            });
        }
        apply_op(&mut slots, op)?;
    }
    let spec = s.successor(slots)?;
    Ok((spec, inverse))
}

/// Replays an inverse, returning a successor whose slots (and therefore
/// content hash) equal the edited spec's predecessor.
pub fn undo(s: &Spec, inverse: &[InverseOp]) -> Result<Spec, EditError> {
    let mut slots = s.slots().clone();
    for inv in inverse {
        restore(&mut slots, inv)?;
    }
    s.successor(slots).map_err(Into::into)
}

/// Per-primitive fractions of accepted edits.
///
/// Each accepted edit contributes weight 1, split evenly across the
/// primitives it touches; rejected edits are ignored. Fractions sum to 1
/// whenever at least one edit was accepted and are all zero otherwise.
pub fn edit_stats(history: &[(Edit, bool)]) -> BTreeMap<Primitive, f64> {
    let mut weights: BTreeMap<Primitive, f64> =
        Primitive::ALL.iter().map(|p| (*p, 0.0)).collect();
    let mut accepted = 0u64;
    for (edit, ok) in history {
        if !*ok {
            continue;
        }
        let Ok(touched) = edit.primitives() else {
            continue;
        };
        accepted += 1;
        let share = 1.0 / touched.len() as f64;
        for p in touched {
            *weights.get_mut(&p).expect("all primitives present") += share;
        }
    }
    if accepted > 0 {
        for w in weights.values_mut() {
            *w /= accepted as f64;
        }
    }
    weights
}
