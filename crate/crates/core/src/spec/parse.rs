//! Strict spec parsing for TOML and JSON documents.
//!
//! Both formats funnel into one walker over a shared value tree, so they
//! enforce identical rules: unknown keys are errors, enum fields reject
//! values outside their variant set by name, and absent optional fields take
//! the documented defaults. A small compatibility layer accepts the older
//! flat config vocabulary (`default_model`, `engine.default`,
//! `agent.default_agent`, a comma-joined `agent.tools` string, and
//! `[tools.storage] default_backend`) and maps it onto the typed schema;
//! canonical output always uses the typed names.

use std::collections::BTreeMap;

use super::{
    AgentSlot, EngineSlot, Exemplar, IntelligenceSlot, LearningPolicy, LearningSlot, LoopType,
    MemoryBackend, Quantization, Spec, SpecError, SpecSlots, ToolsMemorySlot, EXEMPLAR_CAP,
};
use crate::reward::RewardWeights;

enum Node {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Array(Vec<Node>),
    Table(BTreeMap<String, Node>),
}

fn from_toml(value: toml::Value) -> Result<Node, SpecError> {
    Ok(match value {
        toml::Value::String(s) => Node::Str(s),
        toml::Value::Integer(i) => Node::Int(i),
        toml::Value::Float(f) => Node::Float(f),
        toml::Value::Boolean(b) => Node::Bool(b),
        toml::Value::Datetime(_) => {
            return Err(SpecError::InvalidType {
                path: String::new(),
                expected: "no datetime values in spec documents",
            })
        }
        toml::Value::Array(items) => {
            Node::Array(items.into_iter().map(from_toml).collect::<Result<_, _>>()?)
        }
        toml::Value::Table(table) => Node::Table(
            table
                .into_iter()
                .map(|(k, v)| Ok((k, from_toml(v)?)))
                .collect::<Result<_, SpecError>>()?,
        ),
    })
}

fn from_json(value: serde_json::Value) -> Result<Node, SpecError> {
    Ok(match value {
        serde_json::Value::String(s) => Node::Str(s),
        serde_json::Value::Bool(b) => Node::Bool(b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Node::Int(i)
            } else if let Some(f) = n.as_f64() {
                Node::Float(f)
            } else {
                return Err(SpecError::InvalidType {
                    path: String::new(),
                    expected: "a representable number",
                });
            }
        }
        serde_json::Value::Null => {
            return Err(SpecError::InvalidType {
                path: String::new(),
                expected: "no null values in spec documents",
            })
        }
        serde_json::Value::Array(items) => {
            Node::Array(items.into_iter().map(from_json).collect::<Result<_, _>>()?)
        }
        serde_json::Value::Object(map) => Node::Table(
            map.into_iter()
                .map(|(k, v)| Ok((k, from_json(v)?)))
                .collect::<Result<_, SpecError>>()?,
        ),
    })
}

struct Walker {
    path: String,
    table: BTreeMap<String, Node>,
}

impl Walker {
    fn new(path: &str, table: BTreeMap<String, Node>) -> Self {
        Walker {
            path: path.to_string(),
            table,
        }
    }

    fn child(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn take(&mut self, key: &str) -> Option<(String, Node)> {
        self.table.remove(key).map(|node| (self.child(key), node))
    }

    /// After all known keys were consumed, anything left is unknown.
    fn finish(self) -> Result<(), SpecError> {
        if let Some(key) = self.table.into_keys().next() {
            return Err(SpecError::UnknownKey {
                path: if self.path.is_empty() {
                    key
                } else {
                    format!("{}.{}", self.path, key)
                },
            });
        }
        Ok(())
    }

    fn str_field(&mut self, key: &str) -> Result<Option<(String, String)>, SpecError> {
        match self.take(key) {
            None => Ok(None),
            Some((path, Node::Str(s))) => Ok(Some((path, s))),
            Some((path, _)) => Err(SpecError::InvalidType {
                path,
                expected: "a string",
            }),
        }
    }

    fn bool_field(&mut self, key: &str) -> Result<Option<bool>, SpecError> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Node::Bool(b))) => Ok(Some(b)),
            Some((path, _)) => Err(SpecError::InvalidType {
                path,
                expected: "a boolean",
            }),
        }
    }

    fn uint_field(&mut self, key: &str) -> Result<Option<u64>, SpecError> {
        match self.take(key) {
            None => Ok(None),
            Some((path, Node::Int(i))) => u64::try_from(i).map(Some).map_err(|_| {
                SpecError::Invariant {
                    path,
                    message: "must be a nonnegative integer".to_string(),
                }
            }),
            Some((path, _)) => Err(SpecError::InvalidType {
                path,
                expected: "an integer",
            }),
        }
    }

    fn float_field(&mut self, key: &str) -> Result<Option<f64>, SpecError> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Node::Float(f))) => Ok(Some(f)),
            Some((_, Node::Int(i))) => Ok(Some(i as f64)),
            Some((path, _)) => Err(SpecError::InvalidType {
                path,
                expected: "a number",
            }),
        }
    }

    fn table_field(&mut self, key: &str) -> Result<Option<(String, Walker)>, SpecError> {
        match self.take(key) {
            None => Ok(None),
            Some((path, Node::Table(t))) => {
                let walker = Walker::new(&path, t);
                Ok(Some((path, walker)))
            }
            Some((path, _)) => Err(SpecError::InvalidType {
                path,
                expected: "a table",
            }),
        }
    }

    fn array_field(&mut self, key: &str) -> Result<Option<(String, Vec<Node>)>, SpecError> {
        match self.take(key) {
            None => Ok(None),
            Some((path, Node::Array(items))) => Ok(Some((path, items))),
            Some((path, _)) => Err(SpecError::InvalidType {
                path,
                expected: "an array",
            }),
        }
    }

    fn string_map_field(
        &mut self,
        key: &str,
    ) -> Result<Option<BTreeMap<String, String>>, SpecError> {
        match self.take(key) {
            None => Ok(None),
            Some((path, Node::Table(t))) => {
                let mut out = BTreeMap::new();
                for (k, v) in t {
                    match v {
                        Node::Str(s) => {
                            out.insert(k, s);
                        }
                        _ => {
                            return Err(SpecError::InvalidType {
                                path: format!("{path}.{k}"),
                                expected: "a string",
                            })
                        }
                    }
                }
                Ok(Some(out))
            }
            Some((path, _)) => Err(SpecError::InvalidType {
                path,
                expected: "a table of strings",
            }),
        }
    }
}

fn enum_field<T>(
    entry: Option<(String, String)>,
    parse: impl Fn(&str) -> Option<T>,
    allowed: &'static str,
) -> Result<Option<T>, SpecError> {
    match entry {
        None => Ok(None),
        Some((path, value)) => match parse(&value) {
            Some(v) => Ok(Some(v)),
            None => Err(SpecError::UnknownVariant {
                path,
                value,
                allowed,
            }),
        },
    }
}

fn str_list(path: &str, items: Vec<Node>) -> Result<Vec<String>, SpecError> {
    items
        .into_iter()
        .enumerate()
        .map(|(i, node)| match node {
            Node::Str(s) => Ok(s),
            _ => Err(SpecError::InvalidType {
                path: format!("{path}[{i}]"),
                expected: "a string",
            }),
        })
        .collect()
}

fn intelligence_slot(mut w: Walker) -> Result<IntelligenceSlot, SpecError> {
    let mut slot = IntelligenceSlot::default();
    let model = w.str_field("model_id")?;
    let model_alias = w.str_field("default_model")?;
    match (model, model_alias) {
        (Some(_), Some(_)) => {
            return Err(SpecError::ConflictingKeys {
                path: w.child("model_id"),
                alias: w.child("default_model"),
            })
        }
        (Some((_, m)), None) | (None, Some((_, m))) => slot.model_id = m,
        (None, None) => {}
    }
    if let Some(t) = w.float_field("temperature")? {
        slot.temperature = t;
    }
    if let Some(p) = w.float_field("top_p")? {
        slot.top_p = p;
    }
    if let Some(m) = w.uint_field("max_tokens")? {
        slot.max_tokens = m;
    }
    if let Some(q) = enum_field(
        w.str_field("quantization")?,
        Quantization::parse,
        "fp16, fp8, q8, q4",
    )? {
        slot.quantization = q;
    }
    if let Some((_, marker)) = w.str_field("train_marker")? {
        slot.train_marker = marker;
    }
    w.finish()?;
    Ok(slot)
}

fn engine_slot(mut w: Walker) -> Result<EngineSlot, SpecError> {
    let mut slot = EngineSlot::default();
    let backend = w.str_field("backend")?;
    let backend_alias = w.str_field("default")?;
    match (backend, backend_alias) {
        (Some(_), Some(_)) => {
            return Err(SpecError::ConflictingKeys {
                path: w.child("backend"),
                alias: w.child("default"),
            })
        }
        (Some((_, b)), None) | (None, Some((_, b))) => slot.backend = b,
        (None, None) => {}
    }
    if let Some(b) = w.uint_field("batch_size")? {
        slot.batch_size = b;
    }
    if let Some(k) = w.bool_field("kv_cache_enabled")? {
        slot.kv_cache_enabled = k;
    }
    if let Some(extra) = w.string_map_field("extra")? {
        slot.extra = extra;
    }
    w.finish()?;
    Ok(slot)
}

/// Comma-joined tool list from the flat vocabulary: split, trim, drop empty.
fn split_tool_list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn agent_slot(mut w: Walker) -> Result<(AgentSlot, Option<Vec<String>>), SpecError> {
    let mut slot = AgentSlot::default();
    let loop_type = w.str_field("loop_type")?;
    let loop_alias = w.str_field("default_agent")?;
    let merged = match (loop_type, loop_alias) {
        (Some(_), Some(_)) => {
            return Err(SpecError::ConflictingKeys {
                path: w.child("loop_type"),
                alias: w.child("default_agent"),
            })
        }
        (Some(e), None) | (None, Some(e)) => Some(e),
        (None, None) => None,
    };
    if let Some(l) = enum_field(
        merged,
        LoopType::parse,
        "simple, react, codeact, orchestrator",
    )? {
        slot.loop_type = l;
    }
    if let Some((_, p)) = w.str_field("system_prompt")? {
        slot.system_prompt = p;
    }
    if let Some((path, items)) = w.array_field("exemplars")? {
        let mut exemplars = Vec::with_capacity(items.len());
        for (i, node) in items.into_iter().enumerate() {
            let Node::Table(t) = node else {
                return Err(SpecError::InvalidType {
                    path: format!("{path}[{i}]"),
                    expected: "a table with `input` and `output`",
                });
            };
            let mut pair = Walker::new("", t);
            let input = pair.str_field("input")?.map(|(_, s)| s);
            let output = pair.str_field("output")?.map(|(_, s)| s);
            pair.finish().map_err(|_| SpecError::InvalidType {
                path: format!("{path}[{i}]"),
                expected: "a table with only `input` and `output`",
            })?;
            match (input, output) {
                (Some(input), Some(output)) => exemplars.push(Exemplar { input, output }),
                _ => {
                    return Err(SpecError::InvalidType {
                        path: format!("{path}[{i}]"),
                        expected: "a table with `input` and `output`",
                    })
                }
            }
        }
        if exemplars.len() > EXEMPLAR_CAP {
            return Err(SpecError::Invariant {
                path,
                message: format!("at most {EXEMPLAR_CAP} exemplars allowed"),
            });
        }
        slot.exemplars = exemplars;
    }
    if let Some(m) = w.uint_field("max_turns")? {
        slot.max_turns = m;
    }
    if let Some((_, s)) = w.str_field("tool_strategy")? {
        slot.tool_strategy = s;
    }
    let inline_tools = w.str_field("tools")?.map(|(_, raw)| split_tool_list(&raw));
    w.finish()?;
    Ok((slot, inline_tools))
}

fn tools_slot(mut w: Walker, inline_tools: Option<Vec<String>>) -> Result<ToolsMemorySlot, SpecError> {
    let mut slot = ToolsMemorySlot::default();
    match (w.array_field("enabled_tools")?, inline_tools) {
        (Some((path, _)), Some(_)) => {
            return Err(SpecError::ConflictingKeys {
                path,
                alias: "agent.tools".to_string(),
            })
        }
        (Some((path, items)), None) => slot.enabled_tools = str_list(&path, items)?,
        (None, Some(tools)) => slot.enabled_tools = tools,
        (None, None) => {}
    }
    if let Some(d) = w.string_map_field("tool_descriptions")? {
        slot.tool_descriptions = d;
    }
    let backend = w.str_field("memory_backend")?;
    let storage = w.table_field("storage")?;
    let merged = match (backend, storage) {
        (Some(_), Some((path, _))) => {
            return Err(SpecError::ConflictingKeys {
                path: w.child("memory_backend"),
                alias: path,
            })
        }
        (Some(e), None) => Some(e),
        (None, Some((_, mut storage))) => {
            let entry = storage.str_field("default_backend")?;
            storage.finish()?;
            entry
        }
        (None, None) => None,
    };
    if let Some(b) = enum_field(
        merged,
        MemoryBackend::parse,
        "sqlite_fts, bm25, faiss_like, hybrid",
    )? {
        slot.memory_backend = b;
    }
    if let Some(c) = w.bool_field("cloud_as_tool")? {
        slot.cloud_as_tool = c;
    }
    w.finish()?;
    Ok(slot)
}

fn learning_slot(mut w: Walker) -> Result<LearningSlot, SpecError> {
    let mut slot = LearningSlot::default();
    if let Some(e) = w.bool_field("enabled")? {
        slot.enabled = e;
    }
    if let Some(p) = enum_field(
        w.str_field("policy")?,
        LearningPolicy::parse,
        "none, spec_search, evolutionary, single_component",
    )? {
        slot.policy = p;
    }
    if let Some((path, items)) = w.array_field("reward_weights")? {
        if items.len() != 4 {
            return Err(SpecError::Invariant {
                path,
                message: "must hold exactly four weights".to_string(),
            });
        }
        let mut vals = [0.0f64; 4];
        for (i, node) in items.into_iter().enumerate() {
            vals[i] = match node {
                Node::Float(f) => f,
                Node::Int(n) => n as f64,
                _ => {
                    return Err(SpecError::InvalidType {
                        path: format!("{path}[{i}]"),
                        expected: "a number",
                    })
                }
            };
        }
        slot.reward_weights = RewardWeights {
            alpha: vals[0],
            beta: vals[1],
            gamma: vals[2],
            delta: vals[3],
        };
    }
    if let Some((_, mut gate)) = w.table_field("gate")? {
        if let Some(e) = gate.float_field("epsilon")? {
            slot.gate.epsilon = e;
        }
        if let Some(k) = gate.uint_field("stagnation_k")? {
            slot.gate.stagnation_k = u32::try_from(k).map_err(|_| SpecError::Invariant {
                path: "learning.gate.stagnation_k".to_string(),
                message: "too large".to_string(),
            })?;
        }
        gate.finish()?;
    }
    if let Some((_, mut budget)) = w.table_field("budget")? {
        if let Some(p) = budget.uint_field("max_proposals")? {
            slot.budget.max_proposals = p;
        }
        if let Some(e) = budget.uint_field("max_task_executions")? {
            slot.budget.max_task_executions = e;
        }
        budget.finish()?;
    }
    w.finish()?;
    Ok(slot)
}

fn build_spec(root: BTreeMap<String, Node>) -> Result<Spec, SpecError> {
    let mut w = Walker::new("", root);
    let spec_id = w
        .str_field("spec_id")?
        .map(|(_, s)| s)
        .unwrap_or_else(|| "default".to_string());
    let version = match w.uint_field("version")? {
        None => 1,
        Some(v) => u32::try_from(v).map_err(|_| SpecError::Invariant {
            path: "version".to_string(),
            message: "too large".to_string(),
        })?,
    };

    let intelligence = match w.table_field("intelligence")? {
        Some((_, t)) => intelligence_slot(t)?,
        None => IntelligenceSlot::default(),
    };
    let engine = match w.table_field("engine")? {
        Some((_, t)) => engine_slot(t)?,
        None => EngineSlot::default(),
    };
    let (agent, inline_tools) = match w.table_field("agent")? {
        Some((_, t)) => agent_slot(t)?,
        None => (AgentSlot::default(), None),
    };
    let tools = match w.table_field("tools")? {
        Some((_, t)) => tools_slot(t, inline_tools)?,
        None => tools_slot(Walker::new("tools", BTreeMap::new()), inline_tools)?,
    };
    let learning = match w.table_field("learning")? {
        Some((_, t)) => learning_slot(t)?,
        None => LearningSlot::default(),
    };
    w.finish()?;

    Spec::with_identity(
        spec_id,
        version,
        SpecSlots {
            intelligence,
            engine,
            agent,
            tools,
            learning,
        },
    )
}

/// Parses a spec from TOML. Syntax errors keep the parser's line/column
/// annotation; schema violations name the offending dotted path.
pub fn parse_spec_toml(text: &str) -> Result<Spec, SpecError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| SpecError::Syntax(e.to_string()))?;
    let Node::Table(root) = from_toml(toml::Value::Table(table))? else {
        unreachable!("a TOML document is a table");
    };
    build_spec(root)
}

/// Parses a spec from the JSON mirror of the canonical schema.
pub fn parse_spec_json(text: &str) -> Result<Spec, SpecError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| SpecError::JsonSyntax(e.to_string()))?;
    match from_json(value)? {
        Node::Table(root) => build_spec(root),
        _ => Err(SpecError::InvalidType {
            path: String::new(),
            expected: "a JSON object",
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::super::*;

    #[test]
    fn round_trips_default_spec() {
        let spec = Spec::default();
        let text = canonical_toml(&spec);
        let parsed = parse_spec_toml(&text).unwrap();
        assert_eq!(parsed, spec);
        assert_eq!(parsed.content_hash(), spec.content_hash());
    }

    #[test]
    fn round_trips_via_json_mirror() {
        let spec = Spec::default();
        let text = serde_json::to_string(&spec_to_json(&spec)).unwrap();
        let parsed = parse_spec_json(&text).unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn absent_fields_take_defaults() {
        let spec = parse_spec_toml("[intelligence]\nmodel_id = \"gemma4:4b-it\"\n").unwrap();
        assert_eq!(spec.intelligence().model_id, "gemma4:4b-it");
        assert_eq!(spec.intelligence().temperature, 0.7);
        assert_eq!(spec.engine().batch_size, 1);
        assert_eq!(spec.learning().gate.epsilon, 0.01);
        assert_eq!(spec.learning().gate.stagnation_k, 5);
        assert_eq!(spec.spec_id(), "default");
        assert_eq!(spec.version(), 1);
    }

    #[test]
    fn rejects_unknown_keys_with_path() {
        let err = parse_spec_toml("[intelligence]\nmodle_id = \"x\"\n").unwrap_err();
        assert!(matches!(
            err,
            SpecError::UnknownKey { ref path } if path == "intelligence.modle_id"
        ));
    }

    #[test]
    fn rejects_unknown_enum_variant_with_path() {
        let err = parse_spec_toml("[intelligence]\nquantization = \"fp7\"\n").unwrap_err();
        match err {
            SpecError::UnknownVariant { path, value, .. } => {
                assert_eq!(path, "intelligence.quantization");
                assert_eq!(value, "fp7");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_spec_toml("[intelligence\nmodel_id = \"x\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 1"), "missing position in: {msg}");
    }

    #[test]
    fn accepts_flat_vocabulary_aliases() {
        let text = "\
[intelligence]
default_model = \"gemma4:4b-it\"

[engine]
default = \"ollama\"

[agent]
default_agent = \"simple\"
tools = \"think, calc, web_search\"

[tools.storage]
default_backend = \"sqlite\"

[learning]
enabled = true
policy = \"spec_distillation\"
";
        let spec = parse_spec_toml(text).unwrap();
        assert_eq!(spec.intelligence().model_id, "gemma4:4b-it");
        assert_eq!(spec.engine().backend, "ollama");
        assert_eq!(spec.agent().loop_type, LoopType::Simple);
        assert_eq!(spec.tools().enabled_tools, vec!["think", "calc", "web_search"]);
        assert_eq!(spec.tools().memory_backend, MemoryBackend::SqliteFts);
        assert_eq!(spec.learning().policy, LearningPolicy::SpecSearch);
    }

    #[test]
    fn rejects_field_set_through_both_names() {
        let err =
            parse_spec_toml("[intelligence]\nmodel_id = \"a\"\ndefault_model = \"b\"\n")
                .unwrap_err();
        assert!(matches!(err, SpecError::ConflictingKeys { .. }));

        let err = parse_spec_toml(
            "[agent]\ntools = \"calc\"\n\n[tools]\nenabled_tools = [\"calc\"]\n",
        )
        .unwrap_err();
        assert!(matches!(err, SpecError::ConflictingKeys { .. }));
    }

    #[test]
    fn alias_vocabulary_maps_loop_and_policy_variants() {
        let text = "\
[agent]
default_agent = \"native_openhands\"

[learning]
enabled = true
policy = \"spec_search\"

[tools]
memory_backend = \"bm25\"
";
        let spec = parse_spec_toml(text).unwrap();
        assert_eq!(spec.agent().loop_type, LoopType::Codeact);
        assert_eq!(spec.tools().memory_backend, MemoryBackend::Bm25);
    }

    #[test]
    fn rejects_invariant_violations_from_documents() {
        let err = parse_spec_toml("[engine]\nbatch_size = 0\n").unwrap_err();
        assert!(matches!(err, SpecError::Invariant { ref path, .. } if path == "engine.batch_size"));

        let err = parse_spec_toml("[agent]\nmax_turns = -3\n").unwrap_err();
        assert!(matches!(err, SpecError::Invariant { .. }));
    }
}
