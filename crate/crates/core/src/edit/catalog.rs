//! The shared edit-template catalog.
//!
//! Templates are enumerated against a concrete spec so that every parameter
//! assignment yields a valid edit: tool additions only offer tools not yet
//! enabled, removals only offer present entries, and single-value swaps
//! exclude the field's current value. Enumeration order is deterministic, so
//! seeded sampling and brute-force enumeration are reproducible.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::spec::{Exemplar, LoopType, MemoryBackend, Quantization, Spec, EXEMPLAR_CAP};

use super::{Edit, EditError, EditValue, FieldOp, OpKind, Primitive};

/// Models the catalog may swap in.
pub const MODEL_REGISTRY: [&str; 4] = ["gemma4:4b-it", "qwen3.5:122b", "qwen3.5:4b", "qwen3.5:9b"];

/// Serving backends the catalog may swap in.
pub const BACKEND_REGISTRY: [&str; 4] = ["llama_cpp", "mlx", "ollama", "vllm"];

/// Tools the catalog may enable.
pub const TOOL_REGISTRY: [&str; 10] = [
    "calc",
    "code_interpreter",
    "file_read",
    "git_tool",
    "memory_write",
    "scheduler",
    "shell",
    "think",
    "web_search",
    "wiki",
];

/// Canned system prompts for prompt-set templates.
pub const PROMPT_LIBRARY: [&str; 5] = [
    "Answer concisely and cite sources.",
    "Always verify intermediate results before answering.",
    "Write a plan before acting, then use tools when they help.",
    "Use the available tools for every calculation and cite what you used.",
    "Verify each claim and keep the final answer concise.",
];

/// Canned demonstrations for exemplar-append templates.
pub const EXEMPLAR_LIBRARY: [(&str, &str); 3] = [
    ("What is 17 * 24?", "408"),
    ("Capital of France?", "Paris"),
    ("Convert 5 km to miles.", "3.107 miles"),
];

/// Canned tool descriptions for description-rewrite templates.
pub const DESCRIPTION_LIBRARY: [&str; 3] = [
    "Use this tool whenever the task matches its name.",
    "Prefer this tool over answering from memory.",
    "Call this tool and quote its output in the answer.",
];

/// Admissible sampling temperatures.
pub const TEMPERATURES: [f64; 5] = [0.0, 0.2, 0.4, 0.7, 1.0];

/// Admissible nucleus-sampling bounds.
pub const TOP_PS: [f64; 4] = [0.8, 0.9, 0.95, 1.0];

/// Admissible generation caps.
pub const MAX_TOKENS_CHOICES: [u64; 4] = [1024, 2048, 4096, 8192];

/// Admissible engine batch sizes.
pub const BATCH_SIZES: [u64; 4] = [1, 2, 4, 8];

/// Admissible agent turn limits.
pub const MAX_TURNS_CHOICES: [u64; 4] = [5, 10, 20, 50];

/// Training trigger markers; the empty string disarms a pending trigger.
pub const TRAIN_MARKERS: [&str; 4] = ["", "sft", "lora", "grpo"];

/// Admissible tool strategies.
pub const TOOL_STRATEGIES: [&str; 4] = ["auto", "none", "prefer_tools", "required"];

/// Backend-specific flags the catalog may put into `engine.extra`.
pub const EXTRA_FLAGS: [(&str, &[&str]); 2] =
    [("num_gpu", &["1", "2", "4"]), ("numa", &["off", "on"])];

/// One sampleable edit shape: a path, an op kind, and its admissible values.
///
/// `values` is empty only for ops that carry no value (`map_remove`); every
/// other template offers at least one value, and sampling draws uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditTemplate {
    pub template_id: String,
    pub primitive: Primitive,
    pub path: String,
    pub op: OpKind,
    pub values: Vec<EditValue>,
}

impl EditTemplate {
    fn new(
        template_id: impl Into<String>,
        primitive: Primitive,
        path: impl Into<String>,
        op: OpKind,
        values: Vec<EditValue>,
    ) -> EditTemplate {
        EditTemplate {
            template_id: template_id.into(),
            primitive,
            path: path.into(),
            op,
            values,
        }
    }

    /// Instantiates the template with the value at `index` (ignored when the
    /// template carries no values).
    pub fn instantiate(&self, index: usize) -> Edit {
        let value = self.values.get(index).cloned();
        Edit::single(FieldOp {
            path: self.path.clone(),
            op: self.op,
            value,
        })
        .with_rationale(format!("template {}", self.template_id))
    }

    /// Draws a uniform parameter assignment from the seeded stream.
    pub fn sample(&self, rng: &mut impl Rng) -> Edit {
        if self.values.is_empty() {
            return self.instantiate(0);
        }
        self.instantiate(rng.random_range(0..self.values.len()))
    }

    /// Every concrete edit this template can produce, in value order.
    pub fn concrete_edits(&self) -> Vec<Edit> {
        if self.values.is_empty() {
            return vec![self.instantiate(0)];
        }
        (0..self.values.len()).map(|i| self.instantiate(i)).collect()
    }
}

fn strings_minus(pool: &[&str], current: &str) -> Vec<EditValue> {
    pool.iter()
        .filter(|v| **v != current)
        .map(|v| EditValue::Str(v.to_string()))
        .collect()
}

fn floats_minus(pool: &[f64], current: f64) -> Vec<EditValue> {
    pool.iter()
        .filter(|v| **v != current)
        .map(|v| EditValue::Float(*v))
        .collect()
}

fn uints_minus(pool: &[u64], current: u64) -> Vec<EditValue> {
    pool.iter()
        .filter(|v| **v != current)
        .map(|v| EditValue::Int(*v as i64))
        .collect()
}

fn intelligence_templates(s: &Spec, out: &mut Vec<EditTemplate>) {
    let i = s.intelligence();
    out.push(EditTemplate::new(
        "intelligence.model_swap",
        Primitive::Intelligence,
        "intelligence.model_id",
        OpKind::Set,
        strings_minus(&MODEL_REGISTRY, &i.model_id),
    ));
    out.push(EditTemplate::new(
        "intelligence.temperature",
        Primitive::Intelligence,
        "intelligence.temperature",
        OpKind::Set,
        floats_minus(&TEMPERATURES, i.temperature),
    ));
    out.push(EditTemplate::new(
        "intelligence.top_p",
        Primitive::Intelligence,
        "intelligence.top_p",
        OpKind::Set,
        floats_minus(&TOP_PS, i.top_p),
    ));
    out.push(EditTemplate::new(
        "intelligence.max_tokens",
        Primitive::Intelligence,
        "intelligence.max_tokens",
        OpKind::Set,
        uints_minus(&MAX_TOKENS_CHOICES, i.max_tokens),
    ));
    out.push(EditTemplate::new(
        "intelligence.quantization",
        Primitive::Intelligence,
        "intelligence.quantization",
        OpKind::Set,
        strings_minus(
            &Quantization::ALL.map(Quantization::as_str),
            i.quantization.as_str(),
        ),
    ));
    out.push(EditTemplate::new(
        "intelligence.train_marker",
        Primitive::Intelligence,
        "intelligence.train_marker",
        OpKind::Set,
        strings_minus(&TRAIN_MARKERS, &i.train_marker),
    ));
}

fn engine_templates(s: &Spec, out: &mut Vec<EditTemplate>) {
    let e = s.engine();
    out.push(EditTemplate::new(
        "engine.backend_swap",
        Primitive::Engine,
        "engine.backend",
        OpKind::Set,
        strings_minus(&BACKEND_REGISTRY, &e.backend),
    ));
    out.push(EditTemplate::new(
        "engine.batch_size",
        Primitive::Engine,
        "engine.batch_size",
        OpKind::Set,
        uints_minus(&BATCH_SIZES, e.batch_size),
    ));
    out.push(EditTemplate::new(
        "engine.kv_cache_toggle",
        Primitive::Engine,
        "engine.kv_cache_enabled",
        OpKind::Set,
        vec![EditValue::Bool(!e.kv_cache_enabled)],
    ));
    for (flag, choices) in EXTRA_FLAGS {
        let current = e.extra.get(flag).map(String::as_str).unwrap_or("");
        out.push(EditTemplate::new(
            format!("engine.extra_put.{flag}"),
            Primitive::Engine,
            format!("engine.extra.{flag}"),
            OpKind::MapPut,
            strings_minus(choices, current),
        ));
    }
    for key in e.extra.keys() {
        out.push(EditTemplate::new(
            format!("engine.extra_remove.{key}"),
            Primitive::Engine,
            format!("engine.extra.{key}"),
            OpKind::MapRemove,
            Vec::new(),
        ));
    }
}

fn agent_templates(s: &Spec, out: &mut Vec<EditTemplate>) {
    let a = s.agent();
    out.push(EditTemplate::new(
        "agent.system_prompt",
        Primitive::Agent,
        "agent.system_prompt",
        OpKind::Set,
        strings_minus(&PROMPT_LIBRARY, &a.system_prompt),
    ));
    if a.exemplars.len() < EXEMPLAR_CAP {
        out.push(EditTemplate::new(
            "agent.exemplar_append",
            Primitive::Agent,
            "agent.exemplars",
            OpKind::ListAppend,
            EXEMPLAR_LIBRARY
                .iter()
                .map(|(input, output)| {
                    EditValue::Exemplar(Exemplar {
                        input: input.to_string(),
                        output: output.to_string(),
                    })
                })
                .collect(),
        ));
    }
    if !a.exemplars.is_empty() {
        out.push(EditTemplate::new(
            "agent.exemplar_remove",
            Primitive::Agent,
            "agent.exemplars",
            OpKind::ListRemove,
            (0..a.exemplars.len() as i64).map(EditValue::Int).collect(),
        ));
    }
    out.push(EditTemplate::new(
        "agent.loop_swap",
        Primitive::Agent,
        "agent.loop_type",
        OpKind::Set,
        strings_minus(&LoopType::ALL.map(LoopType::as_str), a.loop_type.as_str()),
    ));
    out.push(EditTemplate::new(
        "agent.max_turns",
        Primitive::Agent,
        "agent.max_turns",
        OpKind::Set,
        uints_minus(&MAX_TURNS_CHOICES, a.max_turns),
    ));
    out.push(EditTemplate::new(
        "agent.tool_strategy",
        Primitive::Agent,
        "agent.tool_strategy",
        OpKind::Set,
        strings_minus(&TOOL_STRATEGIES, &a.tool_strategy),
    ));
}

fn tools_templates(s: &Spec, out: &mut Vec<EditTemplate>) {
    let t = s.tools();
    let addable: Vec<EditValue> = TOOL_REGISTRY
        .iter()
        .filter(|name| !t.enabled_tools.iter().any(|e| e == *name))
        .map(|name| EditValue::Str(name.to_string()))
        .collect();
    if !addable.is_empty() {
        out.push(EditTemplate::new(
            "tools.tool_add",
            Primitive::Tools,
            "tools.enabled_tools",
            OpKind::ListAppend,
            addable,
        ));
    }
    let removable: Vec<EditValue> = t
        .enabled_tools
        .iter()
        .filter(|name| !t.tool_descriptions.contains_key(*name))
        .map(|name| EditValue::Str(name.clone()))
        .collect();
    if !removable.is_empty() {
        out.push(EditTemplate::new(
            "tools.tool_remove",
            Primitive::Tools,
            "tools.enabled_tools",
            OpKind::ListRemove,
            removable,
        ));
    }
    for tool in &t.enabled_tools {
        let current = t.tool_descriptions.get(tool).map(String::as_str).unwrap_or("");
        out.push(EditTemplate::new(
            format!("tools.describe.{tool}"),
            Primitive::Tools,
            format!("tools.tool_descriptions.{tool}"),
            OpKind::MapPut,
            strings_minus(&DESCRIPTION_LIBRARY, current),
        ));
    }
    out.push(EditTemplate::new(
        "tools.memory_swap",
        Primitive::Tools,
        "tools.memory_backend",
        OpKind::Set,
        strings_minus(
            &MemoryBackend::ALL.map(MemoryBackend::as_str),
            t.memory_backend.as_str(),
        ),
    ));
    out.push(EditTemplate::new(
        "tools.cloud_toggle",
        Primitive::Tools,
        "tools.cloud_as_tool",
        OpKind::Set,
        vec![EditValue::Bool(!t.cloud_as_tool)],
    ));
}

/// Enumerates every template for the primitives in `move_space`, in a fixed
/// primitive-major order. Errors on an empty move space.
pub fn enumerate_catalog(
    s: &Spec,
    move_space: &BTreeSet<Primitive>,
) -> Result<Vec<EditTemplate>, EditError> {
    if move_space.is_empty() {
        return Err(EditError::EmptyMoveSpace);
    }
    let mut out = Vec::new();
    if move_space.contains(&Primitive::Intelligence) {
        intelligence_templates(s, &mut out);
    }
    if move_space.contains(&Primitive::Engine) {
        engine_templates(s, &mut out);
    }
    if move_space.contains(&Primitive::Agent) {
        agent_templates(s, &mut out);
    }
    if move_space.contains(&Primitive::Tools) {
        tools_templates(s, &mut out);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::apply;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_primitives() -> BTreeSet<Primitive> {
        Primitive::ALL.into_iter().collect()
    }

    fn one(p: Primitive) -> BTreeSet<Primitive> {
        [p].into_iter().collect()
    }

    fn busy_spec() -> Spec {
        let e = Edit::new(vec![
            FieldOp::list_append("tools.enabled_tools", "think"),
            FieldOp::list_append("tools.enabled_tools", "calc"),
            FieldOp::map_put("tools.tool_descriptions.calc", "Does arithmetic."),
            FieldOp::map_put("engine.extra.num_gpu", "2"),
            FieldOp::list_append(
                "agent.exemplars",
                Exemplar {
                    input: "hi".to_string(),
                    output: "hello".to_string(),
                },
            ),
        ]);
        apply(&Spec::default(), &e).unwrap()
    }

    #[test]
    fn empty_move_space_errors() {
        let err = enumerate_catalog(&Spec::default(), &BTreeSet::new()).unwrap_err();
        assert!(matches!(err, EditError::EmptyMoveSpace));
    }

    #[test]
    fn per_primitive_catalogs_partition_the_full_catalog() {
        for spec in [Spec::default(), busy_spec()] {
            let full = enumerate_catalog(&spec, &all_primitives()).unwrap();
            let mut sum = 0;
            for p in Primitive::ALL {
                let part = enumerate_catalog(&spec, &one(p)).unwrap();
                assert!(part.iter().all(|t| t.primitive == p));
                sum += part.len();
            }
            assert_eq!(sum, full.len());
        }
    }

    #[test]
    fn move_space_enumeration_is_monotone() {
        let spec = busy_spec();
        let full = enumerate_catalog(&spec, &all_primitives()).unwrap();
        for p in Primitive::ALL {
            let part = enumerate_catalog(&spec, &one(p)).unwrap();
            for t in &part {
                assert!(full.contains(t));
            }
        }
    }

    #[test]
    fn every_concrete_edit_applies_cleanly() {
        for spec in [Spec::default(), busy_spec()] {
            let catalog = enumerate_catalog(&spec, &all_primitives()).unwrap();
            for template in &catalog {
                for edit in template.concrete_edits() {
                    apply(&spec, &edit).unwrap_or_else(|err| {
                        panic!("template {} produced invalid edit: {err}", template.template_id)
                    });
                }
            }
        }
    }

    #[test]
    fn sampled_edits_are_valid_and_seeded() {
        let spec = busy_spec();
        let catalog = enumerate_catalog(&spec, &all_primitives()).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for template in &catalog {
            let ea = template.sample(&mut a);
            let eb = template.sample(&mut b);
            assert_eq!(ea, eb);
            apply(&spec, &ea).unwrap();
        }
    }

    #[test]
    fn swap_templates_exclude_the_current_value() {
        let catalog = enumerate_catalog(&Spec::default(), &all_primitives()).unwrap();
        let model = catalog
            .iter()
            .find(|t| t.template_id == "intelligence.model_swap")
            .unwrap();
        assert_eq!(model.values.len(), MODEL_REGISTRY.len() - 1);
        assert!(!model
            .values
            .contains(&EditValue::Str("qwen3.5:9b".to_string())));
    }

    #[test]
    fn default_spec_has_no_removal_templates() {
        let catalog = enumerate_catalog(&Spec::default(), &all_primitives()).unwrap();
        assert!(catalog
            .iter()
            .all(|t| !t.template_id.starts_with("tools.tool_remove")));
        assert!(catalog
            .iter()
            .all(|t| !t.template_id.starts_with("agent.exemplar_remove")));
    }
}
