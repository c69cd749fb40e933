//! Canonical serialization and diffing.
//!
//! The canonical TOML form is the identity layer of the whole system: the
//! content hash is SHA-256 over the slot section of this exact byte stream,
//! so the emitter is hand-rolled rather than delegated to a generic
//! serializer. Rules: tables appear in domain order (intelligence, engine,
//! agent, tools, learning), scalar keys inside each table are sorted
//! lexicographically and precede subtables (also sorted), maps are emitted as
//! sorted inline tables, strings are escaped basic strings, floats use the
//! shortest round-trip decimal form, and the stream is UTF-8 with `\n` line
//! endings.

use std::collections::BTreeSet;

use serde_json::{json, Value as Json};

use super::{Spec, SpecSlots};

/// Renders a float in its shortest round-trip decimal form, with a decimal
/// point forced so the token stays a TOML float (`1` becomes `1.0`).
pub(crate) fn render_float(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains('E') {
        s
    } else {
        format!("{s}.0")
    }
}

fn escape_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn is_bare_key(key: &str) -> bool {
    !key.is_empty()
        && key
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn render_key(key: &str) -> String {
    if is_bare_key(key) {
        key.to_string()
    } else {
        escape_str(key)
    }
}

fn render_str_array(items: &[String]) -> String {
    let body: Vec<String> = items.iter().map(|s| escape_str(s)).collect();
    format!("[{}]", body.join(", "))
}

fn render_inline_map<'a>(entries: impl Iterator<Item = (&'a String, &'a String)>) -> String {
    let body: Vec<String> = entries
        .map(|(k, v)| format!("{} = {}", render_key(k), escape_str(v)))
        .collect();
    if body.is_empty() {
        "{}".to_string()
    } else {
        format!("{{ {} }}", body.join(", "))
    }
}

fn render_exemplars(slots: &SpecSlots) -> String {
    let body: Vec<String> = slots
        .agent
        .exemplars
        .iter()
        .map(|e| {
            format!(
                "{{ input = {}, output = {} }}",
                escape_str(&e.input),
                escape_str(&e.output)
            )
        })
        .collect();
    format!("[{}]", body.join(", "))
}

/// Canonical serialization of the five slots alone; this is the hashed
/// region.
pub(crate) fn slots_toml(s: &SpecSlots) -> String {
    let mut out = String::new();

    out.push_str("[intelligence]\n");
    out.push_str(&format!("max_tokens = {}\n", s.intelligence.max_tokens));
    out.push_str(&format!(
        "model_id = {}\n",
        escape_str(&s.intelligence.model_id)
    ));
    out.push_str(&format!(
        "quantization = {}\n",
        escape_str(s.intelligence.quantization.as_str())
    ));
    out.push_str(&format!(
        "temperature = {}\n",
        render_float(s.intelligence.temperature)
    ));
    out.push_str(&format!("top_p = {}\n", render_float(s.intelligence.top_p)));
    out.push_str(&format!(
        "train_marker = {}\n",
        escape_str(&s.intelligence.train_marker)
    ));

    out.push_str("\n[engine]\n");
    out.push_str(&format!("backend = {}\n", escape_str(&s.engine.backend)));
    out.push_str(&format!("batch_size = {}\n", s.engine.batch_size));
    out.push_str(&format!(
        "extra = {}\n",
        render_inline_map(s.engine.extra.iter())
    ));
    out.push_str(&format!(
        "kv_cache_enabled = {}\n",
        s.engine.kv_cache_enabled
    ));

    out.push_str("\n[agent]\n");
    out.push_str(&format!("exemplars = {}\n", render_exemplars(s)));
    out.push_str(&format!(
        "loop_type = {}\n",
        escape_str(s.agent.loop_type.as_str())
    ));
    out.push_str(&format!("max_turns = {}\n", s.agent.max_turns));
    out.push_str(&format!(
        "system_prompt = {}\n",
        escape_str(&s.agent.system_prompt)
    ));
    out.push_str(&format!(
        "tool_strategy = {}\n",
        escape_str(&s.agent.tool_strategy)
    ));

    out.push_str("\n[tools]\n");
    out.push_str(&format!("cloud_as_tool = {}\n", s.tools.cloud_as_tool));
    out.push_str(&format!(
        "enabled_tools = {}\n",
        render_str_array(&s.tools.enabled_tools)
    ));
    out.push_str(&format!(
        "memory_backend = {}\n",
        escape_str(s.tools.memory_backend.as_str())
    ));
    out.push_str(&format!(
        "tool_descriptions = {}\n",
        render_inline_map(s.tools.tool_descriptions.iter())
    ));

    let w = &s.learning.reward_weights;
    out.push_str("\n[learning]\n");
    out.push_str(&format!("enabled = {}\n", s.learning.enabled));
    out.push_str(&format!(
        "policy = {}\n",
        escape_str(s.learning.policy.as_str())
    ));
    out.push_str(&format!(
        "reward_weights = [{}, {}, {}, {}]\n",
        render_float(w.alpha),
        render_float(w.beta),
        render_float(w.gamma),
        render_float(w.delta)
    ));

    out.push_str("\n[learning.budget]\n");
    out.push_str(&format!(
        "max_proposals = {}\n",
        s.learning.budget.max_proposals
    ));
    out.push_str(&format!(
        "max_task_executions = {}\n",
        s.learning.budget.max_task_executions
    ));

    out.push_str("\n[learning.gate]\n");
    out.push_str(&format!(
        "epsilon = {}\n",
        render_float(s.learning.gate.epsilon)
    ));
    out.push_str(&format!("stagnation_k = {}\n", s.learning.gate.stagnation_k));

    out
}

/// Canonical TOML form of a spec. Byte-identical for equal content no matter
/// how the spec was built; `parse(canonical_toml(s))` round-trips exactly.
pub fn canonical_toml(spec: &Spec) -> String {
    format!(
        "spec_id = {}\nversion = {}\n\n{}",
        escape_str(spec.spec_id()),
        spec.version(),
        slots_toml(spec.slots())
    )
}

/// JSON mirror of the canonical form. Keys serialize sorted, so the byte
/// stream is deterministic; this is the shape sent to remote proposers.
pub fn spec_to_json(spec: &Spec) -> Json {
    let s = spec.slots();
    let w = &s.learning.reward_weights;
    json!({
        "spec_id": spec.spec_id(),
        "version": spec.version(),
        "intelligence": {
            "max_tokens": s.intelligence.max_tokens,
            "model_id": s.intelligence.model_id,
            "quantization": s.intelligence.quantization.as_str(),
            "temperature": s.intelligence.temperature,
            "top_p": s.intelligence.top_p,
            "train_marker": s.intelligence.train_marker,
        },
        "engine": {
            "backend": s.engine.backend,
            "batch_size": s.engine.batch_size,
            "extra": s.engine.extra,
            "kv_cache_enabled": s.engine.kv_cache_enabled,
        },
        "agent": {
            "exemplars": s.agent.exemplars,
            "loop_type": s.agent.loop_type.as_str(),
            "max_turns": s.agent.max_turns,
            "system_prompt": s.agent.system_prompt,
            "tool_strategy": s.agent.tool_strategy,
        },
        "tools": {
            "cloud_as_tool": s.tools.cloud_as_tool,
            "enabled_tools": s.tools.enabled_tools,
            "memory_backend": s.tools.memory_backend.as_str(),
            "tool_descriptions": s.tools.tool_descriptions,
        },
        "learning": {
            "enabled": s.learning.enabled,
            "policy": s.learning.policy.as_str(),
            "reward_weights": [w.alpha, w.beta, w.gamma, w.delta],
            "budget": {
                "max_proposals": s.learning.budget.max_proposals,
                "max_task_executions": s.learning.budget.max_task_executions,
            },
            "gate": {
                "epsilon": s.learning.gate.epsilon,
                "stagnation_k": s.learning.gate.stagnation_k,
            },
        },
    })
}

/// One differing field between two specs, values rendered canonically.
/// `before`/`after` are `None` where a map key is absent on that side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDiff {
    pub path: String,
    pub before: Option<String>,
    pub after: Option<String>,
}

fn push_scalar(out: &mut Vec<FieldDiff>, path: &str, a: String, b: String) {
    if a != b {
        out.push(FieldDiff {
            path: path.to_string(),
            before: Some(a),
            after: Some(b),
        });
    }
}

fn push_map_keys(
    out: &mut Vec<FieldDiff>,
    prefix: &str,
    a: &std::collections::BTreeMap<String, String>,
    b: &std::collections::BTreeMap<String, String>,
) {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    for key in keys {
        let before = a.get(key);
        let after = b.get(key);
        if before != after {
            out.push(FieldDiff {
                path: format!("{prefix}.{key}"),
                before: before.map(|v| escape_str(v)),
                after: after.map(|v| escape_str(v)),
            });
        }
    }
}

/// Field-level diff in canonical field order. Scalars diff at their leaf
/// path, lists as one entry for the whole list, and maps per key, matching
/// the paths edit operations use.
pub fn diff_specs(a: &Spec, b: &Spec) -> Vec<FieldDiff> {
    let (x, y) = (a.slots(), b.slots());
    let mut out = Vec::new();

    push_scalar(
        &mut out,
        "intelligence.max_tokens",
        x.intelligence.max_tokens.to_string(),
        y.intelligence.max_tokens.to_string(),
    );
    push_scalar(
        &mut out,
        "intelligence.model_id",
        escape_str(&x.intelligence.model_id),
        escape_str(&y.intelligence.model_id),
    );
    push_scalar(
        &mut out,
        "intelligence.quantization",
        x.intelligence.quantization.to_string(),
        y.intelligence.quantization.to_string(),
    );
    push_scalar(
        &mut out,
        "intelligence.temperature",
        render_float(x.intelligence.temperature),
        render_float(y.intelligence.temperature),
    );
    push_scalar(
        &mut out,
        "intelligence.top_p",
        render_float(x.intelligence.top_p),
        render_float(y.intelligence.top_p),
    );
    push_scalar(
        &mut out,
        "intelligence.train_marker",
        escape_str(&x.intelligence.train_marker),
        escape_str(&y.intelligence.train_marker),
    );

    push_scalar(
        &mut out,
        "engine.backend",
        escape_str(&x.engine.backend),
        escape_str(&y.engine.backend),
    );
    push_scalar(
        &mut out,
        "engine.batch_size",
        x.engine.batch_size.to_string(),
        y.engine.batch_size.to_string(),
    );
    push_map_keys(&mut out, "engine.extra", &x.engine.extra, &y.engine.extra);
    push_scalar(
        &mut out,
        "engine.kv_cache_enabled",
        x.engine.kv_cache_enabled.to_string(),
        y.engine.kv_cache_enabled.to_string(),
    );

    push_scalar(
        &mut out,
        "agent.exemplars",
        render_exemplars(x),
        render_exemplars(y),
    );
    push_scalar(
        &mut out,
        "agent.loop_type",
        x.agent.loop_type.to_string(),
        y.agent.loop_type.to_string(),
    );
    push_scalar(
        &mut out,
        "agent.max_turns",
        x.agent.max_turns.to_string(),
        y.agent.max_turns.to_string(),
    );
    push_scalar(
        &mut out,
        "agent.system_prompt",
        escape_str(&x.agent.system_prompt),
        escape_str(&y.agent.system_prompt),
    );
    push_scalar(
        &mut out,
        "agent.tool_strategy",
        escape_str(&x.agent.tool_strategy),
        escape_str(&y.agent.tool_strategy),
    );

    push_scalar(
        &mut out,
        "tools.cloud_as_tool",
        x.tools.cloud_as_tool.to_string(),
        y.tools.cloud_as_tool.to_string(),
    );
    push_scalar(
        &mut out,
        "tools.enabled_tools",
        render_str_array(&x.tools.enabled_tools),
        render_str_array(&y.tools.enabled_tools),
    );
    push_scalar(
        &mut out,
        "tools.memory_backend",
        x.tools.memory_backend.to_string(),
        y.tools.memory_backend.to_string(),
    );
    push_map_keys(
        &mut out,
        "tools.tool_descriptions",
        &x.tools.tool_descriptions,
        &y.tools.tool_descriptions,
    );

    push_scalar(
        &mut out,
        "learning.enabled",
        x.learning.enabled.to_string(),
        y.learning.enabled.to_string(),
    );
    push_scalar(
        &mut out,
        "learning.policy",
        x.learning.policy.to_string(),
        y.learning.policy.to_string(),
    );
    let render_weights = |s: &SpecSlots| {
        let w = &s.learning.reward_weights;
        format!(
            "[{}, {}, {}, {}]",
            render_float(w.alpha),
            render_float(w.beta),
            render_float(w.gamma),
            render_float(w.delta)
        )
    };
    push_scalar(
        &mut out,
        "learning.reward_weights",
        render_weights(x),
        render_weights(y),
    );
    push_scalar(
        &mut out,
        "learning.budget.max_proposals",
        x.learning.budget.max_proposals.to_string(),
        y.learning.budget.max_proposals.to_string(),
    );
    push_scalar(
        &mut out,
        "learning.budget.max_task_executions",
        x.learning.budget.max_task_executions.to_string(),
        y.learning.budget.max_task_executions.to_string(),
    );
    push_scalar(
        &mut out,
        "learning.gate.epsilon",
        render_float(x.learning.gate.epsilon),
        render_float(y.learning.gate.epsilon),
    );
    push_scalar(
        &mut out,
        "learning.gate.stagnation_k",
        x.learning.gate.stagnation_k.to_string(),
        y.learning.gate.stagnation_k.to_string(),
    );

    out
}
