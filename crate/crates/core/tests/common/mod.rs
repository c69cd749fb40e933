//! Shared proptest strategies for the integration property suites.

use std::collections::BTreeMap;

use proptest::prelude::*;

use specforge_core::spec::{
    AgentSlot, Budget, EngineSlot, Exemplar, GateConfig, IntelligenceSlot, LearningPolicy,
    LearningSlot, LoopType, MemoryBackend, Quantization, Spec, SpecSlots, ToolsMemorySlot,
    EXEMPLAR_CAP,
};

/// Strings that stress canonical TOML escaping: quotes, backslashes,
/// control characters, and non-ASCII text all appear.
pub fn arb_text() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        "[ -~]{0,24}",
        Just("line\nbreak \"quoted\" back\\slash\ttab".to_string()),
        Just("ünïcode 🔍 text".to_string()),
    ]
}

fn arb_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_.:-]{0,11}"
}

fn arb_intelligence() -> impl Strategy<Value = IntelligenceSlot> {
    (
        arb_name(),
        0.0..=2.0f64,
        0.01..=1.0f64,
        1u64..=32_768,
        prop::sample::select(Quantization::ALL.to_vec()),
        prop_oneof![Just(String::new()), "[a-z]{2,6}"],
    )
        .prop_map(
            |(model_id, temperature, top_p, max_tokens, quantization, train_marker)| {
                IntelligenceSlot {
                    model_id,
                    temperature,
                    top_p,
                    max_tokens,
                    quantization,
                    train_marker,
                }
            },
        )
}

fn arb_engine() -> impl Strategy<Value = EngineSlot> {
    (
        arb_name(),
        1u64..=64,
        any::<bool>(),
        prop::collection::btree_map("[a-z_]{1,8}", arb_text(), 0..4),
    )
        .prop_map(|(backend, batch_size, kv_cache_enabled, extra)| EngineSlot {
            backend,
            batch_size,
            kv_cache_enabled,
            extra,
        })
}

fn arb_agent() -> impl Strategy<Value = AgentSlot> {
    (
        prop::sample::select(LoopType::ALL.to_vec()),
        arb_text(),
        prop::collection::vec((arb_text(), arb_text()), 0..=EXEMPLAR_CAP),
        1u64..=64,
        "[a-z]{1,8}",
    )
        .prop_map(|(loop_type, system_prompt, exemplars, max_turns, tool_strategy)| {
            AgentSlot {
                loop_type,
                system_prompt,
                exemplars: exemplars
                    .into_iter()
                    .map(|(input, output)| Exemplar { input, output })
                    .collect(),
                max_turns,
                tool_strategy,
            }
        })
}

fn arb_tools() -> impl Strategy<Value = ToolsMemorySlot> {
    (
        prop::collection::btree_set("[a-z_]{1,8}", 0..5),
        prop::collection::vec((any::<bool>(), arb_text()), 5),
        prop::sample::select(MemoryBackend::ALL.to_vec()),
        any::<bool>(),
    )
        .prop_map(|(tools, descriptions, memory_backend, cloud_as_tool)| {
            let enabled_tools: Vec<String> = tools.into_iter().collect();
            let mut tool_descriptions = BTreeMap::new();
            for (tool, (include, text)) in enabled_tools.iter().zip(descriptions) {
                if include {
                    tool_descriptions.insert(tool.clone(), text);
                }
            }
            ToolsMemorySlot {
                enabled_tools,
                tool_descriptions,
                memory_backend,
                cloud_as_tool,
            }
        })
}

fn arb_learning() -> impl Strategy<Value = LearningSlot> {
    (
        any::<bool>(),
        prop::sample::select(vec![
            LearningPolicy::SpecSearch,
            LearningPolicy::Evolutionary,
            LearningPolicy::SingleComponent,
        ]),
        0.0..=1.0f64,
        1u32..=20,
        0u64..=100_000,
        0u64..=1_000_000,
    )
        .prop_map(
            |(enabled, policy, epsilon, stagnation_k, max_proposals, max_task_executions)| {
                LearningSlot {
                    enabled,
                    policy: if enabled { policy } else { LearningPolicy::None },
                    gate: GateConfig {
                        epsilon,
                        stagnation_k,
                    },
                    budget: Budget {
                        max_proposals,
                        max_task_executions,
                    },
                    ..LearningSlot::default()
                }
            },
        )
}

/// A fully random valid spec; every generated value passes slot validation
/// by construction.
pub fn arb_spec() -> impl Strategy<Value = Spec> {
    (
        "[a-z][a-z0-9-]{0,7}",
        1u32..=9,
        arb_intelligence(),
        arb_engine(),
        arb_agent(),
        arb_tools(),
        arb_learning(),
    )
        .prop_map(|(spec_id, version, intelligence, engine, agent, tools, learning)| {
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
            .expect("strategy only generates valid slots")
        })
}
