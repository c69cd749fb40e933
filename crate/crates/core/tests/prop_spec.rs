//! Round-trip and hash-stability properties of the canonical spec forms.

mod common;

use proptest::prelude::*;

use specforge_core::spec::{canonical_toml, parse_spec_json, parse_spec_toml, spec_to_json};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// parse . serialize . parse is the identity, including the content hash.
    #[test]
    fn toml_round_trip_preserves_content(spec in common::arb_spec()) {
        let text = canonical_toml(&spec);
        let back = parse_spec_toml(&text).expect("canonical form parses");
        prop_assert_eq!(back.content_hash(), spec.content_hash());
        prop_assert_eq!(back.slots(), spec.slots());
        prop_assert_eq!(back.spec_id(), spec.spec_id());
        prop_assert_eq!(back.version(), spec.version());
    }

    /// Serialization is a fixed point: one round trip makes no further
    /// byte-level difference.
    #[test]
    fn canonical_toml_is_stable(spec in common::arb_spec()) {
        let once = canonical_toml(&spec);
        let twice = canonical_toml(&parse_spec_toml(&once).expect("parses"));
        prop_assert_eq!(once, twice);
    }

    /// The JSON mirror round-trips with the same hash as the TOML form.
    #[test]
    fn json_round_trip_preserves_content(spec in common::arb_spec()) {
        let text = spec_to_json(&spec).to_string();
        let back = parse_spec_json(&text).expect("canonical JSON parses");
        prop_assert_eq!(back.content_hash(), spec.content_hash());
        prop_assert_eq!(back.slots(), spec.slots());
    }

    /// The hash covers slots only: renaming or re-versioning a spec never
    /// changes it, and equal slots always hash equally.
    #[test]
    fn hash_ignores_identity(spec in common::arb_spec()) {
        let renamed = specforge_core::spec::Spec::with_identity(
            "other-id",
            spec.version() + 1,
            spec.slots().clone(),
        )
        .expect("same slots stay valid");
        prop_assert_eq!(renamed.content_hash(), spec.content_hash());
    }
}
