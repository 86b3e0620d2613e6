//! Bundled scenario documents.

/// `(name, JSON)` for every bundled scenario.
pub const BUNDLED: &[(&str, &str)] = &[
    ("paper-4-1", include_str!("../../../../scenarios/paper-4-1.json")),
    ("paper-4-1-sweep", include_str!("../../../../scenarios/paper-4-1-sweep.json")),
    ("paper-4-2-slab", include_str!("../../../../scenarios/paper-4-2-slab.json")),
    ("paper-4-2-shell", include_str!("../../../../scenarios/paper-4-2-shell.json")),
    ("prop-1-decay", include_str!("../../../../scenarios/prop-1-decay.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{Overrides, Scenario, ScenarioConfig};

    #[test]
    fn every_preset_parses_and_names_itself() {
        for (name, text) in BUNDLED {
            let cfg = ScenarioConfig::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, *name);
            assert!(!cfg.description.is_empty());
        }
        assert!(bundled("nope").is_none());
    }

    #[test]
    fn small_presets_validate() {
        for name in ["paper-4-1", "paper-4-1-sweep", "prop-1-decay"] {
            Scenario::parse(bundled(name).unwrap(), Overrides::default()).unwrap();
        }
    }
}
