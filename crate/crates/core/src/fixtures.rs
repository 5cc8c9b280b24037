//! Scenario files shipped with the crate.

use crate::config::{ScenarioConfig, ScenarioDoc};
use crate::error::ConfigError;

pub const CASE_STUDY: &str = include_str!("../fixtures/case_study.toml");
pub const CLEAN: &str = include_str!("../fixtures/clean.toml");
pub const ATTACK: &str = include_str!("../fixtures/attack.toml");
pub const COMPROMISED_ZO: &str = include_str!("../fixtures/compromised_zo.toml");
pub const COMPROMISED_MN: &str = include_str!("../fixtures/compromised_mn.toml");
pub const COMPROMISED_CO: &str = include_str!("../fixtures/compromised_co.toml");
pub const COMPROMISED_CO_SINGLE: &str = include_str!("../fixtures/compromised_co_single.toml");

/// `(name, toml text)` for every shipped fixture.
pub const ALL: &[(&str, &str)] = &[
    ("case_study", CASE_STUDY),
    ("clean", CLEAN),
    ("attack", ATTACK),
    ("compromised_zo", COMPROMISED_ZO),
    ("compromised_mn", COMPROMISED_MN),
    ("compromised_co", COMPROMISED_CO),
    ("compromised_co_single", COMPROMISED_CO_SINGLE),
];

pub fn text(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let text = text(name).ok_or_else(|| ConfigError::invalid("fixture", format!("no fixture named {name}")))?;
    ScenarioConfig::from_toml_str(text)
}

pub fn doc(name: &str) -> Result<ScenarioDoc, ConfigError> {
    let text = text(name).ok_or_else(|| ConfigError::invalid("fixture", format!("no fixture named {name}")))?;
    ScenarioDoc::parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_parses() {
        for (name, _) in ALL {
            let cfg = load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg.name, *name);
            assert!(cfg.seed().is_ok());
        }
    }
}
