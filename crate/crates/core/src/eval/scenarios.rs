//! Bundled simulated scenarios.

use crate::error::{Error, Result};
use crate::eval::config::RunConfig;

const SOURCES: [(&str, &str); 5] = [
    ("dropout", include_str!("../../scenarios/dropout.toml")),
    ("fast_curve", include_str!("../../scenarios/fast_curve.toml")),
    ("figure_eight", include_str!("../../scenarios/figure_eight.toml")),
    ("hover", include_str!("../../scenarios/hover.toml")),
    ("straight_line", include_str!("../../scenarios/straight_line.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

/// TOML source of a bundled scenario.
pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<RunConfig> {
    let src = source(name).ok_or_else(|| {
        Error::Config(format!("unknown scenario {name:?}; known: {}", names().collect::<Vec<_>>().join(", ")))
    })?;
    RunConfig::from_toml(src)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_bundled_scenarios_parse() {
        for name in names() {
            let cfg = load(name).unwrap();
            assert_eq!(cfg.name, name);
        }
        assert!(load("nope").is_err());
    }
}
