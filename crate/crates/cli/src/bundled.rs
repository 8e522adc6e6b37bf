//! Configs compiled into the binary. Pass `--config bundled:<name>` to use one.

use torsion_sn::params::Config;
use torsion_sn::{ConfigError, Result};

pub const APPARATUS: &str = include_str!("../configs/apparatus.toml");
pub const QUADRATIC_UPGRADE: &str = include_str!("../configs/quadratic_upgrade.toml");
pub const NONQUADRATIC_UPGRADE: &str = include_str!("../configs/nonquadratic_upgrade.toml");
pub const DESK: &str = include_str!("../configs/desk.toml");

pub const ALL: &[(&str, &str)] = &[
    ("apparatus", APPARATUS),
    ("quadratic_upgrade", QUADRATIC_UPGRADE),
    ("nonquadratic_upgrade", NONQUADRATIC_UPGRADE),
    ("desk", DESK),
];

pub fn text(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parse a bundled config, optionally with extra layers on top.
pub fn config(name: &str, overrides: &[&str]) -> Result<Config> {
    let base = text(name).ok_or_else(|| ConfigError::Read { path: format!("bundled:{name}"), reason: "no such bundled config".into() })?;
    let mut layers = vec![base];
    layers.extend_from_slice(overrides);
    Config::parse_layers(&layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_config_parses() {
        for (name, _) in ALL {
            config(name, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }
}
