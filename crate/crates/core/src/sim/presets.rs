//! Bundled scenario presets, embedded at compile time so the binary runs
//! them without external files.
//!
//! - `s1_router` / `s1_ring`: three proof-of-work chains with equal rates on
//!   a star (hub blockchain 1) or a ring.
//! - `s2_router` / `s2_ring`: the same shapes with blockchain 3 switched to
//!   proof-of-stake.
//! - `fig12_indirect`: a 4-ring with two mutually dependent transactions
//!   injected on the indirectly connected chains 1 and 3.
//! - `fig14_direct`: a 4-ring with one independent transaction per chain, so
//!   nothing acts as a bridge.

use crate::sim::config::{ConfigError, Scenario};

pub const PRESET_NAMES: [&str; 6] = [
    "s1_router",
    "s1_ring",
    "s2_router",
    "s2_ring",
    "fig12_indirect",
    "fig14_direct",
];

/// Raw TOML text of a preset.
pub fn preset_toml(name: &str) -> Option<&'static str> {
    match name {
        "s1_router" => Some(include_str!("../../presets/s1_router.toml")),
        "s1_ring" => Some(include_str!("../../presets/s1_ring.toml")),
        "s2_router" => Some(include_str!("../../presets/s2_router.toml")),
        "s2_ring" => Some(include_str!("../../presets/s2_ring.toml")),
        "fig12_indirect" => Some(include_str!("../../presets/fig12_indirect.toml")),
        "fig14_direct" => Some(include_str!("../../presets/fig14_direct.toml")),
        _ => None,
    }
}

/// Parses a preset into a scenario.
pub fn load_preset(name: &str) -> Result<Scenario, ConfigError> {
    let text = preset_toml(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    Scenario::from_toml(name, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::ConsensusConfig;
    use crate::topology::BlockchainId;

    #[test]
    fn every_preset_parses_and_is_strongly_connected() {
        for name in PRESET_NAMES {
            let scenario = load_preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(
                scenario.topology.is_strongly_connected(),
                "{name} topology must be usable"
            );
            assert!(scenario.security.is_some(), "{name} carries security input");
        }
        assert!(load_preset("nope").is_err());
    }

    #[test]
    fn s2_presets_mix_consensus_kinds() {
        for name in ["s2_router", "s2_ring"] {
            let scenario = load_preset(name).unwrap();
            let kinds: Vec<&str> = scenario
                .chains
                .values()
                .map(|c| c.consensus.kind_name())
                .collect();
            assert_eq!(kinds, ["pow", "pow", "pos"], "{name}");
            match &scenario.chains[&BlockchainId(3)].consensus {
                ConsensusConfig::PoS { accounts, .. } => assert_eq!(accounts.len(), 16),
                other => panic!("{name}: expected pos, got {other:?}"),
            }
        }
    }

    #[test]
    fn router_presets_focus_on_the_hub() {
        for name in ["s1_router", "s2_router"] {
            let scenario = load_preset(name).unwrap();
            let focus = scenario.summary_focus.expect("router presets set focus");
            assert_eq!(focus.hub, BlockchainId(1));
            assert_eq!(scenario.topology.out_degree(BlockchainId(1)), 2);
        }
    }
}
