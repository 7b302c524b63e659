//! Scenario configuration: a TOML tree with `run`, `topology`, per-chain
//! `chain` tables, `workload`/`paired`/`inject` entries, and optional
//! `security` and `summary` sections.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::consensus::{
    ConsensusConfig, PosAccount, DEFAULT_POW_DIFFICULTY_BITS, DEFAULT_POW_NONCE_BUDGET,
};
use crate::format::{CanonicalField, FormatError, FormatSpec};
use crate::propagation::{DEFAULT_POS_SYNC_MULTIPLIER, DEFAULT_SYNC_BLOCK_BUDGET};
use crate::topology::{
    build_topology, BlockchainId, Fraction, TopologyError, TopologyGraph, TopologyKind,
    DEFAULT_AGREEMENT_THRESHOLD, DEFAULT_MAX_OUT_DEGREE,
};

/// Sending rates the automatic workload accepts, in transactions per minute.
/// Zero is allowed and means no workload on that chain.
pub const MIN_RATE_PER_MIN: f64 = 150.0;
pub const MAX_RATE_PER_MIN: f64 = 5000.0;

pub const DEFAULT_DURATION_TICKS: u64 = 600;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TICKS_PER_MINUTE: u64 = 60;
pub const DEFAULT_SYNC_PERIOD_TICKS: u64 = 1;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.10;
pub const DEFAULT_NODE_COUNT: u32 = 3;
pub const DEFAULT_USERS_PER_CHAIN: u32 = 4;
pub const DEFAULT_USER_BALANCE: u64 = 1_000_000;
pub const DEFAULT_POS_ACCOUNT_COUNT: u32 = 16;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Syntactic failure: the file is not a valid config tree.
    #[error("cannot parse scenario config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("[[{section}]] references blockchain {chain}, which is not in the topology")]
    UnknownChain {
        section: &'static str,
        chain: BlockchainId,
    },
    #[error("duplicate [[chain]] entry for blockchain {0}")]
    DuplicateChainEntry(BlockchainId),
    #[error("workload rate {rate} tx/min for blockchain {chain} outside [{MIN_RATE_PER_MIN}, {MAX_RATE_PER_MIN}] (or 0)")]
    RateOutOfRange { chain: BlockchainId, rate: f64 },
    #[error("{0}")]
    BadValue(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

impl ConfigError {
    /// Parse failures exit with status 2; semantic validation with status 1.
    pub fn is_parse_error(&self) -> bool {
        matches!(self, ConfigError::Parse(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    Internal,
    CrossChain,
}

/// Automatic workload: Poisson arrivals on one chain.
#[derive(Debug, Clone)]
pub struct RateWorkload {
    pub chain: BlockchainId,
    pub rate_per_min: f64,
    pub kind: WorkloadKind,
}

/// Two cross-chain transactions injected in the same tick on two chains,
/// each naming the other as its settlement dependency.
#[derive(Debug, Clone)]
pub struct PairedInjection {
    pub tick: u64,
    pub first_chain: BlockchainId,
    pub second_chain: BlockchainId,
    pub first_amount: Option<u64>,
    pub second_amount: Option<u64>,
}

/// One dependency-free cross-chain transaction at a fixed tick.
#[derive(Debug, Clone)]
pub struct SingleInjection {
    pub tick: u64,
    pub chain: BlockchainId,
    pub amount: Option<u64>,
}

/// Designated chains for the sum/difference flow series in the summary.
#[derive(Debug, Clone, Copy)]
pub struct FlowFocus {
    pub hub: BlockchainId,
    pub pair: (BlockchainId, BlockchainId),
}

/// Break probabilities and the chain subsets the security analysis reports.
#[derive(Debug, Clone, Default)]
pub struct SecuritySetup {
    pub probabilities: Vec<(BlockchainId, f64)>,
    pub sets: Vec<Vec<BlockchainId>>,
}

#[derive(Debug, Clone)]
pub struct ChainSetup {
    pub id: BlockchainId,
    pub consensus: ConsensusConfig,
    pub format: FormatSpec,
    pub node_count: u32,
}

/// A fully validated scenario; running it with the same seed twice produces
/// byte-identical metrics.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub topology: TopologyGraph,
    pub selection_accounts: Vec<String>,
    pub agreement_threshold: Fraction,
    pub chains: BTreeMap<BlockchainId, ChainSetup>,
    pub workloads: Vec<RateWorkload>,
    pub paired: Vec<PairedInjection>,
    pub singles: Vec<SingleInjection>,
    pub duration_ticks: u64,
    pub rng_seed: u64,
    pub ticks_per_minute: u64,
    pub sync_period_ticks: u64,
    pub sync_block_budget: u64,
    pub pos_sync_multiplier: u64,
    pub warmup_fraction: f64,
    pub users_per_chain: u32,
    pub user_initial_balance: u64,
    pub summary_focus: Option<FlowFocus>,
    pub security: Option<SecuritySetup>,
}

// ---- raw TOML shapes -------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    run: RawRun,
    topology: RawTopology,
    #[serde(default, rename = "chain")]
    chains: Vec<RawChain>,
    #[serde(default, rename = "workload")]
    workloads: Vec<RawWorkload>,
    #[serde(default, rename = "paired")]
    paired: Vec<RawPaired>,
    #[serde(default, rename = "inject")]
    injects: Vec<RawInject>,
    security: Option<RawSecurity>,
    summary: Option<RawSummary>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    duration_ticks: Option<u64>,
    seed: Option<u64>,
    ticks_per_minute: Option<u64>,
    sync_period_ticks: Option<u64>,
    sync_block_budget: Option<u64>,
    pos_sync_multiplier: Option<u64>,
    warmup_fraction: Option<f64>,
    users_per_chain: Option<u32>,
    user_initial_balance: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    kind: Option<TopologyKind>,
    nodes: Vec<u32>,
    hub: Option<u32>,
    edges: Option<Vec<(u32, u32)>>,
    max_out_degree: Option<usize>,
    selection_accounts: Option<Vec<String>>,
    agreement_threshold: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    id: u32,
    node_count: Option<u32>,
    consensus: Option<RawConsensus>,
    format: Option<RawFormat>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum RawConsensus {
    Pow {
        difficulty_bits: Option<u32>,
        nonce_budget: Option<u64>,
    },
    Pos {
        weight_decrement: Option<u64>,
        accounts: Option<Vec<RawPosAccount>>,
        account_count: Option<u32>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPosAccount {
    address: String,
    asset: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFormat {
    field_order: Option<Vec<CanonicalField>>,
    #[serde(default)]
    field_names: BTreeMap<CanonicalField, String>,
    amount_unit_scale: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    chain: u32,
    rate_per_min: f64,
    kind: Option<WorkloadKind>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaired {
    tick: u64,
    first_chain: u32,
    second_chain: u32,
    first_amount: Option<u64>,
    second_amount: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInject {
    tick: u64,
    chain: u32,
    amount: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSecurity {
    probabilities: Vec<RawProbability>,
    sets: Option<Vec<Vec<u32>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbability {
    chain: u32,
    p: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSummary {
    hub: u32,
    pair: (u32, u32),
}

// ---- conversion ------------------------------------------------------------

impl Scenario {
    /// Parses and validates a scenario. Strong connectivity is deliberately
    /// *not* required here so that the topology validator can load and
    /// diagnose broken topologies; the run entry point enforces it.
    pub fn from_toml(name: &str, text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let nodes: Vec<BlockchainId> = raw.topology.nodes.iter().copied().map(BlockchainId).collect();

        let topology = match (&raw.topology.kind, &raw.topology.edges) {
            (Some(kind), None) => {
                let mut graph =
                    build_topology(*kind, &nodes, raw.topology.hub.map(BlockchainId))?;
                if let Some(cap) = raw.topology.max_out_degree {
                    graph = TopologyGraph::new(graph.nodes(), graph.edges().collect::<Vec<_>>(), cap)?;
                }
                graph
            }
            (None, Some(edges)) => TopologyGraph::new(
                nodes.iter().copied(),
                edges
                    .iter()
                    .map(|(a, b)| (BlockchainId(*a), BlockchainId(*b))),
                raw.topology.max_out_degree.unwrap_or(DEFAULT_MAX_OUT_DEGREE),
            )?,
            (Some(_), Some(_)) => {
                return Err(ConfigError::BadValue(
                    "[topology] takes either kind or edges, not both".to_string(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::BadValue(
                    "[topology] needs a kind or an explicit edge list".to_string(),
                ))
            }
        };

        let agreement_threshold = match &raw.topology.agreement_threshold {
            Some(s) => Fraction::parse(s)?,
            None => DEFAULT_AGREEMENT_THRESHOLD,
        };

        let mut chains: BTreeMap<BlockchainId, ChainSetup> = BTreeMap::new();
        for raw_chain in &raw.chains {
            let id = BlockchainId(raw_chain.id);
            if !topology.contains(id) {
                return Err(ConfigError::UnknownChain { section: "chain", chain: id });
            }
            if chains.contains_key(&id) {
                return Err(ConfigError::DuplicateChainEntry(id));
            }
            chains.insert(id, convert_chain(raw_chain)?);
        }
        for id in topology.nodes() {
            chains.entry(id).or_insert_with(|| default_chain(id));
        }

        let mut workloads = Vec::new();
        for w in &raw.workloads {
            let chain = BlockchainId(w.chain);
            if !topology.contains(chain) {
                return Err(ConfigError::UnknownChain { section: "workload", chain });
            }
            let rate = w.rate_per_min;
            if rate != 0.0 && !(MIN_RATE_PER_MIN..=MAX_RATE_PER_MIN).contains(&rate) {
                return Err(ConfigError::RateOutOfRange { chain, rate });
            }
            workloads.push(RateWorkload {
                chain,
                rate_per_min: rate,
                kind: w.kind.unwrap_or(WorkloadKind::CrossChain),
            });
        }

        let mut paired = Vec::new();
        for p in &raw.paired {
            for raw_id in [p.first_chain, p.second_chain] {
                let chain = BlockchainId(raw_id);
                if !topology.contains(chain) {
                    return Err(ConfigError::UnknownChain { section: "paired", chain });
                }
            }
            if p.first_chain == p.second_chain {
                return Err(ConfigError::BadValue(
                    "paired injection needs two distinct chains".to_string(),
                ));
            }
            paired.push(PairedInjection {
                tick: p.tick,
                first_chain: BlockchainId(p.first_chain),
                second_chain: BlockchainId(p.second_chain),
                first_amount: p.first_amount,
                second_amount: p.second_amount,
            });
        }

        let mut singles = Vec::new();
        for s in &raw.injects {
            let chain = BlockchainId(s.chain);
            if !topology.contains(chain) {
                return Err(ConfigError::UnknownChain { section: "inject", chain });
            }
            singles.push(SingleInjection {
                tick: s.tick,
                chain,
                amount: s.amount,
            });
        }

        let security = match &raw.security {
            None => None,
            Some(sec) => {
                let probabilities: Vec<(BlockchainId, f64)> = sec
                    .probabilities
                    .iter()
                    .map(|p| (BlockchainId(p.chain), p.p))
                    .collect();
                let sets = match &sec.sets {
                    Some(sets) if !sets.is_empty() => sets
                        .iter()
                        .map(|set| set.iter().copied().map(BlockchainId).collect())
                        .collect(),
                    _ => vec![probabilities.iter().map(|(c, _)| *c).collect()],
                };
                Some(SecuritySetup {
                    probabilities,
                    sets,
                })
            }
        };

        let summary_focus = match &raw.summary {
            None => None,
            Some(s) => {
                for raw_id in [s.hub, s.pair.0, s.pair.1] {
                    let chain = BlockchainId(raw_id);
                    if !topology.contains(chain) {
                        return Err(ConfigError::UnknownChain { section: "summary", chain });
                    }
                }
                Some(FlowFocus {
                    hub: BlockchainId(s.hub),
                    pair: (BlockchainId(s.pair.0), BlockchainId(s.pair.1)),
                })
            }
        };

        let warmup_fraction = raw.run.warmup_fraction.unwrap_or(DEFAULT_WARMUP_FRACTION);
        if !(0.0..1.0).contains(&warmup_fraction) {
            return Err(ConfigError::BadValue(format!(
                "warmup_fraction {warmup_fraction} outside [0, 1)"
            )));
        }

        Ok(Scenario {
            name: name.to_string(),
            topology,
            selection_accounts: raw.topology.selection_accounts.clone().unwrap_or_default(),
            agreement_threshold,
            chains,
            workloads,
            paired,
            singles,
            duration_ticks: raw.run.duration_ticks.unwrap_or(DEFAULT_DURATION_TICKS),
            rng_seed: raw.run.seed.unwrap_or(DEFAULT_SEED),
            ticks_per_minute: raw.run.ticks_per_minute.unwrap_or(DEFAULT_TICKS_PER_MINUTE),
            sync_period_ticks: raw
                .run
                .sync_period_ticks
                .unwrap_or(DEFAULT_SYNC_PERIOD_TICKS),
            sync_block_budget: raw
                .run
                .sync_block_budget
                .unwrap_or(DEFAULT_SYNC_BLOCK_BUDGET),
            pos_sync_multiplier: raw
                .run
                .pos_sync_multiplier
                .unwrap_or(DEFAULT_POS_SYNC_MULTIPLIER),
            warmup_fraction,
            users_per_chain: raw.run.users_per_chain.unwrap_or(DEFAULT_USERS_PER_CHAIN),
            user_initial_balance: raw
                .run
                .user_initial_balance
                .unwrap_or(DEFAULT_USER_BALANCE),
            summary_focus,
            security,
        })
    }
}

fn default_chain(id: BlockchainId) -> ChainSetup {
    ChainSetup {
        id,
        consensus: ConsensusConfig::PoW {
            difficulty_bits: DEFAULT_POW_DIFFICULTY_BITS,
            nonce_budget: DEFAULT_POW_NONCE_BUDGET,
        },
        format: FormatSpec::identity(),
        node_count: DEFAULT_NODE_COUNT,
    }
}

fn convert_chain(raw: &RawChain) -> Result<ChainSetup, ConfigError> {
    let id = BlockchainId(raw.id);
    let consensus = match &raw.consensus {
        None => ConsensusConfig::PoW {
            difficulty_bits: DEFAULT_POW_DIFFICULTY_BITS,
            nonce_budget: DEFAULT_POW_NONCE_BUDGET,
        },
        Some(RawConsensus::Pow {
            difficulty_bits,
            nonce_budget,
        }) => ConsensusConfig::PoW {
            difficulty_bits: difficulty_bits.unwrap_or(DEFAULT_POW_DIFFICULTY_BITS),
            nonce_budget: nonce_budget.unwrap_or(DEFAULT_POW_NONCE_BUDGET),
        },
        Some(RawConsensus::Pos {
            weight_decrement,
            accounts,
            account_count,
        }) => {
            let roster: Vec<PosAccount> = match (accounts, account_count) {
                (Some(list), _) if !list.is_empty() => list
                    .iter()
                    .map(|a| PosAccount {
                        address: a.address.clone(),
                        asset: a.asset,
                    })
                    .collect(),
                (_, count) => {
                    // Auto-generated roster: distinct assets, linear in the
                    // account index.
                    let count = count.unwrap_or(DEFAULT_POS_ACCOUNT_COUNT).max(1);
                    (1..=count)
                        .map(|i| PosAccount {
                            address: format!("staker{i:02}@{id}"),
                            asset: i as u64 * 10,
                        })
                        .collect()
                }
            };
            let mean_asset = roster.iter().map(|a| a.asset).sum::<u64>() / roster.len() as u64;
            ConsensusConfig::PoS {
                weight_decrement: weight_decrement.unwrap_or((mean_asset / 4).max(1)),
                accounts: roster,
            }
        }
    };
    let format = match &raw.format {
        None => FormatSpec::identity(),
        Some(raw_format) => FormatSpec::new(
            raw_format
                .field_order
                .clone()
                .unwrap_or_else(|| crate::format::CANONICAL_FIELDS.to_vec()),
            raw_format.field_names.clone(),
            raw_format.amount_unit_scale.unwrap_or(1),
        )?,
    };
    Ok(ChainSetup {
        id,
        consensus,
        format,
        node_count: raw.node_count.unwrap_or(DEFAULT_NODE_COUNT),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [topology]
        kind = "ring"
        nodes = [1, 2, 3]
    "#;

    #[test]
    fn minimal_ring_config_parses_with_defaults() {
        let scenario = Scenario::from_toml("minimal", MINIMAL).unwrap();
        assert_eq!(scenario.topology.node_count(), 3);
        assert_eq!(scenario.duration_ticks, DEFAULT_DURATION_TICKS);
        assert_eq!(scenario.rng_seed, DEFAULT_SEED);
        assert_eq!(scenario.chains.len(), 3);
        assert!(scenario.topology.is_strongly_connected());
        let setup = &scenario.chains[&BlockchainId(1)];
        assert!(matches!(setup.consensus, ConsensusConfig::PoW { .. }));
    }

    #[test]
    fn full_config_round_trips_values() {
        let text = r#"
            [run]
            duration_ticks = 100
            seed = 7
            ticks_per_minute = 30

            [topology]
            kind = "star"
            nodes = [1, 2, 3]
            hub = 1
            selection_accounts = ["sel1", "sel2", "sel3"]
            agreement_threshold = "3/4"

            [[chain]]
            id = 3
            node_count = 5
            consensus = { kind = "pos", account_count = 4, weight_decrement = 11 }

            [[chain]]
            id = 2
            consensus = { kind = "pow", difficulty_bits = 12, nonce_budget = 500 }
            format = { amount_unit_scale = 100, field_names = { amount = "cents" } }

            [[workload]]
            chain = 2
            rate_per_min = 600
            kind = "crosschain"

            [[paired]]
            tick = 5
            first_chain = 2
            second_chain = 3
            first_amount = 7

            [[inject]]
            tick = 9
            chain = 1

            [security]
            probabilities = [{ chain = 1, p = 0.1 }, { chain = 2, p = 0.2 }]

            [summary]
            hub = 1
            pair = [2, 3]
        "#;
        let scenario = Scenario::from_toml("full", text).unwrap();
        assert_eq!(scenario.duration_ticks, 100);
        assert_eq!(scenario.rng_seed, 7);
        assert_eq!(scenario.agreement_threshold, Fraction::new(3, 4).unwrap());
        let pos = &scenario.chains[&BlockchainId(3)];
        assert_eq!(pos.node_count, 5);
        match &pos.consensus {
            ConsensusConfig::PoS {
                weight_decrement,
                accounts,
            } => {
                assert_eq!(*weight_decrement, 11);
                assert_eq!(accounts.len(), 4);
                assert_eq!(accounts[3].address, "staker04@3");
                assert_eq!(accounts[3].asset, 40);
            }
            other => panic!("expected pos, got {other:?}"),
        }
        assert_eq!(
            scenario.chains[&BlockchainId(2)].format.amount_unit_scale(),
            100
        );
        assert_eq!(scenario.workloads.len(), 1);
        assert_eq!(scenario.paired.len(), 1);
        assert_eq!(scenario.paired[0].first_amount, Some(7));
        assert_eq!(scenario.singles.len(), 1);
        let security = scenario.security.as_ref().unwrap();
        assert_eq!(security.sets, vec![vec![BlockchainId(1), BlockchainId(2)]]);
        let focus = scenario.summary_focus.unwrap();
        assert_eq!(focus.hub, BlockchainId(1));
    }

    #[test]
    fn custom_edge_list_topology() {
        let text = r#"
            [topology]
            nodes = [1, 2, 3]
            edges = [[1, 2], [2, 3], [3, 1], [1, 3]]
            max_out_degree = 2
        "#;
        let scenario = Scenario::from_toml("custom", text).unwrap();
        assert_eq!(scenario.topology.edge_count(), 4);
        assert_eq!(scenario.topology.max_out_degree(), 2);
    }

    #[test]
    fn rejects_unknown_chains_and_bad_rates() {
        let bad_workload = format!("{MINIMAL}\n[[workload]]\nchain = 9\nrate_per_min = 600");
        assert!(matches!(
            Scenario::from_toml("x", &bad_workload),
            Err(ConfigError::UnknownChain { section: "workload", .. })
        ));
        let bad_rate = format!("{MINIMAL}\n[[workload]]\nchain = 1\nrate_per_min = 10.0");
        assert!(matches!(
            Scenario::from_toml("x", &bad_rate),
            Err(ConfigError::RateOutOfRange { .. })
        ));
        let zero_rate = format!("{MINIMAL}\n[[workload]]\nchain = 1\nrate_per_min = 0.0");
        assert!(Scenario::from_toml("x", &zero_rate).is_ok());
    }

    #[test]
    fn parse_errors_are_distinguished() {
        let err = Scenario::from_toml("x", "this is not toml [").unwrap_err();
        assert!(err.is_parse_error());
        let err = Scenario::from_toml("x", "[topology]\nnodes = [1, 2]\nkind = \"ring\"\ntypo = 1")
            .unwrap_err();
        assert!(err.is_parse_error(), "unknown fields are parse failures");
        let err = Scenario::from_toml(
            "x",
            "[topology]\nnodes = [1, 2]\nkind = \"ring\"\nedges = [[1, 2]]",
        )
        .unwrap_err();
        assert!(!err.is_parse_error(), "semantic failures map to status 1");
    }

    #[test]
    fn disconnected_topology_still_loads() {
        let text = r#"
            [topology]
            nodes = [1, 2, 3]
            edges = [[1, 2], [1, 3]]
        "#;
        let scenario = Scenario::from_toml("broken", text).unwrap();
        assert!(!scenario.topology.is_strongly_connected());
        assert_eq!(scenario.topology.unreachable_pairs().len(), 4);
    }
}
