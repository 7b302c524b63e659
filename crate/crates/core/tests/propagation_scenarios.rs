//! World-level propagation properties on whole scenarios: eventual total
//! propagation on arbitrary strongly connected topologies, bridge relaying,
//! ledger conservation, and mixed-consensus rings.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use xchain_core::chain::TxId;
use xchain_core::propagation::PropagationEvent;
use xchain_core::security::confirmation_depth;
use xchain_core::sim::{self, Scenario};
use xchain_core::topology::BlockchainId;

fn scenario(text: &str) -> Scenario {
    Scenario::from_toml("test", text).unwrap()
}

fn chain_block(id: u32, budget: u64) -> String {
    format!(
        "[[chain]]\nid = {id}\nconsensus = {{ kind = \"pow\", difficulty_bits = 8, nonce_budget = {budget} }}\n"
    )
}

/// Scenario text for an arbitrary edge list with one cross-chain injection
/// per entry of `inject_on`.
fn custom_scenario(
    nodes: &[u32],
    edges: &[(u32, u32)],
    inject_on: &[u32],
    duration: u64,
) -> String {
    let mut text = String::from("[run]\nseed = 9\n");
    text.push_str(&format!("duration_ticks = {duration}\n"));
    text.push_str("[topology]\n");
    text.push_str(&format!(
        "nodes = [{}]\n",
        nodes
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    ));
    text.push_str(&format!(
        "edges = [{}]\n",
        edges
            .iter()
            .map(|(a, b)| format!("[{a}, {b}]"))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    text.push_str(&format!("max_out_degree = {}\n", nodes.len()));
    for id in nodes {
        text.push_str(&chain_block(*id, 300));
    }
    for (i, id) in inject_on.iter().enumerate() {
        text.push_str(&format!("[[inject]]\ntick = {i}\nchain = {id}\n"));
    }
    text
}

fn events_by_tx(events: &[PropagationEvent]) -> BTreeMap<TxId, Vec<PropagationEvent>> {
    let mut map: BTreeMap<TxId, Vec<PropagationEvent>> = BTreeMap::new();
    for e in events {
        map.entry(e.origin_tx_id).or_default().push(*e);
    }
    map
}

#[test]
fn bridge_blockchain_relays_for_indirectly_connected_chains() {
    // Six blockchains: 1..=5 carry their own cross-chain transactions, 6 has
    // none of its own and only closes the cycle. Everything still reaches
    // every chain, including the bridge.
    let nodes = [1, 2, 3, 4, 5, 6];
    let edges = [(1, 2), (2, 6), (6, 3), (3, 4), (4, 5), (5, 1)];
    let text = custom_scenario(&nodes, &edges, &[1, 2, 3, 4, 5], 200);
    let s = scenario(&text);
    let (log, world) = sim::run_with_world(&s).unwrap();

    assert_eq!(log.injected_total, 5);
    for record in &log.injections {
        assert_eq!(confirmation_depth(&log.events, record.tx_id), 6);
    }
    // The bridge sealed all five foreign transactions despite having no
    // workload of its own.
    let bridge = world.chain(BlockchainId(6)).unwrap();
    assert_eq!(bridge.sealed_index().len(), 5);
    assert_eq!(bridge.copies_sealed, 5);
    assert_eq!(bridge.copies_double_confirmed, 5);
}

#[test]
fn ledger_conservation_holds_on_every_chain_of_a_run() {
    let text = r#"
        [run]
        duration_ticks = 120
        seed = 3

        [topology]
        kind = "ring"
        nodes = [1, 2, 3]

        [[chain]]
        id = 1
        consensus = { kind = "pow", difficulty_bits = 8, nonce_budget = 300 }
        [[chain]]
        id = 2
        consensus = { kind = "pow", difficulty_bits = 8, nonce_budget = 300 }
        [[chain]]
        id = 3
        consensus = { kind = "pos", account_count = 8 }

        [[workload]]
        chain = 1
        rate_per_min = 300

        [[workload]]
        chain = 3
        rate_per_min = 300

        [[paired]]
        tick = 4
        first_chain = 1
        second_chain = 2
    "#;
    let s = scenario(text);
    let (log, world) = sim::run_with_world(&s).unwrap();
    assert!(log.injected_total > 0);
    for chain in world.chains() {
        let (balances, escrow, minted) = chain.supply();
        assert_eq!(
            balances + escrow,
            chain.initial_supply + minted,
            "chain {}: settlement only moves value; rewards are the only mint",
            chain.chain_id
        );
        // The maintained cross-chain index matches a full block scan.
        assert_eq!(&chain.rebuild_sealed_index(), chain.sealed_index());
        chain.verify_chain().unwrap();
    }
}

#[test]
fn mixed_consensus_ring_propagates_in_both_kinds() {
    let text = r#"
        [run]
        duration_ticks = 100
        seed = 4

        [topology]
        kind = "ring"
        nodes = [1, 2]

        [[chain]]
        id = 1
        consensus = { kind = "pow", difficulty_bits = 8, nonce_budget = 300 }
        [[chain]]
        id = 2
        consensus = { kind = "pos", account_count = 4 }

        [[inject]]
        tick = 0
        chain = 1
        [[inject]]
        tick = 1
        chain = 2
    "#;
    let s = scenario(text);
    let (log, world) = sim::run_with_world(&s).unwrap();
    for record in &log.injections {
        assert_eq!(confirmation_depth(&log.events, record.tx_id), 2);
    }
    for chain in world.chains() {
        assert_eq!(chain.copies_sealed, 1);
        assert_eq!(chain.copies_double_confirmed, 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// On any strongly connected topology of at most 6 chains, every
    /// injected cross-chain transaction is sealed on every chain, within a
    /// bound scaled from the diameter and the worst observed block interval.
    #[test]
    fn eventual_total_propagation(
        n in 2u32..=6,
        extra_edges in proptest::collection::vec((0u32..6, 0u32..6), 0..6),
        inject_count in 1usize..=3,
    ) {
        let nodes: Vec<u32> = (1..=n).collect();
        // A ring base guarantees strong connectivity; extra edges only add
        // shortcuts.
        let mut edges: BTreeSet<(u32, u32)> = nodes
            .iter()
            .map(|&a| (a, a % n + 1))
            .collect();
        for (a, b) in extra_edges {
            let (a, b) = (a % n + 1, b % n + 1);
            if a != b {
                edges.insert((a, b));
            }
        }
        let edges: Vec<(u32, u32)> = edges.into_iter().collect();
        let inject_on: Vec<u32> = (0..inject_count).map(|i| (i as u32) % n + 1).collect();
        let duration = 400;
        let s = scenario(&custom_scenario(&nodes, &edges, &inject_on, duration));
        prop_assert!(s.topology.is_strongly_connected());
        let diameter = s.topology.diameter().unwrap() as u64;
        let (log, _world) = sim::run_with_world(&s).unwrap();

        let by_tx = events_by_tx(&log.events);
        prop_assert_eq!(by_tx.len(), inject_count);
        let max_interval = log.blocks.iter().map(|b| b.interval_ticks).max().unwrap_or(1).max(1);
        let bound = diameter * (s.sync_period_ticks + max_interval) * 4;
        let inject_ticks: BTreeMap<TxId, u64> =
            log.injections.iter().map(|r| (r.tx_id, r.tick)).collect();
        for (tx, events) in &by_tx {
            let chains: BTreeSet<BlockchainId> = events.iter().map(|e| e.sealed_on).collect();
            prop_assert_eq!(chains.len() as u32, n, "transaction must reach every chain");
            let last = events.iter().map(|e| e.tick).max().unwrap();
            let injected = inject_ticks[tx];
            prop_assert!(
                last - injected <= bound,
                "latency {} exceeded bound {} (diameter {}, max interval {})",
                last - injected, bound, diameter, max_interval
            );
            // Each hop takes at least one tick: the hop count lower-bounds
            // the seal delay from the origin seal.
            let origin_seal = events
                .iter()
                .find(|e| e.hop_count == 0)
                .expect("origin seal present")
                .tick;
            for e in events {
                prop_assert!(
                    e.tick >= origin_seal + e.hop_count as u64,
                    "chain {} sealed at {} but is {} hops from the origin sealed at {}",
                    e.sealed_on, e.tick, e.hop_count, origin_seal
                );
            }
        }
        prop_assert_eq!(log.exactly_once_violations(), 0);
    }
}
