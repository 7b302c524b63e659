//! Scenario orchestration: build a world from a scenario, inject workload
//! transactions on the tick clock, advance propagation, settle dependencies,
//! and collect the metrics log.

pub mod config;
pub mod metrics;
pub mod presets;
pub mod summary;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::chain::{AccountState, ChainError, ChainState, Dependency, Transaction, TxKind};
use crate::consensus::ConsensusConfig;
use crate::format::{self, FormatError, FormatId, FormatSpec};
use crate::propagation::{PropagationError, World};
use crate::topology::BlockchainId;

pub use config::{ConfigError, FlowFocus, Scenario, WorkloadKind};
pub use metrics::{BalanceRecord, BlockRecord, FlowSample, InjectionRecord, MetricsLog};
pub use summary::{summarize, Summary};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("scenario needs at least two user accounts per chain, got {0}")]
    TooFewUsers(u32),
}

fn user_address(index: u32, chain: BlockchainId) -> String {
    format!("user{index}@{chain}")
}

fn miner_address(chain: BlockchainId) -> String {
    format!("miner@{chain}")
}

/// Builds the chain states and the world for a scenario. Refuses topologies
/// that are not strongly connected.
pub fn build_world(scenario: &Scenario) -> Result<World, SimError> {
    if scenario.users_per_chain < 2 {
        return Err(SimError::TooFewUsers(scenario.users_per_chain));
    }
    let mut chains = BTreeMap::new();
    let mut specs = BTreeMap::new();
    for (id, setup) in &scenario.chains {
        let mut accounts = BTreeMap::new();
        for i in 0..scenario.users_per_chain {
            accounts.insert(
                user_address(i, *id),
                AccountState {
                    balance: scenario.user_initial_balance,
                    pos_weight: 0,
                },
            );
        }
        accounts.insert(miner_address(*id), AccountState::default());
        if let ConsensusConfig::PoS {
            accounts: roster, ..
        } = &setup.consensus
        {
            for staker in roster {
                accounts.insert(
                    staker.address.clone(),
                    AccountState {
                        balance: staker.asset,
                        pos_weight: staker.asset,
                    },
                );
            }
        }
        chains.insert(
            *id,
            ChainState::new(
                *id,
                setup.consensus.clone(),
                setup.format.clone(),
                setup.node_count,
                miner_address(*id),
                accounts,
            ),
        );
        specs.insert(*id, setup.format.clone());
    }
    let registry = format::registry_for(&scenario.topology, &specs)?;
    let world = World::new(
        scenario.topology.clone(),
        registry,
        chains,
        scenario.sync_period_ticks,
        scenario.sync_block_budget,
        scenario.pos_sync_multiplier,
    )?;
    Ok(world)
}

/// The transactions arriving in one tick: Poisson arrivals per rate workload
/// plus any paired or single injections scheduled for this tick. Pure given
/// the generator state; the caller enqueues the results.
pub fn inject_workload(
    scenario: &Scenario,
    specs: &BTreeMap<BlockchainId, FormatSpec>,
    tick: u64,
    rng: &mut ChaCha8Rng,
    next_seq: &mut u64,
) -> Result<Vec<(BlockchainId, Transaction)>, SimError> {
    let mut out = Vec::new();
    let users = scenario.users_per_chain;

    for workload in &scenario.workloads {
        if workload.rate_per_min <= 0.0 {
            continue;
        }
        let mean = workload.rate_per_min / scenario.ticks_per_minute as f64;
        let poisson = Poisson::new(mean).expect("validated rate");
        let count = poisson.sample(rng) as u64;
        for _ in 0..count {
            let sender_idx = rng.gen_range(0..users);
            let mut receiver_idx = rng.gen_range(0..users - 1);
            if receiver_idx >= sender_idx {
                receiver_idx += 1;
            }
            let amount = rng.gen_range(1..=10);
            let chain = workload.chain;
            let spec = &specs[&chain];
            let seq = bump(next_seq);
            let tx = match workload.kind {
                WorkloadKind::Internal => Transaction::internal(
                    user_address(sender_idx, chain),
                    user_address(receiver_idx, chain),
                    amount,
                    spec,
                    FormatId::for_chain(chain),
                    seq,
                )?,
                WorkloadKind::CrossChain => Transaction::cross_chain(
                    user_address(sender_idx, chain),
                    user_address(receiver_idx, chain),
                    amount,
                    chain,
                    None,
                    spec,
                    FormatId::for_chain(chain),
                    seq,
                )?,
            };
            out.push((chain, tx));
        }
    }

    for paired in &scenario.paired {
        if paired.tick != tick {
            continue;
        }
        let first_amount = match paired.first_amount {
            Some(a) => a,
            None => rng.gen_range(1..=10),
        };
        let second_amount = match paired.second_amount {
            Some(a) => a,
            None => rng.gen_range(1..=10),
        };
        let (a, b) = (paired.first_chain, paired.second_chain);
        let (seq_a, seq_b) = (bump(next_seq), bump(next_seq));
        // Each transaction names the other as its dependency, so both ids
        // must exist before either transaction is assembled.
        let id_a = format::tx_id_for(
            &specs[&a],
            &user_address(0, a),
            &user_address(1, a),
            first_amount,
            true,
            a,
            seq_a,
        )?;
        let id_b = format::tx_id_for(
            &specs[&b],
            &user_address(0, b),
            &user_address(1, b),
            second_amount,
            true,
            b,
            seq_b,
        )?;
        out.push((
            a,
            Transaction {
                tx_id: id_a,
                sender: user_address(0, a),
                receiver: user_address(1, a),
                amount: first_amount,
                kind: TxKind::CrossChain {
                    origin_chain: a,
                    origin_tx_id: id_a,
                    dependency: Some(Dependency { chain: b, tx_id: id_b }),
                },
                format_id: FormatId::for_chain(a),
            },
        ));
        out.push((
            b,
            Transaction {
                tx_id: id_b,
                sender: user_address(0, b),
                receiver: user_address(1, b),
                amount: second_amount,
                kind: TxKind::CrossChain {
                    origin_chain: b,
                    origin_tx_id: id_b,
                    dependency: Some(Dependency { chain: a, tx_id: id_a }),
                },
                format_id: FormatId::for_chain(b),
            },
        ));
    }

    for single in &scenario.singles {
        if single.tick != tick {
            continue;
        }
        let amount = match single.amount {
            Some(a) => a,
            None => rng.gen_range(1..=10),
        };
        let chain = single.chain;
        let tx = Transaction::cross_chain(
            user_address(0, chain),
            user_address(1, chain),
            amount,
            chain,
            None,
            &specs[&chain],
            FormatId::for_chain(chain),
            bump(next_seq),
        )?;
        out.push((chain, tx));
    }

    Ok(out)
}

fn bump(seq: &mut u64) -> u64 {
    let current = *seq;
    *seq += 1;
    current
}

/// Runs the scenario to completion and returns the metrics log.
pub fn run(scenario: &Scenario) -> Result<MetricsLog, SimError> {
    run_with_world(scenario).map(|(log, _)| log)
}

/// Like [`run`], but also hands back the final world so callers can inspect
/// chain states after the run.
pub fn run_with_world(scenario: &Scenario) -> Result<(MetricsLog, World), SimError> {
    let mut world = build_world(scenario)?;
    let specs: BTreeMap<BlockchainId, FormatSpec> = scenario
        .chains
        .iter()
        .map(|(id, setup)| (*id, setup.format.clone()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let mut next_seq = 0u64;
    let mut log = MetricsLog {
        duration_ticks: scenario.duration_ticks,
        chain_ids: scenario.topology.nodes().collect(),
        ..MetricsLog::default()
    };

    for tick in 0..scenario.duration_ticks {
        for (chain, tx) in inject_workload(scenario, &specs, tick, &mut rng, &mut next_seq)? {
            log.injections.push(InjectionRecord {
                tick,
                chain,
                tx_id: tx.tx_id,
            });
            log.injected_total += 1;
            world
                .chain_mut(chain)
                .expect("workload chains validated")
                .enqueue(tx);
        }

        let outcome = world.propagate_tick()?;
        log.events.extend(outcome.events);
        for (chain, change) in outcome.balance_changes {
            log.balances.push(BalanceRecord {
                tick,
                chain,
                account: change.account,
                balance: change.new_balance,
                reason: change.reason,
            });
        }
        for sealed in outcome.blocks_sealed {
            log.blocks.push(BlockRecord {
                tick,
                chain: sealed.chain,
                height: sealed.height,
                interval_ticks: sealed.interval_ticks,
                tx_count: sealed.tx_count as u64,
                crosschain_count: sealed.crosschain_count as u64,
            });
        }
        log.sync_rejections += outcome.sync_rejections;

        for (chain, change) in world.settle_dependencies() {
            log.balances.push(BalanceRecord {
                tick,
                chain,
                account: change.account,
                balance: change.new_balance,
                reason: change.reason,
            });
        }

        for (chain, flow) in outcome.flows {
            log.flows.push(FlowSample {
                tick,
                chain,
                bytes_out: flow.bytes_out,
                bytes_in: flow.bytes_in,
            });
        }
    }

    for chain in world.chains() {
        log.copies_sealed += chain.copies_sealed;
        log.copies_double_confirmed += chain.copies_double_confirmed;
        log.dropped_infeasible += chain.dropped_infeasible;
    }
    Ok((log, world))
}
