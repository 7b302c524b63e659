//! Confirmation-based propagation between directly connected blockchains,
//! iterated over the topology.
//!
//! Per edge and sync period, the observer pulls the source's new blocks,
//! verifies them under the *source's* consensus, filters out the cross-chain
//! transactions, translates them into its own format, and queues them for
//! sealing under its *own* consensus. A copy sealed this way has been
//! confirmed twice, once per consensus. Repeating this on every edge carries
//! each cross-chain transaction to every blockchain of a strongly connected
//! topology, one hop per confirmation.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chain::{
    block_wire_size, BalanceChange, Block, ChainError, ChainState, Transaction, TxId,
};
use crate::consensus::{self, ConsensusConfig};
use crate::format::{self, FormatError, FormatId, TransformRegistry};
use crate::topology::{Address, BlockchainId, TopologyError, TopologyGraph};

/// Bytes charged for a sync that returns no blocks, so flow stays nonzero.
pub const HEARTBEAT_BYTES: u64 = 32;

/// Blocks an observer pulls per sync step before the backlog waits a period.
pub const DEFAULT_SYNC_BLOCK_BUDGET: u64 = 64;

/// Proof-of-stake observers skip mining work, so their sync tasks run more
/// often; modeled as a multiplier on the per-step block budget.
pub const DEFAULT_POS_SYNC_MULTIPLIER: u64 = 2;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("topology must be strongly connected before propagation starts")]
    NotStronglyConnected,
    #[error("no chain state for blockchain {0}")]
    MissingChain(BlockchainId),
}

/// Where an observer stands in reading one source chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncCursor {
    pub source: BlockchainId,
    pub observer: BlockchainId,
    /// Highest source block height already fetched; never decreases except
    /// by the explicit rollback after a rejected delta.
    pub last_seen_height: u64,
    pub period_ticks: u64,
}

impl SyncCursor {
    pub fn new(source: BlockchainId, observer: BlockchainId, period_ticks: u64) -> Self {
        Self {
            source,
            observer,
            last_seen_height: 0,
            period_ticks,
        }
    }

    pub fn due(&self, tick: u64) -> bool {
        tick.is_multiple_of(self.period_ticks)
    }
}

/// Result of one synchronization step.
#[derive(Debug, Clone)]
pub struct SyncDelta {
    pub blocks: Vec<Block>,
    pub bytes: u64,
}

/// Pulls the source blocks above the cursor (at most `block_budget`),
/// advancing the cursor. Bytes are the wire size of the delta in the
/// source's format, multiplied by `fan_out` because every node of the
/// observer fetches its own copy; an empty delta costs a fixed heartbeat.
pub fn sync_step(
    cursor: &mut SyncCursor,
    source: &ChainState,
    fan_out: u64,
    block_budget: u64,
) -> Result<SyncDelta, FormatError> {
    let from = cursor.last_seen_height + 1;
    let to = source.height().min(cursor.last_seen_height + block_budget);
    let mut blocks = Vec::new();
    let mut bytes = 0u64;
    for height in from..=to {
        let block = &source.blocks()[height as usize];
        bytes += block_wire_size(block, &source.format_spec)?;
        blocks.push(block.clone());
    }
    if blocks.is_empty() {
        bytes = HEARTBEAT_BYTES;
    }
    cursor.last_seen_height += blocks.len() as u64;
    Ok(SyncDelta {
        blocks,
        bytes: bytes * fan_out,
    })
}

/// Checks a copied delta under the source's consensus: hash links from the
/// known tip, recomputed hashes, per-block validity (with proof-of-stake
/// weights replayed). One bad block condemns the whole delta.
pub fn validate_copied_chain(
    blocks: &[Block],
    source_consensus: &ConsensusConfig,
    prev_height: u64,
    prev_hash: crate::chain::BlockHash,
    pos_weights: &BTreeMap<Address, u64>,
) -> bool {
    let mut weights = pos_weights.clone();
    let mut height = prev_height;
    let mut hash = prev_hash;
    for block in blocks {
        if block.height != height + 1 || block.prev_hash != hash {
            return false;
        }
        if !consensus::verify_foreign_block(block, source_consensus, &weights) {
            return false;
        }
        if let ConsensusConfig::PoS {
            weight_decrement, ..
        } = source_consensus
        {
            if consensus::pos_update_after_seal(&mut weights, &block.sealer, *weight_decrement)
                .is_err()
            {
                return false;
            }
        }
        height = block.height;
        hash = block.block_hash;
    }
    true
}

/// The observer-side record of one source chain: enough state to validate
/// each incremental delta (tip link plus replayed stake weights). The full
/// block bodies are not retained after their transactions are extracted.
#[derive(Debug, Clone)]
pub struct NeighborReplica {
    pub source: BlockchainId,
    pub observer: BlockchainId,
    consensus: ConsensusConfig,
    height: u64,
    tip_hash: crate::chain::BlockHash,
    pos_weights: BTreeMap<Address, u64>,
}

impl NeighborReplica {
    /// Observers know the source's genesis and consensus configuration up
    /// front; both sides are pre-configured in the scenario.
    pub fn new(observer: BlockchainId, source: &ChainState) -> Self {
        Self {
            source: source.chain_id,
            observer,
            consensus: source.consensus.clone(),
            height: 0,
            tip_hash: source.genesis_hash(),
            pos_weights: source.consensus.initial_pos_weights(),
        }
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    /// Validates a delta against the replica tip; commits it only when every
    /// block checks out, otherwise the replica is untouched.
    pub fn validate_and_commit(&mut self, blocks: &[Block]) -> bool {
        if !validate_copied_chain(
            blocks,
            &self.consensus,
            self.height,
            self.tip_hash,
            &self.pos_weights,
        ) {
            return false;
        }
        for block in blocks {
            if let ConsensusConfig::PoS {
                weight_decrement, ..
            } = &self.consensus
            {
                consensus::pos_update_after_seal(
                    &mut self.pos_weights,
                    &block.sealer,
                    *weight_decrement,
                )
                .expect("validated sealer exists");
            }
            self.height = block.height;
            self.tip_hash = block.block_hash;
        }
        true
    }
}

/// Cross-chain transactions from a validated delta, in block order.
pub fn extract_crosschain(blocks: &[Block]) -> Vec<Transaction> {
    blocks
        .iter()
        .flat_map(|b| b.transactions.iter())
        .filter(|t| t.is_cross_chain())
        .cloned()
        .collect()
}

/// Result of queueing a batch of foreign cross-chain transactions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfirmOutcome {
    /// Newly queued for sealing.
    pub enqueued: usize,
    /// Dropped because a copy is already sealed here or already pending.
    pub duplicates: usize,
    /// Dropped because no translator is registered for the pair.
    pub faults: usize,
}

/// Translates each transaction from the source format into the observer's
/// format and queues it for sealing, unless a copy already exists here.
/// Sealing itself happens at the observer's next mining opportunity, exactly
/// like its internal transactions.
pub fn confirm_and_seal(
    observer: &mut ChainState,
    txs: &[Transaction],
    registry: &TransformRegistry,
    source_format: FormatId,
) -> ConfirmOutcome {
    let mut outcome = ConfirmOutcome::default();
    for tx in txs {
        let translated = match format::transf(tx, source_format, observer.format_id, registry) {
            Ok(t) => t,
            Err(_) => {
                outcome.faults += 1;
                continue;
            }
        };
        let key = translated
            .crosschain_key()
            .expect("extract_crosschain only yields cross-chain transactions");
        if observer.enqueue(translated) {
            observer.mark_foreign_verified(key.0, key.1);
            outcome.enqueued += 1;
        } else {
            outcome.duplicates += 1;
        }
    }
    outcome
}

/// A cross-chain transaction sealed somewhere, with its hop distance from
/// the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PropagationEvent {
    pub tick: u64,
    pub origin_tx_id: TxId,
    pub origin_chain: BlockchainId,
    pub sealed_on: BlockchainId,
    pub hop_count: usize,
}

/// A block sealed during a tick, for interval metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSealRecord {
    pub chain: BlockchainId,
    pub height: u64,
    pub interval_ticks: u64,
    pub tx_count: usize,
    pub crosschain_count: usize,
}

/// Per-chain traffic of one tick.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowTotals {
    pub bytes_out: u64,
    pub bytes_in: u64,
}

/// Everything one tick produced, for the metrics log.
#[derive(Debug, Clone, Default)]
pub struct TickOutcome {
    pub flows: BTreeMap<BlockchainId, FlowTotals>,
    pub events: Vec<PropagationEvent>,
    pub balance_changes: Vec<(BlockchainId, BalanceChange)>,
    pub blocks_sealed: Vec<BlockSealRecord>,
    /// Deltas rejected by foreign-consensus validation this tick.
    pub sync_rejections: u64,
}

struct EdgeLink {
    cursor: SyncCursor,
    replica: NeighborReplica,
}

/// All chains plus the topology, translator registry, and per-edge sync
/// state. The world advances only through [`World::propagate_tick`].
pub struct World {
    pub tick: u64,
    pub topology: TopologyGraph,
    pub registry: TransformRegistry,
    chains: BTreeMap<BlockchainId, ChainState>,
    edges: Vec<EdgeLink>,
    distances: BTreeMap<(BlockchainId, BlockchainId), usize>,
    sync_block_budget: u64,
    pos_sync_multiplier: u64,
}

impl World {
    /// Refuses topologies that are not strongly connected: propagation could
    /// never reach every blockchain.
    pub fn new(
        topology: TopologyGraph,
        registry: TransformRegistry,
        chains: BTreeMap<BlockchainId, ChainState>,
        sync_period_ticks: u64,
        sync_block_budget: u64,
        pos_sync_multiplier: u64,
    ) -> Result<Self, PropagationError> {
        if !topology.is_strongly_connected() {
            return Err(PropagationError::NotStronglyConnected);
        }
        for node in topology.nodes() {
            if !chains.contains_key(&node) {
                return Err(PropagationError::MissingChain(node));
            }
        }
        let mut edges = Vec::new();
        for (source, observer) in topology.edges() {
            edges.push(EdgeLink {
                cursor: SyncCursor::new(source, observer, sync_period_ticks),
                replica: NeighborReplica::new(observer, &chains[&source]),
            });
        }
        let mut distances = BTreeMap::new();
        for a in topology.nodes() {
            for b in topology.nodes() {
                let d = if a == b { 0 } else { topology.hop_distance(a, b)? };
                distances.insert((a, b), d);
            }
        }
        Ok(Self {
            tick: 0,
            topology,
            registry,
            chains,
            edges,
            distances,
            sync_block_budget,
            pos_sync_multiplier,
        })
    }

    pub fn chain(&self, id: BlockchainId) -> Option<&ChainState> {
        self.chains.get(&id)
    }

    pub fn chain_mut(&mut self, id: BlockchainId) -> Option<&mut ChainState> {
        self.chains.get_mut(&id)
    }

    pub fn chains(&self) -> impl Iterator<Item = &ChainState> {
        self.chains.values()
    }

    pub fn cursors(&self) -> impl Iterator<Item = &SyncCursor> {
        self.edges.iter().map(|e| &e.cursor)
    }

    pub fn hop_distance(&self, from: BlockchainId, to: BlockchainId) -> usize {
        self.distances.get(&(from, to)).copied().unwrap_or(0)
    }

    /// Nothing left in flight: no pending transactions, drafts, unsynced
    /// blocks, or unsettled escrow.
    pub fn quiescent(&self) -> bool {
        self.chains
            .values()
            .all(|c| c.mempool_len() == 0 && c.mining_job().is_none() && c.escrow().is_empty())
            && self
                .edges
                .iter()
                .all(|e| e.cursor.last_seen_height == self.chains[&e.cursor.source].height())
    }

    /// One simulation tick: every due edge synchronizes (source state as of
    /// the end of the previous tick), then every chain gets one sealing
    /// opportunity. Edges run in ascending (source, observer) order and
    /// chains in ascending id order, so the tick is deterministic.
    pub fn propagate_tick(&mut self) -> Result<TickOutcome, PropagationError> {
        let mut outcome = TickOutcome::default();
        for id in self.chains.keys() {
            outcome.flows.insert(*id, FlowTotals::default());
        }

        for i in 0..self.edges.len() {
            let edge = &mut self.edges[i];
            if !edge.cursor.due(self.tick) {
                continue;
            }
            let source_id = edge.cursor.source;
            let observer_id = edge.cursor.observer;
            let observer_is_pos = self.chains[&observer_id].consensus.is_pos();
            let fan_out = self.chains[&observer_id].node_count as u64;
            let budget = if observer_is_pos {
                self.sync_block_budget * self.pos_sync_multiplier
            } else {
                self.sync_block_budget
            };
            let delta = sync_step(&mut edge.cursor, &self.chains[&source_id], fan_out, budget)?;
            outcome.flows.get_mut(&source_id).unwrap().bytes_out += delta.bytes;
            outcome.flows.get_mut(&observer_id).unwrap().bytes_in += delta.bytes;
            if delta.blocks.is_empty() {
                continue;
            }
            if edge.replica.validate_and_commit(&delta.blocks) {
                let txs = extract_crosschain(&delta.blocks);
                if !txs.is_empty() {
                    let observer = self.chains.get_mut(&observer_id).unwrap();
                    confirm_and_seal(
                        observer,
                        &txs,
                        &self.registry,
                        FormatId::for_chain(source_id),
                    );
                }
            } else {
                // Discard the whole delta; the cursor rolls back so the next
                // period re-fetches it.
                edge.cursor.last_seen_height -= delta.blocks.len() as u64;
                outcome.sync_rejections += 1;
            }
        }

        for (id, chain) in self.chains.iter_mut() {
            let prev_seal = chain.last_seal_tick;
            if let Some(seal) = chain.mining_opportunity(self.tick)? {
                outcome.blocks_sealed.push(BlockSealRecord {
                    chain: *id,
                    height: seal.height,
                    interval_ticks: self.tick - prev_seal.unwrap_or(0),
                    tx_count: seal.tx_count,
                    crosschain_count: seal.crosschain_seals.len(),
                });
                for cc in &seal.crosschain_seals {
                    outcome.events.push(PropagationEvent {
                        tick: self.tick,
                        origin_tx_id: cc.origin_tx_id,
                        origin_chain: cc.origin_chain,
                        sealed_on: *id,
                        hop_count: self
                            .distances
                            .get(&(cc.origin_chain, *id))
                            .copied()
                            .unwrap_or(0),
                    });
                }
                for change in seal.balance_changes {
                    outcome.balance_changes.push((*id, change));
                }
            }
        }

        self.tick += 1;
        Ok(outcome)
    }

    /// Releases every escrow entry whose dependency has arrived on its origin
    /// chain. Run after each tick's sealing.
    pub fn settle_dependencies(&mut self) -> Vec<(BlockchainId, BalanceChange)> {
        let mut changes = Vec::new();
        for (id, chain) in self.chains.iter_mut() {
            for (_, change) in chain.settle_ready() {
                changes.push((*id, change));
            }
        }
        changes
    }
}
