//! Pluggable block validity and sealer selection: simplified proof-of-work
//! and proof-of-stake.
//!
//! Proof-of-work scans nonces until the block hash has the required number of
//! leading zero bits; the per-tick nonce budget models how much hashing a
//! chain's nodes get through in one tick, so chains with different budgets
//! show different mean block intervals. Difficulty is fixed for a whole run.
//!
//! Proof-of-stake picks the maximum-weight account from a fixed roster, ties
//! toward the lexicographically smallest address, and subtracts a configured
//! amount of weight from the sealer afterwards. Initial weight equals the
//! account's initial asset.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chain::Block;
use crate::topology::Address;

/// Desk-scale difficulty: mining completes in seconds rather than minutes.
pub const DEFAULT_POW_DIFFICULTY_BITS: u32 = 16;

/// Nonces tried per chain per tick at the default difficulty; tuned for a
/// mean inter-block time of about five ticks.
pub const DEFAULT_POW_NONCE_BUDGET: u64 = 14_600;

/// One staking account and its initial asset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosAccount {
    pub address: Address,
    pub asset: u64,
}

/// Per-chain consensus parameters; exactly one kind per chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsensusConfig {
    PoW {
        /// Leading zero bits required of the block hash.
        difficulty_bits: u32,
        /// Nonces tried per sealing opportunity.
        nonce_budget: u64,
    },
    PoS {
        /// Weight subtracted from the sealer per sealed block, floored at 0.
        weight_decrement: u64,
        accounts: Vec<PosAccount>,
    },
}

impl ConsensusConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ConsensusConfig::PoW { .. } => "pow",
            ConsensusConfig::PoS { .. } => "pos",
        }
    }

    pub fn is_pos(&self) -> bool {
        matches!(self, ConsensusConfig::PoS { .. })
    }

    /// Initial stake weights: the identity map from assets.
    pub fn initial_pos_weights(&self) -> BTreeMap<Address, u64> {
        match self {
            ConsensusConfig::PoW { .. } => BTreeMap::new(),
            ConsensusConfig::PoS { accounts, .. } => accounts
                .iter()
                .map(|a| (a.address.clone(), a.asset))
                .collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("no staking accounts configured")]
    EmptyAccounts,
    #[error("sealer {0} is not a staking account")]
    UnknownSealer(Address),
}

pub fn leading_zero_bits(hash: &[u8; 32]) -> u32 {
    let mut bits = 0;
    for byte in hash {
        if *byte == 0 {
            bits += 8;
        } else {
            bits += byte.leading_zeros();
            break;
        }
    }
    bits
}

/// Scans `[nonce_start, nonce_start + nonce_budget)` for the first nonce
/// whose block hash meets the difficulty. `None` means the budget ran out;
/// mining resumes from the follow-up start on the next opportunity.
pub fn pow_mine(
    header: &[u8],
    difficulty_bits: u32,
    nonce_start: u64,
    nonce_budget: u64,
) -> Option<u64> {
    use sha2::{Digest, Sha256};
    // One reusable buffer; only the trailing nonce bytes change per attempt.
    let mut buf = Vec::with_capacity(header.len() + 8);
    buf.extend_from_slice(header);
    buf.extend_from_slice(&[0u8; 8]);
    let nonce_offset = header.len();
    for nonce in nonce_start..nonce_start.saturating_add(nonce_budget) {
        buf[nonce_offset..].copy_from_slice(&nonce.to_le_bytes());
        let hash: [u8; 32] = Sha256::digest(&buf).into();
        if leading_zero_bits(&hash) >= difficulty_bits {
            return Some(nonce);
        }
    }
    None
}

/// True iff the stored hash matches the recomputed contents and has the
/// required leading zero bits.
pub fn pow_verify(block: &Block, difficulty_bits: u32) -> bool {
    let recomputed = block.compute_hash();
    recomputed == block.block_hash && leading_zero_bits(&recomputed.0) >= difficulty_bits
}

/// The maximum-weight account; ties go to the lexicographically smallest
/// address. Iteration order of the input does not matter.
pub fn pos_select<'a>(
    accounts: impl IntoIterator<Item = (&'a Address, u64)>,
) -> Option<&'a Address> {
    let mut best: Option<(&'a Address, u64)> = None;
    for (address, weight) in accounts {
        best = match best {
            None => Some((address, weight)),
            Some((b_addr, b_weight)) => {
                if weight > b_weight || (weight == b_weight && address < b_addr) {
                    Some((address, weight))
                } else {
                    Some((b_addr, b_weight))
                }
            }
        };
    }
    best.map(|(address, _)| address)
}

/// Subtracts the decrement from the sealer's weight, floored at zero.
pub fn pos_update_after_seal(
    weights: &mut BTreeMap<Address, u64>,
    sealer: &str,
    decrement: u64,
) -> Result<(), ConsensusError> {
    let weight = weights
        .get_mut(sealer)
        .ok_or_else(|| ConsensusError::UnknownSealer(sealer.to_string()))?;
    *weight = weight.saturating_sub(decrement);
    Ok(())
}

/// Verifies a single foreign block under the source chain's consensus.
/// `pos_weights` is the replayed weight state just before this block; it is
/// ignored for proof-of-work.
pub fn verify_foreign_block(
    block: &Block,
    consensus: &ConsensusConfig,
    pos_weights: &BTreeMap<Address, u64>,
) -> bool {
    if block.compute_hash() != block.block_hash {
        return false;
    }
    match consensus {
        ConsensusConfig::PoW {
            difficulty_bits, ..
        } => pow_verify(block, *difficulty_bits),
        ConsensusConfig::PoS { .. } => {
            pos_select(weights_view(pos_weights)).map(|a| a.as_str()) == Some(block.sealer.as_str())
        }
    }
}

fn weights_view(weights: &BTreeMap<Address, u64>) -> impl Iterator<Item = (&Address, u64)> {
    weights.iter().map(|(a, w)| (a, *w))
}

/// Full replay of a chain from its genesis: hash links plus per-block
/// consensus validity, with proof-of-stake weights replayed from the roster.
pub fn verify_chain_blocks(blocks: &[Block], consensus: &ConsensusConfig) -> bool {
    let Some(genesis) = blocks.first() else {
        return false;
    };
    if genesis.height != 0 || genesis.compute_hash() != genesis.block_hash {
        return false;
    }
    let mut weights = consensus.initial_pos_weights();
    for pair in blocks.windows(2) {
        let (prev, block) = (&pair[0], &pair[1]);
        if block.height != prev.height + 1 || block.prev_hash != prev.block_hash {
            return false;
        }
        if !verify_foreign_block(block, consensus, &weights) {
            return false;
        }
        if let ConsensusConfig::PoS {
            weight_decrement, ..
        } = consensus
        {
            if pos_update_after_seal(&mut weights, &block.sealer, *weight_decrement).is_err() {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;
    use crate::chain::{Block, ChainState, Transaction};

    pub fn pow_config(bits: u32) -> ConsensusConfig {
        ConsensusConfig::PoW {
            difficulty_bits: bits,
            nonce_budget: 10_000_000,
        }
    }

    /// Mines a block extending `prev` under a proof-of-work config.
    pub fn mine_block_after(
        prev: &Block,
        transactions: Vec<Transaction>,
        timestamp: u64,
        consensus: &ConsensusConfig,
    ) -> Block {
        let ConsensusConfig::PoW {
            difficulty_bits, ..
        } = consensus
        else {
            panic!("fixture expects proof-of-work");
        };
        let sealer = "miner@1".to_string();
        let root = Block::tx_root(&transactions);
        let header =
            Block::header_bytes(prev.height + 1, &prev.block_hash, timestamp, &root, &sealer);
        let nonce =
            pow_mine(&header, *difficulty_bits, 0, u64::MAX).expect("fixture difficulty mineable");
        Block::seal(
            prev.height + 1,
            prev.block_hash,
            timestamp,
            transactions,
            sealer,
            nonce,
        )
    }

    /// Mines a block on a chain's tip with the chain's own difficulty.
    pub fn mine_next_block(
        chain: &ChainState,
        transactions: Vec<Transaction>,
        timestamp: u64,
    ) -> Block {
        let root = Block::tx_root(&transactions);
        let header = Block::header_bytes(
            chain.height() + 1,
            &chain.tip().block_hash,
            timestamp,
            &root,
            &chain.miner,
        );
        let ConsensusConfig::PoW {
            difficulty_bits, ..
        } = chain.consensus
        else {
            panic!("fixture expects proof-of-work");
        };
        let nonce =
            pow_mine(&header, difficulty_bits, 0, u64::MAX).expect("fixture difficulty mineable");
        Block::seal(
            chain.height() + 1,
            chain.tip().block_hash,
            timestamp,
            transactions,
            chain.miner.clone(),
            nonce,
        )
    }
}
