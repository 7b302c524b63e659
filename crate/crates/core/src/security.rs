//! Security arithmetic for cross-chain copies.
//!
//! Once a transaction has sealed copies on several blockchains, faking it
//! requires faking every copy, so the success probability is the product of
//! the per-chain break probabilities. A partial fake leaves the copies
//! disagreeing, which is detectable; the detection probability is everything
//! except "no chain changed" and "all chains changed identically".

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::chain::TxId;
use crate::propagation::PropagationEvent;
use crate::topology::BlockchainId;

/// Chains whose products are computed in log space to dodge underflow.
const LOG_SPACE_THRESHOLD: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum SecurityError {
    #[error("empty chain subset")]
    EmptySubset,
    #[error("no break probability configured for blockchain {0}")]
    UnknownChain(BlockchainId),
    #[error("probability {p} for blockchain {chain} is outside [0, 1]")]
    OutOfRange { chain: BlockchainId, p: f64 },
}

/// Per-blockchain probability that an adversary can fake a sealed
/// transaction there. Scenario input, not derived from consensus parameters.
#[derive(Debug, Clone, Default)]
pub struct BreakProbabilities {
    per_chain: Vec<(BlockchainId, f64)>,
}

impl BreakProbabilities {
    pub fn new(entries: impl IntoIterator<Item = (BlockchainId, f64)>) -> Result<Self, SecurityError> {
        let mut per_chain = Vec::new();
        for (chain, p) in entries {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(SecurityError::OutOfRange { chain, p });
            }
            per_chain.push((chain, p));
        }
        per_chain.sort_by_key(|(chain, _)| *chain);
        Ok(Self { per_chain })
    }

    pub fn chains(&self) -> impl Iterator<Item = BlockchainId> + '_ {
        self.per_chain.iter().map(|(c, _)| *c)
    }

    pub fn get(&self, chain: BlockchainId) -> Option<f64> {
        self.per_chain
            .iter()
            .find(|(c, _)| *c == chain)
            .map(|(_, p)| *p)
    }

    fn subset_values(&self, chains: &[BlockchainId]) -> Result<Vec<f64>, SecurityError> {
        if chains.is_empty() {
            return Err(SecurityError::EmptySubset);
        }
        chains
            .iter()
            .map(|c| self.get(*c).ok_or(SecurityError::UnknownChain(*c)))
            .collect()
    }
}

fn product(values: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    if n > LOG_SPACE_THRESHOLD {
        // ln(0) = -inf exponentiates back to exactly 0.
        values.map(f64::ln).sum::<f64>().exp()
    } else {
        values.product()
    }
}

/// Probability that an adversary fakes a transaction on *every* chain of the
/// subset: the product of the per-chain probabilities.
pub fn fake_probability(
    ps: &BreakProbabilities,
    chains: &[BlockchainId],
) -> Result<f64, SecurityError> {
    let values = ps.subset_values(chains)?;
    Ok(product(values.iter().copied(), values.len()))
}

/// Probability that a fake is *detected*: the copies disagree, i.e. at least
/// one chain was changed but not all of them.
pub fn detect_probability(
    ps: &BreakProbabilities,
    chains: &[BlockchainId],
) -> Result<f64, SecurityError> {
    let values = ps.subset_values(chains)?;
    let none_changed = product(values.iter().map(|p| 1.0 - p), values.len());
    let all_changed = product(values.iter().copied(), values.len());
    Ok(1.0 - none_changed - all_changed)
}

/// Probability that no chain in the subset is changed.
pub fn unchanged_probability(
    ps: &BreakProbabilities,
    chains: &[BlockchainId],
) -> Result<f64, SecurityError> {
    let values = ps.subset_values(chains)?;
    Ok(product(values.iter().map(|p| 1.0 - p), values.len()))
}

/// Number of distinct blockchains holding a sealed copy of the transaction,
/// origin included; 0 for a transaction absent from the trace.
pub fn confirmation_depth(trace: &[PropagationEvent], origin_tx_id: TxId) -> usize {
    let chains: BTreeSet<BlockchainId> = trace
        .iter()
        .filter(|e| e.origin_tx_id == origin_tx_id)
        .map(|e| e.sealed_on)
        .collect();
    chains.len()
}

/// Monte-Carlo estimate of the detection probability: per trial, change each
/// chain independently with its probability and count the trials where the
/// changed set is neither empty nor the full subset.
pub fn verify_detection_by_sampling(
    ps: &BreakProbabilities,
    chains: &[BlockchainId],
    trials: u64,
    seed: u64,
) -> Result<f64, SecurityError> {
    let values = ps.subset_values(chains)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut detected = 0u64;
    for _ in 0..trials {
        let mut changed = 0usize;
        for p in &values {
            if rng.gen::<f64>() < *p {
                changed += 1;
            }
        }
        if changed > 0 && changed < values.len() {
            detected += 1;
        }
    }
    Ok(detected as f64 / trials as f64)
}
