//! Per-blockchain ledger state: blocks, transactions, accounts, mempool,
//! duplicate tracking for cross-chain copies, and fork choice.
//!
//! Settlement follows the escrow rule: the sender of a cross-chain
//! transaction is debited when the transaction is sealed on its origin chain,
//! and the receiver (an account on the same origin chain) is credited only
//! once the associated transaction's copy has arrived there. Copies sealed on
//! other blockchains carry no balance effect except the sealer's cross-chain
//! reward, which is minted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::consensus::{self, ConsensusConfig};
use crate::format::{self, FormatId, FormatSpec};
use crate::topology::{Address, BlockchainId};

/// Reward minted for the sealer per cross-chain copy it confirms.
pub const DEFAULT_CROSSCHAIN_REWARD: u64 = 1;

pub(crate) fn sha256(bytes: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().into()
}

fn hex32(bytes: &[u8; 32], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for b in bytes {
        write!(f, "{b:02x}")?;
    }
    Ok(())
}

fn from_hex32(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 || !s.is_ascii() {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16)?;
        let lo = (chunk[1] as char).to_digit(16)?;
        out[i] = (hi * 16 + lo) as u8;
    }
    Some(out)
}

/// Content hash identifying a transaction.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub [u8; 32]);

impl TxId {
    pub fn from_hex(s: &str) -> Option<Self> {
        from_hex32(s).map(TxId)
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        hex32(&self.0, f)
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({:02x}{:02x}{:02x}{:02x}..)", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

/// Hash of a sealed block.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BlockHash(pub [u8; 32]);

impl BlockHash {
    pub const ZERO: BlockHash = BlockHash([0; 32]);
}

impl fmt::Display for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        hex32(&self.0, f)
    }
}

impl fmt::Debug for BlockHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BlockHash({:02x}{:02x}{:02x}{:02x}..)", self.0[0], self.0[1], self.0[2], self.0[3])
    }
}

/// Reference to the associated transaction that must arrive on the origin
/// chain before the receiver is credited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dependency {
    pub chain: BlockchainId,
    pub tx_id: TxId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxKind {
    Internal,
    CrossChain {
        /// Blockchain where the transaction was first sealed.
        origin_chain: BlockchainId,
        /// Id of the original; equals `tx_id` on the origin chain and is the
        /// stable identity of every copy.
        origin_tx_id: TxId,
        dependency: Option<Dependency>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tx_id: TxId,
    pub sender: Address,
    pub receiver: Address,
    /// Asset units in canonical scale; formats rescale only on the wire.
    pub amount: u64,
    pub kind: TxKind,
    pub format_id: FormatId,
}

impl Transaction {
    pub fn internal(
        sender: impl Into<Address>,
        receiver: impl Into<Address>,
        amount: u64,
        spec: &FormatSpec,
        format_id: FormatId,
        seq: u64,
    ) -> Result<Self, format::FormatError> {
        let sender = sender.into();
        let receiver = receiver.into();
        let tx_id = format::tx_id_for(
            spec,
            &sender,
            &receiver,
            amount,
            false,
            BlockchainId(format_id.0),
            seq,
        )?;
        Ok(Self {
            tx_id,
            sender,
            receiver,
            amount,
            kind: TxKind::Internal,
            format_id,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn cross_chain(
        sender: impl Into<Address>,
        receiver: impl Into<Address>,
        amount: u64,
        origin_chain: BlockchainId,
        dependency: Option<Dependency>,
        spec: &FormatSpec,
        format_id: FormatId,
        seq: u64,
    ) -> Result<Self, format::FormatError> {
        let sender = sender.into();
        let receiver = receiver.into();
        let tx_id = format::tx_id_for(spec, &sender, &receiver, amount, true, origin_chain, seq)?;
        Ok(Self {
            tx_id,
            sender,
            receiver,
            amount,
            kind: TxKind::CrossChain {
                origin_chain,
                origin_tx_id: tx_id,
                dependency,
            },
            format_id,
        })
    }

    pub fn is_cross_chain(&self) -> bool {
        matches!(self.kind, TxKind::CrossChain { .. })
    }

    /// Duplicate-detection key of a cross-chain transaction.
    pub fn crosschain_key(&self) -> Option<(BlockchainId, TxId)> {
        match &self.kind {
            TxKind::CrossChain {
                origin_chain,
                origin_tx_id,
                ..
            } => Some((*origin_chain, *origin_tx_id)),
            TxKind::Internal => None,
        }
    }

    pub fn dependency(&self) -> Option<Dependency> {
        match &self.kind {
            TxKind::CrossChain { dependency, .. } => *dependency,
            TxKind::Internal => None,
        }
    }

    /// Digest binding the full transaction content (including dependency and
    /// format tag); block hashes commit to these.
    pub fn digest(&self) -> [u8; 32] {
        let mut buf = format::encode(self, &FormatSpec::identity())
            .expect("identity encoding cannot fail");
        buf.extend_from_slice(&self.format_id.0.to_le_bytes());
        sha256(&buf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: BlockHash,
    /// Tick at which the block draft was assembled.
    pub timestamp: u64,
    pub transactions: Vec<Transaction>,
    pub sealer: Address,
    /// Proof-of-work solution; 0 for proof-of-stake blocks.
    pub nonce: u64,
    pub block_hash: BlockHash,
}

impl Block {
    /// Commitment to the transaction list, order included.
    pub fn tx_root(transactions: &[Transaction]) -> [u8; 32] {
        let mut buf = Vec::with_capacity(32 * transactions.len() + 8);
        buf.extend_from_slice(&(transactions.len() as u64).to_le_bytes());
        for tx in transactions {
            buf.extend_from_slice(&tx.digest());
        }
        sha256(&buf)
    }

    /// Hash preimage without the nonce; mining appends candidate nonces.
    pub fn header_bytes(
        height: u64,
        prev_hash: &BlockHash,
        timestamp: u64,
        tx_root: &[u8; 32],
        sealer: &str,
    ) -> Vec<u8> {
        let mut buf = Vec::with_capacity(96 + sealer.len());
        buf.extend_from_slice(&height.to_le_bytes());
        buf.extend_from_slice(&prev_hash.0);
        buf.extend_from_slice(&timestamp.to_le_bytes());
        buf.extend_from_slice(tx_root);
        buf.extend_from_slice(&(sealer.len() as u64).to_le_bytes());
        buf.extend_from_slice(sealer.as_bytes());
        buf
    }

    pub fn hash_with_nonce(header: &[u8], nonce: u64) -> BlockHash {
        let mut buf = Vec::with_capacity(header.len() + 8);
        buf.extend_from_slice(header);
        buf.extend_from_slice(&nonce.to_le_bytes());
        BlockHash(sha256(&buf))
    }

    /// Recomputes the hash from the block's contents.
    pub fn compute_hash(&self) -> BlockHash {
        let root = Self::tx_root(&self.transactions);
        let header = Self::header_bytes(
            self.height,
            &self.prev_hash,
            self.timestamp,
            &root,
            &self.sealer,
        );
        Self::hash_with_nonce(&header, self.nonce)
    }

    pub fn seal(
        height: u64,
        prev_hash: BlockHash,
        timestamp: u64,
        transactions: Vec<Transaction>,
        sealer: impl Into<Address>,
        nonce: u64,
    ) -> Self {
        let sealer = sealer.into();
        let mut block = Self {
            height,
            prev_hash,
            timestamp,
            transactions,
            sealer,
            nonce,
            block_hash: BlockHash::ZERO,
        };
        block.block_hash = block.compute_hash();
        block
    }

    pub fn genesis(chain_id: BlockchainId) -> Self {
        Self::seal(0, BlockHash::ZERO, 0, Vec::new(), format!("genesis@{chain_id}"), 0)
    }

    /// Count of cross-chain transactions inside the block.
    pub fn crosschain_count(&self) -> usize {
        self.transactions.iter().filter(|t| t.is_cross_chain()).count()
    }
}

/// Wire size of a block when served to an observer: header, nonce, hash, and
/// the transactions encoded in the serving chain's own format.
pub fn block_wire_size(block: &Block, spec: &FormatSpec) -> Result<u64, format::FormatError> {
    let root = Block::tx_root(&block.transactions);
    let header = Block::header_bytes(
        block.height,
        &block.prev_hash,
        block.timestamp,
        &root,
        &block.sealer,
    );
    let mut size = header.len() as u64 + 8 + 32;
    for tx in &block.transactions {
        size += format::encode(tx, spec)?.len() as u64;
    }
    Ok(size)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("block height {got}, expected {expected}")]
    WrongHeight { expected: u64, got: u64 },
    #[error("block prev_hash does not match the tip")]
    WrongPrevHash,
    #[error("stored block hash does not match recomputed contents")]
    HashMismatch,
    #[error("block fails {0} consensus validity")]
    ConsensusInvalid(&'static str),
    #[error("cross-chain transaction {1} from {0} already sealed here")]
    DuplicateCrossChain(BlockchainId, TxId),
    #[error("account {0} not found")]
    UnknownAccount(Address),
    #[error("account {account} has {balance}, needs {required}")]
    InsufficientFunds {
        account: Address,
        balance: u64,
        required: u64,
    },
    #[error("no candidate chains supplied")]
    NoCandidates,
    #[error("all candidate chains are invalid")]
    NoValidCandidate,
    #[error(transparent)]
    Format(#[from] format::FormatError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AccountState {
    pub balance: u64,
    pub pos_weight: u64,
}

/// Why a balance moved; recorded with every change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceReason {
    Debit,
    Credit,
    Reward,
}

impl fmt::Display for BalanceReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BalanceReason::Debit => "debit",
            BalanceReason::Credit => "credit",
            BalanceReason::Reward => "reward",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceChange {
    pub account: Address,
    pub new_balance: u64,
    pub reason: BalanceReason,
    pub tx_id: TxId,
}

/// A cross-chain transaction sealed into a block, as reported to the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrosschainSeal {
    pub origin_chain: BlockchainId,
    pub origin_tx_id: TxId,
    /// True when the copy arrived through a validated foreign delta (always
    /// the case for copies; originals are their own first confirmation).
    pub foreign_verified: bool,
}

/// Everything a successful append reports upward for metrics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SealOutcome {
    pub height: u64,
    pub tx_count: usize,
    pub crosschain_seals: Vec<CrosschainSeal>,
    pub balance_changes: Vec<BalanceChange>,
}

/// Value debited from a sender, waiting for the associated transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EscrowEntry {
    pub receiver: Address,
    pub amount: u64,
    pub dependency: Option<Dependency>,
    pub debited_at: u64,
}

/// In-progress proof-of-work on a fixed block draft. The nonce scan resumes
/// where it stopped on the next tick, which is what makes per-chain mining
/// intervals differ when budgets differ.
#[derive(Debug, Clone)]
pub struct MiningJob {
    pub height: u64,
    pub prev_hash: BlockHash,
    pub timestamp: u64,
    pub transactions: Vec<Transaction>,
    pub sealer: Address,
    header: Vec<u8>,
    pub next_nonce: u64,
}

impl MiningJob {
    pub fn header(&self) -> &[u8] {
        &self.header
    }

    fn into_block(self, nonce: u64) -> Block {
        Block::seal(
            self.height,
            self.prev_hash,
            self.timestamp,
            self.transactions,
            self.sealer,
            nonce,
        )
    }
}

/// One blockchain's full state.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub chain_id: BlockchainId,
    pub consensus: ConsensusConfig,
    pub format_id: FormatId,
    pub format_spec: FormatSpec,
    /// Number of physical nodes this blockchain runs on; used only for
    /// network-flow accounting.
    pub node_count: u32,
    /// Account that seals proof-of-work blocks and collects rewards.
    pub miner: Address,
    pub crosschain_reward: u64,
    blocks: Vec<Block>,
    accounts: BTreeMap<Address, AccountState>,
    mempool: Vec<Transaction>,
    /// Cross-chain keys ever enqueued; a second arrival of the same key is
    /// dropped even while the first is still pending in the mempool.
    enqueued: BTreeSet<(BlockchainId, TxId)>,
    /// Cross-chain keys present in sealed blocks.
    sealed_index: BTreeSet<(BlockchainId, TxId)>,
    /// Keys that arrived through a validated foreign delta.
    import_provenance: BTreeSet<(BlockchainId, TxId)>,
    escrow: BTreeMap<TxId, EscrowEntry>,
    mining_job: Option<MiningJob>,
    pub last_seal_tick: Option<u64>,
    /// Sum of all account balances at construction, for conservation checks.
    pub initial_supply: u64,
    /// Rewards minted since genesis.
    pub minted: u64,
    /// Copies sealed / copies that passed both confirmations.
    pub copies_sealed: u64,
    pub copies_double_confirmed: u64,
    /// Original transactions dropped for insufficient sender funds.
    pub dropped_infeasible: u64,
}

impl ChainState {
    pub fn new(
        chain_id: BlockchainId,
        consensus: ConsensusConfig,
        format_spec: FormatSpec,
        node_count: u32,
        miner: impl Into<Address>,
        accounts: BTreeMap<Address, AccountState>,
    ) -> Self {
        let initial_supply = accounts.values().map(|a| a.balance).sum();
        Self {
            chain_id,
            consensus,
            format_id: FormatId::for_chain(chain_id),
            format_spec,
            node_count,
            miner: miner.into(),
            crosschain_reward: DEFAULT_CROSSCHAIN_REWARD,
            blocks: vec![Block::genesis(chain_id)],
            accounts,
            mempool: Vec::new(),
            enqueued: BTreeSet::new(),
            sealed_index: BTreeSet::new(),
            import_provenance: BTreeSet::new(),
            escrow: BTreeMap::new(),
            mining_job: None,
            last_seal_tick: None,
            initial_supply,
            minted: 0,
            copies_sealed: 0,
            copies_double_confirmed: 0,
            dropped_infeasible: 0,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("chain always has genesis")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn genesis_hash(&self) -> BlockHash {
        self.blocks[0].block_hash
    }

    pub fn accounts(&self) -> &BTreeMap<Address, AccountState> {
        &self.accounts
    }

    pub fn account(&self, address: &str) -> Option<&AccountState> {
        self.accounts.get(address)
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn escrow(&self) -> &BTreeMap<TxId, EscrowEntry> {
        &self.escrow
    }

    pub fn sealed_index(&self) -> &BTreeSet<(BlockchainId, TxId)> {
        &self.sealed_index
    }

    pub fn mining_job(&self) -> Option<&MiningJob> {
        self.mining_job.as_ref()
    }

    /// True iff a sealed copy of `(origin, otx)` exists on this chain.
    pub fn contains_crosschain(&self, origin: BlockchainId, otx: TxId) -> bool {
        self.sealed_index.contains(&(origin, otx))
    }

    /// Enqueues a transaction for sealing. Cross-chain transactions already
    /// sealed or already pending are dropped and reported as duplicates.
    pub fn enqueue(&mut self, tx: Transaction) -> bool {
        if let Some(key) = tx.crosschain_key() {
            if self.sealed_index.contains(&key) || !self.enqueued.insert(key) {
                return false;
            }
        }
        self.mempool.push(tx);
        true
    }

    /// Marks a cross-chain key as having arrived through a validated foreign
    /// delta, for the double-confirmation bookkeeping.
    pub fn mark_foreign_verified(&mut self, origin: BlockchainId, otx: TxId) {
        self.import_provenance.insert((origin, otx));
    }

    /// The account the proof-of-stake roster elects to seal next: maximum
    /// current weight, ties to the smallest address. Weight selection runs
    /// over the roster only; user accounts never seal.
    fn expected_pos_sealer(&self) -> Option<Address> {
        let ConsensusConfig::PoS {
            accounts: roster, ..
        } = &self.consensus
        else {
            return None;
        };
        consensus::pos_select(roster.iter().map(|pa| {
            let weight = self.accounts.get(&pa.address).map_or(0, |s| s.pos_weight);
            (&pa.address, weight)
        }))
        .cloned()
    }

    /// Whether this chain must debit the sender when sealing `tx` (true for
    /// internal transactions and for cross-chain originals).
    fn is_settling_seal(&self, tx: &Transaction) -> bool {
        match &tx.kind {
            TxKind::Internal => true,
            TxKind::CrossChain { origin_chain, .. } => *origin_chain == self.chain_id,
        }
    }

    /// Takes the current mempool as a block draft, dropping originals whose
    /// senders cannot cover their amounts.
    fn take_draft(&mut self) -> Vec<Transaction> {
        let mut available: BTreeMap<Address, u64> = BTreeMap::new();
        let mut draft = Vec::with_capacity(self.mempool.len());
        for tx in std::mem::take(&mut self.mempool) {
            if self.is_settling_seal(&tx) {
                let funds = available.entry(tx.sender.clone()).or_insert_with(|| {
                    self.accounts.get(&tx.sender).map_or(0, |a| a.balance)
                });
                match funds.checked_sub(tx.amount) {
                    Some(rest) => *funds = rest,
                    None => {
                        self.dropped_infeasible += 1;
                        continue;
                    }
                }
            }
            draft.push(tx);
        }
        draft
    }

    /// One sealing opportunity for the current tick: proof-of-work chains
    /// spend one nonce budget on their current draft, proof-of-stake chains
    /// seal immediately. At most one block per chain per tick.
    pub fn mining_opportunity(&mut self, tick: u64) -> Result<Option<SealOutcome>, ChainError> {
        match self.consensus.clone() {
            ConsensusConfig::PoW {
                difficulty_bits,
                nonce_budget,
            } => {
                if self.mining_job.is_none() && !self.mempool.is_empty() {
                    let transactions = self.take_draft();
                    if !transactions.is_empty() {
                        let tx_root = Block::tx_root(&transactions);
                        let header = Block::header_bytes(
                            self.height() + 1,
                            &self.tip().block_hash,
                            tick,
                            &tx_root,
                            &self.miner,
                        );
                        self.mining_job = Some(MiningJob {
                            height: self.height() + 1,
                            prev_hash: self.tip().block_hash,
                            timestamp: tick,
                            transactions,
                            sealer: self.miner.clone(),
                            header,
                            next_nonce: 0,
                        });
                    }
                }
                let Some(job) = self.mining_job.as_mut() else {
                    return Ok(None);
                };
                match consensus::pow_mine(&job.header, difficulty_bits, job.next_nonce, nonce_budget)
                {
                    Some(nonce) => {
                        let job = self.mining_job.take().expect("job present");
                        let block = job.into_block(nonce);
                        let outcome = self.append_block(block, tick)?;
                        Ok(Some(outcome))
                    }
                    None => {
                        job.next_nonce += nonce_budget;
                        Ok(None)
                    }
                }
            }
            ConsensusConfig::PoS { .. } => {
                if self.mempool.is_empty() {
                    return Ok(None);
                }
                let sealer = self
                    .expected_pos_sealer()
                    .ok_or(ChainError::ConsensusInvalid("proof-of-stake"))?;
                let transactions = self.take_draft();
                if transactions.is_empty() {
                    return Ok(None);
                }
                let block = Block::seal(
                    self.height() + 1,
                    self.tip().block_hash,
                    tick,
                    transactions,
                    sealer,
                    0,
                );
                let outcome = self.append_block(block, tick)?;
                Ok(Some(outcome))
            }
        }
    }

    /// Validates and appends a block sealed at `tick`, applying all balance
    /// effects. On any error the state is unchanged.
    pub fn append_block(&mut self, block: Block, tick: u64) -> Result<SealOutcome, ChainError> {
        self.validate_block(&block)?;

        // Dry-run the debits so a failing block leaves no partial effects.
        let mut debits: BTreeMap<Address, u64> = BTreeMap::new();
        for tx in &block.transactions {
            if self.is_settling_seal(tx) {
                *debits.entry(tx.sender.clone()).or_insert(0) += tx.amount;
            }
        }
        for (account, total) in &debits {
            let state = self
                .accounts
                .get(account)
                .ok_or_else(|| ChainError::UnknownAccount(account.clone()))?;
            if state.balance < *total {
                return Err(ChainError::InsufficientFunds {
                    account: account.clone(),
                    balance: state.balance,
                    required: *total,
                });
            }
        }

        let mut outcome = SealOutcome {
            height: block.height,
            tx_count: block.transactions.len(),
            ..SealOutcome::default()
        };
        for tx in &block.transactions {
            match &tx.kind {
                TxKind::Internal => {
                    self.debit(&tx.sender, tx.amount, tx.tx_id, &mut outcome);
                    self.credit(&tx.receiver, tx.amount, tx.tx_id, &mut outcome);
                }
                TxKind::CrossChain {
                    origin_chain,
                    origin_tx_id,
                    dependency,
                } => {
                    let key = (*origin_chain, *origin_tx_id);
                    self.sealed_index.insert(key);
                    if *origin_chain == self.chain_id {
                        // Original: debit into escrow until the dependency lands.
                        self.debit(&tx.sender, tx.amount, tx.tx_id, &mut outcome);
                        self.escrow.insert(
                            *origin_tx_id,
                            EscrowEntry {
                                receiver: tx.receiver.clone(),
                                amount: tx.amount,
                                dependency: *dependency,
                                debited_at: tick,
                            },
                        );
                        outcome.crosschain_seals.push(CrosschainSeal {
                            origin_chain: *origin_chain,
                            origin_tx_id: *origin_tx_id,
                            foreign_verified: true,
                        });
                    } else {
                        let verified = self.import_provenance.contains(&key);
                        self.copies_sealed += 1;
                        if verified {
                            self.copies_double_confirmed += 1;
                        }
                        let reward = self.crosschain_reward;
                        if reward > 0 {
                            let sealer = block.sealer.clone();
                            self.accounts.entry(sealer.clone()).or_default().balance += reward;
                            self.minted += reward;
                            outcome.balance_changes.push(BalanceChange {
                                account: sealer,
                                new_balance: self.accounts[&block.sealer].balance,
                                reason: BalanceReason::Reward,
                                tx_id: tx.tx_id,
                            });
                        }
                        outcome.crosschain_seals.push(CrosschainSeal {
                            origin_chain: *origin_chain,
                            origin_tx_id: *origin_tx_id,
                            foreign_verified: verified,
                        });
                    }
                }
            }
        }

        // Drain any included transactions still sitting in the mempool
        // (blocks appended directly, outside the mining flow).
        let included: BTreeSet<TxId> = block.transactions.iter().map(|t| t.tx_id).collect();
        self.mempool.retain(|t| !included.contains(&t.tx_id));

        if let ConsensusConfig::PoS {
            weight_decrement, ..
        } = self.consensus
        {
            let weights: &mut BTreeMap<Address, AccountState> = &mut self.accounts;
            if let Some(state) = weights.get_mut(&block.sealer) {
                state.pos_weight = state.pos_weight.saturating_sub(weight_decrement);
            }
        }

        self.last_seal_tick = Some(tick);
        self.blocks.push(block);
        Ok(outcome)
    }

    fn debit(&mut self, account: &str, amount: u64, tx_id: TxId, outcome: &mut SealOutcome) {
        let state = self.accounts.get_mut(account).expect("debit pre-checked");
        state.balance -= amount;
        outcome.balance_changes.push(BalanceChange {
            account: account.to_string(),
            new_balance: state.balance,
            reason: BalanceReason::Debit,
            tx_id,
        });
    }

    fn credit(&mut self, account: &str, amount: u64, tx_id: TxId, outcome: &mut SealOutcome) {
        let state = self.accounts.entry(account.to_string()).or_default();
        state.balance += amount;
        outcome.balance_changes.push(BalanceChange {
            account: account.to_string(),
            new_balance: state.balance,
            reason: BalanceReason::Credit,
            tx_id,
        });
    }

    /// Releases every escrow entry whose dependency has a sealed copy on this
    /// chain (entries without a dependency release immediately), crediting
    /// the receivers.
    pub fn settle_ready(&mut self) -> Vec<(TxId, BalanceChange)> {
        let ready: Vec<TxId> = self
            .escrow
            .iter()
            .filter(|(_, entry)| match entry.dependency {
                None => true,
                Some(dep) => self.sealed_index.contains(&(dep.chain, dep.tx_id)),
            })
            .map(|(id, _)| *id)
            .collect();
        let mut changes = Vec::with_capacity(ready.len());
        for id in ready {
            let entry = self.escrow.remove(&id).expect("key just listed");
            let state = self.accounts.entry(entry.receiver.clone()).or_default();
            state.balance += entry.amount;
            changes.push((
                id,
                BalanceChange {
                    account: entry.receiver,
                    new_balance: state.balance,
                    reason: BalanceReason::Credit,
                    tx_id: id,
                },
            ));
        }
        changes
    }

    fn validate_block(&self, block: &Block) -> Result<(), ChainError> {
        let tip = self.tip();
        if block.height != tip.height + 1 {
            return Err(ChainError::WrongHeight {
                expected: tip.height + 1,
                got: block.height,
            });
        }
        if block.prev_hash != tip.block_hash {
            return Err(ChainError::WrongPrevHash);
        }
        if block.compute_hash() != block.block_hash {
            return Err(ChainError::HashMismatch);
        }
        match &self.consensus {
            ConsensusConfig::PoW {
                difficulty_bits, ..
            } => {
                if !consensus::pow_verify(block, *difficulty_bits) {
                    return Err(ChainError::ConsensusInvalid("proof-of-work"));
                }
            }
            ConsensusConfig::PoS { .. } => {
                if self.expected_pos_sealer().as_deref() != Some(block.sealer.as_str()) {
                    return Err(ChainError::ConsensusInvalid("proof-of-stake"));
                }
            }
        }
        let mut seen = BTreeSet::new();
        for tx in &block.transactions {
            if let Some(key) = tx.crosschain_key() {
                if self.sealed_index.contains(&key) || !seen.insert(key) {
                    return Err(ChainError::DuplicateCrossChain(key.0, key.1));
                }
            }
        }
        Ok(())
    }

    /// Full self-check: hash-chain integrity plus consensus validity of every
    /// block, replaying proof-of-stake weights from the configured roster.
    pub fn verify_chain(&self) -> Result<(), ChainError> {
        consensus::verify_chain_blocks(&self.blocks, &self.consensus)
            .then_some(())
            .ok_or(ChainError::ConsensusInvalid("replay"))
    }

    /// Rebuilds the cross-chain index by scanning all blocks; must equal the
    /// maintained `sealed_index`.
    pub fn rebuild_sealed_index(&self) -> BTreeSet<(BlockchainId, TxId)> {
        self.blocks
            .iter()
            .flat_map(|b| b.transactions.iter())
            .filter_map(|t| t.crosschain_key())
            .collect()
    }

    /// (sum of balances, value held in escrow, minted rewards); the first two
    /// minus minted rewards stay constant over a run.
    pub fn supply(&self) -> (u64, u64, u64) {
        let balances = self.accounts.values().map(|a| a.balance).sum();
        let escrow = self.escrow.values().map(|e| e.amount).sum();
        (balances, escrow, self.minted)
    }

    /// Line-delimited export of blocks and balances for golden tests.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(
            out,
            "chain id={} height={} blocks={} format={}",
            self.chain_id,
            self.height(),
            self.blocks.len(),
            self.format_id
        )
        .unwrap();
        for block in &self.blocks {
            writeln!(
                out,
                "block height={} time={} sealer={} nonce={} txs={} hash={}",
                block.height,
                block.timestamp,
                block.sealer,
                block.nonce,
                block.transactions.len(),
                block.block_hash
            )
            .unwrap();
            for tx in &block.transactions {
                let kind = match &tx.kind {
                    TxKind::Internal => "internal".to_string(),
                    TxKind::CrossChain { origin_chain, .. } => {
                        format!("crosschain origin={origin_chain}")
                    }
                };
                writeln!(
                    out,
                    "tx id={} {kind} sender={} receiver={} amount={}",
                    tx.tx_id, tx.sender, tx.receiver, tx.amount
                )
                .unwrap();
            }
        }
        for (address, state) in &self.accounts {
            writeln!(
                out,
                "balance account={address} value={} weight={}",
                state.balance, state.pos_weight
            )
            .unwrap();
        }
        out
    }
}

/// Longest valid chain wins; ties break toward the lexicographically smaller
/// tip hash. Candidates that fail hash or consensus replay are excluded
/// before comparison.
pub fn select_main_chain<'a>(
    candidates: &'a [Vec<Block>],
    consensus: &ConsensusConfig,
) -> Result<&'a Vec<Block>, ChainError> {
    if candidates.is_empty() {
        return Err(ChainError::NoCandidates);
    }
    candidates
        .iter()
        .filter(|chain| consensus::verify_chain_blocks(chain, consensus))
        .max_by(|a, b| {
            let (ta, tb) = (a.last().unwrap(), b.last().unwrap());
            ta.height
                .cmp(&tb.height)
                // Smaller tip hash preferred, so compare reversed.
                .then_with(|| tb.block_hash.0.cmp(&ta.block_hash.0))
        })
        .ok_or(ChainError::NoValidCandidate)
}
