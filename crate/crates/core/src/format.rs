//! Per-blockchain transaction encodings and the pairwise translators that are
//! registered only along direct-connection edges.
//!
//! Every blockchain expresses transactions in its own format: the same eight
//! canonical fields, but locally renamed, reordered, and with amounts in local
//! units. A transaction crossing an edge is translated from the source format
//! into the observer's format; an indirectly connected blockchain receives it
//! after the translators along the propagation path have been composed, so the
//! number of registered translators stays equal to the number of edges instead
//! of growing with the number of blockchain pairs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{Dependency, Transaction, TxId, TxKind};
use crate::topology::{BlockchainId, TopologyGraph};

/// Identifier of a transaction format; one per blockchain in a scenario.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct FormatId(pub u32);

impl FormatId {
    /// Formats and blockchains are in one-to-one correspondence.
    pub fn for_chain(chain: BlockchainId) -> Self {
        FormatId(chain.0)
    }
}

impl fmt::Display for FormatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The canonical transaction fields every format must carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalField {
    TxId,
    Sender,
    Receiver,
    Amount,
    Kind,
    OriginChain,
    OriginTxId,
    Dependency,
}

pub const CANONICAL_FIELDS: [CanonicalField; 8] = [
    CanonicalField::TxId,
    CanonicalField::Sender,
    CanonicalField::Receiver,
    CanonicalField::Amount,
    CanonicalField::Kind,
    CanonicalField::OriginChain,
    CanonicalField::OriginTxId,
    CanonicalField::Dependency,
];

impl CanonicalField {
    pub fn canonical_name(self) -> &'static str {
        match self {
            CanonicalField::TxId => "tx_id",
            CanonicalField::Sender => "sender",
            CanonicalField::Receiver => "receiver",
            CanonicalField::Amount => "amount",
            CanonicalField::Kind => "kind",
            CanonicalField::OriginChain => "origin_chain",
            CanonicalField::OriginTxId => "origin_tx_id",
            CanonicalField::Dependency => "dependency",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("field order is not a permutation of the canonical fields")]
    NotAPermutation,
    #[error("local field names are not injective")]
    DuplicateFieldName,
    #[error("amount_unit_scale must be >= 1")]
    ZeroScale,
    #[error("scaled amount overflows: {amount} * {scale}")]
    AmountOverflow { amount: u64, scale: u64 },
    #[error("local amount {local} is not a multiple of scale {scale}")]
    AmountNotDivisible { local: u64, scale: u64 },
    #[error("no translator registered for {0} -> {1}")]
    NotRegistered(FormatId, FormatId),
    #[error("transaction is in format {actual}, translator expects {expected}")]
    WrongSourceFormat { expected: FormatId, actual: FormatId },
    #[error("no format spec for blockchain {0}")]
    MissingSpec(BlockchainId),
    #[error("malformed encoding: {0}")]
    Malformed(String),
}

/// One blockchain's transaction layout: local field names, field order, and
/// the local-units-per-canonical-unit amount scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatSpec {
    field_order: Vec<CanonicalField>,
    field_names: BTreeMap<CanonicalField, String>,
    amount_unit_scale: u64,
}

impl FormatSpec {
    pub fn new(
        field_order: Vec<CanonicalField>,
        field_names: BTreeMap<CanonicalField, String>,
        amount_unit_scale: u64,
    ) -> Result<Self, FormatError> {
        let mut sorted = field_order.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != CANONICAL_FIELDS.len() || field_order.len() != CANONICAL_FIELDS.len() {
            return Err(FormatError::NotAPermutation);
        }
        let mut names = BTreeMap::new();
        for field in CANONICAL_FIELDS {
            let name = field_names
                .get(&field)
                .cloned()
                .unwrap_or_else(|| field.canonical_name().to_string());
            names.insert(field, name);
        }
        let mut values: Vec<&String> = names.values().collect();
        values.sort();
        values.dedup();
        if values.len() != CANONICAL_FIELDS.len() {
            return Err(FormatError::DuplicateFieldName);
        }
        if amount_unit_scale == 0 {
            return Err(FormatError::ZeroScale);
        }
        Ok(Self {
            field_order,
            field_names: names,
            amount_unit_scale,
        })
    }

    /// Canonical order, canonical names, scale 1.
    pub fn identity() -> Self {
        Self {
            field_order: CANONICAL_FIELDS.to_vec(),
            field_names: CANONICAL_FIELDS
                .iter()
                .map(|f| (*f, f.canonical_name().to_string()))
                .collect(),
            amount_unit_scale: 1,
        }
    }

    pub fn field_order(&self) -> &[CanonicalField] {
        &self.field_order
    }

    pub fn local_name(&self, field: CanonicalField) -> &str {
        &self.field_names[&field]
    }

    pub fn amount_unit_scale(&self) -> u64 {
        self.amount_unit_scale
    }

    fn scale_amount(&self, amount: u64) -> Result<u64, FormatError> {
        amount
            .checked_mul(self.amount_unit_scale)
            .ok_or(FormatError::AmountOverflow {
                amount,
                scale: self.amount_unit_scale,
            })
    }

    fn unscale_amount(&self, local: u64) -> Result<u64, FormatError> {
        if !local.is_multiple_of(self.amount_unit_scale) {
            return Err(FormatError::AmountNotDivisible {
                local,
                scale: self.amount_unit_scale,
            });
        }
        Ok(local / self.amount_unit_scale)
    }
}

impl Default for FormatSpec {
    fn default() -> Self {
        Self::identity()
    }
}

fn field_value(tx: &Transaction, field: CanonicalField, spec: &FormatSpec) -> Result<String, FormatError> {
    Ok(match field {
        CanonicalField::TxId => tx.tx_id.to_string(),
        CanonicalField::Sender => tx.sender.clone(),
        CanonicalField::Receiver => tx.receiver.clone(),
        CanonicalField::Amount => spec.scale_amount(tx.amount)?.to_string(),
        CanonicalField::Kind => match tx.kind {
            TxKind::Internal => "internal".to_string(),
            TxKind::CrossChain { .. } => "crosschain".to_string(),
        },
        CanonicalField::OriginChain => match &tx.kind {
            TxKind::Internal => "-".to_string(),
            TxKind::CrossChain { origin_chain, .. } => origin_chain.to_string(),
        },
        CanonicalField::OriginTxId => match &tx.kind {
            TxKind::Internal => "-".to_string(),
            TxKind::CrossChain { origin_tx_id, .. } => origin_tx_id.to_string(),
        },
        CanonicalField::Dependency => match &tx.kind {
            TxKind::CrossChain {
                dependency: Some(dep),
                ..
            } => format!("{}:{}", dep.chain, dep.tx_id),
            _ => "-".to_string(),
        },
    })
}

/// Encodes a transaction into the byte layout of `spec`: one `name=value`
/// line per field in the format's order, amounts in local units.
pub fn encode(tx: &Transaction, spec: &FormatSpec) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::with_capacity(256);
    for &field in &spec.field_order {
        out.extend_from_slice(spec.local_name(field).as_bytes());
        out.push(b'=');
        out.extend_from_slice(field_value(tx, field, spec)?.as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

/// Decodes bytes produced by [`encode`] under the same spec. The transaction
/// is tagged with `format_id`, the format the bytes are expressed in.
pub fn decode(bytes: &[u8], spec: &FormatSpec, format_id: FormatId) -> Result<Transaction, FormatError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| FormatError::Malformed("not utf-8".to_string()))?;
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() != spec.field_order.len() {
        return Err(FormatError::Malformed(format!(
            "expected {} fields, got {}",
            spec.field_order.len(),
            lines.len()
        )));
    }
    let mut values: BTreeMap<CanonicalField, &str> = BTreeMap::new();
    for (&field, line) in spec.field_order.iter().zip(&lines) {
        let (name, value) = line
            .split_once('=')
            .ok_or_else(|| FormatError::Malformed(format!("missing '=' in {line:?}")))?;
        if name != spec.local_name(field) {
            return Err(FormatError::Malformed(format!(
                "expected field {:?}, got {name:?}",
                spec.local_name(field)
            )));
        }
        values.insert(field, value);
    }
    let parse_hash = |s: &str| {
        TxId::from_hex(s).ok_or_else(|| FormatError::Malformed(format!("bad hash {s:?}")))
    };
    let parse_num = |s: &str| {
        s.parse::<u64>()
            .map_err(|_| FormatError::Malformed(format!("bad number {s:?}")))
    };
    let tx_id = parse_hash(values[&CanonicalField::TxId])?;
    let amount = spec.unscale_amount(parse_num(values[&CanonicalField::Amount])?)?;
    let kind = match values[&CanonicalField::Kind] {
        "internal" => {
            for field in [
                CanonicalField::OriginChain,
                CanonicalField::OriginTxId,
                CanonicalField::Dependency,
            ] {
                if values[&field] != "-" {
                    return Err(FormatError::Malformed(format!(
                        "internal transaction carries {field:?}"
                    )));
                }
            }
            TxKind::Internal
        }
        "crosschain" => {
            let origin_chain = BlockchainId(parse_num(values[&CanonicalField::OriginChain])? as u32);
            let origin_tx_id = parse_hash(values[&CanonicalField::OriginTxId])?;
            let dependency = match values[&CanonicalField::Dependency] {
                "-" => None,
                dep => {
                    let (chain, tx) = dep.split_once(':').ok_or_else(|| {
                        FormatError::Malformed(format!("bad dependency {dep:?}"))
                    })?;
                    Some(Dependency {
                        chain: BlockchainId(parse_num(chain)? as u32),
                        tx_id: parse_hash(tx)?,
                    })
                }
            };
            TxKind::CrossChain {
                origin_chain,
                origin_tx_id,
                dependency,
            }
        }
        other => return Err(FormatError::Malformed(format!("bad kind {other:?}"))),
    };
    Ok(Transaction {
        tx_id,
        sender: values[&CanonicalField::Sender].to_string(),
        receiver: values[&CanonicalField::Receiver].to_string(),
        amount,
        kind,
        format_id,
    })
}

/// Content id of a freshly created transaction: hash of its origin-format
/// encoding. The id and dependency fields cannot participate (mutually
/// dependent transactions would make the hash circular), so the preimage is
/// the identity-relevant fields in the origin format plus a creation sequence
/// number that keeps repeated identical payloads distinct.
pub fn tx_id_for(
    spec: &FormatSpec,
    sender: &str,
    receiver: &str,
    amount: u64,
    cross_chain: bool,
    origin_chain: BlockchainId,
    seq: u64,
) -> Result<TxId, FormatError> {
    let mut buf = Vec::with_capacity(128);
    for &field in &spec.field_order {
        let value = match field {
            CanonicalField::TxId | CanonicalField::OriginTxId | CanonicalField::Dependency => {
                continue
            }
            CanonicalField::Sender => sender.to_string(),
            CanonicalField::Receiver => receiver.to_string(),
            CanonicalField::Amount => spec.scale_amount(amount)?.to_string(),
            CanonicalField::Kind => if cross_chain { "crosschain" } else { "internal" }.to_string(),
            CanonicalField::OriginChain => origin_chain.to_string(),
        };
        buf.extend_from_slice(spec.local_name(field).as_bytes());
        buf.push(b'=');
        buf.extend_from_slice(value.as_bytes());
        buf.push(b'\n');
    }
    buf.extend_from_slice(&seq.to_le_bytes());
    Ok(TxId(crate::chain::sha256(&buf)))
}

/// The format-independent content of a transaction: everything except the
/// format tag, with the amount in canonical units. Translation must preserve
/// this projection exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalTx {
    pub tx_id: TxId,
    pub sender: String,
    pub receiver: String,
    pub amount: u64,
    pub kind: TxKind,
}

pub fn canonical_projection(tx: &Transaction) -> CanonicalTx {
    CanonicalTx {
        tx_id: tx.tx_id,
        sender: tx.sender.clone(),
        receiver: tx.receiver.clone(),
        amount: tx.amount,
        kind: tx.kind.clone(),
    }
}

/// One registered pairwise translator with the format layouts on each side.
#[derive(Debug, Clone)]
pub struct TransformEntry {
    pub from: FormatId,
    pub to: FormatId,
    pub from_spec: FormatSpec,
    pub to_spec: FormatSpec,
}

/// The set of pairwise translators, keyed by the direct-connection edges of
/// the topology. One entry per directed edge, nothing for indirect pairs.
#[derive(Debug, Clone, Default)]
pub struct TransformRegistry {
    entries: BTreeMap<(FormatId, FormatId), TransformEntry>,
}

impl TransformRegistry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, from: FormatId, to: FormatId) -> Option<&TransformEntry> {
        self.entries.get(&(from, to))
    }

    pub fn contains(&self, from: FormatId, to: FormatId) -> bool {
        self.entries.contains_key(&(from, to))
    }
}

/// Builds the registry for a topology: exactly one translator per directed
/// edge. Every node must have a format spec.
pub fn registry_for(
    graph: &TopologyGraph,
    specs: &BTreeMap<BlockchainId, FormatSpec>,
) -> Result<TransformRegistry, FormatError> {
    let mut entries = BTreeMap::new();
    for (from_chain, to_chain) in graph.edges() {
        let from_spec = specs
            .get(&from_chain)
            .ok_or(FormatError::MissingSpec(from_chain))?;
        let to_spec = specs
            .get(&to_chain)
            .ok_or(FormatError::MissingSpec(to_chain))?;
        let from = FormatId::for_chain(from_chain);
        let to = FormatId::for_chain(to_chain);
        entries.insert(
            (from, to),
            TransformEntry {
                from,
                to,
                from_spec: from_spec.clone(),
                to_spec: to_spec.clone(),
            },
        );
    }
    Ok(TransformRegistry { entries })
}

/// Translates a transaction from one directly connected format to another by
/// running it through the source wire encoding and re-tagging it with the
/// target format. Unregistered pairs are refused: a blockchain only knows how
/// to translate the formats of its direct neighbors.
pub fn transf(
    tx: &Transaction,
    from: FormatId,
    to: FormatId,
    registry: &TransformRegistry,
) -> Result<Transaction, FormatError> {
    let entry = registry
        .entry(from, to)
        .ok_or(FormatError::NotRegistered(from, to))?;
    if tx.format_id != from {
        return Err(FormatError::WrongSourceFormat {
            expected: from,
            actual: tx.format_id,
        });
    }
    let wire = encode(tx, &entry.from_spec)?;
    let mut translated = decode(&wire, &entry.from_spec, from)?;
    translated.format_id = to;
    debug_assert_eq!(canonical_projection(&translated), canonical_projection(tx));
    Ok(translated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::topology::{build_topology, TopologyKind};

    fn sample_tx(spec: &FormatSpec, fmt: FormatId) -> Transaction {
        Transaction::cross_chain(
            "alice@1",
            "bob@1",
            5,
            BlockchainId(1),
            Some(Dependency {
                chain: BlockchainId(3),
                tx_id: TxId([7; 32]),
            }),
            spec,
            fmt,
            42,
        )
        .unwrap()
    }

    fn permuted_spec() -> FormatSpec {
        FormatSpec::new(
            vec![
                CanonicalField::Amount,
                CanonicalField::Receiver,
                CanonicalField::Sender,
                CanonicalField::Kind,
                CanonicalField::TxId,
                CanonicalField::Dependency,
                CanonicalField::OriginTxId,
                CanonicalField::OriginChain,
            ],
            BTreeMap::from([
                (CanonicalField::Amount, "value_wei".to_string()),
                (CanonicalField::Sender, "from_addr".to_string()),
                (CanonicalField::Receiver, "to_addr".to_string()),
            ]),
            100,
        )
        .unwrap()
    }

    #[test]
    fn identity_round_trip() {
        let spec = FormatSpec::identity();
        let fmt = FormatId(1);
        let tx = sample_tx(&spec, fmt);
        let bytes = encode(&tx, &spec).unwrap();
        assert_eq!(decode(&bytes, &spec, fmt).unwrap(), tx);
    }

    #[test]
    fn permuted_scaled_round_trip() {
        let spec = permuted_spec();
        let fmt = FormatId(2);
        let tx = sample_tx(&spec, fmt);
        let bytes = encode(&tx, &spec).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        // amount 5 at scale 100 goes on the wire as 500
        assert!(text.contains("value_wei=500"), "{text}");
        assert_eq!(decode(&bytes, &spec, fmt).unwrap(), tx);
    }

    #[test]
    fn internal_tx_round_trip() {
        let spec = FormatSpec::identity();
        let tx = Transaction::internal("u1", "u2", 9, &spec, FormatId(1), 7).unwrap();
        let bytes = encode(&tx, &spec).unwrap();
        assert_eq!(decode(&bytes, &spec, FormatId(1)).unwrap(), tx);
    }

    #[test]
    fn spec_validation_rejects_bad_inputs() {
        assert_eq!(
            FormatSpec::new(vec![CanonicalField::TxId; 8], BTreeMap::new(), 1),
            Err(FormatError::NotAPermutation)
        );
        assert_eq!(
            FormatSpec::new(
                CANONICAL_FIELDS.to_vec(),
                BTreeMap::from([(CanonicalField::Sender, "receiver".to_string())]),
                1
            ),
            Err(FormatError::DuplicateFieldName)
        );
        assert_eq!(
            FormatSpec::new(CANONICAL_FIELDS.to_vec(), BTreeMap::new(), 0),
            Err(FormatError::ZeroScale)
        );
    }

    fn ring_registry(n: u32) -> (TransformRegistry, BTreeMap<BlockchainId, FormatSpec>) {
        let ids: Vec<BlockchainId> = (1..=n).map(BlockchainId).collect();
        let graph = build_topology(TopologyKind::Ring, &ids, None).unwrap();
        let mut specs = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            // Vary the scale so translation is not a no-op.
            let scale = 10u64.pow((i % 3) as u32);
            let spec = FormatSpec::new(
                CANONICAL_FIELDS.to_vec(),
                BTreeMap::from([(CanonicalField::Amount, format!("amt_{id}"))]),
                scale,
            )
            .unwrap();
            specs.insert(*id, spec);
        }
        (registry_for(&graph, &specs).unwrap(), specs)
    }

    #[test]
    fn registry_entry_counts_match_edge_counts() {
        for n in 3..=8 {
            let (reg, _) = ring_registry(n);
            assert_eq!(reg.len(), n as usize);
        }
        let ids: Vec<BlockchainId> = (1..=3).map(BlockchainId).collect();
        let full = build_topology(TopologyKind::Full, &ids, None).unwrap();
        let specs: BTreeMap<_, _> = ids.iter().map(|id| (*id, FormatSpec::identity())).collect();
        assert_eq!(registry_for(&full, &specs).unwrap().len(), 6);

        let ids: Vec<BlockchainId> = (1..=4).map(BlockchainId).collect();
        let star = build_topology(TopologyKind::Star, &ids, Some(BlockchainId(1))).unwrap();
        let specs: BTreeMap<_, _> = ids.iter().map(|id| (*id, FormatSpec::identity())).collect();
        assert_eq!(registry_for(&star, &specs).unwrap().len(), 6);
    }

    #[test]
    fn registry_for_missing_spec_fails() {
        let ids: Vec<BlockchainId> = (1..=3).map(BlockchainId).collect();
        let graph = build_topology(TopologyKind::Ring, &ids, None).unwrap();
        let mut specs: BTreeMap<_, _> =
            ids.iter().map(|id| (*id, FormatSpec::identity())).collect();
        specs.remove(&BlockchainId(2));
        assert_eq!(
            registry_for(&graph, &specs).unwrap_err(),
            FormatError::MissingSpec(BlockchainId(2))
        );
    }

    #[test]
    fn transf_refuses_unregistered_pairs() {
        let (reg, specs) = ring_registry(4);
        let tx = sample_tx(&specs[&BlockchainId(1)], FormatId(1));
        // 1 -> 3 is not an edge of the 4-ring
        assert_eq!(
            transf(&tx, FormatId(1), FormatId(3), &reg).unwrap_err(),
            FormatError::NotRegistered(FormatId(1), FormatId(3))
        );
    }

    #[test]
    fn transf_checks_source_format() {
        let (reg, specs) = ring_registry(4);
        let tx = sample_tx(&specs[&BlockchainId(2)], FormatId(2));
        assert_eq!(
            transf(&tx, FormatId(1), FormatId(2), &reg).unwrap_err(),
            FormatError::WrongSourceFormat {
                expected: FormatId(1),
                actual: FormatId(2),
            }
        );
    }

    #[test]
    fn composition_around_the_ring_preserves_content() {
        let (reg, specs) = ring_registry(5);
        let original = sample_tx(&specs[&BlockchainId(1)], FormatId(1));
        let mut tx = original.clone();
        for hop in 1..=5u32 {
            let from = FormatId(hop);
            let to = FormatId(hop % 5 + 1);
            tx = transf(&tx, from, to, &reg).unwrap();
            assert_eq!(tx.format_id, to);
            assert_eq!(
                tx.kind,
                original.kind,
                "origin identity must survive hop {hop}"
            );
        }
        // A full cycle lands back in the original format with equal content.
        assert_eq!(canonical_projection(&tx), canonical_projection(&original));
        assert_eq!(tx, original);
    }

    proptest! {
        #[test]
        fn round_trip_any_amount_and_names(amount in 0u64..1_000_000, scale in 1u64..10_000, seq in 0u64..1000) {
            let spec = FormatSpec::new(
                CANONICAL_FIELDS.to_vec(),
                BTreeMap::from([(CanonicalField::Amount, "units".to_string())]),
                scale,
            ).unwrap();
            let tx = Transaction::cross_chain(
                "s", "r", amount, BlockchainId(9), None, &spec, FormatId(9), seq,
            ).unwrap();
            let bytes = encode(&tx, &spec).unwrap();
            prop_assert_eq!(decode(&bytes, &spec, FormatId(9)).unwrap(), tx);
        }

        #[test]
        fn composition_along_any_ring_path_preserves_projection(
            n in 3u32..=8,
            start in 0u32..8,
            hops in 1u32..8,
            amount in 0u64..10_000,
        ) {
            let (reg, specs) = ring_registry(n);
            let start = start % n + 1;
            let hops = hops % n;       // stays within one lap
            let origin = BlockchainId(start);
            let tx0 = Transaction::cross_chain(
                "s", "r", amount, origin, None, &specs[&origin], FormatId(start), 1,
            ).unwrap();
            let mut tx = tx0.clone();
            for step in 0..hops {
                let from = (start - 1 + step) % n + 1;
                let to = (start - 1 + step + 1) % n + 1;
                tx = transf(&tx, FormatId(from), FormatId(to), &reg).unwrap();
            }
            prop_assert_eq!(canonical_projection(&tx), canonical_projection(&tx0));
        }
    }
}
