//! Inter-blockchain topology: a directed graph of direct connections.
//!
//! An edge `(a, b)` means cross-chain data flows from `a` to `b`: blockchain
//! `b` synchronizes `a`'s chain of blocks, verifies it under `a`'s consensus,
//! and re-seals `a`'s cross-chain transactions. A topology is usable for
//! propagation only when the graph is strongly connected, otherwise at least
//! one blockchain can never receive (or never emit) cross-chain data.
//!
//! Connection changes go through a proposal/agreement protocol run by a fixed
//! set of topology-selection accounts; a proposal is applied only when enough
//! of them agree and the resulting graph keeps its invariants.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default cap on the number of outgoing direct connections per blockchain.
pub const DEFAULT_MAX_OUT_DEGREE: usize = 4;

/// Default fraction of topology-selection accounts that must agree before a
/// membership proposal is applied.
pub const DEFAULT_AGREEMENT_THRESHOLD: Fraction = Fraction { num: 2, den: 3 };

/// Identifier of one blockchain in a simulation. Small, unique, stable.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct BlockchainId(pub u32);

impl fmt::Display for BlockchainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Account addresses are opaque strings; no keys or signatures are modeled.
pub type Address = String;

/// An exact rational in (0, 1], used for agreement thresholds so that the
/// required count is computed without floating-point rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Result<Self, TopologyError> {
        if den == 0 || num == 0 || num > den {
            return Err(TopologyError::InvalidThreshold { num, den });
        }
        Ok(Self { num, den })
    }

    /// Smallest integer `k` with `k >= self * count`.
    pub fn ceil_of(&self, count: usize) -> usize {
        let count = count as u64;
        ((self.num * count).div_ceil(self.den)) as usize
    }

    /// Parses the `"2/3"` form used in scenario configs.
    pub fn parse(s: &str) -> Result<Self, TopologyError> {
        let mut parts = s.splitn(2, '/');
        let bad = || TopologyError::MalformedThreshold(s.to_string());
        let num = parts.next().ok_or_else(bad)?.trim();
        let den = parts.next().ok_or_else(bad)?.trim();
        let num: u64 = num.parse().map_err(|_| bad())?;
        let den: u64 = den.parse().map_err(|_| bad())?;
        Fraction::new(num, den)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// How two distinct blockchains relate in a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionType {
    /// An edge exists: the data of `a` reaches `b` in one synchronization hop.
    Direct,
    /// No edge, but a directed path exists, so data arrives through
    /// intermediate blockchains.
    Indirect,
    /// No directed path at all.
    NotConnected,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("blockchain {0} is not part of the topology")]
    UnknownBlockchain(BlockchainId),
    #[error("duplicate blockchain id {0}")]
    DuplicateBlockchain(BlockchainId),
    #[error("self edge {0}->{0} is not allowed")]
    SelfEdge(BlockchainId),
    #[error("star topology requires a hub")]
    MissingHub,
    #[error("hub {0} is not in the node list")]
    HubNotMember(BlockchainId),
    #[error("at least {required} nodes required, got {got}")]
    TooFewNodes { required: usize, got: usize },
    #[error("out-degree of {node} would be {degree}, cap is {cap}")]
    DegreeCapExceeded {
        node: BlockchainId,
        degree: usize,
        cap: usize,
    },
    #[error("threshold {num}/{den} is not a fraction in (0, 1]")]
    InvalidThreshold { num: u64, den: u64 },
    #[error("cannot parse threshold fraction {0:?}")]
    MalformedThreshold(String),
    #[error("agreement from {0} which is not a topology-selection account")]
    UnknownAgreementAccount(Address),
    #[error("proposal has {got} agreements, needs {required} of {accounts}")]
    ThresholdNotMet {
        got: usize,
        required: usize,
        accounts: usize,
    },
    #[error("edge {0}->{1} already exists")]
    EdgeExists(BlockchainId, BlockchainId),
    #[error("edge {0}->{1} does not exist")]
    EdgeMissing(BlockchainId, BlockchainId),
    #[error("resulting graph would not be strongly connected")]
    NotStronglyConnected,
}

/// Directed graph of blockchains; edges are direct connections in the
/// direction cross-chain data travels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyGraph {
    nodes: BTreeSet<BlockchainId>,
    edges: BTreeSet<(BlockchainId, BlockchainId)>,
    max_out_degree: usize,
}

/// Canonical topology shapes that can be built directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    /// Each blockchain has exactly one outgoing and one incoming connection.
    Ring,
    /// Every non-hub blockchain exchanges data with the hub in both directions.
    Star,
    /// All ordered pairs are connected.
    Full,
}

impl TopologyGraph {
    /// Builds a graph from explicit nodes and edges, validating the structural
    /// invariants (no self edges, endpoints known, degree cap respected).
    /// Strong connectivity is deliberately *not* required here; it is a
    /// property of graphs accepted for propagation, checked by callers.
    pub fn new(
        nodes: impl IntoIterator<Item = BlockchainId>,
        edges: impl IntoIterator<Item = (BlockchainId, BlockchainId)>,
        max_out_degree: usize,
    ) -> Result<Self, TopologyError> {
        let mut node_set = BTreeSet::new();
        for n in nodes {
            if !node_set.insert(n) {
                return Err(TopologyError::DuplicateBlockchain(n));
            }
        }
        if node_set.is_empty() {
            return Err(TopologyError::TooFewNodes { required: 1, got: 0 });
        }
        let mut graph = Self {
            nodes: node_set,
            edges: BTreeSet::new(),
            max_out_degree,
        };
        for (from, to) in edges {
            graph.insert_edge(from, to)?;
        }
        Ok(graph)
    }

    fn insert_edge(&mut self, from: BlockchainId, to: BlockchainId) -> Result<(), TopologyError> {
        if from == to {
            return Err(TopologyError::SelfEdge(from));
        }
        for id in [from, to] {
            if !self.nodes.contains(&id) {
                return Err(TopologyError::UnknownBlockchain(id));
            }
        }
        let degree = self.out_degree(from) + 1;
        if degree > self.max_out_degree {
            return Err(TopologyError::DegreeCapExceeded {
                node: from,
                degree,
                cap: self.max_out_degree,
            });
        }
        self.edges.insert((from, to));
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = BlockchainId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (BlockchainId, BlockchainId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn max_out_degree(&self) -> usize {
        self.max_out_degree
    }

    pub fn contains(&self, id: BlockchainId) -> bool {
        self.nodes.contains(&id)
    }

    pub fn has_edge(&self, from: BlockchainId, to: BlockchainId) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn out_degree(&self, id: BlockchainId) -> usize {
        self.successors(id).count()
    }

    pub fn in_degree(&self, id: BlockchainId) -> usize {
        self.edges.iter().filter(|(_, to)| *to == id).count()
    }

    /// Nodes reachable from `id` in one hop, in ascending id order.
    pub fn successors(&self, id: BlockchainId) -> impl Iterator<Item = BlockchainId> + '_ {
        self.edges
            .range((id, BlockchainId(u32::MIN))..=(id, BlockchainId(u32::MAX)))
            .map(|(_, to)| *to)
    }

    /// Nodes with an edge into `id`, in ascending id order.
    pub fn predecessors(&self, id: BlockchainId) -> impl Iterator<Item = BlockchainId> + '_ {
        self.edges
            .iter()
            .filter(move |(_, to)| *to == id)
            .map(|(from, _)| *from)
    }

    /// True iff every ordered pair of distinct nodes is connected by a
    /// directed path. Single-pass Tarjan: strongly connected iff there is
    /// exactly one strongly connected component.
    pub fn is_strongly_connected(&self) -> bool {
        let index: BTreeMap<BlockchainId, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (from, to) in &self.edges {
            adj[index[from]].push(index[to]);
        }
        tarjan_scc(&adj).len() == 1
    }

    /// All ordered pairs `(a, b)` with no directed path from `a` to `b`.
    /// Empty exactly when the graph is strongly connected.
    pub fn unreachable_pairs(&self) -> Vec<(BlockchainId, BlockchainId)> {
        let mut missing = Vec::new();
        for &a in &self.nodes {
            let reach = self.reachable_from(a);
            for &b in &self.nodes {
                if a != b && !reach.contains(&b) {
                    missing.push((a, b));
                }
            }
        }
        missing
    }

    fn reachable_from(&self, start: BlockchainId) -> BTreeSet<BlockchainId> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for next in self.successors(node) {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// Classifies the relation between two distinct member blockchains.
    pub fn classify_connection(
        &self,
        a: BlockchainId,
        b: BlockchainId,
    ) -> Result<ConnectionType, TopologyError> {
        for id in [a, b] {
            if !self.contains(id) {
                return Err(TopologyError::UnknownBlockchain(id));
            }
        }
        if self.has_edge(a, b) {
            Ok(ConnectionType::Direct)
        } else if self.reachable_from(a).contains(&b) {
            Ok(ConnectionType::Indirect)
        } else {
            Ok(ConnectionType::NotConnected)
        }
    }

    /// Shortest directed path from `from` to `to`, inclusive of both ends.
    /// Ties are broken toward the smallest next-hop id so the route is
    /// reproducible across runs.
    pub fn propagation_path(
        &self,
        from: BlockchainId,
        to: BlockchainId,
    ) -> Result<Vec<BlockchainId>, TopologyError> {
        for id in [from, to] {
            if !self.contains(id) {
                return Err(TopologyError::UnknownBlockchain(id));
            }
        }
        // BFS visiting successors in ascending id order: the first parent
        // recorded for a node is the smallest-id predecessor at its depth.
        let mut parent: BTreeMap<BlockchainId, BlockchainId> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(node) = queue.pop_front() {
            if node == to {
                break;
            }
            for next in self.successors(node) {
                if seen.insert(next) {
                    parent.insert(next, node);
                    queue.push_back(next);
                }
            }
        }
        if from != to && !parent.contains_key(&to) {
            return Err(TopologyError::NotStronglyConnected);
        }
        let mut path = vec![to];
        let mut cursor = to;
        while cursor != from {
            cursor = parent[&cursor];
            path.push(cursor);
        }
        path.reverse();
        Ok(path)
    }

    /// Hop distance from `from` to `to` along directed edges; 0 for `from == to`.
    pub fn hop_distance(
        &self,
        from: BlockchainId,
        to: BlockchainId,
    ) -> Result<usize, TopologyError> {
        Ok(self.propagation_path(from, to)?.len() - 1)
    }

    /// Longest shortest-path distance over all ordered pairs. Requires a
    /// strongly connected graph.
    pub fn diameter(&self) -> Result<usize, TopologyError> {
        let mut best = 0;
        for a in self.nodes() {
            for b in self.nodes() {
                if a != b {
                    best = best.max(self.hop_distance(a, b)?);
                }
            }
        }
        Ok(best)
    }
}

/// Builds one of the canonical topologies over `ids` (in the given order for
/// rings). Star requires `hub`. The degree cap is set to the larger of the
/// default and what the shape itself needs.
pub fn build_topology(
    kind: TopologyKind,
    ids: &[BlockchainId],
    hub: Option<BlockchainId>,
) -> Result<TopologyGraph, TopologyError> {
    if ids.len() < 2 {
        return Err(TopologyError::TooFewNodes {
            required: 2,
            got: ids.len(),
        });
    }
    let mut edges = Vec::new();
    match kind {
        TopologyKind::Ring => {
            for (i, &id) in ids.iter().enumerate() {
                edges.push((id, ids[(i + 1) % ids.len()]));
            }
        }
        TopologyKind::Star => {
            let hub = hub.ok_or(TopologyError::MissingHub)?;
            if !ids.contains(&hub) {
                return Err(TopologyError::HubNotMember(hub));
            }
            for &id in ids.iter().filter(|&&id| id != hub) {
                edges.push((hub, id));
                edges.push((id, hub));
            }
        }
        TopologyKind::Full => {
            for &a in ids {
                for &b in ids.iter().filter(|&&b| b != a) {
                    edges.push((a, b));
                }
            }
        }
    }
    let needed = match kind {
        TopologyKind::Ring => 1,
        TopologyKind::Star => ids.len() - 1,
        TopologyKind::Full => ids.len() - 1,
    };
    TopologyGraph::new(
        ids.iter().copied(),
        edges,
        DEFAULT_MAX_OUT_DEGREE.max(needed),
    )
}

/// Whether a membership proposal adds or removes a direct connection.
/// Removal uses the same agreement machinery but must additionally keep the
/// graph strongly connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipAction {
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalStatus {
    Pending,
    Applied,
    Rejected,
}

/// A proposed connection change plus the agreement transactions collected so
/// far from topology-selection accounts.
#[derive(Debug, Clone)]
pub struct MembershipProposal {
    pub proposer: Address,
    pub action: MembershipAction,
    pub target_edge: (BlockchainId, BlockchainId),
    pub agreements: BTreeSet<Address>,
    pub threshold: Fraction,
    pub status: ProposalStatus,
}

impl MembershipProposal {
    pub fn new(
        proposer: impl Into<Address>,
        action: MembershipAction,
        target_edge: (BlockchainId, BlockchainId),
        threshold: Fraction,
    ) -> Self {
        Self {
            proposer: proposer.into(),
            action,
            target_edge,
            agreements: BTreeSet::new(),
            threshold,
            status: ProposalStatus::Pending,
        }
    }

    pub fn agree(&mut self, account: impl Into<Address>) {
        self.agreements.insert(account.into());
    }
}

/// Hook for vetting the target of a new connection. Evaluation of a target
/// blockchain beyond the structural checks is out of scope, so this always
/// passes; it exists to mark where such a policy would plug in.
fn evaluate_connection_target(_target: BlockchainId) -> bool {
    true
}

/// Applies a membership proposal, returning the updated graph.
///
/// The proposal is applied only when all of these hold, otherwise its status
/// becomes `Rejected` and the error says why:
/// agreements come from known selection accounts and meet the threshold,
/// the degree cap is respected, and the resulting graph is still strongly
/// connected.
pub fn apply_membership(
    graph: &TopologyGraph,
    proposal: &mut MembershipProposal,
    selection_accounts: &BTreeSet<Address>,
) -> Result<TopologyGraph, TopologyError> {
    let result = check_and_apply(graph, proposal, selection_accounts);
    proposal.status = match result {
        Ok(_) => ProposalStatus::Applied,
        Err(_) => ProposalStatus::Rejected,
    };
    result
}

fn check_and_apply(
    graph: &TopologyGraph,
    proposal: &MembershipProposal,
    selection_accounts: &BTreeSet<Address>,
) -> Result<TopologyGraph, TopologyError> {
    for account in &proposal.agreements {
        if !selection_accounts.contains(account) {
            return Err(TopologyError::UnknownAgreementAccount(account.clone()));
        }
    }
    let required = proposal.threshold.ceil_of(selection_accounts.len());
    if proposal.agreements.len() < required {
        return Err(TopologyError::ThresholdNotMet {
            got: proposal.agreements.len(),
            required,
            accounts: selection_accounts.len(),
        });
    }
    let (from, to) = proposal.target_edge;
    let mut next = graph.clone();
    match proposal.action {
        MembershipAction::Add => {
            if graph.has_edge(from, to) {
                return Err(TopologyError::EdgeExists(from, to));
            }
            if !evaluate_connection_target(to) {
                return Err(TopologyError::NotStronglyConnected);
            }
            next.insert_edge(from, to)?;
        }
        MembershipAction::Remove => {
            if !next.edges.remove(&(from, to)) {
                return Err(TopologyError::EdgeMissing(from, to));
            }
        }
    }
    if !next.is_strongly_connected() {
        return Err(TopologyError::NotStronglyConnected);
    }
    Ok(next)
}

/// Tarjan's strongly connected components over an adjacency list, iterative
/// so deep graphs cannot overflow the stack.
fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    #[derive(Clone)]
    struct NodeState {
        index: Option<usize>,
        lowlink: usize,
        on_stack: bool,
    }
    let n = adj.len();
    let mut state = vec![
        NodeState {
            index: None,
            lowlink: 0,
            on_stack: false,
        };
        n
    ];
    let mut next_index = 0;
    let mut stack = Vec::new();
    let mut components = Vec::new();
    // (node, next child position) frames replace recursion.
    let mut frames: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if state[root].index.is_some() {
            continue;
        }
        frames.push((root, 0));
        state[root].index = Some(next_index);
        state[root].lowlink = next_index;
        next_index += 1;
        stack.push(root);
        state[root].on_stack = true;

        while let Some(&mut (v, ref mut child)) = frames.last_mut() {
            if *child < adj[v].len() {
                let w = adj[v][*child];
                *child += 1;
                match state[w].index {
                    None => {
                        state[w].index = Some(next_index);
                        state[w].lowlink = next_index;
                        next_index += 1;
                        stack.push(w);
                        state[w].on_stack = true;
                        frames.push((w, 0));
                    }
                    Some(w_index) => {
                        if state[w].on_stack {
                            state[v].lowlink = state[v].lowlink.min(w_index);
                        }
                    }
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    state[parent].lowlink = state[parent].lowlink.min(state[v].lowlink);
                }
                if state[v].lowlink == state[v].index.unwrap() {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        state[w].on_stack = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    components.push(component);
                }
            }
        }
    }
    components
}
