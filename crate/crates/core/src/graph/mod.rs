//! Directed temporal transaction multigraph: ingestion, base node features,
//! chronological splits and the message-passing view used by the backbones.

mod cache;
mod features;
mod io;
mod message;
mod split;

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use features::{derive_base_features, raw_base_features, standardize_columns, BASE_FEATURE_DIM};
pub use io::{
    load_feature_override, load_labels, load_transactions, write_labels, write_transactions,
    ColumnSchema, LoadReport, RawTransactions,
};
pub use message::{message_graph, CsrMatrix, MessageGraph};
pub use split::{activation_times, chronological_split, DataSplit, SplitRatios};

use std::collections::HashMap;

use ndarray::Array2;
use thiserror::Error;

pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: malformed field `{field}`: {reason}")]
    MalformedRow {
        row: usize,
        field: String,
        reason: String,
    },
    #[error("row {row}: negative amount")]
    NegativeAmount { row: usize },
    #[error("row {row}: unparsable timestamp `{value}`")]
    BadTimestamp { row: usize, value: String },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("row {row}: label must be 0 or 1, got `{value}`")]
    BadLabel { row: usize, value: String },
    #[error("feature file: {0}")]
    BadFeatures(String),
    #[error("need at least {needed} labeled nodes for a split, found {found}")]
    TooFewLabeled { needed: usize, found: usize },
    #[error("invalid split ratios: {0}")]
    BadRatios(String),
    #[error("graph cache: {0}")]
    Cache(String),
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

/// One directed, timestamped transfer.
///
/// `index` is the position in the time-sorted stream and breaks timestamp
/// ties; every temporal comparison downstream uses `(time, index)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transaction {
    pub src: NodeId,
    pub dst: NodeId,
    pub time: i64,
    pub amount: f64,
    pub index: u64,
}

impl Transaction {
    #[inline]
    pub fn order_key(&self) -> (i64, u64) {
        (self.time, self.index)
    }
}

/// Bidirectional address <-> dense index map, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeIndex {
    addresses: Vec<String>,
    lookup: HashMap<String, NodeId>,
}

impl NodeIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, address: &str) -> NodeId {
        if let Some(&id) = self.lookup.get(address) {
            return id;
        }
        let id = self.addresses.len() as NodeId;
        self.addresses.push(address.to_owned());
        self.lookup.insert(address.to_owned(), id);
        id
    }

    pub fn get(&self, address: &str) -> Option<NodeId> {
        self.lookup.get(address).copied()
    }

    pub fn address(&self, id: NodeId) -> &str {
        &self.addresses[id as usize]
    }

    pub fn addresses(&self) -> &[String] {
        &self.addresses
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }
}

/// The `G = (V, E, X)` triple plus optional node labels (`None` = unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraph {
    pub num_nodes: usize,
    pub edges: Vec<Transaction>,
    pub node_ids: NodeIndex,
    pub features: Array2<f64>,
    pub labels: Vec<Option<bool>>,
}

impl TemporalGraph {
    /// Builds a graph from time-sorted edges, deriving base features.
    pub fn new(node_ids: NodeIndex, edges: Vec<Transaction>) -> Result<Self, GraphError> {
        let num_nodes = node_ids.len();
        let mut graph = TemporalGraph {
            num_nodes,
            edges,
            node_ids,
            features: Array2::zeros((num_nodes, BASE_FEATURE_DIM)),
            labels: vec![None; num_nodes],
        };
        graph.features = derive_base_features(&graph);
        graph.validate()?;
        Ok(graph)
    }

    /// Loads the transaction CSV and builds the graph in one go.
    pub fn from_raw(raw: RawTransactions) -> Result<Self, GraphError> {
        Self::new(raw.node_ids, raw.transactions)
    }

    /// Attaches labels by address; addresses not yet in the graph become
    /// isolated nodes (all-zero raw features).
    pub fn attach_labels(&mut self, labels: &[(String, bool)]) -> Result<(), GraphError> {
        let before = self.num_nodes;
        for (addr, _) in labels {
            self.node_ids.intern(addr);
        }
        if self.node_ids.len() != before {
            self.num_nodes = self.node_ids.len();
            self.labels.resize(self.num_nodes, None);
            self.features = derive_base_features(self);
        }
        for (addr, y) in labels {
            let id = self.node_ids.get(addr).expect("interned above");
            self.labels[id as usize] = Some(*y);
        }
        Ok(())
    }

    /// Replaces the derived features with user-supplied ones.
    pub fn set_features(&mut self, features: Array2<f64>) -> Result<(), GraphError> {
        if features.nrows() != self.num_nodes {
            return Err(GraphError::BadFeatures(format!(
                "expected {} rows, got {}",
                self.num_nodes,
                features.nrows()
            )));
        }
        self.features = features;
        self.validate()
    }

    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&i| self.labels[i].is_some()).collect()
    }

    pub fn label_vector(&self) -> Vec<f64> {
        self.labels
            .iter()
            .map(|l| if *l == Some(true) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.features.nrows() != self.num_nodes {
            return Err(GraphError::Invariant(format!(
                "features have {} rows for {} nodes",
                self.features.nrows(),
                self.num_nodes
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::Invariant("non-finite feature entry".into()));
        }
        if self.labels.len() != self.num_nodes {
            return Err(GraphError::Invariant("label vector length mismatch".into()));
        }
        let n = self.num_nodes as NodeId;
        for (pos, e) in self.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(GraphError::Invariant(format!("edge {pos} endpoint out of range")));
            }
            if e.src == e.dst {
                return Err(GraphError::Invariant(format!("edge {pos} is a self-transfer")));
            }
            if pos > 0 && self.edges[pos - 1].order_key() >= e.order_key() {
                return Err(GraphError::Invariant(format!("edge {pos} breaks (time, index) order")));
            }
        }
        Ok(())
    }
}

/// Sorts `(src, dst, time, amount)` rows by time (stable, so file order breaks
/// ties) and assigns stream indices. Self-transfers are dropped and counted.
pub fn build_sorted_stream(rows: Vec<(NodeId, NodeId, i64, f64)>) -> (Vec<Transaction>, usize) {
    let mut self_transfers = 0;
    let mut kept: Vec<_> = rows
        .into_iter()
        .filter(|&(s, d, _, _)| {
            if s == d {
                self_transfers += 1;
                false
            } else {
                true
            }
        })
        .collect();
    kept.sort_by_key(|&(_, _, t, _)| t);
    let edges = kept
        .into_iter()
        .enumerate()
        .map(|(i, (src, dst, time, amount))| Transaction { src, dst, time, amount, index: i as u64 })
        .collect();
    (edges, self_transfers)
}
