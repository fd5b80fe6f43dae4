//! Canonical 3-edge temporal motif taxonomy and per-node motif-role counting.

mod matcher;
mod oracle;
mod taxonomy;

pub use matcher::{aggregate_transactions, count_motifs, HistorySampling, MotifCountMatrix, MotifMatchConfig};
pub use oracle::{count_motifs_bruteforce, BRUTEFORCE_MAX_EDGES};
pub use taxonomy::{
    enumerate_taxonomy, MotifSignature, MotifTaxonomy, RoleMap, RolePair, MOTIF_COLUMNS, NUM_MOTIFS, NUM_ROLES,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotifError {
    #[error("invalid motif config: {0}")]
    InvalidConfig(String),
    #[error("brute-force oracle limited to {limit} edges, got {edges}")]
    TooLarge { edges: usize, limit: usize },
    #[error("count csv: {0}")]
    Csv(String),
}
