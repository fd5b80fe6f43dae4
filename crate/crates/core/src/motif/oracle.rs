use super::matcher::{aggregate_transactions, MotifCountMatrix, MotifMatchConfig};
use super::taxonomy::{MotifTaxonomy, RoleMap};
use super::MotifError;
use crate::graph::{TemporalGraph, Transaction};

/// Largest stream the cubic oracle accepts.
pub const BRUTEFORCE_MAX_EDGES: usize = 2000;

/// Exhaustive O(M^3) counter with the same window and aggregation semantics
/// as [`super::count_motifs`] and no edge limit. Every ordered triple is
/// visited; classification goes through the taxonomy's signature map rather
/// than the matcher's lookup table.
pub fn count_motifs_bruteforce(
    graph: &TemporalGraph,
    cfg: &MotifMatchConfig,
    taxonomy: &MotifTaxonomy,
) -> Result<MotifCountMatrix, MotifError> {
    cfg.validate()?;
    let m = graph.edges.len();
    if m > BRUTEFORCE_MAX_EDGES {
        return Err(MotifError::TooLarge { edges: m, limit: BRUTEFORCE_MAX_EDGES });
    }
    let pool: Vec<Transaction> = match cfg.aggregation {
        Some(dt) => aggregate_transactions(&graph.edges, dt),
        None => graph.edges.clone(),
    };
    let mut counts = MotifCountMatrix::zeros(graph.num_nodes);
    for anchor in &graph.edges {
        let earliest = anchor.time - cfg.window;
        for first in &pool {
            for second in &pool {
                let ordered = first.order_key() < second.order_key() && second.order_key() < anchor.order_key();
                if !ordered || first.time < earliest {
                    continue;
                }
                let triple = [(first.src, first.dst), (second.src, second.dst), (anchor.src, anchor.dst)];
                let Some(sig) = MotifTaxonomy::signature_of(triple) else { continue };
                if sig.node_count < 2 {
                    continue;
                }
                let motif = taxonomy.index_of(&sig.edges).expect("signature outside taxonomy");
                let mut nodes = [u32::MAX; 3];
                for (e, roles) in triple.iter().zip(sig.edges) {
                    nodes[roles.0 as usize] = e.0;
                    nodes[roles.1 as usize] = e.1;
                }
                counts.record(motif, &RoleMap { nodes, len: sig.node_count });
            }
        }
    }
    Ok(counts)
}
