use serde::{Deserialize, Serialize};

use super::{GraphError, TemporalGraph};

pub const MIN_LABELED_FOR_SPLIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.6, val: 0.2, test: 0.2 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), GraphError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(GraphError::BadRatios(format!("{parts:?} outside [0,1]")));
        }
        if ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(GraphError::BadRatios(format!("{parts:?} do not sum to 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DataSplit {
    pub train_nodes: Vec<usize>,
    pub val_nodes: Vec<usize>,
    pub test_nodes: Vec<usize>,
}

/// Timestamp of each node's first incident transaction; `None` if isolated.
pub fn activation_times(graph: &TemporalGraph) -> Vec<Option<i64>> {
    let mut act = vec![None; graph.num_nodes];
    // edges are time-sorted, so the first hit is the earliest
    for e in &graph.edges {
        for v in [e.src as usize, e.dst as usize] {
            if act[v].is_none() {
                act[v] = Some(e.time);
            }
        }
    }
    act
}

/// Orders labeled nodes by `(activation time, node index)` and cuts them into
/// train/val/test. Val and test sizes are floored; the remainder goes to
/// train. Isolated labeled nodes sort last.
pub fn chronological_split(graph: &TemporalGraph, ratios: SplitRatios) -> Result<DataSplit, GraphError> {
    ratios.validate()?;
    let labeled = graph.labeled_nodes();
    if labeled.len() < MIN_LABELED_FOR_SPLIT {
        return Err(GraphError::TooFewLabeled { needed: MIN_LABELED_FOR_SPLIT, found: labeled.len() });
    }
    let act = activation_times(graph);
    let mut order = labeled;
    order.sort_by_key(|&v| (act[v].unwrap_or(i64::MAX), v));

    let n = order.len();
    let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let n_val = floor(ratios.val);
    let n_test = floor(ratios.test);
    let n_train = n - n_val - n_test;

    Ok(DataSplit {
        train_nodes: order[..n_train].to_vec(),
        val_nodes: order[n_train..n_train + n_val].to_vec(),
        test_nodes: order[n_train + n_val..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{NodeIndex, TemporalGraph};
    use proptest::prelude::*;

    /// Node `i` gets activation time `times[i]` through an edge to a shared
    /// unlabeled sink.
    fn graph_with_activation(times: &[i64]) -> TemporalGraph {
        let mut ids = NodeIndex::new();
        let nodes: Vec<u32> = (0..times.len()).map(|i| ids.intern(&format!("n{i}"))).collect();
        let sink = ids.intern("sink");
        let mut rows: Vec<_> = nodes.iter().zip(times).map(|(&v, &t)| (v, sink, t, 1.0)).collect();
        rows.sort_by_key(|r| r.2);
        let (edges, _) = crate::graph::build_sorted_stream(rows);
        let mut g = TemporalGraph::new(ids, edges).unwrap();
        for i in 0..times.len() {
            g.labels[i] = Some(i % 3 == 0);
        }
        g
    }

    #[test]
    fn ten_nodes_six_two_two() {
        let g = graph_with_activation(&(1..=10).collect::<Vec<_>>());
        let s = chronological_split(&g, SplitRatios::default()).unwrap();
        assert_eq!(s.train_nodes, (0..6).collect::<Vec<_>>());
        assert_eq!(s.val_nodes, vec![6, 7]);
        assert_eq!(s.test_nodes, vec![8, 9]);
    }

    #[test]
    fn ties_fall_back_to_index() {
        let g = graph_with_activation(&[7; 10]);
        let s = chronological_split(&g, SplitRatios::default()).unwrap();
        assert_eq!((s.train_nodes.len(), s.val_nodes.len(), s.test_nodes.len()), (6, 2, 2));
        assert_eq!(s.train_nodes, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn five_nodes_three_one_one() {
        let g = graph_with_activation(&[5, 4, 3, 2, 1]);
        let s = chronological_split(&g, SplitRatios::default()).unwrap();
        assert_eq!((s.train_nodes.len(), s.val_nodes.len(), s.test_nodes.len()), (3, 1, 1));
        assert_eq!(s.test_nodes, vec![0]);
    }

    #[test]
    fn too_few_labeled() {
        let g = graph_with_activation(&[1, 2, 3, 4]);
        assert!(matches!(
            chronological_split(&g, SplitRatios::default()),
            Err(GraphError::TooFewLabeled { found: 4, .. })
        ));
    }

    proptest! {
        #[test]
        fn split_is_a_deterministic_partition(times in prop::collection::vec(0i64..50, 5..80)) {
            let g = graph_with_activation(&times);
            let a = chronological_split(&g, SplitRatios::default()).unwrap();
            let b = chronological_split(&g, SplitRatios::default()).unwrap();
            prop_assert_eq!(&a, &b);
            let mut all: Vec<usize> = a.train_nodes.iter().chain(&a.val_nodes).chain(&a.test_nodes).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, g.labeled_nodes());
            let n = times.len();
            prop_assert_eq!(a.val_nodes.len(), n / 5);
            prop_assert_eq!(a.test_nodes.len(), n / 5);
            // chronology: nothing in val/test activates before the last train node
            let act = activation_times(&g);
            let last_train = a.train_nodes.iter().map(|&v| act[v]).max().unwrap();
            prop_assert!(a.val_nodes.iter().chain(&a.test_nodes).all(|&v| act[v] >= last_train));
        }
    }
}
