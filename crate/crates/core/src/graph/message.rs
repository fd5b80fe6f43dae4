use std::sync::Arc;

use ndarray::Array2;

use super::TemporalGraph;

/// Compressed sparse row matrix, just enough for propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists; columns must be unique per row.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Self { n_rows: rows.len(), n_cols, indptr, indices, data }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.data[span].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// `self · dense`, row by row in a fixed order.
    pub fn matmul(&self, dense: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n_cols, dense.nrows(), "sparse-dense shape mismatch");
        let mut out = Array2::zeros((self.n_rows, dense.ncols()));
        for r in 0..self.n_rows {
            let mut orow = out.row_mut(r);
            for (c, v) in self.row(r) {
                orow.scaled_add(v, &dense.row(c));
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.n_cols];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                rows[c].push((r, v));
            }
        }
        Self::from_rows(self.n_rows, rows)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out[[r, c]] = v;
            }
        }
        out
    }
}

/// Simple undirected view of the multigraph used for message passing.
#[derive(Debug, Clone)]
pub struct MessageGraph {
    pub num_nodes: usize,
    /// Deduplicated undirected edges `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(u32, u32)>,
    /// `D^-1/2 (A + I) D^-1/2`.
    pub gcn: Arc<CsrMatrix>,
    /// Row-normalized neighbour mean (self excluded) and its transpose.
    pub mean: Arc<CsrMatrix>,
    pub mean_t: Arc<CsrMatrix>,
    pub neighbors: Vec<Vec<u32>>,
}

impl MessageGraph {
    pub fn from_undirected(num_nodes: usize, mut edges: Vec<(u32, u32)>) -> Self {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.retain(|e| e.0 != e.1);
        edges.sort_unstable();
        edges.dedup();

        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            neighbors[u as usize].push(v);
            neighbors[v as usize].push(u);
        }
        for nb in neighbors.iter_mut() {
            nb.sort_unstable();
        }

        let deg: Vec<f64> = neighbors.iter().map(|nb| nb.len() as f64 + 1.0).collect();
        let gcn_rows = (0..num_nodes)
            .map(|i| {
                let mut row = vec![(i, 1.0 / deg[i])];
                row.extend(neighbors[i].iter().map(|&j| (j as usize, 1.0 / (deg[i] * deg[j as usize]).sqrt())));
                row
            })
            .collect();
        let mean_rows = neighbors
            .iter()
            .map(|nb| {
                let w = 1.0 / nb.len().max(1) as f64;
                nb.iter().map(|&j| (j as usize, w)).collect()
            })
            .collect();
        let gcn = CsrMatrix::from_rows(num_nodes, gcn_rows);
        let mean = CsrMatrix::from_rows(num_nodes, mean_rows);
        let mean_t = mean.transpose();
        Self {
            num_nodes,
            edges,
            gcn: Arc::new(gcn),
            mean: Arc::new(mean),
            mean_t: Arc::new(mean_t),
            neighbors,
        }
    }
}

/// Collapses multi-edges and direction, adds self-loops, normalizes.
pub fn message_graph(graph: &TemporalGraph) -> MessageGraph {
    let edges = graph.edges.iter().map(|e| (e.src, e.dst)).collect();
    MessageGraph::from_undirected(graph.num_nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_node_self_loop() {
        let m = MessageGraph::from_undirected(1, vec![]);
        assert_eq!(m.gcn.to_dense(), ndarray::array![[1.0]]);
    }

    #[test]
    fn two_nodes_one_edge() {
        let m = MessageGraph::from_undirected(2, vec![(0, 1)]);
        let a = m.gcn.to_dense();
        for v in a.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_edges_collapse() {
        let a = MessageGraph::from_undirected(3, vec![(0, 1)]);
        let b = MessageGraph::from_undirected(3, vec![(0, 1), (1, 0), (0, 1), (0, 1)]);
        assert_eq!(a.gcn, b.gcn);
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn sage_mean_of_opposites_is_zero() {
        let m = MessageGraph::from_undirected(3, vec![(0, 1), (0, 2)]);
        let x = ndarray::array![[0.0, 0.0], [1.0, -2.0], [-1.0, 2.0]];
        let agg = m.mean.matmul(&x);
        assert_eq!(agg.row(0).to_vec(), vec![0.0, 0.0]);
    }

    fn spectral_norm(a: &Array2<f64>) -> f64 {
        let n = a.nrows();
        let mut v = Array2::from_elem((n, 1), 1.0);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let w = a.dot(&v);
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = norm;
            v = w / norm;
        }
        lambda
    }

    proptest! {
        #[test]
        fn normalized_adjacency_is_symmetric_and_contractive(
            n in 1usize..25,
            raw in prop::collection::vec((0u32..25, 0u32..25), 0..80),
        ) {
            let edges: Vec<_> = raw.into_iter().filter(|&(u, v)| (u as usize) < n && (v as usize) < n).collect();
            let m = MessageGraph::from_undirected(n, edges);
            let a = m.gcn.to_dense();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((a[[i, j]] - a[[j, i]]).abs() < 1e-12);
                }
            }
            // D^{1/2} 1 is the eigenvector of the top eigenvalue 1
            let sq: Vec<f64> = m.neighbors.iter().map(|nb| ((nb.len() + 1) as f64).sqrt()).collect();
            for i in 0..n {
                let s: f64 = (0..n).map(|j| a[[i, j]] * sq[j]).sum();
                prop_assert!((s - sq[i]).abs() < 1e-10);
            }
            prop_assert!(spectral_norm(&a) <= 1.0 + 1e-9);
        }
    }
}
