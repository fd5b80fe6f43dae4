use std::collections::HashSet;

use ndarray::Array2;

use super::TemporalGraph;

/// in-deg, out-deg, distinct in/out neighbours, log1p in/out amount,
/// log1p active span, log1p transaction count.
pub const BASE_FEATURE_DIM: usize = 8;

/// Unstandardized engineered features, one row per node.
pub fn raw_base_features(graph: &TemporalGraph) -> Array2<f64> {
    let n = graph.num_nodes;
    let mut in_deg = vec![0u64; n];
    let mut out_deg = vec![0u64; n];
    let mut in_nb: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    let mut out_nb: Vec<HashSet<u32>> = vec![HashSet::new(); n];
    let mut in_amt = vec![0.0f64; n];
    let mut out_amt = vec![0.0f64; n];
    let mut first = vec![i64::MAX; n];
    let mut last = vec![i64::MIN; n];

    for e in &graph.edges {
        let (s, d) = (e.src as usize, e.dst as usize);
        out_deg[s] += 1;
        in_deg[d] += 1;
        out_nb[s].insert(e.dst);
        in_nb[d].insert(e.src);
        out_amt[s] += e.amount;
        in_amt[d] += e.amount;
        for v in [s, d] {
            first[v] = first[v].min(e.time);
            last[v] = last[v].max(e.time);
        }
    }

    let mut x = Array2::zeros((n, BASE_FEATURE_DIM));
    for v in 0..n {
        let tx = in_deg[v] + out_deg[v];
        let span = if tx > 0 { (last[v] - first[v]) as f64 } else { 0.0 };
        let row = [
            in_deg[v] as f64,
            out_deg[v] as f64,
            in_nb[v].len() as f64,
            out_nb[v].len() as f64,
            in_amt[v].ln_1p(),
            out_amt[v].ln_1p(),
            span.ln_1p(),
            (tx as f64).ln_1p(),
        ];
        for (j, val) in row.into_iter().enumerate() {
            x[[v, j]] = val;
        }
    }
    x
}

/// Z-scores each column with the population standard deviation; constant
/// columns become zero.
pub fn standardize_columns(x: &mut Array2<f64>) {
    let n = x.nrows();
    if n == 0 {
        return;
    }
    for mut col in x.columns_mut() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > 1e-12 && sd.is_finite() {
            col.mapv_inplace(|v| (v - mean) / sd);
        } else {
            col.fill(0.0);
        }
    }
}

pub fn derive_base_features(graph: &TemporalGraph) -> Array2<f64> {
    let mut x = raw_base_features(graph);
    standardize_columns(&mut x);
    x
}
