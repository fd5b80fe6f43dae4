//! Synthetic transaction streams with planted fan-out and aggregation
//! behaviour and a tunable shift between a training and a test draw.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Pareto};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_sorted_stream, write_labels, write_transactions, GraphError, NodeIndex, TemporalGraph};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// One inflow followed by a burst of payments alternating between two
    /// receivers.
    Fanout,
    /// Two senders alternately paying into a hub that then forwards to a
    /// third account.
    Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_nodes: usize,
    pub n_background_tx: usize,
    pub anomaly_fraction: f64,
    /// Share of anomalies planted as fan-out; the rest are aggregation hubs.
    pub fanout_share: f64,
    pub aggregation_share: f64,
    pub shift_strength: f64,
    /// Mean background inter-arrival time in seconds.
    pub mean_interarrival: f64,
    /// Upper bound on the gap between consecutive edges of one episode.
    pub burst_gap: i64,
    pub start_time: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_nodes: 2000,
            n_background_tx: 20_000,
            anomaly_fraction: 0.05,
            fanout_share: 0.5,
            aggregation_share: 0.5,
            shift_strength: 0.0,
            mean_interarrival: 60.0,
            burst_gap: 120,
            start_time: 1_600_000_000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut bad = Vec::new();
        if self.n_nodes < 8 {
            bad.push("n_nodes must be at least 8".to_string());
        }
        for (name, v) in [
            ("anomaly_fraction", self.anomaly_fraction),
            ("fanout_share", self.fanout_share),
            ("aggregation_share", self.aggregation_share),
            ("shift_strength", self.shift_strength),
        ] {
            if !(0.0..=1.0).contains(&v) {
                bad.push(format!("{name} must lie in [0, 1]"));
            }
        }
        if (self.fanout_share + self.aggregation_share - 1.0).abs() > 1e-9 {
            bad.push("pattern shares must sum to 1".into());
        }
        if self.n_anomalies() * 2 > self.n_nodes {
            bad.push("too many anomalies for the node count".into());
        }
        if !(self.mean_interarrival > 0.0 && self.mean_interarrival.is_finite()) {
            bad.push("mean_interarrival must be positive".into());
        }
        if self.burst_gap < 1 {
            bad.push("burst_gap must be >= 1".into());
        }
        if self.start_time < 0 {
            bad.push("start_time must be non-negative".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(SynthError::InvalidConfig(bad.join("; ")))
        }
    }

    pub fn n_anomalies(&self) -> usize {
        (self.n_nodes as f64 * self.anomaly_fraction).round() as usize
    }

    fn amount_scale(&self) -> f64 {
        1.0 + self.shift_strength
    }

    fn interarrival_scale(&self) -> f64 {
        1.0 + 0.5 * self.shift_strength
    }

    fn burst_scale(&self) -> f64 {
        1.0 + 2.0 * self.shift_strength
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub src: String,
    pub dst: String,
    pub time: i64,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedInstance {
    pub pattern: Pattern,
    /// The labeled suspicious account.
    pub node: String,
    pub episode: usize,
    pub edges: Vec<PlantedEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotations {
    pub config: SynthConfig,
    pub instances: Vec<PlantedInstance>,
}

pub fn address(i: usize) -> String {
    format!("acct{i:06}")
}

/// Draws one labeled graph.
pub fn generate(cfg: &SynthConfig) -> Result<(TemporalGraph, Annotations), SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_nodes;

    let pareto = Pareto::new(1.0f64, 2.0).expect("valid shape");
    let activity: Vec<f64> = (0..n).map(|_| pareto.sample(&mut rng).min(50.0)).collect();
    let pick = WeightedIndex::new(&activity).expect("positive weights");
    let gap = Exp::new(1.0 / (cfg.mean_interarrival * cfg.interarrival_scale())).expect("positive rate");
    let amount = LogNormal::new(3.0, 1.0).expect("valid sigma");

    let mut rows: Vec<(u32, u32, i64, f64)> = Vec::with_capacity(cfg.n_background_tx + 64);
    let mut t = cfg.start_time as f64;
    while rows.len() < cfg.n_background_tx {
        t += gap.sample(&mut rng);
        let s = pick.sample(&mut rng);
        let d = pick.sample(&mut rng);
        if s != d {
            rows.push((s as u32, d as u32, t.round() as i64, amount.sample(&mut rng) * cfg.amount_scale()));
        }
    }
    let end = t.round() as i64;

    let anomalies = index::sample(&mut rng, n, cfg.n_anomalies()).into_vec();
    let mut is_anomaly = vec![false; n];
    for &a in &anomalies {
        is_anomaly[a] = true;
    }
    let benign: Vec<usize> = (0..n).filter(|&i| !is_anomaly[i]).collect();
    let max_gap = ((cfg.burst_gap as f64) * cfg.burst_scale()).round().max(1.0) as i64;

    let mut instances = Vec::new();
    for &a in &anomalies {
        let pattern = if rng.random::<f64>() < cfg.fanout_share { Pattern::Fanout } else { Pattern::Aggregation };
        let episodes = rng.random_range(2..=3);
        for episode in 0..episodes {
            let mut time = rng.random_range(cfg.start_time..=end.max(cfg.start_time));
            let mut edges = Vec::new();
            let mut emit = |rows: &mut Vec<(u32, u32, i64, f64)>, rng: &mut ChaCha8Rng, s: usize, d: usize, time: i64| {
                let amt = amount.sample(rng) * cfg.amount_scale();
                rows.push((s as u32, d as u32, time, amt));
                edges.push(PlantedEdge { src: address(s), dst: address(d), time, amount: amt });
            };
            match pattern {
                Pattern::Fanout => {
                    let parties = index::sample(&mut rng, benign.len(), 3).into_vec();
                    emit(&mut rows, &mut rng, benign[parties[0]], a, time);
                    for j in 0..rng.random_range(3..=6) {
                        time += rng.random_range(1..=max_gap);
                        emit(&mut rows, &mut rng, a, benign[parties[1 + j % 2]], time);
                    }
                }
                Pattern::Aggregation => {
                    let parties = index::sample(&mut rng, benign.len(), 3).into_vec();
                    for j in 0..rng.random_range(3..=5) {
                        if j > 0 {
                            time += rng.random_range(1..=max_gap);
                        }
                        emit(&mut rows, &mut rng, benign[parties[j % 2]], a, time);
                    }
                    time += rng.random_range(1..=max_gap);
                    emit(&mut rows, &mut rng, a, benign[parties[2]], time);
                }
            }
            instances.push(PlantedInstance { pattern, node: address(a), episode, edges });
        }
    }

    let mut ids = NodeIndex::new();
    for i in 0..n {
        ids.intern(&address(i));
    }
    let (edges, _) = build_sorted_stream(rows);
    let mut graph = TemporalGraph::new(ids, edges)?;
    graph.labels = is_anomaly.into_iter().map(Some).collect();
    Ok((graph, Annotations { config: cfg.clone(), instances }))
}

/// Training draw without shift and an independent test draw with
/// `cfg.shift_strength` applied.
pub fn shift_pair(cfg: &SynthConfig) -> Result<(TemporalGraph, TemporalGraph), SynthError> {
    let (train, test) = shift_pair_annotated(cfg)?;
    Ok((train.0, test.0))
}

pub type Labeled = (TemporalGraph, Annotations);

/// [`shift_pair`] keeping the planted-instance annotations of both draws.
pub fn shift_pair_annotated(
    cfg: &SynthConfig,
) -> Result<(Labeled, Labeled), SynthError> {
    let train_cfg = SynthConfig { shift_strength: 0.0, ..cfg.clone() };
    let test_cfg = SynthConfig { seed: cfg.seed ^ 0x5EED_7E57_0000_0001, ..cfg.clone() };
    Ok((generate(&train_cfg)?, generate(&test_cfg)?))
}

/// Writes `transactions.csv`, `labels.csv` and `annotations.json` under `dir`
/// with the given file prefix.
pub fn write_dataset(dir: &Path, prefix: &str, graph: &TemporalGraph, ann: &Annotations) -> Result<(), SynthError> {
    let io = |path: &Path| {
        let p = path.display().to_string();
        move |source| SynthError::Io { path: p, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let tx = dir.join(format!("{prefix}transactions.csv"));
    write_transactions(std::io::BufWriter::new(std::fs::File::create(&tx).map_err(io(&tx))?), graph)?;
    let lb = dir.join(format!("{prefix}labels.csv"));
    write_labels(std::io::BufWriter::new(std::fs::File::create(&lb).map_err(io(&lb))?), graph)?;
    let an = dir.join(format!("{prefix}annotations.json"));
    let json = serde_json::to_string_pretty(ann).expect("annotations serialize");
    std::fs::write(&an, json).map_err(io(&an))?;
    Ok(())
}

/// Unlabeled stream of exactly `m` transactions between uniformly drawn
/// distinct nodes, exponential gaps with mean `mean_gap` seconds. Used for
/// timing workloads.
pub fn random_stream(n_nodes: usize, m: usize, mean_gap: f64, seed: u64) -> Result<TemporalGraph, SynthError> {
    if n_nodes < 2 || !(mean_gap.is_finite() && mean_gap > 0.0) {
        return Err(SynthError::InvalidConfig(format!("need >= 2 nodes and a positive gap, got {n_nodes} and {mean_gap}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Exp::new(1.0 / mean_gap).expect("positive rate");
    let mut ids = NodeIndex::new();
    for i in 0..n_nodes {
        ids.intern(&address(i));
    }
    let mut t = 0.0;
    let rows = (0..m)
        .map(|_| {
            t += gap.sample(&mut rng);
            let s = rng.random_range(0..n_nodes);
            let d = (s + rng.random_range(1..n_nodes)) % n_nodes;
            (s as u32, d as u32, t.round() as i64, 1.0)
        })
        .collect();
    let (edges, _) = build_sorted_stream(rows);
    Ok(TemporalGraph::new(ids, edges)?)
}

/// Mean transaction amount and mean gap between consecutive timestamps.
pub fn summary_stats(graph: &TemporalGraph) -> (f64, f64) {
    let m = graph.edges.len().max(1) as f64;
    let mean_amount = graph.edges.iter().map(|e| e.amount).sum::<f64>() / m;
    let span = match (graph.edges.first(), graph.edges.last()) {
        (Some(a), Some(b)) => (b.time - a.time) as f64,
        _ => 0.0,
    };
    (mean_amount, span / (m - 1.0).max(1.0))
}
