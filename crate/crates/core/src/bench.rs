//! Timing workloads for the motif matcher.

use std::time::Instant;

use serde::Serialize;

use crate::graph::TemporalGraph;
use crate::motif::{count_motifs, count_motifs_bruteforce, MotifError, MotifMatchConfig, MotifTaxonomy};
use crate::synth::{random_stream, SynthError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub variant: String,
    pub m: usize,
    pub n: usize,
    pub seconds: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Motif(#[from] MotifError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// `unlimited`, `k`, `dt` or `k+dt`.
pub fn variant_name(cfg: &MotifMatchConfig) -> &'static str {
    match (cfg.edge_limit.is_some(), cfg.aggregation.is_some()) {
        (false, false) => "unlimited",
        (true, false) => "k",
        (false, true) => "dt",
        (true, true) => "k+dt",
    }
}

/// Fastest of `repeats` runs, in seconds.
pub fn min_seconds<F: FnMut() -> Result<(), BenchError>>(repeats: usize, mut f: F) -> Result<f64, BenchError> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        f()?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Stream with a constant arrival rate (one edge per minute on average) and
/// ten edges per node, so history size per anchor does not grow with `m`.
pub fn scaling_stream(m: usize, seed: u64) -> Result<TemporalGraph, BenchError> {
    Ok(random_stream((m / 10).max(2), m, 60.0, seed)?)
}

/// Dense burst: a dozen accounts trading once a second, so a one-hour window
/// holds the whole stream and most edges repeat a recent pair.
pub fn burst_stream(m: usize, seed: u64) -> Result<TemporalGraph, BenchError> {
    Ok(random_stream(12, m, 1.0, seed)?)
}

pub fn time_fast(graph: &TemporalGraph, cfg: &MotifMatchConfig, tax: &MotifTaxonomy, repeats: usize) -> Result<TimingRow, BenchError> {
    let seconds = min_seconds(repeats, || count_motifs(graph, cfg, tax).map(drop).map_err(Into::into))?;
    Ok(TimingRow { variant: variant_name(cfg).into(), m: graph.edges.len(), n: graph.num_nodes, seconds })
}

pub fn time_oracle(graph: &TemporalGraph, cfg: &MotifMatchConfig, tax: &MotifTaxonomy, repeats: usize) -> Result<TimingRow, BenchError> {
    let seconds = min_seconds(repeats, || count_motifs_bruteforce(graph, cfg, tax).map(drop).map_err(Into::into))?;
    Ok(TimingRow { variant: "oracle".into(), m: graph.edges.len(), n: graph.num_nodes, seconds })
}

/// Matcher timings over `sizes` at fixed `cfg`, on scaling streams.
pub fn scaling(sizes: &[usize], cfg: &MotifMatchConfig, tax: &MotifTaxonomy, repeats: usize, seed: u64) -> Result<Vec<TimingRow>, BenchError> {
    sizes.iter().map(|&m| time_fast(&scaling_stream(m, seed)?, cfg, tax, repeats)).collect()
}

/// Brute-force oracle timings over `sizes` on scaling streams, with a window
/// spanning the whole stream so every ordered triple is live.
pub fn oracle_scaling(sizes: &[usize], tax: &MotifTaxonomy, seed: u64) -> Result<Vec<TimingRow>, BenchError> {
    sizes
        .iter()
        .map(|&m| {
            let g = scaling_stream(m, seed)?;
            let span = g.edges.last().map_or(0, |e| e.time) - g.edges.first().map_or(0, |e| e.time);
            time_oracle(&g, &MotifMatchConfig::unlimited(span + 1), tax, 1)
        })
        .collect()
}

/// The four matcher variants on one burst stream. `k` and `dt` are the
/// values used when the respective limit is on.
pub fn parameter_effect(m: usize, window: i64, k: usize, dt: i64, tax: &MotifTaxonomy, repeats: usize, seed: u64) -> Result<Vec<TimingRow>, BenchError> {
    let g = burst_stream(m, seed)?;
    let base = MotifMatchConfig::unlimited(window);
    [
        base,
        MotifMatchConfig { edge_limit: Some(k), ..base },
        MotifMatchConfig { aggregation: Some(dt), ..base },
        MotifMatchConfig { edge_limit: Some(k), aggregation: Some(dt), ..base },
    ]
    .iter()
    .map(|cfg| time_fast(&g, cfg, tax, repeats))
    .collect()
}
