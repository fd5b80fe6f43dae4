pub mod autodiff;
pub mod bench;
pub mod cli;
pub mod config;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod motif;
pub mod motif_features;
pub mod synth;
pub mod tta;
