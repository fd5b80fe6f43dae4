//! Flat `key = value` run configuration: defaults, then a file, then flags.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::gnn::{Backbone, GnnConfig};
use crate::graph::SplitRatios;
use crate::motif::{HistorySampling, MotifMatchConfig};
use crate::synth::SynthConfig;
use crate::tta::{PredictWith, TtaConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub motif: MotifMatchConfig,
    /// Worker threads for motif counting; 0 lets the pool decide.
    pub threads: usize,
    pub gnn: GnnConfig,
    pub split: SplitRatios,
    pub tta: TtaConfig,
    pub synth: SynthConfig,
}


/// One rejected key with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyError {
    pub key: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {}", .0.iter().map(|e| format!("{}: {}", e.key, e.reason)).collect::<Vec<_>>().join("; "))]
pub struct ConfigError(pub Vec<KeyError>);

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.trim().parse().map_err(|_| format!("cannot parse '{v}'"))
}

fn opt_num<T: std::str::FromStr>(v: &str) -> Result<Option<T>, String> {
    match v.trim() {
        "none" | "off" | "unlimited" => Ok(None),
        s => num(s).map(Some),
    }
}

fn flag(v: &str) -> Result<bool, String> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        s => Err(format!("expected a boolean, got '{s}'")),
    }
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

/// Short aliases accepted in files and `--set`.
fn canonical(key: &str) -> &str {
    match key {
        "k" => "edge_limit",
        "dt" => "aggregation",
        "t_w" => "window",
        "d_h" => "hidden",
        "alpha" | "beta" | "gamma" | "tau_low" | "tau_high" | "temperature" | "edge_drop_p" => {
            // TTA parameters are namespaced in the echo
            match key {
                "alpha" => "tta.alpha",
                "beta" => "tta.beta",
                "gamma" => "tta.gamma",
                "tau_low" => "tta.tau_low",
                "tau_high" => "tta.tau_high",
                "temperature" => "tta.temperature",
                _ => "tta.edge_drop_p",
            }
        }
        other => other,
    }
}

impl RunConfig {
    /// Applies one setting. Aliases: `k`, `dt`, `t_w`, `d_h`, and the bare
    /// TTA names (`alpha`, `beta`, ...).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let (m, g, t, s) = (&mut self.motif, &mut self.gnn, &mut self.tta, &mut self.synth);
        match canonical(key.trim()) {
            "window" => m.window = num(value)?,
            "edge_limit" => m.edge_limit = opt_num(value)?,
            "aggregation" => m.aggregation = opt_num(value)?,
            "sampling" => {
                m.sampling = match value.trim() {
                    "most_recent" => HistorySampling::MostRecent,
                    "uniform" => HistorySampling::Uniform { seed: 0 },
                    v => match v.strip_prefix("uniform:") {
                        Some(seed) => HistorySampling::Uniform { seed: num(seed)? },
                        None => return Err(format!("expected most_recent or uniform[:seed], got '{v}'")),
                    },
                }
            }
            "threads" => self.threads = num(value)?,
            "backbone" => g.model.backbone = value.trim().parse::<Backbone>()?,
            "layers" => g.model.layers = num(value)?,
            "hidden" => g.model.hidden = num(value)?,
            "fusion_depth" => g.model.fusion_depth = num(value)?,
            "use_motif_features" => g.model.use_motif_features = flag(value)?,
            "log_counts" => g.model.log_counts = flag(value)?,
            "dropout" => g.dropout = num(value)?,
            "learning_rate" => g.learning_rate = num(value)?,
            "max_epochs" => g.max_epochs = num(value)?,
            "patience" => g.patience = num(value)?,
            "seed" => g.seed = num(value)?,
            "train_ratio" => self.split.train = num(value)?,
            "val_ratio" => self.split.val = num(value)?,
            "test_ratio" => self.split.test = num(value)?,
            "tta.tau_low" => t.tau_low = num(value)?,
            "tta.tau_high" => t.tau_high = num(value)?,
            "tta.alpha" => t.alpha = num(value)?,
            "tta.beta" => t.beta = num(value)?,
            "tta.temperature" => t.temperature = num(value)?,
            "tta.gamma" => t.gamma = num(value)?,
            "tta.edge_drop_p" => t.edge_drop_p = num(value)?,
            "tta.steps" => t.steps = num(value)?,
            "tta.neg_samples" => t.neg_samples = num(value)?,
            "tta.learning_rate" => t.learning_rate = num(value)?,
            "tta.seed" => t.seed = num(value)?,
            "tta.predict_with" => {
                t.predict_with = match value.trim() {
                    "teacher" => PredictWith::Teacher,
                    "student" => PredictWith::Student,
                    v => return Err(format!("expected teacher or student, got '{v}'")),
                }
            }
            "synth.n_nodes" => s.n_nodes = num(value)?,
            "synth.n_background_tx" => s.n_background_tx = num(value)?,
            "synth.anomaly_fraction" => s.anomaly_fraction = num(value)?,
            "synth.fanout_share" => s.fanout_share = num(value)?,
            "synth.aggregation_share" => s.aggregation_share = num(value)?,
            "synth.shift_strength" => s.shift_strength = num(value)?,
            "synth.mean_interarrival" => s.mean_interarrival = num(value)?,
            "synth.burst_gap" => s.burst_gap = num(value)?,
            "synth.start_time" => s.start_time = num(value)?,
            "synth.seed" => s.seed = num(value)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Every effective value, keyed as accepted by [`RunConfig::set`].
    pub fn entries(&self) -> BTreeMap<String, String> {
        let (m, g, t, s) = (&self.motif, &self.gnn, &self.tta, &self.synth);
        let sampling = match m.sampling {
            HistorySampling::MostRecent => "most_recent".to_string(),
            HistorySampling::Uniform { seed } => format!("uniform:{seed}"),
        };
        let backbone = match g.model.backbone {
            Backbone::Gcn => "gcn",
            Backbone::SageMean => "sage_mean",
        };
        let predict = match t.predict_with {
            PredictWith::Teacher => "teacher",
            PredictWith::Student => "student",
        };
        [
            ("window", m.window.to_string()),
            ("edge_limit", show_opt(&m.edge_limit)),
            ("aggregation", show_opt(&m.aggregation)),
            ("sampling", sampling),
            ("threads", self.threads.to_string()),
            ("backbone", backbone.to_string()),
            ("layers", g.model.layers.to_string()),
            ("hidden", g.model.hidden.to_string()),
            ("fusion_depth", g.model.fusion_depth.to_string()),
            ("use_motif_features", g.model.use_motif_features.to_string()),
            ("log_counts", g.model.log_counts.to_string()),
            ("dropout", g.dropout.to_string()),
            ("learning_rate", g.learning_rate.to_string()),
            ("max_epochs", g.max_epochs.to_string()),
            ("patience", g.patience.to_string()),
            ("seed", g.seed.to_string()),
            ("train_ratio", self.split.train.to_string()),
            ("val_ratio", self.split.val.to_string()),
            ("test_ratio", self.split.test.to_string()),
            ("tta.tau_low", t.tau_low.to_string()),
            ("tta.tau_high", t.tau_high.to_string()),
            ("tta.alpha", t.alpha.to_string()),
            ("tta.beta", t.beta.to_string()),
            ("tta.temperature", t.temperature.to_string()),
            ("tta.gamma", t.gamma.to_string()),
            ("tta.edge_drop_p", t.edge_drop_p.to_string()),
            ("tta.steps", t.steps.to_string()),
            ("tta.neg_samples", t.neg_samples.to_string()),
            ("tta.learning_rate", t.learning_rate.to_string()),
            ("tta.seed", t.seed.to_string()),
            ("tta.predict_with", predict.to_string()),
            ("synth.n_nodes", s.n_nodes.to_string()),
            ("synth.n_background_tx", s.n_background_tx.to_string()),
            ("synth.anomaly_fraction", s.anomaly_fraction.to_string()),
            ("synth.fanout_share", s.fanout_share.to_string()),
            ("synth.aggregation_share", s.aggregation_share.to_string()),
            ("synth.shift_strength", s.shift_strength.to_string()),
            ("synth.mean_interarrival", s.mean_interarrival.to_string()),
            ("synth.burst_gap", s.burst_gap.to_string()),
            ("synth.start_time", s.start_time.to_string()),
            ("synth.seed", s.seed.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Applies `(key, value)` pairs, collecting every failure.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), ConfigError> {
        let errors: Vec<KeyError> = pairs
            .into_iter()
            .filter_map(|(k, v)| self.set(k, v).err().map(|reason| KeyError { key: k.trim().to_string(), reason }))
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errors))
        }
    }

    /// Parses `key = value` lines; `#` starts a comment. Malformed lines are
    /// returned as errors next to the pairs that did parse.
    pub fn parse_pairs(text: &str) -> (Vec<(String, String)>, Vec<KeyError>) {
        let mut pairs = Vec::new();
        let mut errors = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
                None => errors.push(KeyError { key: format!("line {}", n + 1), reason: "expected key = value".into() }),
            }
        }
        (pairs, errors)
    }

    /// Checks cross-field constraints of every section, reporting all of them.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        let mut push = |key: &str, reason: String| errors.push(KeyError { key: key.into(), reason });
        if let Err(e) = self.motif.validate() {
            push("motif", e.to_string());
        }
        if let Err(e) = self.gnn.validate() {
            push("model", e.to_string());
        }
        if let Err(e) = self.split.validate() {
            push("ratios", e.to_string());
        }
        if let Err(e) = self.tta.validate() {
            push("tta", e.to_string());
        }
        if let Err(e) = self.synth.validate() {
            push("synth", e.to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errors))
        }
    }

    /// Defaults, then the optional file, then `overrides` in order.
    pub fn resolve(file: Option<&str>, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut errors = Vec::new();
        if let Some(text) = file {
            let (pairs, bad_lines) = Self::parse_pairs(text);
            errors.extend(bad_lines);
            if let Err(ConfigError(e)) = cfg.apply(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))) {
                errors.extend(e);
            }
        }
        if let Err(ConfigError(e)) = cfg.apply(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str()))) {
            errors.extend(e);
        }
        if !errors.is_empty() {
            return Err(ConfigError(errors));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut f = std::fs::File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = std::io::Read::read(&mut f, &mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Reproduction record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Full argument vector of the invocation.
    pub args: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let seeds = [
            ("seed", cfg.gnn.seed),
            ("tta.seed", cfg.tta.seed),
            ("synth.seed", cfg.synth.seed),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: Vec::new(),
            config: cfg.entries(),
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn digest(path: &Path) -> std::io::Result<FileDigest> {
        Ok(FileDigest { path: path.display().to_string(), sha256: sha256_file(path)? })
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(Self::digest(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> std::io::Result<()> {
        self.outputs.push(Self::digest(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_defaults_file_flags() {
        let file = "k = 50\ndt = none # comment\nwindow=7200\n\n";
        let cfg = RunConfig::resolve(Some(file), &[("k".into(), "20".into())]).unwrap();
        assert_eq!(cfg.motif.edge_limit, Some(20));
        assert_eq!(cfg.motif.aggregation, None);
        assert_eq!(cfg.motif.window, 7200);
        assert_eq!(cfg.gnn.model.hidden, 64);
    }

    #[test]
    fn unknown_and_bad_keys_all_reported() {
        let err = RunConfig::resolve(Some("bogus = 1\nhidden = x\nno equals here"), &[("alpha".into(), "z".into())]).unwrap_err();
        let keys: Vec<&str> = err.0.iter().map(|e| e.key.as_str()).collect();
        assert_eq!(keys, vec!["line 3", "bogus", "hidden", "alpha"]);
        let err = RunConfig::resolve(None, &[("tau_low".into(), "0.95".into()), ("dropout".into(), "1.5".into())]).unwrap_err();
        assert_eq!(err.0.len(), 2);
    }

    #[test]
    fn entries_round_trip_through_set() {
        let mut cfg = RunConfig::default();
        cfg.apply([("k", "none"), ("sampling", "uniform:9"), ("backbone", "sage_mean"), ("tta.predict_with", "student"), ("beta", "0.25")]).unwrap();
        let mut back = RunConfig::default();
        let entries = cfg.entries();
        back.apply(entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(back, cfg);
        for key in entries.keys() {
            assert!(RunConfig::default().set(key, &entries[key]).is_ok(), "{key}");
        }
    }

    #[test]
    fn manifest_digests_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, b"abc").unwrap();
        let mut m = Manifest::new("motifs", &RunConfig::default());
        m.input(&p).unwrap();
        assert_eq!(m.inputs[0].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(m.config["edge_limit"], "100");
        assert!(m.to_json().contains("\"schema_version\": 1"));
    }
}
