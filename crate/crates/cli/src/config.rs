use serde::{Deserialize, Serialize};

fn default_min_count() -> u64 {
    10
}

fn default_threshold() -> f64 {
    0.03
}

fn default_n_runs() -> usize {
    10
}

fn default_alpha() -> f64 {
    0.0
}

fn default_metric() -> String {
    "wc".into()
}

/// End-to-end pipeline configuration. Every seed is explicit; there are
/// no wall-clock defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub num_qubits: usize,
    /// planted fixture name or path to a cn_model.json
    pub device: String,
    pub circuits: usize,
    pub shots: u64,
    pub k: usize,
    pub c_max: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    /// 0 disables neighborhood reconstruction
    #[serde(default)]
    pub neighbor_max: usize,
    #[serde(default = "default_threshold")]
    pub neighbor_threshold: f64,
    pub n_hamiltonians: usize,
    pub bench_shots: u64,
    pub seed_circuits: u64,
    pub seed_simulate: u64,
    pub seed_cluster: u64,
    pub seed_hamiltonians: u64,
    pub seed_benchmark: u64,
    pub out_dir: String,
}
