//! Synthetic noisy-readout device: samples measurement outcomes from a
//! planted CN stochastic model, or from explicit small quantum POVMs,
//! for any circuit collection. Also hosts the registry of planted noise
//! models used as ground truth by recovery tests and demos.

use crate::circuits::{self, CircuitCollection, Protocol};
use crate::error::{Error, Result};
use crate::linalg::RMat;
use crate::model::{bitstring_of, digits_sub_index, CnModel, Cluster};
use crate::povm::{born_probabilities, Povm, QubitSubset, StochasticMatrix};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Outcome counts for one executed circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitRecord {
    pub setting: String,
    pub shots: u64,
    pub counts: BTreeMap<String, u64>,
}

/// Per-circuit outcome statistics for a whole collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecords {
    pub protocol: Protocol,
    pub num_qubits: usize,
    pub records: Vec<CircuitRecord>,
}

impl ExperimentRecords {
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if r.setting.len() != self.num_qubits {
                return Err(Error::InvalidArgument(format!(
                    "record {i}: setting length {} != {}",
                    r.setting.len(),
                    self.num_qubits
                )));
            }
            let total: u64 = r.counts.values().sum();
            if total != r.shots {
                return Err(Error::InvalidArgument(format!(
                    "record {i}: counts sum to {total}, shots = {}",
                    r.shots
                )));
            }
            for outcome in r.counts.keys() {
                if outcome.len() != self.num_qubits
                    || !outcome.bytes().all(|b| b == b'0' || b == b'1')
                {
                    return Err(Error::InvalidArgument(format!(
                        "record {i}: bad outcome string '{outcome}'"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn total_shots(&self) -> u64 {
        self.records.iter().map(|r| r.shots).sum()
    }
}

/// Empirical outcome counts on a qubit subset, indexed with the first
/// listed qubit as the most significant bit.
pub fn marginal_counts(counts: &BTreeMap<String, u64>, positions: &[usize]) -> Vec<u64> {
    let mut out = vec![0u64; 1 << positions.len()];
    for (outcome, &c) in counts {
        out[digits_sub_index(outcome, positions)] += c;
    }
    out
}

/// Empirical outcome distribution on a qubit subset.
pub fn marginal_distribution(counts: &BTreeMap<String, u64>, positions: &[usize]) -> Vec<f64> {
    let raw = marginal_counts(counts, positions);
    let total: u64 = raw.iter().sum();
    raw.iter().map(|&c| c as f64 / total as f64).collect()
}

fn sample_index(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

fn cumulative(dist: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    dist.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

/// Sample DDOT outcomes from a CN model: per circuit, each cluster's
/// outcome bits are drawn from the noise-matrix column selected by the
/// cluster (and neighborhood) bits of the setting string.
pub fn sample_cn(
    model: &CnModel,
    circuits: &CircuitCollection,
    shots: u64,
    seed: u64,
) -> Result<ExperimentRecords> {
    if circuits.protocol != Protocol::Ddot {
        return Err(Error::UnsupportedProtocol(
            "CN model defines classical action only; use sample_quantum for QDOT circuits"
                .into(),
        ));
    }
    if circuits.num_qubits != model.num_qubits() {
        return Err(Error::ShapeMismatch(format!(
            "model over {} qubits, circuits over {}",
            model.num_qubits(),
            circuits.num_qubits
        )));
    }
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let n = model.num_qubits();
    let records: Vec<CircuitRecord> = circuits
        .circuits
        .par_iter()
        .enumerate()
        .map(|(idx, setting)| {
            let mut rng = circuits::circuit_rng(seed, idx as u64);
            // per-cluster sampling tables are fixed once the setting is known
            let tables: Vec<(&[usize], Vec<f64>)> = model
                .clusters()
                .iter()
                .map(|cluster| {
                    let y_c = digits_sub_index(setting, cluster.qubits.indices());
                    let y_n = digits_sub_index(setting, cluster.neighborhood.indices());
                    let col = cluster.matrix_for(y_n).column(y_c);
                    (cluster.qubits.indices(), cumulative(&col))
                })
                .collect();
            let counts = if n <= 20 {
                let mut tally = vec![0u64; 1 << n];
                for _ in 0..shots {
                    let mut full = 0usize;
                    for (positions, cum) in &tables {
                        let x = sample_index(cum, rng.gen::<f64>());
                        for (r, &q) in positions.iter().enumerate() {
                            full |= ((x >> (positions.len() - 1 - r)) & 1) << (n - 1 - q);
                        }
                    }
                    tally[full] += 1;
                }
                tally
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(i, &c)| (bitstring_of(i, n), c))
                    .collect()
            } else {
                let mut map: BTreeMap<String, u64> = BTreeMap::new();
                for _ in 0..shots {
                    let mut bits = vec![b'0'; n];
                    for (positions, cum) in &tables {
                        let x = sample_index(cum, rng.gen::<f64>());
                        for (r, &q) in positions.iter().enumerate() {
                            if (x >> (positions.len() - 1 - r)) & 1 == 1 {
                                bits[q] = b'1';
                            }
                        }
                    }
                    *map.entry(String::from_utf8(bits).unwrap()).or_insert(0) += 1;
                }
                map
            };
            CircuitRecord { setting: setting.clone(), shots, counts }
        })
        .collect();
    Ok(ExperimentRecords { protocol: circuits.protocol, num_qubits: n, records })
}

/// One block of a quantum device: a POVM acting on up to three qubits.
#[derive(Debug, Clone)]
pub struct DeviceBlock {
    pub qubits: QubitSubset,
    pub povm: Povm,
}

/// Quantum noisy-readout device whose global POVM is the tensor product
/// of small per-block POVMs.
#[derive(Debug, Clone)]
pub struct QuantumDeviceSpec {
    num_qubits: usize,
    blocks: Vec<DeviceBlock>,
}

impl QuantumDeviceSpec {
    pub fn new(num_qubits: usize, blocks: Vec<DeviceBlock>) -> Result<Self> {
        let mut seen = vec![false; num_qubits];
        for (bi, block) in blocks.iter().enumerate() {
            if block.qubits.is_empty() || block.qubits.len() > 3 {
                return Err(Error::InvalidModel(format!(
                    "block {bi} has {} qubits; blocks are 1..=3 qubits",
                    block.qubits.len()
                )));
            }
            let dim = 1usize << block.qubits.len();
            if block.povm.dim() != dim || block.povm.num_outcomes() != dim {
                return Err(Error::InvalidModel(format!(
                    "block {bi} POVM is {}-dimensional with {} outcomes, expected {dim}",
                    block.povm.dim(),
                    block.povm.num_outcomes()
                )));
            }
            for &q in block.qubits.indices() {
                if q >= num_qubits || seen[q] {
                    return Err(Error::InvalidModel(format!(
                        "block {bi}: qubit {q} out of range or repeated"
                    )));
                }
                seen[q] = true;
            }
        }
        if let Some(q) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidModel(format!(
                "qubit {q} is not covered by any block"
            )));
        }
        Ok(Self { num_qubits, blocks })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn blocks(&self) -> &[DeviceBlock] {
        &self.blocks
    }
}

/// Sample outcomes of a quantum device via the Born rule, block by block.
/// Accepts both DDOT and QDOT circuits.
pub fn sample_quantum(
    spec: &QuantumDeviceSpec,
    circuits: &CircuitCollection,
    shots: u64,
    seed: u64,
) -> Result<ExperimentRecords> {
    if circuits.num_qubits != spec.num_qubits() {
        return Err(Error::ShapeMismatch(format!(
            "device over {} qubits, circuits over {}",
            spec.num_qubits(),
            circuits.num_qubits
        )));
    }
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let n = spec.num_qubits();
    let records: Vec<CircuitRecord> = circuits
        .circuits
        .par_iter()
        .enumerate()
        .map(|(idx, setting)| -> Result<CircuitRecord> {
            let mut rng = circuits::circuit_rng(seed, idx as u64);
            let bytes = setting.as_bytes();
            let tables: Vec<(&[usize], Vec<f64>)> = spec
                .blocks
                .iter()
                .map(|block| -> Result<(&[usize], Vec<f64>)> {
                    let block_setting: String = block
                        .qubits
                        .indices()
                        .iter()
                        .map(|&q| bytes[q] as char)
                        .collect();
                    let state = circuits::setting_string_to_state(&block_setting)?;
                    let probs = born_probabilities(&block.povm, &state)?;
                    Ok((block.qubits.indices(), cumulative(&probs)))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut tally = vec![0u64; 1 << n];
            for _ in 0..shots {
                let mut full = 0usize;
                for (positions, cum) in &tables {
                    let x = sample_index(cum, rng.gen::<f64>());
                    for (r, &q) in positions.iter().enumerate() {
                        full |= ((x >> (positions.len() - 1 - r)) & 1) << (n - 1 - q);
                    }
                }
                tally[full] += 1;
            }
            let counts = tally
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (bitstring_of(i, n), c))
                .collect();
            Ok(CircuitRecord { setting: setting.clone(), shots, counts })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentRecords { protocol: circuits.protocol, num_qubits: n, records })
}

/// 4x4 pair noise matrix built from two conditional single-qubit flips:
/// the first qubit flips with `p_first(y_second)` and the second with
/// `p_second(y_first)`.
fn conditional_pair(p_first: [f64; 2], p_second: [f64; 2]) -> StochasticMatrix {
    let mut entries = RMat::zeros(4, 4);
    for y0 in 0..2usize {
        for y1 in 0..2usize {
            let f0 = StochasticMatrix::bit_flip(p_first[y1]);
            let f1 = StochasticMatrix::bit_flip(p_second[y0]);
            for x0 in 0..2usize {
                for x1 in 0..2usize {
                    entries[(x0 * 2 + x1, y0 * 2 + y1)] =
                        f0.entry(x0, y0) * f1.entry(x1, y1);
                }
            }
        }
    }
    StochasticMatrix::new(entries).unwrap()
}

fn singleton(q: usize, n: usize, m: StochasticMatrix) -> Cluster {
    Cluster {
        qubits: QubitSubset::new(vec![q], n).unwrap(),
        neighborhood: QubitSubset::new(vec![], n).unwrap(),
        noise: BTreeMap::from([(String::new(), m)]),
    }
}

pub fn planted_model_names() -> &'static [&'static str] {
    &["uncorrelated_n10", "two_pair_clusters_n6", "neighbor_chain_n8"]
}

/// Registry of fully specified CN models with documented correlation
/// structure, used as planted ground truth.
///
/// * `uncorrelated_n10`: ten singleton clusters; qubit `q` has asymmetric
///   flips `P(1|0) = 0.01 + 0.002q`, `P(0|1) = 0.03 + 0.003q`.
/// * `two_pair_clusters_n6`: clusters `{0,1}` and `{2,3}` with
///   input-conditioned flips (qubit 0 flips with 0.01 or 0.20 depending on
///   qubit 1's input, qubit 1 with 0.02 or 0.15 on qubit 0's, qubit 2 with
///   0.03 or 0.25 on qubit 3's, qubit 3 with 0.01 or 0.12 on qubit 2's),
///   plus independent singletons 4 and 5.
/// * `neighbor_chain_n8`: cluster `{0,1}` whose matrix depends on the
///   input of neighborhood qubit 2 (qubit 0 flips with 0.02 when qubit 2
///   is prepared in 0 and 0.17 when in 1; qubit 1 flips with 0.03 or 0.12
///   on qubit 0's input), plus independent singletons 2..=7.
pub fn planted_model_library(name: &str) -> Result<CnModel> {
    match name {
        "uncorrelated_n10" => {
            let n = 10;
            let mats = (0..n)
                .map(|q| {
                    StochasticMatrix::asymmetric_flip(
                        0.01 + 0.002 * q as f64,
                        0.03 + 0.003 * q as f64,
                    )
                })
                .collect();
            CnModel::from_single_qubit_matrices(mats)
        }
        "two_pair_clusters_n6" => {
            let n = 6;
            let pair01 = conditional_pair([0.01, 0.20], [0.02, 0.15]);
            let pair23 = conditional_pair([0.03, 0.25], [0.01, 0.12]);
            let clusters = vec![
                Cluster {
                    qubits: QubitSubset::new(vec![0, 1], n)?,
                    neighborhood: QubitSubset::new(vec![], n)?,
                    noise: BTreeMap::from([(String::new(), pair01)]),
                },
                Cluster {
                    qubits: QubitSubset::new(vec![2, 3], n)?,
                    neighborhood: QubitSubset::new(vec![], n)?,
                    noise: BTreeMap::from([(String::new(), pair23)]),
                },
                singleton(4, n, StochasticMatrix::asymmetric_flip(0.03, 0.05)),
                singleton(5, n, StochasticMatrix::asymmetric_flip(0.01, 0.08)),
            ];
            CnModel::new(n, clusters)
        }
        "neighbor_chain_n8" => {
            let n = 8;
            let low = conditional_pair([0.02, 0.02], [0.03, 0.12]);
            let high = conditional_pair([0.17, 0.17], [0.03, 0.12]);
            let mut clusters = vec![Cluster {
                qubits: QubitSubset::new(vec![0, 1], n)?,
                neighborhood: QubitSubset::new(vec![2], n)?,
                noise: BTreeMap::from([("0".into(), low), ("1".into(), high)]),
            }];
            clusters.push(singleton(2, n, StochasticMatrix::bit_flip(0.02)));
            clusters.push(singleton(3, n, StochasticMatrix::asymmetric_flip(0.01, 0.04)));
            clusters.push(singleton(4, n, StochasticMatrix::bit_flip(0.03)));
            clusters.push(singleton(5, n, StochasticMatrix::asymmetric_flip(0.05, 0.01)));
            clusters.push(singleton(6, n, StochasticMatrix::bit_flip(0.015)));
            clusters.push(singleton(7, n, StochasticMatrix::asymmetric_flip(0.04, 0.06)));
            CnModel::new(n, clusters)
        }
        other => Err(Error::UnknownFixture(other.into())),
    }
}
