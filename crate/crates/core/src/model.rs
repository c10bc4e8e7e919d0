//! Clusters-and-neighbors (CN) readout noise model: disjoint qubit clusters
//! with left-stochastic noise matrices, optionally conditioned on the
//! pre-measurement state of a neighborhood. Includes reconstruction from
//! experiment records, derived marginal noise matrices, and their inversion
//! for error mitigation.

use crate::circuits::Protocol;
use crate::clustering::Partition;
use crate::crosstalk::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::linalg::{self, RMat};
use crate::povm::{QubitSubset, StochasticMatrix};
use crate::sim::ExperimentRecords;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub(crate) fn bitstring_of(index: usize, len: usize) -> String {
    (0..len)
        .map(|pos| if (index >> (len - 1 - pos)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub(crate) fn digits_sub_index(s: &str, positions: &[usize]) -> usize {
    let bytes = s.as_bytes();
    positions
        .iter()
        .fold(0usize, |acc, &q| (acc << 1) | ((bytes[q] - b'0') as usize))
}

/// One cluster of the CN model: its qubits, an optional neighborhood, and
/// one noise matrix per neighborhood setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub qubits: QubitSubset,
    pub neighborhood: QubitSubset,
    pub noise: BTreeMap<String, StochasticMatrix>,
}

impl Cluster {
    pub fn matrix_for(&self, neighborhood_setting: usize) -> &StochasticMatrix {
        &self.noise[&bitstring_of(neighborhood_setting, self.neighborhood.len())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CnModelJson", into = "CnModelJson")]
pub struct CnModel {
    num_qubits: usize,
    clusters: Vec<Cluster>,
}

impl CnModel {
    pub fn new(num_qubits: usize, clusters: Vec<Cluster>) -> Result<Self> {
        let mut seen = vec![false; num_qubits];
        for (ci, cluster) in clusters.iter().enumerate() {
            if cluster.qubits.is_empty() {
                return Err(Error::InvalidModel(format!("cluster {ci} is empty")));
            }
            for &q in cluster.qubits.indices() {
                if q >= num_qubits {
                    return Err(Error::InvalidModel(format!(
                        "cluster {ci} contains qubit {q} out of range"
                    )));
                }
                if seen[q] {
                    return Err(Error::InvalidModel(format!(
                        "qubit {q} appears in more than one cluster"
                    )));
                }
                seen[q] = true;
            }
            for &q in cluster.neighborhood.indices() {
                if q >= num_qubits {
                    return Err(Error::InvalidModel(format!(
                        "neighborhood of cluster {ci} contains qubit {q} out of range"
                    )));
                }
                if cluster.qubits.contains(q) {
                    return Err(Error::InvalidModel(format!(
                        "qubit {q} appears in its own cluster's neighborhood"
                    )));
                }
            }
            let want = 1usize << cluster.neighborhood.len();
            if cluster.noise.len() != want {
                return Err(Error::InvalidModel(format!(
                    "cluster {ci} has {} noise matrices, expected {want}",
                    cluster.noise.len()
                )));
            }
            let dim = 1usize << cluster.qubits.len();
            for y_n in 0..want {
                let key = bitstring_of(y_n, cluster.neighborhood.len());
                match cluster.noise.get(&key) {
                    None => {
                        return Err(Error::InvalidModel(format!(
                            "cluster {ci} is missing the noise matrix for neighborhood setting '{key}'"
                        )))
                    }
                    Some(m) if m.dim_out() != dim || m.dim_in() != dim => {
                        return Err(Error::InvalidModel(format!(
                            "cluster {ci} noise matrix for '{key}' is {}x{}, expected {dim}x{dim}",
                            m.dim_out(),
                            m.dim_in()
                        )))
                    }
                    _ => {}
                }
            }
        }
        if let Some(q) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidModel(format!(
                "qubit {q} is not covered by any cluster"
            )));
        }
        Ok(Self { num_qubits, clusters })
    }

    /// Noiseless model: singleton clusters with identity matrices.
    pub fn identity(num_qubits: usize) -> Self {
        Self::from_single_qubit_matrices(
            (0..num_qubits).map(|_| StochasticMatrix::identity(2)).collect(),
        )
        .unwrap()
    }

    /// Tensor-product noise model from per-qubit 2x2 matrices.
    pub fn from_single_qubit_matrices(mats: Vec<StochasticMatrix>) -> Result<Self> {
        let n = mats.len();
        let clusters = mats
            .into_iter()
            .enumerate()
            .map(|(q, m)| Cluster {
                qubits: QubitSubset::new(vec![q], n).unwrap(),
                neighborhood: QubitSubset::new(vec![], n).unwrap(),
                noise: BTreeMap::from([(String::new(), m)]),
            })
            .collect();
        Self::new(n, clusters)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Materialize the full 2^N x 2^N noise matrix. Intended for small-N
    /// validation; refuses above 12 qubits.
    pub fn global_lambda(&self) -> Result<StochasticMatrix> {
        if self.num_qubits > 12 {
            return Err(Error::InvalidArgument(format!(
                "refusing to materialize a 2^{} noise matrix",
                self.num_qubits
            )));
        }
        let dim = 1usize << self.num_qubits;
        let mut entries = RMat::zeros(dim, dim);
        for y in 0..dim {
            for x in 0..dim {
                let mut v = 1.0;
                for cluster in &self.clusters {
                    let x_c = linalg::sub_index(x, cluster.qubits.indices(), self.num_qubits);
                    let y_c = linalg::sub_index(y, cluster.qubits.indices(), self.num_qubits);
                    let y_n =
                        linalg::sub_index(y, cluster.neighborhood.indices(), self.num_qubits);
                    v *= cluster.matrix_for(y_n).entry(x_c, y_c);
                }
                entries[(x, y)] = v;
            }
        }
        StochasticMatrix::new(entries)
    }

    /// Effective noise matrix on a qubit subset: neighborhood settings
    /// outside the subset are averaged uniformly, cluster qubits outside
    /// the subset are averaged over inputs and summed over outputs, and
    /// the per-cluster blocks are combined in subset qubit order.
    pub fn marginal_noise(&self, s: &QubitSubset) -> Result<MarginalNoiseMatrix> {
        if s.total_qubits() != self.num_qubits {
            return Err(Error::ShapeMismatch(format!(
                "subset over {} qubits, model has {}",
                s.total_qubits(),
                self.num_qubits
            )));
        }
        if s.is_empty() || s.len() > 4 {
            return Err(Error::InvalidArgument(format!(
                "marginal noise supports subsets of 1..=4 qubits, got {}",
                s.len()
            )));
        }
        let rank_in_s = |q: usize| s.indices().iter().position(|&x| x == q).unwrap();

        struct Block {
            /// ranks within the subset of the cluster qubits kept
            c_ranks: Vec<usize>,
            /// ranks within the subset of the neighborhood qubits inside it
            nb_ranks: Vec<usize>,
            /// table[x_in][y_in][y_nb_in]
            table: Vec<Vec<Vec<f64>>>,
        }

        let mut blocks = Vec::new();
        let mut any_neighborhood = false;
        let mut relevant_clusters = 0usize;
        for cluster in &self.clusters {
            let cq = cluster.qubits.indices();
            let in_positions: Vec<usize> =
                (0..cq.len()).filter(|&r| s.contains(cq[r])).collect();
            if in_positions.is_empty() {
                continue;
            }
            relevant_clusters += 1;
            let out_positions: Vec<usize> =
                (0..cq.len()).filter(|&r| !s.contains(cq[r])).collect();
            let nq = cluster.neighborhood.indices();
            let nb_in: Vec<usize> = (0..nq.len()).filter(|&r| s.contains(nq[r])).collect();
            let nb_out: Vec<usize> = (0..nq.len()).filter(|&r| !s.contains(nq[r])).collect();
            if !nq.is_empty() {
                any_neighborhood = true;
            }

            let k_in = in_positions.len();
            let k_out = out_positions.len();
            let n_in = nb_in.len();
            let n_out = nb_out.len();
            let weight = 1.0 / ((1usize << n_out) * (1usize << k_out)) as f64;

            let mut table =
                vec![vec![vec![0.0; 1 << n_in]; 1 << k_in]; 1 << k_in];
            for x_in in 0..1usize << k_in {
                for y_in in 0..1usize << k_in {
                    for y_nb_in in 0..1usize << n_in {
                        let mut acc = 0.0;
                        for y_nb_out in 0..1usize << n_out {
                            let y_n = linalg::merge_indices(
                                &nb_in, y_nb_in, &nb_out, y_nb_out, nq.len(),
                            );
                            let lam = cluster.matrix_for(y_n);
                            for y_out in 0..1usize << k_out {
                                let y_c = linalg::merge_indices(
                                    &in_positions,
                                    y_in,
                                    &out_positions,
                                    y_out,
                                    cq.len(),
                                );
                                for x_out in 0..1usize << k_out {
                                    let x_c = linalg::merge_indices(
                                        &in_positions,
                                        x_in,
                                        &out_positions,
                                        x_out,
                                        cq.len(),
                                    );
                                    acc += lam.entry(x_c, y_c);
                                }
                            }
                        }
                        table[x_in][y_in][y_nb_in] = acc * weight;
                    }
                }
            }
            blocks.push(Block {
                c_ranks: in_positions.iter().map(|&r| rank_in_s(cq[r])).collect(),
                nb_ranks: nb_in.iter().map(|&r| rank_in_s(nq[r])).collect(),
                table,
            });
        }

        let dim = 1usize << s.len();
        let mut entries = RMat::zeros(dim, dim);
        for y_s in 0..dim {
            for x_s in 0..dim {
                let mut v = 1.0;
                for b in &blocks {
                    let x_in = linalg::sub_index(x_s, &b.c_ranks, s.len());
                    let y_in = linalg::sub_index(y_s, &b.c_ranks, s.len());
                    let y_nb = linalg::sub_index(y_s, &b.nb_ranks, s.len());
                    v *= b.table[x_in][y_in][y_nb];
                }
                entries[(x_s, y_s)] = v;
            }
        }

        let provenance = if any_neighborhood {
            Provenance::NeighborhoodAveraged
        } else if relevant_clusters > 1 {
            Provenance::CrossClusterProduct
        } else {
            Provenance::WithinCluster
        };
        Ok(MarginalNoiseMatrix {
            subset: s.clone(),
            matrix: StochasticMatrix::new(entries)?,
            provenance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    WithinCluster,
    CrossClusterProduct,
    NeighborhoodAveraged,
}

/// Effective noise matrix on a subset, with a record of how it was formed.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalNoiseMatrix {
    pub subset: QubitSubset,
    pub matrix: StochasticMatrix,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MitigationMode {
    /// Return the raw inverse image; entries may be negative.
    #[default]
    QuasiProbability,
    /// Euclidean projection of the mitigated vector onto the simplex.
    SimplexProjected,
}

const CONDITION_CAP: f64 = 1e6;

/// Apply the inverse of a marginal noise matrix to a noisy distribution.
/// The output sums to one; entries may be negative in quasi-probability
/// mode, which is valid for expectation values.
pub fn mitigate_marginal(
    p_noisy: &[f64],
    lam: &MarginalNoiseMatrix,
    mode: MitigationMode,
) -> Result<Vec<f64>> {
    let m = lam.matrix.entries();
    if p_noisy.len() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "distribution length {} vs matrix dimension {}",
            p_noisy.len(),
            m.ncols()
        )));
    }
    let sv = m.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 0.0 || smax / smin > CONDITION_CAP {
        return Err(Error::IllConditioned {
            cond: if smin > 0.0 { smax / smin } else { f64::INFINITY },
        });
    }
    let rhs = nalgebra::DVector::from_column_slice(p_noisy);
    let solved = m
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    let out: Vec<f64> = solved.iter().copied().collect();
    Ok(match mode {
        MitigationMode::QuasiProbability => out,
        MitigationMode::SimplexProjected => linalg::project_to_simplex(&out),
    })
}

/// Conditional-frequency reconstruction of a CN model from DDOT records.
/// For every cluster and every neighborhood setting, the noise matrix
/// column for input `y_C` is the empirical outcome distribution over the
/// cluster, restricted to records matching that neighborhood setting.
pub fn reconstruct_cn(
    records: &ExperimentRecords,
    partition: &Partition,
    neighborhoods: Option<&BTreeMap<usize, QubitSubset>>,
    min_count: u64,
) -> Result<CnModel> {
    if records.protocol != Protocol::Ddot {
        return Err(Error::UnsupportedProtocol(
            "CN reconstruction needs DDOT records (computational-basis inputs)".into(),
        ));
    }
    let n = records.num_qubits;
    if partition.num_qubits() != n {
        return Err(Error::ShapeMismatch(format!(
            "partition over {} qubits, records over {n}",
            partition.num_qubits()
        )));
    }

    let mut clusters = Vec::new();
    let mut missing: Vec<String> = Vec::new();
    for (ci, cluster_qubits) in partition.clusters().iter().enumerate() {
        let qubits = QubitSubset::new(cluster_qubits.clone(), n)?;
        let neighborhood = neighborhoods
            .and_then(|m| m.get(&ci).cloned())
            .unwrap_or(QubitSubset::new(vec![], n)?);
        for &q in neighborhood.indices() {
            if qubits.contains(q) {
                return Err(Error::InvalidModel(format!(
                    "qubit {q} in both cluster {ci} and its neighborhood"
                )));
            }
        }
        let c_dim = 1usize << qubits.len();
        let n_dim = 1usize << neighborhood.len();
        // counts[y_n][y_c][x_c], totals[y_n][y_c]
        let mut counts = vec![vec![vec![0u64; c_dim]; c_dim]; n_dim];
        let mut totals = vec![vec![0u64; c_dim]; n_dim];
        for record in &records.records {
            let y_c = digits_sub_index(&record.setting, qubits.indices());
            let y_n = digits_sub_index(&record.setting, neighborhood.indices());
            totals[y_n][y_c] += record.shots;
            for (outcome, &c) in &record.counts {
                let x_c = digits_sub_index(outcome, qubits.indices());
                counts[y_n][y_c][x_c] += c;
            }
        }
        let mut noise = BTreeMap::new();
        for y_n in 0..n_dim {
            let mut entries = RMat::zeros(c_dim, c_dim);
            for y_c in 0..c_dim {
                if totals[y_n][y_c] < min_count {
                    missing.push(format!(
                        "cluster {ci} ({:?}), neighborhood setting '{}', input '{}' has {} samples (< {min_count})",
                        qubits.indices(),
                        bitstring_of(y_n, neighborhood.len()),
                        bitstring_of(y_c, qubits.len()),
                        totals[y_n][y_c],
                    ));
                    continue;
                }
                for x_c in 0..c_dim {
                    entries[(x_c, y_c)] =
                        counts[y_n][y_c][x_c] as f64 / totals[y_n][y_c] as f64;
                }
            }
            if missing.is_empty() {
                noise.insert(
                    bitstring_of(y_n, neighborhood.len()),
                    StochasticMatrix::new(entries)?,
                );
            }
        }
        if missing.is_empty() {
            clusters.push(Cluster { qubits, neighborhood, noise });
        }
    }
    if !missing.is_empty() {
        return Err(Error::Uncovered(missing.join("; ")));
    }
    CnModel::new(n, clusters)
}

/// Pick up to `n_max` neighborhood candidates per cluster: the external
/// qubits with the strongest influence on any cluster member, above
/// `threshold`.
pub fn suggest_neighborhoods(
    corr: &CorrelationMatrix,
    partition: &Partition,
    threshold: f64,
    n_max: usize,
) -> Result<BTreeMap<usize, QubitSubset>> {
    if !(0.0..1.0).contains(&threshold) || threshold == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "threshold {threshold} must be in (0, 1)"
        )));
    }
    let n = corr.num_qubits();
    if partition.num_qubits() != n {
        return Err(Error::ShapeMismatch(format!(
            "partition over {} qubits, correlations over {n}",
            partition.num_qubits()
        )));
    }
    let mut out = BTreeMap::new();
    for (ci, cluster) in partition.clusters().iter().enumerate() {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|j| !cluster.contains(j))
            .filter_map(|j| {
                let influence = cluster
                    .iter()
                    .map(|&i| corr.value(j, i))
                    .fold(f64::NEG_INFINITY, f64::max);
                (influence > threshold).then_some((influence, j))
            })
            .collect();
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(&b.1))
        });
        let mut qubits: Vec<usize> =
            candidates.into_iter().take(n_max).map(|(_, j)| j).collect();
        qubits.sort_unstable();
        out.insert(ci, QubitSubset::new(qubits, n)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct ClusterJson {
    qubits: Vec<usize>,
    neighborhood: Vec<usize>,
    noise: BTreeMap<String, StochasticMatrix>,
}

#[derive(Serialize, Deserialize)]
struct CnModelJson {
    num_qubits: usize,
    clusters: Vec<ClusterJson>,
}

impl From<CnModel> for CnModelJson {
    fn from(m: CnModel) -> Self {
        CnModelJson {
            num_qubits: m.num_qubits,
            clusters: m
                .clusters
                .into_iter()
                .map(|c| ClusterJson {
                    qubits: c.qubits.indices().to_vec(),
                    neighborhood: c.neighborhood.indices().to_vec(),
                    noise: c.noise,
                })
                .collect(),
        }
    }
}

impl TryFrom<CnModelJson> for CnModel {
    type Error = Error;

    fn try_from(j: CnModelJson) -> Result<Self> {
        let clusters = j
            .clusters
            .into_iter()
            .map(|c| {
                Ok(Cluster {
                    qubits: QubitSubset::new(c.qubits, j.num_qubits)?,
                    neighborhood: QubitSubset::new(c.neighborhood, j.num_qubits)?,
                    noise: c.noise,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CnModel::new(j.num_qubits, clusters)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim;

    #[test]
    fn model_invariants_enforced() {
        let n = 2;
        let mk = |qubits: Vec<usize>| Cluster {
            qubits: QubitSubset::new(qubits, n).unwrap(),
            neighborhood: QubitSubset::new(vec![], n).unwrap(),
            noise: BTreeMap::from([(String::new(), StochasticMatrix::identity(2))]),
        };
        // overlapping clusters
        assert!(CnModel::new(n, vec![mk(vec![0]), mk(vec![0, 1])]).is_err());
        // uncovered qubit
        assert!(CnModel::new(n, vec![mk(vec![0])]).is_err());
        // qubit in its own neighborhood
        let mut bad = mk(vec![0]);
        bad.neighborhood = QubitSubset::new(vec![0], n).unwrap();
        bad.noise = BTreeMap::from([
            ("0".into(), StochasticMatrix::identity(2)),
            ("1".into(), StochasticMatrix::identity(2)),
        ]);
        assert!(CnModel::new(n, vec![bad, mk(vec![1])]).is_err());
    }

    #[test]
    fn global_lambda_is_left_stochastic() {
        for name in sim::planted_model_names() {
            let model = sim::planted_model_library(name).unwrap();
            if model.num_qubits() > 10 {
                continue;
            }
            let lam = model.global_lambda().unwrap();
            for y in 0..lam.dim_in() {
                let s: f64 = (0..lam.dim_out()).map(|x| lam.entry(x, y)).sum();
                assert!((s - 1.0).abs() < 1e-12, "{name} column {y} sums to {s}");
            }
        }
    }

    #[test]
    fn marginal_of_full_cluster_is_exact() {
        let model = sim::planted_model_library("two_pair_clusters_n6").unwrap();
        let m = model
            .marginal_noise(&QubitSubset::new(vec![0, 1], 6).unwrap())
            .unwrap();
        assert_eq!(m.provenance, Provenance::WithinCluster);
        let planted = &model.clusters()[0].noise[""];
        for x in 0..4 {
            for y in 0..4 {
                assert!((m.matrix.entry(x, y) - planted.entry(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_of_half_cluster_matches_brute_force() {
        let model = sim::planted_model_library("two_pair_clusters_n6").unwrap();
        let m = model
            .marginal_noise(&QubitSubset::new(vec![0], 6).unwrap())
            .unwrap();
        let planted = &model.clusters()[0].noise[""];
        // brute force: average over partner inputs, sum over partner outputs
        for x0 in 0..2usize {
            for y0 in 0..2usize {
                let mut expect = 0.0;
                for y1 in 0..2usize {
                    for x1 in 0..2usize {
                        expect += 0.5 * planted.entry(x0 * 2 + x1, y0 * 2 + y1);
                    }
                }
                assert!((m.matrix.entry(x0, y0) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_across_singletons_is_tensor_product() {
        let model = sim::planted_model_library("two_pair_clusters_n6").unwrap();
        let m = model
            .marginal_noise(&QubitSubset::new(vec![4, 5], 6).unwrap())
            .unwrap();
        assert_eq!(m.provenance, Provenance::CrossClusterProduct);
        let a = &model.clusters()[2].noise[""];
        let b = &model.clusters()[3].noise[""];
        let tensor = a.tensor(b);
        for x in 0..4 {
            for y in 0..4 {
                assert!((m.matrix.entry(x, y) - tensor.entry(x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_with_neighborhood_averages_uniformly() {
        let model = sim::planted_model_library("neighbor_chain_n8").unwrap();
        let m = model
            .marginal_noise(&QubitSubset::new(vec![0, 1], 8).unwrap())
            .unwrap();
        assert_eq!(m.provenance, Provenance::NeighborhoodAveraged);
        let c = &model.clusters()[0];
        for x in 0..4 {
            for y in 0..4 {
                let avg = 0.5 * (c.noise["0"].entry(x, y) + c.noise["1"].entry(x, y));
                assert!((m.matrix.entry(x, y) - avg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn marginal_with_neighbor_inside_subset_conditions_on_it() {
        let model = sim::planted_model_library("neighbor_chain_n8").unwrap();
        // subset {0, 2}: qubit 2 is the neighborhood of cluster {0,1}, so
        // the block acting on qubit 0 must be conditioned on qubit 2's
        // input, not averaged
        let m = model
            .marginal_noise(&QubitSubset::new(vec![0, 2], 8).unwrap())
            .unwrap();
        let c = &model.clusters()[0];
        let own = &model.clusters()[1].noise[""]; // qubit 2's own noise
        for y2 in 0..2usize {
            let lam = &c.noise[&bitstring_of(y2, 1)];
            for x0 in 0..2usize {
                for y0 in 0..2usize {
                    // marginalize qubit 1 out of the pair matrix
                    let mut block = 0.0;
                    for y1 in 0..2usize {
                        for x1 in 0..2usize {
                            block += 0.5 * lam.entry(x0 * 2 + x1, y0 * 2 + y1);
                        }
                    }
                    for x2 in 0..2usize {
                        let got = m.matrix.entry(x0 * 2 + x2, y0 * 2 + y2);
                        let expect = block * own.entry(x2, y2);
                        assert!((got - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn mitigation_inverts_known_noise() {
        let lam = MarginalNoiseMatrix {
            subset: QubitSubset::new(vec![0], 1).unwrap(),
            matrix: StochasticMatrix::bit_flip(0.1),
            provenance: Provenance::WithinCluster,
        };
        let out = mitigate_marginal(&[0.82, 0.18], &lam, MitigationMode::QuasiProbability)
            .unwrap();
        assert!((out[0] - 0.9).abs() < 1e-12 && (out[1] - 0.1).abs() < 1e-12);

        let id = MarginalNoiseMatrix {
            subset: lam.subset.clone(),
            matrix: StochasticMatrix::identity(2),
            provenance: Provenance::WithinCluster,
        };
        let out = mitigate_marginal(&[0.3, 0.7], &id, MitigationMode::QuasiProbability).unwrap();
        assert!((out[0] - 0.3).abs() < 1e-15 && (out[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn mitigation_preserves_normalization_and_rejects_singular() {
        let lam = MarginalNoiseMatrix {
            subset: QubitSubset::new(vec![0], 1).unwrap(),
            matrix: StochasticMatrix::bit_flip(0.23),
            provenance: Provenance::WithinCluster,
        };
        let out =
            mitigate_marginal(&[0.61, 0.39], &lam, MitigationMode::QuasiProbability).unwrap();
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let singular = MarginalNoiseMatrix {
            subset: lam.subset.clone(),
            matrix: StochasticMatrix::bit_flip(0.5),
            provenance: Provenance::WithinCluster,
        };
        assert!(matches!(
            mitigate_marginal(&[0.5, 0.5], &singular, MitigationMode::QuasiProbability),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn simplex_mode_returns_a_distribution() {
        let lam = MarginalNoiseMatrix {
            subset: QubitSubset::new(vec![0], 1).unwrap(),
            matrix: StochasticMatrix::bit_flip(0.2),
            provenance: Provenance::WithinCluster,
        };
        // a noisy vector whose inverse image leaves the simplex
        let out = mitigate_marginal(&[0.1, 0.9], &lam, MitigationMode::SimplexProjected).unwrap();
        assert!(out.iter().all(|&p| p >= 0.0));
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
