//! Partitioning qubits into noise clusters by randomized local search on
//! a correlation-strength objective with a cluster-size penalty.

use crate::circuits::circuit_rng;
use crate::crosstalk::CorrelationMatrix;
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Disjoint clusters covering all qubits, kept in canonical order (each
/// cluster sorted, clusters ordered by first member).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionJson", into = "PartitionJson")]
pub struct Partition {
    num_qubits: usize,
    clusters: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(num_qubits: usize, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; num_qubits];
        for cluster in &clusters {
            if cluster.is_empty() {
                return Err(Error::InvalidArgument("empty cluster".into()));
            }
            for &q in cluster {
                if q >= num_qubits || seen[q] {
                    return Err(Error::InvalidArgument(format!(
                        "qubit {q} out of range or repeated"
                    )));
                }
                seen[q] = true;
            }
        }
        if let Some(q) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!("qubit {q} not covered")));
        }
        let mut canonical: Vec<Vec<usize>> = clusters
            .into_iter()
            .map(|mut c| {
                c.sort_unstable();
                c
            })
            .collect();
        canonical.sort();
        Ok(Self { num_qubits, clusters: canonical })
    }

    pub fn singletons(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            clusters: (0..num_qubits).map(|q| vec![q]).collect(),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn max_cluster_size(&self) -> usize {
        self.clusters.iter().map(Vec::len).max().unwrap_or(0)
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionJson {
    num_qubits: usize,
    clusters: Vec<Vec<usize>>,
}

impl From<Partition> for PartitionJson {
    fn from(p: Partition) -> Self {
        PartitionJson { num_qubits: p.num_qubits, clusters: p.clusters }
    }
}

impl TryFrom<PartitionJson> for Partition {
    type Error = Error;

    fn try_from(j: PartitionJson) -> Result<Self> {
        Partition::new(j.num_qubits, j.clusters)
    }
}

/// Knobs of the local-search clustering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub c_max: usize,
    pub alpha: f64,
    pub n_runs: usize,
    pub seed: u64,
    /// accept improving changes only with `accept_probability`
    #[serde(default)]
    pub randomized: bool,
    #[serde(default = "default_accept_probability")]
    pub accept_probability: f64,
}

fn default_accept_probability() -> f64 {
    0.5
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            c_max: 2,
            alpha: 0.0,
            n_runs: 10,
            seed: 0,
            randomized: false,
            accept_probability: default_accept_probability(),
        }
    }
}

impl ClusteringConfig {
    fn validate(&self) -> Result<()> {
        if self.c_max == 0 {
            return Err(Error::InvalidArgument("c_max must be >= 1".into()));
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidArgument("n_runs must be >= 1".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidArgument("alpha must be >= 0".into()));
        }
        Ok(())
    }
}

/// Mean of the expected number of "large" coefficients: the `N(c_max - 1)`
/// largest off-diagonal entries (all `N` largest when `c_max` is 1, as an
/// extension of the defining count, which would vanish there).
pub fn c_avg(corr: &CorrelationMatrix, c_max: usize) -> Result<f64> {
    let n = corr.num_qubits();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "correlation matrix needs at least 2 qubits".into(),
        ));
    }
    let mut values: Vec<f64> = (0..n)
        .flat_map(|j| (0..n).map(move |i| (j, i)))
        .filter(|(j, i)| j != i)
        .map(|(j, i)| corr.value(j, i))
        .collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let n_large = if c_max <= 1 { n } else { n * (c_max - 1) }.min(values.len());
    Ok(values[..n_large].iter().sum::<f64>() / n_large as f64)
}

fn strength_sum(corr: &CorrelationMatrix, cluster: &[usize]) -> f64 {
    let mut s = 0.0;
    for &k in cluster {
        for &l in cluster {
            if k != l {
                s += corr.value(k, l);
            }
        }
    }
    s
}

/// Objective `Σ_i S_i - c_avg Σ_i f_penalty(|C_i|)` with
/// `f_penalty = α|C|²` up to `c_max` and infinity beyond (the objective
/// collapses to `-∞`).
pub fn objective(p: &Partition, corr: &CorrelationMatrix, config: &ClusteringConfig) -> f64 {
    if p.max_cluster_size() > config.c_max {
        return f64::NEG_INFINITY;
    }
    let cavg = match c_avg(corr, config.c_max) {
        Ok(v) => v,
        Err(_) => return f64::NEG_INFINITY,
    };
    let strength: f64 = p.clusters().iter().map(|c| strength_sum(corr, c)).sum();
    let penalty: f64 = p
        .clusters()
        .iter()
        .map(|c| config.alpha * (c.len() * c.len()) as f64)
        .sum();
    strength - cavg * penalty
}

/// Greedy pairing by decreasing summed coefficient `c_{i→j} + c_{j→i}`;
/// leftover qubits become singletons. A pair is only formed when it
/// strictly improves the objective over two singletons (gain above
/// `2 α c_avg`): the local moves can merge clusters but never dissolve
/// one, so objective-neutral pairs would be stuck for good. All
/// singletons when `c_max` is 1.
pub(crate) fn initial_partition(corr: &CorrelationMatrix, config: &ClusteringConfig) -> Partition {
    let n = corr.num_qubits();
    if config.c_max == 1 {
        return Partition::singletons(n);
    }
    let cavg = c_avg(corr, config.c_max).unwrap_or(0.0);
    let pair_penalty = 2.0 * config.alpha * cavg;
    let mut pairs: Vec<(f64, usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| (corr.value(i, j) + corr.value(j, i), i, j))
        .collect();
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    });
    let mut assigned = vec![false; n];
    let mut clusters = Vec::new();
    for (c_sym, i, j) in pairs {
        if !assigned[i] && !assigned[j] && c_sym > pair_penalty + IMPROVEMENT_TOL {
            assigned[i] = true;
            assigned[j] = true;
            clusters.push(vec![i, j]);
        }
    }
    for q in 0..n {
        if !assigned[q] {
            clusters.push(vec![q]);
        }
    }
    Partition::new(n, clusters).unwrap()
}

struct SearchState<'a> {
    corr: &'a CorrelationMatrix,
    cavg: f64,
    alpha: f64,
    c_max: usize,
    membership: Vec<usize>,
    clusters: Vec<Vec<usize>>,
}

impl SearchState<'_> {
    fn link_sum(&self, q: usize, cluster: usize, exclude: Option<usize>) -> f64 {
        self.clusters[cluster]
            .iter()
            .filter(|&&l| l != q && Some(l) != exclude)
            .map(|&l| self.corr.value(q, l) + self.corr.value(l, q))
            .sum()
    }

    fn penalty_delta(&self, from_size: usize, to_size: usize) -> f64 {
        // sizes change by -1 and +1
        let before = (from_size * from_size + to_size * to_size) as f64;
        let after =
            ((from_size - 1) * (from_size - 1) + (to_size + 1) * (to_size + 1)) as f64;
        self.cavg * self.alpha * (after - before)
    }

    /// objective change of moving qubit `q` into `target`'s cluster
    fn move_delta(&self, q: usize, target_cluster: usize) -> f64 {
        let from = self.membership[q];
        if self.clusters[target_cluster].len() + 1 > self.c_max {
            return f64::NEG_INFINITY;
        }
        let gained = self.link_sum(q, target_cluster, None);
        let lost = self.link_sum(q, from, None);
        gained - lost
            - self.penalty_delta(self.clusters[from].len(), self.clusters[target_cluster].len())
    }

    /// objective change of swapping qubits `q` and `r` between clusters
    fn swap_delta(&self, q: usize, r: usize) -> f64 {
        let (cq, cr) = (self.membership[q], self.membership[r]);
        let gained = self.link_sum(q, cr, Some(r)) + self.link_sum(r, cq, Some(q));
        let lost = self.link_sum(q, cq, None) + self.link_sum(r, cr, None);
        gained - lost
    }

    fn apply_move(&mut self, q: usize, target_cluster: usize) {
        let from = self.membership[q];
        self.clusters[from].retain(|&l| l != q);
        self.clusters[target_cluster].push(q);
        self.membership[q] = target_cluster;
    }

    fn apply_swap(&mut self, q: usize, r: usize) {
        let (cq, cr) = (self.membership[q], self.membership[r]);
        self.clusters[cq].retain(|&l| l != q);
        self.clusters[cr].retain(|&l| l != r);
        self.clusters[cq].push(r);
        self.clusters[cr].push(q);
        self.membership[q] = cr;
        self.membership[r] = cq;
    }

    fn to_partition(&self, num_qubits: usize) -> Partition {
        Partition::new(
            num_qubits,
            self.clusters.iter().filter(|c| !c.is_empty()).cloned().collect(),
        )
        .unwrap()
    }
}

const IMPROVEMENT_TOL: f64 = 1e-12;

fn single_run(
    corr: &CorrelationMatrix,
    config: &ClusteringConfig,
    cavg: f64,
    init: &Partition,
    run_index: u64,
) -> Partition {
    let n = corr.num_qubits();
    let mut rng = circuit_rng(config.seed, run_index);
    let mut membership = vec![0usize; n];
    for (ci, cluster) in init.clusters().iter().enumerate() {
        for &q in cluster {
            membership[q] = ci;
        }
    }
    let mut state = SearchState {
        corr,
        cavg,
        alpha: config.alpha,
        c_max: config.c_max,
        membership,
        clusters: init.clusters().to_vec(),
    };
    let all_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    loop {
        let mut pairs = all_pairs.clone();
        pairs.shuffle(&mut rng);
        let mut updated = false;
        for (i, j) in pairs {
            if state.membership[i] == state.membership[j] {
                continue;
            }
            let candidates = [
                (state.move_delta(i, state.membership[j]), 0),
                (state.move_delta(j, state.membership[i]), 1),
                (state.swap_delta(i, j), 2),
            ];
            let (best_delta, which) = candidates
                .iter()
                .copied()
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                .unwrap();
            if best_delta <= IMPROVEMENT_TOL {
                continue;
            }
            if config.randomized && rng.gen::<f64>() >= config.accept_probability {
                continue;
            }
            match which {
                0 => state.apply_move(i, state.membership[j]),
                1 => state.apply_move(j, state.membership[i]),
                _ => state.apply_swap(i, j),
            }
            updated = true;
        }
        if !updated {
            break;
        }
    }
    state.to_partition(n)
}

/// Best-of-`n_runs` randomized local search: start from the greedy pairing,
/// sweep random pair orders evaluating move-first, move-second and swap,
/// accept the best strictly improving change, and stop when a full pass
/// makes no update.
pub fn cluster_qubits(corr: &CorrelationMatrix, config: &ClusteringConfig) -> Result<Partition> {
    config.validate()?;
    let cavg = c_avg(corr, config.c_max)?;
    let init = initial_partition(corr, config);
    let runs: Vec<Partition> = (0..config.n_runs)
        .into_par_iter()
        .map(|r| single_run(corr, config, cavg, &init, r as u64))
        .collect();
    let best = runs
        .into_iter()
        .map(|p| {
            let obj = objective(&p, corr, config);
            (obj, p)
        })
        .reduce(|a, b| {
            if b.0 > a.0 + IMPROVEMENT_TOL {
                b
            } else if a.0 > b.0 + IMPROVEMENT_TOL {
                a
            } else if b.1.clusters() < a.1.clusters() {
                b
            } else {
                a
            }
        })
        .unwrap();
    Ok(best.1)
}

/// Scan penalty weights: cluster, score each partition with the supplied
/// benchmark callback (smaller is better), and return the best `(alpha,
/// partition)`. Ties go to the partition with the smaller summed squared
/// cluster size, then to the smaller alpha.
pub fn select_alpha_by_benchmark<F>(
    corr: &CorrelationMatrix,
    alphas: &[f64],
    config: &ClusteringConfig,
    mut bench: F,
) -> Result<(f64, Partition)>
where
    F: FnMut(f64, &Partition) -> Result<f64>,
{
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("no alpha values supplied".into()));
    }
    let mut best: Option<(f64, f64, usize, Partition)> = None;
    let mut failures = Vec::new();
    for &alpha in alphas {
        let cfg = ClusteringConfig { alpha, ..config.clone() };
        let partition = cluster_qubits(corr, &cfg)?;
        let score = match bench(alpha, &partition) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("alpha {alpha}: {e}"));
                continue;
            }
        };
        let size_sq: usize = partition.clusters().iter().map(|c| c.len() * c.len()).sum();
        let better = match &best {
            None => true,
            Some((bs, ba, bsize, _)) => {
                score < bs - IMPROVEMENT_TOL
                    || ((score - bs).abs() <= IMPROVEMENT_TOL
                        && (size_sq < *bsize
                            || (size_sq == *bsize && alpha < *ba - IMPROVEMENT_TOL)))
            }
        };
        if better {
            best = Some((score, alpha, size_sq, partition));
        }
    }
    match best {
        Some((_, alpha, _, partition)) => Ok((alpha, partition)),
        None => Err(Error::InvalidArgument(format!(
            "every alpha failed: {}",
            failures.join("; ")
        ))),
    }
}
