//! Energy-prediction and error-mitigation benchmarks on classical
//! (Pauli-Z) 2-local Hamiltonians: prepare ground strings, read them out
//! through a noisy device, and compare raw, predicted and mitigated
//! energy estimates.

use crate::circuits::{CircuitCollection, Protocol};
use crate::error::{Error, Result};
use crate::model::{mitigate_marginal, CnModel, MitigationMode};
use crate::povm::QubitSubset;
use crate::sim::{marginal_distribution, sample_cn, ExperimentRecords};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Classical 2-local Hamiltonian `Σ h_i Z_i + Σ J_ij Z_i Z_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    pub num_qubits: usize,
    pub fields: BTreeMap<usize, f64>,
    pub couplings: BTreeMap<(usize, usize), f64>,
}

impl Hamiltonian {
    pub fn new(
        num_qubits: usize,
        fields: BTreeMap<usize, f64>,
        couplings: BTreeMap<(usize, usize), f64>,
    ) -> Result<Self> {
        for &q in fields.keys() {
            if q >= num_qubits {
                return Err(Error::InvalidArgument(format!("field on qubit {q} out of range")));
            }
        }
        for &(i, j) in couplings.keys() {
            if i >= j || j >= num_qubits {
                return Err(Error::InvalidArgument(format!(
                    "coupling ({i},{j}) must satisfy i < j < {num_qubits}"
                )));
            }
        }
        Ok(Self { num_qubits, fields, couplings })
    }

    /// Energy of a computational basis string, `s_i = 1 - 2 bit_i`.
    pub fn energy_of(&self, bits: &str) -> f64 {
        let spin = |q: usize| 1.0 - 2.0 * (bits.as_bytes()[q] - b'0') as f64;
        let field: f64 = self.fields.iter().map(|(&q, &h)| h * spin(q)).sum();
        let coupling: f64 = self
            .couplings
            .iter()
            .map(|(&(i, j), &v)| v * spin(i) * spin(j))
            .sum();
        field + coupling
    }

    fn terms(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out: Vec<(Vec<usize>, f64)> =
            self.fields.iter().map(|(&q, &h)| (vec![q], h)).collect();
        out.extend(self.couplings.iter().map(|(&(i, j), &v)| (vec![i, j], v)));
        out
    }
}

const DEFAULT_COUPLING_CAP: usize = 2000;

/// Random 2-local instances: fields on every qubit and couplings on the
/// given graph (default all pairs, subsampled to a density cap), all drawn
/// uniformly from [-1, 1]. Deterministic per seed.
pub fn random_hamiltonians(
    n_instances: usize,
    num_qubits: usize,
    coupling_graph: Option<&[(usize, usize)]>,
    seed: u64,
) -> Result<Vec<Hamiltonian>> {
    let edges: Vec<(usize, usize)> = match coupling_graph {
        Some(g) => {
            for &(i, j) in g {
                if i >= j || j >= num_qubits {
                    return Err(Error::InvalidArgument(format!(
                        "edge ({i},{j}) must satisfy i < j < {num_qubits}"
                    )));
                }
            }
            g.to_vec()
        }
        None => {
            let mut all: Vec<(usize, usize)> = (0..num_qubits)
                .flat_map(|i| ((i + 1)..num_qubits).map(move |j| (i, j)))
                .collect();
            if all.len() > DEFAULT_COUPLING_CAP {
                use rand::seq::SliceRandom;
                let mut rng = crate::circuits::circuit_rng(seed, u64::MAX);
                all.shuffle(&mut rng);
                all.truncate(DEFAULT_COUPLING_CAP);
                all.sort_unstable();
            }
            all
        }
    };
    Ok((0..n_instances)
        .map(|i| {
            let mut rng = crate::circuits::circuit_rng(seed, i as u64);
            let fields = (0..num_qubits)
                .map(|q| (q, rng.gen_range(-1.0..=1.0)))
                .collect();
            let couplings = edges
                .iter()
                .map(|&e| (e, rng.gen_range(-1.0..=1.0)))
                .collect();
            Hamiltonian { num_qubits, fields, couplings }
        })
        .collect())
}

/// Exact ground state by exhaustive enumeration, ties broken towards the
/// smallest bitstring value.
pub fn ground_state(h: &Hamiltonian) -> Result<(String, f64)> {
    if h.num_qubits > 24 {
        return Err(Error::InvalidArgument(format!(
            "exhaustive ground-state search supports up to 24 qubits, got {}",
            h.num_qubits
        )));
    }
    let n = h.num_qubits;
    let mut best_index = 0usize;
    let mut best_energy = f64::INFINITY;
    for x in 0..1usize << n {
        let bits = crate::model::bitstring_of(x, n);
        let e = h.energy_of(&bits);
        if e < best_energy {
            best_energy = e;
            best_index = x;
        }
    }
    Ok((crate::model::bitstring_of(best_index, n), best_energy))
}

/// How mitigation treats a term inside a multi-qubit cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TermInversion {
    /// invert the matrix of the enclosing cluster union, then marginalize
    /// the mitigated distribution down to the term's qubits; unbiased for
    /// any input string when neighborhoods are empty. Falls back to the
    /// term-level path when the enclosing clusters span more than four
    /// qubits.
    #[default]
    InvertClusterThenMarginalize,
    /// marginalize the (input-averaged) cluster matrix down to the term's
    /// qubits first, then invert; exposed for comparison. Biased when the
    /// term cuts a correlated cluster and the prepared inputs are not
    /// uniform.
    MarginalizeThenInvert,
}

/// Noise model plus inversion options used to mitigate energy estimates.
#[derive(Debug, Clone, Copy)]
pub struct Mitigator<'a> {
    pub model: &'a CnModel,
    pub mode: MitigationMode,
    pub term_strategy: TermInversion,
}

impl<'a> Mitigator<'a> {
    pub fn new(model: &'a CnModel) -> Self {
        Self {
            model,
            mode: MitigationMode::QuasiProbability,
            term_strategy: TermInversion::default(),
        }
    }
}

fn z_expectation(dist: &[f64]) -> f64 {
    // parity of the outcome bits, first qubit most significant
    let k = dist.len().trailing_zeros() as usize;
    dist.iter()
        .enumerate()
        .map(|(x, &p)| {
            let parity = (0..k).map(|b| (x >> b) & 1).sum::<usize>() % 2;
            if parity == 0 {
                p
            } else {
                -p
            }
        })
        .sum()
}

fn marginalize_dense(dist: &[f64], from: &[usize], keep_ranks: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; 1 << keep_ranks.len()];
    for (x, &p) in dist.iter().enumerate() {
        out[crate::linalg::sub_index(x, keep_ranks, from.len())] += p;
    }
    out
}

fn mitigated_term_expectation(
    positions: &[usize],
    marginal: impl Fn(&[usize]) -> Vec<f64>,
    mitigator: &Mitigator,
) -> Result<f64> {
    let n = mitigator.model.num_qubits();
    let expanded: Vec<usize> = match mitigator.term_strategy {
        TermInversion::MarginalizeThenInvert => positions.to_vec(),
        TermInversion::InvertClusterThenMarginalize => {
            let mut qubits: Vec<usize> = mitigator
                .model
                .clusters()
                .iter()
                .filter(|c| positions.iter().any(|&q| c.qubits.contains(q)))
                .flat_map(|c| c.qubits.indices().iter().copied())
                .collect();
            qubits.sort_unstable();
            if qubits.len() > 4 {
                positions.to_vec()
            } else {
                qubits
            }
        }
    };
    let subset = QubitSubset::new(expanded.clone(), n)?;
    let noise = mitigator.model.marginal_noise(&subset)?;
    let p = marginal(&expanded);
    let q = mitigate_marginal(&p, &noise, mitigator.mode)?;
    if expanded.len() == positions.len() {
        Ok(z_expectation(&q))
    } else {
        let keep_ranks: Vec<usize> = positions
            .iter()
            .map(|&t| expanded.iter().position(|&e| e == t).unwrap())
            .collect();
        Ok(z_expectation(&marginalize_dense(&q, &expanded, &keep_ranks)))
    }
}

fn energy_with_marginals(
    h: &Hamiltonian,
    marginal: impl Fn(&[usize]) -> Vec<f64>,
    mitigator: Option<&Mitigator>,
) -> Result<f64> {
    let mut energy = 0.0;
    for (positions, coeff) in h.terms() {
        let expectation = match mitigator {
            None => z_expectation(&marginal(&positions)),
            Some(m) => mitigated_term_expectation(&positions, &marginal, m).map_err(|e| {
                Error::InvalidArgument(format!("term {positions:?}: {e}"))
            })?,
        };
        energy += coeff * expectation;
    }
    Ok(energy)
}

/// Energy estimate from measured counts: the plain average of bitstring
/// energies when unmitigated, or the sum of per-term expectations computed
/// from inverse-noise-corrected marginal quasi-probabilities.
pub fn energy_from_counts(
    h: &Hamiltonian,
    counts: &BTreeMap<String, u64>,
    mitigator: Option<&Mitigator>,
) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::InvalidArgument("empty counts".into()));
    }
    match mitigator {
        None => {
            let total: u64 = counts.values().sum();
            Ok(counts
                .iter()
                .map(|(s, &c)| h.energy_of(s) * c as f64)
                .sum::<f64>()
                / total as f64)
        }
        Some(_) => energy_with_marginals(h, |pos| marginal_distribution(counts, pos), mitigator),
    }
}

/// Same estimators on an exact outcome distribution over all 2^N strings
/// (the infinite-statistics limit).
pub fn energy_from_distribution(
    h: &Hamiltonian,
    dist: &[f64],
    mitigator: Option<&Mitigator>,
) -> Result<f64> {
    if dist.len() != 1 << h.num_qubits {
        return Err(Error::ShapeMismatch(format!(
            "distribution of length {} for {} qubits",
            dist.len(),
            h.num_qubits
        )));
    }
    let all: Vec<usize> = (0..h.num_qubits).collect();
    energy_with_marginals(
        h,
        |pos| marginalize_dense(dist, &all, pos),
        mitigator,
    )
}

/// Noisy energy expectation predicted classically, with no sampling.
/// Every term's ideal point distribution is propagated through its
/// enclosing clusters exactly (all cluster inputs are known bits of the
/// prepared string); only neighborhood qubits outside the enclosing
/// clusters are averaged uniformly, matching the effective marginal
/// noise matrices used for mitigation.
pub fn predict_energy(h: &Hamiltonian, ground: &str, model: &CnModel) -> Result<f64> {
    if ground.len() != h.num_qubits || model.num_qubits() != h.num_qubits {
        return Err(Error::ShapeMismatch(
            "ground string, Hamiltonian and model sizes disagree".into(),
        ));
    }
    let mut energy = 0.0;
    for (positions, coeff) in h.terms() {
        let relevant: Vec<_> = model
            .clusters()
            .iter()
            .filter(|c| positions.iter().any(|&q| c.qubits.contains(q)))
            .collect();
        let union_contains =
            |q: usize| relevant.iter().any(|c| c.qubits.contains(q));
        let dim = 1usize << positions.len();
        let mut dist = vec![1.0f64; dim];
        for cluster in &relevant {
            let cq = cluster.qubits.indices();
            let in_pos: Vec<usize> =
                (0..cq.len()).filter(|&r| positions.contains(&cq[r])).collect();
            let out_pos: Vec<usize> =
                (0..cq.len()).filter(|&r| !positions.contains(&cq[r])).collect();
            let y_c = crate::model::digits_sub_index(ground, cq);
            let nq = cluster.neighborhood.indices();
            let fixed_nb: Vec<usize> =
                (0..nq.len()).filter(|&r| union_contains(nq[r])).collect();
            let free_nb: Vec<usize> =
                (0..nq.len()).filter(|&r| !union_contains(nq[r])).collect();
            let fixed_globals: Vec<usize> = fixed_nb.iter().map(|&r| nq[r]).collect();
            let fixed_value = crate::model::digits_sub_index(ground, &fixed_globals);
            let mut factor = vec![0.0f64; 1 << in_pos.len()];
            for (x_in, f) in factor.iter_mut().enumerate() {
                let mut acc = 0.0;
                for y_free in 0..1usize << free_nb.len() {
                    let y_n = crate::linalg::merge_indices(
                        &fixed_nb, fixed_value, &free_nb, y_free, nq.len(),
                    );
                    let lam = cluster.matrix_for(y_n);
                    for x_out in 0..1usize << out_pos.len() {
                        let x_c = crate::linalg::merge_indices(
                            &in_pos, x_in, &out_pos, x_out, cq.len(),
                        );
                        acc += lam.entry(x_c, y_c);
                    }
                }
                *f = acc / (1u64 << free_nb.len()) as f64;
            }
            let ranks: Vec<usize> = in_pos
                .iter()
                .map(|&r| positions.iter().position(|&p| p == cq[r]).unwrap())
                .collect();
            for (x, d) in dist.iter_mut().enumerate() {
                *d *= factor[crate::linalg::sub_index(x, &ranks, positions.len())];
            }
        }
        energy += coeff * z_expectation(&dist);
    }
    Ok(energy)
}

/// One benchmark row: all energies and their normalized deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: usize,
    pub e_th: f64,
    pub e_est: f64,
    pub e_pred: f64,
    pub e_mit_cn: f64,
    pub e_mit_tpn: f64,
    pub de_pred: f64,
    pub de_est: f64,
    pub de_mit_cn: f64,
    pub de_mit_tpn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMedians {
    pub de_pred: f64,
    pub de_est: f64,
    pub de_mit_cn: f64,
    pub de_mit_tpn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub medians: BenchMedians,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "instance,e_th,e_est,e_pred,e_mit_cn,e_mit_tpn,de_pred,de_est,de_mit_cn,de_mit_tpn\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.instance,
                r.e_th,
                r.e_est,
                r.e_pred,
                r.e_mit_cn,
                r.e_mit_tpn,
                r.de_pred,
                r.de_est,
                r.de_mit_cn,
                r.de_mit_tpn
            ));
        }
        out.push_str(&format!(
            "# median,,,,,,{},{},{},{}\n",
            self.medians.de_pred,
            self.medians.de_est,
            self.medians.de_mit_cn,
            self.medians.de_mit_tpn
        ));
        out
    }
}

/// Full benchmark: prepare every instance's ground string, read it out
/// through the planted device model, and score unmitigated, predicted and
/// mitigated energies for both candidate noise models.
pub fn run_benchmark(
    cn: &CnModel,
    tpn: &CnModel,
    hamiltonians: &[Hamiltonian],
    device: &CnModel,
    shots: u64,
    seed: u64,
) -> Result<BenchReport> {
    if hamiltonians.is_empty() {
        return Err(Error::InvalidArgument("no Hamiltonians supplied".into()));
    }
    let n = device.num_qubits();
    for (i, h) in hamiltonians.iter().enumerate() {
        if h.num_qubits != n {
            return Err(Error::ShapeMismatch(format!(
                "instance {i} has {} qubits, device has {n}",
                h.num_qubits
            )));
        }
    }
    if cn.num_qubits() != n || tpn.num_qubits() != n {
        return Err(Error::ShapeMismatch("model sizes disagree with device".into()));
    }
    let grounds: Vec<(String, f64)> = hamiltonians
        .par_iter()
        .map(ground_state)
        .collect::<Result<Vec<_>>>()?;
    let collection = CircuitCollection::from_circuits(
        Protocol::Ddot,
        n,
        seed,
        grounds.iter().map(|(s, _)| s.clone()).collect(),
    )?;
    let records: ExperimentRecords = sample_cn(device, &collection, shots, seed)?;
    let rows: Vec<BenchRow> = hamiltonians
        .par_iter()
        .enumerate()
        .map(|(i, h)| -> Result<BenchRow> {
            let (ground, e_th) = &grounds[i];
            let counts = &records.records[i].counts;
            let e_est = energy_from_counts(h, counts, None)?;
            let e_pred = predict_energy(h, ground, cn)?;
            let e_mit_cn = energy_from_counts(h, counts, Some(&Mitigator::new(cn)))?;
            let e_mit_tpn = energy_from_counts(h, counts, Some(&Mitigator::new(tpn)))?;
            let norm = n as f64;
            Ok(BenchRow {
                instance: i,
                e_th: *e_th,
                e_est,
                e_pred,
                e_mit_cn,
                e_mit_tpn,
                de_pred: (e_pred - e_est).abs() / norm,
                de_est: (e_est - e_th).abs() / norm,
                de_mit_cn: (e_mit_cn - e_th).abs() / norm,
                de_mit_tpn: (e_mit_tpn - e_th).abs() / norm,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let medians = BenchMedians {
        de_pred: median(&mut rows.iter().map(|r| r.de_pred).collect::<Vec<_>>()),
        de_est: median(&mut rows.iter().map(|r| r.de_est).collect::<Vec<_>>()),
        de_mit_cn: median(&mut rows.iter().map(|r| r.de_mit_cn).collect::<Vec<_>>()),
        de_mit_tpn: median(&mut rows.iter().map(|r| r.de_mit_tpn).collect::<Vec<_>>()),
    };
    Ok(BenchReport { rows, medians })
}

/// External JSON shape of a set of Hamiltonians.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSet {
    pub num_qubits: usize,
    pub instances: Vec<Hamiltonian>,
}

#[derive(Serialize, Deserialize)]
struct HamiltonianSetJson {
    num_qubits: usize,
    instances: Vec<HamiltonianJson>,
}

#[derive(Serialize, Deserialize)]
struct HamiltonianJson {
    h: BTreeMap<String, f64>,
    #[serde(rename = "J")]
    j: BTreeMap<String, f64>,
}

impl Serialize for HamiltonianSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        HamiltonianSetJson {
            num_qubits: self.num_qubits,
            instances: self
                .instances
                .iter()
                .map(|inst| HamiltonianJson {
                    h: inst.fields.iter().map(|(&q, &v)| (q.to_string(), v)).collect(),
                    j: inst
                        .couplings
                        .iter()
                        .map(|(&(i, j), &v)| (format!("{i},{j}"), v))
                        .collect(),
                })
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for HamiltonianSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let json = HamiltonianSetJson::deserialize(deserializer)?;
        let instances = json
            .instances
            .into_iter()
            .map(|inst| -> Result<Hamiltonian> {
                let fields = inst
                    .h
                    .into_iter()
                    .map(|(k, v)| {
                        k.parse::<usize>()
                            .map(|q| (q, v))
                            .map_err(|_| Error::InvalidArgument(format!("bad field key '{k}'")))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                let couplings = inst
                    .j
                    .into_iter()
                    .map(|(k, v)| {
                        let parts: Vec<&str> = k.split(',').collect();
                        if parts.len() != 2 {
                            return Err(Error::InvalidArgument(format!(
                                "bad coupling key '{k}'"
                            )));
                        }
                        let i = parts[0].trim().parse::<usize>().map_err(|_| {
                            Error::InvalidArgument(format!("bad coupling key '{k}'"))
                        })?;
                        let j = parts[1].trim().parse::<usize>().map_err(|_| {
                            Error::InvalidArgument(format!("bad coupling key '{k}'"))
                        })?;
                        Ok(((i, j), v))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                Hamiltonian::new(json.num_qubits, fields, couplings)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Ok(HamiltonianSet { num_qubits: json.num_qubits, instances })
    }
}
