//! Pairwise readout-noise correlation coefficients (classical and quantum)
//! and coherence-strength measures with their experimental bounds.

use crate::circuits::Protocol;
use crate::distance::{ac_distance, wc_distance_capped, wc_distance_stochastic};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::marginals::{tvd_confidence, MarginalTable};
use crate::povm::{reduce_povm, tvd, DensityMatrix, Povm, QubitSubset, StochasticMatrix};
use crate::sim::{marginal_counts, ExperimentRecords};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[serde(rename = "wc")]
    WorstCase,
    #[serde(rename = "ac")]
    AverageCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrKind {
    Classical,
    Quantum,
}

/// Direction of influence inside an ordered qubit pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairDirection {
    /// vary the second qubit's input, watch the first qubit's statistics
    SecondToFirst,
    /// vary the first qubit's input, watch the second qubit's statistics
    FirstToSecond,
}

/// Conditional single-qubit noise map of a two-qubit noise matrix, given
/// the source qubit's classical input.
fn conditional_map(
    lambda2: &StochasticMatrix,
    direction: PairDirection,
    source_input: usize,
) -> StochasticMatrix {
    let mut entries = RMat::zeros(2, 2);
    for x_t in 0..2usize {
        for y_t in 0..2usize {
            let mut acc = 0.0;
            for x_s in 0..2usize {
                let (x, y) = match direction {
                    PairDirection::SecondToFirst => {
                        (x_t * 2 + x_s, y_t * 2 + source_input)
                    }
                    PairDirection::FirstToSecond => {
                        (x_s * 2 + x_t, source_input * 2 + y_t)
                    }
                };
                acc += lambda2.entry(x, y);
            }
            entries[(x_t, y_t)] = acc;
        }
    }
    StochasticMatrix::new(entries).expect("conditional map of a stochastic matrix")
}

fn check_pair_matrix(lambda2: &StochasticMatrix) -> Result<()> {
    if lambda2.dim_out() != 4 || lambda2.dim_in() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "pair noise matrix must be 4x4, got {}x{}",
            lambda2.dim_out(),
            lambda2.dim_in()
        )));
    }
    Ok(())
}

/// Classical worst-case correlation coefficient: half the maximal column
/// l1 norm of the difference of the two conditional maps.
pub fn classical_corr_wc(lambda2: &StochasticMatrix, direction: PairDirection) -> Result<f64> {
    check_pair_matrix(lambda2)?;
    wc_distance_stochastic(
        &conditional_map(lambda2, direction, 0),
        &conditional_map(lambda2, direction, 1),
    )
}

/// Classical average-case correlation coefficient, evaluated directly as
/// the average-case distance between the two conditional diagonal POVMs.
pub fn classical_corr_ac(lambda2: &StochasticMatrix, direction: PairDirection) -> Result<f64> {
    check_pair_matrix(lambda2)?;
    ac_distance(
        &Povm::from_stochastic(&conditional_map(lambda2, direction, 0))?,
        &Povm::from_stochastic(&conditional_map(lambda2, direction, 1))?,
    )
}

/// Compact closed form for the average-case coefficient,
/// `(1/2) sqrt(HS²/2 + tr²)` of the conditional-map difference. Kept as a
/// cross-check only: it uses the trace of the map difference where the
/// direct evaluation uses per-effect traces, and the two disagree for
/// asymmetric conditional differences. [`classical_corr_ac`] is
/// authoritative.
pub fn classical_corr_ac_compact(
    lambda2: &StochasticMatrix,
    direction: PairDirection,
) -> Result<f64> {
    check_pair_matrix(lambda2)?;
    let a = conditional_map(lambda2, direction, 0);
    let b = conditional_map(lambda2, direction, 1);
    let mut hs2 = 0.0;
    let mut tr = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let d = a.entry(x, y) - b.entry(x, y);
            hs2 += d * d;
            if x == y {
                tr += d;
            }
        }
    }
    Ok(0.5 * (0.5 * hs2 + tr * tr).sqrt())
}

pub fn classical_corr(
    lambda2: &StochasticMatrix,
    direction: PairDirection,
    metric: DistanceMetric,
) -> Result<f64> {
    match metric {
        DistanceMetric::WorstCase => classical_corr_wc(lambda2, direction),
        DistanceMetric::AverageCase => classical_corr_ac(lambda2, direction),
    }
}

/// Classical coefficient of an arbitrary (possibly non-diagonal) two-qubit
/// POVM: the distance between reductions conditioned on the source qubit's
/// computational basis states.
pub fn classical_corr_povm(
    reduced2: &Povm,
    direction: PairDirection,
    metric: DistanceMetric,
) -> Result<f64> {
    let source = match direction {
        PairDirection::SecondToFirst => 1,
        PairDirection::FirstToSecond => 0,
    };
    let target_subset = QubitSubset::new(vec![1 - source], 2)?;
    let zero = reduce_povm(reduced2, &target_subset, Some(&DensityMatrix::basis_state(2, 0)))?;
    let one = reduce_povm(reduced2, &target_subset, Some(&DensityMatrix::basis_state(2, 1)))?;
    match metric {
        DistanceMetric::WorstCase => Ok(wc_distance_capped(&zero, &one, 8)?.value),
        DistanceMetric::AverageCase => ac_distance(&zero, &one),
    }
}

fn pauli_delta(n: [f64; 3]) -> CMat {
    CMat::from_row_slice(
        2,
        2,
        &[
            linalg::c(n[2], 0.0),
            linalg::c(n[0], -n[1]),
            linalg::c(n[0], n[1]),
            linalg::c(-n[2], 0.0),
        ],
    )
}

/// Effect-difference operator on the target qubit induced by a traceless
/// source perturbation `Δ`.
fn conditional_difference(m0: &CMat, direction: PairDirection, delta: &CMat) -> CMat {
    let mut d = CMat::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = num_complex::Complex64::default();
            for b in 0..2 {
                for c in 0..2 {
                    let entry = match direction {
                        PairDirection::SecondToFirst => m0[(2 * i + b, 2 * j + c)],
                        PairDirection::FirstToSecond => m0[(2 * b + i, 2 * c + j)],
                    };
                    acc += entry * delta[(c, b)];
                }
            }
            d[(i, j)] = acc;
        }
    }
    d
}

fn quantum_objective(m0: &CMat, direction: PairDirection, metric: DistanceMetric, n: [f64; 3]) -> f64 {
    let d = conditional_difference(m0, direction, &pauli_delta(n));
    match metric {
        DistanceMetric::WorstCase => {
            let eigs = linalg::hermitian_eigenvalues(&d);
            eigs[0].abs().max(eigs[eigs.len() - 1].abs())
        }
        DistanceMetric::AverageCase => {
            let hs2: f64 = d.iter().map(|z| z.norm_sqr()).sum();
            let tr = linalg::trace(&d).re;
            0.5 * (hs2 + tr * tr).sqrt()
        }
    }
}

fn normalize(mut n: [f64; 3]) -> [f64; 3] {
    let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if norm > 0.0 {
        for v in &mut n {
            *v /= norm;
        }
    }
    n
}

const QUANTUM_GRID: usize = 400;
const QUANTUM_ASCENT_STEPS: usize = 50;
const QUANTUM_TOL: f64 = 1e-8;

/// Quantum correlation coefficient of a two-qubit POVM: the maximum over
/// traceless source perturbations `Δ = n·σ`, `|n| = 1`, of the chosen
/// distance functional. Both objectives are degree-1 homogeneous in `Δ`,
/// so the optimum lies on the unit sphere; a Fibonacci grid seeded with
/// the Pauli axes is refined by local ascent. The result is a lower bound
/// on the true supremum, and at least the Pauli-Z value, which guarantees
/// quantum >= classical for diagonal POVMs.
pub fn quantum_corr(
    reduced2: &Povm,
    direction: PairDirection,
    metric: DistanceMetric,
) -> Result<f64> {
    if reduced2.dim() != 4 || reduced2.num_outcomes() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "two-qubit POVM required, got dimension {} with {} outcomes",
            reduced2.dim(),
            reduced2.num_outcomes()
        )));
    }
    // coarse-grain the source qubit's outcome, keep target outcome 0
    let m0 = match direction {
        PairDirection::SecondToFirst => reduced2.effect(0) + reduced2.effect(1),
        PairDirection::FirstToSecond => reduced2.effect(0) + reduced2.effect(2),
    };
    let mut seeds = vec![
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    seeds.extend(linalg::fibonacci_sphere(QUANTUM_GRID));
    let mut best_n = seeds[0];
    let mut best = f64::NEG_INFINITY;
    for n in seeds {
        let v = quantum_objective(&m0, direction, metric, n);
        if v > best {
            best = v;
            best_n = n;
        }
    }
    // local ascent with shrinking axis steps
    let mut step = 0.2;
    for _ in 0..QUANTUM_ASCENT_STEPS {
        let mut improved = false;
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut cand = best_n;
                cand[axis] += sign * step;
                let cand = normalize(cand);
                let v = quantum_objective(&m0, direction, metric, cand);
                if v > best + QUANTUM_TOL {
                    best = v;
                    best_n = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-6 {
                break;
            }
        }
    }
    Ok(best)
}

/// Coherence strength in average-case distance: how far the POVM is from
/// its fully dephased counterpart.
pub fn coherence_strength_ac(m: &Povm) -> Result<f64> {
    if m.dim() > 8 {
        return Err(Error::InvalidArgument(format!(
            "coherence strength supports dimension <= 8, got {}",
            m.dim()
        )));
    }
    ac_distance(m, &m.dephased())
}

/// Lower bound on the coherence strength from the statistics of two
/// X/Y-eigenstate product witnesses, with its estimation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsBound {
    pub bound: f64,
    pub error: f64,
}

fn check_witness(setting: &str) -> Result<()> {
    if setting.is_empty() {
        return Err(Error::InvalidArgument("empty witness setting".into()));
    }
    for ch in setting.chars() {
        if !('2'..='5').contains(&ch) {
            return Err(Error::InvalidArgument(format!(
                "witness states must be tensor products of Pauli X/Y eigenstates; symbol '{ch}' is not"
            )));
        }
    }
    Ok(())
}

/// Evaluate the coherence-strength lower bound
/// `TVD(Pr(p), Pr(q)) / (d ‖δ_pq‖_HS)` from measured outcome
/// distributions of the two witness preparations, together with the
/// `(ε*_p + ε*_q)/d` estimation error at failure probability `p_err`.
pub fn cs_lower_bound(
    witness_p: &str,
    probs_p: &[f64],
    shots_p: u64,
    witness_q: &str,
    probs_q: &[f64],
    shots_q: u64,
    p_err: f64,
) -> Result<CsBound> {
    check_witness(witness_p)?;
    check_witness(witness_q)?;
    if witness_p.len() != witness_q.len() {
        return Err(Error::ShapeMismatch(
            "witness settings of different lengths".into(),
        ));
    }
    if shots_p == 0 || shots_q == 0 {
        return Err(Error::InvalidArgument("zero shots for a witness state".into()));
    }
    let d = 1usize << witness_p.len();
    if probs_p.len() != d || probs_q.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "expected {d}-outcome distributions"
        )));
    }
    let rho_p = crate::circuits::setting_string_to_state(witness_p)?;
    let rho_q = crate::circuits::setting_string_to_state(witness_q)?;
    let delta = rho_p.matrix() - rho_q.matrix();
    let delta_hs = linalg::hs_norm(&delta);
    if delta_hs < 1e-12 {
        return Err(Error::InvalidArgument(
            "witness states coincide; the bound is undefined".into(),
        ));
    }
    let numerator = tvd(probs_p, probs_q)?;
    let eps_p = tvd_confidence(shots_p, d, p_err)?.epsilon_star;
    let eps_q = tvd_confidence(shots_q, d, p_err)?.epsilon_star;
    Ok(CsBound {
        bound: numerator / (d as f64 * delta_hs),
        error: (eps_p + eps_q) / d as f64,
    })
}

/// Coherence findings for one qubit subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub subset: QubitSubset,
    /// direct coherence strength, when a tomographic POVM is available
    pub cs_ac: Option<f64>,
    pub cs_lower_bound: f64,
    pub bound_error: f64,
    pub witness_pair: (String, String),
}

/// Scan QDOT records for the best witness pair on a subset: all settings
/// that restrict to X/Y product states there, paired when they differ on
/// exactly one qubit within the same Pauli basis.
pub fn cs_bound_scan(
    records: &ExperimentRecords,
    subset: &QubitSubset,
    p_err: f64,
) -> Result<CoherenceReport> {
    if records.protocol != Protocol::Qdot {
        return Err(Error::UnsupportedProtocol(
            "coherence witnesses need QDOT records".into(),
        ));
    }
    let positions = subset.indices();
    let d = 1usize << positions.len();
    // aggregate marginal outcome counts per restricted X/Y setting
    let mut groups: std::collections::BTreeMap<String, (Vec<u64>, u64)> =
        std::collections::BTreeMap::new();
    for record in &records.records {
        let bytes = record.setting.as_bytes();
        let restricted: String = positions.iter().map(|&q| bytes[q] as char).collect();
        if !restricted.chars().all(|ch| ('2'..='5').contains(&ch)) {
            continue;
        }
        let entry = groups.entry(restricted).or_insert((vec![0; d], 0));
        let sub = marginal_counts(&record.counts, positions);
        for (i, c) in sub.iter().enumerate() {
            entry.0[i] += c;
        }
        entry.1 += record.shots;
    }
    let keys: Vec<&String> = groups.keys().collect();
    let mut best: Option<CoherenceReport> = None;
    for (i, p_key) in keys.iter().enumerate() {
        for q_key in keys.iter().skip(i + 1) {
            let diffs: Vec<usize> = p_key
                .bytes()
                .zip(q_key.bytes())
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(pos, _)| pos)
                .collect();
            if diffs.len() != 1 {
                continue;
            }
            let pos = diffs[0];
            let (a, b) = (p_key.as_bytes()[pos], q_key.as_bytes()[pos]);
            let same_basis = matches!((a.min(b), a.max(b)), (b'2', b'3') | (b'4', b'5'));
            if !same_basis {
                continue;
            }
            let (counts_p, shots_p) = &groups[*p_key];
            let (counts_q, shots_q) = &groups[*q_key];
            let probs_p: Vec<f64> =
                counts_p.iter().map(|&c| c as f64 / *shots_p as f64).collect();
            let probs_q: Vec<f64> =
                counts_q.iter().map(|&c| c as f64 / *shots_q as f64).collect();
            let cs = cs_lower_bound(
                p_key, &probs_p, *shots_p, q_key, &probs_q, *shots_q, p_err,
            )?;
            let replace = match &best {
                None => true,
                Some(existing) => cs.bound > existing.cs_lower_bound,
            };
            if replace {
                best = Some(CoherenceReport {
                    subset: subset.clone(),
                    cs_ac: None,
                    cs_lower_bound: cs.bound,
                    bound_error: cs.error,
                    witness_pair: ((*p_key).clone(), (*q_key).clone()),
                });
            }
        }
    }
    best.ok_or_else(|| {
        Error::Uncovered(format!(
            "no X/Y witness pairs found on subset {:?}",
            subset.indices()
        ))
    })
}

/// Subadditive upper bound on the coherence strength of a tensor-product
/// device: the sum of the blocks' coherence strengths.
pub fn cs_tensor_upper_bound(block_reports: &[CoherenceReport]) -> Result<f64> {
    let mut seen: Vec<usize> = Vec::new();
    let mut total = 0.0;
    for report in block_reports {
        for &q in report.subset.indices() {
            if seen.contains(&q) {
                return Err(Error::InvalidArgument(format!(
                    "blocks are not disjoint: qubit {q} repeats"
                )));
            }
            seen.push(q);
        }
        total += report.cs_ac.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "block {:?} is missing a direct coherence strength",
                report.subset.indices()
            ))
        })?;
    }
    Ok(total)
}

/// Directed pairwise correlation coefficients: entry `(j, i)` is
/// `c_{j→i}`, the influence of qubit `j` on qubit `i`'s statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    num_qubits: usize,
    metric: DistanceMetric,
    kind: CorrKind,
    values: RMat,
    threshold: f64,
}

pub const DEFAULT_CORR_THRESHOLD: f64 = 0.03;

impl CorrelationMatrix {
    pub fn new(
        metric: DistanceMetric,
        kind: CorrKind,
        values: RMat,
        threshold: f64,
    ) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::ShapeMismatch("correlation matrix not square".into()));
        }
        let n = values.nrows();
        let mut cleaned = values;
        for j in 0..n {
            for i in 0..n {
                let v = cleaned[(j, i)];
                if i == j {
                    if v.abs() > 1e-9 {
                        return Err(Error::InvalidArgument(format!(
                            "diagonal entry ({j},{j}) = {v} must be zero"
                        )));
                    }
                    cleaned[(j, i)] = 0.0;
                } else {
                    if !(-1e-9..=1.0 + 1e-9).contains(&v) {
                        return Err(Error::InvalidArgument(format!(
                            "coefficient ({j},{i}) = {v} outside [0, 1]"
                        )));
                    }
                    cleaned[(j, i)] = v.clamp(0.0, 1.0);
                }
            }
        }
        Ok(Self { num_qubits: n, metric, kind, values: cleaned, threshold })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    pub fn kind(&self) -> CorrKind {
        self.kind
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `c_{j→i}`.
    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.values[(j, i)]
    }

    /// Classical coefficients for every pair in a DDOT k=2 marginal table.
    pub fn classical_from_marginals(
        table: &MarginalTable,
        metric: DistanceMetric,
        threshold: f64,
    ) -> Result<Self> {
        if table.protocol != Protocol::Ddot || table.k != 2 {
            return Err(Error::InvalidArgument(
                "classical correlations need a DDOT k=2 marginal table".into(),
            ));
        }
        let n = table.num_qubits;
        let mut values = RMat::zeros(n, n);
        for e in &table.subsets {
            let lam = e.lambda()?;
            let idx = e.subset.indices();
            let (i, j) = (idx[0], idx[1]);
            values[(j, i)] = classical_corr(&lam, PairDirection::SecondToFirst, metric)?;
            values[(i, j)] = classical_corr(&lam, PairDirection::FirstToSecond, metric)?;
        }
        Self::new(metric, CorrKind::Classical, values, threshold)
    }

    /// Quantum coefficients from reconstructed two-qubit POVMs.
    pub fn quantum_from_povms(
        num_qubits: usize,
        povms: &[(QubitSubset, Povm)],
        metric: DistanceMetric,
        threshold: f64,
    ) -> Result<Self> {
        let mut values = RMat::zeros(num_qubits, num_qubits);
        for (subset, povm) in povms {
            if subset.len() != 2 || subset.total_qubits() != num_qubits {
                return Err(Error::InvalidSubset(format!(
                    "expected 2-qubit subsets over {num_qubits} qubits, got {:?}",
                    subset.indices()
                )));
            }
            let idx = subset.indices();
            let (i, j) = (idx[0], idx[1]);
            values[(j, i)] = quantum_corr(povm, PairDirection::SecondToFirst, metric)?;
            values[(i, j)] = quantum_corr(povm, PairDirection::FirstToSecond, metric)?;
        }
        Self::new(metric, CorrKind::Quantum, values, threshold)
    }

    /// DOT-format digraph of the above-threshold directed correlations.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph correlations {\n    rankdir=LR;\n");
        for j in 0..self.num_qubits {
            for i in 0..self.num_qubits {
                if i != j && self.values[(j, i)] > self.threshold {
                    out.push_str(&format!(
                        "    q{j} -> q{i} [label=\"{:.4}\"];\n",
                        self.values[(j, i)]
                    ));
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
struct CorrJson {
    metric: DistanceMetric,
    kind: CorrKind,
    values: Vec<f64>,
    threshold: f64,
}

impl Serialize for CorrelationMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.num_qubits;
        CorrJson {
            metric: self.metric,
            kind: self.kind,
            values: (0..n)
                .flat_map(|j| (0..n).map(move |i| (j, i)))
                .map(|(j, i)| self.values[(j, i)])
                .collect(),
            threshold: self.threshold,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CorrelationMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let json = CorrJson::deserialize(deserializer)?;
        let n = (json.values.len() as f64).sqrt().round() as usize;
        if n * n != json.values.len() {
            return Err(D::Error::custom("values length is not a perfect square"));
        }
        CorrelationMatrix::new(
            json.metric,
            json.kind,
            RMat::from_row_slice(n, n, &json.values),
            json.threshold,
        )
        .map_err(D::Error::custom)
    }
}
