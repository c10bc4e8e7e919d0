//! Estimation of reduced noise matrices and POVMs for k-qubit subsets from
//! experiment records: conditional-frequency marginal tables, least-squares
//! Choi reconstruction with CPTP projection, and the closed-form
//! statistical error bounds.

use crate::circuits::Protocol;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use crate::povm::{Povm, QubitSubset, StochasticMatrix};
use crate::sim::ExperimentRecords;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn setting_sub_index(s: &str, positions: &[usize], radix: usize) -> usize {
    let bytes = s.as_bytes();
    positions
        .iter()
        .fold(0usize, |acc, &q| acc * radix + (bytes[q] - b'0') as usize)
}

/// Estimated conditional-frequency table for one qubit subset: rows are
/// the 2^k outcomes, columns the alphabet^k input settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetEstimate {
    pub subset: QubitSubset,
    pub protocol: Protocol,
    freq: RMat,
    /// number of circuits realizing each input setting
    h: Vec<u64>,
    /// number of samples (circuits x shots) per input setting
    samples: Vec<u64>,
}

impl SubsetEstimate {
    pub fn from_parts(
        subset: QubitSubset,
        protocol: Protocol,
        freq: RMat,
        h: Vec<u64>,
        samples: Vec<u64>,
    ) -> Result<Self> {
        let k = subset.len();
        let inputs = protocol.alphabet_size().pow(k as u32);
        if freq.nrows() != 1 << k || freq.ncols() != inputs || h.len() != inputs {
            return Err(Error::ShapeMismatch(format!(
                "table {}x{} with {} h-entries for k = {k}",
                freq.nrows(),
                freq.ncols(),
                h.len()
            )));
        }
        Ok(Self { subset, protocol, freq, h, samples })
    }

    /// Table built from exact outcome probabilities (the infinite-
    /// statistics limit).
    pub fn exact_for_povm(subset: QubitSubset, protocol: Protocol, povm: &Povm) -> Result<Self> {
        let k = subset.len();
        let radix = protocol.alphabet_size();
        let inputs = radix.pow(k as u32);
        let mut freq = RMat::zeros(1 << k, inputs);
        for y in 0..inputs {
            let mut digits = vec![0usize; k];
            let mut rest = y;
            for i in (0..k).rev() {
                digits[i] = rest % radix;
                rest /= radix;
            }
            let setting: String = digits
                .iter()
                .map(|&d| char::from_digit(d as u32, 10).unwrap())
                .collect();
            let state = crate::circuits::setting_string_to_state(&setting)?;
            let probs = crate::povm::born_probabilities(povm, &state)?;
            for x in 0..1 << k {
                freq[(x, y)] = probs[x];
            }
        }
        Self::from_parts(subset, protocol, freq, vec![1; inputs], vec![1; inputs])
    }

    pub fn table(&self) -> &RMat {
        &self.freq
    }

    pub fn occurrences(&self) -> &[u64] {
        &self.h
    }

    pub fn samples(&self) -> &[u64] {
        &self.samples
    }

    pub fn uncovered_inputs(&self) -> Vec<usize> {
        (0..self.h.len()).filter(|&y| self.h[y] == 0).collect()
    }

    pub fn is_fully_covered(&self) -> bool {
        self.h.iter().all(|&c| c > 0)
    }

    fn require_coverage(&self) -> Result<()> {
        let missing = self.uncovered_inputs();
        if missing.is_empty() {
            return Ok(());
        }
        Err(Error::Uncovered(format!(
            "subset {:?}: input settings {missing:?} never occurred",
            self.subset.indices()
        )))
    }

    /// The estimated noise matrix of a fully covered DDOT subset.
    pub fn lambda(&self) -> Result<StochasticMatrix> {
        if self.protocol != Protocol::Ddot {
            return Err(Error::UnsupportedProtocol(
                "noise matrices come from DDOT tables; use the Choi route for QDOT".into(),
            ));
        }
        self.require_coverage()?;
        StochasticMatrix::new(self.freq.clone())
    }
}

/// Estimates for a family of k-qubit subsets.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTable {
    pub protocol: Protocol,
    pub k: usize,
    pub num_qubits: usize,
    pub subsets: Vec<SubsetEstimate>,
}

impl MarginalTable {
    pub fn get(&self, indices: &[usize]) -> Option<&SubsetEstimate> {
        self.subsets.iter().find(|e| e.subset.indices() == indices)
    }
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(current.clone());
        // advance the rightmost index that can still move
        let mut i = k;
        while i > 0 {
            i -= 1;
            if current[i] < n - (k - i) {
                current[i] += 1;
                for j in i + 1..k {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return out;
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| (n - k + i) as f64 / i as f64).product()
}

#[derive(Clone, Copy, PartialEq)]
enum Averaging {
    /// pooled conditional frequency over all samples
    Pooled,
    /// average of per-round outcome frequencies
    PerRound,
}

fn resolve_subsets(
    records: &ExperimentRecords,
    k: usize,
    subsets: Option<Vec<QubitSubset>>,
) -> Result<Vec<QubitSubset>> {
    let n = records.num_qubits;
    match subsets {
        Some(list) => {
            for s in &list {
                if s.total_qubits() != n || s.len() != k {
                    return Err(Error::InvalidSubset(format!(
                        "subset {:?} does not match k = {k}, N = {n}",
                        s.indices()
                    )));
                }
            }
            Ok(list)
        }
        None => {
            let cap = match records.protocol {
                Protocol::Ddot => 4,
                Protocol::Qdot => 2,
            };
            if k > cap {
                return Err(Error::InvalidArgument(format!(
                    "k = {k} exceeds the default {} cap of {cap}; pass an explicit subset list",
                    records.protocol
                )));
            }
            let work = k as f64 * binomial(n, k) * (1u64 << k) as f64;
            if work > 1e8 {
                return Err(Error::InvalidArgument(format!(
                    "enumerating all C({n},{k}) subsets needs ~{work:.1e} updates; pass an explicit subset list"
                )));
            }
            combinations(n, k)
                .into_iter()
                .map(|c| QubitSubset::new(c, n))
                .collect()
        }
    }
}

fn estimate_with(
    records: &ExperimentRecords,
    k: usize,
    subsets: Option<Vec<QubitSubset>>,
    mode: Averaging,
) -> Result<MarginalTable> {
    if k == 0 || k > 6 {
        return Err(Error::InvalidArgument(format!("k = {k} out of range 1..=6")));
    }
    let list = resolve_subsets(records, k, subsets)?;
    let radix = records.protocol.alphabet_size();
    let inputs = radix.pow(k as u32);
    let outcomes = 1usize << k;
    let estimates: Vec<SubsetEstimate> = list
        .into_par_iter()
        .map(|subset| {
            let positions = subset.indices();
            let mut acc = RMat::zeros(outcomes, inputs);
            let mut h = vec![0u64; inputs];
            let mut samples = vec![0u64; inputs];
            for record in &records.records {
                let y = setting_sub_index(&record.setting, positions, radix);
                h[y] += 1;
                samples[y] += record.shots;
                match mode {
                    Averaging::Pooled => {
                        for (outcome, &c) in &record.counts {
                            let x = setting_sub_index(outcome, positions, 2);
                            acc[(x, y)] += c as f64;
                        }
                    }
                    Averaging::PerRound => {
                        for (outcome, &c) in &record.counts {
                            let x = setting_sub_index(outcome, positions, 2);
                            acc[(x, y)] += c as f64 / record.shots as f64;
                        }
                    }
                }
            }
            let mut freq = RMat::zeros(outcomes, inputs);
            for y in 0..inputs {
                let denom = match mode {
                    Averaging::Pooled => samples[y] as f64,
                    Averaging::PerRound => h[y] as f64,
                };
                if denom > 0.0 {
                    for x in 0..outcomes {
                        freq[(x, y)] = acc[(x, y)] / denom;
                    }
                }
            }
            SubsetEstimate {
                subset,
                protocol: records.protocol,
                freq,
                h,
                samples,
            }
        })
        .collect();
    Ok(MarginalTable {
        protocol: records.protocol,
        k,
        num_qubits: records.num_qubits,
        subsets: estimates,
    })
}

/// Conditional-frequency estimator: for each subset, input setting and
/// outcome, the fraction of samples with that outcome among samples with
/// that setting. Columns that never occurred are flagged uncovered rather
/// than imputed.
pub fn estimate_marginals(
    records: &ExperimentRecords,
    k: usize,
    subsets: Option<Vec<QubitSubset>>,
) -> Result<MarginalTable> {
    estimate_with(records, k, subsets, Averaging::Pooled)
}

/// Multi-shot form: per-round outcome frequencies averaged over rounds.
/// Identical to [`estimate_marginals`] when every round has equal shots;
/// exposed separately so variance-vs-rounds studies can weight per round.
pub fn estimate_marginals_multishot(
    records: &ExperimentRecords,
    k: usize,
    subsets: Option<Vec<QubitSubset>>,
) -> Result<MarginalTable> {
    estimate_with(records, k, subsets, Averaging::PerRound)
}

/// Dual-frame operator for one QDOT input symbol, transposed so that the
/// assembled estimator converges to the measurement Choi state.
fn dual_frame_transposed(symbol: usize) -> CMat {
    let state = crate::circuits::setting_to_state(char::from_digit(symbol as u32, 10).unwrap())
        .unwrap();
    (state.matrix() * linalg::c(3.0, 0.0) - linalg::identity_c(2)).transpose()
}

fn choi_from_table(estimate: &SubsetEstimate) -> Result<CMat> {
    if estimate.protocol != Protocol::Qdot {
        return Err(Error::UnsupportedProtocol(
            "Choi reconstruction needs QDOT records".into(),
        ));
    }
    estimate.require_coverage()?;
    let k = estimate.subset.len();
    let d = 1usize << k;
    let inputs = 6usize.pow(k as u32);
    let frames: Vec<CMat> = (0..6).map(dual_frame_transposed).collect();
    let mut j = CMat::zeros(d * d, d * d);
    let scale = 1.0 / (3f64.powi(k as i32) * d as f64);
    for y in 0..inputs {
        // tensor the per-qubit dual-frame operators for this input string
        let mut frame = frames[y / 6usize.pow((k - 1) as u32)].clone();
        let mut rest = y % 6usize.pow((k - 1) as u32);
        for digit in 1..k {
            let power = 6usize.pow((k - 1 - digit) as u32);
            frame = frame.kronecker(&frames[rest / power]);
            rest %= power;
        }
        for x in 0..d {
            let w = linalg::c(estimate.freq[(x, y)] * scale, 0.0);
            for r in 0..d {
                for s in 0..d {
                    j[(x * d + r, x * d + s)] += w * frame[(r, s)];
                }
            }
        }
    }
    // symmetrize away floating-point skew
    let adj = j.adjoint();
    Ok((j + adj) * linalg::c(0.5, 0.0))
}

/// Least-squares estimator of the reduced measurement channel's Choi state
/// from QDOT records on `subset`. Unbiased: with exact probabilities it
/// reproduces [`crate::povm::measurement_choi`] exactly.
pub fn estimate_choi_ls(records: &ExperimentRecords, subset: &QubitSubset) -> Result<CMat> {
    let table = estimate_marginals(records, subset.len(), Some(vec![subset.clone()]))?;
    choi_from_table(&table.subsets[0])
}

const CPTP_MAX_ITERATIONS: usize = 10_000;
const CPTP_STEP_TOL: f64 = 1e-9;

fn project_psd(m: &CMat) -> CMat {
    let eig = m.clone().symmetric_eigen();
    let clipped =
        CMat::from_diagonal(&eig.eigenvalues.map(|v| linalg::c(v.max(0.0), 0.0)));
    &eig.eigenvectors * clipped * eig.eigenvectors.adjoint()
}

fn trace_out_outcome(m: &CMat, outcome_dim: usize, input_dim: usize) -> CMat {
    let mut t = CMat::zeros(input_dim, input_dim);
    for i in 0..outcome_dim {
        for r in 0..input_dim {
            for s in 0..input_dim {
                t[(r, s)] += m[(i * input_dim + r, i * input_dim + s)];
            }
        }
    }
    t
}

fn project_tp(m: &CMat, outcome_dim: usize, input_dim: usize) -> CMat {
    let defect = linalg::identity_c(input_dim) / linalg::c(input_dim as f64, 0.0)
        - trace_out_outcome(m, outcome_dim, input_dim);
    let correction = linalg::identity_c(outcome_dim).kronecker(&defect)
        / linalg::c(outcome_dim as f64, 0.0);
    m + correction
}

/// Alternating (Dykstra) projection of a Hermitian matrix onto the set of
/// Choi states of CPTP maps: PSD, with the partial trace over the outcome
/// register equal to `I/d`.
pub fn project_cptp(choi: &CMat, outcome_dim: usize, input_dim: usize) -> Result<CMat> {
    project_cptp_with_tol(choi, outcome_dim, input_dim, CPTP_STEP_TOL)
}

fn project_cptp_with_tol(
    choi: &CMat,
    outcome_dim: usize,
    input_dim: usize,
    step_tol: f64,
) -> Result<CMat> {
    if choi.nrows() != outcome_dim * input_dim || choi.ncols() != outcome_dim * input_dim {
        return Err(Error::ShapeMismatch(format!(
            "Choi matrix {}x{} vs expected {}",
            choi.nrows(),
            choi.ncols(),
            outcome_dim * input_dim
        )));
    }
    if linalg::hermiticity_defect(choi) > 1e-8 {
        return Err(Error::InvalidArgument("Choi input is not Hermitian".into()));
    }
    let sym = (choi + choi.adjoint()) * linalg::c(0.5, 0.0);
    let mut x = sym;
    let mut correction = CMat::zeros(x.nrows(), x.ncols());
    for _ in 0..CPTP_MAX_ITERATIONS {
        let y = project_psd(&(&x + &correction));
        correction = &x + &correction - &y;
        let next = project_tp(&y, outcome_dim, input_dim);
        let step = linalg::hs_norm(&(&next - &x));
        x = next;
        if step < step_tol {
            let min_eig = linalg::min_eigenvalue(&x);
            let tp_defect = linalg::hs_norm(
                &(trace_out_outcome(&x, outcome_dim, input_dim)
                    - linalg::identity_c(input_dim) / linalg::c(input_dim as f64, 0.0)),
            );
            if min_eig >= -1e-7 && tp_defect <= 1e-7 {
                return Ok(x);
            }
        }
    }
    let min_eig = linalg::min_eigenvalue(&x);
    Err(Error::NonConvergence {
        iterations: CPTP_MAX_ITERATIONS,
        residual: (-min_eig).max(0.0),
    })
}

/// Extract the POVM described by one subset estimate: directly from the
/// noise matrix for DDOT, or through the CPTP-projected Choi state for
/// QDOT (effect `x` is `d` times the transposed `(x, x)` outcome block).
pub fn povm_from_marginal(estimate: &SubsetEstimate) -> Result<Povm> {
    match estimate.protocol {
        Protocol::Ddot => Povm::from_stochastic(&estimate.lambda()?),
        Protocol::Qdot => {
            let d = 1usize << estimate.subset.len();
            let raw = choi_from_table(estimate)?;
            // tighter steps than the public projection: effect extraction
            // scales residual negative eigenvalues by d, and the POVM
            // validator allows only -1e-9
            let choi = project_cptp_with_tol(&raw, d, d, 1e-12)?;
            let effects = (0..d)
                .map(|x| {
                    CMat::from_fn(d, d, |r, s| {
                        choi[(x * d + s, x * d + r)] * linalg::c(d as f64, 0.0)
                    })
                })
                .collect();
            Povm::new(d, effects)
        }
    }
}

/// Weissman-style total-variation confidence radius for an empirical
/// distribution over `dim` outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvdBound {
    pub epsilon_star: f64,
    pub p_err: f64,
    pub n_shots: u64,
    pub dim: usize,
}

fn ln_two_pow_minus_two(exponent: f64) -> f64 {
    // ln(2^e - 2), stable for large e
    if exponent <= 50.0 {
        (2f64.powf(exponent) - 2.0).ln()
    } else {
        exponent * std::f64::consts::LN_2
    }
}

pub fn tvd_confidence(n_shots: u64, dim: usize, p_err: f64) -> Result<TvdBound> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("dim = {dim} must be >= 2")));
    }
    if !(p_err > 0.0 && p_err < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p_err = {p_err} must be in (0, 1)"
        )));
    }
    if n_shots == 0 {
        return Err(Error::InvalidArgument("n_shots must be >= 1".into()));
    }
    let epsilon_star = ((ln_two_pow_minus_two(dim as f64) - p_err.ln())
        / (2.0 * n_shots as f64))
        .sqrt();
    Ok(TvdBound { epsilon_star, p_err, n_shots, dim })
}

/// Confidence radius on the worst-case distance between a k-qubit noise
/// matrix and its estimate from `n_shots` samples per column.
pub fn noise_matrix_confidence(k: usize, n_shots: u64, p_err: f64) -> Result<f64> {
    if k == 0 || k > 10 {
        return Err(Error::InvalidArgument(format!("k = {k} out of range 1..=10")));
    }
    if !(p_err > 0.0 && p_err < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p_err = {p_err} must be in (0, 1)"
        )));
    }
    if n_shots == 0 {
        return Err(Error::InvalidArgument("n_shots must be >= 1".into()));
    }
    let ln_term = k as f64 * std::f64::consts::LN_2
        + ln_two_pow_minus_two((1u64 << k) as f64);
    Ok(((ln_term - p_err.ln()) / (2.0 * n_shots as f64)).sqrt())
}

/// External JSON shape of a marginal table.
#[derive(Serialize, Deserialize)]
struct MarginalTableJson {
    protocol: Protocol,
    k: usize,
    num_qubits: usize,
    subsets: Vec<SubsetJsonEntry>,
}

#[derive(Serialize, Deserialize)]
struct SubsetJsonEntry {
    qubits: Vec<usize>,
    lambda: RawMatrixJson,
    h: std::collections::BTreeMap<String, u64>,
    samples: std::collections::BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrixJson {
    dim_out: usize,
    dim_in: usize,
    entries: Vec<f64>,
}

impl Serialize for MarginalTable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let radix = self.protocol.alphabet_size();
        let json = MarginalTableJson {
            protocol: self.protocol,
            k: self.k,
            num_qubits: self.num_qubits,
            subsets: self
                .subsets
                .iter()
                .map(|e| {
                    let key = |y: usize| -> String {
                        let mut digits = vec![0usize; self.k];
                        let mut rest = y;
                        for i in (0..self.k).rev() {
                            digits[i] = rest % radix;
                            rest /= radix;
                        }
                        digits
                            .iter()
                            .map(|&d| char::from_digit(d as u32, 10).unwrap())
                            .collect()
                    };
                    SubsetJsonEntry {
                        qubits: e.subset.indices().to_vec(),
                        lambda: RawMatrixJson {
                            dim_out: e.freq.nrows(),
                            dim_in: e.freq.ncols(),
                            entries: (0..e.freq.nrows())
                                .flat_map(|x| (0..e.freq.ncols()).map(move |y| (x, y)))
                                .map(|(x, y)| e.freq[(x, y)])
                                .collect(),
                        },
                        h: (0..e.h.len()).map(|y| (key(y), e.h[y])).collect(),
                        samples: (0..e.samples.len()).map(|y| (key(y), e.samples[y])).collect(),
                    }
                })
                .collect(),
        };
        json.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MarginalTable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let json = MarginalTableJson::deserialize(deserializer)?;
        let radix = json.protocol.alphabet_size();
        let subsets = json
            .subsets
            .into_iter()
            .map(|e| -> Result<SubsetEstimate> {
                let subset = QubitSubset::new(e.qubits, json.num_qubits)?;
                if e.lambda.entries.len() != e.lambda.dim_out * e.lambda.dim_in {
                    return Err(Error::ShapeMismatch("lambda entry count".into()));
                }
                let freq = RMat::from_row_slice(
                    e.lambda.dim_out,
                    e.lambda.dim_in,
                    &e.lambda.entries,
                );
                let inputs = radix.pow(json.k as u32);
                let mut h = vec![0u64; inputs];
                let mut samples = vec![0u64; inputs];
                for (key, v) in e.h {
                    let y = setting_sub_index(&key, &(0..json.k).collect::<Vec<_>>(), radix);
                    h[y] = v;
                }
                for (key, v) in e.samples {
                    let y = setting_sub_index(&key, &(0..json.k).collect::<Vec<_>>(), radix);
                    samples[y] = v;
                }
                SubsetEstimate::from_parts(subset, json.protocol, freq, h, samples)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        Ok(MarginalTable {
            protocol: json.protocol,
            k: json.k,
            num_qubits: json.num_qubits,
            subsets,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::generate_collection;
    use crate::model::CnModel;
    use crate::povm::{measurement_choi, DensityMatrix};
    use crate::sim::{self, planted_model_library, sample_cn, sample_quantum};

    #[test]
    fn noiseless_records_give_identity_marginals() {
        let model = CnModel::identity(4);
        let coll = generate_collection(Protocol::Ddot, 4, 200, 31).unwrap();
        let records = sample_cn(&model, &coll, 100, 32).unwrap();
        let table = estimate_marginals(&records, 2, None).unwrap();
        assert_eq!(table.subsets.len(), 6);
        for e in &table.subsets {
            let lam = e.lambda().unwrap();
            for x in 0..4 {
                for y in 0..4 {
                    let expect = if x == y { 1.0 } else { 0.0 };
                    assert!((lam.entry(x, y) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn planted_pair_recovered() {
        let model = planted_model_library("two_pair_clusters_n6").unwrap();
        let coll = generate_collection(Protocol::Ddot, 6, 500, 77).unwrap();
        let records = sample_cn(&model, &coll, 2000, 78).unwrap();
        let table = estimate_marginals(&records, 2, None).unwrap();
        let planted = &model.clusters()[0].noise[""];
        let est = table.get(&[0, 1]).unwrap().lambda().unwrap();
        for x in 0..4 {
            for y in 0..4 {
                assert!(
                    (est.entry(x, y) - planted.entry(x, y)).abs() < 0.02,
                    "entry ({x},{y}): {} vs {}",
                    est.entry(x, y),
                    planted.entry(x, y)
                );
            }
        }
    }

    #[test]
    fn cross_cluster_subset_factorizes() {
        let model = planted_model_library("two_pair_clusters_n6").unwrap();
        let coll = generate_collection(Protocol::Ddot, 6, 2000, 11).unwrap();
        let records = sample_cn(&model, &coll, 2000, 12).unwrap();
        let pairs = estimate_marginals(&records, 2, None).unwrap();
        let singles = estimate_marginals(&records, 1, None).unwrap();
        let joint = pairs.get(&[0, 2]).unwrap().lambda().unwrap();
        let q0 = singles.get(&[0]).unwrap().lambda().unwrap();
        let q2 = singles.get(&[2]).unwrap().lambda().unwrap();
        let product = q0.tensor(&q2);
        for x in 0..4 {
            for y in 0..4 {
                assert!(
                    (joint.entry(x, y) - product.entry(x, y)).abs() < 0.01,
                    "entry ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn uncovered_columns_are_flagged() {
        let coll = crate::circuits::CircuitCollection::from_circuits(
            Protocol::Ddot,
            2,
            0,
            vec!["00".into(), "01".into()],
        )
        .unwrap();
        let records = sample_cn(&CnModel::identity(2), &coll, 10, 1).unwrap();
        let table = estimate_marginals(&records, 2, None).unwrap();
        let e = table.get(&[0, 1]).unwrap();
        assert_eq!(e.uncovered_inputs(), vec![2, 3]);
        assert!(matches!(e.lambda(), Err(Error::Uncovered(_))));
    }

    #[test]
    fn multishot_equals_pooled_for_equal_shots() {
        let model = planted_model_library("two_pair_clusters_n6").unwrap();
        let coll = generate_collection(Protocol::Ddot, 6, 100, 3).unwrap();
        let records = sample_cn(&model, &coll, 50, 4).unwrap();
        let pooled = estimate_marginals(&records, 1, None).unwrap();
        let rounds = estimate_marginals_multishot(&records, 1, None).unwrap();
        for (a, b) in pooled.subsets.iter().zip(&rounds.subsets) {
            for x in 0..2 {
                for y in 0..2 {
                    assert!((a.freq[(x, y)] - b.freq[(x, y)]).abs() < 1e-12);
                }
            }
        }
        // single-shot records: both estimators are the plain protocol
        let single = sample_cn(&model, &coll, 1, 4).unwrap();
        let a = estimate_marginals(&single, 1, None).unwrap();
        let b = estimate_marginals_multishot(&single, 1, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multishot_variance_has_setting_reuse_floor() {
        // qubit 0's noise depends on neighbor qubit 2's random input, so
        // with a fixed number of rounds the estimator variance cannot
        // drop below the setting-sampling floor however many shots are
        // taken per round
        let model = planted_model_library("neighbor_chain_n8").unwrap();
        let subset = QubitSubset::new(vec![0], 8).unwrap();
        let repetitions = 500;
        let rounds = 40;
        let variance = |shots: u64, seed_base: u64| -> f64 {
            let mut values = Vec::with_capacity(repetitions);
            for rep in 0..repetitions {
                let coll = generate_collection(
                    Protocol::Ddot,
                    8,
                    rounds,
                    seed_base + rep as u64,
                )
                .unwrap();
                let records =
                    sample_cn(&model, &coll, shots, seed_base + 10_000 + rep as u64).unwrap();
                let table = estimate_marginals_multishot(
                    &records,
                    1,
                    Some(vec![subset.clone()]),
                )
                .unwrap();
                let e = &table.subsets[0];
                if e.occurrences()[0] == 0 {
                    continue;
                }
                values.push(e.table()[(1, 0)]);
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64
        };
        let var_single = variance(1, 1000);
        let var_multi = variance(400, 2000);
        // some reduction, but far from the 1/S factor of 400
        assert!(var_multi < var_single, "{var_multi} vs {var_single}");
        assert!(
            var_multi > var_single / 100.0,
            "variance fell {}x, which would contradict the setting-reuse floor",
            var_single / var_multi
        );
    }

    #[test]
    fn choi_estimate_recovers_ideal_and_rotated_povms() {
        for povm in [Povm::computational(1), Povm::x_basis()] {
            let spec = sim::QuantumDeviceSpec::new(
                1,
                vec![sim::DeviceBlock {
                    qubits: QubitSubset::new(vec![0], 1).unwrap(),
                    povm: povm.clone(),
                }],
            )
            .unwrap();
            let coll = generate_collection(Protocol::Qdot, 1, 100_000, 5).unwrap();
            let records = sample_quantum(&spec, &coll, 1, 6).unwrap();
            let j = estimate_choi_ls(&records, &QubitSubset::new(vec![0], 1).unwrap()).unwrap();
            let truth = measurement_choi(&povm);
            let dist = linalg::hs_norm(&(&j - &truth));
            assert!(dist <= 0.05, "HS distance {dist}");
        }
    }

    #[test]
    fn choi_estimator_is_exact_on_exact_probabilities() {
        // include a POVM with Y structure so the frame convention is pinned
        let theta: f64 = 0.7;
        let ry = CMat::from_row_slice(
            2,
            2,
            &[
                linalg::c((theta / 2.0).cos(), 0.0),
                linalg::c(-(theta / 2.0).sin(), 0.0),
                linalg::c((theta / 2.0).sin(), 0.0),
                linalg::c((theta / 2.0).cos(), 0.0),
            ],
        );
        let phase = CMat::from_row_slice(
            2,
            2,
            &[
                linalg::c(1.0, 0.0),
                linalg::c(0.0, 0.0),
                linalg::c(0.0, 0.0),
                linalg::c(0.0, 1.0),
            ],
        );
        let u = &phase * &ry;
        let rotated = Povm::new(
            2,
            (0..2)
                .map(|x| {
                    let p = Povm::computational(1).effect(x).clone();
                    u.adjoint() * p * &u
                })
                .collect(),
        )
        .unwrap();
        for povm in [Povm::computational(1), Povm::x_basis(), rotated] {
            let est = SubsetEstimate::exact_for_povm(
                QubitSubset::new(vec![0], 1).unwrap(),
                Protocol::Qdot,
                &povm,
            )
            .unwrap();
            let j = choi_from_table(&est).unwrap();
            let truth = measurement_choi(&povm);
            assert!(
                linalg::hs_norm(&(&j - &truth)) < 1e-10,
                "estimator biased for {povm:?}"
            );
        }
    }

    #[test]
    fn cptp_projection_examples() {
        // already CPTP: returned unchanged
        let j = measurement_choi(&Povm::x_basis());
        let p = project_cptp(&j, 2, 2).unwrap();
        assert!(linalg::hs_norm(&(&p - &j)) < 1e-9);

        // negative-eigenvalue perturbation: projected output is PSD, TP,
        // and closer to the truth than the input
        let noise = {
            let v = nalgebra::DVector::from_vec(vec![
                linalg::c(0.6, 0.0),
                linalg::c(-0.3, 0.4),
                linalg::c(0.5, -0.2),
                linalg::c(0.35, 0.1),
            ]);
            let v = &v / linalg::c(v.norm(), 0.0);
            CMat::from_fn(4, 4, |r, s| v[r] * v[s].conj()) * linalg::c(-0.05, 0.0)
        };
        let perturbed = &j + &noise;
        let fixed = project_cptp(&perturbed, 2, 2).unwrap();
        assert!(linalg::min_eigenvalue(&fixed) >= -1e-9);
        let tp = trace_out_outcome(&fixed, 2, 2) - linalg::identity_c(2) * linalg::c(0.5, 0.0);
        assert!(linalg::hs_norm(&tp) <= 1e-7);
        assert!(
            linalg::hs_norm(&(&fixed - &j)) <= linalg::hs_norm(&(&perturbed - &j)) + 1e-12
        );

        // zero matrix projects to the maximally mixed Choi state
        let zero = CMat::zeros(4, 4);
        let mixed = project_cptp(&zero, 2, 2).unwrap();
        for r in 0..4 {
            for s in 0..4 {
                let expect = if r == s { 0.25 } else { 0.0 };
                assert!((mixed[(r, s)] - linalg::c(expect, 0.0)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn povm_from_marginal_paths() {
        // DDOT path: identity and flip noise matrices
        let id = SubsetEstimate::from_parts(
            QubitSubset::new(vec![0], 1).unwrap(),
            Protocol::Ddot,
            RMat::identity(2, 2),
            vec![1, 1],
            vec![10, 10],
        )
        .unwrap();
        let p = povm_from_marginal(&id).unwrap();
        assert!(p.is_diagonal(1e-12));
        assert!((p.effect(0)[(0, 0)].re - 1.0).abs() < 1e-12);

        let flip = SubsetEstimate::from_parts(
            QubitSubset::new(vec![0], 1).unwrap(),
            Protocol::Ddot,
            StochasticMatrix::bit_flip(0.1).entries().clone(),
            vec![1, 1],
            vec![10, 10],
        )
        .unwrap();
        let p = povm_from_marginal(&flip).unwrap();
        assert!((p.effect(0)[(0, 0)].re - 0.9).abs() < 1e-12);
        assert!((p.effect(0)[(1, 1)].re - 0.1).abs() < 1e-12);

        // QDOT path reproduces a quantum POVM from exact statistics
        let est = SubsetEstimate::exact_for_povm(
            QubitSubset::new(vec![0], 1).unwrap(),
            Protocol::Qdot,
            &Povm::x_basis(),
        )
        .unwrap();
        let p = povm_from_marginal(&est).unwrap();
        for x in 0..2 {
            let d = p.effect(x) - Povm::x_basis().effect(x);
            assert!(linalg::hs_norm(&d) < 1e-7);
        }
    }

    #[test]
    fn round_trip_povm_estimation_is_accurate() {
        // povm -> simulate -> estimate -> povm, checked in average-case
        // distance at 1e5 effective samples
        let lam = StochasticMatrix::asymmetric_flip(0.08, 0.14);
        let model = CnModel::from_single_qubit_matrices(vec![lam.clone()]).unwrap();
        let coll = generate_collection(Protocol::Ddot, 1, 100, 51).unwrap();
        let records = sample_cn(&model, &coll, 1000, 52).unwrap();
        let table = estimate_marginals(&records, 1, None).unwrap();
        let est = povm_from_marginal(&table.subsets[0]).unwrap();
        let truth = Povm::from_stochastic(&lam).unwrap();
        let d = crate::distance::ac_distance(&est, &truth).unwrap();
        assert!(d <= 0.02, "ac distance {d}");
    }

    #[test]
    fn tvd_confidence_examples() {
        let b = tvd_confidence(10_000, 2, 0.01).unwrap();
        assert!((b.epsilon_star - 0.016276236307187292).abs() < 1e-12);
        let quadrupled = tvd_confidence(40_000, 2, 0.01).unwrap();
        assert!((quadrupled.epsilon_star - b.epsilon_star / 2.0).abs() < 1e-15);
        assert!(tvd_confidence(10_000, 2, 1.5).is_err());
        assert!(tvd_confidence(10_000, 1, 0.01).is_err());
    }

    #[test]
    fn tvd_confidence_holds_empirically() {
        use rand::Rng;
        let truth = [0.3, 0.7];
        let n_shots = 10_000u64;
        let bound = tvd_confidence(n_shots, 2, 0.01).unwrap().epsilon_star;
        let mut rng = crate::circuits::circuit_rng(99, 0);
        let mut ok = 0;
        for _ in 0..1000 {
            let mut ones = 0u64;
            for _ in 0..n_shots {
                if rng.gen::<f64>() < truth[1] {
                    ones += 1;
                }
            }
            let emp = [
                (n_shots - ones) as f64 / n_shots as f64,
                ones as f64 / n_shots as f64,
            ];
            let d = crate::povm::tvd(&emp, &truth).unwrap();
            if d <= bound {
                ok += 1;
            }
        }
        assert!(ok >= 990, "bound held in {ok}/1000 trials");
    }

    #[test]
    fn noise_matrix_confidence_examples() {
        let e1 = noise_matrix_confidence(1, 10_000, 0.01).unwrap();
        assert!((e1 - 0.017308183826022852).abs() < 1e-12);
        let e2 = noise_matrix_confidence(2, 10_000, 0.01).unwrap();
        assert!(e2 > e1);
    }

    #[test]
    fn theorem_one_coverage_at_small_scale() {
        // with the prescribed circuit count, every pair sees every
        // two-bit input in effectively all regenerated collections
        let q = crate::circuits::ComplexityQuery {
            protocol: Protocol::Ddot,
            k: 2,
            num_qubits: 6,
            epsilon: 0.1,
            delta: 0.05,
        };
        let n_mes = crate::circuits::required_circuits_matrix_elements(&q).unwrap() as usize;
        let mut failures = 0;
        for rep in 0..200 {
            let coll = generate_collection(Protocol::Ddot, 6, n_mes, 3_000 + rep).unwrap();
            let mut covered = true;
            'outer: for i in 0..6 {
                for j in i + 1..6 {
                    let mut seen = [false; 4];
                    for c in &coll.circuits {
                        let b = c.as_bytes();
                        seen[(((b[i] - b'0') << 1) | (b[j] - b'0')) as usize] = true;
                    }
                    if seen.iter().any(|s| !s) {
                        covered = false;
                        break 'outer;
                    }
                }
            }
            if !covered {
                failures += 1;
            }
        }
        assert!(failures as f64 / 200.0 <= 0.05, "{failures} failures");
    }

    #[test]
    fn estimation_is_order_independent() {
        let model = planted_model_library("two_pair_clusters_n6").unwrap();
        let coll = generate_collection(Protocol::Ddot, 6, 50, 8).unwrap();
        let mut records = sample_cn(&model, &coll, 100, 9).unwrap();
        let forward = estimate_marginals(&records, 2, None).unwrap();
        records.records.reverse();
        let backward = estimate_marginals(&records, 2, None).unwrap();
        assert_eq!(forward, backward);
    }

    #[test]
    fn table_json_round_trip() {
        let model = planted_model_library("two_pair_clusters_n6").unwrap();
        let coll = generate_collection(Protocol::Ddot, 6, 60, 14).unwrap();
        let records = sample_cn(&model, &coll, 100, 15).unwrap();
        let table = estimate_marginals(&records, 2, None).unwrap();
        let s = serde_json::to_string(&table).unwrap();
        let back: MarginalTable = serde_json::from_str(&s).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn ideal_born_column_check() {
        // estimates of the ideal device are exactly the Born probabilities
        let est = SubsetEstimate::exact_for_povm(
            QubitSubset::new(vec![0], 1).unwrap(),
            Protocol::Ddot,
            &Povm::computational(1),
        )
        .unwrap();
        let lam = est.lambda().unwrap();
        assert!((lam.entry(0, 0) - 1.0).abs() < 1e-12);
        assert!((lam.entry(1, 1) - 1.0).abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(2);
        let probs = crate::povm::born_probabilities(&Povm::computational(1), &mixed).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12);
    }
}
