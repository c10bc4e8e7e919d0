//! Measurement-theory data types: POVMs, stochastic noise matrices, qubit
//! subsets and density matrices, together with the reduction and Born-rule
//! operations everything else is built on.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, RMat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const HERMITICITY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-9;
const IDENTITY_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-10;
const COLUMN_SUM_TOL: f64 = 1e-9;
const TVD_NORMALIZATION_TOL: f64 = 1e-6;

/// Positive operator-valued measure: a list of PSD effects summing to the
/// identity on a 2^n-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PovmJson", into = "PovmJson")]
pub struct Povm {
    dim: usize,
    effects: Vec<CMat>,
}

impl Povm {
    pub fn new(dim: usize, effects: Vec<CMat>) -> Result<Self> {
        if !dim.is_power_of_two() {
            return Err(Error::InvalidPovm(format!(
                "dimension {dim} is not a power of two"
            )));
        }
        if effects.is_empty() {
            return Err(Error::InvalidPovm("no effects".into()));
        }
        let mut sum = CMat::zeros(dim, dim);
        for (i, e) in effects.iter().enumerate() {
            if e.nrows() != dim || e.ncols() != dim {
                return Err(Error::InvalidPovm(format!(
                    "effect {i} has shape {}x{}, expected {dim}x{dim}",
                    e.nrows(),
                    e.ncols()
                )));
            }
            let h = linalg::hermiticity_defect(e);
            if h > HERMITICITY_TOL {
                return Err(Error::InvalidPovm(format!(
                    "effect {i} is not Hermitian (defect {h:.3e})"
                )));
            }
            let min_eig = linalg::min_eigenvalue(e);
            if min_eig < PSD_TOL {
                return Err(Error::InvalidPovm(format!(
                    "effect {i} is not PSD (min eigenvalue {min_eig:.3e})"
                )));
            }
            sum += e;
        }
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { 1.0 } else { 0.0 };
                if (sum[(i, j)] - linalg::c(target, 0.0)).norm() > IDENTITY_TOL {
                    return Err(Error::InvalidPovm(format!(
                        "effects do not sum to identity at ({i},{j}): {}",
                        sum[(i, j)]
                    )));
                }
            }
        }
        Ok(Self { dim, effects })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn num_qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn effects(&self) -> &[CMat] {
        &self.effects
    }

    pub fn effect(&self, x: usize) -> &CMat {
        &self.effects[x]
    }

    /// Ideal computational-basis projective measurement on `num_qubits`.
    pub fn computational(num_qubits: usize) -> Self {
        let dim = 1 << num_qubits;
        let effects = (0..dim)
            .map(|x| {
                let mut m = CMat::zeros(dim, dim);
                m[(x, x)] = linalg::c(1.0, 0.0);
                m
            })
            .collect();
        Self { dim, effects }
    }

    /// Single-qubit measurement in the Pauli X eigenbasis.
    pub fn x_basis() -> Self {
        let h = linalg::c(0.5, 0.0);
        let plus = CMat::from_row_slice(2, 2, &[h, h, h, h]);
        let minus = CMat::from_row_slice(2, 2, &[h, -h, -h, h]);
        Self { dim: 2, effects: vec![plus, minus] }
    }

    /// Diagonal POVM induced by a stochastic noise matrix: effect `x` has
    /// row `x` of the matrix along its diagonal.
    pub fn from_stochastic(lambda: &StochasticMatrix) -> Result<Self> {
        let dim = lambda.dim_in();
        if !dim.is_power_of_two() {
            return Err(Error::InvalidPovm(format!(
                "input dimension {dim} is not a power of two"
            )));
        }
        let effects = (0..lambda.dim_out())
            .map(|x| {
                let mut m = CMat::zeros(dim, dim);
                for y in 0..dim {
                    m[(y, y)] = linalg::c(lambda.entry(x, y), 0.0);
                }
                m
            })
            .collect();
        Ok(Self { dim, effects })
    }

    /// Fully dephased counterpart: every effect replaced by its diagonal.
    pub fn dephased(&self) -> Self {
        let effects = self
            .effects
            .iter()
            .map(|e| {
                let mut m = CMat::zeros(self.dim, self.dim);
                for i in 0..self.dim {
                    m[(i, i)] = linalg::c(e[(i, i)].re, 0.0);
                }
                m
            })
            .collect();
        Self { dim: self.dim, effects }
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.effects.iter().all(|e| {
            (0..self.dim)
                .all(|i| (0..self.dim).all(|j| i == j || e[(i, j)].norm() <= tol))
        })
    }

    /// Tensor product; the left factor's qubits come first (most
    /// significant) in the combined outcome index.
    pub fn tensor(&self, other: &Povm) -> Self {
        let dim = self.dim * other.dim;
        let mut effects = Vec::with_capacity(self.effects.len() * other.effects.len());
        for a in &self.effects {
            for b in &other.effects {
                effects.push(a.kronecker(b));
            }
        }
        Self { dim, effects }
    }
}

#[derive(Serialize, Deserialize)]
struct PovmJson {
    dim: usize,
    effects: Vec<Vec<[f64; 2]>>,
}

impl From<Povm> for PovmJson {
    fn from(p: Povm) -> Self {
        let effects = p
            .effects
            .iter()
            .map(|e| {
                let mut flat = Vec::with_capacity(p.dim * p.dim);
                for i in 0..p.dim {
                    for j in 0..p.dim {
                        flat.push([e[(i, j)].re, e[(i, j)].im]);
                    }
                }
                flat
            })
            .collect();
        PovmJson { dim: p.dim, effects }
    }
}

impl TryFrom<PovmJson> for Povm {
    type Error = Error;

    fn try_from(j: PovmJson) -> Result<Self> {
        let effects = j
            .effects
            .iter()
            .map(|flat| {
                if flat.len() != j.dim * j.dim {
                    return Err(Error::InvalidPovm(format!(
                        "effect has {} entries, expected {}",
                        flat.len(),
                        j.dim * j.dim
                    )));
                }
                Ok(CMat::from_fn(j.dim, j.dim, |i, k| {
                    let [re, im] = flat[i * j.dim + k];
                    linalg::c(re, im)
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        Povm::new(j.dim, effects)
    }
}

/// Left-stochastic real matrix; `entry(x, y)` is the probability of reading
/// `x` given true outcome `y`, so columns sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StochasticJson", into = "StochasticJson")]
pub struct StochasticMatrix {
    entries: RMat,
}

impl StochasticMatrix {
    pub fn new(entries: RMat) -> Result<Self> {
        for j in 0..entries.ncols() {
            let mut col_sum = 0.0;
            for i in 0..entries.nrows() {
                let v = entries[(i, j)];
                if !(-COLUMN_SUM_TOL..=1.0 + COLUMN_SUM_TOL).contains(&v) {
                    return Err(Error::InvalidStochastic(format!(
                        "entry ({i},{j}) = {v} outside [0, 1]"
                    )));
                }
                col_sum += v;
            }
            if (col_sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidStochastic(format!(
                    "column {j} sums to {col_sum}, expected 1"
                )));
            }
        }
        let clamped = entries.map(|v| v.clamp(0.0, 1.0));
        Ok(Self { entries: clamped })
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: RMat::identity(dim, dim) }
    }

    /// Symmetric single-bit flip with probability `p`.
    pub fn bit_flip(p: f64) -> Self {
        Self {
            entries: RMat::from_row_slice(2, 2, &[1.0 - p, p, p, 1.0 - p]),
        }
    }

    /// Single-bit readout noise with `P(read 1 | true 0) = p10` and
    /// `P(read 0 | true 1) = p01`.
    pub fn asymmetric_flip(p10: f64, p01: f64) -> Self {
        Self {
            entries: RMat::from_row_slice(2, 2, &[1.0 - p10, p01, p10, 1.0 - p01]),
        }
    }

    pub fn dim_out(&self) -> usize {
        self.entries.nrows()
    }

    pub fn dim_in(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.entries[(x, y)]
    }

    pub fn entries(&self) -> &RMat {
        &self.entries
    }

    pub fn column(&self, y: usize) -> Vec<f64> {
        (0..self.dim_out()).map(|x| self.entries[(x, y)]).collect()
    }

    /// Apply to a probability vector: `Λ p`.
    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.dim_in() {
            return Err(Error::ShapeMismatch(format!(
                "vector length {} vs matrix input dimension {}",
                p.len(),
                self.dim_in()
            )));
        }
        Ok((0..self.dim_out())
            .map(|x| (0..self.dim_in()).map(|y| self.entries[(x, y)] * p[y]).sum())
            .collect())
    }

    /// Tensor product; the left factor's bits come first in the combined
    /// outcome and input indices.
    pub fn tensor(&self, other: &StochasticMatrix) -> Self {
        Self { entries: self.entries.kronecker(&other.entries) }
    }
}

#[derive(Serialize, Deserialize)]
struct StochasticJson {
    dim_out: usize,
    dim_in: usize,
    entries: Vec<f64>,
}

impl From<StochasticMatrix> for StochasticJson {
    fn from(m: StochasticMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.dim_out() * m.dim_in());
        for i in 0..m.dim_out() {
            for j in 0..m.dim_in() {
                entries.push(m.entry(i, j));
            }
        }
        StochasticJson { dim_out: m.dim_out(), dim_in: m.dim_in(), entries }
    }
}

impl TryFrom<StochasticJson> for StochasticMatrix {
    type Error = Error;

    fn try_from(j: StochasticJson) -> Result<Self> {
        if j.entries.len() != j.dim_out * j.dim_in {
            return Err(Error::InvalidStochastic(format!(
                "{} entries for a {}x{} matrix",
                j.entries.len(),
                j.dim_out,
                j.dim_in
            )));
        }
        StochasticMatrix::new(RMat::from_row_slice(j.dim_out, j.dim_in, &j.entries))
    }
}

/// Ordered subset of qubit indices out of `total_qubits`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "SubsetJson", into = "SubsetJson")]
pub struct QubitSubset {
    indices: Vec<usize>,
    total_qubits: usize,
}

impl QubitSubset {
    pub fn new(indices: Vec<usize>, total_qubits: usize) -> Result<Self> {
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidSubset(format!(
                    "indices must be strictly increasing, got {indices:?}"
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= total_qubits {
                return Err(Error::InvalidSubset(format!(
                    "index {last} out of range for {total_qubits} qubits"
                )));
            }
        }
        Ok(Self { indices, total_qubits })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn total_qubits(&self) -> usize {
        self.total_qubits
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, q: usize) -> bool {
        self.indices.binary_search(&q).is_ok()
    }

    pub fn complement(&self) -> Vec<usize> {
        (0..self.total_qubits).filter(|q| !self.contains(*q)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct SubsetJson {
    qubits: Vec<usize>,
    total_qubits: usize,
}

impl From<QubitSubset> for SubsetJson {
    fn from(s: QubitSubset) -> Self {
        SubsetJson { qubits: s.indices, total_qubits: s.total_qubits }
    }
}

impl TryFrom<SubsetJson> for QubitSubset {
    type Error = Error;

    fn try_from(j: SubsetJson) -> Result<Self> {
        QubitSubset::new(j.qubits, j.total_qubits)
    }
}

/// Hermitian, PSD, unit-trace state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMat,
}

impl DensityMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidDensity("matrix not square".into()));
        }
        let h = linalg::hermiticity_defect(&matrix);
        if h > TRACE_TOL {
            return Err(Error::InvalidDensity(format!(
                "not Hermitian (defect {h:.3e})"
            )));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let min_eig = linalg::min_eigenvalue(&matrix);
        if min_eig < PSD_TOL {
            return Err(Error::InvalidDensity(format!(
                "not PSD (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensity(format!(
                "state vector norm^2 = {norm}, expected 1"
            )));
        }
        let d = amplitudes.len();
        let m = CMat::from_fn(d, d, |i, j| amplitudes[i] * amplitudes[j].conj());
        Ok(Self { matrix: m })
    }

    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut m = CMat::zeros(dim, dim);
        m[(index, index)] = linalg::c(1.0, 0.0);
        Self { matrix: m }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: linalg::identity_c(dim) / linalg::c(dim as f64, 0.0) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Self {
        Self { matrix: self.matrix.kronecker(&other.matrix) }
    }
}

/// Total variation distance between two probability vectors.
pub fn tvd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!(
            "distribution lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    for (name, v) in [("first", p), ("second", q)] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > TVD_NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "{name} distribution sums to {s}, expected 1"
            )));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Born-rule outcome probabilities `tr(M_x ρ)`, clamped and renormalized.
pub fn born_probabilities(m: &Povm, rho: &DensityMatrix) -> Result<Vec<f64>> {
    if m.dim() != rho.dim() {
        return Err(Error::ShapeMismatch(format!(
            "POVM dimension {} vs state dimension {}",
            m.dim(),
            rho.dim()
        )));
    }
    let mut raw = Vec::with_capacity(m.num_outcomes());
    for (x, e) in m.effects().iter().enumerate() {
        let p = linalg::trace(&(e * rho.matrix())).re;
        if p < PSD_TOL {
            return Err(Error::InvalidArgument(format!(
                "outcome {x} has probability {p:.3e} below tolerance"
            )));
        }
        raw.push(p.clamp(0.0, 1.0));
    }
    let sum: f64 = raw.iter().sum();
    if (sum - 1.0).abs() > IDENTITY_TOL {
        return Err(Error::InvalidArgument(format!(
            "probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(raw.into_iter().map(|p| p / sum).collect())
}

/// Reduced POVM on `subset`, with a fixed state on the complement
/// (maximally mixed when `complement_state` is `None`).
pub fn reduce_povm(
    m: &Povm,
    subset: &QubitSubset,
    complement_state: Option<&DensityMatrix>,
) -> Result<Povm> {
    let n = m.num_qubits();
    if m.num_outcomes() != m.dim() {
        return Err(Error::InvalidArgument(format!(
            "reduction needs one outcome per basis state, got {} outcomes for dimension {}",
            m.num_outcomes(),
            m.dim()
        )));
    }
    if subset.total_qubits() != n {
        return Err(Error::ShapeMismatch(format!(
            "subset over {} qubits, POVM has {}",
            subset.total_qubits(),
            n
        )));
    }
    let comp = subset.complement();
    let k = subset.len();
    let comp_dim = 1 << comp.len();
    let mixed;
    let sigma = match complement_state {
        Some(s) => {
            if s.dim() != comp_dim {
                return Err(Error::ShapeMismatch(format!(
                    "complement state dimension {} vs expected {}",
                    s.dim(),
                    comp_dim
                )));
            }
            s
        }
        None => {
            mixed = DensityMatrix::maximally_mixed(comp_dim);
            &mixed
        }
    };

    let sub_dim = 1 << k;
    let mut effects = Vec::with_capacity(sub_dim);
    for x_a in 0..sub_dim {
        let mut eff = CMat::zeros(sub_dim, sub_dim);
        for x_comp in 0..comp_dim {
            let full_effect = m.effect(linalg::merge_indices(
                subset.indices(),
                x_a,
                &comp,
                x_comp,
                n,
            ));
            for i in 0..sub_dim {
                for j in 0..sub_dim {
                    let mut acc = Complex64::default();
                    for a in 0..comp_dim {
                        let row = linalg::merge_indices(subset.indices(), i, &comp, a, n);
                        for b in 0..comp_dim {
                            let col =
                                linalg::merge_indices(subset.indices(), j, &comp, b, n);
                            acc += full_effect[(row, col)] * sigma.matrix()[(b, a)];
                        }
                    }
                    eff[(i, j)] += acc;
                }
            }
        }
        effects.push(eff);
    }
    Povm::new(sub_dim, effects)
}

/// Choi state of the measurement channel: `(1/d) Σ_x |x⟩⟨x| ⊗ M_xᵀ`,
/// an (m·d)-dimensional PSD matrix with unit trace.
pub fn measurement_choi(m: &Povm) -> CMat {
    let d = m.dim();
    let outcomes = m.num_outcomes();
    let total = outcomes * d;
    let mut j = CMat::zeros(total, total);
    for (x, e) in m.effects().iter().enumerate() {
        for r in 0..d {
            for s in 0..d {
                // transpose: entry (r, s) of M_xᵀ is M_x[s, r]
                j[(x * d + r, x * d + s)] = e[(s, r)] / linalg::c(d as f64, 0.0);
            }
        }
    }
    j
}
