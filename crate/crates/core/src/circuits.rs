//! Overlapping detector tomography circuit collections and the closed-form
//! circuit-count requirements for the two protocols.
//!
//! A circuit is a string of per-qubit preparation symbols. DDOT uses the
//! two computational basis states; QDOT uses all six Pauli eigenstates,
//! in the fixed order Z+, Z-, X+, X-, Y+, Y-.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::povm::DensityMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ddot,
    Qdot,
}

impl Protocol {
    pub fn alphabet_size(&self) -> usize {
        match self {
            Protocol::Ddot => 2,
            Protocol::Qdot => 6,
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::Ddot => write!(f, "ddot"),
            Protocol::Qdot => write!(f, "qdot"),
        }
    }
}

/// A reproducible collection of preparation-setting strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitCollection {
    pub protocol: Protocol,
    pub num_qubits: usize,
    pub seed: u64,
    pub circuits: Vec<String>,
}

impl CircuitCollection {
    /// Validate an externally supplied list of setting strings.
    pub fn from_circuits(
        protocol: Protocol,
        num_qubits: usize,
        seed: u64,
        circuits: Vec<String>,
    ) -> Result<Self> {
        let alphabet = protocol.alphabet_size();
        for (i, c) in circuits.iter().enumerate() {
            if c.len() != num_qubits {
                return Err(Error::InvalidArgument(format!(
                    "circuit {i} has length {}, expected {num_qubits}",
                    c.len()
                )));
            }
            for ch in c.chars() {
                let sym = ch.to_digit(10).map(|d| d as usize);
                if sym.is_none() || sym.unwrap() >= alphabet {
                    return Err(Error::InvalidSymbol(ch));
                }
            }
        }
        Ok(Self { protocol, num_qubits, seed, circuits })
    }
}

/// Generate a collection of i.i.d. uniform setting strings. One RNG
/// substream per circuit index, so the output is identical under any
/// parallel schedule.
pub fn generate_collection(
    protocol: Protocol,
    num_qubits: usize,
    num_circuits: usize,
    seed: u64,
) -> Result<CircuitCollection> {
    if num_circuits == 0 {
        return Err(Error::InvalidArgument("num_circuits must be >= 1".into()));
    }
    if num_qubits == 0 {
        return Err(Error::InvalidArgument("num_qubits must be >= 1".into()));
    }
    let alphabet = protocol.alphabet_size() as u32;
    let circuits: Vec<String> = (0..num_circuits)
        .into_par_iter()
        .map(|i| {
            let mut rng = circuit_rng(seed, i as u64);
            (0..num_qubits)
                .map(|_| char::from_digit(rng.gen_range(0..alphabet), 10).unwrap())
                .collect()
        })
        .collect();
    Ok(CircuitCollection { protocol, num_qubits, seed, circuits })
}

/// Substream RNG for one circuit of a seeded collection.
pub(crate) fn circuit_rng(seed: u64, circuit_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(circuit_index);
    rng
}

/// Parameters of a sample-complexity query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityQuery {
    pub protocol: Protocol,
    pub k: usize,
    pub num_qubits: usize,
    pub epsilon: f64,
    pub delta: f64,
}

impl ComplexityQuery {
    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.num_qubits {
            return Err(Error::InvalidArgument(format!(
                "locality k = {} out of range for {} qubits",
                self.k, self.num_qubits
            )));
        }
        if self.k > 12 {
            return Err(Error::InvalidArgument(format!(
                "locality k = {} exceeds overflow guard (12)",
                self.k
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon = {} must be in (0, 1]",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta = {} must be in (0, 1)",
                self.delta
            )));
        }
        Ok(())
    }
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    (1..=k).map(|i| (((n - k + i) as f64) / i as f64).ln()).sum()
}

/// Number of circuits sufficient to estimate all k-qubit reduced matrix
/// elements within `epsilon` at confidence `1 - delta`.
///
/// The DDOT count is the ceiling of
/// `2^k / (1 - exp(-2 eps^2)) * [(k+1) ln 2 + ln C(N,k) + ln(1/delta)]`;
/// the QDOT count scales it by the input-alphabet blow-up `3^k`.
pub fn required_circuits_matrix_elements(q: &ComplexityQuery) -> Result<u64> {
    q.validate()?;
    let bracket = (q.k as f64 + 1.0) * std::f64::consts::LN_2
        + ln_binomial(q.num_qubits, q.k)
        + (1.0 / q.delta).ln();
    let ddot = ((1u64 << q.k) as f64 / (1.0 - (-2.0 * q.epsilon * q.epsilon).exp()) * bracket)
        .ceil() as u64;
    Ok(match q.protocol {
        Protocol::Ddot => ddot,
        Protocol::Qdot => 3u64.pow(q.k as u32) * ddot,
    })
}

pub(crate) fn choi_expression(q: &ComplexityQuery) -> f64 {
    (6f64.powi(q.k as i32) / (q.epsilon * q.epsilon))
        * (64.0 / 3.0)
        * (ln_binomial(q.num_qubits, q.k)
            + 2.0 * q.k as f64 * std::f64::consts::LN_2
            + (1.0 / q.delta).ln())
}

/// Number of QDOT circuits sufficient for least-squares Choi reconstruction
/// of all k-qubit reduced measurement channels within `epsilon` in
/// Hilbert-Schmidt norm at confidence `1 - delta`.
pub fn required_circuits_choi(q: &ComplexityQuery) -> Result<u64> {
    q.validate()?;
    if q.protocol != Protocol::Qdot {
        return Err(Error::UnsupportedProtocol(
            "Choi reconstruction needs informationally complete inputs; use QDOT".into(),
        ));
    }
    Ok(choi_expression(q).ceil() as u64)
}

/// Single-qubit preparation state for a setting symbol:
/// 0,1 -> Z eigenstates, 2,3 -> X eigenstates, 4,5 -> Y eigenstates.
pub fn setting_to_state(symbol: char) -> Result<DensityMatrix> {
    let h = linalg::c(0.5, 0.0);
    let m = match symbol {
        '0' => return Ok(DensityMatrix::basis_state(2, 0)),
        '1' => return Ok(DensityMatrix::basis_state(2, 1)),
        '2' => CMat::from_row_slice(2, 2, &[h, h, h, h]),
        '3' => CMat::from_row_slice(2, 2, &[h, -h, -h, h]),
        '4' => CMat::from_row_slice(
            2,
            2,
            &[h, linalg::c(0.0, -0.5), linalg::c(0.0, 0.5), h],
        ),
        '5' => CMat::from_row_slice(
            2,
            2,
            &[h, linalg::c(0.0, 0.5), linalg::c(0.0, -0.5), h],
        ),
        other => return Err(Error::InvalidSymbol(other)),
    };
    DensityMatrix::new(m)
}

/// Tensor product of the preparation states of a setting string.
pub fn setting_string_to_state(setting: &str) -> Result<DensityMatrix> {
    let mut chars = setting.chars();
    let first = chars
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty setting string".into()))?;
    let mut state = setting_to_state(first)?;
    for ch in chars {
        state = state.tensor(&setting_to_state(ch)?);
    }
    Ok(state)
}

const GATE_LABELS: [&str; 6] = ["I", "X", "Y90", "Y-90", "X-90", "X90"];

/// Plain-text gate labels for hand-off to external transpilers, one line
/// per circuit. Best effort; not round-tripped.
pub fn gate_lines(collection: &CircuitCollection) -> String {
    let mut out = String::new();
    for circuit in &collection.circuits {
        let line: Vec<&str> = circuit
            .chars()
            .map(|ch| GATE_LABELS[ch.to_digit(10).unwrap() as usize])
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
