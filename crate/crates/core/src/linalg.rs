//! Small dense-matrix helpers shared across the crate.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Maximum absolute element of `m - m†`.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            worst = worst.max(d);
        }
    }
    worst
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let mut vals: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Largest eigenvalue together with a corresponding unit eigenvector.
pub fn top_eigenpair(m: &CMat) -> (f64, Vec<Complex64>) {
    let eig = m.clone().symmetric_eigen();
    let mut best = 0usize;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v: Vec<Complex64> = eig.eigenvectors.column(best).iter().copied().collect();
    (eig.eigenvalues[best], v)
}

pub fn trace(m: &CMat) -> Complex64 {
    let mut t = Complex64::default();
    for i in 0..m.nrows().min(m.ncols()) {
        t += m[(i, i)];
    }
    t
}

/// Hilbert-Schmidt (Frobenius) norm.
pub fn hs_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn identity_c(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// Bit of `index` belonging to qubit `q` out of `n`, with qubit 0 as the
/// most significant bit.
pub fn bit_at(index: usize, q: usize, n: usize) -> usize {
    (index >> (n - 1 - q)) & 1
}

/// Index over the subset `positions` (in listed order, first position most
/// significant) extracted from a full `n`-bit index.
pub fn sub_index(full: usize, positions: &[usize], n: usize) -> usize {
    positions
        .iter()
        .fold(0usize, |acc, &q| (acc << 1) | bit_at(full, q, n))
}

/// Full `n`-bit index assembled from bits of `a_index` placed at
/// `a_positions` and bits of `b_index` placed at `b_positions`.
pub fn merge_indices(
    a_positions: &[usize],
    a_index: usize,
    b_positions: &[usize],
    b_index: usize,
    n: usize,
) -> usize {
    let mut full = 0usize;
    for (r, &q) in a_positions.iter().enumerate() {
        full |= ((a_index >> (a_positions.len() - 1 - r)) & 1) << (n - 1 - q);
    }
    for (r, &q) in b_positions.iter().enumerate() {
        full |= ((b_index >> (b_positions.len() - 1 - r)) & 1) << (n - 1 - q);
    }
    full
}

/// Euclidean projection of a real vector onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Near-uniform unit directions on the sphere (Fibonacci lattice).
pub fn fibonacci_sphere(count: usize) -> Vec<[f64; 3]> {
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_conventions_msb_first() {
        // index 0b10 over 2 qubits: qubit 0 carries the leading bit
        assert_eq!(bit_at(0b10, 0, 2), 1);
        assert_eq!(bit_at(0b10, 1, 2), 0);
        assert_eq!(sub_index(0b101, &[0, 2], 3), 0b11);
        assert_eq!(merge_indices(&[0, 2], 0b11, &[1], 0b0, 3), 0b101);
    }

    #[test]
    fn simplex_projection_fixed_points_and_negatives() {
        let p = project_to_simplex(&[0.2, 0.3, 0.5]);
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let q = project_to_simplex(&[1.2, -0.2]);
        assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(q.iter().all(|&x| x >= 0.0));
    }
}
