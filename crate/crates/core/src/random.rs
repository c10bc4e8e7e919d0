//! Random states and POVMs for validation and property tests.

use crate::linalg::{self, CMat};
use crate::povm::{DensityMatrix, Povm};
use num_complex::Complex64;
use rand::Rng;

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gaussian_complex<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(standard_normal(rng), standard_normal(rng))
}

/// Haar-random pure state of the given dimension.
pub fn haar_state<R: Rng>(dim: usize, rng: &mut R) -> DensityMatrix {
    loop {
        let v: Vec<Complex64> = (0..dim).map(|_| gaussian_complex(rng)).collect();
        let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            let normalized: Vec<Complex64> =
                v.into_iter().map(|z| z / linalg::c(norm, 0.0)).collect();
            return DensityMatrix::pure(&normalized).unwrap();
        }
    }
}

/// Random POVM: Wishart-distributed positive matrices normalized through
/// the inverse square root of their sum.
pub fn random_povm<R: Rng>(dim: usize, outcomes: usize, rng: &mut R) -> Povm {
    let raw: Vec<CMat> = (0..outcomes)
        .map(|_| {
            let a = CMat::from_fn(dim, dim, |_, _| gaussian_complex(rng));
            &a * a.adjoint()
        })
        .collect();
    let mut sum = CMat::zeros(dim, dim);
    for g in &raw {
        sum += g;
    }
    let eig = sum.symmetric_eigen();
    let inv_sqrt = &eig.eigenvectors
        * CMat::from_diagonal(&eig.eigenvalues.map(|v| linalg::c(1.0 / v.sqrt(), 0.0)))
        * eig.eigenvectors.adjoint();
    let effects: Vec<CMat> = raw.iter().map(|g| &inv_sqrt * g * &inv_sqrt).collect();
    // symmetrize out round-off before validation
    let effects = effects
        .into_iter()
        .map(|e| {
            let adj = e.adjoint();
            (e + adj) * linalg::c(0.5, 0.0)
        })
        .collect();
    Povm::new(dim, effects).expect("normalized Wishart effects form a POVM")
}
