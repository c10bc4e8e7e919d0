//! Distance measures between measurements: worst-case (operational),
//! average-case, and their stochastic-matrix counterparts.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::povm::{Povm, StochasticMatrix};
use num_complex::Complex64;

/// Default cap on outcome count for the exact worst-case distance; the
/// enumeration is exponential in the number of outcomes.
pub const DEFAULT_OUTCOME_CAP: usize = 8;

fn check_same_shape(m: &Povm, n: &Povm) -> Result<()> {
    if m.dim() != n.dim() || m.num_outcomes() != n.num_outcomes() {
        return Err(Error::ShapeMismatch(format!(
            "POVMs of dimension {}x{} outcomes vs {}x{}",
            m.dim(),
            m.num_outcomes(),
            n.dim(),
            n.num_outcomes()
        )));
    }
    Ok(())
}

/// Worst-case (operational) distance: the maximal total variation distance
/// between induced statistics over all input states. Computed exactly as
/// the maximum over outcome subsets `S` of the largest eigenvalue of
/// `Σ_{i∈S} (M_i - N_i)`.
pub fn wc_distance(m: &Povm, n: &Povm) -> Result<f64> {
    wc_distance_capped(m, n, DEFAULT_OUTCOME_CAP).map(|w| w.value)
}

pub struct WcWitness {
    pub value: f64,
    /// Bitmask of the maximizing outcome subset.
    pub subset_mask: usize,
    /// Unit top eigenvector of the maximizing subset's effect difference;
    /// the pure state achieving the supremum.
    pub state: Vec<Complex64>,
}

pub fn wc_distance_capped(m: &Povm, n: &Povm, cap: usize) -> Result<WcWitness> {
    check_same_shape(m, n)?;
    let outcomes = m.num_outcomes();
    if outcomes > cap {
        return Err(Error::TooManyOutcomes { outcomes, cap });
    }
    let deltas: Vec<CMat> = (0..outcomes)
        .map(|i| m.effect(i) - n.effect(i))
        .collect();
    let mut best = WcWitness {
        value: 0.0,
        subset_mask: 0,
        state: {
            let mut v = vec![Complex64::default(); m.dim()];
            v[0] = linalg::c(1.0, 0.0);
            v
        },
    };
    for mask in 1..(1usize << outcomes) {
        let mut sum = CMat::zeros(m.dim(), m.dim());
        for (i, d) in deltas.iter().enumerate() {
            if (mask >> i) & 1 == 1 {
                sum += d;
            }
        }
        let (val, vec) = linalg::top_eigenpair(&sum);
        if val > best.value {
            best = WcWitness { value: val, subset_mask: mask, state: vec };
        }
    }
    Ok(best)
}

/// Worst-case distance between stochastic maps: half the maximal column
/// l1 norm of the difference. Agrees with [`wc_distance`] on the induced
/// diagonal POVMs.
pub fn wc_distance_stochastic(a: &StochasticMatrix, b: &StochasticMatrix) -> Result<f64> {
    if a.dim_out() != b.dim_out() || a.dim_in() != b.dim_in() {
        return Err(Error::ShapeMismatch(format!(
            "stochastic matrices {}x{} vs {}x{}",
            a.dim_out(),
            a.dim_in(),
            b.dim_out(),
            b.dim_in()
        )));
    }
    let mut best = 0.0f64;
    for y in 0..a.dim_in() {
        let col: f64 = (0..a.dim_out())
            .map(|x| (a.entry(x, y) - b.entry(x, y)).abs())
            .sum();
        best = best.max(col);
    }
    Ok(0.5 * best)
}

/// Average-case distance: `(1/2d) Σ_i sqrt(‖M_i-N_i‖²_HS + tr²(M_i-N_i))`,
/// a closed-form proxy for the mean TVD over Haar-random pure states.
pub fn ac_distance(m: &Povm, n: &Povm) -> Result<f64> {
    check_same_shape(m, n)?;
    let d = m.dim() as f64;
    let mut total = 0.0;
    for i in 0..m.num_outcomes() {
        let delta = m.effect(i) - n.effect(i);
        let hs2: f64 = delta.iter().map(|z| z.norm_sqr()).sum();
        let tr = linalg::trace(&delta).re;
        total += (hs2 + tr * tr).sqrt();
    }
    Ok(total / (2.0 * d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RMat;
    use crate::povm::Povm;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn swapped_computational() -> Povm {
        let p = Povm::computational(1);
        Povm::new(2, vec![p.effect(1).clone(), p.effect(0).clone()]).unwrap()
    }

    fn random_stochastic(rng: &mut StdRng, dim: usize) -> StochasticMatrix {
        let mut entries = RMat::zeros(dim, dim);
        for j in 0..dim {
            let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            for i in 0..dim {
                entries[(i, j)] = raw[i] / s;
            }
        }
        StochasticMatrix::new(entries).unwrap()
    }

    #[test]
    fn wc_examples() {
        let p = Povm::computational(1);
        assert!(wc_distance(&p, &p).unwrap().abs() < 1e-12);
        assert!((wc_distance(&p, &swapped_computational()).unwrap() - 1.0).abs() < 1e-12);
        let flip = Povm::from_stochastic(&StochasticMatrix::bit_flip(0.1)).unwrap();
        assert!((wc_distance(&p, &flip).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn wc_refuses_above_cap() {
        let p = Povm::computational(4); // 16 outcomes
        match wc_distance(&p, &p) {
            Err(Error::TooManyOutcomes { outcomes: 16, cap: 8 }) => {}
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn wc_stochastic_examples() {
        let id = StochasticMatrix::identity(2);
        assert!(wc_distance_stochastic(&id, &id).unwrap().abs() < 1e-15);
        let flip = StochasticMatrix::bit_flip(0.1);
        assert!((wc_distance_stochastic(&flip, &id).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn wc_stochastic_matches_povm_route() {
        let mut rng = StdRng::seed_from_u64(11);
        for dim in [2usize, 4] {
            for _ in 0..20 {
                let a = random_stochastic(&mut rng, dim);
                let b = random_stochastic(&mut rng, dim);
                let via_matrix = wc_distance_stochastic(&a, &b).unwrap();
                let via_povm = wc_distance(
                    &Povm::from_stochastic(&a).unwrap(),
                    &Povm::from_stochastic(&b).unwrap(),
                )
                .unwrap();
                assert!(
                    (via_matrix - via_povm).abs() < 1e-9,
                    "dim {dim}: {via_matrix} vs {via_povm}"
                );
            }
        }
    }

    #[test]
    fn ac_examples() {
        let p = Povm::computational(1);
        assert!(ac_distance(&p, &p).unwrap().abs() < 1e-15);
        let expected = std::f64::consts::SQRT_2 / 2.0;
        assert!((ac_distance(&p, &swapped_computational()).unwrap() - expected).abs() < 1e-12);
        let flip = Povm::from_stochastic(&StochasticMatrix::bit_flip(0.1)).unwrap();
        let expected = 0.1 / std::f64::consts::SQRT_2;
        assert!((ac_distance(&p, &flip).unwrap() - expected).abs() < 1e-12);
    }
}
