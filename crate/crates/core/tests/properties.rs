//! Cross-module property tests: distance-measure guarantees, estimator
//! unbiasedness, projection invariants, and serialization round trips.

use proptest::prelude::*;
use qdotkit::circuits::{generate_collection, Protocol};
use qdotkit::distance::{ac_distance, wc_distance_capped, wc_distance_stochastic};
use qdotkit::marginals::{estimate_marginals, project_cptp};
use qdotkit::model::CnModel;
use qdotkit::povm::{born_probabilities, measurement_choi, tvd, Povm, QubitSubset};
use qdotkit::random::{haar_state, random_povm};
use qdotkit::sim::sample_cn;
use qdotkit::StochasticMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn wc_distance_dominates_sampled_tvd_and_witness_attains_it() {
    let mut rng = StdRng::seed_from_u64(2024);
    for dim in [2usize, 4] {
        for _ in 0..5 {
            let m = random_povm(dim, dim, &mut rng);
            let n = random_povm(dim, dim, &mut rng);
            let witness = wc_distance_capped(&m, &n, 8).unwrap();
            for _ in 0..2000 {
                let rho = haar_state(dim, &mut rng);
                let d = tvd(
                    &born_probabilities(&m, &rho).unwrap(),
                    &born_probabilities(&n, &rho).unwrap(),
                )
                .unwrap();
                assert!(
                    d <= witness.value + 1e-9,
                    "sampled TVD {d} exceeds worst case {}",
                    witness.value
                );
            }
            // the maximizing subset's top eigenvector achieves the value
            let state = qdotkit::DensityMatrix::pure(&witness.state).unwrap();
            let d = tvd(
                &born_probabilities(&m, &state).unwrap(),
                &born_probabilities(&n, &state).unwrap(),
            )
            .unwrap();
            assert!(
                (d - witness.value).abs() < 1e-6,
                "witness TVD {d} vs {}",
                witness.value
            );
        }
    }
}

#[test]
fn symbol_distribution_is_uniform_chi_square() {
    // chi-square critical values at p = 0.001
    const CRIT_5_DOF: f64 = 20.515;
    const CRIT_1_DOF: f64 = 10.828;
    let n_circuits = 100_000;
    for (protocol, dof, crit) in [
        (Protocol::Qdot, 5usize, CRIT_5_DOF),
        (Protocol::Ddot, 1usize, CRIT_1_DOF),
    ] {
        let coll = generate_collection(protocol, 3, n_circuits, 99).unwrap();
        let symbols = dof + 1;
        for pos in 0..3 {
            let mut counts = vec![0usize; symbols];
            for c in &coll.circuits {
                counts[(c.as_bytes()[pos] - b'0') as usize] += 1;
            }
            let expected = n_circuits as f64 / symbols as f64;
            let stat: f64 = counts
                .iter()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            assert!(stat < crit, "{protocol} position {pos}: chi-square {stat}");
        }
    }
}

#[test]
fn estimator_is_unbiased_over_many_experiments() {
    // average of 500 independent estimates converges to the true
    // marginal within three pooled standard errors
    let model = qdotkit::sim::planted_model_library("two_pair_clusters_n6").unwrap();
    let subset = QubitSubset::new(vec![0, 1], 6).unwrap();
    let truth = model.marginal_noise(&subset).unwrap();
    let reps = 500usize;
    let circuits_per_rep = 40usize;
    let shots = 20u64;
    let mut sums = vec![vec![0.0f64; 4]; 4];
    let mut samples_per_col = [0u64; 4];
    for rep in 0..reps {
        let coll = generate_collection(Protocol::Ddot, 6, circuits_per_rep, 7_000 + rep as u64)
            .unwrap();
        let records = sample_cn(&model, &coll, shots, 8_000 + rep as u64).unwrap();
        let table = estimate_marginals(&records, 2, Some(vec![subset.clone()])).unwrap();
        let e = &table.subsets[0];
        for y in 0..4 {
            samples_per_col[y] += e.samples()[y];
            for x in 0..4 {
                sums[x][y] += e.table()[(x, y)];
            }
        }
    }
    for y in 0..4 {
        for x in 0..4 {
            let mean = sums[x][y] / reps as f64;
            let t = truth.matrix.entry(x, y);
            let pooled_se = (t * (1.0 - t) / samples_per_col[y] as f64).sqrt();
            let tol = 3.0 * pooled_se.max(1e-4);
            assert!(
                (mean - t).abs() <= tol,
                "entry ({x},{y}): mean {mean} vs {t} (tol {tol})"
            );
        }
    }
}

#[test]
fn cptp_projection_output_always_satisfies_constraints() {
    let mut rng = StdRng::seed_from_u64(5150);
    for _ in 0..20 {
        let povm = random_povm(2, 2, &mut rng);
        let mut j = measurement_choi(&povm);
        // random Hermitian perturbation
        for r in 0..4 {
            for s in r..4 {
                let re = 0.05 * (rng.gen::<f64>() - 0.5);
                let im = if r == s { 0.0 } else { 0.05 * (rng.gen::<f64>() - 0.5) };
                let z = num_complex::Complex64::new(re, im);
                j[(r, s)] += z;
                if r != s {
                    j[(s, r)] += z.conj();
                }
            }
        }
        let projected = project_cptp(&j, 2, 2).unwrap();
        // PSD within tolerance: probe with random states
        for _ in 0..20 {
            let v = haar_state(4, &mut rng);
            let mut quad = num_complex::Complex64::default();
            for r in 0..4 {
                for s in 0..4 {
                    quad += v.matrix()[(s, r)] * projected[(r, s)];
                }
            }
            assert!(quad.re >= -1e-7, "negative direction {quad}");
        }
        // trace preservation
        let mut tp = nalgebra::DMatrix::<num_complex::Complex64>::zeros(2, 2);
        for i in 0..2 {
            for r in 0..2 {
                for s in 0..2 {
                    tp[(r, s)] += projected[(i * 2 + r, i * 2 + s)];
                }
            }
        }
        tp[(0, 0)] -= num_complex::Complex64::new(0.5, 0.0);
        tp[(1, 1)] -= num_complex::Complex64::new(0.5, 0.0);
        assert!(tp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() <= 1e-7);
    }
}

#[test]
fn global_lambda_columns_match_cn_sampling() {
    // empirical conditional distributions converge to the planted
    // columns within 5/sqrt(shots) across a whole fixture
    let model = qdotkit::sim::planted_model_library("two_pair_clusters_n6").unwrap();
    let lam = model.global_lambda().unwrap();
    let settings: Vec<String> = (0..64).map(|i| format!("{i:06b}")).collect();
    let coll = qdotkit::circuits::CircuitCollection::from_circuits(
        Protocol::Ddot,
        6,
        0,
        settings,
    )
    .unwrap();
    let shots = 40_000u64;
    let records = sample_cn(&model, &coll, shots, 31415).unwrap();
    let tol = 5.0 / (shots as f64).sqrt();
    for (y, record) in records.records.iter().enumerate() {
        for x in 0..64usize {
            let key = format!("{x:06b}");
            let freq = *record.counts.get(&key).unwrap_or(&0) as f64 / shots as f64;
            assert!(
                (freq - lam.entry(x, y)).abs() <= tol,
                "setting {y} outcome {x}: {freq} vs {}",
                lam.entry(x, y)
            );
        }
    }
}

fn stochastic_strategy(dim: usize) -> impl Strategy<Value = StochasticMatrix> {
    proptest::collection::vec(0.05f64..1.0, dim * dim).prop_map(move |raw| {
        let mut entries = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for y in 0..dim {
            let col = &raw[y * dim..(y + 1) * dim];
            let s: f64 = col.iter().sum();
            for x in 0..dim {
                entries[(x, y)] = col[x] / s;
            }
        }
        StochasticMatrix::new(entries).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stochastic_json_round_trip_is_identity(m in stochastic_strategy(4)) {
        let text = serde_json::to_string(&m).unwrap();
        let back: StochasticMatrix = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(m, back);
    }

    #[test]
    fn diagonal_povm_json_round_trip_is_identity(m in stochastic_strategy(2)) {
        let povm = Povm::from_stochastic(&m).unwrap();
        let text = serde_json::to_string(&povm).unwrap();
        let back: Povm = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(povm, back);
    }

    #[test]
    fn wc_distance_routes_agree_on_diagonal_povms(
        a in stochastic_strategy(4),
        b in stochastic_strategy(4),
    ) {
        let via_matrix = wc_distance_stochastic(&a, &b).unwrap();
        let via_povm = wc_distance_capped(
            &Povm::from_stochastic(&a).unwrap(),
            &Povm::from_stochastic(&b).unwrap(),
            8,
        )
        .unwrap()
        .value;
        prop_assert!((via_matrix - via_povm).abs() < 1e-9);
        // and the average-case route stays within its sharp cap
        let ac = ac_distance(
            &Povm::from_stochastic(&a).unwrap(),
            &Povm::from_stochastic(&b).unwrap(),
        )
        .unwrap();
        prop_assert!(ac <= 6f64.sqrt() / 2.0 * via_matrix + 1e-9);
    }

    #[test]
    fn circuit_collection_round_trip(seed in 0u64..5000, n in 1usize..6, count in 1usize..20) {
        let coll = generate_collection(Protocol::Qdot, n, count, seed).unwrap();
        let text = serde_json::to_string(&coll).unwrap();
        let back: qdotkit::circuits::CircuitCollection = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(coll, back);
    }

    #[test]
    fn records_round_trip(seed in 0u64..5000) {
        let model = CnModel::identity(3);
        let coll = generate_collection(Protocol::Ddot, 3, 5, seed).unwrap();
        let records = sample_cn(&model, &coll, 9, seed).unwrap();
        let text = serde_json::to_string(&records).unwrap();
        let back: qdotkit::sim::ExperimentRecords = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(records, back);
    }
}
