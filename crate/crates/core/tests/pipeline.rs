//! End-to-end flows over the planted fixtures: exact correlation
//! coefficients, neighborhood discovery, model reconstruction, marginal
//! noise consistency, mitigation round trips, and coherence bounds on
//! quantum-simulated devices.

use qdotkit::bench::{self, Mitigator};
use qdotkit::circuits::{generate_collection, CircuitCollection, Protocol};
use qdotkit::clustering::{self, ClusteringConfig, Partition};
use qdotkit::crosstalk::{
    classical_corr, coherence_strength_ac, cs_bound_scan, CorrKind,
    CorrelationMatrix, DistanceMetric, PairDirection,
};
use qdotkit::distance::wc_distance_stochastic;
use qdotkit::marginals::estimate_marginals;
use qdotkit::model::{
    mitigate_marginal, reconstruct_cn, suggest_neighborhoods, MitigationMode,
};
use qdotkit::povm::{Povm, QubitSubset};
use qdotkit::sim::{
    planted_model_library, sample_cn, sample_quantum, DeviceBlock, QuantumDeviceSpec,
};
use std::collections::BTreeMap;

/// Exact pairwise classical coefficients of a CN model, from its
/// infinite-statistics marginal pair matrices.
fn exact_classical_corr(model: &qdotkit::model::CnModel, metric: DistanceMetric) -> CorrelationMatrix {
    let n = model.num_qubits();
    let mut values = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let pair = model
                .marginal_noise(&QubitSubset::new(vec![i, j], n).unwrap())
                .unwrap();
            values[(j, i)] =
                classical_corr(&pair.matrix, PairDirection::SecondToFirst, metric).unwrap();
            values[(i, j)] =
                classical_corr(&pair.matrix, PairDirection::FirstToSecond, metric).unwrap();
        }
    }
    CorrelationMatrix::new(metric, CorrKind::Classical, values, 0.03).unwrap()
}

#[test]
fn planted_coefficients_match_hand_values_exactly() {
    let model = planted_model_library("two_pair_clusters_n6").unwrap();
    let corr = exact_classical_corr(&model, DistanceMetric::WorstCase);
    // conditional flips: 0.20-0.01, 0.15-0.02, 0.25-0.03, 0.12-0.01
    assert!((corr.value(1, 0) - 0.19).abs() < 1e-12);
    assert!((corr.value(0, 1) - 0.13).abs() < 1e-12);
    assert!((corr.value(3, 2) - 0.22).abs() < 1e-12);
    assert!((corr.value(2, 3) - 0.11).abs() < 1e-12);
    for j in 0..6 {
        for i in 0..6 {
            let planted = matches!((j, i), (1, 0) | (0, 1) | (3, 2) | (2, 3));
            if !planted {
                assert!(corr.value(j, i) < 1e-12, "({j},{i}) = {}", corr.value(j, i));
            }
        }
    }
}

#[test]
fn neighborhood_suggestion_examples() {
    let model = planted_model_library("neighbor_chain_n8").unwrap();
    let corr = exact_classical_corr(&model, DistanceMetric::WorstCase);
    // the planted neighbor influence is 0.17 - 0.02 flips: c_{2->0} = 0.15
    assert!((corr.value(2, 0) - 0.15).abs() < 1e-12);
    let partition = Partition::new(
        8,
        vec![vec![0, 1], vec![2], vec![3], vec![4], vec![5], vec![6], vec![7]],
    )
    .unwrap();
    let suggested = suggest_neighborhoods(&corr, &partition, 0.05, 2).unwrap();
    assert_eq!(suggested[&0].indices(), &[2]);
    for ci in 1..7 {
        assert!(suggested[&ci].is_empty(), "cluster {ci}");
    }
    // a threshold above every coefficient yields empty neighborhoods
    let high = suggest_neighborhoods(&corr, &partition, 0.9, 2).unwrap();
    assert!(high.values().all(|s| s.is_empty()));
    // n_max = 0 yields empty neighborhoods regardless
    let none = suggest_neighborhoods(&corr, &partition, 0.05, 0).unwrap();
    assert!(none.values().all(|s| s.is_empty()));
}

#[test]
fn reconstruction_recovers_neighbor_conditioned_matrices() {
    let model = planted_model_library("neighbor_chain_n8").unwrap();
    let coll = generate_collection(Protocol::Ddot, 8, 800, 41).unwrap();
    let records = sample_cn(&model, &coll, 2500, 42).unwrap();
    let partition = Partition::new(
        8,
        vec![vec![0, 1], vec![2], vec![3], vec![4], vec![5], vec![6], vec![7]],
    )
    .unwrap();
    let neighborhoods =
        BTreeMap::from([(0usize, QubitSubset::new(vec![2], 8).unwrap())]);
    let rec = reconstruct_cn(&records, &partition, Some(&neighborhoods), 10).unwrap();
    let rec_cluster = &rec.clusters()[0];
    let truth = &model.clusters()[0];
    for key in ["0", "1"] {
        for x in 0..4 {
            for y in 0..4 {
                let got = rec_cluster.noise[key].entry(x, y);
                let want = truth.noise[key].entry(x, y);
                assert!((got - want).abs() < 0.01, "y2={key} entry ({x},{y})");
            }
        }
    }
    // the planted conditional matrices differ by 0.15 in worst-case
    // distance; the reconstructed ones must reproduce that
    let planted_gap =
        wc_distance_stochastic(&truth.noise["0"], &truth.noise["1"]).unwrap();
    let recovered_gap =
        wc_distance_stochastic(&rec_cluster.noise["0"], &rec_cluster.noise["1"]).unwrap();
    assert!((planted_gap - 0.15).abs() < 1e-12);
    assert!((recovered_gap - planted_gap).abs() < 0.02);
}

#[test]
fn identity_device_reconstructs_to_identity() {
    let model = qdotkit::model::CnModel::identity(4);
    let coll = generate_collection(Protocol::Ddot, 4, 200, 4).unwrap();
    let records = sample_cn(&model, &coll, 200, 5).unwrap();
    let partition = Partition::new(4, vec![vec![0, 1], vec![2], vec![3]]).unwrap();
    let rec = reconstruct_cn(&records, &partition, None, 10).unwrap();
    for cluster in rec.clusters() {
        let m = &cluster.noise[""];
        for x in 0..m.dim_out() {
            for y in 0..m.dim_in() {
                let expect = if x == y { 1.0 } else { 0.0 };
                assert!((m.entry(x, y) - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn singleton_reconstruction_equals_single_qubit_marginals() {
    let model = planted_model_library("two_pair_clusters_n6").unwrap();
    let coll = generate_collection(Protocol::Ddot, 6, 300, 21).unwrap();
    let records = sample_cn(&model, &coll, 500, 22).unwrap();
    let tpn = reconstruct_cn(&records, &Partition::singletons(6), None, 10).unwrap();
    let singles = estimate_marginals(&records, 1, None).unwrap();
    for (q, cluster) in tpn.clusters().iter().enumerate() {
        let lam = singles.get(&[q]).unwrap().lambda().unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert!(
                    (cluster.noise[""].entry(x, y) - lam.entry(x, y)).abs() < 1e-12,
                    "qubit {q}"
                );
            }
        }
    }
}

#[test]
fn marginal_noise_matches_empirical_marginals() {
    // the effective marginal matrices reproduce the simulator's noisy
    // conditional marginals when circuits sample neighbors uniformly
    // modest shots per circuit: the tolerance must also absorb the
    // complement-setting sampling noise, which scales with circuits
    for name in ["two_pair_clusters_n6", "neighbor_chain_n8"] {
        let model = planted_model_library(name).unwrap();
        let n = model.num_qubits();
        let coll = generate_collection(Protocol::Ddot, n, 600, 61).unwrap();
        let shots = 200u64;
        let records = sample_cn(&model, &coll, shots, 62).unwrap();
        let table = estimate_marginals(&records, 2, None).unwrap();
        for e in &table.subsets {
            let lam = e.lambda().unwrap();
            let truth = model.marginal_noise(&e.subset).unwrap();
            let min_col = e.samples().iter().copied().min().unwrap() as f64;
            let tol = 5.0 / min_col.sqrt();
            for x in 0..4 {
                for y in 0..4 {
                    assert!(
                        (lam.entry(x, y) - truth.matrix.entry(x, y)).abs() <= tol,
                        "{name} subset {:?} entry ({x},{y})",
                        e.subset.indices()
                    );
                }
            }
        }
    }
}

#[test]
fn mitigation_inverts_every_marginal_exactly() {
    let mut rng_state = 12345u64;
    let mut next = move || {
        // small deterministic LCG for probe vectors
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (rng_state >> 33) as f64 / (1u64 << 31) as f64
    };
    for name in ["two_pair_clusters_n6", "neighbor_chain_n8"] {
        let model = planted_model_library(name).unwrap();
        let n = model.num_qubits();
        for i in 0..n {
            for j in (i + 1)..n {
                let lam = model
                    .marginal_noise(&QubitSubset::new(vec![i, j], n).unwrap())
                    .unwrap();
                let raw: Vec<f64> = (0..4).map(|_| next() + 0.05).collect();
                let total: f64 = raw.iter().sum();
                let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
                let noisy = lam.matrix.apply(&p).unwrap();
                let recovered =
                    mitigate_marginal(&noisy, &lam, MitigationMode::QuasiProbability).unwrap();
                for (a, b) in recovered.iter().zip(&p) {
                    assert!((a - b).abs() < 1e-12, "{name} pair ({i},{j})");
                }
            }
        }
    }
}

#[test]
fn alpha_scan_never_splits_the_planted_pair() {
    let device = planted_model_library("two_pair_clusters_n6").unwrap();
    let coll = generate_collection(Protocol::Ddot, 6, 600, 71).unwrap();
    let records = sample_cn(&device, &coll, 1000, 72).unwrap();
    let table = estimate_marginals(&records, 2, None).unwrap();
    let corr =
        CorrelationMatrix::classical_from_marginals(&table, DistanceMetric::WorstCase, 0.03)
            .unwrap();
    let hams = bench::random_hamiltonians(5, 6, None, 73).unwrap();
    let config = ClusteringConfig { c_max: 2, n_runs: 5, seed: 74, ..Default::default() };
    let (_, partition) = clustering::select_alpha_by_benchmark(
        &corr,
        &[0.0, 0.5, 2.0],
        &config,
        |_, partition| {
            let cn = reconstruct_cn(&records, partition, None, 10)?;
            let tpn = reconstruct_cn(&records, &Partition::singletons(6), None, 10)?;
            let report = bench::run_benchmark(&cn, &tpn, &hams, &device, 2000, 75)?;
            Ok(report.medians.de_mit_cn)
        },
    )
    .unwrap();
    let has = |pair: &[usize]| partition.clusters().iter().any(|c| c == pair);
    assert!(has(&[0, 1]) && has(&[2, 3]), "got {:?}", partition.clusters());
}

#[test]
fn exact_model_benchmark_beats_unmitigated_by_a_wide_margin() {
    let device = planted_model_library("two_pair_clusters_n6").unwrap();
    let tpn_matrices: Vec<_> = (0..6)
        .map(|q| {
            device
                .marginal_noise(&QubitSubset::new(vec![q], 6).unwrap())
                .unwrap()
                .matrix
        })
        .collect();
    let tpn = qdotkit::model::CnModel::from_single_qubit_matrices(tpn_matrices).unwrap();
    let hams = bench::random_hamiltonians(10, 6, None, 81).unwrap();
    let report = bench::run_benchmark(&device, &tpn, &hams, &device, 10_000, 82).unwrap();
    assert!(
        report.medians.de_mit_cn <= report.medians.de_est / 5.0,
        "cn {} vs est {}",
        report.medians.de_mit_cn,
        report.medians.de_est
    );
}

/// One-qubit POVM with coherent (off-diagonal) noise: the computational
/// measurement conjugated by a small Y rotation.
fn rotated_povm(theta: f64) -> Povm {
    let c = |re: f64| num_complex::Complex64::new(re, 0.0);
    let r = nalgebra::DMatrix::from_row_slice(
        2,
        2,
        &[
            c((theta / 2.0).cos()),
            c(-(theta / 2.0).sin()),
            c((theta / 2.0).sin()),
            c((theta / 2.0).cos()),
        ],
    );
    Povm::new(
        2,
        (0..2)
            .map(|x| r.adjoint() * Povm::computational(1).effect(x) * &r)
            .collect(),
    )
    .unwrap()
}

#[test]
fn coherence_bound_scan_respects_proposition_on_simulated_devices() {
    for (povm, coherent) in [
        (rotated_povm(0.5), true),
        (Povm::x_basis(), true),
        (
            Povm::from_stochastic(&qdotkit::StochasticMatrix::bit_flip(0.1)).unwrap(),
            false,
        ),
    ] {
        let cs = coherence_strength_ac(&povm).unwrap();
        let spec = QuantumDeviceSpec::new(
            1,
            vec![DeviceBlock {
                qubits: QubitSubset::new(vec![0], 1).unwrap(),
                povm: povm.clone(),
            }],
        )
        .unwrap();
        // witness circuits: all four X/Y eigenstate preparations
        let coll = CircuitCollection::from_circuits(
            Protocol::Qdot,
            1,
            0,
            vec!["2".into(), "3".into(), "4".into(), "5".into()],
        )
        .unwrap();
        let records = sample_quantum(&spec, &coll, 20_000, 17).unwrap();
        let report =
            cs_bound_scan(&records, &QubitSubset::new(vec![0], 1).unwrap(), 0.01).unwrap();
        assert!(
            report.cs_lower_bound <= cs + report.bound_error,
            "bound {} vs CS {cs} + err {}",
            report.cs_lower_bound,
            report.bound_error
        );
        if coherent {
            assert!(
                report.cs_lower_bound > report.bound_error,
                "coherent device should witness a nonzero bound"
            );
        } else {
            assert!(report.cs_lower_bound <= report.bound_error);
        }
    }
}

#[test]
fn mitigated_benchmark_report_columns_are_consistent() {
    let device = planted_model_library("uncorrelated_n10").unwrap();
    let hams = bench::random_hamiltonians(4, 10, None, 91).unwrap();
    let report = bench::run_benchmark(&device, &device, &hams, &device, 3000, 92).unwrap();
    for row in &report.rows {
        assert!((row.de_est - (row.e_est - row.e_th).abs() / 10.0).abs() < 1e-12);
        assert!(row.de_mit_cn >= 0.0 && row.de_mit_tpn >= 0.0);
        // cn and tpn models are identical here
        assert!((row.e_mit_cn - row.e_mit_tpn).abs() < 1e-12);
    }
    // exact-model mitigation beats raw estimation on this device too
    assert!(report.medians.de_mit_cn <= report.medians.de_est);
    let _ = Mitigator::new(&device);
}
