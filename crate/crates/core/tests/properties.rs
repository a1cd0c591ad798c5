use nalgebra::DMatrix;
use proptest::prelude::*;

use qelm::analysis::{adjusted_rand_index, bessel_j, entropy_curve, kmeans};
use qelm::classifier::softmax;
use qelm::hamiltonian::{spectral, Boundary, HamiltonianSpec};
use qelm::qcore::{encode_dense_angle, probability_vector, subsystem_entropy, EncodingOptions, PureState};
use qelm::randcirc::{apply_circuit_prefixes, apply_two_qubit, brickwork, haar_unitary, BrickPattern};
use qelm::reduce::{rescale_to_angles, AngleBounds};

fn angles(max_qubits: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_qubits).prop_flat_map(|n| prop::collection::vec(0.0..std::f64::consts::PI, 2 * n))
}

fn encoded(a: &[f64]) -> PureState {
    encode_dense_angle(a, EncodingOptions::default()).unwrap()
}

fn magnetization_weights(s: &PureState) -> Vec<f64> {
    let n = s.num_qubits();
    let mut w = vec![0.0; n + 1];
    for (i, p) in probability_vector(s).into_iter().enumerate() {
        w[i.count_ones() as usize] += p;
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn encoding_is_normalized(a in angles(6)) {
        let p = probability_vector(&encoded(&a));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn product_states_are_unentangled(a in angles(5)) {
        let s = encoded(&a);
        for q in 0..s.num_qubits() {
            prop_assert!(subsystem_entropy(&s, &[q]).unwrap() < 1e-9);
        }
    }

    #[test]
    fn evolution_is_unitary_and_composes(
        a in angles(5),
        t1 in 0.0..4.0f64,
        t2 in 0.0..4.0f64,
        periodic in any::<bool>(),
    ) {
        let s = encoded(&a);
        let n = s.num_qubits();
        prop_assume!(n >= 2);
        let boundary = if periodic { Boundary::Periodic } else { Boundary::Open };
        let dec = spectral(&HamiltonianSpec::new(n, 0.5, boundary).unwrap()).unwrap();
        let one = dec.evolve(&dec.evolve(&s, t1).unwrap(), t2).unwrap();
        let both = dec.evolve(&s, t1 + t2).unwrap();
        prop_assert!((both.norm_sqr() - 1.0).abs() < 1e-10);
        prop_assert!(one.max_abs_diff(&both) < 1e-10);
    }

    #[test]
    fn evolution_conserves_magnetization(a in angles(5), t in 0.0..10.0f64) {
        let s = encoded(&a);
        let n = s.num_qubits();
        prop_assume!(n >= 2);
        let dec = spectral(&HamiltonianSpec::periodic(n).unwrap()).unwrap();
        let before = magnetization_weights(&s);
        let after = magnetization_weights(&dec.evolve(&s, t).unwrap());
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn entropies_respect_bounds(a in prop::collection::vec(0.0..std::f64::consts::PI, 8), t in 0.0..6.0f64) {
        let dec = spectral(&HamiltonianSpec::periodic(4).unwrap()).unwrap();
        let c = entropy_curve(&dec, &[encoded(&a)], &[0.0, t]).unwrap();
        prop_assert!(c.half[0].abs() < 1e-9);
        for (h, s) in c.half.iter().zip(&c.single) {
            prop_assert!(*h >= -1e-12 && *h <= 2.0 * std::f64::consts::LN_2 + 1e-9);
            prop_assert!(*s >= -1e-12 && *s <= std::f64::consts::LN_2 + 1e-9);
        }
    }

    #[test]
    fn gates_preserve_norm_and_invert(a in angles(4), seed in any::<u64>(), i in 0usize..4, j in 0usize..4) {
        let s = encoded(&a);
        let n = s.num_qubits();
        prop_assume!(i < n && j < n && i != j);
        let g = haar_unitary(4, seed);
        let out = apply_two_qubit(&s, &g, (i, j)).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        let back = apply_two_qubit(&out, &g.adjoint(), (i, j)).unwrap();
        prop_assert!(back.max_abs_diff(&s) < 1e-10);
    }

    #[test]
    fn staircase_light_cone(a in prop::collection::vec(0.0..std::f64::consts::PI, 12), seed in any::<u64>()) {
        let s = encoded(&a);
        let circ = brickwork(6, 4, seed, BrickPattern::Staircase);
        let prefixes = apply_circuit_prefixes(&circ, &s).unwrap();
        for (layers, state) in prefixes.iter().enumerate() {
            for q in (layers + 1).max(2)..6 {
                prop_assert!(subsystem_entropy(state, &[q]).unwrap() < 1e-10, "layers {layers} qubit {q}");
            }
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0..50.0f64, 1..12), shift in -100.0..100.0f64) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        for (x, y) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ari_is_permutation_invariant(
        pred in prop::collection::vec(0usize..4, 2..40),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
        seed in any::<u64>(),
    ) {
        let truth: Vec<usize> = pred.iter().enumerate().map(|(i, p)| (p + (seed as usize >> (i % 32)) % 3) % 4).collect();
        let a = adjusted_rand_index(&pred, &truth).unwrap();
        let relabeled: Vec<usize> = pred.iter().map(|p| perm[*p]).collect();
        let b = adjusted_rand_index(&relabeled, &truth).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a <= 1.0 + 1e-12);
        prop_assert!((adjusted_rand_index(&pred, &pred).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_fixed_point(points in prop::collection::vec(-10.0..10.0f64, 6..60), k in 1usize..4, seed in any::<u64>()) {
        let dim = 2;
        let n = points.len() / dim;
        let points = &points[..n * dim];
        prop_assume!(k <= n);
        let c = kmeans(points, dim, k, seed, 300).unwrap();
        let dist = |i: usize, c2: usize| -> f64 {
            (0..dim).map(|d| (points[i * dim + d] - c.centroids[c2 * dim + d]).powi(2)).sum()
        };
        let mut inertia = 0.0;
        for i in 0..n {
            let own = dist(i, c.assignments[i]);
            inertia += own;
            for other in 0..k {
                prop_assert!(own <= dist(i, other) + 1e-9);
            }
        }
        prop_assert!((inertia - c.inertia).abs() < 1e-8 * (1.0 + inertia));
        prop_assert!(c.history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }

    #[test]
    fn angle_rescaling_is_monotone_and_bounded(values in prop::collection::vec(-5.0..5.0f64, 4..30)) {
        let n = values.len();
        let m = DMatrix::from_column_slice(n, 1, &values);
        let bounds = AngleBounds::fit(&m);
        let a = rescale_to_angles(&m, &bounds).unwrap();
        for i in 0..n {
            prop_assert!((0.0..=std::f64::consts::PI).contains(&a[(i, 0)]));
            for j in 0..n {
                if values[i] < values[j] {
                    prop_assert!(a[(i, 0)] <= a[(j, 0)]);
                }
            }
        }
    }

    #[test]
    fn bessel_recurrence(n in 1i32..30, x in 0.5..60.0f64) {
        let lhs = bessel_j(n - 1, x).unwrap() + bessel_j(n + 1, x).unwrap();
        let rhs = 2.0 * n as f64 / x * bessel_j(n, x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }
}
