use proptest::prelude::*;

use splitgrow::experiment::{Experiment, RunConfig};
use splitgrow::loss::median_bandwidth;
use splitgrow::splitting::apply_many;
use splitgrow::verify::mmd_brute_force;
use splitgrow::{apply_split, splitting_candidates, splitting_matrix, Dataset, NetworkState, NeuronKind, Objective};

fn rbf_problem() -> impl Strategy<Value = (NetworkState, Objective)> {
    let neurons = prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 3), 1..5);
    let weights = prop::collection::vec(0.1..2.0f64, 5);
    let targets = prop::collection::vec(-1.0..1.0f64, 12);
    (neurons, weights, targets).prop_map(|(neurons, weights, ys)| {
        let m = neurons.len();
        let net = NetworkState::new(NeuronKind::Rbf1d, neurons, weights[..m].to_vec()).unwrap();
        let xs: Vec<f64> = (0..ys.len()).map(|i| -3.0 + 0.5 * i as f64).collect();
        let obj = Objective::squared_error(Dataset::scalar_regression(&xs, ys).unwrap()).unwrap();
        (net, obj)
    })
}

fn mmd_problem() -> impl Strategy<Value = (NetworkState, Objective)> {
    let particles = prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..6);
    let reference = prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 2..15);
    let raw = prop::collection::vec(0.05..1.0f64, 6);
    (particles, reference, raw, 0.3..2.0f64).prop_map(|(particles, reference, raw, h)| {
        let m = particles.len();
        let total: f64 = raw[..m].iter().sum();
        let weights = raw[..m].iter().map(|w| w / total).collect();
        let net = NetworkState::new(NeuronKind::KernelParticle { dim: 2, bandwidth: h }, particles, weights).unwrap();
        let obj = Objective::mmd(Dataset::particles(reference).unwrap(), h).unwrap();
        (net, obj)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_step_split_keeps_the_loss((net, obj) in rbf_problem()) {
        let before = obj.loss(&net).unwrap();
        for c in splitting_candidates(&net, &obj).unwrap() {
            let (split, _) = apply_split(&net, &c, 0.0).unwrap();
            prop_assert!((obj.loss(&split).unwrap() - before).abs() <= 1e-12);
        }
    }

    #[test]
    fn splits_conserve_total_weight((net, obj) in rbf_problem(), eps in 0.0..0.5f64) {
        let cands = splitting_candidates(&net, &obj).unwrap();
        let (split, events) = apply_many(&net, &cands, eps, 0).unwrap();
        prop_assert_eq!(split.len(), 2 * net.len());
        // exact per parent; the grand total only up to summation order
        for ev in &events {
            let (a, b) = ev.children;
            prop_assert_eq!(split.weights[a] + split.weights[b], net.weights[ev.parent_index]);
        }
        prop_assert!((split.total_weight() - net.total_weight()).abs() <= 1e-15 * net.total_weight());
    }

    #[test]
    fn loss_ignores_neuron_order((net, obj) in rbf_problem(), shift in 0usize..5) {
        let mut rotated = net.clone();
        let k = shift % net.len();
        rotated.neurons.rotate_left(k);
        rotated.weights.rotate_left(k);
        let (a, b) = (obj.loss(&net).unwrap(), obj.loss(&rotated).unwrap());
        prop_assert!((a - b).abs() <= 1e-13 * a.max(1.0));
    }

    #[test]
    fn amplitude_block_of_rbf_splitting_matrix_is_zero((net, obj) in rbf_problem()) {
        // the neuron is linear in its amplitude, so λ_max ≥ 0 as well
        for i in 0..net.len() {
            let s = splitting_matrix(&net, &obj, i).unwrap();
            prop_assert_eq!(s.get(2, 2), 0.0);
            let top = splitgrow::eig_sym(&s).unwrap().last().unwrap().value;
            prop_assert!(top >= -1e-12);
        }
    }

    #[test]
    fn splitting_index_is_the_smallest_eigenvalue((net, obj) in rbf_problem()) {
        for c in splitting_candidates(&net, &obj).unwrap() {
            let s = splitting_matrix(&net, &obj, c.neuron_index).unwrap();
            let q = s.quadratic_form(&c.splitting_gradient);
            prop_assert!((q - c.splitting_index).abs() <= 1e-9 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn mmd_is_nonnegative((net, obj) in mmd_problem()) {
        prop_assert!(obj.loss(&net).unwrap() >= -1e-12);
    }

    #[test]
    fn mmd_closed_form_matches_double_sum((net, obj) in mmd_problem()) {
        let NeuronKind::KernelParticle { bandwidth, .. } = net.kind else { unreachable!() };
        let brute = mmd_brute_force(&net.neurons, &net.weights, &obj.data().inputs, bandwidth);
        prop_assert!((obj.loss(&net).unwrap() - brute).abs() <= 1e-10);
    }

    #[test]
    fn median_bandwidth_is_positive_and_shift_invariant(
        pts in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 1), 3..30),
        shift in -10.0..10.0f64,
    ) {
        prop_assume!(pts.windows(2).any(|w| w[0] != w[1]));
        let h = median_bandwidth(&pts).unwrap();
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + shift]).collect();
        let h2 = median_bandwidth(&moved).unwrap();
        prop_assert!(h > 0.0);
        prop_assert!((h - h2).abs() <= 1e-9 * h);
    }

    #[test]
    fn config_echo_round_trips(seed in 0u64..1_000_000, lr in 1e-4..1.0f64, iters in 1usize..100_000, target in 2usize..20) {
        let mut cfg = RunConfig::defaults(Experiment::RbfToy);
        cfg.seed = seed;
        cfg.optim.seed = seed;
        cfg.optim.learning_rate = lr;
        cfg.optim.max_iters = iters;
        cfg.target_neurons = target;
        let back = RunConfig::parse(&cfg.echo()).unwrap();
        prop_assert_eq!(back.echo(), cfg.echo());
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
