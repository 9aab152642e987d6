//! Splitting matrices, candidate selection and split application.
//!
//! For neuron `ℓ` with weight `w_ℓ` the splitting matrix is
//! `S_ℓ = w_ℓ · E[Φ′(f(x)) ∇²_θθσ(θ_ℓ, x)]`. Replacing the neuron by two
//! copies of weight `w_ℓ/2` at `θ_ℓ ± ε v` changes the loss by
//! `ε²/2 · vᵀS_ℓv + O(ε³)`; the best direction is the minimum eigenvector and
//! the change is `ε²λ_min/2`. There are no cross terms between neurons, so
//! every candidate is computed from its own matrix alone.

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, norm2, SymMatrix};
use crate::loss::{Objective, OuterMeasure};
use crate::model::NetworkState;

pub const DEFAULT_EPSILON: f64 = 1e-2;
pub const DEFAULT_THRESHOLD: f64 = -1e-6;

/// The minimum eigenpair of one neuron's splitting matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub neuron_index: usize,
    /// `λ_min(S_ℓ)`, or `uᵀS_ℓu` for a candidate built with [`SplitCandidate::along`].
    pub splitting_index: f64,
    /// Unit split direction.
    pub splitting_gradient: Vec<f64>,
    pub matrix: SymMatrix,
    parent_theta: Vec<f64>,
    parent_weight: f64,
}

impl SplitCandidate {
    /// Candidate for an arbitrary unit direction `u`, scored by `uᵀS_ℓu`.
    pub fn along(net: &NetworkState, objective: &Objective, neuron: usize, direction: Vec<f64>) -> Result<Self> {
        let matrix = splitting_matrix(net, objective, neuron)?;
        if direction.len() != matrix.dim() {
            return Err(Error::Dimension {
                expected: matrix.dim(),
                got: direction.len(),
                context: "split direction",
            });
        }
        let nrm = norm2(&direction);
        if !((nrm - 1.0).abs() <= 1e-9) {
            return Err(Error::InvalidArgument(format!("split direction must be unit norm, got {nrm}")));
        }
        Ok(SplitCandidate {
            neuron_index: neuron,
            splitting_index: matrix.quadratic_form(&direction),
            splitting_gradient: direction,
            matrix,
            parent_theta: net.neurons[neuron].clone(),
            parent_weight: net.weights[neuron],
        })
    }

    /// Predicted loss change `ε²/2 · λ` of splitting along this candidate.
    pub fn predicted_change(&self, epsilon: f64) -> f64 {
        0.5 * epsilon * epsilon * self.splitting_index
    }

    fn is_current_for(&self, net: &NetworkState) -> bool {
        self.neuron_index < net.len()
            && net.neurons[self.neuron_index] == self.parent_theta
            && net.weights[self.neuron_index] == self.parent_weight
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPolicy {
    /// At most this many neurons are split per round.
    pub max_splits: usize,
    /// Only neurons with `λ_min <= threshold` are split; must be `<= 0`.
    pub threshold: f64,
    pub epsilon: f64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy {
            max_splits: 1,
            threshold: DEFAULT_THRESHOLD,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl SplitPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "split threshold must be <= 0, got {}",
                self.threshold
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("split epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitEvent {
    pub round: usize,
    pub parent_index: usize,
    pub lambda_min: f64,
    pub epsilon: f64,
    /// `(θ + εv at the parent's slot, θ - εv appended at the end)`
    pub children: (usize, usize),
    /// Set when a growth schedule split a neuron that did not pass the threshold.
    pub forced: bool,
}

fn matrix_from_measure(net: &NetworkState, measure: &OuterMeasure<'_>, neuron: usize) -> SymMatrix {
    let theta = &net.neurons[neuron];
    let mut s = SymMatrix::zeros(theta.len());
    for &(p, c) in &measure.points {
        net.kind.hess_accumulate(theta, p, c, &mut s);
    }
    s.scaled(net.weights[neuron])
}

/// `S_ℓ = w_ℓ · E[Φ′ ∇²σ(θ_ℓ, x)]` for neuron `ℓ`.
///
/// For MMD this is `2 w_ℓ (Σ_j w_j ∇²k(θ_ℓ, θ_j) - mean_a ∇²k(θ_ℓ, θ*_a))`.
pub fn splitting_matrix(net: &NetworkState, objective: &Objective, neuron: usize) -> Result<SymMatrix> {
    if neuron >= net.len() {
        return Err(Error::IndexOutOfRange {
            index: neuron,
            len: net.len(),
        });
    }
    let measure = objective.outer_measure(net, None)?;
    Ok(matrix_from_measure(net, &measure, neuron))
}

/// One candidate per neuron, each from its own splitting matrix.
pub fn splitting_candidates(net: &NetworkState, objective: &Objective) -> Result<Vec<SplitCandidate>> {
    let measure = objective.outer_measure(net, None)?;
    (0..net.len())
        .map(|l| {
            let matrix = matrix_from_measure(net, &measure, l);
            let mut pairs = eig_sym(&matrix)?;
            let min = pairs.swap_remove(0);
            Ok(SplitCandidate {
                neuron_index: l,
                splitting_index: min.value,
                splitting_gradient: min.vector,
                matrix,
                parent_theta: net.neurons[l].clone(),
                parent_weight: net.weights[l],
            })
        })
        .collect()
}

/// Up to `max_splits` candidates with the smallest indexes that are
/// `<= threshold`, most negative first, ties by neuron index.
pub fn select_splits(candidates: &[SplitCandidate], policy: &SplitPolicy) -> Vec<SplitCandidate> {
    let mut chosen: Vec<&SplitCandidate> = candidates
        .iter()
        .filter(|c| c.splitting_index <= policy.threshold)
        .collect();
    chosen.sort_by(|a, b| {
        a.splitting_index
            .total_cmp(&b.splitting_index)
            .then(a.neuron_index.cmp(&b.neuron_index))
    });
    chosen.into_iter().take(policy.max_splits).cloned().collect()
}

/// Splits the candidate's neuron into two half-weight copies at `θ ± εv`.
///
/// The `+` copy keeps the parent's index, the `-` copy is appended, so the
/// indices of all other neurons are unchanged. The event's `round` is 0;
/// callers that track rounds overwrite it.
pub fn apply_split(net: &NetworkState, candidate: &SplitCandidate, epsilon: f64) -> Result<(NetworkState, SplitEvent)> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("split epsilon must be >= 0, got {epsilon}")));
    }
    if !candidate.is_current_for(net) {
        return Err(Error::StaleCandidate(candidate.neuron_index));
    }
    let l = candidate.neuron_index;
    let v = &candidate.splitting_gradient;
    let theta = &net.neurons[l];
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + epsilon * d).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - epsilon * d).collect();
    let half = 0.5 * net.weights[l];

    let mut next = net.clone();
    next.neurons[l] = plus;
    next.weights[l] = half;
    next.neurons.push(minus);
    next.weights.push(half);

    let event = SplitEvent {
        round: 0,
        parent_index: l,
        lambda_min: candidate.splitting_index,
        epsilon,
        children: (l, next.len() - 1),
        forced: false,
    };
    Ok((next, event))
}

/// Candidates, selection and sequential application in one pass.
pub fn split_round(
    net: &NetworkState,
    objective: &Objective,
    policy: &SplitPolicy,
    round: usize,
) -> Result<(NetworkState, Vec<SplitEvent>)> {
    policy.validate()?;
    let candidates = splitting_candidates(net, objective)?;
    let selected = select_splits(&candidates, policy);
    apply_many(net, &selected, policy.epsilon, round)
}

/// Applies several candidates computed on the same state, in order.
pub fn apply_many(
    net: &NetworkState,
    selected: &[SplitCandidate],
    epsilon: f64,
    round: usize,
) -> Result<(NetworkState, Vec<SplitEvent>)> {
    let mut current = net.clone();
    let mut events = Vec::with_capacity(selected.len());
    for c in selected {
        let (next, mut ev) = apply_split(&current, c, epsilon)?;
        ev.round = round;
        events.push(ev);
        current = next;
    }
    Ok((current, events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dataset, NeuronKind};

    fn toy() -> (NetworkState, Objective) {
        let xs: Vec<f64> = (0..40).map(|i| -4.0 + 0.2 * i as f64).collect();
        let ys = xs.iter().map(|x| (1.3 * x).sin() + 0.5 * (-x * x).exp()).collect();
        let obj = Objective::squared_error(Dataset::scalar_regression(&xs, ys).unwrap()).unwrap();
        let net = NetworkState::unit_weights(
            NeuronKind::Rbf1d,
            vec![vec![0.9, 0.2, 0.8], vec![-0.6, 1.1, -0.4], vec![1.5, -2.0, 0.6]],
        )
        .unwrap();
        (net, obj)
    }

    fn fake(index: usize, lambda: f64, net: &NetworkState) -> SplitCandidate {
        SplitCandidate {
            neuron_index: index,
            splitting_index: lambda,
            splitting_gradient: vec![1.0, 0.0, 0.0],
            matrix: SymMatrix::zeros(3),
            parent_theta: net.neurons[index].clone(),
            parent_weight: net.weights[index],
        }
    }

    #[test]
    fn selection_orders_and_filters() {
        let (net, _) = toy();
        let cands = vec![fake(0, -3.0, &net), fake(1, -1.0, &net), fake(2, -2.0, &net)];
        let p = SplitPolicy { max_splits: 2, threshold: 0.0, epsilon: 0.01 };
        let sel = select_splits(&cands, &p);
        assert_eq!(sel.iter().map(|c| c.neuron_index).collect::<Vec<_>>(), vec![0, 2]);

        let none = SplitPolicy { max_splits: 0, ..p };
        assert!(select_splits(&cands, &none).is_empty());
        let strict = SplitPolicy { threshold: -5.0, ..p };
        assert!(select_splits(&cands, &strict).is_empty());
    }

    #[test]
    fn ties_break_by_neuron_index() {
        let (net, _) = toy();
        let cands = vec![fake(2, -1.0, &net), fake(0, -1.0, &net), fake(1, -1.0, &net)];
        let p = SplitPolicy { max_splits: 3, threshold: 0.0, epsilon: 0.01 };
        let sel = select_splits(&cands, &p);
        assert_eq!(sel.iter().map(|c| c.neuron_index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn zero_index_is_not_split_by_default() {
        let (net, _) = toy();
        assert!(select_splits(&[fake(0, 0.0, &net)], &SplitPolicy::default()).is_empty());
    }

    #[test]
    fn split_bookkeeping() {
        let (net, obj) = toy();
        let cands = splitting_candidates(&net, &obj).unwrap();
        let (next, ev) = apply_split(&net, &cands[1], 0.05).unwrap();
        assert_eq!(next.len(), 4);
        assert_eq!(next.weights, vec![1.0, 0.5, 1.0, 0.5]);
        assert_eq!(next.total_weight(), net.total_weight());
        assert_eq!(ev.children, (1, 3));
        assert_eq!(next.neurons[0], net.neurons[0]);
        assert_eq!(next.neurons[2], net.neurons[2]);
    }

    #[test]
    fn stale_candidate_rejected() {
        let (net, obj) = toy();
        let cands = splitting_candidates(&net, &obj).unwrap();
        let (next, _) = apply_split(&net, &cands[0], 0.05).unwrap();
        assert!(matches!(apply_split(&next, &cands[0], 0.05), Err(Error::StaleCandidate(0))));
        // other neurons are untouched, so their candidates stay valid
        assert!(apply_split(&next, &cands[2], 0.05).is_ok());
    }

    #[test]
    fn zero_epsilon_split_keeps_loss() {
        let (net, obj) = toy();
        let before = obj.loss(&net).unwrap();
        for c in splitting_candidates(&net, &obj).unwrap() {
            let (next, _) = apply_split(&net, &c, 0.0).unwrap();
            assert!((obj.loss(&next).unwrap() - before).abs() <= 1e-12);
        }
    }

    #[test]
    fn candidate_is_independent_of_other_neurons_candidates() {
        let (net, obj) = toy();
        let all = splitting_candidates(&net, &obj).unwrap();
        for (l, c) in all.iter().enumerate() {
            let alone = splitting_matrix(&net, &obj, l).unwrap();
            assert_eq!(c.matrix, alone);
            assert_eq!(c.neuron_index, l);
            let pair = crate::linalg::min_eigenpair(&alone).unwrap();
            assert_eq!(pair.value, c.splitting_index);
            assert_eq!(pair.vector, c.splitting_gradient);
        }
    }

    #[test]
    fn one_neuron_single_candidate() {
        let (mut net, obj) = toy();
        net.neurons.truncate(1);
        net.weights.truncate(1);
        let c = splitting_candidates(&net, &obj).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].matrix, splitting_matrix(&net, &obj, 0).unwrap());
    }

    #[test]
    fn index_out_of_range() {
        let (net, obj) = toy();
        assert!(matches!(splitting_matrix(&net, &obj, 3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn perfect_fit_has_zero_splitting_matrix() {
        let (net, _) = toy();
        let xs: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let ys = xs.iter().map(|&x| net.eval(&[x])).collect();
        let obj = Objective::squared_error(Dataset::scalar_regression(&xs, ys).unwrap()).unwrap();
        for l in 0..3 {
            assert_eq!(splitting_matrix(&net, &obj, l).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn mmd_matrix_vanishes_when_particles_match_reference() {
        let pts = vec![vec![-1.0], vec![0.5], vec![2.0], vec![2.5]];
        let obj = Objective::mmd(Dataset::particles(pts.clone()).unwrap(), 1.1).unwrap();
        let net = NetworkState::uniform_weights(obj.particle_kind().unwrap(), pts).unwrap();
        for l in 0..net.len() {
            assert!(splitting_matrix(&net, &obj, l).unwrap().max_abs() < 1e-15);
        }
    }

    #[test]
    fn split_round_respects_budget() {
        let (net, obj) = toy();
        let p = SplitPolicy { max_splits: 1, threshold: 0.0, epsilon: 0.01 };
        let cands = splitting_candidates(&net, &obj).unwrap();
        let worst = cands.iter().min_by(|a, b| a.splitting_index.total_cmp(&b.splitting_index)).unwrap();
        let (next, events) = split_round(&net, &obj, &p, 4).unwrap();
        if worst.splitting_index <= 0.0 {
            assert_eq!(events.len(), 1);
            assert_eq!(events[0].parent_index, worst.neuron_index);
            assert_eq!(events[0].round, 4);
            assert_eq!(next.len(), 4);
        }
    }

    #[test]
    fn policy_validation() {
        assert!(SplitPolicy { threshold: 0.1, ..Default::default() }.validate().is_err());
        assert!(SplitPolicy { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(SplitPolicy::default().validate().is_ok());
    }
}
