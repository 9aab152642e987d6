//! Growth baselines: random split, new initialization and gradient boosting.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};

use crate::descent::{descend_masked, ConvergenceSpec, OptimSpec};
use crate::error::{Error, Result};
use crate::loss::Objective;
use crate::model::NetworkState;
use crate::rng::Rng;
use crate::splitting::{apply_split, SplitCandidate, SplitEvent};

/// Per-coordinate distribution for freshly drawn neurons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSpec {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
}

impl InitSpec {
    pub fn draw(&self, dim: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        match *self {
            InitSpec::Normal { mean, std } => {
                let dist = Normal::new(mean, std).map_err(|e| Error::InvalidArgument(format!("init normal: {e}")))?;
                Ok((0..dim).map(|_| dist.sample(rng)).collect())
            }
            InitSpec::Uniform { low, high } => {
                let dist = Uniform::new(low, high).map_err(|e| Error::InvalidArgument(format!("init uniform: {e}")))?;
                Ok((0..dim).map(|_| dist.sample(rng)).collect())
            }
        }
    }
}

/// How weights are assigned when a brand-new neuron is added.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthWeights {
    /// Additive networks: the new neuron gets weight 1, others keep theirs.
    Unit,
    /// Particle systems: all `n + 1` weights become `1/(n + 1)`.
    Uniform,
}

fn append(net: &NetworkState, theta: Vec<f64>, weights: GrowthWeights) -> NetworkState {
    let mut next = net.clone();
    next.neurons.push(theta);
    match weights {
        GrowthWeights::Unit => next.weights.push(1.0),
        GrowthWeights::Uniform => {
            let n = next.neurons.len();
            next.weights = vec![1.0 / n as f64; n];
        }
    }
    next
}

/// Uniform random unit vector.
pub fn random_direction(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::linalg::norm2(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Splits a uniformly chosen neuron along a uniformly random direction, with
/// the same half-weight bookkeeping as an optimal split. The event records
/// `uᵀSu` for the chosen direction in place of `λ_min`.
pub fn random_split(net: &NetworkState, objective: &Objective, epsilon: f64, rng: &mut Rng) -> Result<(NetworkState, SplitEvent)> {
    if net.is_empty() {
        return Err(Error::InvalidArgument("random split of an empty network".into()));
    }
    let neuron = rng.random_range(0..net.len());
    let direction = random_direction(net.kind.param_dim(), rng);
    let candidate = SplitCandidate::along(net, objective, neuron, direction)?;
    apply_split(net, &candidate, epsilon)
}

/// Appends one neuron drawn from `init`.
pub fn new_initialization(net: &NetworkState, init: &InitSpec, weights: GrowthWeights, rng: &mut Rng) -> Result<NetworkState> {
    let theta = init.draw(net.kind.param_dim(), rng)?;
    Ok(append(net, theta, weights))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostSpec {
    pub init: InitSpec,
    pub weights: GrowthWeights,
    pub optim: OptimSpec,
    pub conv: ConvergenceSpec,
    pub restarts: usize,
}

/// Adds one neuron fitted with all existing neurons frozen (Frank-Wolfe /
/// herding style). The inner problem is non-convex, so it is solved from
/// `restarts` random starts and the lowest final loss wins, ties by restart
/// order.
pub fn gradient_boost_step(net: &NetworkState, objective: &Objective, spec: &BoostSpec, rng: &mut Rng) -> Result<NetworkState> {
    if spec.restarts == 0 {
        return Err(Error::InvalidArgument("gradient boosting needs at least one restart".into()));
    }
    let mut mask = vec![false; net.len()];
    mask.push(true);
    let mut best: Option<(f64, NetworkState)> = None;
    for _ in 0..spec.restarts {
        let theta = spec.init.draw(net.kind.param_dim(), rng)?;
        let start = append(net, theta, spec.weights);
        let out = descend_masked(&start, objective, &spec.optim, &spec.conv, Some(&mask))?;
        let loss = objective.loss(&out.net)?;
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, out.net));
        }
    }
    Ok(best.expect("at least one restart").1)
}
