//! Split-direction sweeps taken at a trained network.

use std::f64::consts::PI;

use crate::descent::{descend, ConvergenceSpec, OptimSpec};
use crate::error::{Error, Result};
use crate::linalg::eig_sym;
use crate::loss::Objective;
use crate::model::NetworkState;
use crate::splitting::{splitting_candidates, SplitCandidate};
use crate::verify::{measure_split_gain, Retrain};

use super::config::{Experiment, Method, RunConfig};
use super::runner::{build_objective, grow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleRow {
    pub angle: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenGainRow {
    pub neuron: usize,
    pub lambda_min: f64,
    pub gain: f64,
}

/// Grows the configured network to `cfg.sweep.neurons` with optimal splits,
/// then polishes it toward a stationary point with heavy-ball momentum.
pub fn prepare_optimum(cfg: &RunConfig) -> Result<(NetworkState, Objective)> {
    let mut grow_cfg = cfg.clone();
    grow_cfg.method = Method::OptimalSplit;
    grow_cfg.target_neurons = cfg.sweep.neurons;
    grow_cfg.initial_neurons = cfg.initial_neurons.min(cfg.sweep.neurons);
    let objective = build_objective(cfg)?;
    let grown = grow(&grow_cfg)?.final_net;
    let polish = OptimSpec::momentum(cfg.optim.learning_rate, 0.9, cfg.sweep.polish_iters);
    let conv = ConvergenceSpec {
        grad_tol: cfg.sweep.polish_grad_tol,
        ..cfg.conv
    };
    let net = descend(&grown, &objective, &polish, &conv)?.net;
    Ok((net, objective))
}

/// Polished RBF-toy network with `neurons` neurons under default settings.
pub fn rbf_optimum(seed: u64, neurons: usize) -> Result<(NetworkState, Objective, RunConfig)> {
    let mut cfg = RunConfig::defaults(Experiment::AngleSweep);
    cfg.seed = seed;
    cfg.optim.seed = seed;
    cfg.sweep.neurons = neurons;
    let (net, obj) = prepare_optimum(&cfg)?;
    Ok((net, obj, cfg))
}

/// Retraining budget used after each hypothetical split: a fixed number of
/// iterations of the run optimizer (the tolerance is the polish tolerance, so
/// runs rarely stop early).
pub fn retrain_for(cfg: &RunConfig) -> Option<Retrain> {
    (cfg.sweep.retrain_iters > 0).then(|| Retrain {
        optim: cfg.optim.with_max_iters(cfg.sweep.retrain_iters),
        conv: ConvergenceSpec {
            grad_tol: cfg.sweep.polish_grad_tol,
            ..cfg.conv
        },
    })
}

/// Index of the neuron with the most negative splitting index.
pub fn most_splittable(candidates: &[SplitCandidate]) -> Option<usize> {
    candidates
        .iter()
        .min_by(|a, b| a.splitting_index.total_cmp(&b.splitting_index))
        .map(|c| c.neuron_index)
}

/// Gain of splitting `neuron` along `cos φ · v_min + sin φ · v_max` for
/// `n_angles` equally spaced `φ ∈ [0, 2π)`.
pub fn angle_sweep(
    net: &NetworkState,
    objective: &Objective,
    neuron: usize,
    epsilon: f64,
    n_angles: usize,
    retrain: Option<&Retrain>,
) -> Result<Vec<AngleRow>> {
    if neuron >= net.len() {
        return Err(Error::IndexOutOfRange { index: neuron, len: net.len() });
    }
    if n_angles == 0 {
        return Err(Error::InvalidArgument("angle sweep needs at least one angle".into()));
    }
    let s = crate::splitting::splitting_matrix(net, objective, neuron)?;
    if s.dim() < 2 {
        return Err(Error::InvalidArgument("angle sweep needs a parameter dimension of at least 2".into()));
    }
    let pairs = eig_sym(&s)?;
    let (v_min, low) = (&pairs[0].vector, pairs[0].value);
    if low >= 0.0 {
        return Err(Error::NotSplittable(low));
    }
    let v_max = &pairs[pairs.len() - 1].vector;
    (0..n_angles)
        .map(|k| {
            let angle = 2.0 * PI * k as f64 / n_angles as f64;
            let (sin, cos) = angle.sin_cos();
            let direction: Vec<f64> = v_min.iter().zip(v_max).map(|(a, b)| cos * a + sin * b).collect();
            let norm = crate::linalg::norm2(&direction);
            let direction = direction.into_iter().map(|x| x / norm).collect();
            let candidate = SplitCandidate::along(net, objective, neuron, direction)?;
            let gain = measure_split_gain(net, objective, &candidate, epsilon, retrain)?;
            Ok(AngleRow { angle, gain })
        })
        .collect()
}

/// Angle of the first row with the largest gain.
pub fn argmax_angle(rows: &[AngleRow]) -> f64 {
    rows.iter()
        .fold(None::<AngleRow>, |best, r| match best {
            Some(b) if b.gain >= r.gain => Some(b),
            _ => Some(*r),
        })
        .map_or(f64::NAN, |r| r.angle)
}

/// Every neuron split independently along its own splitting gradient;
/// rows sorted by `λ_min`, ties by neuron index.
pub fn eigen_vs_gain(net: &NetworkState, objective: &Objective, epsilon: f64, retrain: Option<&Retrain>) -> Result<Vec<EigenGainRow>> {
    let mut rows = splitting_candidates(net, objective)?
        .iter()
        .map(|c| {
            Ok(EigenGainRow {
                neuron: c.neuron_index,
                lambda_min: c.splitting_index,
                gain: measure_split_gain(net, objective, c, epsilon, retrain)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.lambda_min.total_cmp(&b.lambda_min).then(a.neuron.cmp(&b.neuron)));
    Ok(rows)
}

/// Sample Pearson correlation; NaN when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}
