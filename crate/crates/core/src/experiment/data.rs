//! Synthetic datasets for the two toy experiments.

use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::model::{Dataset, NetworkState, NeuronKind};
use crate::rng::stream;

/// Ground-truth parameter prior for the RBF toy: each coordinate ~ Normal
/// with variance 3.
pub const RBF_TRUTH_STD: f64 = 1.732_050_807_568_877_2;

/// Input range of the RBF toy.
pub const RBF_X_RANGE: (f64, f64) = (-5.0, 5.0);

/// Mixture components `(weight, mean, variance)` of the MMD reference.
pub const GMM_COMPONENTS: [(f64, f64, f64); 3] = [(0.2, -2.0, 0.5), (0.3, 1.0, 0.5), (0.5, 3.0, 0.5)];

/// Noiseless 1-D regression data from a random sum of RBF bumps (all
/// weights 1). Inputs and truth come from separate seeded streams.
pub fn synth_rbf_dataset_sized(seed: u64, truth_neurons: usize, points: usize) -> Result<(Dataset, NetworkState)> {
    let prior = Normal::new(0.0, RBF_TRUTH_STD).expect("valid normal");
    let mut rng = stream(seed, "data/rbf_truth");
    let neurons = (0..truth_neurons)
        .map(|_| (0..3).map(|_| prior.sample(&mut rng)).collect())
        .collect();
    let truth = NetworkState::unit_weights(NeuronKind::Rbf1d, neurons)?;

    let xdist = Uniform::new_inclusive(RBF_X_RANGE.0, RBF_X_RANGE.1).expect("valid range");
    let mut rng = stream(seed, "data/rbf_inputs");
    let xs: Vec<f64> = (0..points).map(|_| xdist.sample(&mut rng)).collect();
    let ys = xs.iter().map(|&x| truth.eval(&[x])).collect();
    Ok((Dataset::scalar_regression(&xs, ys)?, truth))
}

/// The default RBF toy: 15 true neurons, 1000 points.
pub fn synth_rbf_dataset(seed: u64) -> Result<(Dataset, NetworkState)> {
    synth_rbf_dataset_sized(seed, 15, 1000)
}

/// `points` i.i.d. draws from the three-component Gaussian mixture.
pub fn gmm_reference(seed: u64, points: usize) -> Result<Dataset> {
    if points == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = stream(seed, "data/gmm");
    let pick = Uniform::new(0.0, 1.0).expect("valid range");
    let comps: Vec<(f64, Normal<f64>)> = GMM_COMPONENTS
        .iter()
        .map(|&(w, m, var)| (w, Normal::new(m, var.sqrt()).expect("valid normal")))
        .collect();
    let mut reference = Vec::with_capacity(points);
    for _ in 0..points {
        let u = pick.sample(&mut rng);
        let mut acc = 0.0;
        let mut chosen = &comps[comps.len() - 1].1;
        for (w, dist) in &comps {
            acc += w;
            if u < acc {
                chosen = dist;
                break;
            }
        }
        reference.push(vec![chosen.sample(&mut rng)]);
    }
    Dataset::particles(reference)
}
