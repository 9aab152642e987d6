//! Neurons, networks and datasets.
//!
//! A neuron is a parametric function `σ(θ, x)` with analytic `∇_θσ` and
//! `∇²_θθσ`. A network is the weighted sum `f(x) = Σ wᵢ σ(θᵢ, x)`.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, SymMatrix};

/// Default softplus sharpness; large enough to look like a ReLU.
pub const DEFAULT_SOFTPLUS_BETA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeuronKind {
    /// `σ(θ, x) = θ₃ · exp(-(θ₁x + θ₂)² / 2)` on scalar inputs.
    Rbf1d,
    /// `σ(θ, x) = c · softplus_β(aᵀx + b)` with `θ = (a, b, c)`.
    SoftplusUnit { input_dim: usize, beta: f64 },
    /// Gaussian kernel feature `σ(θ, z) = exp(-‖θ - z‖² / 2h²)`.
    ///
    /// Evaluated against another particle this is `k(θ, z)` itself, so MMD
    /// expectations are taken in closed form over particle sets.
    KernelParticle { dim: usize, bandwidth: f64 },
}

impl NeuronKind {
    pub fn softplus(input_dim: usize) -> Self {
        NeuronKind::SoftplusUnit {
            input_dim,
            beta: DEFAULT_SOFTPLUS_BETA,
        }
    }

    /// Length of θ.
    pub fn param_dim(&self) -> usize {
        match *self {
            NeuronKind::Rbf1d => 3,
            NeuronKind::SoftplusUnit { input_dim, .. } => input_dim + 2,
            NeuronKind::KernelParticle { dim, .. } => dim,
        }
    }

    /// Length of an input x.
    pub fn input_dim(&self) -> usize {
        match *self {
            NeuronKind::Rbf1d => 1,
            NeuronKind::SoftplusUnit { input_dim, .. } => input_dim,
            NeuronKind::KernelParticle { dim, .. } => dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NeuronKind::Rbf1d => "rbf1d",
            NeuronKind::SoftplusUnit { .. } => "softplus_unit",
            NeuronKind::KernelParticle { .. } => "kernel_particle",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NeuronKind::Rbf1d => Ok(()),
            NeuronKind::SoftplusUnit { input_dim, beta } => {
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::InvalidArgument(format!("softplus beta must be > 0, got {beta}")));
                }
                if input_dim == 0 {
                    return Err(Error::InvalidArgument("softplus input_dim must be >= 1".into()));
                }
                Ok(())
            }
            NeuronKind::KernelParticle { dim, bandwidth } => {
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "kernel bandwidth must be > 0, got {bandwidth}"
                    )));
                }
                if dim == 0 {
                    return Err(Error::InvalidArgument("particle dim must be >= 1".into()));
                }
                Ok(())
            }
        }
    }

    fn check(&self, theta: &[f64], x: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::Dimension {
                expected: self.param_dim(),
                got: theta.len(),
                context: "neuron parameter",
            });
        }
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
                context: "neuron input",
            });
        }
        if !all_finite(theta) || !all_finite(x) {
            return Err(Error::NonFinite("neuron argument"));
        }
        Ok(())
    }

    /// Unchecked `σ(θ, x)`.
    /// Index of a parameter that σ is linear in (an output amplitude), if any.
    pub fn amplitude_index(&self) -> Option<usize> {
        match *self {
            NeuronKind::Rbf1d => Some(2),
            NeuronKind::SoftplusUnit { input_dim, .. } => Some(input_dim + 1),
            NeuronKind::KernelParticle { .. } => None,
        }
    }

    pub(crate) fn eval(&self, theta: &[f64], x: &[f64]) -> f64 {
        match *self {
            NeuronKind::Rbf1d => {
                let u = theta[0] * x[0] + theta[1];
                theta[2] * (-0.5 * u * u).exp()
            }
            NeuronKind::SoftplusUnit { input_dim, beta } => {
                let z = preactivation(theta, x, input_dim);
                theta[input_dim + 1] * softplus(beta, z)
            }
            NeuronKind::KernelParticle { bandwidth, .. } => gaussian_kernel(theta, x, bandwidth),
        }
    }

    /// Unchecked `∇_θσ(θ, x)` written into `out`.
    pub(crate) fn grad_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        match *self {
            NeuronKind::Rbf1d => {
                let u = theta[0] * x[0] + theta[1];
                let g = (-0.5 * u * u).exp();
                out[0] = -theta[2] * u * x[0] * g;
                out[1] = -theta[2] * u * g;
                out[2] = g;
            }
            NeuronKind::SoftplusUnit { input_dim, beta } => {
                let z = preactivation(theta, x, input_dim);
                let c = theta[input_dim + 1];
                let s1 = sigmoid(beta * z);
                for k in 0..input_dim {
                    out[k] = c * s1 * x[k];
                }
                out[input_dim] = c * s1;
                out[input_dim + 1] = softplus(beta, z);
            }
            NeuronKind::KernelParticle { bandwidth, .. } => {
                let k = gaussian_kernel(theta, x, bandwidth);
                let h2 = bandwidth * bandwidth;
                for i in 0..theta.len() {
                    out[i] = -(theta[i] - x[i]) / h2 * k;
                }
            }
        }
    }

    /// Unchecked `∇²_θθσ(θ, x)`, accumulated as `acc += scale · ∇²σ`.
    pub(crate) fn hess_accumulate(&self, theta: &[f64], x: &[f64], scale: f64, acc: &mut SymMatrix) {
        match *self {
            NeuronKind::Rbf1d => {
                let u = theta[0] * x[0] + theta[1];
                let g = (-0.5 * u * u).exp();
                let x0 = x[0];
                // d²/du² of exp(-u²/2) is (u² - 1)·exp(-u²/2)
                let curv = theta[2] * (u * u - 1.0) * g;
                let add = |acc: &mut SymMatrix, i, j, v: f64| {
                    let cur = acc.get(i, j);
                    acc.set(i, j, cur + scale * v);
                };
                add(acc, 0, 0, curv * x0 * x0);
                add(acc, 0, 1, curv * x0);
                add(acc, 1, 1, curv);
                add(acc, 0, 2, -u * x0 * g);
                add(acc, 1, 2, -u * g);
            }
            NeuronKind::SoftplusUnit { input_dim, beta } => {
                let z = preactivation(theta, x, input_dim);
                let c = theta[input_dim + 1];
                let s1 = sigmoid(beta * z);
                let s2 = beta * s1 * (1.0 - s1);
                let p = input_dim;
                // (a, b) block uses the extended input (x, 1)
                let ext = |k: usize| if k < p { x[k] } else { 1.0 };
                for i in 0..=p {
                    for j in i..=p {
                        let cur = acc.get(i, j);
                        acc.set(i, j, cur + scale * c * s2 * ext(i) * ext(j));
                    }
                    let cur = acc.get(i, p + 1);
                    acc.set(i, p + 1, cur + scale * s1 * ext(i));
                }
            }
            NeuronKind::KernelParticle { bandwidth, .. } => {
                let k = gaussian_kernel(theta, x, bandwidth);
                let h2 = bandwidth * bandwidth;
                let d = theta.len();
                for i in 0..d {
                    let di = theta[i] - x[i];
                    for j in i..d {
                        let dj = theta[j] - x[j];
                        let delta = if i == j { 1.0 / h2 } else { 0.0 };
                        let cur = acc.get(i, j);
                        acc.set(i, j, cur + scale * k * (di * dj / (h2 * h2) - delta));
                    }
                }
            }
        }
    }
}

fn preactivation(theta: &[f64], x: &[f64], input_dim: usize) -> f64 {
    theta[..input_dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + theta[input_dim]
}

/// `ln(1 + e^{βz}) / β`, stable for large |βz|.
fn softplus(beta: f64, z: f64) -> f64 {
    let bz = beta * z;
    (bz.max(0.0) + (-bz.abs()).exp().ln_1p()) / beta
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn gaussian_kernel(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2 / (bandwidth * bandwidth)).exp()
}

pub fn neuron_eval(kind: &NeuronKind, theta: &[f64], x: &[f64]) -> Result<f64> {
    kind.check(theta, x)?;
    Ok(kind.eval(theta, x))
}

pub fn neuron_grad(kind: &NeuronKind, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    kind.check(theta, x)?;
    let mut g = vec![0.0; theta.len()];
    kind.grad_into(theta, x, &mut g);
    Ok(g)
}

pub fn neuron_hess(kind: &NeuronKind, theta: &[f64], x: &[f64]) -> Result<SymMatrix> {
    kind.check(theta, x)?;
    let mut h = SymMatrix::zeros(theta.len());
    kind.hess_accumulate(theta, x, 1.0, &mut h);
    Ok(h)
}

/// An ordered set of weighted neurons of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub kind: NeuronKind,
    pub neurons: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl NetworkState {
    pub fn new(kind: NeuronKind, neurons: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let net = NetworkState {
            kind,
            neurons,
            weights,
        };
        net.validate()?;
        Ok(net)
    }

    /// Every neuron at weight 1 (additive regression networks).
    pub fn unit_weights(kind: NeuronKind, neurons: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0; neurons.len()];
        Self::new(kind, neurons, w)
    }

    /// Weights `1/n` (particle systems).
    pub fn uniform_weights(kind: NeuronKind, neurons: Vec<Vec<f64>>) -> Result<Self> {
        let n = neurons.len();
        let w = vec![1.0 / n as f64; n];
        Self::new(kind, neurons, w)
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.neurons.len() != self.weights.len() {
            return Err(Error::Dimension {
                expected: self.neurons.len(),
                got: self.weights.len(),
                context: "weights vs neurons",
            });
        }
        for theta in &self.neurons {
            if theta.len() != self.kind.param_dim() {
                return Err(Error::Dimension {
                    expected: self.kind.param_dim(),
                    got: theta.len(),
                    context: "neuron parameter",
                });
            }
            if !all_finite(theta) {
                return Err(Error::NonFinite("neuron parameter"));
            }
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(format!("neuron weight must be > 0, got {w}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same function with every weight moved into the amplitude parameter,
    /// leaving unit weights. `None` for kinds without an amplitude.
    pub fn fold_weights(&self) -> Option<NetworkState> {
        let k = self.kind.amplitude_index()?;
        let mut folded = self.clone();
        for (theta, w) in folded.neurons.iter_mut().zip(folded.weights.iter_mut()) {
            theta[k] *= *w;
            *w = 1.0;
        }
        Some(folded)
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        self.neurons
            .iter()
            .zip(&self.weights)
            .map(|(theta, w)| w * self.kind.eval(theta, x))
            .sum()
    }

    /// Flattened parameters, neuron-major.
    pub fn flat_params(&self) -> Vec<f64> {
        self.neurons.iter().flatten().copied().collect()
    }

    /// Inverse of [`flat_params`](Self::flat_params).
    pub fn with_flat_params(&self, flat: &[f64]) -> NetworkState {
        let d = self.kind.param_dim();
        assert_eq!(flat.len(), d * self.len(), "with_flat_params: length mismatch");
        NetworkState {
            kind: self.kind,
            neurons: flat.chunks(d).map(<[f64]>::to_vec).collect(),
            weights: self.weights.clone(),
        }
    }
}

/// `f(x) = Σ wᵢ σ(θᵢ, x)`
pub fn forward(net: &NetworkState, x: &[f64]) -> Result<f64> {
    if x.len() != net.kind.input_dim() {
        return Err(Error::Dimension {
            expected: net.kind.input_dim(),
            got: x.len(),
            context: "network input",
        });
    }
    Ok(net.eval(x))
}

/// Inputs with optional scalar targets.
///
/// Regression data carries targets. For MMD the inputs are the reference
/// particle set and there are no targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Option<Vec<f64>>,
}

impl Dataset {
    pub fn regression(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Dimension {
                expected: inputs.len(),
                got: targets.len(),
                context: "targets vs inputs",
            });
        }
        let d = Dataset {
            inputs,
            targets: Some(targets),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn scalar_regression(xs: &[f64], ys: Vec<f64>) -> Result<Self> {
        Self::regression(xs.iter().map(|&x| vec![x]).collect(), ys)
    }

    pub fn particles(reference: Vec<Vec<f64>>) -> Result<Self> {
        let d = Dataset {
            inputs: reference,
            targets: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = self.inputs[0].len();
        for x in &self.inputs {
            if x.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: x.len(),
                    context: "dataset row",
                });
            }
            if !all_finite(x) {
                return Err(Error::NonFinite("dataset input"));
            }
        }
        if let Some(t) = &self.targets {
            if !all_finite(t) {
                return Err(Error::NonFinite("dataset target"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}
