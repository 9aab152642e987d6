//! Loss functionals and their derivatives with respect to neuron parameters.
//!
//! Both losses are written as `L = E_x[Φ(f(x))]` for a network output `f`.
//! Everything downstream (gradients, splitting matrices, the Gauss-Newton
//! term) only needs the signed measure `Σ_p c_p δ_p` whose action on a neuron
//! feature gives the loss derivative, so both kinds reduce to an
//! [`OuterMeasure`]:
//!
//! - squared error: points are the data inputs with `c = Φ′(f(x))/N`;
//! - MMD: points are the current particles with `c = 2w_j` and the reference
//!   particles with `c = -2/N`, which is the kernel witness function.

use crate::error::{Error, Result};
use crate::linalg::{axpy, SymMatrix};
use crate::model::{gaussian_kernel, Dataset, NetworkState, NeuronKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `Φ(f) = (y - f)²`, averaged over the dataset.
    SquaredError,
    /// Squared MMD between the weighted particle set and the reference set
    /// under the Gaussian kernel (biased V-statistic).
    Mmd,
}

/// A loss kind bound to its data.
#[derive(Debug, Clone)]
pub struct Objective {
    kind: LossKind,
    data: Dataset,
    mmd: Option<MmdCache>,
}

#[derive(Debug, Clone, Copy)]
struct MmdCache {
    bandwidth: f64,
    /// `mean_{a,b} k(θ*_a, θ*_b)`
    reference_term: f64,
}

/// Signed point measure representing `Φ′` against neuron features.
#[derive(Debug, Clone)]
pub struct OuterMeasure<'a> {
    pub points: Vec<(&'a [f64], f64)>,
}

impl Objective {
    pub fn squared_error(data: Dataset) -> Result<Self> {
        data.validate()?;
        if data.targets.is_none() {
            return Err(Error::InvalidArgument("squared-error loss needs targets".into()));
        }
        Ok(Objective {
            kind: LossKind::SquaredError,
            data,
            mmd: None,
        })
    }

    /// MMD against `reference` (the dataset inputs) with a Gaussian kernel.
    pub fn mmd(reference: Dataset, bandwidth: f64) -> Result<Self> {
        reference.validate()?;
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {bandwidth}")));
        }
        let n = reference.len() as f64;
        let mut acc = 0.0;
        for a in &reference.inputs {
            let row: f64 = reference.inputs.iter().map(|b| gaussian_kernel(a, b, bandwidth)).sum();
            acc += row;
        }
        Ok(Objective {
            kind: LossKind::Mmd,
            data: reference,
            mmd: Some(MmdCache {
                bandwidth,
                reference_term: acc / (n * n),
            }),
        })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    /// The neuron kind this objective expects (MMD fixes the kernel).
    pub fn particle_kind(&self) -> Option<NeuronKind> {
        self.mmd.map(|c| NeuronKind::KernelParticle {
            dim: self.data.input_dim(),
            bandwidth: c.bandwidth,
        })
    }

    fn check(&self, net: &NetworkState) -> Result<()> {
        if net.kind.input_dim() != self.data.input_dim() {
            return Err(Error::Dimension {
                expected: self.data.input_dim(),
                got: net.kind.input_dim(),
                context: "network input vs dataset",
            });
        }
        if let Some(cache) = self.mmd {
            match net.kind {
                NeuronKind::KernelParticle { bandwidth, .. } if bandwidth == cache.bandwidth => {}
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "MMD objective with bandwidth {} cannot score a {:?} network",
                        cache.bandwidth, other
                    )))
                }
            }
        }
        Ok(())
    }

    fn targets(&self) -> &[f64] {
        self.data.targets.as_deref().expect("squared-error objective always has targets")
    }

    pub fn loss(&self, net: &NetworkState) -> Result<f64> {
        self.check(net)?;
        let value = match self.kind {
            LossKind::SquaredError => {
                let ys = self.targets();
                let sum: f64 = self
                    .data
                    .inputs
                    .iter()
                    .zip(ys)
                    .map(|(x, y)| {
                        let r = y - net.eval(x);
                        r * r
                    })
                    .sum();
                sum / self.data.len() as f64
            }
            LossKind::Mmd => {
                let cache = self.mmd.expect("mmd cache");
                let h = cache.bandwidth;
                let mut self_term = 0.0;
                for (ti, wi) in net.neurons.iter().zip(&net.weights) {
                    for (tj, wj) in net.neurons.iter().zip(&net.weights) {
                        self_term += wi * wj * gaussian_kernel(ti, tj, h);
                    }
                }
                let n = self.data.len() as f64;
                let mut cross = 0.0;
                for (ti, wi) in net.neurons.iter().zip(&net.weights) {
                    let m: f64 = self.data.inputs.iter().map(|r| gaussian_kernel(ti, r, h)).sum();
                    cross += wi * m / n;
                }
                self_term - 2.0 * cross + cache.reference_term
            }
        };
        if !value.is_finite() {
            return Err(Error::NonFinite("loss value"));
        }
        Ok(value)
    }

    /// `(Φ′, Φ″)` at a probe point.
    ///
    /// Squared error: `x` is an input with target `y`, giving
    /// `Φ′ = -2(y - f(x))`, `Φ″ = 2`.
    /// MMD: `x` is a location `z` in particle space and `y` is ignored.
    /// `Φ′(z)` is the derivative of the loss when a point mass `t·δ_z` is
    /// added to the particle measure (the witness `2(f_ρ(z) - f_*(z))`), and
    /// `Φ″ = 2k(z, z) = 2`.
    pub fn outer_derivs(&self, net: &NetworkState, x: &[f64], y: Option<f64>) -> Result<(f64, f64)> {
        self.check(net)?;
        if x.len() != self.data.input_dim() {
            return Err(Error::Dimension {
                expected: self.data.input_dim(),
                got: x.len(),
                context: "probe point",
            });
        }
        match self.kind {
            LossKind::SquaredError => {
                let y = y.ok_or_else(|| Error::InvalidArgument("squared-error Φ′ needs a target".into()))?;
                Ok((-2.0 * (y - net.eval(x)), 2.0))
            }
            LossKind::Mmd => {
                let h = self.mmd.expect("mmd cache").bandwidth;
                let model = net.eval(x);
                let reference: f64 = self.data.inputs.iter().map(|r| gaussian_kernel(x, r, h)).sum::<f64>()
                    / self.data.len() as f64;
                Ok((2.0 * (model - reference), 2.0 * gaussian_kernel(x, x, h)))
            }
        }
    }

    /// The signed measure for `Φ′`, optionally restricted to a minibatch of
    /// data rows (for MMD the minibatch subsamples the reference set).
    pub fn outer_measure<'a>(&'a self, net: &'a NetworkState, batch: Option<&[usize]>) -> Result<OuterMeasure<'a>> {
        self.check(net)?;
        let rows: Vec<usize> = match batch {
            Some(b) => {
                if let Some(&bad) = b.iter().find(|&&i| i >= self.data.len()) {
                    return Err(Error::IndexOutOfRange {
                        index: bad,
                        len: self.data.len(),
                    });
                }
                if b.is_empty() {
                    return Err(Error::EmptyDataset);
                }
                b.to_vec()
            }
            None => (0..self.data.len()).collect(),
        };
        let n = rows.len() as f64;
        let points = match self.kind {
            LossKind::SquaredError => {
                let ys = self.targets();
                rows.iter()
                    .map(|&i| {
                        let x = self.data.inputs[i].as_slice();
                        (x, -2.0 * (ys[i] - net.eval(x)) / n)
                    })
                    .collect()
            }
            LossKind::Mmd => net
                .neurons
                .iter()
                .zip(&net.weights)
                .map(|(t, w)| (t.as_slice(), 2.0 * w))
                .chain(rows.iter().map(|&i| (self.data.inputs[i].as_slice(), -2.0 / n)))
                .collect(),
        };
        Ok(OuterMeasure { points })
    }

    /// Per-neuron gradients `∂L/∂θ_ℓ = w_ℓ E[Φ′ ∇σ(θ_ℓ, x)]`.
    pub fn param_grad(&self, net: &NetworkState) -> Result<Vec<Vec<f64>>> {
        self.batch_param_grad(net, None)
    }

    pub fn batch_param_grad(&self, net: &NetworkState, batch: Option<&[usize]>) -> Result<Vec<Vec<f64>>> {
        let measure = self.outer_measure(net, batch)?;
        let d = net.kind.param_dim();
        let mut buf = vec![0.0; d];
        let grads = net
            .neurons
            .iter()
            .zip(&net.weights)
            .map(|(theta, w)| {
                let mut g = vec![0.0; d];
                for &(p, c) in &measure.points {
                    net.kind.grad_into(theta, p, &mut buf);
                    axpy(c, &buf, &mut g);
                }
                g.iter_mut().for_each(|v| *v *= w);
                g
            })
            .collect::<Vec<_>>();
        if grads.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter gradient"));
        }
        Ok(grads)
    }

    /// Full-batch gradient norm `(Σ_ℓ ‖∂L/∂θ_ℓ‖²)^{1/2}`.
    pub fn grad_norm(&self, net: &NetworkState) -> Result<f64> {
        Ok(self.param_grad(net)?.iter().flatten().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// The Gauss-Newton term `T` of the full parameter Hessian
    /// (`nd × nd`, neuron-major), so that `∇²L = blockdiag(S_ℓ) + T`.
    ///
    /// Squared error: `T = E[Φ″ g gᵀ]` with `g` the stacked `w_ℓ∇σ(θ_ℓ, x)`.
    /// MMD: block `(ℓ, m)` is `2 w_ℓ w_m ∇_θ∇_θ′ k(θ_ℓ, θ_m)`.
    pub fn gauss_newton_term(&self, net: &NetworkState) -> Result<SymMatrix> {
        self.check(net)?;
        let d = net.kind.param_dim();
        let n = net.len();
        let mut t = SymMatrix::zeros(n * d);
        match self.kind {
            LossKind::SquaredError => {
                let scale = 2.0 / self.data.len() as f64;
                let mut g = vec![0.0; n * d];
                for x in &self.data.inputs {
                    for (l, (theta, w)) in net.neurons.iter().zip(&net.weights).enumerate() {
                        net.kind.grad_into(theta, x, &mut g[l * d..(l + 1) * d]);
                        g[l * d..(l + 1) * d].iter_mut().for_each(|v| *v *= w);
                    }
                    t.add_scaled(scale, &SymMatrix::outer(1.0, &g));
                }
            }
            LossKind::Mmd => {
                for l in 0..n {
                    for m in l..n {
                        // ∇_θ∇_θ′ k(θ, θ′) = -∇²_θ k(θ, θ′) for a translation-invariant kernel
                        let mut block = SymMatrix::zeros(d);
                        net.kind.hess_accumulate(&net.neurons[l], &net.neurons[m], -1.0, &mut block);
                        let c = 2.0 * net.weights[l] * net.weights[m];
                        for i in 0..d {
                            for j in 0..d {
                                let (r, s) = (l * d + i, m * d + j);
                                if l == m && j < i {
                                    continue;
                                }
                                t.set(r, s, t.get(r, s) + c * block.get(i, j));
                            }
                        }
                    }
                }
            }
        }
        Ok(t)
    }
}

/// Free-function forms of the [`Objective`] methods.
pub fn loss(net: &NetworkState, objective: &Objective) -> Result<f64> {
    objective.loss(net)
}

pub fn param_grad(net: &NetworkState, objective: &Objective) -> Result<Vec<Vec<f64>>> {
    objective.param_grad(net)
}

pub fn outer_derivs(net: &NetworkState, x: &[f64], y: Option<f64>, objective: &Objective) -> Result<(f64, f64)> {
    objective.outer_derivs(net, x, y)
}

/// Median pairwise Euclidean distance of a point set, the usual kernel
/// bandwidth heuristic.
pub fn median_bandwidth(points: &[Vec<f64>]) -> Result<f64> {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return Err(Error::InvalidArgument("median bandwidth needs at least two points".into()));
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let h = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if h > 0.0 {
        Ok(h)
    } else {
        Err(Error::InvalidArgument("median pairwise distance is zero".into()))
    }
}
