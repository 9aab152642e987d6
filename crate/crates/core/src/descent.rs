//! Parametric descent with a fixed architecture.
//!
//! Runs a first-order optimizer until the full-batch gradient norm has stayed
//! at or below `grad_tol` for `window` consecutive checks, or until the
//! iteration budget is spent. Convergence checks always use the full-batch
//! gradient, even when updates use minibatches.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::loss::Objective;
use crate::model::NetworkState;
use crate::rng;

const ADAGRAD_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimMethod {
    Sgd,
    SgdMomentum,
    Adagrad,
}

impl OptimMethod {
    pub fn name(&self) -> &'static str {
        match self {
            OptimMethod::Sgd => "sgd",
            OptimMethod::SgdMomentum => "sgd_momentum",
            OptimMethod::Adagrad => "adagrad",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimSpec {
    pub method: OptimMethod,
    pub learning_rate: f64,
    /// Only used by [`OptimMethod::SgdMomentum`].
    pub momentum: f64,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub max_iters: usize,
    /// Seed for minibatch sampling.
    pub seed: u64,
}

impl OptimSpec {
    pub fn sgd(learning_rate: f64, max_iters: usize) -> Self {
        OptimSpec {
            method: OptimMethod::Sgd,
            learning_rate,
            momentum: 0.0,
            batch_size: None,
            max_iters,
            seed: 0,
        }
    }

    pub fn momentum(learning_rate: f64, momentum: f64, max_iters: usize) -> Self {
        OptimSpec {
            method: OptimMethod::SgdMomentum,
            momentum,
            ..Self::sgd(learning_rate, max_iters)
        }
    }

    pub fn adagrad(learning_rate: f64, max_iters: usize) -> Self {
        OptimSpec {
            method: OptimMethod::Adagrad,
            ..Self::sgd(learning_rate, max_iters)
        }
    }

    pub fn with_max_iters(self, max_iters: usize) -> Self {
        OptimSpec { max_iters, ..self }
    }

    /// A zero learning rate is accepted and leaves parameters untouched.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSpec {
    pub grad_tol: f64,
    pub window: usize,
    pub min_iters: usize,
    pub check_interval: usize,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec {
            grad_tol: 1e-4,
            window: 5,
            min_iters: 0,
            check_interval: 50,
        }
    }
}

impl ConvergenceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("grad_tol must be > 0, got {}", self.grad_tol)));
        }
        if self.window == 0 || self.check_interval == 0 {
            return Err(Error::InvalidArgument("window and check_interval must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOutcome {
    pub net: NetworkState,
    pub trace: Vec<TraceRow>,
    /// Number of parameter updates applied.
    pub iterations: usize,
    pub converged: bool,
}

impl DescentOutcome {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.loss)
    }
}

pub fn descend(
    net: &NetworkState,
    objective: &Objective,
    optim: &OptimSpec,
    conv: &ConvergenceSpec,
) -> Result<DescentOutcome> {
    descend_masked(net, objective, optim, conv, None)
}

/// [`descend`] restricted to the neurons flagged in `trainable`; the others
/// stay bitwise fixed and are left out of the gradient norm.
pub fn descend_masked(
    net: &NetworkState,
    objective: &Objective,
    optim: &OptimSpec,
    conv: &ConvergenceSpec,
    trainable: Option<&[bool]>,
) -> Result<DescentOutcome> {
    optim.validate()?;
    conv.validate()?;
    net.validate()?;
    if let Some(mask) = trainable {
        if mask.len() != net.len() {
            return Err(Error::Dimension {
                expected: net.len(),
                got: mask.len(),
                context: "trainable mask",
            });
        }
    }
    let is_trainable = |l: usize| trainable.is_none_or(|m| m[l]);

    let d = net.kind.param_dim();
    let n_data = objective.data().len();
    let mut state = net.clone();
    let mut slot = vec![vec![0.0; d]; net.len()];
    let mut batch_rng = rng::stream(optim.seed, "minibatch");
    let mut trace = Vec::new();
    let mut calm_checks = 0;
    let mut converged = false;
    let mut iterations = 0;
    let mut previous = net.clone();

    for iter in 0..=optim.max_iters {
        let mut full_grad = None;
        if iter % conv.check_interval == 0 || iter == optim.max_iters {
            let loss = objective.loss(&state).map_err(blow_up(iter, &previous))?;
            let g = objective.param_grad(&state).map_err(blow_up(iter, &previous))?;
            let grad_norm = g
                .iter()
                .enumerate()
                .filter(|(l, _)| is_trainable(*l))
                .flat_map(|(_, gl)| gl)
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            trace.push(TraceRow { iter, loss, grad_norm });
            if grad_norm <= conv.grad_tol {
                calm_checks += 1;
            } else {
                calm_checks = 0;
            }
            if calm_checks >= conv.window && iter >= conv.min_iters {
                converged = true;
                break;
            }
            full_grad = Some(g);
        }
        if iter == optim.max_iters {
            break;
        }

        let grads = match (optim.batch_size, full_grad) {
            (None, Some(g)) => g,
            (Some(b), _) if b < n_data => {
                let idx = sample(&mut batch_rng, n_data, b).into_vec();
                objective.batch_param_grad(&state, Some(&idx)).map_err(blow_up(iter, &previous))?
            }
            _ => objective.param_grad(&state).map_err(blow_up(iter, &previous))?,
        };

        previous.clone_from(&state);
        for (l, g) in grads.iter().enumerate() {
            if !is_trainable(l) {
                continue;
            }
            let theta = &mut state.neurons[l];
            let s = &mut slot[l];
            for k in 0..d {
                let step = match optim.method {
                    OptimMethod::Sgd => g[k],
                    OptimMethod::SgdMomentum => {
                        s[k] = optim.momentum * s[k] + g[k];
                        s[k]
                    }
                    OptimMethod::Adagrad => {
                        s[k] += g[k] * g[k];
                        g[k] / (s[k].sqrt() + ADAGRAD_EPS)
                    }
                };
                theta[k] -= optim.learning_rate * step;
            }
        }
        iterations += 1;
        if state.neurons.iter().flatten().any(|v| !v.is_finite()) {
            return Err(diverged(iter + 1, f64::NAN, &previous));
        }
    }

    Ok(DescentOutcome {
        net: state,
        trace,
        iterations,
        converged,
    })
}

/// Turns a non-finite evaluation into a divergence error.
fn blow_up(iter: usize, last: &NetworkState) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::NonFinite(_) => diverged(iter, f64::NAN, last),
        other => other,
    }
}

fn diverged(iter: usize, loss: f64, last_finite: &NetworkState) -> Error {
    Error::Diverged {
        iter,
        loss,
        last_finite: Box::new(last_finite.clone()),
    }
}
