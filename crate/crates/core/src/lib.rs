//! Splitting steepest descent for small differentiable models.
//!
//! Models here are weighted sums of neurons `f(x) = Σ wᵢ σ(θᵢ, x)`. Training
//! alternates between an ordinary parametric descent phase and a splitting
//! phase in which a neuron whose *splitting matrix*
//! `S(θ) = E[Φ′(f(x)) ∇²σ(θ, x)]` has a negative minimum eigenvalue is
//! replaced by two half-weight copies at `θ ± ε·v_min`. For such a split the
//! loss changes by `ε²·λ_min/2 + O(ε³)`.
//!
//! Crate layout:
//!
//! - [`linalg`]: dense symmetric matrices and a cyclic Jacobi eigensolver.
//! - [`model`]: neuron kinds with analytic gradients and Hessians.
//! - [`loss`]: squared-error regression and kernel MMD objectives.
//! - [`splitting`]: splitting matrices, candidate selection, split application.
//! - [`descent`]: SGD / momentum / Adagrad with a gradient-norm convergence trigger.
//! - [`baselines`]: random split, new-initialization growth, gradient boosting.
//! - [`verify`]: finite-difference oracles, Taylor-order fits and the property report.
//! - [`experiment`]: config files, dataset synthesis, the growth runner and CSV logs.

pub mod baselines;
pub mod descent;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod rng;
pub mod splitting;
pub mod verify;

pub use descent::{descend, ConvergenceSpec, DescentOutcome, OptimMethod, OptimSpec, TraceRow};
pub use error::{Error, Result};
pub use linalg::{eig_sym, min_eigenpair, EigenPair, SymMatrix};
pub use loss::{LossKind, Objective};
pub use model::{forward, neuron_eval, neuron_grad, neuron_hess, Dataset, NetworkState, NeuronKind};
pub use splitting::{
    apply_split, select_splits, split_round, splitting_candidates, splitting_matrix,
    SplitCandidate, SplitEvent, SplitPolicy,
};
