//! Independent numerical oracles.
//!
//! Finite differences, Taylor-order fits and direct loss measurements. Every
//! analytic derivative in the crate is listed in [`ANALYTIC_PATHS`] and has
//! exactly one finite-difference check in [`oracle_checks`]; the report in
//! [`run_all`] fails if the two lists drift apart.

use std::fmt::Write as _;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::descent::{descend, ConvergenceSpec, OptimSpec};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, SymMatrix};
use crate::loss::Objective;
use crate::model::{gaussian_kernel, neuron_eval, neuron_grad, neuron_hess, Dataset, NetworkState, NeuronKind};
use crate::rng::{stream, Rng};
use crate::splitting::{apply_many, apply_split, splitting_candidates, splitting_matrix, SplitCandidate};

/// Residuals below this are treated as round-off and dropped from order fits.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

/// Denominator floor for [`relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSpec {
    pub step: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec { step: 1e-5 }
    }
}

impl FdSpec {
    fn validate(&self) -> Result<()> {
        if self.step > 0.0 && self.step.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("FD step must be > 0, got {}", self.step)))
        }
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("finite-difference evaluation"))
    }
}

/// Central-difference gradient.
pub fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], spec: &FdSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let h = spec.step;
    let mut x = theta.to_vec();
    let mut g = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        x[i] = theta[i] + h;
        let fp = finite(f(&x))?;
        x[i] = theta[i] - h;
        let fm = finite(f(&x))?;
        x[i] = theta[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Second central differences of a scalar function, symmetrized.
pub fn fd_hessian(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], spec: &FdSpec) -> Result<SymMatrix> {
    spec.validate()?;
    let h = spec.step;
    let n = theta.len();
    let mut x = theta.to_vec();
    let mut full = vec![0.0; n * n];
    let mut eval = |x: &mut Vec<f64>, i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
        x[i] += si * h;
        x[j] += sj * h;
        let v = finite(f(x));
        x[i] = theta[i];
        x[j] = theta[j];
        v
    };
    for i in 0..n {
        for j in 0..n {
            let pp = eval(&mut x, i, 1.0, j, 1.0)?;
            let pm = eval(&mut x, i, 1.0, j, -1.0)?;
            let mp = eval(&mut x, i, -1.0, j, 1.0)?;
            let mm = eval(&mut x, i, -1.0, j, -1.0)?;
            full[i * n + j] = (pp - pm - mp + mm) / (4.0 * h * h);
        }
    }
    Ok(SymMatrix::symmetrize(n, &full))
}

/// Central-difference Jacobian of a gradient map, symmetrized.
pub fn fd_jacobian_sym(mut g: impl FnMut(&[f64]) -> Vec<f64>, theta: &[f64], spec: &FdSpec) -> Result<SymMatrix> {
    spec.validate()?;
    let h = spec.step;
    let n = theta.len();
    let mut x = theta.to_vec();
    let mut full = vec![0.0; n * n];
    for j in 0..n {
        x[j] = theta[j] + h;
        let gp = g(&x);
        x[j] = theta[j] - h;
        let gm = g(&x);
        x[j] = theta[j];
        if !all_finite(&gp) || !all_finite(&gm) {
            return Err(Error::NonFinite("finite-difference evaluation"));
        }
        for i in 0..n {
            full[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    Ok(SymMatrix::symmetrize(n, &full))
}

/// `‖a - r‖_∞ / max(‖r‖_∞, REL_ERR_FLOOR)`
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(analytic.len(), reference.len());
    let diff = analytic
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, r)| m.max((a - r).abs()));
    let scale = reference.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    diff / scale.max(REL_ERR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Fitted,
    /// Fewer than two residuals were above [`RESIDUAL_FLOOR`]: the remainder
    /// is below round-off everywhere, which passes any order requirement.
    PassByFloor,
}

/// Least-squares slope of `log residual` against `log ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub epsilons: Vec<f64>,
    pub residuals: Vec<f64>,
    pub slope: f64,
    pub status: FitStatus,
}

impl OrderFit {
    /// True when the fitted slope reaches `min_slope` or the fit is floor-limited.
    pub fn passes(&self, min_slope: f64) -> bool {
        match self.status {
            FitStatus::PassByFloor => true,
            FitStatus::Fitted => self.slope >= min_slope,
        }
    }
}

pub fn order_fit(mut measure: impl FnMut(f64) -> Result<f64>, epsilons: &[f64]) -> Result<OrderFit> {
    if epsilons.len() < 4 {
        return Err(Error::InvalidArgument("order fit needs at least 4 epsilons".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || !(epsilons[epsilons.len() - 1] > 0.0) {
        return Err(Error::InvalidArgument("order-fit epsilons must be positive and strictly decreasing".into()));
    }
    if (epsilons[0] / epsilons[epsilons.len() - 1]).log10() < 1.5 {
        return Err(Error::InvalidArgument("order-fit epsilons must span at least 1.5 decades".into()));
    }
    let residuals = epsilons
        .iter()
        .map(|&e| measure(e).and_then(|r| finite(r.abs())))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = epsilons
        .iter()
        .zip(&residuals)
        .filter(|(_, r)| **r >= RESIDUAL_FLOOR)
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(OrderFit {
            epsilons: epsilons.to_vec(),
            residuals,
            slope: f64::NAN,
            status: FitStatus::PassByFloor,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(OrderFit {
        epsilons: epsilons.to_vec(),
        residuals,
        slope: sxy / sxx,
        status: FitStatus::Fitted,
    })
}

/// Retraining budget after a hypothetical split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retrain {
    pub optim: OptimSpec,
    pub conv: ConvergenceSpec,
}

/// `loss(before) - loss(after)` for splitting along `candidate`, optionally
/// after re-descending the split network. Positive means the split helped.
pub fn measure_split_gain(
    net: &NetworkState,
    objective: &Objective,
    candidate: &SplitCandidate,
    epsilon: f64,
    retrain: Option<&Retrain>,
) -> Result<f64> {
    let before = objective.loss(net)?;
    let (mut split, _) = apply_split(net, candidate, epsilon)?;
    if let Some(r) = retrain {
        split = descend(&split, objective, &r.optim, &r.conv)?.net;
    }
    Ok(before - objective.loss(&split)?)
}

/// MMD as the double sum over the signed measure
/// `Σ wᵢ δ_{θᵢ} - Σ (1/N) δ_{θ*_a}`, with no grouping of terms.
pub fn mmd_brute_force(particles: &[Vec<f64>], weights: &[f64], reference: &[Vec<f64>], bandwidth: f64) -> f64 {
    let n = reference.len() as f64;
    let signed: Vec<(&[f64], f64)> = particles
        .iter()
        .zip(weights)
        .map(|(p, &w)| (p.as_slice(), w))
        .chain(reference.iter().map(|r| (r.as_slice(), -1.0 / n)))
        .collect();
    let mut total = 0.0;
    for &(a, ca) in &signed {
        for &(b, cb) in &signed {
            total += ca * cb * gaussian_kernel(a, b, bandwidth);
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Loss-change measurements

/// Default ε grid for order fits.
pub const EPSILON_GRID: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

/// `|ΔL(ε) - ε² uᵀSu / 2|` for a single split along the candidate direction.
pub fn split_decomposition_fit(net: &NetworkState, objective: &Objective, candidate: &SplitCandidate, epsilons: &[f64]) -> Result<OrderFit> {
    let base = objective.loss(net)?;
    order_fit(
        |e| {
            let (split, _) = apply_split(net, candidate, e)?;
            Ok(objective.loss(&split)? - base - candidate.predicted_change(e))
        },
        epsilons,
    )
}

/// Relative error of the measured `ΔL(ε)` against `ε²λ/2`.
pub fn split_prediction_error(net: &NetworkState, objective: &Objective, candidate: &SplitCandidate, epsilon: f64) -> Result<f64> {
    let (split, _) = apply_split(net, candidate, epsilon)?;
    let measured = objective.loss(&split)? - objective.loss(net)?;
    let predicted = candidate.predicted_change(epsilon);
    Ok((measured - predicted).abs() / predicted.abs())
}

/// Residual of joint splitting against the sum of individual split terms.
pub fn additivity_fit(net: &NetworkState, objective: &Objective, candidates: &[SplitCandidate], epsilons: &[f64]) -> Result<OrderFit> {
    let base = objective.loss(net)?;
    order_fit(
        |e| {
            let (split, _) = apply_many(net, candidates, e, 0)?;
            let predicted: f64 = candidates.iter().map(|c| c.predicted_change(e)).sum();
            Ok(objective.loss(&split)? - base - predicted)
        },
        epsilons,
    )
}

/// Normalized per-neuron gradient step: `θᵢ ← θᵢ - ε Gᵢ/‖Gᵢ‖` with the
/// unweighted gradient `Gᵢ = (∂L/∂θᵢ)/wᵢ`. Predicted change `-ε Σ wᵢ‖Gᵢ‖`.
pub fn normalized_descent_fit(net: &NetworkState, objective: &Objective, epsilons: &[f64]) -> Result<OrderFit> {
    let base = objective.loss(net)?;
    let grads = objective.param_grad(net)?;
    let norms: Vec<f64> = grads.iter().map(|g| crate::linalg::norm2(g)).collect();
    let predicted_rate: f64 = norms.iter().sum();
    order_fit(
        |e| {
            let mut moved = net.clone();
            for ((theta, g), n) in moved.neurons.iter_mut().zip(&grads).zip(&norms) {
                if *n > 0.0 {
                    theta.iter_mut().zip(g).for_each(|(t, gi)| *t -= e * gi / n);
                }
            }
            Ok(objective.loss(&moved)? - base + e * predicted_rate)
        },
        epsilons,
    )
}

/// Split every neuron with `λ_min < 0`; residual against
/// `ε²/2 · Σ min(λ_min, 0)`.
pub fn split_all_negative_fit(net: &NetworkState, objective: &Objective, epsilons: &[f64]) -> Result<OrderFit> {
    let base = objective.loss(net)?;
    let negative: Vec<SplitCandidate> = splitting_candidates(net, objective)?
        .into_iter()
        .filter(|c| c.splitting_index < 0.0)
        .collect();
    if negative.is_empty() {
        return Err(Error::InvalidArgument("no neuron has a negative splitting index".into()));
    }
    order_fit(
        |e| {
            let (split, _) = apply_many(net, &negative, e, 0)?;
            let predicted: f64 = negative.iter().map(|c| c.predicted_change(e)).sum();
            Ok(objective.loss(&split)? - base - predicted)
        },
        epsilons,
    )
}

// ---------------------------------------------------------------------------
// Derivative oracle registry

/// Every analytic derivative path in the crate.
pub const ANALYTIC_PATHS: &[&str] = &[
    "neuron_grad/rbf1d",
    "neuron_grad/softplus_unit",
    "neuron_grad/kernel_particle",
    "neuron_hess/rbf1d",
    "neuron_hess/softplus_unit",
    "neuron_hess/kernel_particle",
    "param_grad/squared_error",
    "param_grad/mmd",
    "outer_derivs/squared_error",
    "outer_derivs/mmd",
    "splitting_matrix/squared_error",
    "splitting_matrix/mmd",
    "hessian_decomposition/squared_error",
    "hessian_decomposition/mmd",
];

/// Thresholds used by the derivative oracles.
pub const GRAD_REL_TOL: f64 = 1e-6;
pub const HESS_REL_TOL: f64 = 1e-5;
pub const DECOMPOSITION_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn at_most(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.to_string(),
            measured,
            threshold,
            pass: measured <= threshold,
            detail: detail.into(),
        }
    }

    fn at_least(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckOutcome {
            name: name.to_string(),
            measured,
            threshold,
            pass: measured >= threshold,
            detail: detail.into(),
        }
    }

    fn order(name: &str, fit: &OrderFit, min_slope: f64) -> Self {
        CheckOutcome {
            name: name.to_string(),
            measured: fit.slope,
            threshold: min_slope,
            pass: fit.passes(min_slope),
            detail: match fit.status {
                FitStatus::Fitted => format!("slope fit over {} epsilons", fit.epsilons.len()),
                FitStatus::PassByFloor => "PASS-BY-FLOOR".to_string(),
            },
        }
    }
}

pub type OracleFn = fn() -> Result<CheckOutcome>;

/// The oracle for each analytic path, one per entry of [`ANALYTIC_PATHS`].
pub fn oracle_checks() -> Vec<(&'static str, OracleFn)> {
    vec![
        ("neuron_grad/rbf1d", || neuron_grad_check(NeuronKind::Rbf1d)),
        ("neuron_grad/softplus_unit", || neuron_grad_check(softplus_fixture_kind())),
        ("neuron_grad/kernel_particle", || neuron_grad_check(kernel_fixture_kind())),
        ("neuron_hess/rbf1d", || neuron_hess_check(NeuronKind::Rbf1d)),
        ("neuron_hess/softplus_unit", || neuron_hess_check(softplus_fixture_kind())),
        ("neuron_hess/kernel_particle", || neuron_hess_check(kernel_fixture_kind())),
        ("param_grad/squared_error", || param_grad_check(false)),
        ("param_grad/mmd", || param_grad_check(true)),
        ("outer_derivs/squared_error", outer_derivs_squared_check),
        ("outer_derivs/mmd", outer_derivs_mmd_check),
        ("splitting_matrix/squared_error", splitting_matrix_squared_check),
        ("splitting_matrix/mmd", splitting_matrix_mmd_check),
        ("hessian_decomposition/squared_error", || hessian_decomposition_check(false)),
        ("hessian_decomposition/mmd", || hessian_decomposition_check(true)),
    ]
}

/// Registry problems: paths without an oracle, oracles without a path, or
/// duplicates. Empty when the registry is consistent.
pub fn registry_problems() -> Vec<String> {
    let checks = oracle_checks();
    let mut problems = Vec::new();
    for path in ANALYTIC_PATHS {
        match checks.iter().filter(|(p, _)| p == path).count() {
            1 => {}
            0 => problems.push(format!("{path}: no oracle")),
            n => problems.push(format!("{path}: {n} oracles")),
        }
    }
    for (p, _) in &checks {
        if !ANALYTIC_PATHS.contains(p) {
            problems.push(format!("{p}: oracle for an unregistered path"));
        }
    }
    problems
}

pub fn softplus_fixture_kind() -> NeuronKind {
    NeuronKind::softplus(3)
}

pub fn kernel_fixture_kind() -> NeuronKind {
    NeuronKind::KernelParticle { dim: 3, bandwidth: 0.8 }
}

/// A random `(θ, x)` pair on the scales used by the experiments.
pub fn random_point(kind: &NeuronKind, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    fn normal(rng: &mut Rng, s: f64) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        s * z
    }
    match *kind {
        NeuronKind::Rbf1d => {
            let theta = vec![normal(rng, 1.0), normal(rng, 1.0), normal(rng, 1.5)];
            (theta, vec![rng.random_range(-3.0..3.0)])
        }
        NeuronKind::SoftplusUnit { input_dim, .. } => {
            let theta: Vec<f64> = (0..input_dim + 2).map(|_| normal(rng, 1.0)).collect();
            let x = (0..input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            (theta, x)
        }
        NeuronKind::KernelParticle { dim, .. } => {
            let theta = (0..dim).map(|_| normal(rng, 1.0)).collect();
            let x = (0..dim).map(|_| normal(rng, 1.0)).collect();
            (theta, x)
        }
    }
}

pub const ORACLE_DRAWS: usize = 100;

fn neuron_grad_check(kind: NeuronKind) -> Result<CheckOutcome> {
    let mut rng = stream(0, &format!("oracle/grad/{}", kind.name()));
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_DRAWS {
        let (theta, x) = random_point(&kind, &mut rng);
        let analytic = neuron_grad(&kind, &theta, &x)?;
        let fd = fd_grad(|t| neuron_eval(&kind, t, &x).unwrap_or(f64::NAN), &theta, &FdSpec::default())?;
        worst = worst.max(relative_error(&analytic, &fd));
    }
    Ok(CheckOutcome::at_most(
        &format!("neuron_grad/{}", kind.name()),
        worst,
        HESS_REL_TOL,
        format!("max rel. error over {ORACLE_DRAWS} draws"),
    ))
}

fn neuron_hess_check(kind: NeuronKind) -> Result<CheckOutcome> {
    let mut rng = stream(0, &format!("oracle/hess/{}", kind.name()));
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_DRAWS {
        let (theta, x) = random_point(&kind, &mut rng);
        let analytic = neuron_hess(&kind, &theta, &x)?;
        let fd = fd_jacobian_sym(|t| neuron_grad(&kind, t, &x).unwrap_or_else(|_| vec![f64::NAN; t.len()]), &theta, &FdSpec::default())?;
        worst = worst.max(relative_error(analytic.as_slice(), fd.as_slice()));
    }
    Ok(CheckOutcome::at_most(
        &format!("neuron_hess/{}", kind.name()),
        worst,
        HESS_REL_TOL,
        format!("max rel. error over {ORACLE_DRAWS} draws"),
    ))
}

/// Three-neuron RBF net on 50 points with targets from a different net.
pub fn small_regression_fixture(seed: u64) -> (NetworkState, Objective) {
    let mut rng = stream(seed, "fixture/regression");
    let xs: Vec<f64> = (0..50).map(|_| rng.random_range(-4.0..4.0)).collect();
    let truth: Vec<(f64, f64, f64)> = vec![(1.1, -0.5, 1.2), (-0.7, 1.4, -0.8), (2.0, 3.0, 0.9)];
    let ys = xs
        .iter()
        .map(|&x| truth.iter().map(|&(a, b, c)| c * (-0.5 * (a * x + b) * (a * x + b)).exp()).sum())
        .collect();
    let obj = Objective::squared_error(Dataset::scalar_regression(&xs, ys).expect("valid data")).expect("valid objective");
    let mut neurons = Vec::new();
    for _ in 0..3 {
        let (theta, _) = random_point(&NeuronKind::Rbf1d, &mut rng);
        neurons.push(theta);
    }
    let net = NetworkState::new(NeuronKind::Rbf1d, neurons, vec![1.0, 0.5, 0.5]).expect("valid net");
    (net, obj)
}

/// Four weighted 2-D particles against a 30-point reference cloud.
pub fn small_mmd_fixture(seed: u64) -> (NetworkState, Objective) {
    let mut rng = stream(seed, "fixture/mmd");
    let mut normal = || -> f64 { <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) };
    let reference: Vec<Vec<f64>> = (0..30).map(|_| vec![normal() + 1.0, 0.5 * normal()]).collect();
    let obj = Objective::mmd(Dataset::particles(reference).expect("valid data"), 0.9).expect("valid objective");
    let particles: Vec<Vec<f64>> = (0..4).map(|_| vec![normal(), normal()]).collect();
    let net = NetworkState::new(obj.particle_kind().expect("mmd kind"), particles, vec![0.4, 0.3, 0.2, 0.1]).expect("valid net");
    (net, obj)
}

fn param_grad_check(mmd: bool) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let configs = 50;
    for seed in 0..configs {
        let (net, obj) = if mmd { small_mmd_fixture(seed) } else { small_regression_fixture(seed) };
        let analytic: Vec<f64> = obj.param_grad(&net)?.into_iter().flatten().collect();
        let fd = fd_grad(|flat| obj.loss(&net.with_flat_params(flat)).unwrap_or(f64::NAN), &net.flat_params(), &FdSpec::default())?;
        worst = worst.max(relative_error(&analytic, &fd));
    }
    let name = if mmd { "param_grad/mmd" } else { "param_grad/squared_error" };
    Ok(CheckOutcome::at_most(name, worst, GRAD_REL_TOL, format!("max rel. error over {configs} configurations")))
}

fn outer_derivs_squared_check() -> Result<CheckOutcome> {
    // Φ(f) = (y - f)² differentiated in f at each data point.
    let (net, obj) = small_regression_fixture(1);
    let ys = obj.data().targets.clone().expect("targets");
    let mut worst = 0.0f64;
    for (x, &y) in obj.data().inputs.iter().zip(&ys) {
        let f0 = net.eval(x);
        let (d1, d2) = obj.outer_derivs(&net, x, Some(y))?;
        let phi = |f: &[f64]| (y - f[0]) * (y - f[0]);
        let g = fd_grad(phi, &[f0], &FdSpec::default())?;
        let h = fd_hessian(phi, &[f0], &FdSpec { step: 1e-3 })?;
        worst = worst.max(relative_error(&[d1, d2], &[g[0], h.get(0, 0)]));
    }
    Ok(CheckOutcome::at_most("outer_derivs/squared_error", worst, GRAD_REL_TOL, "Φ′, Φ″ vs FD in f"))
}

fn outer_derivs_mmd_check() -> Result<CheckOutcome> {
    // Φ′(z) = d/dt MMD(ρ + t δ_z), Φ″(z) = d²/dt², both through the brute-force sum.
    let (net, obj) = small_mmd_fixture(2);
    let NeuronKind::KernelParticle { bandwidth, .. } = net.kind else { unreachable!() };
    let reference = obj.data().inputs.clone();
    let mut rng = stream(2, "oracle/outer_mmd");
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let z = vec![rng.random_range(-2.0..3.0), rng.random_range(-2.0..2.0)];
        let (d1, d2) = obj.outer_derivs(&net, &z, None)?;
        let perturbed = |t: &[f64]| {
            let mut ps = net.neurons.clone();
            let mut ws = net.weights.clone();
            ps.push(z.clone());
            ws.push(t[0]);
            mmd_brute_force(&ps, &ws, &reference, bandwidth)
        };
        let g = fd_grad(perturbed, &[0.0], &FdSpec::default())?;
        let h = fd_hessian(perturbed, &[0.0], &FdSpec { step: 1e-3 })?;
        worst = worst.max(relative_error(&[d1, d2], &[g[0], h.get(0, 0)]));
    }
    Ok(CheckOutcome::at_most("outer_derivs/mmd", worst, GRAD_REL_TOL, "Φ′, Φ″ vs FD of added point mass"))
}

fn splitting_matrix_squared_check() -> Result<CheckOutcome> {
    // w_ℓ · mean Φ′ · FD(∇σ), with Φ′ taken exactly.
    let (net, obj) = small_regression_fixture(3);
    let ys = obj.data().targets.clone().expect("targets");
    let mut worst = 0.0f64;
    for l in 0..net.len() {
        let theta = &net.neurons[l];
        let mut assembled = SymMatrix::zeros(theta.len());
        for (x, &y) in obj.data().inputs.iter().zip(&ys) {
            let (d1, _) = obj.outer_derivs(&net, x, Some(y))?;
            let h = fd_jacobian_sym(|t| neuron_grad(&net.kind, t, x).unwrap_or_else(|_| vec![f64::NAN; 3]), theta, &FdSpec::default())?;
            assembled.add_scaled(net.weights[l] * d1 / ys.len() as f64, &h);
        }
        let s = splitting_matrix(&net, &obj, l)?;
        worst = worst.max(relative_error(s.as_slice(), assembled.as_slice()));
    }
    Ok(CheckOutcome::at_most("splitting_matrix/squared_error", worst, HESS_REL_TOL, "S_ℓ vs FD-assembled E[Φ′∇²σ]"))
}

fn splitting_matrix_mmd_check() -> Result<CheckOutcome> {
    // S_ℓ / w_ℓ is the Hessian of the witness z ↦ Φ′(z) at z = θ_ℓ.
    let (net, obj) = small_mmd_fixture(4);
    let mut worst = 0.0f64;
    for l in 0..net.len() {
        let witness = |z: &[f64]| obj.outer_derivs(&net, z, None).map(|d| d.0).unwrap_or(f64::NAN);
        let h = fd_hessian(witness, &net.neurons[l], &FdSpec { step: 1e-4 })?;
        let s = splitting_matrix(&net, &obj, l)?;
        worst = worst.max(relative_error(s.as_slice(), h.scaled(net.weights[l]).as_slice()));
    }
    Ok(CheckOutcome::at_most("splitting_matrix/mmd", worst, HESS_REL_TOL, "S_ℓ vs w_ℓ · FD Hessian of the witness"))
}

/// `‖H_fd - (blockdiag(S) + T)‖_F / ‖H_fd‖_F` for the full parameter Hessian.
pub fn hessian_decomposition_error(net: &NetworkState, objective: &Objective) -> Result<f64> {
    let d = net.kind.param_dim();
    let n = net.len();
    let mut assembled = objective.gauss_newton_term(net)?;
    for l in 0..n {
        let s = splitting_matrix(net, objective, l)?;
        for i in 0..d {
            for j in i..d {
                let (r, c) = (l * d + i, l * d + j);
                assembled.set(r, c, assembled.get(r, c) + s.get(i, j));
            }
        }
    }
    let grad_fn = |flat: &[f64]| -> Vec<f64> {
        objective
            .param_grad(&net.with_flat_params(flat))
            .map(|g| g.into_iter().flatten().collect())
            .unwrap_or_else(|_| vec![f64::NAN; flat.len()])
    };
    let h_fd = fd_jacobian_sym(grad_fn, &net.flat_params(), &FdSpec::default())?;
    let mut diff = h_fd.clone();
    diff.add_scaled(-1.0, &assembled);
    Ok(diff.frobenius_norm() / h_fd.frobenius_norm())
}

/// `‖H_fd - (blockdiag(S) + T)‖_F / ‖H_fd‖_F` with `H_fd` from second
/// differences of the loss itself (no analytic gradient involved).
pub fn hessian_decomposition_error_from_loss(net: &NetworkState, objective: &Objective) -> Result<f64> {
    let d = net.kind.param_dim();
    let mut assembled = objective.gauss_newton_term(net)?;
    for l in 0..net.len() {
        let s = splitting_matrix(net, objective, l)?;
        for i in 0..d {
            for j in i..d {
                let (r, c) = (l * d + i, l * d + j);
                assembled.set(r, c, assembled.get(r, c) + s.get(i, j));
            }
        }
    }
    let h_fd = fd_hessian(
        |flat| objective.loss(&net.with_flat_params(flat)).unwrap_or(f64::NAN),
        &net.flat_params(),
        &FdSpec { step: 1e-4 },
    )?;
    let mut diff = h_fd.clone();
    diff.add_scaled(-1.0, &assembled);
    Ok(diff.frobenius_norm() / h_fd.frobenius_norm())
}

fn hessian_decomposition_check(mmd: bool) -> Result<CheckOutcome> {
    let (net, obj) = if mmd { small_mmd_fixture(5) } else { small_regression_fixture(5) };
    let err = hessian_decomposition_error_from_loss(&net, &obj)?;
    let name = if mmd { "hessian_decomposition/mmd" } else { "hessian_decomposition/squared_error" };
    Ok(CheckOutcome::at_most(name, err, DECOMPOSITION_REL_TOL, "‖H_fd − (S + T)‖_F / ‖H_fd‖_F"))
}

// ---------------------------------------------------------------------------
// Full verification report

/// Thresholds for the loss-change properties.
pub const MIN_SPLIT_ORDER: f64 = 2.5;
pub const MIN_DESCENT_ORDER: f64 = 1.5;
pub const MAX_PREDICTION_REL_ERR: f64 = 0.10;

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerificationReport {
    pub fn all_pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.pass)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {:<44} measured={:<12.4e} threshold={:<10.3e} {}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold,
                c.detail
            );
        }
        let passed = self.checks.iter().filter(|c| c.pass).count();
        let _ = writeln!(s, "{passed}/{} properties passed", self.checks.len());
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["property", "status", "measured", "threshold", "detail"])?;
        for c in &self.checks {
            out.write_record([
                c.name.as_str(),
                if c.pass { "PASS" } else { "FAIL" },
                &format!("{:.16e}", c.measured),
                &format!("{:.16e}", c.threshold),
                c.detail.as_str(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn record(report: &mut VerificationReport, name: &str, outcome: Result<CheckOutcome>) {
    report.checks.push(outcome.unwrap_or_else(|e| CheckOutcome {
        name: name.to_string(),
        measured: f64::NAN,
        threshold: f64::NAN,
        pass: false,
        detail: format!("error: {e}"),
    }));
}

/// Converged RBF-toy state used by the loss-change checks.
pub fn converged_fixture(seed: u64, neurons: usize) -> Result<(NetworkState, Objective)> {
    let (net, obj, _) = crate::experiment::sweeps::rbf_optimum(seed, neurons)?;
    Ok((net, obj))
}

/// Runs every derivative oracle and loss-change property.
pub fn run_all() -> VerificationReport {
    let mut report = VerificationReport::default();

    let problems = registry_problems();
    report.checks.push(CheckOutcome {
        name: "oracle_registry".into(),
        measured: problems.len() as f64,
        threshold: 0.0,
        pass: problems.is_empty(),
        detail: if problems.is_empty() { "every analytic path has one oracle".into() } else { problems.join("; ") },
    });
    for (name, check) in oracle_checks() {
        record(&mut report, name, check());
    }

    record(&mut report, "fd_self_test/order_fit", order_fit_self_test());

    match converged_fixture(0, 3) {
        Ok((net, obj)) => split_checks(&mut report, &net, &obj),
        Err(e) => record(&mut report, "converged_fixture", Err(e)),
    }
    let (net, obj) = small_regression_fixture(7);
    record(&mut report, "normalized_descent_rate", normalized_descent_fit(&net, &obj, &EPSILON_GRID).map(|f| CheckOutcome::order("normalized_descent_rate", &f, MIN_DESCENT_ORDER)));
    invariant_checks(&mut report);
    report
}

fn order_fit_self_test() -> Result<CheckOutcome> {
    let cubic = order_fit(|e| Ok(e.powi(3)), &EPSILON_GRID)?;
    let quad = order_fit(|e| Ok(e * e), &EPSILON_GRID)?;
    let err = (cubic.slope - 3.0).abs().max((quad.slope - 2.0).abs());
    Ok(CheckOutcome::at_most("fd_self_test/order_fit", err, 1e-2, "synthetic ε² and ε³ slopes"))
}

fn most_negative(cands: &[SplitCandidate]) -> Option<&SplitCandidate> {
    cands.iter().filter(|c| c.splitting_index < 0.0).min_by(|a, b| a.splitting_index.total_cmp(&b.splitting_index))
}

fn split_checks(report: &mut VerificationReport, net: &NetworkState, obj: &Objective) {
    let cands = match splitting_candidates(net, obj) {
        Ok(c) => c,
        Err(e) => return record(report, "splitting_candidates", Err(e)),
    };
    let Some(best) = most_negative(&cands) else {
        return record(report, "optimal_split_order", Err(Error::NotSplittable(cands[0].splitting_index)));
    };

    record(
        report,
        "optimal_split_order",
        split_decomposition_fit(net, obj, best, &EPSILON_GRID).map(|f| CheckOutcome::order("optimal_split_order", &f, MIN_SPLIT_ORDER)),
    );
    record(
        report,
        "optimal_split_magnitude",
        split_prediction_error(net, obj, best, 1e-2).map(|e| CheckOutcome::at_most("optimal_split_magnitude", e, MAX_PREDICTION_REL_ERR, "rel. error of ΔL vs ε²λ_min/2 at ε=1e-2")),
    );
    let mut rng = stream(11, "verify/direction");
    let direction = crate::baselines::random_direction(net.kind.param_dim(), &mut rng);
    record(
        report,
        "split_decomposition_any_direction",
        SplitCandidate::along(net, obj, best.neuron_index, direction)
            .and_then(|c| split_decomposition_fit(net, obj, &c, &EPSILON_GRID))
            .map(|f| CheckOutcome::order("split_decomposition_any_direction", &f, MIN_SPLIT_ORDER)),
    );
    if cands.len() >= 2 {
        record(
            report,
            "split_additivity",
            additivity_fit(net, obj, &cands[..2], &EPSILON_GRID).map(|f| CheckOutcome::order("split_additivity", &f, MIN_SPLIT_ORDER)),
        );
    }
    record(
        report,
        "split_all_negative_rate",
        split_all_negative_fit(net, obj, &EPSILON_GRID).map(|f| CheckOutcome::order("split_all_negative_rate", &f, MIN_SPLIT_ORDER)),
    );
    record(
        report,
        "hessian_decomposition/rbf_optimum",
        hessian_decomposition_error(net, obj).map(|e| CheckOutcome::at_most("hessian_decomposition/rbf_optimum", e, DECOMPOSITION_REL_TOL, "full Hessian vs S + T")),
    );
    record(report, "direction_optimality", direction_optimality(net, obj, best));
}

fn direction_optimality(net: &NetworkState, obj: &Objective, best: &SplitCandidate) -> Result<CheckOutcome> {
    let rows = crate::experiment::sweeps::angle_sweep(net, obj, best.neuron_index, 1e-2, 72, None)?;
    let argmax = crate::experiment::sweeps::argmax_angle(&rows);
    let off = angular_distance_to_axis(argmax);
    Ok(CheckOutcome::at_most("direction_optimality", off, 1e-9, "distance of the best sweep angle from {0, π} (rad)"))
}

/// Distance from `phi` to the nearest of `{0, π, 2π}`.
pub fn angular_distance_to_axis(phi: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let r = phi.rem_euclid(pi);
    r.min(pi - r)
}

/// Split, weight, MMD and permutation invariants.
pub fn invariant_checks(report: &mut VerificationReport) {
    let (net, obj) = small_regression_fixture(8);
    record(report, "split_invariance_eps0", (|| {
        let before = obj.loss(&net)?;
        let mut worst = 0.0f64;
        for c in splitting_candidates(&net, &obj)? {
            let (split, _) = apply_split(&net, &c, 0.0)?;
            worst = worst.max((obj.loss(&split)? - before).abs());
        }
        Ok(CheckOutcome::at_most("split_invariance_eps0", worst, 1e-12, "|ΔL| at ε = 0"))
    })());
    record(report, "weight_conservation", (|| {
        let mut state = net.clone();
        let mut drift = 0.0f64;
        for round in 0..5 {
            let c = splitting_candidates(&state, &obj)?;
            let (next, events) = apply_many(&state, &c[..1], 1e-2, round)?;
            for ev in &events {
                let (a, b) = ev.children;
                drift = drift.max((next.weights[a] + next.weights[b] - state.weights[ev.parent_index]).abs());
            }
            state = next;
        }
        Ok(CheckOutcome::at_most("weight_conservation", drift, 0.0, "max |w_a + w_b − w_parent| over 5 splits"))
    })());
    record(report, "mmd_nonnegative", (|| {
        let mut worst = f64::INFINITY;
        for seed in 0..20 {
            let (n, o) = small_mmd_fixture(seed);
            worst = worst.min(o.loss(&n)?);
        }
        Ok(CheckOutcome::at_least("mmd_nonnegative", worst, -1e-12, "min MMD over 20 configurations"))
    })());
    record(report, "mmd_closed_form_vs_double_sum", (|| {
        let mut worst = 0.0f64;
        for seed in 0..20 {
            let (n, o) = small_mmd_fixture(seed);
            let NeuronKind::KernelParticle { bandwidth, .. } = n.kind else { unreachable!() };
            let brute = mmd_brute_force(&n.neurons, &n.weights, &o.data().inputs, bandwidth);
            worst = worst.max((o.loss(&n)? - brute).abs());
        }
        Ok(CheckOutcome::at_most("mmd_closed_form_vs_double_sum", worst, 1e-10, "max |closed form − double sum|"))
    })());
    record(report, "loss_permutation_invariance", (|| {
        let mut rev = net.clone();
        rev.neurons.reverse();
        rev.weights.reverse();
        let diff = (obj.loss(&net)? - obj.loss(&rev)?).abs();
        Ok(CheckOutcome::at_most("loss_permutation_invariance", diff, 1e-14, "|L(π·net) − L(net)|"))
    })());
}
