//! The alternating descend/grow loop and its baselines.

use crate::baselines::{gradient_boost_step, new_initialization, random_split, BoostSpec, GrowthWeights};
use crate::descent::{descend, OptimSpec};
use crate::error::{Error, Result};
use crate::loss::{median_bandwidth, Objective};
use crate::model::NetworkState;
use crate::rng::stream;
use crate::splitting::{apply_many, select_splits, splitting_candidates, SplitEvent, SplitPolicy};

use super::config::{Bandwidth, Method, RunConfig};
use super::data::{gmm_reference, synth_rbf_dataset_sized};

/// One row of `run.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub round: usize,
    pub iter: usize,
    pub neuron_count: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub rows: Vec<LogRow>,
    pub splits: Vec<SplitEvent>,
    /// Network at the end of every descent phase, in round order.
    pub snapshots: Vec<NetworkState>,
    pub final_net: NetworkState,
    /// Total optimizer iterations spent.
    pub iterations: usize,
}

impl RunOutcome {
    pub fn final_loss(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.loss)
    }
}

/// Builds the training objective described by the config.
pub fn build_objective(cfg: &RunConfig) -> Result<Objective> {
    if cfg.experiment.is_mmd() {
        let reference = gmm_reference(cfg.seed, cfg.data.points)?;
        let h = match cfg.data.bandwidth {
            Bandwidth::Median => median_bandwidth(&reference.inputs)?,
            Bandwidth::Fixed(h) => h,
        };
        Objective::mmd(reference, h)
    } else {
        let (data, _) = synth_rbf_dataset_sized(cfg.seed, cfg.data.truth_neurons, cfg.data.points)?;
        Objective::squared_error(data)
    }
}

fn growth_weights(objective: &Objective) -> GrowthWeights {
    if objective.particle_kind().is_some() {
        GrowthWeights::Uniform
    } else {
        GrowthWeights::Unit
    }
}

/// `count` neurons drawn in order from the run's init stream, so every
/// method starts from the same first neuron(s).
pub fn initial_network(cfg: &RunConfig, objective: &Objective, count: usize) -> Result<NetworkState> {
    let kind = objective.particle_kind().unwrap_or(crate::model::NeuronKind::Rbf1d);
    let mut rng = stream(cfg.seed, "init/network");
    let neurons = (0..count)
        .map(|_| cfg.init.draw(kind.param_dim(), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    match growth_weights(objective) {
        GrowthWeights::Uniform => NetworkState::uniform_weights(kind, neurons),
        GrowthWeights::Unit => NetworkState::unit_weights(kind, neurons),
    }
}

/// Runs the configured growth method in memory.
pub fn grow(cfg: &RunConfig) -> Result<RunOutcome> {
    let objective = build_objective(cfg)?;
    let mut log = Log::default();
    let net = grow_into(cfg, &objective, &mut log)?;
    Ok(log.finish(net))
}

/// Like [`grow`], but on failure still hands back whatever was logged.
pub fn grow_partial(cfg: &RunConfig, objective: &Objective) -> (RunOutcome, Option<Error>) {
    let mut log = Log::default();
    match grow_into(cfg, objective, &mut log) {
        Ok(net) => (log.finish(net), None),
        Err(e) => {
            let last = match &e {
                Error::Diverged { last_finite, .. } => (**last_finite).clone(),
                _ => log.snapshots.last().cloned().unwrap_or_else(|| empty_like(objective)),
            };
            (log.finish(last), Some(e))
        }
    }
}

fn empty_like(objective: &Objective) -> NetworkState {
    NetworkState {
        kind: objective.particle_kind().unwrap_or(crate::model::NeuronKind::Rbf1d),
        neurons: vec![],
        weights: vec![],
    }
}

#[derive(Default)]
struct Log {
    rows: Vec<LogRow>,
    splits: Vec<SplitEvent>,
    snapshots: Vec<NetworkState>,
    iterations: usize,
}

impl Log {
    fn finish(self, final_net: NetworkState) -> RunOutcome {
        RunOutcome {
            rows: self.rows,
            splits: self.splits,
            snapshots: self.snapshots,
            final_net,
            iterations: self.iterations,
        }
    }

    fn descend_phase(&mut self, round: usize, net: &NetworkState, objective: &Objective, optim: &OptimSpec, cfg: &RunConfig) -> Result<NetworkState> {
        let phase_optim = OptimSpec {
            seed: optim.seed.wrapping_add(round as u64),
            ..*optim
        };
        let out = descend(net, objective, &phase_optim, &cfg.conv)?;
        for t in &out.trace {
            self.rows.push(LogRow {
                round,
                iter: self.iterations + t.iter,
                neuron_count: net.len(),
                loss: t.loss,
                grad_norm: t.grad_norm,
                event: String::new(),
            });
        }
        self.iterations += out.iterations;
        self.snapshots.push(out.net.clone());
        Ok(out.net)
    }

    fn growth_row(&mut self, round: usize, net: &NetworkState, objective: &Objective, event: String) -> Result<()> {
        self.rows.push(LogRow {
            round,
            iter: self.iterations,
            neuron_count: net.len(),
            loss: objective.loss(net)?,
            grad_norm: objective.grad_norm(net)?,
            event,
        });
        Ok(())
    }
}

fn split_label(e: &SplitEvent) -> String {
    format!("split parent={} lambda_min={:.6e}{}", e.parent_index, e.lambda_min, if e.forced { " forced" } else { "" })
}

/// Optimal split with a fallback: when no neuron passes the threshold but
/// the network is still below target, the neuron with the smallest
/// splitting index is split anyway and the event is marked `forced`.
pub fn optimal_split_step(net: &NetworkState, objective: &Objective, policy: &SplitPolicy, room: usize, round: usize) -> Result<(NetworkState, Vec<SplitEvent>)> {
    let capped = SplitPolicy {
        max_splits: policy.max_splits.min(room),
        ..*policy
    };
    let candidates = splitting_candidates(net, objective)?;
    let selected = select_splits(&candidates, &capped);
    if !selected.is_empty() {
        return apply_many(net, &selected, policy.epsilon, round);
    }
    let best = candidates
        .iter()
        .min_by(|a, b| a.splitting_index.total_cmp(&b.splitting_index).then(a.neuron_index.cmp(&b.neuron_index)))
        .ok_or_else(|| Error::InvalidArgument("cannot split an empty network".into()))?;
    let (next, mut events) = apply_many(net, std::slice::from_ref(best), policy.epsilon, round)?;
    events.iter_mut().for_each(|e| e.forced = true);
    Ok((next, events))
}

fn grow_into(cfg: &RunConfig, objective: &Objective, log: &mut Log) -> Result<NetworkState> {
    cfg.validate()?;
    if cfg.method == Method::Scratch {
        let phases = cfg.target_neurons - cfg.initial_neurons + 1;
        let net = initial_network(cfg, objective, cfg.target_neurons)?;
        let optim = cfg.optim.with_max_iters(cfg.optim.max_iters * phases);
        return log.descend_phase(0, &net, objective, &optim, cfg);
    }

    let mut net = initial_network(cfg, objective, cfg.initial_neurons)?;
    let mut rng = stream(cfg.seed, &format!("growth/{}", cfg.method.name()));
    let boost = BoostSpec {
        init: cfg.init,
        weights: growth_weights(objective),
        optim: cfg.optim,
        conv: cfg.conv,
        restarts: cfg.boost_restarts,
    };
    let mut round = 0;
    loop {
        // Gradient boosting never revisits old neurons after the first phase.
        if round == 0 || cfg.method != Method::GradientBoost {
            net = log.descend_phase(round, &net, objective, &cfg.optim, cfg)?;
        } else {
            log.snapshots.push(net.clone());
        }
        if net.len() >= cfg.target_neurons {
            return Ok(net);
        }
        round += 1;
        match cfg.method {
            Method::OptimalSplit => {
                let (next, events) = optimal_split_step(&net, objective, &cfg.policy, cfg.target_neurons - net.len(), round)?;
                net = next;
                let label = events.iter().map(split_label).collect::<Vec<_>>().join("; ");
                log.splits.extend(events);
                log.growth_row(round, &net, objective, label)?;
            }
            Method::RandomSplit => {
                let (next, mut event) = random_split(&net, objective, cfg.policy.epsilon, &mut rng)?;
                event.round = round;
                net = next;
                let label = format!("random {}", split_label(&event));
                log.splits.push(event);
                log.growth_row(round, &net, objective, label)?;
            }
            Method::NewInit => {
                net = new_initialization(&net, &cfg.init, growth_weights(objective), &mut rng)?;
                log.growth_row(round, &net, objective, "new_init".into())?;
            }
            Method::GradientBoost => {
                let mut spec = boost;
                spec.optim.seed = cfg.optim.seed.wrapping_add(round as u64);
                net = gradient_boost_step(&net, objective, &spec, &mut rng)?;
                log.iterations += cfg.boost_restarts * cfg.optim.max_iters;
                log.growth_row(round, &net, objective, "boost".into())?;
            }
            Method::Scratch => unreachable!("handled above"),
        }
        // Offspring of an amplitude-carrying neuron train at the parent's
        // gradient scale once their half weights move into the amplitude.
        if let Some(folded) = net.fold_weights() {
            net = folded;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::Experiment;

    fn quick(method: Method, experiment: Experiment) -> RunConfig {
        let mut cfg = RunConfig::defaults(experiment);
        cfg.method = method;
        cfg.target_neurons = 3;
        cfg.data.points = 200;
        cfg.optim.max_iters = 400;
        cfg.boost_restarts = 2;
        cfg
    }

    #[test]
    fn every_method_reaches_target() {
        for exp in [Experiment::RbfToy, Experiment::MmdCompress] {
            for m in Method::ALL {
                let out = grow(&quick(m, exp)).unwrap();
                assert_eq!(out.final_net.len(), 3, "{exp:?} {m:?}");
                let expected = if exp.is_mmd() { 1.0 } else { 3.0 };
                assert!((out.final_net.total_weight() - expected).abs() < 1e-12, "{exp:?} {m:?}");
                assert!(out.rows.windows(2).all(|w| (w[0].round, w[0].iter) <= (w[1].round, w[1].iter)), "{exp:?} {m:?}");
            }
        }
    }

    #[test]
    fn splits_conserve_weight() {
        let out = grow(&quick(Method::OptimalSplit, Experiment::MmdCompress)).unwrap();
        assert_eq!(out.final_net.total_weight(), 1.0);
        assert_eq!(out.splits.len(), 2);
        assert_eq!(out.snapshots.len(), 3);
    }

    #[test]
    fn methods_share_the_first_neuron() {
        let a = grow(&quick(Method::OptimalSplit, Experiment::MmdCompress)).unwrap();
        let b = grow(&quick(Method::NewInit, Experiment::MmdCompress)).unwrap();
        assert_eq!(a.snapshots[0], b.snapshots[0]);
    }

    #[test]
    fn rerun_is_bit_identical() {
        let cfg = quick(Method::RandomSplit, Experiment::RbfToy);
        assert_eq!(grow(&cfg).unwrap(), grow(&cfg).unwrap());
    }

    #[test]
    fn forced_split_when_stable() {
        // A single bump fitted exactly has a zero splitting matrix.
        let net = NetworkState::unit_weights(crate::model::NeuronKind::Rbf1d, vec![vec![1.0, 0.0, 1.0]]).unwrap();
        let xs: Vec<f64> = (0..21).map(|i| -2.0 + 0.2 * i as f64).collect();
        let ys = xs.iter().map(|&x| net.eval(&[x])).collect();
        let obj = Objective::squared_error(crate::model::Dataset::scalar_regression(&xs, ys).unwrap()).unwrap();
        let (next, events) = optimal_split_step(&net, &obj, &SplitPolicy::default(), 1, 1).unwrap();
        assert_eq!(next.len(), 2);
        assert!(events[0].forced);
    }

    #[test]
    fn divergence_keeps_partial_log() {
        let mut cfg = quick(Method::OptimalSplit, Experiment::RbfToy);
        cfg.optim.learning_rate = 1e300;
        let obj = build_objective(&cfg).unwrap();
        let (out, err) = grow_partial(&cfg, &obj);
        assert!(matches!(err, Some(Error::Diverged { .. })));
        assert!(out.final_net.neurons.iter().flatten().all(|v| v.is_finite()));
    }
}
