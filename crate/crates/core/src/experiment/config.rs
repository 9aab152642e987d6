//! Run configuration: flat `key = value` text with `[section]` headers.
//!
//! Keys inside a section are addressed as `section.key`. Every key that is
//! not given takes an experiment-dependent default, and [`RunConfig::echo`]
//! writes the fully resolved configuration back in the same format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::baselines::InitSpec;
use crate::descent::{ConvergenceSpec, OptimMethod, OptimSpec};
use crate::error::{Error, Result};
use crate::splitting::SplitPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    RbfToy,
    AngleSweep,
    EigenVsGain,
    MmdCompress,
    VerifyAll,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::RbfToy,
        Experiment::AngleSweep,
        Experiment::EigenVsGain,
        Experiment::MmdCompress,
        Experiment::VerifyAll,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::RbfToy => "RBF_TOY",
            Experiment::AngleSweep => "ANGLE_SWEEP",
            Experiment::EigenVsGain => "EIGEN_VS_GAIN",
            Experiment::MmdCompress => "MMD_COMPRESS",
            Experiment::VerifyAll => "VERIFY_ALL",
        }
    }

    pub fn is_mmd(&self) -> bool {
        matches!(self, Experiment::MmdCompress)
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown experiment {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    OptimalSplit,
    RandomSplit,
    NewInit,
    GradientBoost,
    Scratch,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::OptimalSplit,
        Method::RandomSplit,
        Method::NewInit,
        Method::GradientBoost,
        Method::Scratch,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::OptimalSplit => "OPTIMAL_SPLIT",
            Method::RandomSplit => "RANDOM_SPLIT",
            Method::NewInit => "NEW_INIT",
            Method::GradientBoost => "GRADIENT_BOOST",
            Method::Scratch => "SCRATCH",
        }
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Kernel bandwidth for MMD runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise distance of the reference sample.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    /// Training inputs (RBF) or reference points (MMD).
    pub points: usize,
    /// Ground-truth neuron count for the RBF toy.
    pub truth_neurons: usize,
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Network size at which sweeps are taken.
    pub neurons: usize,
    pub angles: usize,
    /// Retraining iterations after each hypothetical split; 0 disables.
    pub retrain_iters: usize,
    /// Extra full-batch iterations used to polish the grown net to an optimum.
    pub polish_iters: usize,
    pub polish_grad_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub method: Method,
    pub initial_neurons: usize,
    pub target_neurons: usize,
    pub policy: SplitPolicy,
    pub optim: OptimSpec,
    pub conv: ConvergenceSpec,
    pub init: InitSpec,
    pub data: DataSpec,
    pub boost_restarts: usize,
    pub sweep: SweepSpec,
    pub output_dir: PathBuf,
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "experiment",
    "seed",
    "method",
    "growth.initial_neurons",
    "growth.target_neurons",
    "split.max_splits",
    "split.threshold",
    "split.epsilon",
    "optim.method",
    "optim.learning_rate",
    "optim.momentum",
    "optim.batch_size",
    "optim.max_iters",
    "optim.seed",
    "convergence.grad_tol",
    "convergence.window",
    "convergence.min_iters",
    "convergence.check_interval",
    "init.distribution",
    "init.a",
    "init.b",
    "data.points",
    "data.truth_neurons",
    "data.bandwidth",
    "boost.restarts",
    "sweep.neurons",
    "sweep.angles",
    "sweep.retrain_iters",
    "sweep.polish_iters",
    "sweep.polish_grad_tol",
    "output.dir",
];

impl RunConfig {
    /// Resolved defaults for an experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let mmd = experiment.is_mmd();
        RunConfig {
            experiment,
            seed: 0,
            method: Method::OptimalSplit,
            initial_neurons: 1,
            target_neurons: if mmd { 5 } else { 8 },
            // the sweep probes the small-step regime, where fourth-order terms
            // cannot move the peak off the eigen axis
            policy: if experiment == Experiment::AngleSweep {
                SplitPolicy { epsilon: 1e-3, ..SplitPolicy::default() }
            } else {
                SplitPolicy::default()
            },
            optim: if mmd { OptimSpec::adagrad(0.01, 20_000) } else { OptimSpec::sgd(0.05, 5_000) },
            conv: ConvergenceSpec::default(),
            init: if mmd {
                InitSpec::Uniform { low: -5.0, high: -3.0 }
            } else {
                InitSpec::Normal { mean: 0.0, std: 3f64.sqrt() }
            },
            data: DataSpec { points: 1000, truth_neurons: 15, bandwidth: Bandwidth::Median },
            boost_restarts: 5,
            sweep: SweepSpec {
                neurons: 7,
                angles: 72,
                retrain_iters: if experiment == Experiment::EigenVsGain { 2000 } else { 0 },
                polish_iters: 50_000,
                polish_grad_tol: 1e-8,
            },
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_pairs(text)?;
        let experiment = match map.get("experiment") {
            Some(v) => v.parse().map_err(|e| Error::config("experiment", e))?,
            None => return Err(Error::config("experiment", "missing required key")),
        };
        let mut cfg = RunConfig::defaults(experiment);
        // `seed` also resets `optim.seed`, so it must go before any explicit
        // `optim.seed`; `init.a`/`init.b` sort before `init.distribution` and
        // carry over into the chosen distribution.
        if let Some(seed) = map.get("seed") {
            cfg.set("seed", seed)?;
        }
        for (key, value) in map.iter().filter(|(k, _)| k.as_str() != "seed") {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| Error::config(key, format!("cannot parse {value:?}: {e}")))
        }
        match key {
            "experiment" => {}
            "seed" => {
                self.seed = num(key, value)?;
                self.optim.seed = self.seed;
            }
            "method" => self.method = value.parse().map_err(|e| Error::config(key, e))?,
            "growth.initial_neurons" => self.initial_neurons = num(key, value)?,
            "growth.target_neurons" => self.target_neurons = num(key, value)?,
            "split.max_splits" => self.policy.max_splits = num(key, value)?,
            "split.threshold" => self.policy.threshold = num(key, value)?,
            "split.epsilon" => self.policy.epsilon = num(key, value)?,
            "optim.method" => {
                self.optim.method = match value.to_ascii_lowercase().as_str() {
                    "sgd" => OptimMethod::Sgd,
                    "sgd_momentum" | "momentum" => OptimMethod::SgdMomentum,
                    "adagrad" => OptimMethod::Adagrad,
                    _ => return Err(Error::config(key, format!("unknown optimizer {value:?}"))),
                }
            }
            "optim.learning_rate" => self.optim.learning_rate = num(key, value)?,
            "optim.momentum" => self.optim.momentum = num(key, value)?,
            "optim.batch_size" => {
                self.optim.batch_size = if value.eq_ignore_ascii_case("full") { None } else { Some(num(key, value)?) }
            }
            "optim.max_iters" => self.optim.max_iters = num(key, value)?,
            "optim.seed" => self.optim.seed = num(key, value)?,
            "convergence.grad_tol" => self.conv.grad_tol = num(key, value)?,
            "convergence.window" => self.conv.window = num(key, value)?,
            "convergence.min_iters" => self.conv.min_iters = num(key, value)?,
            "convergence.check_interval" => self.conv.check_interval = num(key, value)?,
            "init.distribution" => {
                let (a, b) = self.init_params();
                self.init = match value.to_ascii_lowercase().as_str() {
                    "normal" => InitSpec::Normal { mean: a, std: b },
                    "uniform" => InitSpec::Uniform { low: a, high: b },
                    _ => return Err(Error::config(key, format!("unknown distribution {value:?}"))),
                }
            }
            "init.a" | "init.b" => {
                let v: f64 = num(key, value)?;
                let first = key == "init.a";
                match &mut self.init {
                    InitSpec::Normal { mean, std } => *(if first { mean } else { std }) = v,
                    InitSpec::Uniform { low, high } => *(if first { low } else { high }) = v,
                }
            }
            "data.points" => self.data.points = num(key, value)?,
            "data.truth_neurons" => self.data.truth_neurons = num(key, value)?,
            "data.bandwidth" => {
                self.data.bandwidth = if value.eq_ignore_ascii_case("median") {
                    Bandwidth::Median
                } else {
                    Bandwidth::Fixed(num(key, value)?)
                }
            }
            "boost.restarts" => self.boost_restarts = num(key, value)?,
            "sweep.neurons" => self.sweep.neurons = num(key, value)?,
            "sweep.angles" => self.sweep.angles = num(key, value)?,
            "sweep.retrain_iters" => self.sweep.retrain_iters = num(key, value)?,
            "sweep.polish_iters" => self.sweep.polish_iters = num(key, value)?,
            "sweep.polish_grad_tol" => self.sweep.polish_grad_tol = num(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    fn init_params(&self) -> (f64, f64) {
        match self.init {
            InitSpec::Normal { mean, std } => (mean, std),
            InitSpec::Uniform { low, high } => (low, high),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |key: &'static str, r: Result<()>| r.map_err(|e| Error::config(key, e.to_string()));
        wrap("split", self.policy.validate())?;
        wrap("optim", self.optim.validate())?;
        wrap("convergence", self.conv.validate())?;
        if self.initial_neurons == 0 {
            return Err(Error::config("growth.initial_neurons", "must be at least 1"));
        }
        if self.target_neurons < self.initial_neurons {
            return Err(Error::config("growth.target_neurons", "must be >= growth.initial_neurons"));
        }
        if self.data.points == 0 {
            return Err(Error::config("data.points", "must be positive"));
        }
        if !self.experiment.is_mmd() && self.data.truth_neurons == 0 {
            return Err(Error::config("data.truth_neurons", "must be positive"));
        }
        if let Bandwidth::Fixed(h) = self.data.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("data.bandwidth", "must be positive"));
            }
        }
        let (a, b) = self.init_params();
        let ok = match self.init {
            InitSpec::Normal { .. } => a.is_finite() && b > 0.0 && b.is_finite(),
            InitSpec::Uniform { .. } => a.is_finite() && b.is_finite() && a < b,
        };
        if !ok {
            return Err(Error::config("init", "invalid distribution parameters"));
        }
        if self.boost_restarts == 0 {
            return Err(Error::config("boost.restarts", "must be at least 1"));
        }
        if self.sweep.angles < 4 {
            return Err(Error::config("sweep.angles", "must be at least 4"));
        }
        if self.sweep.neurons == 0 {
            return Err(Error::config("sweep.neurons", "must be at least 1"));
        }
        if !(self.sweep.polish_grad_tol > 0.0) {
            return Err(Error::config("sweep.polish_grad_tol", "must be positive"));
        }
        Ok(())
    }

    /// The resolved configuration in the input format. Parsing the echo
    /// yields an equal config.
    pub fn echo(&self) -> String {
        let f = |v: f64| format!("{v:e}");
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "method = {}", self.method.name());
        let _ = writeln!(s, "\n[growth]\ninitial_neurons = {}\ntarget_neurons = {}", self.initial_neurons, self.target_neurons);
        let _ = writeln!(
            s,
            "\n[split]\nmax_splits = {}\nthreshold = {}\nepsilon = {}",
            self.policy.max_splits,
            f(self.policy.threshold),
            f(self.policy.epsilon)
        );
        let method = match self.optim.method {
            OptimMethod::Sgd => "sgd",
            OptimMethod::SgdMomentum => "sgd_momentum",
            OptimMethod::Adagrad => "adagrad",
        };
        let batch = self.optim.batch_size.map_or_else(|| "full".to_string(), |b| b.to_string());
        let _ = writeln!(
            s,
            "\n[optim]\nmethod = {method}\nlearning_rate = {}\nmomentum = {}\nbatch_size = {batch}\nmax_iters = {}\nseed = {}",
            f(self.optim.learning_rate),
            f(self.optim.momentum),
            self.optim.max_iters,
            self.optim.seed
        );
        let _ = writeln!(
            s,
            "\n[convergence]\ngrad_tol = {}\nwindow = {}\nmin_iters = {}\ncheck_interval = {}",
            f(self.conv.grad_tol),
            self.conv.window,
            self.conv.min_iters,
            self.conv.check_interval
        );
        let dist = match self.init {
            InitSpec::Normal { .. } => "normal",
            InitSpec::Uniform { .. } => "uniform",
        };
        let (a, b) = self.init_params();
        let _ = writeln!(s, "\n[init]\ndistribution = {dist}\na = {}\nb = {}", f(a), f(b));
        let bw = match self.data.bandwidth {
            Bandwidth::Median => "median".to_string(),
            Bandwidth::Fixed(h) => f(h),
        };
        let _ = writeln!(
            s,
            "\n[data]\npoints = {}\ntruth_neurons = {}\nbandwidth = {bw}",
            self.data.points, self.data.truth_neurons
        );
        let _ = writeln!(s, "\n[boost]\nrestarts = {}", self.boost_restarts);
        let _ = writeln!(
            s,
            "\n[sweep]\nneurons = {}\nangles = {}\nretrain_iters = {}\npolish_iters = {}\npolish_grad_tol = {}",
            self.sweep.neurons,
            self.sweep.angles,
            self.sweep.retrain_iters,
            self.sweep.polish_iters,
            f(self.sweep.polish_grad_tol)
        );
        let _ = writeln!(s, "\n[output]\ndir = {}", self.output_dir.display());
        s
    }

    /// SHA-256 of [`echo`](Self::echo), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.echo().as_bytes()))
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::config("line", format!("{}: unterminated section header", lineno + 1)))?;
            section = name.trim().to_ascii_lowercase();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config("line", format!("{}: expected key = value", lineno + 1)))?;
        let k = k.trim().to_ascii_lowercase();
        let key = if section.is_empty() { k } else { format!("{section}.{k}") };
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::config(key, "unknown key"));
        }
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::config(key, "duplicate key"));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse("experiment = RBF_TOY\n").unwrap();
        assert_eq!(cfg, RunConfig::defaults(Experiment::RbfToy));
        let mmd = RunConfig::parse("experiment = MMD_COMPRESS\n").unwrap();
        assert_eq!(mmd.optim.method, OptimMethod::Adagrad);
        assert_eq!(mmd.optim.learning_rate, 0.01);
        assert_eq!(mmd.target_neurons, 5);
    }

    #[test]
    fn echo_round_trips() {
        let text = "experiment = mmd_compress\nseed = 3\nmethod = RANDOM_SPLIT\n[optim]\nbatch_size = 64\nlearning_rate = 0.02\n[data]\nbandwidth = 0.7\n[init]\ndistribution = normal\na = 1\nb = 2\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.optim.batch_size, Some(64));
        assert_eq!(cfg.init, InitSpec::Normal { mean: 1.0, std: 2.0 });
        let again = RunConfig::parse(&cfg.echo()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    #[test]
    fn every_key_appears_in_echo() {
        let echo = RunConfig::defaults(Experiment::RbfToy).echo();
        let map = parse_pairs(&echo).unwrap();
        for k in KEYS {
            assert!(map.contains_key(*k), "{k} missing from echo");
        }
    }

    #[test]
    fn errors_name_the_offending_key() {
        let cases = [
            ("experiment = RBF_TOY\nfoo = 1\n", "foo"),
            ("experiment = RBF_TOY\n[split]\nepsilon = abc\n", "split.epsilon"),
            ("experiment = RBF_TOY\nseed = 1\nseed = 2\n", "seed"),
            ("seed = 1\n", "experiment"),
            ("experiment = NOPE\n", "experiment"),
            ("experiment = RBF_TOY\n[growth]\ntarget_neurons = 0\n", "growth.target_neurons"),
            ("experiment = RBF_TOY\n[optim]\nmethod = lbfgs\n", "optim.method"),
        ];
        for (text, key) in cases {
            match RunConfig::parse(text) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn comments_and_case() {
        let cfg = RunConfig::parse("# header\nExperiment = angle_sweep ; trailing\n\n[SPLIT]\nEpsilon = 0.05\n").unwrap();
        assert_eq!(cfg.experiment, Experiment::AngleSweep);
        assert_eq!(cfg.policy.epsilon, 0.05);
    }

    #[test]
    fn hash_changes_with_settings() {
        let a = RunConfig::defaults(Experiment::RbfToy);
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
