//! Experiment runner: config, synthetic data, the growth loop, sweeps and
//! CSV output.

pub mod config;
pub mod data;
pub mod output;
pub mod runner;
pub mod sweeps;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::splitting::splitting_candidates;

pub use config::{Bandwidth, Experiment, Method, RunConfig};
pub use data::{gmm_reference, synth_rbf_dataset};
pub use runner::{grow, LogRow, RunOutcome};
pub use sweeps::{angle_sweep, eigen_vs_gain, AngleRow, EigenGainRow};

/// What an experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    /// False only for a verification run with at least one failing property.
    pub passed: bool,
    pub message: String,
}

/// Runs `cfg.experiment`, writing every output into `out_dir`.
///
/// `config.echo` is written before any work starts; growth runs keep their
/// partial logs when descent diverges and then return the error.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<Summary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let hash = cfg.hash();
    let echo_path = out_dir.join("config.echo");
    std::fs::write(&echo_path, cfg.echo())?;
    let mut files = vec![echo_path];
    let mut passed = true;

    let message = match cfg.experiment {
        Experiment::RbfToy | Experiment::MmdCompress => {
            let objective = runner::build_objective(cfg)?;
            let (outcome, err) = runner::grow_partial(cfg, &objective);
            for (name, result) in [
                ("run.csv", output::write_run_log(&out_dir.join("run.csv"), &hash, &outcome.rows)),
                ("splits.csv", output::write_splits(&out_dir.join("splits.csv"), &hash, &outcome.splits)),
                ("final_model.csv", output::write_model(&out_dir.join("final_model.csv"), &hash, &outcome.final_net)),
            ] {
                result?;
                files.push(out_dir.join(name));
            }
            if let Some(e) = err {
                return Err(e);
            }
            format!(
                "{} {} seed {}: {} neurons, final loss {:.6e}",
                cfg.experiment.name(),
                cfg.method.name(),
                cfg.seed,
                outcome.final_net.len(),
                outcome.final_loss()
            )
        }
        Experiment::AngleSweep => {
            let (net, objective) = sweeps::prepare_optimum(cfg)?;
            let cands = splitting_candidates(&net, &objective)?;
            let neuron = sweeps::most_splittable(&cands).ok_or(Error::EmptyDataset)?;
            let retrain = sweeps::retrain_for(cfg);
            let rows = angle_sweep(&net, &objective, neuron, cfg.policy.epsilon, cfg.sweep.angles, retrain.as_ref())?;
            let path = out_dir.join("angle_sweep.csv");
            output::write_angle_sweep(&path, &hash, neuron, &rows)?;
            files.push(path);
            let path = out_dir.join("final_model.csv");
            output::write_model(&path, &hash, &net)?;
            files.push(path);
            format!("angle sweep of neuron {neuron}: best angle {:.6}", sweeps::argmax_angle(&rows))
        }
        Experiment::EigenVsGain => {
            let (net, objective) = sweeps::prepare_optimum(cfg)?;
            let retrain = sweeps::retrain_for(cfg);
            let rows = eigen_vs_gain(&net, &objective, cfg.policy.epsilon, retrain.as_ref())?;
            let path = out_dir.join("eigen_gain.csv");
            output::write_eigen_gain(&path, &hash, &rows)?;
            files.push(path);
            let neg: Vec<f64> = rows.iter().map(|r| -r.lambda_min).collect();
            let gains: Vec<f64> = rows.iter().map(|r| r.gain).collect();
            format!("eigen vs gain over {} neurons: pearson {:.4}", rows.len(), sweeps::pearson(&neg, &gains))
        }
        Experiment::VerifyAll => {
            let report = crate::verify::run_all();
            let text = out_dir.join("verify_report.txt");
            std::fs::write(&text, report.to_text())?;
            let csv_path = out_dir.join("verify_report.csv");
            report.write_csv(std::fs::File::create(&csv_path)?)?;
            files.push(text);
            files.push(csv_path);
            passed = report.all_pass();
            report.to_text()
        }
    };
    Ok(Summary { files, passed, message })
}
