//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one `PASS`/`FAIL` line each; exits non-zero if any criterion fails.
//!
//! Positional arguments that parse as integers select criteria, e.g.
//! `cargo test -p splitgrow --test acceptance -- 3 6`.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use splitgrow::experiment::sweeps::{self, angle_sweep, argmax_angle, eigen_vs_gain, most_splittable, pearson, rbf_optimum};
use splitgrow::experiment::{execute, grow, Experiment, Method, RunConfig};
use splitgrow::verify::{self, VerificationReport, EPSILON_GRID};
use splitgrow::{eig_sym, splitting_candidates, splitting_matrix, NeuronKind, Result, SplitCandidate};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (elapsed <= limit, format!("{:.1}s of {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

fn derivative_oracles() -> Result<Verdict> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for (name, check) in verify::oracle_checks() {
        if name.starts_with("neuron_grad/") || name.starts_with("neuron_hess/") {
            worst = worst.max(check()?.measured);
            names.push(name);
        }
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(5));
    Ok(Verdict::new(
        names.len() == 6 && worst <= 1e-5 && fast,
        format!("{} paths x {} draws, max rel err {worst:.2e} (<= 1e-5), {time}", names.len(), verify::ORACLE_DRAWS),
    ))
}

fn hessian_decomposition() -> Result<Verdict> {
    let (net, obj) = verify::small_regression_fixture(0);
    assert_eq!((net.len(), obj.data().len()), (3, 50));
    let err = verify::hessian_decomposition_error_from_loss(&net, &obj)?;
    Ok(Verdict::new(err <= 1e-4, format!("||H_fd - (S+T)||_F / ||H_fd||_F = {err:.2e} (<= 1e-4)")))
}

fn best_candidate(cands: &[SplitCandidate]) -> Option<&SplitCandidate> {
    cands.iter().filter(|c| c.splitting_index < 0.0).min_by(|a, b| a.splitting_index.total_cmp(&b.splitting_index))
}

fn split_order_and_magnitude() -> Result<Verdict> {
    let (net, obj, _) = rbf_optimum(0, 3)?;
    let cands = splitting_candidates(&net, &obj)?;
    let Some(best) = best_candidate(&cands) else {
        return Ok(Verdict::new(false, "no neuron with a negative splitting index at the optimum"));
    };
    let fit = verify::split_decomposition_fit(&net, &obj, best, &EPSILON_GRID)?;
    let rel = verify::split_prediction_error(&net, &obj, best, 1e-2)?;
    Ok(Verdict::new(
        fit.passes(2.5) && rel <= 0.10,
        format!(
            "lambda_min {:.3e}, residual slope {:.3} (>= 2.5, {:?}), rel err at 1e-2 {rel:.2e} (<= 0.10)",
            best.splitting_index, fit.slope, fit.status
        ),
    ))
}

fn additivity() -> Result<Verdict> {
    let (net, obj, _) = rbf_optimum(0, 3)?;
    let cands = splitting_candidates(&net, &obj)?;
    let fit = verify::additivity_fit(&net, &obj, &cands[..2], &EPSILON_GRID)?;
    Ok(Verdict::new(fit.passes(2.5), format!("residual slope {:.3} (>= 2.5, {:?})", fit.slope, fit.status)))
}

fn descent_rate() -> Result<Verdict> {
    let (net, obj) = verify::small_regression_fixture(7);
    let grad = obj.grad_norm(&net)?;
    let fit = verify::normalized_descent_fit(&net, &obj, &EPSILON_GRID)?;
    Ok(Verdict::new(
        grad > 1e-3 && fit.passes(1.5),
        format!("grad norm {grad:.3e}, residual slope {:.3} (>= 1.5, {:?})", fit.slope, fit.status),
    ))
}

fn angle_shape() -> Result<Verdict> {
    let start = Instant::now();
    let (net, obj, cfg) = rbf_optimum(0, 7)?;
    let cands = splitting_candidates(&net, &obj)?;
    let Some(neuron) = most_splittable(&cands) else {
        return Ok(Verdict::new(false, "empty network"));
    };
    let epsilon = cfg.policy.epsilon;
    let rows = angle_sweep(&net, &obj, neuron, epsilon, cfg.sweep.angles, None)?;
    let best = argmax_angle(&rows);
    let max = rows.iter().map(|r| r.gain).fold(f64::NEG_INFINITY, f64::max);
    let quarter = rows[rows.len() / 4].gain;
    // predicted gain -ε²·vᵀSv/2 for each direction
    let pairs = eig_sym(&splitting_matrix(&net, &obj, neuron)?)?;
    let (low, high) = (pairs[0].value, pairs[pairs.len() - 1].value);
    let mut stable_positive = 0;
    let mut worst_shape = 0.0f64;
    for r in &rows {
        let (s, c) = r.angle.sin_cos();
        let quad = c * c * low + s * s * high;
        let predicted = -epsilon * epsilon * quad / 2.0;
        worst_shape = worst_shape.max((r.gain - predicted).abs() / max);
        if quad >= 0.0 && r.gain > 0.0 {
            stable_positive += 1;
        }
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(120));
    let on_axis = verify::angular_distance_to_axis(best) < 1e-9;
    Ok(Verdict::new(
        on_axis && quarter <= 0.25 * max && stable_positive == 0 && worst_shape <= 0.05 && fast,
        format!(
            "neuron {neuron} (lambda {low:.3e}, {high:.3e}), argmax {best:.4} rad, gain(pi/2)/max {:.3} (<= 0.25), {stable_positive} positive gains where v'Sv >= 0, max |gain - predicted|/max {worst_shape:.2e}, {time}",
            quarter / max
        ),
    ))
}

fn eigen_gain_correlation() -> Result<Verdict> {
    let mut values = Vec::new();
    for seed in SEEDS {
        let mut cfg = RunConfig::defaults(Experiment::EigenVsGain);
        cfg.seed = seed;
        cfg.optim.seed = seed;
        let (net, obj) = sweeps::prepare_optimum(&cfg)?;
        let rows = eigen_vs_gain(&net, &obj, cfg.policy.epsilon, sweeps::retrain_for(&cfg).as_ref())?;
        let neg: Vec<f64> = rows.iter().map(|r| -r.lambda_min).collect();
        let gain: Vec<f64> = rows.iter().map(|r| r.gain).collect();
        values.push(pearson(&neg, &gain));
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    Ok(Verdict::new(
        median >= 0.8,
        format!("median pearson {median:.3} (>= 0.8), per seed {}", fmt_list(&values, 3)),
    ))
}

fn fmt_list(values: &[f64], digits: usize) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.digits$}")).collect();
    format!("[{}]", parts.join(", "))
}

const BASELINES: [Method; 4] = [Method::RandomSplit, Method::NewInit, Method::GradientBoost, Method::Scratch];

fn rbf_end_to_end() -> Result<Verdict> {
    let start = Instant::now();
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let mut cfg = RunConfig::defaults(Experiment::RbfToy);
        cfg.seed = seed;
        cfg.optim.seed = seed;
        let mut losses = Vec::new();
        for method in std::iter::once(Method::OptimalSplit).chain(BASELINES) {
            cfg.method = method;
            losses.push(grow(&cfg)?.final_loss());
        }
        if losses[1..].iter().all(|&b| losses[0] <= b) {
            wins += 1;
        }
        lines.push(format!("seed {seed} {}", fmt_list(&losses, 4)));
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(600));
    Ok(Verdict::new(
        wins >= 4 && fast,
        format!(
            "OPTIMAL_SPLIT best in {wins}/5 seeds (>= 4), MSE [optimal, random, new_init, boost, scratch]: {}; {time}",
            lines.join("; ")
        ),
    ))
}

fn mmd_end_to_end() -> Result<Verdict> {
    let start = Instant::now();
    let mut wins = 0;
    let mut worst_brute = 0.0f64;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let mut cfg = RunConfig::defaults(Experiment::MmdCompress);
        cfg.seed = seed;
        cfg.optim.seed = seed;
        let objective = splitgrow::experiment::runner::build_objective(&cfg)?;
        let mut logs = Vec::new();
        for method in [Method::OptimalSplit, Method::RandomSplit] {
            cfg.method = method;
            let out = grow(&cfg)?;
            for snap in &out.snapshots {
                let NeuronKind::KernelParticle { bandwidth, .. } = snap.kind else { unreachable!() };
                let brute = verify::mmd_brute_force(&snap.neurons, &snap.weights, &objective.data().inputs, bandwidth);
                worst_brute = worst_brute.max((objective.loss(snap)? - brute).abs());
            }
            logs.push(out.final_loss().ln());
        }
        if logs[0] < logs[1] {
            wins += 1;
        }
        lines.push(format!("seed {seed} {}", fmt_list(&logs, 4)));
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(300));
    Ok(Verdict::new(
        wins >= 4 && worst_brute <= 1e-10 && fast,
        format!(
            "OPTIMAL_SPLIT below RANDOM_SPLIT in {wins}/5 seeds (>= 4), log-MMD [optimal, random]: {}; closed form vs double sum {worst_brute:.2e} (<= 1e-10); {time}",
            lines.join("; ")
        ),
    ))
}

fn csv_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        files.push((path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path)?));
    }
    files.sort();
    Ok(files)
}

fn invariants_and_determinism() -> Result<Verdict> {
    let start = Instant::now();
    let mut report = VerificationReport::default();
    verify::invariant_checks(&mut report);
    let failing: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();

    let mut identical = true;
    for text in [
        "experiment = RBF_TOY\nseed = 5\n[growth]\ntarget_neurons = 3\n[optim]\nmax_iters = 300\n",
        "experiment = MMD_COMPRESS\nseed = 5\nmethod = RANDOM_SPLIT\n[growth]\ntarget_neurons = 3\n[optim]\nmax_iters = 300\n",
    ] {
        let cfg = RunConfig::parse(text)?;
        let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
        execute(&cfg, a.path())?;
        execute(&cfg, b.path())?;
        identical &= csv_bytes(a.path())? == csv_bytes(b.path())?;
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(60));
    Ok(Verdict::new(
        failing.is_empty() && identical && fast,
        format!(
            "{} invariant checks, failing {:?}, reruns bit-identical: {identical}, {time}",
            report.checks.len(),
            failing
        ),
    ))
}

type Criterion = (u32, &'static str, fn() -> Result<Verdict>);

const CRITERIA: [Criterion; 10] = [
    (1, "derivative oracles", derivative_oracles),
    (2, "hessian decomposition", hessian_decomposition),
    (3, "optimal split order and magnitude", split_order_and_magnitude),
    (4, "simultaneous split additivity", additivity),
    (5, "normalized descent rate", descent_rate),
    (6, "angle sweep shape", angle_shape),
    (7, "eigenvalue vs gain correlation", eigen_gain_correlation),
    (8, "rbf end-to-end ordering", rbf_end_to_end),
    (9, "mmd compression", mmd_end_to_end),
    (10, "invariants and determinism", invariants_and_determinism),
];

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let verdict = run().unwrap_or_else(|e| Verdict::new(false, format!("error: {e}")));
        if !verdict.pass {
            failed += 1;
        }
        println!("{} criterion {id:>2} ({name}): {}", if verdict.pass { "PASS" } else { "FAIL" }, verdict.detail);
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    }
}
