//! CSV emission. Each file opens with a `# config_hash=<sha256>` comment
//! line followed by a header row; floats use 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::model::NetworkState;
use crate::splitting::SplitEvent;

use super::runner::LogRow;
use super::sweeps::{AngleRow, EigenGainRow};

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn open(path: &Path, config_hash: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# config_hash={config_hash}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    Ok(w)
}

pub fn write_run_log(path: &Path, config_hash: &str, rows: &[LogRow]) -> Result<()> {
    let mut w = open(path, config_hash, &["round", "iter", "neuron_count", "loss", "grad_norm", "event"])?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.iter.to_string(),
            r.neuron_count.to_string(),
            float(r.loss),
            float(r.grad_norm),
            r.event.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_splits(path: &Path, config_hash: &str, events: &[SplitEvent]) -> Result<()> {
    let mut w = open(path, config_hash, &["round", "parent", "lambda_min", "epsilon", "child_a", "child_b", "forced"])?;
    for e in events {
        w.write_record([
            e.round.to_string(),
            e.parent_index.to_string(),
            float(e.lambda_min),
            float(e.epsilon),
            e.children.0.to_string(),
            e.children.1.to_string(),
            e.forced.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, config_hash: &str, net: &NetworkState) -> Result<()> {
    let d = net.kind.param_dim();
    let mut header = vec!["index".to_string(), "weight".to_string()];
    header.extend((0..d).map(|k| format!("theta_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut w = open(path, config_hash, &header)?;
    for (i, (theta, wt)) in net.neurons.iter().zip(&net.weights).enumerate() {
        let mut rec = vec![i.to_string(), float(*wt)];
        rec.extend(theta.iter().map(|&v| float(v)));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_angle_sweep(path: &Path, config_hash: &str, neuron: usize, rows: &[AngleRow]) -> Result<()> {
    let mut w = open(path, config_hash, &["neuron", "angle", "loss_decrease"])?;
    for r in rows {
        w.write_record([neuron.to_string(), float(r.angle), float(r.gain)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eigen_gain(path: &Path, config_hash: &str, rows: &[EigenGainRow]) -> Result<()> {
    let mut w = open(path, config_hash, &["neuron", "lambda_min", "gain"])?;
    for r in rows {
        w.write_record([r.neuron.to_string(), float(r.lambda_min), float(r.gain)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn hash_line_then_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.csv");
        let rows = vec![LogRow { round: 0, iter: 0, neuron_count: 1, loss: 0.5, grad_norm: 1.0, event: String::new() }];
        write_run_log(&p, "abc", &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# config_hash=abc"));
        assert_eq!(lines.next(), Some("round,iter,neuron_count,loss,grad_norm,event"));
        assert_eq!(lines.count(), 1);
    }
}
