//! `compare`: the same problem and initial point under several algorithms.

use std::path::Path;

use serde::Serialize;

use ggn::solver::IterationRecord;

use crate::config::{load_config, AlgorithmSpec, ExperimentConfig};
use crate::error::CliError;
use crate::run::{num, run_config, RunOutcome};
use crate::worker_limit;

#[derive(Debug, Clone, Serialize)]
pub struct CompareEntry {
    pub algorithm: &'static str,
    pub status: &'static str,
    pub exit_code: i32,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub final_grad_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub entries: Vec<CompareEntry>,
    pub records: Vec<Vec<IterationRecord>>,
    pub csv: String,
}

impl Comparison {
    /// 0 when every run finished without a solver error, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.entries.iter().any(|e| e.exit_code == 3) {
            3
        } else {
            0
        }
    }
}

pub fn parse_algorithms(list: &str) -> Result<Vec<AlgorithmSpec>, CliError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            AlgorithmSpec::parse(s).ok_or_else(|| CliError::config("", format!("unknown algorithm '{}'", s.trim())))
        })
        .collect()
}

pub fn compare_config(cfg: &ExperimentConfig, algorithms: &[AlgorithmSpec]) -> Result<Comparison, CliError> {
    if algorithms.len() < 2 {
        return Err(CliError::config("", "compare needs at least two algorithms"));
    }
    let configs: Vec<ExperimentConfig> = algorithms
        .iter()
        .map(|&a| {
            let mut c = cfg.clone();
            c.solver.algorithm = a;
            c
        })
        .collect();

    // each worker owns its problem instance; results are merged in request order
    let mut outcomes: Vec<Option<Result<RunOutcome, CliError>>> = (0..configs.len()).map(|_| None).collect();
    let workers = worker_limit().min(configs.len()).max(1);
    for (chunk_cfgs, chunk_out) in configs.chunks(workers).zip(outcomes.chunks_mut(workers)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk_cfgs.iter().map(|c| s.spawn(move || run_config(c))).collect();
            for (slot, h) in chunk_out.iter_mut().zip(handles) {
                *slot = Some(
                    h.join()
                        .unwrap_or_else(|_| Err(CliError::Numerical("worker panicked".into()))),
                );
            }
        });
    }

    let mut entries = Vec::new();
    let mut records = Vec::new();
    for o in outcomes {
        let o = o.expect("every slot is filled")?;
        entries.push(CompareEntry {
            algorithm: o.report.algorithm,
            status: o.report.status,
            exit_code: o.exit_code,
            iterations: o.report.iterations,
            final_objective: o.report.final_objective,
            final_grad_norm: o.report.final_grad_norm,
        });
        records.push(o.records);
    }
    let csv = comparison_csv(&entries, &records)?;
    Ok(Comparison { entries, records, csv })
}

/// Columns `iter`, then `<alg>_objective`, `<alg>_gap`, `<alg>_grad_obj_norm`
/// per algorithm; cells past the end of a run are empty.
fn comparison_csv(entries: &[CompareEntry], records: &[Vec<IterationRecord>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["iter".to_string()];
    for e in entries {
        for col in ["objective", "gap", "grad_obj_norm"] {
            header.push(format!("{}_{col}", e.algorithm));
        }
    }
    w.write_record(&header)?;
    let rows = records.iter().map(Vec::len).max().unwrap_or(0);
    for k in 0..rows {
        let mut line = vec![k.to_string()];
        for recs in records {
            match recs.get(k) {
                Some(r) => {
                    line.push(num(r.objective));
                    line.push(r.gap.map(num).unwrap_or_default());
                    line.push(num(r.grad_obj_norm));
                }
                None => line.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(&line)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn compare_path(
    config_path: &Path,
    algorithms: &[AlgorithmSpec],
    out: Option<&Path>,
) -> Result<Comparison, CliError> {
    let cfg = load_config(config_path)?;
    let cmp = compare_config(&cfg, algorithms)?;
    match out {
        Some(p) => std::fs::write(p, &cmp.csv)?,
        None => print!("{}", cmp.csv),
    }
    Ok(cmp)
}
