//! Monte Carlo benchmark harness: repeated simulate + select runs scored
//! against the known informative covariate sets.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::brbvs::{brbvs_run, BRBVSParams};
use crate::simulate::{calibrate_censoring, simulate_scenario_with_bounds, ScenarioConfig, SimError};

/// Informative sets of the generator: margin 1 depends on covariates
/// {x1, x2}, margin 2 on {x1, x2, x3} (0-based indices).
pub const S_TRUE: [&[usize]; 2] = [&[0, 1], &[0, 1, 2]];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("all {0} replicates failed")]
    AllReplicatesFailed(usize),
}

/// Aggregated selection quality for one margin.
#[derive(Debug, Clone, Serialize)]
pub struct MarginMetrics {
    pub fp_raw: f64,
    pub fn_raw: f64,
    pub fp_norm: f64,
    pub fn_norm: f64,
    pub mean_size: f64,
    pub mean_hits: f64,
    /// distinct selected sets with their percentage of replicates
    pub set_frequency: Vec<(Vec<usize>, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchMetrics {
    pub margins: [MarginMetrics; 2],
    pub n_rep: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateLog {
    pub rep: usize,
    pub s_hat: Option<[Vec<usize>; 2]>,
    pub error: Option<String>,
}

/// Average FP/FN/size/hit counts of the selected sets against the truth.
/// FP and FN are reported raw and normalized by k_max and k_max - 2.
pub fn score_selection(
    selections: &[[Vec<usize>; 2]],
    k_max: usize,
) -> BenchMetrics {
    assert!(!selections.is_empty(), "need at least one replicate");
    let n_rep = selections.len() as f64;
    let margins = [0, 1].map(|m| {
        let truth = S_TRUE[m];
        let mut size = 0.0;
        let mut hits = 0.0;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for sel in selections {
            let s = &sel[m];
            size += s.len() as f64;
            hits += s.iter().filter(|j| truth.contains(j)).count() as f64;
            let mut key = s.clone();
            key.sort_unstable();
            *counts.entry(key).or_insert(0) += 1;
        }
        let mean_size = size / n_rep;
        let mean_hits = hits / n_rep;
        let fp_raw = mean_size - mean_hits;
        let fn_raw = truth.len() as f64 - mean_hits;
        let mut set_frequency: Vec<(Vec<usize>, f64)> = counts
            .into_iter()
            .map(|(set, c)| (set, 100.0 * c as f64 / n_rep))
            .collect();
        set_frequency.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        MarginMetrics {
            fp_raw,
            fn_raw,
            fp_norm: fp_raw / k_max as f64,
            fn_norm: fn_raw / (k_max as f64 - 2.0),
            mean_size,
            mean_hits,
            set_frequency,
        }
    });
    BenchMetrics { margins, n_rep: selections.len(), failures: 0 }
}

/// Run n_rep full simulate + select replicates. Censoring bounds are
/// calibrated once; each replicate reseeds the generator and the selection
/// deterministically from the base seeds. Replicate failures are logged
/// and skipped, not fatal.
pub fn run_benchmark(
    config: &ScenarioConfig,
    params: &BRBVSParams,
    n_rep: usize,
) -> Result<(BenchMetrics, Vec<ReplicateLog>), BenchError> {
    config.validate()?;
    let bounds = calibrate_censoring(config)?;
    let mut selections: Vec<[Vec<usize>; 2]> = Vec::new();
    let mut logs = Vec::with_capacity(n_rep);
    for rep in 0..n_rep {
        let mut rep_config = config.clone();
        rep_config.seed = config.seed.wrapping_add(1 + rep as u64);
        let mut rep_params = params.clone();
        rep_params.seed = params.seed.wrapping_add(1 + rep as u64);
        let outcome: Result<_, String> = simulate_scenario_with_bounds(&rep_config, bounds)
            .map_err(|e| e.to_string())
            .and_then(|(ds, _)| brbvs_run(&ds, &rep_params).map_err(|e| e.to_string()));
        match outcome {
            Ok(res) => {
                let s_hat = [res.s_hat[0].clone(), res.s_hat[1].clone()];
                selections.push(s_hat.clone());
                logs.push(ReplicateLog { rep, s_hat: Some(s_hat), error: None });
            }
            Err(e) => {
                logs.push(ReplicateLog { rep, s_hat: None, error: Some(e) });
            }
        }
    }
    if selections.is_empty() {
        return Err(BenchError::AllReplicatesFailed(n_rep));
    }
    let mut metrics = score_selection(&selections, params.k_max);
    metrics.n_rep = n_rep;
    metrics.failures = n_rep - selections.len();
    Ok((metrics, logs))
}
