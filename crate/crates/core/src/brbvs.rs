//! Bootstrap ranking-based variable selection: disjoint subsamples,
//! single-covariate bivariate fits, per-margin rankings, top-set
//! probability estimation, and the ratio rule picking the selected sets.

use std::collections::HashMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::copulas::CopulaFamily;
use crate::dataset::SurvivalDataset;
use crate::fit::{select_smoothing, trust_region_fit, FitError, FittedModel};
use crate::likelihood::{ModelDesign, ModelSpec};
use crate::margins::{PredictorSpec, SurvivalLink};
use crate::measures::{abs_measure, ce_measure, fim_measure, MeasureKind};

/// Smallest subsample a ranking fit will run on.
pub const MIN_FIT_SIZE: usize = 50;

#[derive(Debug, Error)]
pub enum BrbvsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("replicate {b}, subsample {q}: {failed} of {total} covariate fits failed")]
    TooManyFailures { b: usize, q: usize, failed: usize, total: usize },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Likelihood(#[from] crate::likelihood::LikelihoodError),
}

#[derive(Debug, Clone)]
pub struct BRBVSParams {
    pub b: usize,
    pub m: usize,
    pub k_max: usize,
    pub tau: f64,
    pub seed: u64,
    pub copula: CopulaFamily,
    pub links: (SurvivalLink, SurvivalLink),
    pub metric: MeasureKind,
}

impl BRBVSParams {
    pub fn validate(&self, n: usize, p: usize) -> Result<(), BrbvsError> {
        let err = |m: String| Err(BrbvsError::InvalidParams(m));
        if self.b == 0 {
            return err("B must be positive".into());
        }
        if self.m == 0 || self.m > n {
            return err(format!("m={} must be in 1..={}", self.m, n));
        }
        if self.metric != MeasureKind::Ce && self.m < MIN_FIT_SIZE {
            return err(format!("m={} below minimum fit size {}", self.m, MIN_FIT_SIZE));
        }
        if self.k_max == 0 || self.k_max > p {
            return err(format!("k_max={} must be in 1..={}", self.k_max, p));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return err(format!("tau={} must be in (0,1]", self.tau));
        }
        Ok(())
    }
}

/// Ranking of all covariates on one subsample, one ordering per margin,
/// best first.
#[derive(Debug, Clone)]
pub struct RankRecord {
    pub order1: Vec<usize>,
    pub order2: Vec<usize>,
    pub non_converged: usize,
    pub n_fits: usize,
}

/// Most frequent top-k covariate set and its subsample frequency.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TopSet {
    /// sorted covariate indices
    pub set: Vec<usize>,
    pub pi: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BRBVSResult {
    /// per margin, index k-1 holds the best set of size k
    pub top_sets: [Vec<TopSet>; 2],
    pub s_hat: [Vec<usize>; 2],
    /// per margin, per covariate, per rank position: percentage of
    /// subsamples placing that covariate at that position (ranks 1..k_max)
    pub frequency: [Vec<Vec<f64>>; 2],
    pub non_converged: usize,
    pub total_fits: usize,
    /// either selected set hit k_max; a larger k_max is advisable
    pub kmax_warning: bool,
    /// per margin: the best sets are not nested across k
    pub non_nested: [bool; 2],
    pub covariate_names: Vec<String>,
}

/// For each replicate b, r = floor(n/m) disjoint index sets of size m,
/// deterministic in (seed, b) and independent of execution order.
pub fn subsample_plan(
    n: usize,
    m: usize,
    b: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<usize>>>, BrbvsError> {
    if m == 0 || m > n {
        return Err(BrbvsError::InvalidParams(format!("m={} must be in 1..={}", m, n)));
    }
    let r = n / m;
    let mut plan = Vec::with_capacity(b);
    for rep in 0..b {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64 + 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        plan.push((0..r).map(|q| idx[q * m..(q + 1) * m].to_vec()).collect());
    }
    Ok(plan)
}

fn null_spec(params: &BRBVSParams) -> ModelSpec {
    ModelSpec {
        copula: params.copula,
        links: params.links,
        eta1: PredictorSpec::with_baseline(vec![]),
        eta2: PredictorSpec::with_baseline(vec![]),
        eta3: PredictorSpec::intercept_only(),
    }
}

fn single_cov_spec(params: &BRBVSParams, j: usize) -> ModelSpec {
    ModelSpec {
        copula: params.copula,
        links: params.links,
        eta1: PredictorSpec::with_baseline(vec![j]),
        eta2: PredictorSpec::with_baseline(vec![j]),
        eta3: PredictorSpec::intercept_only(),
    }
}

/// Map null-model coefficients into a single-covariate layout, zeroing the
/// two linear slots. Used as a warm start.
fn embed_null_delta(
    null: &ModelDesign,
    null_delta: &[f64],
    target: &ModelDesign,
) -> Vec<f64> {
    let mut out = vec![0.0; target.n_coef()];
    let (n1, n2, n3) = null.offsets();
    let (t1, t2, t3) = target.offsets();
    let b1 = null.d1.baseline_len();
    let b2 = null.d2.baseline_len();
    out[t1..t1 + b1].copy_from_slice(&null_delta[n1..n1 + b1]);
    out[t2..t2 + b2].copy_from_slice(&null_delta[n2..n2 + b2]);
    let tail = null_delta.len() - n3;
    out[t3..t3 + tail].copy_from_slice(&null_delta[n3..]);
    out
}

fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // strict ordering: higher score first, ties toward the lower index
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}

/// Rank every covariate on one subsample. Fit-based metrics fit the
/// single-covariate bivariate model per covariate with the frozen shared
/// smoothing parameters; non-converged fits score zero on both margins.
pub fn rank_one_subsample(
    subsample: &SurvivalDataset,
    params: &BRBVSParams,
    lambdas: &[f64],
    b: usize,
    q: usize,
) -> Result<RankRecord, BrbvsError> {
    let p = subsample.p();
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p];
    let mut failed = 0;
    match params.metric {
        MeasureKind::Ce => {
            let t1 = subsample.observed_times(1);
            let t2 = subsample.observed_times(2);
            for j in 0..p {
                let x: Vec<f64> = subsample.covariates.column(j).iter().copied().collect();
                match (ce_measure(&t1, &x), ce_measure(&t2, &x)) {
                    (Ok(a), Ok(c)) => {
                        s1[j] = a;
                        s2[j] = c;
                    }
                    _ => failed += 1,
                }
            }
        }
        _ => {
            let null_design = ModelDesign::build(&null_spec(params), subsample)?;
            let null_lams = &lambdas[..null_design.n_penalty_blocks()];
            let null_fit = trust_region_fit(&null_design, subsample, null_lams, None)?;
            for j in 0..p {
                let design = ModelDesign::build(&single_cov_spec(params, j), subsample)?;
                let warm = embed_null_delta(&null_design, null_fit.delta.as_slice(), &design);
                let fit = trust_region_fit(&design, subsample, lambdas, Some(&warm))?;
                if fit.converged {
                    let measure = |fit: &FittedModel, margin| match params.metric {
                        MeasureKind::Fim => fim_measure(fit, &design, margin, j),
                        MeasureKind::Abs => abs_measure(fit, &design, margin, j),
                        MeasureKind::Ce => unreachable!(),
                    };
                    s1[j] = measure(&fit, 1).unwrap_or(0.0);
                    s2[j] = measure(&fit, 2).unwrap_or(0.0);
                } else {
                    failed += 1;
                }
            }
        }
    }
    if 2 * failed > p {
        return Err(BrbvsError::TooManyFailures { b, q, failed, total: p });
    }
    Ok(RankRecord {
        order1: descending_order(&s1),
        order2: descending_order(&s2),
        non_converged: failed,
        n_fits: p,
    })
}

/// Most frequent order-free top-k set among the rank records, with its
/// frequency. k = 0 is the empty set with probability one. Frequency ties
/// break toward the lexicographically smallest set.
pub fn estimate_pi(records: &[RankRecord], margin: usize, k: usize) -> TopSet {
    if k == 0 {
        return TopSet { set: vec![], pi: 1.0 };
    }
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for rec in records {
        let order = match margin {
            1 => &rec.order1,
            2 => &rec.order2,
            _ => panic!("margin must be 1 or 2"),
        };
        let mut set: Vec<usize> = order[..k].to_vec();
        set.sort_unstable();
        *counts.entry(set).or_insert(0) += 1;
    }
    let total = records.len() as f64;
    let mut best: Option<(&Vec<usize>, usize)> = None;
    for (set, &c) in &counts {
        best = match best {
            None => Some((set, c)),
            Some((bs, bc)) if c > bc || (c == bc && set < bs) => Some((set, c)),
            keep => keep,
        };
    }
    let (set, c) = best.expect("no rank records");
    TopSet { set: set.clone(), pi: c as f64 / total }
}

/// Ratio rule over pi_sequence = (pi(A_0)=1, pi(A_1), ..., pi(A_kmax)):
/// selected size = argmin_k pi(A_{k+1})^tau / pi(A_k), ties toward the
/// smallest k. Zero probabilities are floored at 1/(2 B r).
pub fn select_s(pi_sequence: &[f64], tau: f64, floor: f64) -> usize {
    let mut best_k = 0;
    let mut best_ratio = f64::INFINITY;
    for k in 0..pi_sequence.len() - 1 {
        let num = pi_sequence[k + 1].max(floor).powf(tau);
        let den = pi_sequence[k].max(floor);
        let ratio = num / den;
        if ratio < best_ratio {
            best_ratio = ratio;
            best_k = k;
        }
    }
    best_k
}

/// The full procedure: shared smoothing selection on the complete data,
/// subsample plan, parallel per-subsample rankings, probability
/// estimation, and the ratio-rule selection for both margins.
pub fn brbvs_run(
    dataset: &SurvivalDataset,
    params: &BRBVSParams,
) -> Result<BRBVSResult, BrbvsError> {
    let (n, p) = (dataset.n(), dataset.p());
    params.validate(n, p)?;
    let plan = subsample_plan(n, params.m, params.b, params.seed)?;
    let r = n / params.m;

    // smoothing selected once on the full data and frozen across all
    // subsample fits; the single-covariate models share its penalty layout
    let lambdas = if params.metric == MeasureKind::Ce {
        vec![]
    } else {
        let null_design = ModelDesign::build(&null_spec(params), dataset)?;
        let (lams, _) = select_smoothing(&null_design, dataset)?;
        lams
    };

    let tasks: Vec<(usize, usize)> = (0..params.b)
        .flat_map(|b| (0..r).map(move |q| (b, q)))
        .collect();
    let records: Vec<RankRecord> = tasks
        .par_iter()
        .map(|&(b, q)| {
            let sub = dataset.subset(&plan[b][q]);
            rank_one_subsample(&sub, params, &lambdas, b, q)
        })
        .collect::<Result<_, _>>()?;

    let floor = 1.0 / (2.0 * (params.b * r) as f64);
    let mut top_sets: [Vec<TopSet>; 2] = [vec![], vec![]];
    let mut s_hat: [Vec<usize>; 2] = [vec![], vec![]];
    let mut non_nested = [false; 2];
    for margin in 1..=2 {
        let sets: Vec<TopSet> = (1..=params.k_max)
            .map(|k| estimate_pi(&records, margin, k))
            .collect();
        let mut pi_seq = vec![1.0];
        pi_seq.extend(sets.iter().map(|t| t.pi));
        let k_hat = select_s(&pi_seq, params.tau, floor);
        s_hat[margin - 1] = if k_hat == 0 { vec![] } else { sets[k_hat - 1].set.clone() };
        non_nested[margin - 1] = sets
            .windows(2)
            .any(|w| !w[0].set.iter().all(|j| w[1].set.contains(j)));
        top_sets[margin - 1] = sets;
    }

    let mut frequency: [Vec<Vec<f64>>; 2] =
        [vec![vec![0.0; params.k_max]; p], vec![vec![0.0; params.k_max]; p]];
    for rec in &records {
        for (margin, order) in [(0, &rec.order1), (1, &rec.order2)] {
            for (pos, &j) in order.iter().take(params.k_max).enumerate() {
                frequency[margin][j][pos] += 100.0 / records.len() as f64;
            }
        }
    }

    let kmax_warning = s_hat.iter().any(|s| s.len() == params.k_max);
    Ok(BRBVSResult {
        top_sets,
        s_hat,
        frequency,
        non_converged: records.iter().map(|r| r.non_converged).sum(),
        total_fits: records.iter().map(|r| r.n_fits).sum(),
        kmax_warning,
        non_nested,
        covariate_names: dataset.covariate_names.clone(),
    })
}
