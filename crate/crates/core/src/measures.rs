//! Covariate-importance measures used for ranking: information-weighted
//! squared coefficient, absolute coefficient, and a rank-based mutual
//! information estimate.

use thiserror::Error;

use crate::fit::{fisher_diag, FittedModel};
use crate::likelihood::ModelDesign;
use crate::numerics::digamma;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Fim,
    Abs,
    Ce,
}

impl MeasureKind {
    pub fn code(&self) -> &'static str {
        match self {
            MeasureKind::Fim => "FIM",
            MeasureKind::Abs => "Abs",
            MeasureKind::Ce => "CE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "FIM" => Some(MeasureKind::Fim),
            "Abs" => Some(MeasureKind::Abs),
            "CE" => Some(MeasureKind::Ce),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("covariate {j} is not a linear term of margin {margin}")]
    NotLinearTerm { margin: usize, j: usize },
    #[error("mutual information needs at least {min} observations, got {n}")]
    TooFewObservations { n: usize, min: usize },
    #[error("more than half of the column values are tied; rank transform degenerate")]
    DegenerateTies,
}

fn coef_index(
    design: &ModelDesign,
    margin: usize,
    j: usize,
) -> Result<usize, MeasureError> {
    let (o1, o2, _) = design.offsets();
    let (off, d) = match margin {
        1 => (o1, &design.d1),
        2 => (o2, &design.d2),
        _ => panic!("margin must be 1 or 2"),
    };
    d.linear_coef_index(j)
        .map(|local| off + local)
        .ok_or(MeasureError::NotLinearTerm { margin, j })
}

/// Squared coefficient weighted by the matching observed-information
/// diagonal entry. Nonnegative by construction.
pub fn fim_measure(
    fit: &FittedModel,
    design: &ModelDesign,
    margin: usize,
    j: usize,
) -> Result<f64, MeasureError> {
    let k = coef_index(design, margin, j)?;
    let beta = fit.delta[k];
    Ok(beta * beta * fisher_diag(fit)[k])
}

/// Absolute value of the estimated coefficient.
pub fn abs_measure(
    fit: &FittedModel,
    design: &ModelDesign,
    margin: usize,
    j: usize,
) -> Result<f64, MeasureError> {
    let k = coef_index(design, margin, j)?;
    Ok(fit.delta[k].abs())
}

/// Average ranks divided by n+1, mapping a column into (0,1).
fn pseudo_observations(x: &[f64]) -> Result<Vec<f64>, MeasureError> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut ties = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        ties += j - i;
        let avg = 0.5 * ((i + 1) + (j + 1)) as f64;
        for k in i..=j {
            ranks[order[k]] = avg / (n as f64 + 1.0);
        }
        i = j + 1;
    }
    if 2 * ties > n {
        return Err(MeasureError::DegenerateTies);
    }
    Ok(ranks)
}

/// Mutual information between two columns via the negated
/// Kozachenko-Leonenko entropy (k=3, Euclidean) of their rank
/// pseudo-observations. Neighbor search runs against the sample plus its
/// mirror reflections across the unit-square edges, which removes the
/// boundary bias the plain estimator has on bounded support.
pub fn ce_measure(times: &[f64], x: &[f64]) -> Result<f64, MeasureError> {
    const K: usize = 3;
    const MIN_N: usize = 50;
    let n = times.len();
    assert_eq!(n, x.len(), "columns must have equal length");
    if n < MIN_N {
        return Err(MeasureError::TooFewObservations { n, min: MIN_N });
    }
    let u = pseudo_observations(times)?;
    let v = pseudo_observations(x)?;
    // 9 tiles: identity plus reflections about u=0, u=1, v=0, v=1
    let reflect = |w: f64, mode: usize| match mode {
        0 => w,
        1 => -w,
        _ => 2.0 - w,
    };
    let mut sum_log_eps = 0.0;
    let mut d2 = vec![0.0f64; 9 * n - 1];
    for i in 0..n {
        let mut m = 0;
        for mu in 0..3 {
            for mv in 0..3 {
                for j in 0..n {
                    if j == i && mu == 0 && mv == 0 {
                        continue;
                    }
                    let du = u[i] - reflect(u[j], mu);
                    let dv = v[i] - reflect(v[j], mv);
                    d2[m] = du * du + dv * dv;
                    m += 1;
                }
            }
        }
        d2.select_nth_unstable_by(K - 1, |a, b| a.partial_cmp(b).unwrap());
        let eps = d2[K - 1].sqrt().max(1e-12);
        sum_log_eps += eps.ln();
    }
    // KL entropy in d=2: psi(n) - psi(k) + ln(pi) + (2/n) sum ln eps_i
    let nf = n as f64;
    let entropy = digamma(nf) - digamma(K as f64)
        + std::f64::consts::PI.ln()
        + 2.0 / nf * sum_log_eps;
    Ok(-entropy)
}
