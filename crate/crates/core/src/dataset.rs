//! In-memory representation of paired censored survival data.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("record {index}: invalid bounds for {kind} status (lower={lower}, upper={upper:?})")]
    InvalidBounds {
        index: usize,
        kind: &'static str,
        lower: f64,
        upper: Option<f64>,
    },
    #[error("covariate matrix has {rows} rows but there are {n} records")]
    ShapeMismatch { rows: usize, n: usize },
}

/// Censoring status of one margin of one record. Left censoring is stored
/// as `Interval(0, r)`: the joint likelihood treats the zero lower bound
/// as survival exactly 1, so no separate variant is needed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CensoringStatus {
    Uncensored(f64),
    /// event known to occur after the stored time (upper bound +inf)
    Right(f64),
    Interval(f64, f64),
}

impl CensoringStatus {
    pub fn left(r: f64) -> Self {
        CensoringStatus::Interval(0.0, r)
    }

    pub fn validate(&self, index: usize) -> Result<(), DatasetError> {
        match *self {
            CensoringStatus::Uncensored(t) if t > 0.0 && t.is_finite() => Ok(()),
            CensoringStatus::Right(l) if l > 0.0 && l.is_finite() => Ok(()),
            CensoringStatus::Interval(l, r) if l >= 0.0 && r > l && r.is_finite() => Ok(()),
            CensoringStatus::Uncensored(t) => Err(DatasetError::InvalidBounds {
                index,
                kind: "uncensored",
                lower: t,
                upper: Some(t),
            }),
            CensoringStatus::Right(l) => Err(DatasetError::InvalidBounds {
                index,
                kind: "right",
                lower: l,
                upper: None,
            }),
            CensoringStatus::Interval(l, r) => Err(DatasetError::InvalidBounds {
                index,
                kind: "interval",
                lower: l,
                upper: Some(r),
            }),
        }
    }

    /// Representative observed time: the event time when known, otherwise
    /// the most informative finite bound.
    pub fn observed_time(&self) -> f64 {
        match *self {
            CensoringStatus::Uncensored(t) => t,
            CensoringStatus::Right(l) => l,
            CensoringStatus::Interval(l, r) => {
                if l > 0.0 {
                    0.5 * (l + r)
                } else {
                    r
                }
            }
        }
    }

    pub fn is_uncensored(&self) -> bool {
        matches!(self, CensoringStatus::Uncensored(_))
    }
}

/// Paired censored survival data with a covariate matrix.
#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    pub status1: Vec<CensoringStatus>,
    pub status2: Vec<CensoringStatus>,
    /// n x p, column j is covariate j
    pub covariates: DMatrix<f64>,
    pub covariate_names: Vec<String>,
}

impl SurvivalDataset {
    pub fn new(
        status1: Vec<CensoringStatus>,
        status2: Vec<CensoringStatus>,
        covariates: DMatrix<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let n = status1.len();
        if status2.len() != n || covariates.nrows() != n {
            return Err(DatasetError::ShapeMismatch {
                rows: covariates.nrows(),
                n,
            });
        }
        for (i, s) in status1.iter().enumerate() {
            s.validate(i)?;
        }
        for (i, s) in status2.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(SurvivalDataset {
            status1,
            status2,
            covariates,
            covariate_names,
        })
    }

    pub fn n(&self) -> usize {
        self.status1.len()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn status(&self, margin: usize) -> &[CensoringStatus] {
        match margin {
            1 => &self.status1,
            2 => &self.status2,
            _ => panic!("margin must be 1 or 2"),
        }
    }

    /// Representative observed times for one margin (knot placement, CE).
    pub fn observed_times(&self, margin: usize) -> Vec<f64> {
        self.status(margin).iter().map(|s| s.observed_time()).collect()
    }

    /// Row subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> SurvivalDataset {
        let p = self.p();
        let mut cov = DMatrix::zeros(indices.len(), p);
        for (r, &i) in indices.iter().enumerate() {
            for c in 0..p {
                cov[(r, c)] = self.covariates[(i, c)];
            }
        }
        SurvivalDataset {
            status1: indices.iter().map(|&i| self.status1[i]).collect(),
            status2: indices.iter().map(|&i| self.status2[i]).collect(),
            covariates: cov,
            covariate_names: self.covariate_names.clone(),
        }
    }

    /// Keep only the covariate columns in `cols` (in that order).
    pub fn select_covariates(&self, cols: &[usize]) -> SurvivalDataset {
        let n = self.n();
        let mut cov = DMatrix::zeros(n, cols.len());
        for (c_new, &c) in cols.iter().enumerate() {
            for r in 0..n {
                cov[(r, c_new)] = self.covariates[(r, c)];
            }
        }
        SurvivalDataset {
            status1: self.status1.clone(),
            status2: self.status2.clone(),
            covariates: cov,
            covariate_names: cols
                .iter()
                .map(|&c| self.covariate_names.get(c).cloned().unwrap_or_default())
                .collect(),
        }
    }
}
