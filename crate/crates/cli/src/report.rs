//! Fit reporting: coefficient tables, smooth-term summaries, dependence
//! estimate, baseline curves with pointwise bands, and joint-survival
//! contour grids.

use std::path::Path;

use brbvs_core::margins::PredictorDesign;
use brbvs_core::{FittedModel, ModelDesign};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::errors::AppError;

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 erf polynomial;
/// ~1e-7 absolute accuracy, plenty for reported p-values.
pub fn normal_cdf(z: f64) -> f64 {
    let x = z / std::f64::consts::SQRT_2;
    let (sign, x) = if x < 0.0 { (-1.0, -x) } else { (1.0, x) };
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = sign * (1.0 - poly * (-x * x).exp());
    0.5 * (1.0 + erf)
}

#[derive(Debug, Serialize)]
pub struct CoefRow {
    pub block: String,
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Serialize)]
pub struct SmoothRow {
    pub block: String,
    pub name: String,
    pub edf: f64,
    pub lambda: f64,
}

#[derive(Debug, Serialize)]
pub struct DependenceReport {
    pub theta: f64,
    pub theta_lower: f64,
    pub theta_upper: f64,
    pub tau: f64,
    pub tau_lower: f64,
    pub tau_upper: f64,
}

#[derive(Debug, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub ridge: f64,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub copula: String,
    pub margins: [String; 2],
    pub n: usize,
    pub loglik: f64,
    pub edf: f64,
    pub aic: f64,
    pub bic: f64,
    pub coefficients: Vec<CoefRow>,
    pub smooths: Vec<SmoothRow>,
    pub dependence: Option<DependenceReport>,
    pub convergence: ConvergenceReport,
}

fn coef_names(d: &PredictorDesign, cov_names: &[String]) -> Vec<String> {
    let nb = d.baseline_len();
    let mut names: Vec<String> = (0..nb).map(|k| format!("s(t).r{}", k + 1)).collect();
    if nb == 0 && d.spec.intercept {
        names.push("(intercept)".into());
    }
    for &j in &d.spec.linear_terms {
        names.push(cov_names[j].clone());
    }
    // smooth blocks follow the linear terms; sizes come from the penalty
    // block dimensions (one block per baseline, then one per smooth)
    let smooth_blocks: Vec<usize> = d
        .penalty_blocks()
        .iter()
        .skip(if nb > 0 { 1 } else { 0 })
        .map(|(_, m)| m.nrows())
        .collect();
    for (&(j, _), size) in d.spec.smooth_terms.iter().zip(smooth_blocks) {
        for k in 0..size {
            names.push(format!("s({}).{}", cov_names[j], k + 1));
        }
    }
    debug_assert_eq!(names.len(), d.n_coef());
    names
}

/// Covariance of the estimates: inverse penalized observed information,
/// ridge-repaired when the solve fails.
pub fn covariance(fit: &FittedModel) -> Result<DMatrix<f64>, AppError> {
    let w = fit.delta.len();
    let base = &fit.penalty - &fit.hessian;
    let mut ridge = 0.0;
    loop {
        let a = &base + DMatrix::identity(w, w) * ridge;
        if let Some(chol) = a.cholesky() {
            return Ok(chol.inverse());
        }
        ridge = if ridge == 0.0 { 1e-8 } else { ridge * 10.0 };
        if ridge > 1e8 {
            return Err(AppError::Numeric(
                "penalized information is numerically singular".into(),
            ));
        }
    }
}

pub fn build_report(design: &ModelDesign, fit: &FittedModel, cov_names: &[String]) -> Result<FitReport, AppError> {
    let cov = covariance(fit)?;
    let (o1, o2, o3) = design.offsets();
    let mut coefficients = Vec::new();
    let blocks: Vec<(&str, usize, Option<&PredictorDesign>)> = vec![
        ("eta1", o1, Some(&design.d1)),
        ("eta2", o2, Some(&design.d2)),
        ("eta3", o3, design.d3.as_ref()),
    ];
    for (label, off, d) in &blocks {
        let Some(d) = d else { continue };
        for (k, name) in coef_names(d, cov_names).into_iter().enumerate() {
            let idx = off + k;
            let est = fit.delta[idx];
            let se = cov[(idx, idx)].max(0.0).sqrt();
            let z = if se > 0.0 { est / se } else { f64::NAN };
            coefficients.push(CoefRow {
                block: label.to_string(),
                name,
                estimate: est,
                se,
                z,
                p_value: 2.0 * (1.0 - normal_cdf(z.abs())),
            });
        }
    }

    // per-penalized-block edf: diagonal of (-H+S)^-1 (-H) summed per block
    let a = (&fit.penalty - &fit.hessian)
        .lu()
        .solve(&(-&fit.hessian))
        .ok_or_else(|| AppError::Numeric("edf system is singular".into()))?;
    let mut smooths = Vec::new();
    for (bi, (off, m)) in design.penalty_blocks().iter().enumerate() {
        let edf: f64 = (0..m.nrows()).map(|k| a[(off + k, off + k)]).sum();
        let block = if *off >= o3 {
            "eta3"
        } else if *off >= o2 {
            "eta2"
        } else {
            "eta1"
        };
        smooths.push(SmoothRow {
            block: block.to_string(),
            name: format!("smooth{}", bi + 1),
            edf,
            lambda: fit.lambdas.get(bi).copied().unwrap_or(0.0),
        });
    }

    // dependence summary at the covariate origin
    let dependence = design.d3.as_ref().map(|d3| {
        let x0 = vec![0.0; cov_names.len()];
        let e = d3
            .eval(None, &x0, &fit.delta.as_slice()[o3..])
            .expect("eta3 evaluation");
        let var: f64 = {
            let g = &e.d_eta;
            let mut v = 0.0;
            for (i, gi) in g.iter().enumerate() {
                for (j, gj) in g.iter().enumerate() {
                    v += gi * gj * cov[(o3 + i, o3 + j)];
                }
            }
            v.max(0.0)
        };
        let half = 1.959964 * var.sqrt();
        let theta = brbvs_core::dependence_link(e.eta);
        let tl = brbvs_core::dependence_link(e.eta - half);
        let tu = brbvs_core::dependence_link(e.eta + half);
        let tau = |th: f64| design.copula.kendall_tau(th).unwrap_or(f64::NAN);
        DependenceReport {
            theta,
            theta_lower: tl,
            theta_upper: tu,
            tau: tau(theta),
            tau_lower: tau(tl),
            tau_upper: tau(tu),
        }
    });

    Ok(FitReport {
        copula: design.copula.code().to_string(),
        margins: [design.links.0.code().to_string(), design.links.1.code().to_string()],
        n: fit.n,
        loglik: fit.loglik,
        edf: fit.edf,
        aic: fit.aic,
        bic: fit.bic,
        coefficients,
        smooths,
        dependence,
        convergence: ConvergenceReport {
            converged: fit.converged,
            iterations: fit.iterations,
            grad_norm: fit.grad_norm,
            ridge: fit.ridge,
        },
    })
}

/// Baseline survival curve at the covariate origin with a 95% pointwise
/// band (delta method on the predictor scale, transformed through G).
pub fn write_baseline_curve(
    path: &Path,
    design: &ModelDesign,
    fit: &FittedModel,
    margin: usize,
    x0: &[f64],
    times: &[f64],
) -> Result<(), AppError> {
    let (o1, o2, o3) = design.offsets();
    let (off, end, d, link) = match margin {
        1 => (o1, o2, &design.d1, design.links.0),
        2 => (o2, o3, &design.d2, design.links.1),
        _ => unreachable!(),
    };
    let cov = covariance(fit)?;
    let coefs = &fit.delta.as_slice()[off..end];
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(l, h), &t| (l.min(t), h.max(t)));
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| AppError::Data(format!("cannot write {}: {}", path.display(), e)))?;
    w.write_record(["t", "survival", "lower", "upper"])
        .map_err(|e| AppError::Data(e.to_string()))?;
    let grid = 100;
    for g in 0..=grid {
        let t = lo + (hi - lo) * g as f64 / grid as f64;
        let e = d
            .eval(Some(t), x0, coefs)
            .map_err(|e| AppError::Numeric(e.to_string()))?;
        let mut var = 0.0;
        for (i, gi) in e.d_eta.iter().enumerate() {
            for (j, gj) in e.d_eta.iter().enumerate() {
                var += gi * gj * cov[(off + i, off + j)];
            }
        }
        let half = 1.959964 * var.max(0.0).sqrt();
        let s = link.survival(e.eta);
        // G is decreasing, so the eta band endpoints swap
        let upper = link.survival(e.eta - half);
        let lower = link.survival(e.eta + half);
        w.write_record([
            format!("{}", t),
            format!("{}", s),
            format!("{}", lower),
            format!("{}", upper),
        ])
        .map_err(|e| AppError::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| AppError::io("flushing curve", e))
}

/// Joint survival S(t1, t2 | x0) on a square lattice.
pub fn write_contour_grid(
    path: &Path,
    design: &ModelDesign,
    fit: &FittedModel,
    x0: &[f64],
    t1_range: (f64, f64),
    t2_range: (f64, f64),
    grid: usize,
) -> Result<(), AppError> {
    let (o1, o2, o3) = design.offsets();
    let c1 = &fit.delta.as_slice()[o1..o2];
    let c2 = &fit.delta.as_slice()[o2..o3];
    let theta = match &design.d3 {
        Some(d3) => {
            let e = d3
                .eval(None, x0, &fit.delta.as_slice()[o3..])
                .map_err(|e| AppError::Numeric(e.to_string()))?;
            brbvs_core::dependence_link(e.eta)
        }
        None => 1.0,
    };
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| AppError::Data(format!("cannot write {}: {}", path.display(), e)))?;
    w.write_record(["t1", "t2", "joint_survival"])
        .map_err(|e| AppError::Data(e.to_string()))?;
    for i in 0..=grid {
        let t1 = t1_range.0 + (t1_range.1 - t1_range.0) * i as f64 / grid as f64;
        let e1 = design
            .d1
            .eval(Some(t1), x0, c1)
            .map_err(|e| AppError::Numeric(e.to_string()))?;
        let u = design.links.0.survival(e1.eta);
        for j in 0..=grid {
            let t2 = t2_range.0 + (t2_range.1 - t2_range.0) * j as f64 / grid as f64;
            let e2 = design
                .d2
                .eval(Some(t2), x0, c2)
                .map_err(|e| AppError::Numeric(e.to_string()))?;
            let v = design.links.1.survival(e2.eta);
            let s = design
                .copula
                .cdf(u, v, theta)
                .map_err(|e| AppError::Numeric(e.to_string()))?;
            w.write_record([format!("{}", t1), format!("{}", t2), format!("{}", s)])
                .map_err(|e| AppError::Data(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| AppError::io("flushing contour", e))
}
