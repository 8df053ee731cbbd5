//! Joint log-likelihood for bivariate copula survival models under mixed
//! censoring, with an analytic gradient and the quadratic smoothing
//! penalty.
//!
//! Each record contributes one of four terms depending on the censoring
//! pattern of its two margins:
//! - both uncensored: copula density times both marginal densities;
//! - both censored: four-corner rectangle probability of the joint CDF;
//! - one uncensored, one censored: time derivative of an h-function
//!   difference times the uncensored marginal density.
//!
//! A right-censored bound uses survival exactly 0 for its upper corner and
//! a zero lower bound (left censoring) uses survival exactly 1, so those
//! corners carry no parameter dependence and no spline extrapolation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::copulas::{dependence_link, dependence_link_deriv, CopulaError, CopulaFamily};
use crate::dataset::{CensoringStatus, DatasetError, SurvivalDataset};
use crate::margins::{
    EtaEval, MarginError, PredictorDesign, PredictorSpec, SurvivalLink, TimeDesign,
};

/// Floor for probabilities and density factors before taking logs.
const LOG_FLOOR: f64 = 1e-300;
/// Interior clamp for survival values entering the copula.
const SURV_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LikelihoodError {
    #[error("record {0}: non-finite log-likelihood contribution")]
    NonFinite(usize),
    #[error("negative smoothing parameter {0}")]
    NegativeLambda(f64),
    #[error("{got} smoothing parameters supplied, model has {expected} penalized blocks")]
    LambdaCount { got: usize, expected: usize },
    #[error("eta3 must not contain a baseline of time")]
    BaselineInEta3,
    #[error(transparent)]
    Margin(#[from] MarginError),
    #[error(transparent)]
    Copula(#[from] CopulaError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Declarative model: copula family, the two survival links, and the three
/// additive predictors.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub copula: CopulaFamily,
    pub links: (SurvivalLink, SurvivalLink),
    pub eta1: PredictorSpec,
    pub eta2: PredictorSpec,
    pub eta3: PredictorSpec,
}

/// Model compiled against a dataset: bases built, coefficient layout fixed
/// as [eta1 | eta2 | eta3]. The eta3 block is empty for the independence
/// copula, which has no dependence parameter.
#[derive(Debug, Clone)]
pub struct ModelDesign {
    pub copula: CopulaFamily,
    pub links: (SurvivalLink, SurvivalLink),
    pub d1: PredictorDesign,
    pub d2: PredictorDesign,
    pub d3: Option<PredictorDesign>,
}

impl ModelDesign {
    pub fn build(spec: &ModelSpec, dataset: &SurvivalDataset) -> Result<Self, LikelihoodError> {
        if spec.eta3.baseline.is_some() {
            return Err(LikelihoodError::BaselineInEta3);
        }
        let x = dataset.covariates.as_view();
        let t1 = dataset.observed_times(1);
        let t2 = dataset.observed_times(2);
        let d1 = PredictorDesign::build(spec.eta1.clone(), Some(&t1), x)?;
        let d2 = PredictorDesign::build(spec.eta2.clone(), Some(&t2), x)?;
        let d3 = if spec.copula.has_theta() {
            Some(PredictorDesign::build(spec.eta3.clone(), None, x)?)
        } else {
            None
        };
        Ok(ModelDesign {
            copula: spec.copula,
            links: spec.links,
            d1,
            d2,
            d3,
        })
    }

    pub fn n_coef(&self) -> usize {
        self.d1.n_coef() + self.d2.n_coef() + self.d3.as_ref().map_or(0, |d| d.n_coef())
    }

    /// Start offsets of the three coefficient blocks.
    pub fn offsets(&self) -> (usize, usize, usize) {
        let o2 = self.d1.n_coef();
        (0, o2, o2 + self.d2.n_coef())
    }

    /// Penalized blocks with global offsets, eta1 first, then eta2, eta3.
    pub fn penalty_blocks(&self) -> Vec<(usize, DMatrix<f64>)> {
        let (o1, o2, o3) = self.offsets();
        let mut out = Vec::new();
        for (off, m) in self.d1.penalty_blocks() {
            out.push((o1 + off, m));
        }
        for (off, m) in self.d2.penalty_blocks() {
            out.push((o2 + off, m));
        }
        if let Some(d3) = &self.d3 {
            for (off, m) in d3.penalty_blocks() {
                out.push((o3 + off, m));
            }
        }
        out
    }

    pub fn n_penalty_blocks(&self) -> usize {
        self.penalty_blocks().len()
    }

    /// Block-diagonal S with one lambda per penalized block.
    pub fn penalty_matrix(&self, lambdas: &[f64]) -> Result<DMatrix<f64>, LikelihoodError> {
        let blocks = self.penalty_blocks();
        if lambdas.len() != blocks.len() {
            return Err(LikelihoodError::LambdaCount {
                got: lambdas.len(),
                expected: blocks.len(),
            });
        }
        let w = self.n_coef();
        let mut s = DMatrix::zeros(w, w);
        for ((off, m), &lam) in blocks.iter().zip(lambdas) {
            if lam < 0.0 {
                return Err(LikelihoodError::NegativeLambda(lam));
            }
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    s[(off + r, off + c)] += lam * m[(r, c)];
                }
            }
        }
        Ok(s)
    }
}

/// One corner of a censoring rectangle, before coefficient evaluation.
#[derive(Debug, Clone)]
enum PrepCorner {
    /// survival exactly 0: upper bound of a right-censored margin
    Zero,
    /// survival exactly 1: zero lower bound (left censoring)
    One,
    At(Option<TimeDesign>),
}

#[derive(Debug, Clone)]
enum PrepKind {
    Unc(Option<TimeDesign>),
    Cens { low: PrepCorner, high: PrepCorner },
}

#[derive(Debug, Clone)]
struct PreparedMargin {
    xd: Vec<f64>,
    kind: PrepKind,
}

#[derive(Debug, Clone)]
struct PreparedRecord {
    m1: PreparedMargin,
    m2: PreparedMargin,
    x3: Vec<f64>,
}

/// Coefficient-independent per-record basis data, computed once per fit.
#[derive(Debug, Clone)]
pub struct Prepared {
    records: Vec<PreparedRecord>,
}

impl Prepared {
    pub fn n(&self) -> usize {
        self.records.len()
    }
}

fn prepare_margin(
    design: &PredictorDesign,
    status: &CensoringStatus,
    x_row: &[f64],
) -> PreparedMargin {
    let xd = design.x_design(x_row);
    let kind = match *status {
        CensoringStatus::Uncensored(t) => PrepKind::Unc(design.time_design(t)),
        CensoringStatus::Right(l) => PrepKind::Cens {
            low: PrepCorner::At(design.time_design(l)),
            high: PrepCorner::Zero,
        },
        CensoringStatus::Interval(l, r) => PrepKind::Cens {
            low: if l > 0.0 {
                PrepCorner::At(design.time_design(l))
            } else {
                PrepCorner::One
            },
            high: PrepCorner::At(design.time_design(r)),
        },
    };
    PreparedMargin { xd, kind }
}

/// Precompute all basis evaluations for a fit on this dataset.
pub fn prepare(design: &ModelDesign, dataset: &SurvivalDataset) -> Prepared {
    let n = dataset.n();
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let x_row: Vec<f64> = dataset.covariates.row(i).iter().copied().collect();
        records.push(PreparedRecord {
            m1: prepare_margin(&design.d1, &dataset.status1[i], &x_row),
            m2: prepare_margin(&design.d2, &dataset.status2[i], &x_row),
            x3: design.d3.as_ref().map_or_else(Vec::new, |d| d.x_design(&x_row)),
        });
    }
    Prepared { records }
}

/// One evaluated predictor point: survival value (clamped for the copula)
/// and the link derivatives needed by the chain rule.
struct PointEval {
    eta: EtaEval,
    s: f64,
    gp: f64,
    gpp: f64,
    /// d(clamped survival)/d(eta): equals gp away from the clamp and 0
    /// where the clamp is active, keeping the gradient consistent with
    /// the likelihood actually evaluated
    ds_deta: f64,
}

fn eval_point(
    design: &PredictorDesign,
    link: SurvivalLink,
    td: Option<&TimeDesign>,
    xd: &[f64],
    delta: &[f64],
) -> Result<PointEval, LikelihoodError> {
    let eta = design.eval_with(td, xd, delta)?;
    let raw = link.survival(eta.eta);
    let s = raw.clamp(SURV_EPS, 1.0 - SURV_EPS);
    let gp = link.dsurv(eta.eta);
    let gpp = link.d2surv(eta.eta);
    let ds_deta = if s == raw { gp } else { 0.0 };
    Ok(PointEval { eta, s, gp, gpp, ds_deta })
}

enum CornerEval {
    Zero,
    One,
    Val(PointEval),
}

impl CornerEval {
    fn from_prep(
        design: &PredictorDesign,
        link: SurvivalLink,
        corner: &PrepCorner,
        xd: &[f64],
        delta: &[f64],
    ) -> Result<Self, LikelihoodError> {
        Ok(match corner {
            PrepCorner::Zero => CornerEval::Zero,
            PrepCorner::One => CornerEval::One,
            PrepCorner::At(td) => {
                CornerEval::Val(eval_point(design, link, td.as_ref(), xd, delta)?)
            }
        })
    }
}

/// (C, dC/du, dC/dv, dC/dtheta) with exact boundary rules for the Zero and
/// One corners; derivatives at exact corners are never consumed.
fn corner_bundle(
    fam: CopulaFamily,
    theta: f64,
    a: &CornerEval,
    b: &CornerEval,
) -> Result<(f64, f64, f64, f64), CopulaError> {
    Ok(match (a, b) {
        (CornerEval::Zero, _) | (_, CornerEval::Zero) => (0.0, 0.0, 0.0, 0.0),
        (CornerEval::One, CornerEval::One) => (1.0, 0.0, 0.0, 0.0),
        (CornerEval::One, CornerEval::Val(v)) => (v.s, 0.0, 1.0, 0.0),
        (CornerEval::Val(u), CornerEval::One) => (u.s, 1.0, 0.0, 0.0),
        (CornerEval::Val(u), CornerEval::Val(v)) => {
            let d = fam.derivs(u.s, v.s, theta)?;
            (d.cdf, d.du, d.dv, d.dtheta)
        }
    })
}

/// Accumulate `scale * (dL/deta * d_eta + dL/detadt * d_detadt)` into the
/// gradient block starting at `off`.
fn add_eta_grad(grad: &mut DVector<f64>, off: usize, e: &EtaEval, dl_deta: f64, dl_detadt: f64) {
    for (k, (de, dd)) in e.d_eta.iter().zip(&e.d_detadt).enumerate() {
        grad[off + k] += dl_deta * de + dl_detadt * dd;
    }
}

/// Log marginal density factor for an uncensored point and its chain-rule
/// pieces. For a predictor without time dependence the d eta/d t factor is
/// dropped (the toy intercept-only case has no density otherwise).
fn log_density_factor(
    has_baseline: bool,
    p: &PointEval,
) -> (f64, f64, f64) {
    let neg_gp = (-p.gp).max(LOG_FLOOR);
    let mut ll = neg_gp.ln();
    let dl_deta = p.gpp / p.gp.min(-LOG_FLOOR);
    let mut dl_detadt = 0.0;
    if has_baseline {
        let etap = p.eta.deta_dt.max(LOG_FLOOR);
        ll += etap.ln();
        dl_detadt = 1.0 / etap;
    }
    (ll, dl_deta, dl_detadt)
}

/// Unpenalized log-likelihood and its analytic gradient.
pub fn loglik_grad(
    design: &ModelDesign,
    prepared: &Prepared,
    delta: &[f64],
) -> Result<(f64, DVector<f64>), LikelihoodError> {
    let w = design.n_coef();
    let (o1, o2, o3) = design.offsets();
    let (d1, d2) = (&design.d1, &design.d2);
    let (link1, link2) = design.links;
    let fam = design.copula;
    let del1 = &delta[o1..o2];
    let del2 = &delta[o2..o3];
    let del3 = &delta[o3..];

    let mut ll = 0.0;
    let mut grad = DVector::zeros(w);

    for (i, rec) in prepared.records.iter().enumerate() {
        // dependence parameter for this record
        let (theta, eta3, dtheta_deta3) = match &design.d3 {
            Some(d3) => {
                let e3 = d3.eval_with(None, &rec.x3, del3)?;
                let th = dependence_link(e3.eta);
                let dth = dependence_link_deriv(e3.eta);
                (th, Some(e3), dth)
            }
            None => (1.0, None, 0.0),
        };
        let mut dl_dtheta = 0.0;
        let mut rec_ll = 0.0;

        match (&rec.m1.kind, &rec.m2.kind) {
            (PrepKind::Unc(td1), PrepKind::Unc(td2)) => {
                let p1 = eval_point(d1, link1, td1.as_ref(), &rec.m1.xd, del1)?;
                let p2 = eval_point(d2, link2, td2.as_ref(), &rec.m2.xd, del2)?;
                let cd = fam.derivs(p1.s, p2.s, theta)?;
                let c = cd.density.max(LOG_FLOOR);
                rec_ll += c.ln();
                let (lf1, da1, db1) = log_density_factor(d1.has_baseline(), &p1);
                let (lf2, da2, db2) = log_density_factor(d2.has_baseline(), &p2);
                rec_ll += lf1 + lf2;
                add_eta_grad(&mut grad, o1, &p1.eta, cd.density_du / c * p1.ds_deta + da1, db1);
                add_eta_grad(&mut grad, o2, &p2.eta, cd.density_dv / c * p2.ds_deta + da2, db2);
                dl_dtheta += cd.density_dtheta / c;
            }
            (PrepKind::Cens { low: l1, high: h1 }, PrepKind::Cens { low: l2, high: h2 }) => {
                let c1l = CornerEval::from_prep(d1, link1, l1, &rec.m1.xd, del1)?;
                let c1h = CornerEval::from_prep(d1, link1, h1, &rec.m1.xd, del1)?;
                let c2l = CornerEval::from_prep(d2, link2, l2, &rec.m2.xd, del2)?;
                let c2h = CornerEval::from_prep(d2, link2, h2, &rec.m2.xd, del2)?;
                // rectangle probability with signs (+ - - +)
                let corners = [
                    (&c1l, &c2l, 1.0),
                    (&c1h, &c2l, -1.0),
                    (&c1l, &c2h, -1.0),
                    (&c1h, &c2h, 1.0),
                ];
                let mut p = 0.0;
                let mut dp_dth = 0.0;
                // dP/du at (margin, low/high) corners
                let mut dp_du = [0.0; 2];
                let mut dp_dv = [0.0; 2];
                for (a, b, sign) in corners {
                    let (cdf, du, dv, dth) = corner_bundle(fam, theta, a, b)?;
                    p += sign * cdf;
                    dp_dth += sign * dth;
                    let ia = if std::ptr::eq(a, &c1l) { 0 } else { 1 };
                    let ib = if std::ptr::eq(b, &c2l) { 0 } else { 1 };
                    dp_du[ia] += sign * du;
                    dp_dv[ib] += sign * dv;
                }
                let pc = p.max(LOG_FLOOR);
                rec_ll += pc.ln();
                for (corner, dp) in [(&c1l, dp_du[0]), (&c1h, dp_du[1])] {
                    if let CornerEval::Val(pt) = corner {
                        add_eta_grad(&mut grad, o1, &pt.eta, dp * pt.ds_deta / pc, 0.0);
                    }
                }
                for (corner, dp) in [(&c2l, dp_dv[0]), (&c2h, dp_dv[1])] {
                    if let CornerEval::Val(pt) = corner {
                        add_eta_grad(&mut grad, o2, &pt.eta, dp * pt.ds_deta / pc, 0.0);
                    }
                }
                dl_dtheta += dp_dth / pc;
            }
            (PrepKind::Unc(td1), PrepKind::Cens { low, high }) => {
                let p1 = eval_point(d1, link1, td1.as_ref(), &rec.m1.xd, del1)?;
                let cl = CornerEval::from_prep(d2, link2, low, &rec.m2.xd, del2)?;
                let ch = CornerEval::from_prep(d2, link2, high, &rec.m2.xd, del2)?;
                mixed_contribution(
                    fam, theta, &p1, &cl, &ch, d1.has_baseline(), false, o1, o2, &mut grad,
                    &mut rec_ll, &mut dl_dtheta,
                )?;
            }
            (PrepKind::Cens { low, high }, PrepKind::Unc(td2)) => {
                let p2 = eval_point(d2, link2, td2.as_ref(), &rec.m2.xd, del2)?;
                let cl = CornerEval::from_prep(d1, link1, low, &rec.m1.xd, del1)?;
                let ch = CornerEval::from_prep(d1, link1, high, &rec.m1.xd, del1)?;
                // exchangeable family: swap roles of u and v
                mixed_contribution(
                    fam, theta, &p2, &cl, &ch, d2.has_baseline(), true, o2, o1, &mut grad,
                    &mut rec_ll, &mut dl_dtheta,
                )?;
            }
        }

        if let Some(e3) = &eta3 {
            add_eta_grad(&mut grad, o3, e3, dl_dtheta * dtheta_deta3, 0.0);
        }
        if !rec_ll.is_finite() {
            return Err(LikelihoodError::NonFinite(i));
        }
        ll += rec_ll;
    }
    Ok((ll, grad))
}

/// Contribution of a record with one uncensored margin (point `pu`, block
/// offset `off_u`) and one censored margin (corners `cl`/`ch`, offset
/// `off_c`). `swapped` selects which copula argument is the uncensored one.
#[allow(clippy::too_many_arguments)]
fn mixed_contribution(
    fam: CopulaFamily,
    theta: f64,
    pu: &PointEval,
    cl: &CornerEval,
    ch: &CornerEval,
    u_has_baseline: bool,
    swapped: bool,
    off_u: usize,
    off_c: usize,
    grad: &mut DVector<f64>,
    rec_ll: &mut f64,
    dl_dtheta: &mut f64,
) -> Result<(), LikelihoodError> {
    // per corner: (h, dh/du, dh/dv = density, dh/dtheta) of the h-function
    // of the uncensored argument
    let term = |corner: &CornerEval| -> Result<(f64, f64, f64, f64), CopulaError> {
        Ok(match corner {
            CornerEval::Zero => (0.0, 0.0, 0.0, 0.0),
            CornerEval::One => (1.0, 0.0, 0.0, 0.0),
            CornerEval::Val(pv) => {
                let d = if swapped {
                    fam.derivs(pv.s, pu.s, theta)?
                } else {
                    fam.derivs(pu.s, pv.s, theta)?
                };
                if swapped {
                    (d.dv, d.dvv, d.density, d.dv_dtheta)
                } else {
                    (d.du, d.duu, d.density, d.du_dtheta)
                }
            }
        })
    };
    let (hl, hul, cl_den, hthl) = term(cl)?;
    let (hh, huh, ch_den, hthh) = term(ch)?;
    let diff = (hl - hh).max(LOG_FLOOR);
    *rec_ll += diff.ln();
    let (lf, da, db) = log_density_factor(u_has_baseline, pu);
    *rec_ll += lf;
    add_eta_grad(
        grad,
        off_u,
        &pu.eta,
        (hul - huh) * pu.ds_deta / diff + da,
        db,
    );
    if let CornerEval::Val(pv) = cl {
        add_eta_grad(grad, off_c, &pv.eta, cl_den * pv.ds_deta / diff, 0.0);
    }
    if let CornerEval::Val(pv) = ch {
        add_eta_grad(grad, off_c, &pv.eta, -ch_den * pv.ds_deta / diff, 0.0);
    }
    *dl_dtheta += (hthl - hthh) / diff;
    Ok(())
}

/// Unpenalized log-likelihood.
pub fn loglik(
    design: &ModelDesign,
    prepared: &Prepared,
    delta: &[f64],
) -> Result<f64, LikelihoodError> {
    loglik_grad(design, prepared, delta).map(|(ll, _)| ll)
}

/// Penalized log-likelihood: l(delta) - 0.5 * delta' S delta.
pub fn penalized_loglik(
    design: &ModelDesign,
    prepared: &Prepared,
    delta: &[f64],
    lambdas: &[f64],
) -> Result<f64, LikelihoodError> {
    let s = design.penalty_matrix(lambdas)?;
    let d = DVector::from_column_slice(delta);
    let ll = loglik(design, prepared, delta)?;
    Ok(ll - 0.5 * (&s * &d).dot(&d))
}

/// Gradient of the penalized log-likelihood.
pub fn gradient(
    design: &ModelDesign,
    prepared: &Prepared,
    delta: &[f64],
    lambdas: &[f64],
) -> Result<DVector<f64>, LikelihoodError> {
    let s = design.penalty_matrix(lambdas)?;
    let d = DVector::from_column_slice(delta);
    let (_, mut g) = loglik_grad(design, prepared, delta)?;
    g -= &s * &d;
    Ok(g)
}
