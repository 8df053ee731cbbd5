//! Marginal survival machinery: the PH/PO survival links, additive
//! predictor assembly with a monotone baseline spline of time, optional
//! P-spline covariate smooths, and marginal survival/density evaluation.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spline::{second_difference_penalty, SplineBasis, SplineError};

#[derive(Debug, Error)]
pub enum MarginError {
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("predictor with a baseline needs time values to place knots")]
    MissingTimes,
    #[error("smooth term covariate index {0} out of range")]
    BadCovariate(usize),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Survival link G mapping the additive predictor to a survival probability.
/// PH: G(eta) = exp(-exp(eta)); PO: G(eta) = 1/(1+exp(eta)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurvivalLink {
    PH,
    PO,
}

impl SurvivalLink {
    pub fn code(&self) -> &'static str {
        match self {
            SurvivalLink::PH => "PH",
            SurvivalLink::PO => "PO",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "PH" => Some(SurvivalLink::PH),
            "PO" => Some(SurvivalLink::PO),
            _ => None,
        }
    }

    /// G(eta)
    pub fn survival(&self, eta: f64) -> f64 {
        match self {
            SurvivalLink::PH => (-eta.exp()).exp(),
            SurvivalLink::PO => 1.0 / (1.0 + eta.exp()),
        }
    }

    /// G'(eta), always negative
    pub fn dsurv(&self, eta: f64) -> f64 {
        match self {
            SurvivalLink::PH => {
                let a = eta.exp();
                -a * (-a).exp()
            }
            SurvivalLink::PO => {
                let g = self.survival(eta);
                -g * (1.0 - g)
            }
        }
    }

    /// G''(eta)
    pub fn d2surv(&self, eta: f64) -> f64 {
        match self {
            SurvivalLink::PH => {
                let a = eta.exp();
                a * (-a).exp() * (a - 1.0)
            }
            SurvivalLink::PO => {
                let g = self.survival(eta);
                g * (1.0 - g) * (1.0 - 2.0 * g)
            }
        }
    }

    /// Solve G(eta) = s for eta.
    pub fn inverse(&self, s: f64) -> f64 {
        let s = s.clamp(1e-12, 1.0 - 1e-12);
        match self {
            SurvivalLink::PH => (-s.ln()).ln(),
            SurvivalLink::PO => ((1.0 - s) / s).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MonotoneSplineConfig {
    pub n_basis: usize,
    pub degree: usize,
}

impl Default for MonotoneSplineConfig {
    fn default() -> Self {
        MonotoneSplineConfig {
            n_basis: 10,
            degree: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothConfig {
    pub n_basis: usize,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig { n_basis: 8 }
    }
}

/// Declarative form of one additive predictor.
///
/// A predictor with a baseline has no separate intercept even when
/// `intercept` is set: the basis is a partition of unity, so the baseline
/// level coefficient would be exactly collinear with it. The level
/// coefficient plays the intercept role instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub intercept: bool,
    pub baseline: Option<MonotoneSplineConfig>,
    pub linear_terms: Vec<usize>,
    pub smooth_terms: Vec<(usize, SmoothConfig)>,
}

impl PredictorSpec {
    pub fn intercept_only() -> Self {
        PredictorSpec {
            intercept: true,
            baseline: None,
            linear_terms: vec![],
            smooth_terms: vec![],
        }
    }

    pub fn with_baseline(linear_terms: Vec<usize>) -> Self {
        PredictorSpec {
            intercept: false,
            baseline: Some(MonotoneSplineConfig::default()),
            linear_terms,
            smooth_terms: vec![],
        }
    }
}

/// Precomputed, coefficient-independent basis data at one time point:
/// suffix sums of the baseline basis values and of their derivatives.
/// eta_baseline = r1*tail[0] + sum_{j>=1} exp(r_j)*tail[j] with tail[0] = 1.
#[derive(Debug, Clone)]
pub struct TimeDesign {
    pub tail: Vec<f64>,
    pub dtail: Vec<f64>,
    pub clamped: bool,
}

/// One predictor compiled against a dataset: spline bases constructed,
/// smooth columns centered, coefficient layout fixed.
///
/// Coefficient layout: [baseline raw | intercept | linear terms | smooth blocks].
#[derive(Debug, Clone)]
pub struct PredictorDesign {
    pub spec: PredictorSpec,
    baseline_basis: Option<SplineBasis>,
    has_intercept: bool,
    smooth_bases: Vec<(usize, SplineBasis, Vec<f64>)>,
    n_coef: usize,
}

impl PredictorDesign {
    /// `times`: observed times of this margin (knot placement), required
    /// when the predictor has a baseline. `x`: full covariate matrix (smooth
    /// knot placement and centering).
    pub fn build(
        spec: PredictorSpec,
        times: Option<&[f64]>,
        x: DMatrixView<f64>,
    ) -> Result<Self, MarginError> {
        let baseline_basis = match &spec.baseline {
            Some(cfg) => {
                let times = times.ok_or(MarginError::MissingTimes)?;
                Some(SplineBasis::from_values(times, cfg.n_basis, cfg.degree)?)
            }
            None => None,
        };
        let has_intercept = spec.intercept && baseline_basis.is_none();
        let mut smooth_bases = Vec::new();
        for &(j, cfg) in &spec.smooth_terms {
            if j >= x.ncols() {
                return Err(MarginError::BadCovariate(j));
            }
            let col: Vec<f64> = x.column(j).iter().copied().collect();
            let basis = SplineBasis::from_values(&col, cfg.n_basis, 3)?;
            let mut means = vec![0.0; cfg.n_basis];
            for &v in &col {
                let e = basis.eval(v);
                for (m, b) in means.iter_mut().zip(&e.values) {
                    *m += b;
                }
            }
            for m in &mut means {
                *m /= col.len() as f64;
            }
            smooth_bases.push((j, basis, means));
        }
        for &j in &spec.linear_terms {
            if j >= x.ncols() {
                return Err(MarginError::BadCovariate(j));
            }
        }
        let n_coef = baseline_basis.as_ref().map_or(0, |b| b.n_basis())
            + has_intercept as usize
            + spec.linear_terms.len()
            + smooth_bases.iter().map(|(_, b, _)| b.n_basis()).sum::<usize>();
        Ok(PredictorDesign {
            spec,
            baseline_basis,
            has_intercept,
            smooth_bases,
            n_coef,
        })
    }

    pub fn n_coef(&self) -> usize {
        self.n_coef
    }

    pub fn has_baseline(&self) -> bool {
        self.baseline_basis.is_some()
    }

    pub fn baseline_len(&self) -> usize {
        self.baseline_basis.as_ref().map_or(0, |b| b.n_basis())
    }

    pub fn baseline_range(&self) -> Option<(f64, f64)> {
        self.baseline_basis.as_ref().map(|b| b.range())
    }

    /// Coefficient index of the linear term for covariate `j`, if present.
    pub fn linear_coef_index(&self, j: usize) -> Option<usize> {
        let off = self.baseline_len() + self.has_intercept as usize;
        self.spec
            .linear_terms
            .iter()
            .position(|&c| c == j)
            .map(|k| off + k)
    }

    /// Penalized coefficient blocks: (offset, penalty matrix), one per
    /// baseline and one per smooth term, in layout order.
    pub fn penalty_blocks(&self) -> Vec<(usize, DMatrix<f64>)> {
        let mut out = Vec::new();
        let mut off = 0;
        if let Some(b) = &self.baseline_basis {
            out.push((off, second_difference_penalty(b.n_basis())));
            off += b.n_basis();
        }
        off += self.has_intercept as usize + self.spec.linear_terms.len();
        for (_, b, _) in &self.smooth_bases {
            out.push((off, second_difference_penalty(b.n_basis())));
            off += b.n_basis();
        }
        out
    }

    /// Baseline basis suffix sums at time `t`; `None` when no baseline.
    pub fn time_design(&self, t: f64) -> Option<TimeDesign> {
        let basis = self.baseline_basis.as_ref()?;
        let e = basis.eval(t);
        let nb = e.values.len();
        let mut tail = vec![0.0; nb];
        let mut dtail = vec![0.0; nb];
        let mut acc = 0.0;
        let mut dacc = 0.0;
        for k in (0..nb).rev() {
            acc += e.values[k];
            dacc += e.derivs[k];
            tail[k] = acc;
            dtail[k] = dacc;
        }
        Some(TimeDesign {
            tail,
            dtail,
            clamped: e.clamped,
        })
    }

    /// Coefficient-independent design for the non-baseline block:
    /// d eta / d coef for intercept, linear and smooth coefficients.
    pub fn x_design(&self, x_row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_coef - self.baseline_len());
        if self.has_intercept {
            out.push(1.0);
        }
        for &j in &self.spec.linear_terms {
            out.push(x_row[j]);
        }
        for (j, basis, means) in &self.smooth_bases {
            let e = basis.eval(x_row[*j]);
            for (b, m) in e.values.iter().zip(means) {
                out.push(b - m);
            }
        }
        out
    }

    /// Evaluate eta, its time derivative, and the gradient of both with
    /// respect to the coefficient vector.
    pub fn eval_with(
        &self,
        td: Option<&TimeDesign>,
        xd: &[f64],
        coefs: &[f64],
    ) -> Result<EtaEval, MarginError> {
        if coefs.len() != self.n_coef {
            return Err(MarginError::DimensionMismatch {
                got: coefs.len(),
                expected: self.n_coef,
            });
        }
        let nb = self.baseline_len();
        let mut d_eta = vec![0.0; self.n_coef];
        let mut d_detadt = vec![0.0; self.n_coef];
        let mut eta = 0.0;
        let mut deta_dt = 0.0;
        if let Some(td) = td {
            // level coefficient enters linearly; increments through exp
            eta += coefs[0] * td.tail[0];
            deta_dt += coefs[0] * td.dtail[0];
            d_eta[0] = td.tail[0];
            d_detadt[0] = td.dtail[0];
            for j in 1..nb {
                let w = coefs[j].exp();
                eta += w * td.tail[j];
                deta_dt += w * td.dtail[j];
                d_eta[j] = w * td.tail[j];
                d_detadt[j] = w * td.dtail[j];
            }
        }
        for (k, &xk) in xd.iter().enumerate() {
            let c = coefs[nb + k];
            eta += c * xk;
            d_eta[nb + k] = xk;
        }
        Ok(EtaEval {
            eta,
            deta_dt,
            d_eta,
            d_detadt,
        })
    }

    /// Convenience wrapper building the designs on the fly.
    pub fn eval(
        &self,
        t: Option<f64>,
        x_row: &[f64],
        coefs: &[f64],
    ) -> Result<EtaEval, MarginError> {
        let td = t.and_then(|t| self.time_design(t));
        let xd = self.x_design(x_row);
        self.eval_with(td.as_ref(), &xd, coefs)
    }
}

#[derive(Debug, Clone)]
pub struct EtaEval {
    pub eta: f64,
    /// non-negative when a monotone baseline is present; 0 otherwise
    pub deta_dt: f64,
    pub d_eta: Vec<f64>,
    pub d_detadt: Vec<f64>,
}

/// Marginal survival S = G(eta) and density f = -G'(eta) * deta/dt.
pub fn marginal_survival_density(
    design: &PredictorDesign,
    link: SurvivalLink,
    t: f64,
    x_row: &[f64],
    coefs: &[f64],
) -> Result<(f64, f64), MarginError> {
    let e = design.eval(Some(t), x_row, coefs)?;
    let s = link.survival(e.eta);
    let f = -link.dsurv(e.eta) * e.deta_dt;
    Ok((s, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn test_x(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 3, |i, j| ((i * 7 + j * 13) % 19) as f64 / 19.0 - 0.5)
    }

    fn times(n: usize) -> Vec<f64> {
        (1..=n).map(|i| 0.05 + 3.0 * i as f64 / n as f64).collect()
    }

    #[test]
    fn link_values_and_monotonicity() {
        assert_abs_diff_eq!(SurvivalLink::PO.survival(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            SurvivalLink::PH.survival(0.0),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert!(SurvivalLink::PH.survival(40.0) < 1e-12);
        assert!(SurvivalLink::PH.survival(-40.0) > 1.0 - 1e-12);
        for link in [SurvivalLink::PH, SurvivalLink::PO] {
            let mut last = 2.0;
            for k in 0..1000 {
                let eta = -6.0 + 12.0 * k as f64 / 999.0;
                let s = link.survival(eta);
                assert!(s < last, "{:?} not strictly decreasing at eta={}", link, eta);
                assert!(link.dsurv(eta) < 0.0);
                last = s;
            }
        }
    }

    #[test]
    fn link_derivatives_match_fd() {
        let h = 1e-6;
        for link in [SurvivalLink::PH, SurvivalLink::PO] {
            for &eta in &[-2.0, -0.3, 0.0, 0.7, 2.0] {
                let fd = (link.survival(eta + h) - link.survival(eta - h)) / (2.0 * h);
                assert_abs_diff_eq!(link.dsurv(eta), fd, epsilon = 1e-8);
                let fd2 = (link.dsurv(eta + h) - link.dsurv(eta - h)) / (2.0 * h);
                assert_abs_diff_eq!(link.d2surv(eta), fd2, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn link_inverse_round_trip() {
        for link in [SurvivalLink::PH, SurvivalLink::PO] {
            for &s in &[0.1, 0.3, 0.5, 0.9] {
                assert_abs_diff_eq!(link.survival(link.inverse(s)), s, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn intercept_only_eval() {
        let x = test_x(30);
        let d = PredictorDesign::build(PredictorSpec::intercept_only(), None, x.as_view()).unwrap();
        let e = d.eval(None, &[0.0, 0.0, 0.0], &[1.7]).unwrap();
        assert_abs_diff_eq!(e.eta, 1.7, epsilon = 1e-15);
        assert_eq!(e.deta_dt, 0.0);
        assert_eq!(e.d_eta, vec![1.0]);
    }

    #[test]
    fn baseline_eta_nondecreasing_and_linear_term_adds() {
        let x = test_x(50);
        let ts = times(50);
        let spec = PredictorSpec::with_baseline(vec![1]);
        let d = PredictorDesign::build(spec, Some(&ts), x.as_view()).unwrap();
        assert_eq!(d.n_coef(), 11);
        let coefs: Vec<f64> = (0..11).map(|i| -0.8 + 0.13 * i as f64).collect();
        let row = [0.0, 2.0, 0.0];
        let mut last = f64::NEG_INFINITY;
        for k in 0..50 {
            let t = 0.05 + 3.0 * k as f64 / 49.0;
            let e = d.eval(Some(t), &row, &coefs).unwrap();
            assert!(e.eta >= last - 1e-12, "eta not monotone at t={}", t);
            assert!(e.deta_dt >= 0.0);
            last = e.eta;
        }
        // linearity in the covariate: eta(x=2) - eta(x=0) = 2 * beta
        let e0 = d.eval(Some(1.0), &[0.0, 0.0, 0.0], &coefs).unwrap();
        let e2 = d.eval(Some(1.0), &row, &coefs).unwrap();
        assert_abs_diff_eq!(e2.eta - e0.eta, 2.0 * coefs[10], epsilon = 1e-12);
    }

    #[test]
    fn eval_gradient_matches_fd() {
        let x = test_x(40);
        let ts = times(40);
        let spec = PredictorSpec {
            intercept: false,
            baseline: Some(MonotoneSplineConfig::default()),
            linear_terms: vec![0, 2],
            smooth_terms: vec![(1, SmoothConfig::default())],
        };
        let d = PredictorDesign::build(spec, Some(&ts), x.as_view()).unwrap();
        let n = d.n_coef();
        let coefs: Vec<f64> = (0..n).map(|i| 0.3 - 0.07 * i as f64).collect();
        let row: Vec<f64> = x.row(7).iter().copied().collect();
        let e = d.eval(Some(1.3), &row, &coefs).unwrap();
        let h = 1e-6;
        for k in 0..n {
            let mut cp = coefs.clone();
            cp[k] += h;
            let mut cm = coefs.clone();
            cm[k] -= h;
            let ep = d.eval(Some(1.3), &row, &cp).unwrap();
            let em = d.eval(Some(1.3), &row, &cm).unwrap();
            assert_abs_diff_eq!(e.d_eta[k], (ep.eta - em.eta) / (2.0 * h), epsilon = 1e-6);
            assert_abs_diff_eq!(
                e.d_detadt[k],
                (ep.deta_dt - em.deta_dt) / (2.0 * h),
                epsilon = 1e-5
            );
        }
    }

    #[test]
    fn density_matches_negative_survival_slope() {
        let x = test_x(40);
        let ts = times(40);
        let d =
            PredictorDesign::build(PredictorSpec::with_baseline(vec![0]), Some(&ts), x.as_view())
                .unwrap();
        let coefs: Vec<f64> = (0..11).map(|i| -0.5 + 0.11 * i as f64).collect();
        let row = [0.4, 0.0, 0.0];
        let h = 1e-5;
        for link in [SurvivalLink::PH, SurvivalLink::PO] {
            for k in 1..20 {
                let t = 0.1 + 2.8 * k as f64 / 20.0;
                let (_, f) = marginal_survival_density(&d, link, t, &row, &coefs).unwrap();
                let (sp, _) = marginal_survival_density(&d, link, t + h, &row, &coefs).unwrap();
                let (sm, _) = marginal_survival_density(&d, link, t - h, &row, &coefs).unwrap();
                let fd = -(sp - sm) / (2.0 * h);
                assert!(
                    (f - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                    "{:?} t={} f={} fd={}",
                    link,
                    t,
                    f,
                    fd
                );
                assert!(f >= 0.0);
            }
        }
    }

    #[test]
    fn flat_predictor_has_zero_density() {
        let x = test_x(20);
        let d = PredictorDesign::build(
            PredictorSpec::intercept_only(),
            None,
            x.as_view(),
        )
        .unwrap();
        let e = d.eval(Some(1.0), &[0.0, 0.0, 0.0], &[0.3]).unwrap();
        assert_eq!(e.deta_dt, 0.0);
        let f = -SurvivalLink::PO.dsurv(e.eta) * e.deta_dt;
        assert_eq!(f, 0.0);
    }

    #[test]
    fn smooth_terms_centered_over_data() {
        let x = test_x(60);
        let ts = times(60);
        let spec = PredictorSpec {
            intercept: false,
            baseline: Some(MonotoneSplineConfig::default()),
            linear_terms: vec![],
            smooth_terms: vec![(0, SmoothConfig::default())],
        };
        let d = PredictorDesign::build(spec, Some(&ts), x.as_view()).unwrap();
        // sum over data rows of each centered smooth column is zero
        let mut sums = vec![0.0; 8];
        for i in 0..60 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let xd = d.x_design(&row);
            for (s, v) in sums.iter_mut().zip(&xd) {
                *s += v;
            }
        }
        for s in sums {
            assert_abs_diff_eq!(s, 0.0, epsilon = 1e-9);
        }
    }
}
