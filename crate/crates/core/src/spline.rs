//! Cubic B-spline machinery: quantile-knot bases with analytic derivatives,
//! second-difference penalties, and the cumulative-exponential coefficient
//! map that makes a baseline non-decreasing in time.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("basis dimension {n_basis} too small: need at least degree+2 = {min}")]
    TooFewBasis { n_basis: usize, min: usize },
    #[error("need at least 2 distinct values to place knots")]
    DegenerateValues,
}

/// Result of evaluating the full basis at one point.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    /// true when the query point fell outside the boundary knots and was
    /// evaluated at the clamped boundary instead
    pub clamped: bool,
}

/// B-spline basis with clamped (repeated-boundary) knot vector and
/// quantile-placed interior knots.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    knots: Vec<f64>,
    degree: usize,
    n_basis: usize,
    lo: f64,
    hi: f64,
}

impl SplineBasis {
    /// Build a basis from observed values: boundary knots at the (slightly
    /// padded) data range, interior knots at quantiles.
    pub fn from_values(values: &[f64], n_basis: usize, degree: usize) -> Result<Self, SplineError> {
        if n_basis < degree + 2 {
            return Err(SplineError::TooFewBasis {
                n_basis,
                min: degree + 2,
            });
        }
        let mut sorted: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (&min, &max) = match (sorted.first(), sorted.last()) {
            (Some(a), Some(b)) if b > a => (a, b),
            _ => return Err(SplineError::DegenerateValues),
        };
        let pad = 1e-6 * (max - min).max(1e-6);
        let (lo, hi) = (min - pad, max + pad);
        let n_interior = n_basis - degree - 1;
        let mut interior = Vec::with_capacity(n_interior);
        for k in 1..=n_interior {
            let q = k as f64 / (n_interior as f64 + 1.0);
            let pos = q * (sorted.len() as f64 - 1.0);
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let v = if i + 1 < sorted.len() {
                sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
            } else {
                sorted[i]
            };
            interior.push(v);
        }
        // quantiles can collide on tied data; fall back to a uniform spread
        let distinct = interior.windows(2).all(|w| w[1] > w[0])
            && interior.first().map_or(true, |&v| v > lo)
            && interior.last().map_or(true, |&v| v < hi);
        if !distinct {
            for (k, v) in interior.iter_mut().enumerate() {
                *v = lo + (hi - lo) * (k as f64 + 1.0) / (n_interior as f64 + 1.0);
            }
        }
        let mut knots = Vec::with_capacity(n_basis + degree + 1);
        knots.extend(std::iter::repeat(lo).take(degree + 1));
        knots.extend(interior);
        knots.extend(std::iter::repeat(hi).take(degree + 1));
        Ok(SplineBasis {
            knots,
            degree,
            n_basis,
            lo,
            hi,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Evaluate all basis functions and their derivatives at `t`, clamping
    /// to the boundary knots when necessary.
    pub fn eval(&self, t: f64) -> BasisEval {
        let clamped = t < self.lo || t > self.hi;
        let t = t.clamp(self.lo, self.hi);
        let values = self.eval_order(t, self.degree);
        let lower = self.eval_order(t, self.degree - 1);
        // d/dt B_{i,p} = p/(k_{i+p}-k_i) B_{i,p-1} - p/(k_{i+p+1}-k_{i+1}) B_{i+1,p-1}
        let p = self.degree as f64;
        let mut derivs = vec![0.0; self.n_basis];
        for i in 0..self.n_basis {
            let d1 = self.knots[i + self.degree] - self.knots[i];
            let d2 = self.knots[i + self.degree + 1] - self.knots[i + 1];
            let mut d = 0.0;
            if d1 > 0.0 {
                d += p / d1 * lower[i];
            }
            if d2 > 0.0 && i + 1 < lower.len() {
                d -= p / d2 * lower[i + 1];
            }
            derivs[i] = d;
        }
        BasisEval {
            values,
            derivs,
            clamped,
        }
    }

    /// All basis functions of order `deg` at `t` (Cox–de Boor triangle over
    /// the padded index range so indices line up with the order-p basis).
    fn eval_order(&self, t: f64, deg: usize) -> Vec<f64> {
        let n_fns = self.n_basis + (self.degree - deg);
        let mut b = vec![0.0; n_fns];
        // order-0 seed: indicator of the knot span containing t
        let span = self.find_span(t);
        for (i, bi) in b.iter_mut().enumerate() {
            if i == span {
                *bi = 1.0;
            }
        }
        let mut cur = b;
        for d in 1..=deg {
            let n_out = self.n_basis + (self.degree - d);
            let mut next = vec![0.0; n_out];
            for (i, ni) in next.iter_mut().enumerate() {
                let left_den = self.knots[i + d] - self.knots[i];
                let right_den = self.knots[i + d + 1] - self.knots[i + 1];
                let mut v = 0.0;
                if left_den > 0.0 {
                    v += (t - self.knots[i]) / left_den * cur[i];
                }
                if right_den > 0.0 && i + 1 < cur.len() {
                    v += (self.knots[i + d + 1] - t) / right_den * cur[i + 1];
                }
                *ni = v;
            }
            cur = next;
        }
        cur
    }

    /// Index i (into the order-0 sequence) with knots[d+i] <= t < knots[d+i+1],
    /// shifted so it addresses the padded order-0 array directly.
    fn find_span(&self, t: f64) -> usize {
        let last = self.knots.len() - self.degree - 2;
        if t >= self.hi {
            // half-open convention breaks at the right boundary; use the
            // last non-empty span so the end basis evaluates to 1 there
            return last;
        }
        let mut i = self.degree;
        while i < last && !(t < self.knots[i + 1]) {
            i += 1;
        }
        i
    }

    /// Second-difference penalty D2' D2 of this basis dimension.
    pub fn penalty(&self) -> DMatrix<f64> {
        second_difference_penalty(self.n_basis)
    }
}

/// D2' D2 for a coefficient vector of length `k`: zero exactly on
/// coefficient vectors affine in index.
pub fn second_difference_penalty(k: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(k.saturating_sub(2), k);
    for r in 0..k.saturating_sub(2) {
        d[(r, r)] = 1.0;
        d[(r, r + 1)] = -2.0;
        d[(r, r + 2)] = 1.0;
    }
    d.transpose() * d
}

/// Cumulative-exponential map to non-decreasing spline coefficients:
/// (r1, r2, ...) -> (r1, r1+e^r2, r1+e^r2+e^r3, ...).
pub fn monotone_coefs(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut acc = 0.0;
    for (k, &r) in raw.iter().enumerate() {
        if k == 0 {
            acc = r;
        } else {
            acc += r.exp();
        }
        out.push(acc);
    }
    out
}
