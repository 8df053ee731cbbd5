//! Bivariate copula families: CDF, density, conditional (h-) functions,
//! the derivatives needed by the censored likelihood, Kendall's tau and
//! conditional-inverse sampling.
//!
//! All three families are exchangeable, so the v-side derivatives are
//! obtained by swapping arguments of the u-side ones.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::gauss_legendre_unit;

/// Interior clamp applied to (u, v) before density / partial evaluation.
pub const UV_EPS: f64 = 1e-12;
/// Admissible range enforced by the dependence link.
pub const THETA_FLOOR: f64 = 1e-8;
pub const THETA_CEIL: f64 = 1e8;

#[derive(Debug, Error)]
pub enum CopulaError {
    #[error("theta={theta} outside admissible range {range} for the {family} copula")]
    ThetaOutOfRange {
        family: &'static str,
        theta: f64,
        range: &'static str,
    },
    #[error("conditional inverse is not available for the {0} copula")]
    UnsupportedFamily(&'static str),
    #[error("quadrature for Kendall's tau did not reach tolerance {0}")]
    QuadratureFailure(f64),
}

/// Copula family. Serialized names follow the report conventions:
/// `N` (independence), `C0` (Clayton), `PL` (Plackett).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CopulaFamily {
    #[serde(rename = "N")]
    Independence,
    #[serde(rename = "C0")]
    Clayton,
    #[serde(rename = "PL")]
    Plackett,
}

impl CopulaFamily {
    pub fn code(&self) -> &'static str {
        match self {
            CopulaFamily::Independence => "N",
            CopulaFamily::Clayton => "C0",
            CopulaFamily::Plackett => "PL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "N" => Some(CopulaFamily::Independence),
            "C0" => Some(CopulaFamily::Clayton),
            "PL" => Some(CopulaFamily::Plackett),
            _ => None,
        }
    }

    /// Whether the family carries a dependence parameter at all.
    pub fn has_theta(&self) -> bool {
        !matches!(self, CopulaFamily::Independence)
    }

    pub fn check_theta(&self, theta: f64) -> Result<(), CopulaError> {
        match self {
            CopulaFamily::Independence => Ok(()),
            CopulaFamily::Clayton => {
                if theta > 0.0 && theta.is_finite() {
                    Ok(())
                } else {
                    Err(CopulaError::ThetaOutOfRange {
                        family: "Clayton",
                        theta,
                        range: "theta > 0",
                    })
                }
            }
            CopulaFamily::Plackett => {
                if theta > 0.0 && theta.is_finite() {
                    Ok(())
                } else {
                    Err(CopulaError::ThetaOutOfRange {
                        family: "Plackett",
                        theta,
                        range: "theta > 0",
                    })
                }
            }
        }
    }
}

fn clamp_uv(x: f64) -> f64 {
    x.clamp(UV_EPS, 1.0 - UV_EPS)
}

/// log(u^-t + v^-t - 1) computed without overflow for large exponents.
fn clayton_log_a(lu: f64, lv: f64, theta: f64) -> f64 {
    let au = -theta * lu;
    let av = -theta * lv;
    let m = au.max(av);
    if m > 700.0 {
        let lo = au.min(av);
        m + (lo - m).exp().ln_1p()
    } else {
        // e^au + e^av - 1 = 1 + expm1(au) + expm1(av); both expm1 >= 0
        (au.exp_m1() + av.exp_m1()).ln_1p()
    }
}

/// Everything the likelihood needs at one (u, v, theta) point.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopulaDerivs {
    pub cdf: f64,
    /// h-function dC/du
    pub du: f64,
    /// h-function dC/dv
    pub dv: f64,
    pub dtheta: f64,
    /// copula density c = d2C/dudv
    pub density: f64,
    /// d2C/du2
    pub duu: f64,
    /// d2C/dv2
    pub dvv: f64,
    /// d(dC/du)/dtheta
    pub du_dtheta: f64,
    /// d(dC/dv)/dtheta
    pub dv_dtheta: f64,
    pub density_du: f64,
    pub density_dv: f64,
    pub density_dtheta: f64,
}

impl CopulaFamily {
    /// Copula CDF C(u, v; theta). Boundary values are exact.
    pub fn cdf(&self, u: f64, v: f64, theta: f64) -> Result<f64, CopulaError> {
        self.check_theta(theta)?;
        if u <= 0.0 || v <= 0.0 {
            return Ok(0.0);
        }
        if u >= 1.0 {
            return Ok(v.min(1.0));
        }
        if v >= 1.0 {
            return Ok(u);
        }
        Ok(self.cdf_interior(u, v, theta))
    }

    fn cdf_interior(&self, u: f64, v: f64, theta: f64) -> f64 {
        match self {
            CopulaFamily::Independence => u * v,
            CopulaFamily::Clayton => {
                let la = clayton_log_a(u.ln(), v.ln(), theta);
                (-la / theta).exp()
            }
            CopulaFamily::Plackett => {
                // C = 2*theta*u*v / (S + D): cancellation-free form
                let s = 1.0 + (theta - 1.0) * (u + v);
                let d = (s * s - 4.0 * theta * (theta - 1.0) * u * v).sqrt();
                2.0 * theta * u * v / (s + d)
            }
        }
    }

    /// h-function dC/du(u, v; theta); the conditional CDF of V given U = u.
    pub fn partial_u(&self, u: f64, v: f64, theta: f64) -> Result<f64, CopulaError> {
        self.check_theta(theta)?;
        let (u, v) = (clamp_uv(u), clamp_uv(v));
        Ok(self.derivs(u, v, theta)?.du)
    }

    /// h-function dC/dv(u, v; theta).
    pub fn partial_v(&self, u: f64, v: f64, theta: f64) -> Result<f64, CopulaError> {
        self.check_theta(theta)?;
        let (u, v) = (clamp_uv(u), clamp_uv(v));
        Ok(self.derivs(u, v, theta)?.dv)
    }

    /// Copula density c(u, v; theta).
    pub fn density(&self, u: f64, v: f64, theta: f64) -> Result<f64, CopulaError> {
        self.check_theta(theta)?;
        let (u, v) = (clamp_uv(u), clamp_uv(v));
        Ok(self.derivs(u, v, theta)?.density)
    }

    /// Full derivative bundle at an interior point. Inputs are clamped to
    /// the interior before evaluation.
    pub fn derivs(&self, u: f64, v: f64, theta: f64) -> Result<CopulaDerivs, CopulaError> {
        self.check_theta(theta)?;
        let (u, v) = (clamp_uv(u), clamp_uv(v));
        Ok(match self {
            CopulaFamily::Independence => CopulaDerivs {
                cdf: u * v,
                du: v,
                dv: u,
                density: 1.0,
                ..Default::default()
            },
            CopulaFamily::Clayton => clayton_derivs(u, v, theta),
            CopulaFamily::Plackett => plackett_derivs(u, v, theta),
        })
    }

    /// Kendall's tau. Closed form for independence and Clayton, 64-node
    /// tensor Gauss–Legendre quadrature of 4*int C dC - 1 for Plackett.
    pub fn kendall_tau(&self, theta: f64) -> Result<f64, CopulaError> {
        self.check_theta(theta)?;
        match self {
            CopulaFamily::Independence => Ok(0.0),
            CopulaFamily::Clayton => Ok(theta / (theta + 2.0)),
            CopulaFamily::Plackett => {
                let (x, w) = gauss_legendre_unit(64);
                let mut acc = 0.0;
                for (i, &ui) in x.iter().enumerate() {
                    for (j, &vj) in x.iter().enumerate() {
                        let d = plackett_derivs(ui, vj, theta);
                        acc += w[i] * w[j] * d.cdf * d.density;
                    }
                }
                let tau = 4.0 * acc - 1.0;
                if tau.is_finite() {
                    Ok(tau)
                } else {
                    Err(CopulaError::QuadratureFailure(1e-6))
                }
            }
        }
    }

    /// Solve C_{2|1}(u2 | u1) = w for u2. Available for independence and
    /// Clayton (the families used by the simulator).
    pub fn conditional_inverse(&self, u1: f64, w: f64, theta: f64) -> Result<f64, CopulaError> {
        self.check_theta(theta)?;
        let u1 = clamp_uv(u1);
        let w = clamp_uv(w);
        match self {
            CopulaFamily::Independence => Ok(w),
            CopulaFamily::Clayton => {
                // u2 = [(w^(-theta/(1+theta)) - 1) u1^-theta + 1]^(-1/theta),
                // evaluated via expm1/ln_1p so the theta -> 0 limit is
                // exact; the x term stays in log space so huge theta does
                // not overflow u1^-theta and underflow u2 to zero.
                let g = (-theta / (1.0 + theta) * w.ln()).exp_m1();
                let lx = g.ln() + -theta * u1.ln();
                let l1px = if lx > 700.0 { lx } else { lx.exp().ln_1p() };
                Ok((-l1px / theta).exp())
            }
            CopulaFamily::Plackett => Err(CopulaError::UnsupportedFamily("Plackett")),
        }
    }
}

fn clayton_derivs(u: f64, v: f64, theta: f64) -> CopulaDerivs {
    let lu = u.ln();
    let lv = v.ln();
    let la = clayton_log_a(lu, lv, theta); // log A, A = u^-t + v^-t - 1
    let a = la.exp();
    // dA/dtheta
    let a_t = -lu * (-theta * lu).exp() - lv * (-theta * lv).exp();
    let cdf = (-la / theta).exp();
    let du = (-(theta + 1.0) * lu - (1.0 / theta + 1.0) * la).exp();
    let dv = (-(theta + 1.0) * lv - (1.0 / theta + 1.0) * la).exp();
    let density =
        ((1.0 + theta).ln() - (theta + 1.0) * (lu + lv) - (1.0 / theta + 2.0) * la).exp();
    // d2C/du2 = (theta+1) u^(-theta-2) A^(-1/theta-2) (1 - v^-theta)
    let one_minus_vt = -(-theta * lv).exp_m1();
    let duu =
        (theta + 1.0) * (-(theta + 2.0) * lu - (1.0 / theta + 2.0) * la).exp() * one_minus_vt;
    let one_minus_ut = -(-theta * lu).exp_m1();
    let dvv =
        (theta + 1.0) * (-(theta + 2.0) * lv - (1.0 / theta + 2.0) * la).exp() * one_minus_ut;
    let la_over_t2 = la / (theta * theta);
    let dtheta = cdf * (la_over_t2 - a_t / (theta * a));
    let du_dtheta = du * (-lu + la_over_t2 - (1.0 / theta + 1.0) * a_t / a);
    let dv_dtheta = dv * (-lv + la_over_t2 - (1.0 / theta + 1.0) * a_t / a);
    let density_dtheta = density
        * (1.0 / (1.0 + theta) - (lu + lv) + la_over_t2 - (1.0 / theta + 2.0) * a_t / a);
    // dc/du = c [ -(theta+1)/u + (1+2theta) u^(-theta-1) / A ]
    let density_du =
        density * (-(theta + 1.0) / u + (1.0 + 2.0 * theta) * (-(theta + 1.0) * lu - la).exp());
    let density_dv =
        density * (-(theta + 1.0) / v + (1.0 + 2.0 * theta) * (-(theta + 1.0) * lv - la).exp());
    CopulaDerivs {
        cdf,
        du,
        dv,
        dtheta,
        density,
        duu,
        dvv,
        du_dtheta,
        dv_dtheta,
        density_du,
        density_dv,
        density_dtheta,
    }
}

fn plackett_derivs(u: f64, v: f64, theta: f64) -> CopulaDerivs {
    let tm1 = theta - 1.0;
    let s = 1.0 + tm1 * (u + v);
    let d2 = s * s - 4.0 * theta * tm1 * u * v;
    let d = d2.sqrt();
    let cdf = 2.0 * theta * u * v / (s + d);
    // dC/du = (d - s + 2 theta v) / (2d); substituting
    // d - s = -4 theta (theta-1) u v / (d + s) avoids the cancellation
    // that destroys accuracy when u or v is tiny
    let du = theta * v * (d + s - 2.0 * tm1 * u) / (d * (d + s));
    let dv = theta * u * (d + s - 2.0 * tm1 * v) / (d * (d + s));
    let n = 1.0 + tm1 * (u + v - 2.0 * u * v);
    let d3 = d * d2;
    let density = theta * n / d3;
    let duu = -2.0 * theta * tm1 * v * (1.0 - v) / d3;
    let dvv = -2.0 * theta * tm1 * u * (1.0 - u) / d3;
    // dD/dtheta and dD/du
    let d_t = (s * (u + v) - 2.0 * u * v * (2.0 * theta - 1.0)) / d;
    let d_u = tm1 * (s - 2.0 * theta * v) / d;
    let d_v = tm1 * (s - 2.0 * theta * u) / d;
    // C = 2 theta u v / (S + D)
    let sd = s + d;
    let dtheta = 2.0 * u * v / sd - 2.0 * theta * u * v * (u + v + d_t) / (sd * sd);
    // d/dtheta of (S - 2 theta v)/D
    let du_dtheta = -0.5 * ((u + v - 2.0 * v) * d - (s - 2.0 * theta * v) * d_t) / d2;
    let dv_dtheta = -0.5 * ((u + v - 2.0 * u) * d - (s - 2.0 * theta * u) * d_t) / d2;
    // c = theta N / D^3
    let density_du = theta * (tm1 * (1.0 - 2.0 * v) - 3.0 * n * d_u / d) / d3;
    let density_dv = theta * (tm1 * (1.0 - 2.0 * u) - 3.0 * n * d_v / d) / d3;
    let n_t = u + v - 2.0 * u * v;
    let density_dtheta = (n + theta * n_t) / d3 - 3.0 * theta * n * d_t / (d2 * d2);
    CopulaDerivs {
        cdf,
        du,
        dv,
        dtheta,
        density,
        duu,
        dvv,
        du_dtheta,
        dv_dtheta,
        density_du,
        density_dv,
        density_dtheta,
    }
}

/// Dependence link theta = exp(eta3), clamped to [1e-8, 1e8].
pub fn dependence_link(eta3: f64) -> f64 {
    eta3.exp().clamp(THETA_FLOOR, THETA_CEIL)
}

/// Derivative d theta / d eta3; zero where the clamp is active.
pub fn dependence_link_deriv(eta3: f64) -> f64 {
    let theta = eta3.exp();
    if (THETA_FLOOR..=THETA_CEIL).contains(&theta) {
        theta
    } else {
        0.0
    }
}
