//! Optimal base measure on the sphere `S^d` with chordal cost
//! `|x - y|^p`.
//!
//! By rotation invariance the optimal base measure is `alpha* sigma` for the
//! uniform measure `sigma`, and the projected Dirac at `x` is `beta alpha*`
//! on the cap `<x, y> >= t*` and `alpha alpha*` outside. Everything reduces
//! to one-dimensional integrals against the density of `<x, y>` under `sigma`:
//!
//! ```text
//! f_d(u) = C_d (1 - u^2)^((d-2)/2),   g_p(u) = (2 - 2u)^(p/2)
//! S(t) = int_t^1 f_d,   U(t) = int_t^1 g_p f_d,   H = U(-1)
//! ```
//!
//! `t*` is the unique root of the strictly increasing
//! `G(t) = A U(t) + B H - g_p(t)(B + A S(t))` with `A = e^(eps/2) - e^(-eps/2)`
//! and `B = e^(-eps/2)`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Absolute tolerance for every integral.
pub const QUADRATURE_TOL: f64 = 1e-12;
const MAX_PANELS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereSolution {
    pub d: usize,
    pub p: f64,
    pub epsilon: f64,
    pub t_star: f64,
    pub alpha_star: f64,
    /// `G(t*)`.
    pub residual: f64,
    /// Worst-case `W_p^p`, which equals `g_p(t*)` at the optimum.
    pub worst_case_cost: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SphereProblem {
    d: usize,
    p: f64,
    epsilon: f64,
    log_c: f64,
    a: f64,
    b: f64,
    h: f64,
}

impl SphereProblem {
    pub fn new(d: usize, p: f64, epsilon: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::param("d", "must be >= 1"));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::param("p", format!("must be finite and >= 1, got {p}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be finite and > 0, got {epsilon}")));
        }
        let df = d as f64;
        let log_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * PI.ln();
        let mut out = Self {
            d,
            p,
            epsilon,
            log_c,
            a: (epsilon / 2.0).exp() - (-epsilon / 2.0).exp(),
            b: (-epsilon / 2.0).exp(),
            h: 0.0,
        };
        out.h = out.upper_integral(-1.0, true)?;
        Ok(out)
    }

    /// `f_d(u)`.
    pub fn density(&self, u: f64) -> f64 {
        (self.log_c + (self.d as f64 - 2.0) / 2.0 * (1.0 - u * u).ln()).exp()
    }

    /// `g_p(u)`.
    pub fn cost(&self, u: f64) -> f64 {
        (2.0 - 2.0 * u).max(0.0).powf(self.p / 2.0)
    }

    /// `int_t^1 h(u) f_d(u) du` with `h = g_p` or `h = 1`, computed in the
    /// angle `u = cos(theta)` so the density weight becomes `sin^(d-1)`.
    fn upper_integral(&self, t: f64, weighted: bool) -> Result<f64> {
        let top = t.clamp(-1.0, 1.0).acos();
        if top == 0.0 {
            return Ok(0.0);
        }
        let (p, dm1) = (self.p, self.d as i32 - 1);
        let c = self.log_c.exp();
        let r = integrate(
            |theta: f64| {
                let w = theta.sin().powi(dm1);
                if weighted {
                    w * (2.0 * (theta / 2.0).sin()).powf(p)
                } else {
                    w
                }
            },
            0.0,
            top,
            QUADRATURE_TOL / c,
            MAX_PANELS,
        )?;
        Ok(c * r.value)
    }

    /// `S_d(t)`, the `sigma`-mass of the cap `<x, y> >= t`.
    pub fn cap_mass(&self, t: f64) -> Result<f64> {
        self.upper_integral(t, false)
    }

    /// `U_{d,p}(t)`.
    pub fn cap_cost(&self, t: f64) -> Result<f64> {
        self.upper_integral(t, true)
    }

    /// `H_{d,p} = E_sigma |x - y|^p`.
    pub fn mean_cost(&self) -> f64 {
        self.h
    }

    /// `G(t)`.
    pub fn g_function(&self, t: f64) -> Result<f64> {
        let (u, s) = (self.cap_cost(t)?, self.cap_mass(t)?);
        Ok(self.a * u + self.b * self.h - self.cost(t) * (self.b + self.a * s))
    }

    pub fn solve(&self) -> Result<SphereSolution> {
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.g_function(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t_star = 0.5 * (lo + hi);
        Ok(SphereSolution {
            d: self.d,
            p: self.p,
            epsilon: self.epsilon,
            t_star,
            alpha_star: 1.0 / (self.b + self.a * self.cap_mass(t_star)?),
            residual: self.g_function(t_star)?,
            worst_case_cost: self.cost(t_star),
        })
    }
}

pub fn sphere_base_measure(d: usize, p: f64, epsilon: f64) -> Result<SphereSolution> {
    SphereProblem::new(d, p, epsilon)?.solve()
}
