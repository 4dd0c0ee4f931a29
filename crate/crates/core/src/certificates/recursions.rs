//! Scalar recursions behind the optimality envelopes.
//!
//! [`PowerRecursion`]: `A(t) <= (1 - C1/(t+w-1)^p) A(t-1) + C2/(t+w-1)^(p+q)`.
//! [`GeometricRecursion`]: `B(t+1) <= (1 - a/(t+w)^p) B(t) + b beta^t/(t+w)^p`, `B(0) = 0`.
//!
//! Each has a closed-form bound and an oracle that iterates the recursion
//! with equality, which is the worst sequence the hypothesis allows.

use serde::{Deserialize, Serialize};

use super::Prefix;
use crate::error::{DgdError, Result};

/// Series truncation for the `J` constant.
pub const J_REL_TOL: f64 = 1e-15;
pub const J_MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerRecursion {
    pub c1: f64,
    pub c2: f64,
    pub p: f64,
    pub q: f64,
    pub w: f64,
    pub a0: f64,
}

impl PowerRecursion {
    pub fn new(c1: f64, c2: f64, p: f64, q: f64, w: f64, a0: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) || !(q > 0.0) || !(c1 > 0.0) || !(w >= 1.0) {
            return Err(DgdError::HypothesisViolation(format!(
                "need C1>0, 0<p<=1, q>0, w>=1; got C1={c1}, p={p}, q={q}, w={w}"
            )));
        }
        if !(c1 / w.powf(p) < 1.0) {
            return Err(DgdError::HypothesisViolation(format!(
                "C1/w^p = {} must be < 1",
                c1 / w.powf(p)
            )));
        }
        if !(c2 >= 0.0) || !(a0 >= 0.0) {
            return Err(DgdError::HypothesisViolation("C2 and A0 must be >= 0".into()));
        }
        Ok(PowerRecursion { c1, c2, p, q, w, a0 })
    }

    /// `Q = ((w+1)/w)^(p+q)`.
    pub fn q_factor(&self) -> f64 {
        ((self.w + 1.0) / self.w).powf(self.p + self.q)
    }

    /// `A(0..=t_max)` with equality in the recursion.
    pub fn oracle(&self, t_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(t_max + 1);
        let mut a = self.a0;
        out.push(a);
        for t in 1..=t_max {
            let base = t as f64 + self.w - 1.0;
            a = (1.0 - self.c1 / base.powf(self.p)) * a + self.c2 / base.powf(self.p + self.q);
            out.push(a);
        }
        out
    }

    pub fn bound(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(DgdError::arg("bound holds for t >= 1"));
        }
        Ok(*self.bound_series(t).last().unwrap())
    }

    /// Bound at `t = 1..=t_max` (index `t - 1`).
    pub fn bound_series(&self, t_max: usize) -> Vec<f64> {
        let (c1, c2, p, q, w) = (self.c1, self.c2, self.p, self.q, self.w);
        let qf = self.q_factor();
        let mut out = Vec::with_capacity(t_max);
        if p < 1.0 {
            let delta = qf * c2 / c1 * (c1 / w.powf(p)).exp();
            let mut exp_sum = Prefix::new(0, |s| c1 / (s as f64 + w).powf(p));
            let mut tail = Prefix::new(1, |s| (s as f64 + w).powf(-(p + q)));
            for t in 1..=t_max {
                let tf = t as f64;
                let lead = delta * ((t / 2) as f64 + w - 1.0).powf(-q);
                let r1 = (-exp_sum.upto(t)).exp() * self.a0;
                let half = t / 2;
                let r2 = if half >= 2 {
                    qf * c2 * (-c1 * tf / (2.0 * (tf + w).powf(p))).exp() * tail.upto(half)
                } else {
                    0.0
                };
                out.push(lead + r1 + r2);
            }
        } else {
            for t in 1..=t_max {
                let tw = t as f64 + w;
                let decay = (w / tw).powf(c1) * self.a0;
                let r = if q > c1 {
                    w.powf(c1 - q) / (q - c1) * qf * c2 / tw.powf(c1)
                } else if q == c1 {
                    (tw / w).ln() * qf * c2 / tw.powf(c1)
                } else {
                    1.0 / (c1 - q) * ((w + 1.0) / w).powf(c1) * qf * c2 / (tw + 1.0).powf(q)
                };
                out.push(decay + r);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricRecursion {
    pub a: f64,
    pub b: f64,
    pub w: f64,
    pub p: f64,
    pub beta: f64,
}

impl GeometricRecursion {
    pub fn new(a: f64, b: f64, w: f64, p: f64, beta: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) || !(a > 0.0) || !(w >= 1.0) || !(b >= 0.0) {
            return Err(DgdError::HypothesisViolation(format!(
                "need a>0, b>=0, w>=1, 0<p<=1; got a={a}, b={b}, w={w}, p={p}"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(DgdError::HypothesisViolation(format!("beta={beta} outside (0,1)")));
        }
        if !(a / w.powf(p) < 1.0) {
            return Err(DgdError::HypothesisViolation(format!(
                "a/w^p = {} must be < 1",
                a / w.powf(p)
            )));
        }
        Ok(GeometricRecursion { a, b, w, p, beta })
    }

    /// `B(0..=t_max)` with equality in the recursion.
    pub fn oracle(&self, t_max: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(t_max + 1);
        let mut v = 0.0;
        let mut pow = 1.0;
        out.push(v);
        for t in 0..t_max {
            let base = (t as f64 + self.w).powf(self.p);
            v = (1.0 - self.a / base) * v + self.b * pow / base;
            pow *= self.beta;
            out.push(v);
        }
        out
    }

    /// `sum_j c (j+1+w)^(a-1) beta^j / w^(a-1)` with `c = (w+1)/w`, or
    /// with `shift = 0` and `c = 1` for the uncorrected series.
    fn j_series(&self, shift: f64, c: f64) -> f64 {
        let (a, w, beta) = (self.a, self.w, self.beta);
        let mut sum = 0.0;
        let mut pow = 1.0;
        for j in 0..J_MAX_TERMS {
            let term = ((j as f64 + shift + w) / w).powf(a - 1.0) * pow;
            sum += term;
            if term < J_REL_TOL * sum {
                break;
            }
            pow *= beta;
        }
        c * sum
    }

    /// `J = ((w+1)/w) sum_j ((j+1+w)/w)^(a-1) beta^j`.
    pub fn j_constant(&self) -> f64 {
        self.j_series(1.0, (self.w + 1.0) / self.w)
    }

    /// Grid `l` over `[0, a-1]` with `beta e^(l/(w+1)) < 1` minimizing the
    /// `l`-form at `t`; `None` if `a < 1`.
    pub fn best_l(&self, t: usize) -> Option<f64> {
        let (a, w, beta) = (self.a, self.w, self.beta);
        if a < 1.0 {
            return None;
        }
        let step = (a - 1.0) / super::L_GRID as f64;
        let mut best: Option<(f64, f64)> = None;
        for k in 0..=super::L_GRID {
            let l = k as f64 * step;
            if beta * (l / (w + 1.0)).exp() >= 1.0 {
                break;
            }
            let v = self.l_form_log(l, t);
            if best.is_none_or(|(bv, _)| v < bv) {
                best = Some((v, l));
            }
            if step == 0.0 {
                break;
            }
        }
        best.map(|(_, l)| l)
    }

    fn l_form_log(&self, l: f64, t: usize) -> f64 {
        let w = self.w;
        ((w + 1.0) / w).ln() + l * (w + 1.0).ln()
            - (l + 1.0) * (t as f64 + 1.0 + w).ln()
            - (1.0 - self.beta * (l / (w + 1.0)).exp()).ln()
    }

    fn tail(&self, t: usize) -> f64 {
        self.b * self.beta.powi(t as i32) / (t as f64 + self.w)
    }

    /// `l`-form for `p = 1`:
    /// `((w+1)/w) b (w+1)^l / ((t+1+w)^(l+1) (1 - beta e^(l/(w+1)))) + b beta^t/(t+w)`.
    pub fn l_form(&self, l: f64, t: usize) -> Result<f64> {
        if !(l >= 0.0 && l <= self.a - 1.0 && self.beta * (l / (self.w + 1.0)).exp() < 1.0) {
            return Err(DgdError::Parameter(format!("l={l} infeasible")));
        }
        Ok(self.b * self.l_form_log(l, t).exp() + self.tail(t))
    }

    /// Bound on `B(t+1)`.
    ///
    /// For `p = 1`, the smaller of `J b w^(a-1)/(t+1+w)^a + b beta^t/(t+w)`
    /// and the `l`-form (with `l` given, or searched per `t`).
    /// For `p < 1`, `b/(w^p (1-beta)) (exp(-(a/2) t/(t+1+w)^p) + beta^floor(t/2))`.
    pub fn bound(&self, t: usize, l: Option<f64>) -> Result<f64> {
        if self.p < 1.0 {
            let (a, b, w, p, beta) = (self.a, self.b, self.w, self.p, self.beta);
            let tf = t as f64;
            return Ok(b / (w.powf(p) * (1.0 - beta))
                * ((-(a / 2.0) * tf / (tf + 1.0 + w).powf(p)).exp() + beta.powi((t / 2) as i32)));
        }
        self.bound_p1(t, self.j_constant(), l)
    }

    fn bound_p1(&self, t: usize, j: f64, l: Option<f64>) -> Result<f64> {
        let (a, b, w) = (self.a, self.b, self.w);
        let j_form = j * b * w.powf(a - 1.0) / (t as f64 + 1.0 + w).powf(a) + self.tail(t);
        let l = match l {
            Some(l) => Some(l),
            None => self.best_l(t),
        };
        Ok(match l {
            Some(l) => j_form.min(self.l_form(l, t)?),
            None => j_form,
        })
    }

    /// Bounds on `B(1..=t_max+1)` for `t = 0..=t_max`.
    pub fn bound_series(&self, t_max: usize, l: Option<f64>) -> Result<Vec<f64>> {
        if self.p < 1.0 {
            return (0..=t_max).map(|t| self.bound(t, l)).collect();
        }
        let j = self.j_constant();
        (0..=t_max).map(|t| self.bound_p1(t, j, l)).collect()
    }

    /// The `p = 1` forms with the series `sum_j ((j+w)/w)^(a-1) beta^j`, the
    /// power `(t+w)^a` and the factor `w/(w+1)`. These can fall below the
    /// recursion; kept for comparison.
    pub fn bound_p1_uncorrected(&self, t: usize) -> f64 {
        let (a, b, w, beta) = (self.a, self.b, self.w, self.beta);
        let j = self.j_series(0.0, 1.0);
        let j_form = j * b * w.powf(a - 1.0) / (t as f64 + w).powf(a) + self.tail(t);
        let l_form = self.best_l(t).map(|l| {
            b * w * (w + 1.0).powf(l - 1.0)
                / (t as f64 + 1.0 + w).powf(l + 1.0)
                / (1.0 - beta * (l / (w + 1.0)).exp())
                + self.tail(t)
        });
        l_form.map_or(j_form, |v| v.min(j_form))
    }
}
