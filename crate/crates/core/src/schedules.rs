//! Stepsize laws `alpha(t) = a / (t + w)^p` (or a constant) and their
//! admissibility against the smoothness and consensus thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{DgdError, Result};
use crate::objectives::eta;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub enum StepsizeSchedule {
    Polynomial { a: f64, w: f64, p: f64 },
    Constant { alpha: f64 },
}

/// Wire form: `{"kind":"polynomial","a":..,"w":..,"p":..}` or
/// `{"kind":"constant","alpha":..}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ScheduleRepr {
    Polynomial { a: f64, w: f64, p: f64 },
    Constant { alpha: f64 },
}

impl TryFrom<ScheduleRepr> for StepsizeSchedule {
    type Error = DgdError;
    fn try_from(r: ScheduleRepr) -> Result<Self> {
        match r {
            ScheduleRepr::Polynomial { a, w, p } => StepsizeSchedule::polynomial(a, w, p),
            ScheduleRepr::Constant { alpha } => StepsizeSchedule::constant(alpha),
        }
    }
}

impl From<StepsizeSchedule> for ScheduleRepr {
    fn from(s: StepsizeSchedule) -> Self {
        match s {
            StepsizeSchedule::Polynomial { a, w, p } => ScheduleRepr::Polynomial { a, w, p },
            StepsizeSchedule::Constant { alpha } => ScheduleRepr::Constant { alpha },
        }
    }
}

impl StepsizeSchedule {
    /// Requires `a > 0`, `w >= 1`, `0 < p <= 1`.
    pub fn polynomial(a: f64, w: f64, p: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(DgdError::arg(format!("scale a={a} must be positive")));
        }
        if !(w >= 1.0 && w.is_finite()) {
            return Err(DgdError::arg(format!("offset w={w} must be >= 1")));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(DgdError::arg(format!("exponent p={p} outside (0, 1]")));
        }
        Ok(StepsizeSchedule::Polynomial { a, w, p })
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(DgdError::arg(format!("constant stepsize {alpha} must be positive")));
        }
        Ok(StepsizeSchedule::Constant { alpha })
    }

    /// Polynomial schedule with a prescribed initial stepsize: `a = alpha0 * w^p`.
    pub fn with_initial(alpha0: f64, w: f64, p: f64) -> Result<Self> {
        Self::polynomial(alpha0 * w.powf(p), w, p)
    }

    pub fn alpha(&self, t: usize) -> f64 {
        match *self {
            StepsizeSchedule::Polynomial { a, w, p } => a / (t as f64 + w).powf(p),
            StepsizeSchedule::Constant { alpha } => alpha,
        }
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha(0)
    }

    pub fn exponent(&self) -> Option<f64> {
        match *self {
            StepsizeSchedule::Polynomial { p, .. } => Some(p),
            StepsizeSchedule::Constant { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    /// `2 / (mu + L)`.
    pub bound_smooth: f64,
    /// `eta (1 - beta) / (L (eta + L))`.
    pub bound_consensus: f64,
    pub alpha0: f64,
    /// `alpha0 <= min(bound_smooth, bound_consensus)`.
    pub admissible_weak: bool,
    /// `alpha0 < bound_consensus`, needed for a finite uniform radius.
    pub admissible_strict: bool,
    /// `a > 2 / eta`; only meaningful for `p = 1`, `None` otherwise.
    pub p1_rate_ok: Option<bool>,
}

pub fn smooth_bound(mu: f64, l: f64) -> f64 {
    2.0 / (mu + l)
}

pub fn consensus_bound(mu: f64, l: f64, beta: f64) -> Result<f64> {
    let eta = eta(mu, l)?;
    Ok(eta * (1.0 - beta) / (l * (eta + l)))
}

pub fn check_schedule(
    s: &StepsizeSchedule,
    mu: f64,
    l: f64,
    beta: f64,
) -> Result<AdmissibilityReport> {
    if !(beta >= 0.0) {
        return Err(DgdError::arg(format!("beta={beta} must be >= 0")));
    }
    if beta >= 1.0 {
        return Err(DgdError::AssumptionViolation(format!(
            "beta={beta} >= 1: consensus impossible"
        )));
    }
    let eta = eta(mu, l)?;
    let bound_smooth = smooth_bound(mu, l);
    let bound_consensus = consensus_bound(mu, l, beta)?;
    let alpha0 = s.alpha0();
    let p1_rate_ok = match *s {
        StepsizeSchedule::Polynomial { a, p, .. } if p == 1.0 => Some(a > 2.0 / eta),
        _ => None,
    };
    Ok(AdmissibilityReport {
        bound_smooth,
        bound_consensus,
        alpha0,
        admissible_weak: alpha0 <= bound_smooth.min(bound_consensus),
        admissible_strict: alpha0 < bound_consensus,
        p1_rate_ok,
    })
}
