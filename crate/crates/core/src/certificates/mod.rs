//! Closed-form guarantees evaluated pointwise in `t`: the uniform radius
//! `R`, the consensus envelope, and the optimality envelopes for `p < 1`
//! and `p = 1`. [`recursions`] holds the two scalar recursion bounds the
//! envelopes are built from, with brute-force oracles.
//!
//! Series evaluators walk a sorted list of times once. Every sum they need
//! is a prefix sum over `s`, accumulated term by term in increasing `s`,
//! so the value at each `t` is bitwise the direct summation.

pub mod recursions;

use std::f64::consts::E;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{metrics, AgentStates, Metrics};
use crate::error::{DgdError, Result};
use crate::harness::output::{fmt_f64, write_atomic};
use crate::network::MixingMatrix;
use crate::objectives::{eta, CostEnsemble};
use crate::schedules::{check_schedule, AdmissibilityReport, StepsizeSchedule};

/// Number of grid cells in the `l` search.
pub const L_GRID: usize = 1000;

/// Norms of the initial state that seed every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGaps {
    /// `|xbar(0) - x*|`
    pub mean: f64,
    /// `|x(0) - xbar(0)|`
    pub consensus: f64,
    /// `|x(0) - x*|`
    pub total: f64,
}

impl InitialGaps {
    pub fn from_states(s0: &AgentStates, x_star: &[f64]) -> Self {
        Self::from(metrics(s0, x_star))
    }
}

impl From<Metrics> for InitialGaps {
    fn from(m: Metrics) -> Self {
        InitialGaps {
            mean: m.mean_err,
            consensus: m.consensus_err,
            total: m.total_err,
        }
    }
}

/// `R = max{mean_gap0, (L/eta) cons_gap0, sqrt(m) D alpha0 / (eta (1-beta)/L - (eta+L) alpha0)}`.
#[allow(clippy::too_many_arguments)]
pub fn uniform_radius(
    mu: f64,
    l: f64,
    beta: f64,
    d_grad: f64,
    m: usize,
    alpha0: f64,
    mean_gap0: f64,
    cons_gap0: f64,
) -> Result<f64> {
    let eta = eta(mu, l)?;
    let denom = eta * (1.0 - beta) / l - (eta + l) * alpha0;
    if !(denom > 0.0) {
        return Err(DgdError::CertificateUnavailable(format!(
            "alpha0={alpha0} not below the strict threshold {}",
            eta * (1.0 - beta) / (l * (eta + l))
        )));
    }
    let drift = (m as f64).sqrt() * d_grad * alpha0 / denom;
    Ok(mean_gap0.max(l / eta * cons_gap0).max(drift))
}

/// Everything the envelopes depend on, derived once per problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub eta: f64,
    pub beta: f64,
    #[serde(rename = "D")]
    pub d_grad: f64,
    pub m: usize,
    pub alpha0: f64,
    pub a: f64,
    pub w: f64,
    pub p: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// `d = 2 L R + sqrt(m) D`
    pub d_drift: f64,
    /// `R0 = cons_gap0 + d alpha0 / (1 - beta)`
    #[serde(rename = "R0")]
    pub r0: f64,
    /// `((w+1)/w)^(2p)`
    pub q1: f64,
    /// `Q1 L d 2^p / eta`
    pub q0: f64,
    pub gaps: InitialGaps,
    pub admissibility: AdmissibilityReport,
}

impl ProblemConstants {
    /// Requires a polynomial schedule whose `alpha0` is strictly below the
    /// consensus threshold, so that `R` is finite.
    pub fn new(
        mu: f64,
        l: f64,
        beta: f64,
        d_grad: f64,
        m: usize,
        sched: &StepsizeSchedule,
        gaps: InitialGaps,
    ) -> Result<Self> {
        let StepsizeSchedule::Polynomial { a, w, p } = *sched else {
            return Err(DgdError::CertificateUnavailable(
                "envelopes need a polynomial schedule".into(),
            ));
        };
        let admissibility = check_schedule(sched, mu, l, beta)?;
        let eta = eta(mu, l)?;
        let alpha0 = sched.alpha0();
        let r = uniform_radius(mu, l, beta, d_grad, m, alpha0, gaps.mean, gaps.consensus)?;
        let d_drift = 2.0 * l * r + (m as f64).sqrt() * d_grad;
        let r0 = gaps.consensus + d_drift * alpha0 / (1.0 - beta);
        let q1 = ((w + 1.0) / w).powf(2.0 * p);
        let q0 = q1 * l * d_drift * 2f64.powf(p) / eta;
        Ok(ProblemConstants {
            mu,
            l,
            eta,
            beta,
            d_grad,
            m,
            alpha0,
            a,
            w,
            p,
            r,
            d_drift,
            r0,
            q1,
            q0,
            gaps,
            admissibility,
        })
    }

    pub fn from_problem(
        e: &CostEnsemble,
        w: &MixingMatrix,
        sched: &StepsizeSchedule,
        s0: &AgentStates,
    ) -> Result<Self> {
        let gaps = InitialGaps::from_states(s0, e.x_star());
        Self::new(e.mu(), e.l(), w.beta(), e.d(), e.m(), sched, gaps)
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.a / (t as f64 + self.w).powf(self.p)
    }

    fn require_weak(&self) -> Result<()> {
        if self.admissibility.admissible_weak {
            Ok(())
        } else {
            Err(DgdError::CertificateUnavailable(format!(
                "alpha0={} exceeds min(2/(mu+L)={}, consensus bound={})",
                self.alpha0, self.admissibility.bound_smooth, self.admissibility.bound_consensus
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// Consensus error envelope.
    Consensus,
    /// Optimality envelope for `0 < p < 1`.
    RateSub,
    /// Optimality envelope for `p = 1`.
    RateP1,
    /// Power-law forced scalar recursion.
    PowerRecursion,
    /// Geometrically forced scalar recursion.
    GeometricRecursion,
}

/// An envelope evaluated on a grid of times, with its per-term breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub theorem: Theorem,
    pub constants: ProblemConstants,
    /// Free parameter `l` of the `p = 1` envelope, when used.
    pub l: Option<f64>,
    pub t: Vec<usize>,
    pub values: Vec<f64>,
    pub components: Vec<(String, Vec<f64>)>,
}

impl BoundCertificate {
    pub fn value_at(&self, t: usize) -> Option<f64> {
        self.t.binary_search(&t).ok().map(|i| self.values[i])
    }

    pub fn component(&self, name: &str) -> Option<&[f64]> {
        self.components
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Columns `t, envelope`, then one per component.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["t".to_string(), "envelope".to_string()];
        header.extend(self.components.iter().map(|(n, _)| n.clone()));
        w.write_record(&header).map_err(crate::engine::csv_err)?;
        for (i, t) in self.t.iter().enumerate() {
            let mut row = vec![t.to_string(), fmt_f64(self.values[i])];
            row.extend(self.components.iter().map(|(_, v)| fmt_f64(v[i])));
            w.write_record(&row).map_err(crate::engine::csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| DgdError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }
}

/// Running sum of `f(s)` for `s` in `start..end`, extended as `end` grows.
pub(crate) struct Prefix<F: Fn(usize) -> f64> {
    f: F,
    next: usize,
    sum: f64,
}

impl<F: Fn(usize) -> f64> Prefix<F> {
    pub(crate) fn new(start: usize, f: F) -> Self {
        Prefix { f, next: start, sum: 0.0 }
    }

    /// Sum over `start..end`; `end` must not decrease between calls
    /// (ranges shorter than what was already summed yield the current sum
    /// only when empty, which is all the callers need).
    pub(crate) fn upto(&mut self, end: usize) -> f64 {
        while self.next < end {
            self.sum += (self.f)(self.next);
            self.next += 1;
        }
        self.sum
    }
}

fn sorted(ts: &[usize]) -> Result<Vec<usize>> {
    if ts.windows(2).any(|p| p[0] >= p[1]) {
        return Err(DgdError::arg("times must be strictly increasing"));
    }
    Ok(ts.to_vec())
}

/// `d/(1-beta) alpha(floor(t/2)) + beta^t cons_gap0 + beta^(t/2) d alpha0/(1-beta)`.
pub fn consensus_envelope(t: usize, c: &ProblemConstants) -> Result<f64> {
    Ok(consensus_series(c, &[t])?.values[0])
}

pub fn consensus_series(c: &ProblemConstants, ts: &[usize]) -> Result<BoundCertificate> {
    c.require_weak()?;
    let ts = sorted(ts)?;
    let k = c.d_drift / (1.0 - c.beta);
    let mut drift = Vec::with_capacity(ts.len());
    let mut initial = Vec::with_capacity(ts.len());
    let mut transient = Vec::with_capacity(ts.len());
    let mut values = Vec::with_capacity(ts.len());
    for &t in &ts {
        let d1 = k * c.alpha(t / 2);
        let d2 = c.beta.powf(t as f64) * c.gaps.consensus;
        let d3 = c.beta.powf(t as f64 / 2.0) * k * c.alpha0;
        drift.push(d1);
        initial.push(d2);
        transient.push(d3);
        values.push(d1 + d2 + d3);
    }
    Ok(BoundCertificate {
        theorem: Theorem::Consensus,
        constants: c.clone(),
        l: None,
        t: ts,
        values,
        components: vec![
            ("drift".into(), drift),
            ("initial".into(), initial),
            ("transient".into(), transient),
        ],
    })
}

/// Terms of the `p < 1` optimality envelope at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubTerms {
    pub value: f64,
    pub leading: f64,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
}

pub fn rate_envelope_sub(t: usize, c: &ProblemConstants) -> Result<SubTerms> {
    let cert = rate_sub_series(c, &[t])?;
    let comp = |n: &str| cert.component(n).unwrap()[0];
    Ok(SubTerms {
        value: cert.values[0],
        leading: comp("leading"),
        y1: comp("y1"),
        y2: comp("y2"),
        y3: comp("y3"),
    })
}

/// The leading term is `(Q0 sqrt(e) a/(1-beta)) (floor(t/2) + w - 1)^(-p)`,
/// which is `+inf` (a vacuous bound) when `w = 1` and `t <= 1`.
pub fn rate_sub_series(c: &ProblemConstants, ts: &[usize]) -> Result<BoundCertificate> {
    if c.p >= 1.0 {
        return Err(DgdError::WrongTheorem(
            "p = 1 uses the p=1 envelope".into(),
        ));
    }
    c.require_weak()?;
    let ts = sorted(ts)?;
    let (a, w, p, eta, beta) = (c.a, c.w, c.p, c.eta, c.beta);
    let one_m_beta = 1.0 - beta;
    let sqrt_beta = beta.sqrt();
    let lead_k = c.q0 * E.sqrt() * a / one_m_beta;
    let y3_k = a * c.l * c.r0 / (one_m_beta * w.powf(p)) / (1.0 - sqrt_beta);

    let mut exp_sum = Prefix::new(0, |s| eta * a / (s as f64 + w).powf(p));
    let mut sq_sum = Prefix::new(1, |s| a * a / (w + s as f64).powf(2.0 * p));

    let n = ts.len();
    let (mut lead, mut y1, mut y2, mut y3, mut values) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for &t in &ts {
        let tf = t as f64;
        let base = (t / 2) as f64 + w - 1.0;
        let l0 = if base > 0.0 { lead_k * base.powf(-p) } else { f64::INFINITY };
        let v1 = (-exp_sum.upto(t)).exp() * c.gaps.total;
        let half = t / 2;
        let v2 = if half >= 2 {
            c.q0 / one_m_beta * (-(eta * a / 2.0) * tf / (tf + w).powf(p)).exp() * sq_sum.upto(half)
        } else {
            0.0
        };
        let k3 = (t as i64 - 1).div_euclid(2);
        let v3 = y3_k
            * ((-(eta * a / 2.0) * (tf - 1.0) / (tf + w).powf(p)).exp()
                + sqrt_beta.powi(k3 as i32));
        lead.push(l0);
        y1.push(v1);
        y2.push(v2);
        y3.push(v3);
        values.push(l0 + v1 + v2 + v3);
    }
    Ok(BoundCertificate {
        theorem: Theorem::RateSub,
        constants: c.clone(),
        l: None,
        t: ts,
        values,
        components: vec![
            ("leading".into(), lead),
            ("y1".into(), y1),
            ("y2".into(), y2),
            ("y3".into(), y3),
        ],
    })
}

/// Terms of the `p = 1` optimality envelope at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P1Terms {
    pub value: f64,
    pub initial: f64,
    pub leading: f64,
    pub y4: f64,
}

pub fn rate_envelope_p1(t: usize, c: &ProblemConstants, l: f64) -> Result<P1Terms> {
    let cert = rate_p1_series(c, &[t], Some(l))?;
    let comp = |n: &str| cert.component(n).unwrap()[0];
    Ok(P1Terms {
        value: cert.values[0],
        initial: comp("initial"),
        leading: comp("leading"),
        y4: comp("y4"),
    })
}

fn l_feasible(l: f64, a: f64, w: f64, beta: f64) -> bool {
    l >= 0.0 && l <= a - 1.0 && (l / (w + 1.0)).exp() * beta.sqrt() < 1.0
}

/// `ln` of `w (w+1)^(l-1) / ((1 - e^(l/(w+1)) sqrt(beta)) (t+w)^(l+1))`.
fn y4_log_term(l: f64, w: f64, beta: f64, t: f64) -> f64 {
    w.ln() + (l - 1.0) * (w + 1.0).ln()
        - (l + 1.0) * (t + w).ln()
        - (1.0 - (l / (w + 1.0)).exp() * beta.sqrt()).ln()
}

/// Grid search of `l` over `[0, a-1]` in steps of `(a-1)/1000`, keeping
/// `e^(l/(w+1)) sqrt(beta) < 1`, minimizing the `l`-dependent term of the
/// `p = 1` envelope at `t_ref`.
pub fn choose_l(a: f64, w: f64, beta: f64, t_ref: usize) -> Result<f64> {
    if !(a >= 1.0) {
        return Err(DgdError::Parameter(format!(
            "no l in [0, a-1] for a={a} < 1"
        )));
    }
    let step = (a - 1.0) / L_GRID as f64;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=L_GRID {
        let l = if k == L_GRID { a - 1.0 } else { k as f64 * step };
        if !l_feasible(l, a, w, beta) {
            break;
        }
        let v = y4_log_term(l, w, beta, t_ref as f64);
        if v < best.0 {
            best = (v, l);
        }
        if step == 0.0 {
            break;
        }
    }
    Ok(best.1)
}

/// `(w/(t+w))^(eta a) total_gap0 + 2 sqrt(e) Q0 a/((1-beta)(t+w+1)) + Y4`.
/// With `l = None` the parameter is chosen by [`choose_l`] at the last time.
pub fn rate_p1_series(
    c: &ProblemConstants,
    ts: &[usize],
    l: Option<f64>,
) -> Result<BoundCertificate> {
    if c.p != 1.0 {
        return Err(DgdError::WrongTheorem(format!(
            "p={} uses the p<1 envelope",
            c.p
        )));
    }
    c.require_weak()?;
    let (a, w, eta, beta) = (c.a, c.w, c.eta, c.beta);
    if !(a > 2.0 / eta) {
        return Err(DgdError::HypothesisViolation(format!(
            "a={a} must exceed 2/eta={}",
            2.0 / eta
        )));
    }
    let ts = sorted(ts)?;
    let l = match l {
        Some(l) => l,
        None => choose_l(a, w, beta, ts.last().copied().unwrap_or(0))?,
    };
    if !l_feasible(l, a, w, beta) {
        return Err(DgdError::Parameter(format!(
            "l={l} outside [0, a-1] or e^(l/(w+1)) sqrt(beta) >= 1"
        )));
    }
    let one_m_beta = 1.0 - beta;
    let sqrt_beta = beta.sqrt();
    let lead_k = 2.0 * E.sqrt() * c.q0 / one_m_beta * a;
    let y4_k = a * c.l * c.r0 / one_m_beta;

    let n = ts.len();
    let (mut init, mut lead, mut y4, mut values) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for &t in &ts {
        let tf = t as f64;
        let v0 = (w / (tf + w)).powf(eta * a) * c.gaps.total;
        let v1 = lead_k / (tf + w + 1.0);
        let v4 = y4_k * (y4_log_term(l, w, beta, tf).exp() + sqrt_beta.powf(tf) / (tf - 1.0 + w));
        init.push(v0);
        lead.push(v1);
        y4.push(v4);
        values.push(v0 + v1 + v4);
    }
    Ok(BoundCertificate {
        theorem: Theorem::RateP1,
        constants: c.clone(),
        l: Some(l),
        t: ts,
        values,
        components: vec![
            ("initial".into(), init),
            ("leading".into(), lead),
            ("y4".into(), y4),
        ],
    })
}

/// The optimality envelope matching the schedule's exponent.
pub fn rate_series(c: &ProblemConstants, ts: &[usize]) -> Result<BoundCertificate> {
    if c.p < 1.0 {
        rate_sub_series(c, ts)
    } else {
        rate_p1_series(c, ts, None)
    }
}
