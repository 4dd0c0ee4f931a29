//! Config-driven experiments and their artifacts.

pub mod config;
pub mod experiments;
pub mod output;
pub mod slope;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::certificates::{
    consensus_series, rate_series, BoundCertificate, InitialGaps, ProblemConstants,
};
use crate::engine::{read_records, run, Record, RunStatus, Trajectory};
use crate::error::{DgdError, Result};
use crate::network::{validate_mixing, ValidationReport};
use crate::objectives::eta;
use crate::schedules::{check_schedule, AdmissibilityReport, StepsizeSchedule};

pub use config::{ExperimentConfig, Problem};
pub use experiments::{cmd_figure1, cmd_figure2, Figure1Summary, Figure2Summary};
pub use slope::{tail_slope, tail_slope_window, SlopeEstimate};

/// Relative slack allowed when comparing a bound with what it bounds.
pub const DOMINANCE_REL_SLACK: f64 = 1e-9;

pub fn dominates(bound: f64, value: f64) -> bool {
    value <= bound * (1.0 + DOMINANCE_REL_SLACK)
}

/// Outcome of checking one envelope against a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub holds: bool,
    /// Largest `empirical / envelope` over logged times.
    pub worst_ratio: f64,
    /// First time the envelope failed, if any.
    pub first_violation: Option<usize>,
}

pub fn check_dominance(bound: &BoundCertificate, empirical: &[f64]) -> DominanceCheck {
    let mut worst: f64 = 0.0;
    let mut first = None;
    for ((&t, &b), &v) in bound.t.iter().zip(&bound.values).zip(empirical) {
        if b > 0.0 {
            worst = worst.max(v / b);
        } else if v > 0.0 {
            worst = f64::INFINITY;
        }
        if first.is_none() && !dominates(b, v) {
            first = Some(t);
        }
    }
    DominanceCheck {
        holds: first.is_none(),
        worst_ratio: worst,
        first_violation: first,
    }
}

/// The uniform radius: `mean_err <= R` and `consensus_err <= eta R / L`.
pub fn check_radius(c: &ProblemConstants, records: &[Record]) -> DominanceCheck {
    let cons_cap = c.eta * c.r / c.l;
    let mut worst: f64 = 0.0;
    let mut first = None;
    for r in records {
        for (cap, v) in [(c.r, r.mean_err), (cons_cap, r.consensus_err)] {
            worst = worst.max(if cap > 0.0 { v / cap } else if v > 0.0 { f64::INFINITY } else { 0.0 });
            if first.is_none() && !dominates(cap, v) {
                first = Some(r.t);
            }
        }
    }
    DominanceCheck {
        holds: first.is_none(),
        worst_ratio: worst,
        first_violation: first,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub constants: ProblemConstants,
    pub radius: DominanceCheck,
    pub consensus: DominanceCheck,
    /// `None` with `rate_unavailable` set when the optimality envelope's
    /// hypotheses fail (for example `a <= 2/eta` at `p = 1`).
    pub rate: Option<DominanceCheck>,
    pub rate_unavailable: Option<String>,
    pub l: Option<f64>,
}

impl CertificateReport {
    pub fn holds(&self) -> bool {
        self.radius.holds && self.consensus.holds && self.rate.as_ref().is_none_or(|r| r.holds)
    }
}

/// Evaluate every envelope at the logged times and compare. Returns the
/// report and the certificates that could be formed.
pub fn certify_records(
    c: &ProblemConstants,
    records: &[Record],
) -> Result<(CertificateReport, Vec<BoundCertificate>)> {
    let ts: Vec<usize> = records.iter().map(|r| r.t).collect();
    let cons = consensus_series(c, &ts)?;
    let cons_emp: Vec<f64> = records.iter().map(|r| r.consensus_err).collect();
    let mean_emp: Vec<f64> = records.iter().map(|r| r.mean_err).collect();
    let mut certs = vec![];
    let consensus = check_dominance(&cons, &cons_emp);
    certs.push(cons);
    let (rate, rate_unavailable, l) = match rate_series(c, &ts) {
        Ok(cert) => {
            let check = check_dominance(&cert, &mean_emp);
            let l = cert.l;
            certs.push(cert);
            (Some(check), None, l)
        }
        Err(e @ (DgdError::HypothesisViolation(_) | DgdError::Parameter(_))) => {
            (None, Some(e.to_string()), None)
        }
        Err(e) => return Err(e),
    };
    Ok((
        CertificateReport {
            constants: c.clone(),
            radius: check_radius(c, records),
            consensus,
            rate,
            rate_unavailable,
            l,
        },
        certs,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub m: usize,
    pub dim: usize,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub eta: f64,
    pub beta: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub schedule: StepsizeSchedule,
    pub admissibility: Option<AdmissibilityReport>,
    pub status: RunStatus,
    pub final_record: Option<Record>,
    pub certificates: Option<CertificateReport>,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }
}

fn cert_file_name(cert: &BoundCertificate) -> &'static str {
    match cert.theorem {
        crate::certificates::Theorem::Consensus => "consensus_certificate.csv",
        _ => "rate_certificate.csv",
    }
}

/// Run one configuration and write `trajectory.csv`,
/// `trajectory.status.json`, certificate CSVs and `summary.json` to `out`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    let problem = cfg.build()?;
    let traj = run(
        &problem.mixing,
        &problem.ensemble,
        &problem.initial,
        &problem.schedule,
        &problem.options,
    )?;
    let mut files = vec![];
    let traj_path = out.join("trajectory.csv");
    traj.write(&traj_path)?;
    files.push(traj_path.clone());
    files.push(traj_path.with_extension("status.json"));

    let mut certificates = None;
    let mut r = None;
    if cfg.certificates {
        let c = ProblemConstants::from_problem(
            &problem.ensemble,
            &problem.mixing,
            &problem.schedule,
            &problem.initial,
        )?;
        r = Some(c.r);
        let (report, certs) = certify_records(&c, &traj.records)?;
        for cert in &certs {
            let p = out.join(cert_file_name(cert));
            cert.write(&p)?;
            files.push(p);
        }
        certificates = Some(report);
    }
    let summary = summarize(cfg, &problem, &traj, r, certificates, files)?;
    let summary_path = out.join("summary.json");
    let mut with_self = summary.clone();
    with_self.files.push(summary_path.clone());
    output::write_json(&summary_path, &with_self)?;
    Ok(with_self)
}

fn summarize(
    cfg: &ExperimentConfig,
    problem: &Problem,
    traj: &Trajectory,
    r: Option<f64>,
    certificates: Option<CertificateReport>,
    files: Vec<PathBuf>,
) -> Result<RunSummary> {
    let e = &problem.ensemble;
    let beta = problem.mixing.beta();
    let admissibility = check_schedule(&problem.schedule, e.mu(), e.l(), beta).ok();
    Ok(RunSummary {
        seed: cfg.seed,
        m: e.m(),
        dim: e.dim(),
        mu: e.mu(),
        l: e.l(),
        eta: eta(e.mu(), e.l())?,
        beta,
        d: e.d(),
        r,
        schedule: problem.schedule,
        admissibility,
        status: traj.status,
        final_record: traj.records.last().copied(),
        certificates,
        files,
    })
}

/// Evaluate the envelopes for a stored trajectory. The `t = 0` row supplies
/// the initial gaps; the config supplies the problem constants.
pub fn cmd_certify(cfg: &ExperimentConfig, trajectory: &Path, out: &Path) -> Result<CertificateReport> {
    let problem = cfg.build()?;
    let records = read_records(trajectory)?;
    let first = records
        .first()
        .filter(|r| r.t == 0)
        .ok_or_else(|| DgdError::arg("trajectory has no t = 0 row"))?;
    let gaps = InitialGaps::from(first.metrics());
    let e = &problem.ensemble;
    let c = ProblemConstants::new(
        e.mu(),
        e.l(),
        problem.mixing.beta(),
        e.d(),
        e.m(),
        &problem.schedule,
        gaps,
    )?;
    let (report, certs) = certify_records(&c, &records)?;
    for cert in &certs {
        cert.write(&out.join(cert_file_name(cert)))?;
    }
    output::write_json(&out.join("certify.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub mixing: ValidationReport,
    pub beta: f64,
    pub admissibility: Option<AdmissibilityReport>,
    pub build_error: Option<String>,
}

impl ValidateReport {
    pub fn ok(&self) -> bool {
        self.mixing.is_valid() && self.build_error.is_none()
    }
}

/// Check the config and the mixing matrix without running anything.
pub fn cmd_validate(cfg: &ExperimentConfig) -> Result<ValidateReport> {
    let ensemble = cfg.build_ensemble().map_err(|e| DgdError::config("ensemble", e.to_string()))?;
    let mixing = cfg
        .build_mixing(ensemble.m())
        .map_err(|e| DgdError::config("graph", e.to_string()))?;
    let report = validate_mixing(&mixing);
    let admissibility = cfg
        .schedule
        .resolve(ensemble.mu(), ensemble.l(), mixing.beta())
        .and_then(|s| check_schedule(&s, ensemble.mu(), ensemble.l(), mixing.beta()))
        .ok();
    Ok(ValidateReport {
        mixing: report,
        beta: mixing.beta(),
        admissibility,
        build_error: cfg.build().err().map(|e| e.to_string()),
    })
}
