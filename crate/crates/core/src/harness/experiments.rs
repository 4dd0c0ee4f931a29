//! The two reference experiments: the four-exponent least-squares sweep and
//! the two-agent divergence sweep.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::output::{fmt_f64, write_atomic, write_json};
use crate::engine::{run, AgentStates, LogSchedule, RunOptions, RunStatus, Trajectory};
use crate::error::{DgdError, Result};
use crate::objectives::eta;
use crate::rng::component_seed;
use crate::schedules::{check_schedule, AdmissibilityReport, StepsizeSchedule};
use crate::sharpness::{eigenvalues, eigenvalues_direct, SharpnessInstance};

pub const FIGURE1_EXPONENTS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
pub const FIGURE2_K: [f64; 5] = [2.1, 2.01, 2.0, 1.99, 1.9];
pub const FIGURE2_HORIZON: usize = 10_000;

/// The four initial stepsizes, in order:
/// `1/(5(mu+L))`, `1/(50(mu+L))`, `eta(1-beta)/(1.1 L(eta+L))`, `eta(1-beta)/(2 L(eta+L))`.
pub fn figure1_alpha0(mu: f64, l: f64, beta: f64) -> Result<[f64; 4]> {
    let eta = eta(mu, l)?;
    let c = eta * (1.0 - beta) / (l * (eta + l));
    Ok([
        1.0 / (5.0 * (mu + l)),
        1.0 / (50.0 * (mu + l)),
        c / 1.1,
        c / 2.0,
    ])
}

/// `Z = 16 L (eta + L) / (mu eta (1 - beta))`.
pub fn figure1_z(mu: f64, l: f64, beta: f64) -> Result<f64> {
    let eta = eta(mu, l)?;
    Ok(16.0 * l * (eta + l) / (mu * eta * (1.0 - beta)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Run {
    pub p: f64,
    /// 1-based index into the four initial stepsizes.
    pub index: usize,
    pub a: f64,
    pub w: f64,
    pub alpha0: f64,
    pub admissibility: AdmissibilityReport,
    pub status: RunStatus,
    pub final_total_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure1Summary {
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub eta: f64,
    pub beta: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    pub horizon: usize,
    pub runs: Vec<Figure1Run>,
}

/// Sixteen runs: `p` in [`FIGURE1_EXPONENTS`], `w = Z^(1/p)`, `a = alpha0 w^p`
/// for each of [`figure1_alpha0`]. The base config supplies the ensemble,
/// graph, initial state, horizon and log schedule. Writes
/// `figure1_p{p}.csv` (columns `t, a1..a4` of `total_err`) and
/// `figure1_summary.json`. Runs are not certified: the first two stepsizes
/// exceed the consensus bound by design.
pub fn cmd_figure1(base: &ExperimentConfig, out: &Path) -> Result<Figure1Summary> {
    let ensemble = base.build_ensemble()?;
    let mixing = base.build_mixing(ensemble.m())?;
    let initial = base.build_initial(ensemble.m(), ensemble.dim())?;
    let (mu, l, beta) = (ensemble.mu(), ensemble.l(), mixing.beta());
    let z = figure1_z(mu, l, beta)?;
    let alpha0 = figure1_alpha0(mu, l, beta)?;
    let opts = RunOptions {
        horizon: base.horizon,
        log: base.log.clone(),
        divergence_cap: base.divergence_cap,
    };

    let jobs: Vec<(f64, usize)> = FIGURE1_EXPONENTS
        .iter()
        .flat_map(|&p| (0..4).map(move |i| (p, i)))
        .collect();
    let results: Vec<(Figure1Run, Trajectory)> = jobs
        .par_iter()
        .map(|&(p, i)| {
            let w = z.powf(1.0 / p);
            let a = alpha0[i] * z;
            let sched = StepsizeSchedule::polynomial(a, w, p)?;
            let traj = run(&mixing, &ensemble, &initial, &sched, &opts)?;
            let run = Figure1Run {
                p,
                index: i + 1,
                a,
                w,
                alpha0: sched.alpha0(),
                admissibility: check_schedule(&sched, mu, l, beta)?,
                status: traj.status,
                final_total_err: traj.records.last().map(|r| r.total_err),
            };
            Ok((run, traj))
        })
        .collect::<Result<_>>()?;

    for (k, &p) in FIGURE1_EXPONENTS.iter().enumerate() {
        let panel = &results[4 * k..4 * k + 4];
        write_atomic(&out.join(format!("figure1_p{p}.csv")), panel_csv(panel).as_bytes())?;
    }
    let summary = Figure1Summary {
        mu,
        l,
        eta: eta(mu, l)?,
        beta,
        z,
        horizon: base.horizon,
        runs: results.into_iter().map(|(r, _)| r).collect(),
    };
    write_json(&out.join("figure1_summary.json"), &summary)?;
    Ok(summary)
}

/// Columns `t, a1, a2, a3, a4`; a run that stopped early leaves blanks.
fn panel_csv(panel: &[(Figure1Run, Trajectory)]) -> String {
    let mut ts: Vec<usize> = panel
        .iter()
        .flat_map(|(_, tr)| tr.records.iter().map(|r| r.t))
        .collect();
    ts.sort_unstable();
    ts.dedup();
    let mut s = String::from("t,a1,a2,a3,a4\n");
    let mut cursors = vec![0usize; panel.len()];
    for t in ts {
        s.push_str(&t.to_string());
        for (j, (_, tr)) in panel.iter().enumerate() {
            s.push(',');
            if let Some(r) = tr.records.get(cursors[j]).filter(|r| r.t == t) {
                s.push_str(&fmt_f64(r.total_err));
                cursors[j] += 1;
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Run {
    pub k: f64,
    pub alpha: f64,
    /// `alpha / threshold` with threshold `gamma (a1 - a2)/(2 a1 a2)`.
    pub alpha_over_threshold: f64,
    pub eigenvalues: [f64; 2],
    pub eigenvalues_direct: [f64; 2],
    /// Spectral radius of the iteration matrix exceeds one.
    pub predicts_divergence: bool,
    pub status: RunStatus,
    /// Run outcome matches the eigenvalue prediction.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Summary {
    pub a1: f64,
    pub a2: f64,
    pub gamma: f64,
    pub threshold: f64,
    pub initial: [f64; 2],
    pub horizon: usize,
    pub runs: Vec<Figure2Run>,
}

/// `a1 = 10`, `a2 = 6`, `gamma = 0.2`; `alpha = gamma (a1 + a2)/(k a1 a2)`
/// for `k` in [`FIGURE2_K`]. Writes `figure2.csv` (`t` and `|x(t)|` per `k`)
/// and `figure2_summary.json`.
pub fn cmd_figure2(seed: u64, horizon: usize, out: &Path) -> Result<Figure2Summary> {
    let (a1, a2, gamma) = (10.0, 6.0, 0.2);
    let s0 = AgentStates::random_uniform(2, 1, 0.0, 50.0, component_seed(seed, "figure2"))?;
    let opts = RunOptions::new(horizon, LogSchedule::Every { every: 10 });
    let base = SharpnessInstance::new(a1, a2, gamma, 0.0)?;
    let threshold = base.threshold();

    let mut runs = vec![];
    let mut trajs = vec![];
    for &k in &FIGURE2_K {
        let alpha = gamma * (a1 + a2) / (k * a1 * a2);
        let inst = SharpnessInstance::new(a1, a2, gamma, alpha)?;
        let (e, w, sched) = inst.to_problem()?;
        let traj = run(&w, &e, &s0, &sched, &opts)?;
        let ev = eigenvalues(&inst);
        let predicts_divergence = ev[0].abs().max(ev[1].abs()) > 1.0;
        runs.push(Figure2Run {
            k,
            alpha,
            alpha_over_threshold: alpha / threshold,
            eigenvalues: ev,
            eigenvalues_direct: eigenvalues_direct(&inst),
            predicts_divergence,
            status: traj.status,
            consistent: traj.diverged() == predicts_divergence,
        });
        trajs.push(traj);
    }

    let mut csv = String::from("t");
    for k in FIGURE2_K {
        csv.push_str(&format!(",k{k}"));
    }
    csv.push('\n');
    let longest = trajs.iter().map(|t| t.records.len()).max().unwrap_or(0);
    for i in 0..longest {
        let t = trajs
            .iter()
            .find_map(|tr| tr.records.get(i).map(|r| r.t))
            .ok_or_else(|| DgdError::Construction("empty sweep".into()))?;
        csv.push_str(&t.to_string());
        for tr in &trajs {
            csv.push(',');
            if let Some(r) = tr.records.get(i).filter(|r| r.t == t) {
                csv.push_str(&fmt_f64(r.total_err));
            }
        }
        csv.push('\n');
    }
    write_atomic(&out.join("figure2.csv"), csv.as_bytes())?;

    let x0 = s0.as_slice();
    let summary = Figure2Summary {
        a1,
        a2,
        gamma,
        threshold,
        initial: [x0[0], x0[1]],
        horizon,
        runs,
    };
    write_json(&out.join("figure2_summary.json"), &summary)?;
    Ok(summary)
}
