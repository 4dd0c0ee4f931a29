//! Helpers shared by the integration suites and the acceptance runner.
#![allow(dead_code)]

use dgd_core::engine::{average_dynamics_residual, dgd_step, metrics, AgentStates, LogSchedule};
use dgd_core::harness::config::{EnsembleSpec, ExperimentConfig, GraphSpec, ScheduleSpec};
use dgd_core::harness::cmd_run;
use dgd_core::network::{build_graph, metropolis_weights, GraphKind, MixingMatrix};
use dgd_core::objectives::{eta, random_least_squares};
use dgd_core::schedules::{consensus_bound, smooth_bound};
use dgd_core::Result;

pub const GRID_EXPONENTS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
pub const GRID_GRAPHS: [GraphSpec; 4] = [
    GraphSpec::Ring,
    GraphSpec::Complete,
    GraphSpec::ErdosRenyi { q: 0.5 },
    GraphSpec::Path,
];
pub const GRID_SIZE: usize = 24;
pub const GRID_HORIZON: usize = 20_000;

pub fn graph_kind(k: usize) -> GraphKind {
    match k % 4 {
        0 => GraphKind::Ring,
        1 => GraphKind::Path,
        2 => GraphKind::Complete,
        _ => GraphKind::ErdosRenyi { q: 0.4 },
    }
}

/// Seeded admissible configurations over graphs, exponents, stepsize
/// fractions and offsets. At `p = 1` the offset is chosen so that
/// `eta a = 3` (and `a >= 1.5`), which puts the rate envelope in scope.
pub fn grid_configs() -> Result<Vec<ExperimentConfig>> {
    let fractions = [0.9, 0.5, 0.2];
    let offsets = [2.0, 25.0, 1e3];
    let mut out = vec![];
    for k in 0..GRID_SIZE {
        let p = GRID_EXPONENTS[(k + k / 4) % 4];
        let fraction = fractions[k % 3];
        let mut cfg = ExperimentConfig {
            seed: 100 + k as u64,
            ensemble: EnsembleSpec::LeastSquares {
                m: if k % 2 == 0 { 10 } else { 6 },
                n: 5,
                dim: 3,
                noise_sigma: 0.1,
            },
            graph: GRID_GRAPHS[k % 4].clone(),
            horizon: GRID_HORIZON,
            log: LogSchedule::Geometric { per_decade: 20 },
            ..ExperimentConfig::default()
        };
        let w = if p < 1.0 {
            offsets[(k / 3) % 3]
        } else {
            let e = cfg.build_ensemble()?;
            let mix = cfg.build_mixing(e.m())?;
            let (mu, l) = (e.mu(), e.l());
            let alpha0 = fraction * smooth_bound(mu, l).min(consensus_bound(mu, l, mix.beta())?);
            let a = (3.0 / eta(mu, l)?).max(1.5);
            a / alpha0
        };
        cfg.schedule = ScheduleSpec::Scaled { fraction, w, p };
        out.push(cfg);
    }
    Ok(out)
}

fn close(a: f64, b: f64, tol: f64) -> std::result::Result<(), String> {
    if (a - b).abs() <= tol {
        Ok(())
    } else {
        Err(format!("|{a} - {b}| > {tol}"))
    }
}

/// `total^2 = consensus^2 + mean^2` to 1e-12 relative.
pub fn check_pythagorean(m: usize, dim: usize, seed: u64, spread: f64) -> std::result::Result<(), String> {
    let e = random_least_squares(m, 5, dim, 0.1, seed).map_err(|e| e.to_string())?;
    let s = AgentStates::random_uniform(m, dim, -spread, spread, seed ^ 0x9e37)
        .map_err(|e| e.to_string())?;
    let g = metrics(&s, e.x_star());
    let total = g.total_err * g.total_err;
    let parts = g.consensus_err * g.consensus_err + g.mean_err * g.mean_err;
    close(total, parts, 1e-12 * total.max(f64::MIN_POSITIVE))
}

/// The average moves by `-(alpha/m) sum grad f_i(x_i)` under a doubly
/// stochastic `W`.
pub fn check_average_residual(
    kind: usize,
    m: usize,
    seed: u64,
    alpha_fraction: f64,
) -> std::result::Result<(), String> {
    let err = |e: dgd_core::DgdError| e.to_string();
    let e = random_least_squares(m, 5, 3, 0.1, seed).map_err(err)?;
    let w = metropolis_weights(&build_graph(graph_kind(kind), m, seed).map_err(err)?).map_err(err)?;
    let s = AgentStates::random_uniform(m, 3, 0.0, 50.0, seed ^ 0x51).map_err(err)?;
    let alpha = alpha_fraction * smooth_bound(e.mu(), e.l());
    let next = dgd_step(&s, &w, &e, alpha).map_err(err)?;
    let r = average_dynamics_residual(&s, &next, &e, alpha);
    let avg: f64 = s.average().iter().map(|v| v * v).sum::<f64>().sqrt();
    if r <= 1e-12 * (1.0 + avg) {
        Ok(())
    } else {
        Err(format!("residual {r} at |xbar| = {avg}"))
    }
}

/// Row and column sums of Metropolis weights are one; entries nonnegative.
pub fn check_stochastic(kind: usize, m: usize, seed: u64) -> std::result::Result<(), String> {
    let g = build_graph(graph_kind(kind), m, seed).map_err(|e| e.to_string())?;
    let w = metropolis_weights(&g).map_err(|e| e.to_string())?;
    stochastic_defect(&w)
}

pub fn stochastic_defect(w: &MixingMatrix) -> std::result::Result<(), String> {
    let m = w.m();
    for i in 0..m {
        let row: f64 = (0..m).map(|j| w.get(i, j)).sum();
        let col: f64 = (0..m).map(|j| w.get(j, i)).sum();
        close(row, 1.0, 1e-12).map_err(|e| format!("row {i}: {e}"))?;
        close(col, 1.0, 1e-12).map_err(|e| format!("column {i}: {e}"))?;
        if (0..m).any(|j| w.get(i, j) < 0.0) {
            return Err(format!("negative entry in row {i}"));
        }
    }
    Ok(())
}

/// Two `run`s of the same config write byte-identical CSVs.
pub fn check_determinism(seed: u64, kind: usize, p_index: usize, horizon: usize) -> std::result::Result<(), String> {
    let cfg = ExperimentConfig {
        seed,
        ensemble: EnsembleSpec::LeastSquares { m: 6, n: 4, dim: 2, noise_sigma: 0.1 },
        graph: GRID_GRAPHS[kind % 4].clone(),
        schedule: ScheduleSpec::Scaled { fraction: 0.9, w: 1e4, p: GRID_EXPONENTS[p_index % 4] },
        horizon,
        ..ExperimentConfig::default()
    };
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    cmd_run(&cfg, a.path()).map_err(|e| e.to_string())?;
    cmd_run(&cfg, b.path()).map_err(|e| e.to_string())?;
    for name in ["trajectory.csv", "consensus_certificate.csv", "rate_certificate.csv", "trajectory.status.json"] {
        let (pa, pb) = (a.path().join(name), b.path().join(name));
        if !pa.exists() && !pb.exists() {
            continue;
        }
        let (x, y) = (std::fs::read(&pa), std::fs::read(&pb));
        match (x, y) {
            (Ok(x), Ok(y)) if x == y => {}
            _ => return Err(format!("{name} differs between reruns")),
        }
    }
    Ok(())
}
