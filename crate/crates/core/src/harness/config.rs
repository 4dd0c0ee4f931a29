//! Experiment configuration: one JSON document, validated as a whole before
//! anything runs. All randomness derives from `seed` through named
//! component streams.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{AgentStates, LogSchedule, RunOptions, DEFAULT_DIVERGENCE_CAP};
use crate::error::{DgdError, Result};
use crate::network::{build_graph, metropolis_weights, two_agent_matrix, GraphKind, MixingMatrix, MixingRecord};
use crate::objectives::{quadratic_pair, random_least_squares, CostEnsemble, LocalCost};
use crate::rng::component_seed;
use crate::schedules::{check_schedule, consensus_bound, smooth_bound, StepsizeSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleSpec {
    LeastSquares {
        m: usize,
        n: usize,
        dim: usize,
        noise_sigma: f64,
    },
    QuadraticPair {
        a1: f64,
        a2: f64,
    },
    Explicit {
        costs: Vec<LocalCost>,
    },
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec::LeastSquares {
            m: 10,
            n: 5,
            dim: 3,
            noise_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Ring,
    Path,
    Complete,
    ErdosRenyi { q: f64 },
    TwoAgent { gamma: f64 },
    Explicit(MixingRecord),
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec::Ring
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Polynomial { a: f64, w: f64, p: f64 },
    Constant { alpha: f64 },
    /// `alpha0 = fraction * min(2/(mu+L), consensus bound)`, `a = alpha0 w^p`.
    Scaled { fraction: f64, w: f64, p: f64 },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::Scaled {
            fraction: 0.9,
            w: 1e4,
            p: 0.5,
        }
    }
}

impl ScheduleSpec {
    pub fn resolve(&self, mu: f64, l: f64, beta: f64) -> Result<StepsizeSchedule> {
        match *self {
            ScheduleSpec::Polynomial { a, w, p } => StepsizeSchedule::polynomial(a, w, p),
            ScheduleSpec::Constant { alpha } => StepsizeSchedule::constant(alpha),
            ScheduleSpec::Scaled { fraction, w, p } => {
                if !(fraction > 0.0) {
                    return Err(DgdError::arg(format!("fraction={fraction} must be positive")));
                }
                let cap = smooth_bound(mu, l).min(consensus_bound(mu, l, beta)?);
                StepsizeSchedule::with_initial(fraction * cap, w, p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Each coordinate uniform on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    Explicit { rows: Vec<Vec<f64>> },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Uniform { lo: 0.0, hi: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub ensemble: EnsembleSpec,
    pub graph: GraphSpec,
    pub schedule: ScheduleSpec,
    pub horizon: usize,
    pub log: LogSchedule,
    pub initial: InitialSpec,
    pub divergence_cap: f64,
    pub expect_divergence: bool,
    pub certificates: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            ensemble: EnsembleSpec::default(),
            graph: GraphSpec::default(),
            schedule: ScheduleSpec::default(),
            horizon: 100_000,
            log: LogSchedule::default(),
            initial: InitialSpec::default(),
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
            expect_divergence: false,
            certificates: true,
            output_dir: None,
        }
    }
}

/// A fully built experiment.
#[derive(Debug, Clone)]
pub struct Problem {
    pub ensemble: CostEnsemble,
    pub mixing: MixingMatrix,
    pub schedule: StepsizeSchedule,
    pub initial: AgentStates,
    pub options: RunOptions,
}

fn at(field: &str) -> impl Fn(DgdError) -> DgdError + '_ {
    move |e| DgdError::config(field, e.to_string())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DgdError::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Build every component, naming the first field that fails.
    pub fn build(&self) -> Result<Problem> {
        let ensemble = self.build_ensemble().map_err(at("ensemble"))?;
        let mixing = self.build_mixing(ensemble.m()).map_err(at("graph"))?;
        let schedule = self
            .schedule
            .resolve(ensemble.mu(), ensemble.l(), mixing.beta())
            .map_err(at("schedule"))?;
        let initial = self.build_initial(ensemble.m(), ensemble.dim()).map_err(at("initial"))?;
        if self.horizon == 0 {
            return Err(DgdError::config("horizon", "must be >= 1"));
        }
        self.log.times(self.horizon).map_err(at("log"))?;
        if !(self.divergence_cap > 0.0) {
            return Err(DgdError::config("divergence_cap", "must be positive"));
        }
        if self.certificates {
            let report = check_schedule(&schedule, ensemble.mu(), ensemble.l(), mixing.beta())
                .map_err(at("graph"))?;
            if !report.admissible_strict || !report.admissible_weak {
                return Err(DgdError::config(
                    "schedule",
                    format!(
                        "certificates need alpha0 < {} (consensus bound) and alpha0 <= {} \
                         (2/(mu+L)); got alpha0 = {}",
                        report.bound_consensus, report.bound_smooth, report.alpha0
                    ),
                ));
            }
            if matches!(schedule, StepsizeSchedule::Constant { .. }) {
                return Err(DgdError::config(
                    "schedule",
                    "certificates need a polynomial schedule",
                ));
            }
        }
        Ok(Problem {
            ensemble,
            mixing,
            schedule,
            initial,
            options: RunOptions {
                horizon: self.horizon,
                log: self.log.clone(),
                divergence_cap: self.divergence_cap,
            },
        })
    }

    pub fn build_ensemble(&self) -> Result<CostEnsemble> {
        match &self.ensemble {
            EnsembleSpec::LeastSquares {
                m,
                n,
                dim,
                noise_sigma,
            } => random_least_squares(
                *m,
                *n,
                *dim,
                *noise_sigma,
                component_seed(self.seed, "ensemble"),
            ),
            EnsembleSpec::QuadraticPair { a1, a2 } => quadratic_pair(*a1, *a2),
            EnsembleSpec::Explicit { costs } => CostEnsemble::new(costs.clone()),
        }
    }

    pub fn build_mixing(&self, m: usize) -> Result<MixingMatrix> {
        let seed = component_seed(self.seed, "graph");
        let from_kind = |k| metropolis_weights(&build_graph(k, m, seed)?);
        let w = match &self.graph {
            GraphSpec::Ring => from_kind(GraphKind::Ring)?,
            GraphSpec::Path => from_kind(GraphKind::Path)?,
            GraphSpec::Complete => from_kind(GraphKind::Complete)?,
            GraphSpec::ErdosRenyi { q } => from_kind(GraphKind::ErdosRenyi { q: *q })?,
            GraphSpec::TwoAgent { gamma } => two_agent_matrix(*gamma)?,
            GraphSpec::Explicit(rec) => rec.clone().into_matrix()?,
        };
        if w.m() != m {
            return Err(DgdError::DimensionMismatch(format!(
                "mixing matrix has {} agents, ensemble has {m}",
                w.m()
            )));
        }
        Ok(w)
    }

    pub fn build_initial(&self, m: usize, dim: usize) -> Result<AgentStates> {
        match &self.initial {
            InitialSpec::Uniform { lo, hi } => {
                AgentStates::random_uniform(m, dim, *lo, *hi, component_seed(self.seed, "initial"))
            }
            InitialSpec::Explicit { rows } => {
                let s = AgentStates::from_rows(rows)?;
                if s.m() != m || s.dim() != dim {
                    return Err(DgdError::DimensionMismatch(format!(
                        "initial state is {}x{}, problem is {m}x{dim}",
                        s.m(),
                        s.dim()
                    )));
                }
                Ok(s)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(c.build().is_ok());
    }

    #[test]
    fn sparse_document_uses_defaults() {
        let c = ExperimentConfig::from_json(
            r#"{"seed": 3, "graph": {"kind": "erdos_renyi", "q": 0.5},
                "schedule": {"kind": "polynomial", "a": 0.01, "w": 100, "p": 0.5},
                "certificates": false}"#,
        )
        .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.horizon, 100_000);
        c.build().unwrap();
    }

    #[test]
    fn failing_field_is_named() {
        let mut c = ExperimentConfig::default();
        c.schedule = ScheduleSpec::Polynomial {
            a: 1.0,
            w: 0.5,
            p: 0.5,
        };
        match c.build() {
            Err(DgdError::Config { field, .. }) => assert_eq!(field, "schedule"),
            other => panic!("{other:?}"),
        }
        c.schedule = ScheduleSpec::Scaled {
            fraction: 1.5,
            w: 100.0,
            p: 0.5,
        };
        match c.build() {
            Err(DgdError::Config { field, reason }) => {
                assert_eq!(field, "schedule");
                assert!(reason.contains("consensus bound") && reason.contains("2/(mu+L)"));
            }
            other => panic!("{other:?}"),
        }
        c.certificates = false;
        assert!(c.build().is_ok());
        assert!(ExperimentConfig::from_json(r#"{"sed": 1}"#).is_err());
    }

    #[test]
    fn seeds_are_per_component() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.graph = GraphSpec::Complete;
        let (pa, pb) = (a.build().unwrap(), b.build().unwrap());
        assert_eq!(pa.initial, pb.initial);
        assert_eq!(pa.ensemble.x_star(), pb.ensemble.x_star());
    }
}
