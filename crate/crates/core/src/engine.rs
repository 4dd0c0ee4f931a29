//! The DGD iteration `x(t+1) = W x(t) - alpha(t) G(x(t))`, where row `i` of
//! `G` is `grad f_i(x_i)`, with metric logging and divergence detection.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DgdError, Result};
use crate::harness::output::write_atomic;
use crate::network::MixingMatrix;
use crate::objectives::CostEnsemble;
use crate::rng;
use crate::schedules::StepsizeSchedule;

pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e12;

/// Stacked agent iterates, row `i` is agent `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStates {
    m: usize,
    dim: usize,
    /// Row-major `m * dim`.
    x: Vec<f64>,
    t: usize,
}

impl AgentStates {
    pub fn new(m: usize, dim: usize, x: Vec<f64>) -> Result<Self> {
        if m == 0 || dim == 0 || x.len() != m * dim {
            return Err(DgdError::DimensionMismatch(format!(
                "expected {} entries for {m} agents of dimension {dim}, got {}",
                m * dim,
                x.len()
            )));
        }
        Ok(AgentStates { m, dim, x, t: 0 })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(DgdError::DimensionMismatch("ragged agent rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    /// Every agent at the same point.
    pub fn consensus(m: usize, point: &[f64]) -> Result<Self> {
        Self::new(m, point.len(), point.repeat(m))
    }

    /// Entries iid uniform on `[lo, hi)`.
    pub fn random_uniform(m: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo < hi) {
            return Err(DgdError::arg(format!("empty range [{lo}, {hi})")));
        }
        let mut r = rng::seeded(seed);
        let x = (0..m * dim).map(|_| r.random_range(lo..hi)).collect();
        Self::new(m, dim, x)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn average(&self) -> Vec<f64> {
        let mut avg = vec![0.0; self.dim];
        for i in 0..self.m {
            for (a, v) in avg.iter_mut().zip(self.agent(i)) {
                *a += v;
            }
        }
        let inv = 1.0 / self.m as f64;
        avg.iter_mut().for_each(|a| *a *= inv);
        avg
    }

    /// Frobenius norm of the stacked state.
    pub fn norm(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }
}

/// The three error norms at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `|x - xbar|`
    pub consensus_err: f64,
    /// `|xbar - x*|`, stacked, so `sqrt(m)` times the average's distance.
    pub mean_err: f64,
    /// `|x - x*|`
    pub total_err: f64,
}

/// Metrics from offsets `e_i = x_i - x_star`. Deviations from the average
/// are accumulated relative to agent 0, so agents that agree give an exact 0.
pub fn metrics(s: &AgentStates, x_star: &[f64]) -> Metrics {
    let (m, dim) = (s.m, s.dim);
    let x0 = s.agent(0);
    let mut shift = vec![0.0; dim];
    let mut total = 0.0;
    for i in 0..m {
        for (k, ((v, xs), v0)) in s.agent(i).iter().zip(x_star).zip(x0).enumerate() {
            let e = v - xs;
            total += e * e;
            shift[k] += v - v0;
        }
    }
    let inv = 1.0 / m as f64;
    shift.iter_mut().for_each(|d| *d *= inv);
    let mut cons = 0.0;
    for i in 0..m {
        for (k, (v, v0)) in s.agent(i).iter().zip(x0).enumerate() {
            let d = (v - v0) - shift[k];
            cons += d * d;
        }
    }
    let ebar_sq: f64 = x0
        .iter()
        .zip(x_star)
        .zip(&shift)
        .map(|((v0, xs), d)| {
            let e = (v0 - xs) + d;
            e * e
        })
        .sum();
    Metrics {
        consensus_err: cons.sqrt(),
        mean_err: (m as f64 * ebar_sq).sqrt(),
        total_err: total.sqrt(),
    }
}

fn check_dims(s: &AgentStates, w: &MixingMatrix, e: &CostEnsemble) -> Result<()> {
    if w.m() != s.m || e.m() != s.m || e.dim() != s.dim {
        return Err(DgdError::DimensionMismatch(format!(
            "states {}x{}, mixing {}x{}, ensemble {} agents of dimension {}",
            s.m,
            s.dim,
            w.m(),
            w.m(),
            e.m(),
            e.dim()
        )));
    }
    Ok(())
}

/// Write `W x - alpha G(x)` into `out`; `grad` is scratch of length `dim`.
/// Validated matrices are applied as `x_i + sum_{j != i} w_ij (x_j - x_i)`,
/// which equals `W x` for unit row sums and keeps agreeing agents exactly equal.
#[allow(clippy::too_many_arguments)]
fn step_into(
    x: &[f64],
    out: &mut [f64],
    grad: &mut [f64],
    w: &MixingMatrix,
    e: &CostEnsemble,
    m: usize,
    dim: usize,
    alpha: f64,
) {
    let increments = w.is_validated();
    for i in 0..m {
        let xi = &x[i * dim..(i + 1) * dim];
        e.grad_i_into(i, xi, grad);
        let oi = &mut out[i * dim..(i + 1) * dim];
        for (o, g) in oi.iter_mut().zip(grad.iter()) {
            *o = -alpha * g;
        }
        for (j, &wij) in w.row(i).iter().enumerate() {
            if wij == 0.0 || (increments && j == i) {
                continue;
            }
            let xj = &x[j * dim..(j + 1) * dim];
            if increments {
                for ((o, v), u) in oi.iter_mut().zip(xj).zip(xi) {
                    *o += wij * (v - u);
                }
            } else {
                for (o, v) in oi.iter_mut().zip(xj) {
                    *o += wij * v;
                }
            }
        }
        if increments {
            for (o, u) in oi.iter_mut().zip(xi) {
                *o += u;
            }
        }
    }
}

/// One DGD step with stepsize `alpha_t`.
pub fn dgd_step(
    s: &AgentStates,
    w: &MixingMatrix,
    e: &CostEnsemble,
    alpha_t: f64,
) -> Result<AgentStates> {
    check_dims(s, w, e)?;
    let mut out = vec![0.0; s.x.len()];
    let mut grad = vec![0.0; s.dim];
    step_into(&s.x, &mut out, &mut grad, w, e, s.m, s.dim, alpha_t);
    let next = AgentStates {
        m: s.m,
        dim: s.dim,
        x: out,
        t: s.t + 1,
    };
    if !next.is_finite() {
        return Err(DgdError::NonFinite { t: next.t });
    }
    Ok(next)
}

/// Distance between the new average and `xbar - (alpha/m) sum grad f_i(x_i)`.
/// Zero up to rounding when `W` is column stochastic.
pub fn average_dynamics_residual(
    s: &AgentStates,
    s_next: &AgentStates,
    e: &CostEnsemble,
    alpha_t: f64,
) -> f64 {
    let mut predicted = s.average();
    let mut grad = vec![0.0; s.dim];
    let scale = alpha_t / s.m as f64;
    for i in 0..s.m {
        e.grad_i_into(i, s.agent(i), &mut grad);
        for (p, g) in predicted.iter_mut().zip(&grad) {
            *p -= scale * g;
        }
    }
    s_next
        .average()
        .iter()
        .zip(&predicted)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Which iterations get a metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogSchedule {
    /// `0, k, 2k, ...` and the horizon.
    Every { every: usize },
    /// The listed iterations (clipped to the horizon) plus 0.
    Explicit { t: Vec<usize> },
    /// `floor(10^(k / per_decade))` deduplicated, plus 0 and the horizon.
    Geometric {
        #[serde(default = "default_per_decade")]
        per_decade: u32,
    },
}

fn default_per_decade() -> u32 {
    20
}

impl Default for LogSchedule {
    fn default() -> Self {
        LogSchedule::Geometric { per_decade: 20 }
    }
}

impl LogSchedule {
    /// Sorted, deduplicated iteration indices in `[0, horizon]`.
    pub fn times(&self, horizon: usize) -> Result<Vec<usize>> {
        let mut ts = vec![0];
        match self {
            LogSchedule::Every { every } => {
                if *every == 0 {
                    return Err(DgdError::arg("log interval must be >= 1"));
                }
                ts.extend((1..=horizon / every).map(|k| k * every));
                ts.push(horizon);
            }
            LogSchedule::Explicit { t } => {
                ts.extend(t.iter().copied().filter(|&v| v <= horizon));
            }
            LogSchedule::Geometric { per_decade } => {
                if *per_decade == 0 {
                    return Err(DgdError::arg("per_decade must be >= 1"));
                }
                let mut k = 0u32;
                loop {
                    let v = 10f64.powf(k as f64 / *per_decade as f64).floor() as usize;
                    if v > horizon {
                        break;
                    }
                    ts.push(v);
                    k += 1;
                }
                ts.push(horizon);
            }
        }
        ts.sort_unstable();
        ts.dedup();
        Ok(ts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub horizon: usize,
    #[serde(default)]
    pub log: LogSchedule,
    #[serde(default = "default_cap")]
    pub divergence_cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_DIVERGENCE_CAP
}

impl RunOptions {
    pub fn new(horizon: usize, log: LogSchedule) -> Self {
        RunOptions {
            horizon,
            log,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
        }
    }

    pub fn every(horizon: usize, every: usize) -> Self {
        Self::new(horizon, LogSchedule::Every { every })
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.divergence_cap = cap;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// State norm passed the cap, or went non-finite, at iteration `t`.
    Diverged { t: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: usize,
    pub consensus_err: f64,
    pub mean_err: f64,
    pub total_err: f64,
}

impl Record {
    fn new(t: usize, m: Metrics) -> Self {
        Record {
            t,
            consensus_err: m.consensus_err,
            mean_err: m.mean_err,
            total_err: m.total_err,
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            consensus_err: self.consensus_err,
            mean_err: self.mean_err,
            total_err: self.total_err,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub status: RunStatus,
    pub final_states: AgentStates,
}

/// Sidecar contents next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusFile {
    #[serde(flatten)]
    pub status: RunStatus,
    pub final_t: usize,
    pub records: usize,
}

impl Trajectory {
    pub fn logged_t(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn consensus_err(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.consensus_err).collect()
    }

    pub fn mean_err(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_err).collect()
    }

    pub fn total_err(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total_err).collect()
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn to_csv(&self) -> Result<String> {
        records_to_csv(&self.records)
    }

    pub fn status_file(&self) -> StatusFile {
        StatusFile {
            status: self.status,
            final_t: self.final_states.t,
            records: self.records.len(),
        }
    }

    /// Write `trajectory.csv`-style output to `csv_path` and the status
    /// sidecar beside it with a `.status.json` suffix.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        write_atomic(csv_path, self.to_csv()?.as_bytes())?;
        let sidecar = csv_path.with_extension("status.json");
        write_atomic(&sidecar, serde_json::to_string_pretty(&self.status_file())?.as_bytes())
    }
}

pub fn records_to_csv(records: &[Record]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    if records.is_empty() {
        w.write_record(["t", "consensus_err", "mean_err", "total_err"])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| DgdError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize()
        .map(|row| row.map_err(csv_err))
        .collect()
}

pub(crate) fn csv_err(e: csv::Error) -> DgdError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DgdError::Io(io),
        other => DgdError::arg(format!("csv: {other:?}")),
    }
}

/// Everything an observer sees for one step `t -> t + 1`.
pub struct StepView<'a> {
    pub t: usize,
    pub alpha: f64,
    pub before: &'a [f64],
    pub after: &'a [f64],
    pub metrics_before: Metrics,
    pub metrics_after: Metrics,
}

pub fn run(
    w: &MixingMatrix,
    e: &CostEnsemble,
    s0: &AgentStates,
    sched: &StepsizeSchedule,
    opts: &RunOptions,
) -> Result<Trajectory> {
    run_inner(w, e, s0, sched, opts, None::<fn(&StepView)>)
}

/// Like [`run`], calling `observer` after every step with both states and
/// their metrics. Metrics are then computed at every step, not only logged ones.
pub fn run_with_observer(
    w: &MixingMatrix,
    e: &CostEnsemble,
    s0: &AgentStates,
    sched: &StepsizeSchedule,
    opts: &RunOptions,
    observer: impl FnMut(&StepView),
) -> Result<Trajectory> {
    run_inner(w, e, s0, sched, opts, Some(observer))
}

fn run_inner<F: FnMut(&StepView)>(
    w: &MixingMatrix,
    e: &CostEnsemble,
    s0: &AgentStates,
    sched: &StepsizeSchedule,
    opts: &RunOptions,
    mut observer: Option<F>,
) -> Result<Trajectory> {
    check_dims(s0, w, e)?;
    if opts.horizon == 0 {
        return Err(DgdError::arg("horizon must be >= 1"));
    }
    if !(opts.divergence_cap > 0.0) {
        return Err(DgdError::arg("divergence_cap must be positive"));
    }
    let times = opts.log.times(opts.horizon)?;
    let (m, dim) = (s0.m, s0.dim);
    let x_star = e.x_star();
    let t0 = s0.t;

    let mut cur = s0.x.clone();
    let mut next = vec![0.0; cur.len()];
    let mut grad = vec![0.0; dim];
    let mut records = Vec::with_capacity(times.len());
    let mut log_iter = times.iter().peekable();
    let mut status = RunStatus::Completed;

    let wrap = |x: &[f64], t: usize| AgentStates {
        m,
        dim,
        x: x.to_vec(),
        t: t0 + t,
    };
    let mut cur_metrics = metrics(&wrap(&cur, 0), x_star);
    if log_iter.peek() == Some(&&0) {
        records.push(Record::new(t0, cur_metrics));
        log_iter.next();
    }

    let mut steps = 0;
    for k in 0..opts.horizon {
        let alpha = sched.alpha(t0 + k);
        step_into(&cur, &mut next, &mut grad, w, e, m, dim, alpha);
        steps = k + 1;
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > opts.divergence_cap {
            status = RunStatus::Diverged { t: t0 + steps };
            if norm.is_finite() {
                std::mem::swap(&mut cur, &mut next);
                records.push(Record::new(t0 + steps, metrics(&wrap(&cur, steps), x_star)));
            }
            break;
        }
        let logged = log_iter.peek() == Some(&&steps);
        if observer.is_some() || logged {
            let next_metrics = metrics(&wrap(&next, steps), x_star);
            if let Some(obs) = observer.as_mut() {
                obs(&StepView {
                    t: t0 + k,
                    alpha,
                    before: &cur,
                    after: &next,
                    metrics_before: cur_metrics,
                    metrics_after: next_metrics,
                });
            }
            if logged {
                records.push(Record::new(t0 + steps, next_metrics));
                log_iter.next();
            }
            cur_metrics = next_metrics;
        }
        std::mem::swap(&mut cur, &mut next);
    }

    Ok(Trajectory {
        records,
        status,
        final_states: wrap(&cur, steps),
    })
}
