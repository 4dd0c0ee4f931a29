//! Communication graphs and doubly stochastic mixing matrices.
//!
//! A [`MixingMatrix`] is validated on construction (row and column sums,
//! nonnegativity, positive diagonal, sparsity against its graph) and caches
//! `beta`, the spectral norm of `W - (1/m) 1 1^T`.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DgdError, Result};
use crate::rng;

/// Absolute tolerance for the stochasticity checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Largest agent count handled by a dense symmetric eigensolve.
pub const DENSE_SPECTRAL_LIMIT: usize = 512;

const ER_RETRY_BUDGET: usize = 100;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 100_000;

/// Undirected simple graph on agents `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    m: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = DgdError;
    fn try_from(r: GraphRepr) -> Result<Self> {
        Graph::new(r.m, r.edges)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            m: g.m,
            edges: g.edges.into_iter().collect(),
        }
    }
}

impl Graph {
    /// Build a graph from an edge list. Pairs are stored as `(min, max)`;
    /// duplicates collapse.
    pub fn new(m: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if m == 0 {
            return Err(DgdError::arg("graph needs at least one agent"));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(DgdError::arg(format!("self-loop at agent {i}")));
            }
            if i >= m || j >= m {
                return Err(DgdError::arg(format!("edge {{{i},{j}}} outside [0, {m})")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Graph { m, edges: set })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.m];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// BFS reachability from agent 0.
    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; self.m];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.m
    }
}

/// Graph families understood by [`build_graph`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Ring,
    Path,
    Complete,
    /// Each pair is an edge independently with probability `q`.
    ErdosRenyi { q: f64 },
}

pub fn build_graph(kind: GraphKind, m: usize, seed: u64) -> Result<Graph> {
    if m < 2 {
        return Err(DgdError::arg(format!("need m >= 2 agents, got {m}")));
    }
    match kind {
        GraphKind::Ring => Graph::new(m, (0..m).map(|i| (i, (i + 1) % m))),
        GraphKind::Path => Graph::new(m, (0..m - 1).map(|i| (i, i + 1))),
        GraphKind::Complete => {
            Graph::new(m, (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))))
        }
        GraphKind::ErdosRenyi { q } => {
            if !(q > 0.0 && q <= 1.0) {
                return Err(DgdError::arg(format!("edge probability q={q} outside (0, 1]")));
            }
            let mut rng = rng::seeded(seed);
            for _ in 0..ER_RETRY_BUDGET {
                let mut edges = Vec::new();
                for i in 0..m {
                    for j in i + 1..m {
                        if rng.random::<f64>() < q {
                            edges.push((i, j));
                        }
                    }
                }
                let g = Graph::new(m, edges)?;
                if g.is_connected() {
                    return Ok(g);
                }
            }
            Err(DgdError::Construction(format!(
                "erdos_renyi(m={m}, q={q}) not connected after {ER_RETRY_BUDGET} resamples"
            )))
        }
    }
}

/// Doubly stochastic weights with cached spectral norm `beta`.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    m: usize,
    /// Row-major `m * m`.
    weights: Vec<f64>,
    graph: Option<Graph>,
    beta: f64,
    validated: bool,
}

impl MixingMatrix {
    /// Validate `weights` (row-major) and compute `beta`. When `graph` is
    /// given, off-diagonal entries outside its edge set must vanish.
    pub fn new(m: usize, weights: Vec<f64>, graph: Option<Graph>) -> Result<Self> {
        let mut w = Self::new_unchecked(m, weights, graph)?;
        let report = validate_mixing(&w);
        if !report.is_valid() {
            return Err(DgdError::AssumptionViolation(format!(
                "mixing matrix fails: {}",
                report.failures().join(", ")
            )));
        }
        w.validated = true;
        Ok(w)
    }

    /// Skip the doubly stochastic validation. Only shape is checked; used to
    /// study what breaks when the assumptions do not hold.
    pub fn new_unchecked(m: usize, weights: Vec<f64>, graph: Option<Graph>) -> Result<Self> {
        if m == 0 || weights.len() != m * m {
            return Err(DgdError::DimensionMismatch(format!(
                "expected {} weights for m={m}, got {}",
                m * m,
                weights.len()
            )));
        }
        if let Some(g) = &graph {
            if g.m() != m {
                return Err(DgdError::DimensionMismatch(format!(
                    "graph has {} agents, matrix has {m}",
                    g.m()
                )));
            }
        }
        let mut w = MixingMatrix {
            m,
            weights,
            graph,
            beta: f64::NAN,
            validated: false,
        };
        w.beta = spectral_gap(&w);
        Ok(w)
    }

    pub fn identity(m: usize) -> Result<Self> {
        let mut weights = vec![0.0; m * m];
        for i in 0..m {
            weights[i * m + i] = 1.0;
        }
        Self::new(m, weights, None)
    }

    /// Perfect averaging `(1/m) 1 1^T`.
    pub fn averaging(m: usize) -> Result<Self> {
        Self::new(m, vec![1.0 / m as f64; m * m], None)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.m..(i + 1) * self.m]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.graph.as_ref()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Whether construction checked the doubly stochastic invariants.
    pub fn is_validated(&self) -> bool {
        self.validated
    }

    pub fn is_symmetric(&self) -> bool {
        self.max_asymmetry() == 0.0
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.m {
            for j in i + 1..self.m {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn centered(&self) -> DMatrix<f64> {
        let m = self.m;
        let inv = 1.0 / m as f64;
        DMatrix::from_fn(m, m, |i, j| self.get(i, j) - inv)
    }

    pub fn to_record(&self) -> MixingRecord {
        MixingRecord {
            m: self.m,
            edges: self
                .graph
                .as_ref()
                .map(|g| g.edges().collect())
                .unwrap_or_else(|| self.support_edges()),
            weights: self.weights.clone(),
            beta: self.beta,
        }
    }

    fn support_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.m {
            for j in i + 1..self.m {
                if self.get(i, j) != 0.0 || self.get(j, i) != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// JSON description of a mixing matrix: agent count, edge list,
/// row-major weights and `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingRecord {
    pub m: usize,
    pub edges: Vec<(usize, usize)>,
    pub weights: Vec<f64>,
    pub beta: f64,
}

impl MixingRecord {
    /// Rebuild and revalidate. `beta` is recomputed, not trusted.
    pub fn into_matrix(self) -> Result<MixingMatrix> {
        let graph = Graph::new(self.m, self.edges)?;
        MixingMatrix::new(self.m, self.weights, Some(graph))
    }
}

/// Metropolis-Hastings weights: `1 / (1 + max(deg i, deg j))` on edges and
/// the remainder on the diagonal.
pub fn metropolis_weights(g: &Graph) -> Result<MixingMatrix> {
    if !g.is_connected() {
        return Err(DgdError::AssumptionViolation(
            "communication graph is not connected".into(),
        ));
    }
    let m = g.m();
    let deg = g.degrees();
    let mut w = vec![0.0; m * m];
    for (i, j) in g.edges() {
        let v = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
        w[i * m + j] = v;
        w[j * m + i] = v;
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[i * m + j]).sum();
        w[i * m + i] = 1.0 - off;
    }
    MixingMatrix::new(m, w, Some(g.clone()))
}

/// `[[1 - gamma, gamma], [gamma, 1 - gamma]]`, whose `beta` is `1 - 2 gamma`.
pub fn two_agent_matrix(gamma: f64) -> Result<MixingMatrix> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(DgdError::arg(format!("gamma={gamma} outside (0, 1/2]")));
    }
    let g = Graph::new(2, [(0, 1)])?;
    MixingMatrix::new(2, vec![1.0 - gamma, gamma, gamma, 1.0 - gamma], Some(g))
}

/// Spectral norm of `W - (1/m) 1 1^T`.
///
/// Dense eigensolve up to [`DENSE_SPECTRAL_LIMIT`] agents (symmetric
/// eigenvalues, or singular values when `W` is not symmetric), power
/// iteration beyond.
pub fn spectral_gap(w: &MixingMatrix) -> f64 {
    if w.m() > DENSE_SPECTRAL_LIMIT {
        return spectral_norm_power(w, POWER_TOL, POWER_MAX_ITERS);
    }
    let b = w.centered();
    if w.is_symmetric() {
        b.symmetric_eigenvalues().amax()
    } else {
        b.singular_values().max()
    }
}

/// Power iteration on `B^T B` with `B = W - (1/m) 1 1^T`, matrix-free.
/// Stops when the Rayleigh quotient changes by less than `rel_tol` relatively.
pub fn spectral_norm_power(w: &MixingMatrix, rel_tol: f64, max_iters: usize) -> f64 {
    let m = w.m();
    let inv = 1.0 / m as f64;
    let apply = |v: &[f64], transpose: bool, out: &mut [f64]| {
        let mean: f64 = v.iter().sum::<f64>() * inv;
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, vj) in v.iter().enumerate() {
                let wij = if transpose { w.get(j, i) } else { w.get(i, j) };
                s += wij * vj;
            }
            *o = s - mean;
        }
    };
    // Deterministic, generic start vector.
    let mut v: Vec<f64> = (0..m).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let mut tmp = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut lambda = 0.0;
    for _ in 0..max_iters {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        apply(&v, false, &mut tmp);
        apply(&tmp, true, &mut next);
        let rq: f64 = v.iter().zip(&next).map(|(a, b)| a * b).sum();
        std::mem::swap(&mut v, &mut next);
        if (rq - lambda).abs() <= rel_tol * rq.abs() {
            lambda = rq;
            break;
        }
        lambda = rq;
    }
    lambda.max(0.0).sqrt()
}

/// Stable identifiers for the mixing-matrix checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    RowSums,
    ColumnSums,
    Nonnegative,
    PositiveDiagonal,
    Sparsity,
    Symmetry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub kind: CheckKind,
    pub passed: bool,
    /// Worst violation magnitude (0 when nothing is violated).
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn get(&self, kind: CheckKind) -> &Check {
        self.checks
            .iter()
            .find(|c| c.kind == kind)
            .expect("every check kind is reported")
    }

    /// All required checks pass. Symmetry is informational only.
    pub fn is_valid(&self) -> bool {
        self.checks
            .iter()
            .all(|c| c.passed || c.kind == CheckKind::Symmetry)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed && c.kind != CheckKind::Symmetry)
            .map(|c| format!("{:?} (worst {:e})", c.kind, c.worst))
            .collect()
    }
}

pub fn validate_mixing(w: &MixingMatrix) -> ValidationReport {
    let m = w.m();
    let mut row_worst: f64 = 0.0;
    let mut col_worst: f64 = 0.0;
    for i in 0..m {
        let r: f64 = w.row(i).iter().sum();
        let c: f64 = (0..m).map(|k| w.get(k, i)).sum();
        row_worst = row_worst.max((r - 1.0).abs());
        col_worst = col_worst.max((c - 1.0).abs());
    }
    let neg_worst = w
        .weights()
        .iter()
        .fold(0.0_f64, |acc, &x| if x < 0.0 { acc.max(-x) } else { acc });
    let diag_min = (0..m).map(|i| w.get(i, i)).fold(f64::INFINITY, f64::min);
    let mut sparse_worst: f64 = 0.0;
    if let Some(g) = w.graph() {
        for i in 0..m {
            for j in 0..m {
                if i != j && !g.has_edge(i, j) {
                    sparse_worst = sparse_worst.max(w.get(i, j).abs());
                }
            }
        }
    }
    let asym = w.max_asymmetry();
    let all_finite = w.weights().iter().all(|x| x.is_finite());
    ValidationReport {
        checks: vec![
            Check {
                kind: CheckKind::RowSums,
                passed: all_finite && row_worst <= STOCHASTIC_TOL,
                worst: row_worst,
            },
            Check {
                kind: CheckKind::ColumnSums,
                passed: all_finite && col_worst <= STOCHASTIC_TOL,
                worst: col_worst,
            },
            Check {
                kind: CheckKind::Nonnegative,
                passed: neg_worst == 0.0,
                worst: neg_worst,
            },
            Check {
                kind: CheckKind::PositiveDiagonal,
                passed: diag_min > 0.0,
                worst: if diag_min > 0.0 { 0.0 } else { -diag_min },
            },
            Check {
                kind: CheckKind::Sparsity,
                passed: sparse_worst == 0.0,
                worst: sparse_worst,
            },
            Check {
                kind: CheckKind::Symmetry,
                passed: asym == 0.0,
                worst: asym,
            },
        ],
    }
}
