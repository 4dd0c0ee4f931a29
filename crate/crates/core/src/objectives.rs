//! Local cost ensembles `{f_i}` and the constants the certificates need:
//! per-agent smoothness `L_i`, `L = max L_i`, strong convexity `mu` of
//! `f = (1/m) sum f_i`, the optimizer `x_star`, and
//! `D = max_i |grad f_i(x_star)|`.
//!
//! Every cost is quadratic, so all constants come from exact eigensolves of
//! small Gram matrices and `x_star` from the normal equations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DgdError, Result};
use crate::rng;

/// Smallest accepted strong-convexity modulus.
pub const MIN_MU: f64 = 1e-10;

const LSQ_RETRY_BUDGET: usize = 100;

/// One agent's cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LocalCost {
    /// `|A x - y|^2` with `A` stored as rows.
    LeastSquares { a: Vec<Vec<f64>>, y: Vec<f64> },
    /// `coef * |x - center|^2`; `coef` may be negative (concave agent).
    Isotropic { coef: f64, center: Vec<f64> },
}

impl LocalCost {
    pub fn dim(&self) -> usize {
        match self {
            LocalCost::LeastSquares { a, .. } => a.first().map_or(0, Vec::len),
            LocalCost::Isotropic { center, .. } => center.len(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            LocalCost::LeastSquares { a, y } => a
                .iter()
                .zip(y)
                .map(|(row, yi)| {
                    let r = dot(row, x) - yi;
                    r * r
                })
                .sum(),
            LocalCost::Isotropic { coef, center } => {
                coef * x.iter().zip(center).map(|(xi, ci)| (xi - ci).powi(2)).sum::<f64>()
            }
        }
    }

    /// Write `grad f_i(x)` into `out`.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            LocalCost::LeastSquares { a, y } => {
                out.iter_mut().for_each(|g| *g = 0.0);
                for (row, yi) in a.iter().zip(y) {
                    let r2 = 2.0 * (dot(row, x) - yi);
                    for (g, aij) in out.iter_mut().zip(row) {
                        *g += r2 * aij;
                    }
                }
            }
            LocalCost::Isotropic { coef, center } => {
                for ((g, xi), ci) in out.iter_mut().zip(x).zip(center) {
                    *g = 2.0 * coef * (xi - ci);
                }
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.grad_into(x, &mut g);
        g
    }

    /// Hessian `H_i` and linear term `b_i` with `grad f_i(x) = H_i x - b_i`.
    fn quadratic_form(&self, dim: usize) -> (DMatrix<f64>, DVector<f64>) {
        match self {
            LocalCost::LeastSquares { a, y } => {
                let am = DMatrix::from_fn(a.len(), dim, |r, c| a[r][c]);
                let yv = DVector::from_column_slice(y);
                (am.transpose() * &am * 2.0, am.transpose() * yv * 2.0)
            }
            LocalCost::Isotropic { coef, center } => (
                DMatrix::identity(dim, dim) * (2.0 * coef),
                DVector::from_column_slice(center) * (2.0 * coef),
            ),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            LocalCost::LeastSquares { a, y } => {
                if a.is_empty() || a[0].is_empty() {
                    return Err(DgdError::arg("least-squares block needs n, dim >= 1"));
                }
                if a.len() != y.len() {
                    return Err(DgdError::DimensionMismatch(format!(
                        "A has {} rows, y has {} entries",
                        a.len(),
                        y.len()
                    )));
                }
                if a.iter().any(|r| r.len() != a[0].len()) {
                    return Err(DgdError::DimensionMismatch("ragged A rows".into()));
                }
                Ok(())
            }
            LocalCost::Isotropic { coef, center } => {
                if center.is_empty() || !coef.is_finite() {
                    return Err(DgdError::arg("isotropic cost needs dim >= 1 and finite coef"));
                }
                Ok(())
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `m` local costs plus their derived constants. Immutable once built.
///
/// The JSON form carries the costs and the computed constants; on load the
/// constants are recomputed from the costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EnsembleRecord", try_from = "EnsembleRecord")]
pub struct CostEnsemble {
    costs: Vec<LocalCost>,
    dim: usize,
    l_each: Vec<f64>,
    l: f64,
    mu: f64,
    x_star: Vec<f64>,
    d: f64,
}

#[derive(Serialize, Deserialize)]
struct EnsembleRecord {
    costs: Vec<LocalCost>,
    #[serde(default)]
    mu: f64,
    #[serde(default, rename = "L")]
    l: f64,
    #[serde(default, rename = "L_each")]
    l_each: Vec<f64>,
    #[serde(default)]
    x_star: Vec<f64>,
    #[serde(default, rename = "D")]
    d: f64,
}

impl From<CostEnsemble> for EnsembleRecord {
    fn from(e: CostEnsemble) -> Self {
        EnsembleRecord {
            costs: e.costs,
            mu: e.mu,
            l: e.l,
            l_each: e.l_each,
            x_star: e.x_star,
            d: e.d,
        }
    }
}

impl TryFrom<EnsembleRecord> for CostEnsemble {
    type Error = DgdError;
    fn try_from(r: EnsembleRecord) -> Result<Self> {
        CostEnsemble::new(r.costs)
    }
}

impl CostEnsemble {
    /// Derive all constants from the given costs. Fails when the total cost
    /// is not strongly convex.
    pub fn new(costs: Vec<LocalCost>) -> Result<Self> {
        if costs.is_empty() {
            return Err(DgdError::arg("ensemble needs at least one agent"));
        }
        for c in &costs {
            c.validate()?;
        }
        let dim = costs[0].dim();
        if costs.iter().any(|c| c.dim() != dim) {
            return Err(DgdError::DimensionMismatch("agents disagree on dimension".into()));
        }
        let m = costs.len() as f64;
        let mut h_total = DMatrix::zeros(dim, dim);
        let mut b_total = DVector::zeros(dim);
        let mut l_each = Vec::with_capacity(costs.len());
        for c in &costs {
            let (h, b) = c.quadratic_form(dim);
            l_each.push(h.clone().symmetric_eigenvalues().amax());
            h_total += h;
            b_total += b;
        }
        h_total /= m;
        b_total /= m;
        let mu = h_total.clone().symmetric_eigenvalues().min();
        if !(mu > MIN_MU) {
            return Err(DgdError::Construction(format!(
                "total cost not strongly convex (mu = {mu:e})"
            )));
        }
        let x_star = h_total
            .clone()
            .cholesky()
            .ok_or_else(|| DgdError::Construction("normal equations are singular".into()))?
            .solve(&b_total);
        let x_star: Vec<f64> = x_star.iter().copied().collect();
        let l = l_each.iter().copied().fold(0.0, f64::max);
        let d = costs
            .iter()
            .map(|c| norm(&c.grad(&x_star)))
            .fold(0.0, f64::max);
        Ok(CostEnsemble {
            costs,
            dim,
            l_each,
            l,
            mu,
            x_star,
            d,
        })
    }

    pub fn m(&self) -> usize {
        self.costs.len()
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn costs(&self) -> &[LocalCost] {
        &self.costs
    }
    pub fn l_each(&self) -> &[f64] {
        &self.l_each
    }
    /// `L = max_i L_i`.
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }
    /// `D = max_i |grad f_i(x_star)|`.
    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn value_i(&self, i: usize, x: &[f64]) -> f64 {
        self.costs[i].value(x)
    }

    pub fn grad_i_into(&self, i: usize, x: &[f64], out: &mut [f64]) {
        self.costs[i].grad_into(x, out)
    }

    /// Total cost `f(x) = (1/m) sum f_i(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.costs.iter().map(|c| c.value(x)).sum::<f64>() / self.m() as f64
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.dim];
        let mut g = vec![0.0; self.dim];
        for c in &self.costs {
            c.grad_into(x, &mut g);
            total.iter_mut().zip(&g).for_each(|(t, gi)| *t += gi);
        }
        let m = self.m() as f64;
        total.iter_mut().for_each(|t| *t /= m);
        total
    }
}

/// Random least-squares ensemble: `A_i` uniform on `[0,1]`, planted point
/// uniform on `[0,1]^dim`, `y_i = A_i x_plant + eps` with
/// `eps ~ Normal(0, noise_sigma)`. `x_star` is the exact minimizer of the
/// resulting cost, not the planted point.
pub fn random_least_squares(
    m: usize,
    n: usize,
    dim: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<CostEnsemble> {
    if m == 0 || n == 0 || dim == 0 {
        return Err(DgdError::arg("m, n, dim must all be >= 1"));
    }
    if !(noise_sigma >= 0.0) {
        return Err(DgdError::arg(format!("noise_sigma={noise_sigma} must be >= 0")));
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| DgdError::arg(e.to_string()))?;
    let mut rng = rng::seeded(seed);
    let mut last_err = None;
    for _ in 0..LSQ_RETRY_BUDGET {
        let plant: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let costs = (0..m)
            .map(|_| {
                let a: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
                    .collect();
                let y = a
                    .iter()
                    .map(|row| dot(row, &plant) + noise.sample(&mut rng))
                    .collect();
                LocalCost::LeastSquares { a, y }
            })
            .collect();
        match CostEnsemble::new(costs) {
            Ok(e) => return Ok(e),
            Err(e @ DgdError::Construction(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| DgdError::Construction("no ensemble sampled".into())))
}

/// Two scalar agents `f_1 = a1 x^2`, `f_2 = -a2 x^2` with `a1 > a2 > 0`,
/// so `mu = a1 - a2`, `L = 2 a1`, `x_star = 0` and `D = 0`.
pub fn quadratic_pair(a1: f64, a2: f64) -> Result<CostEnsemble> {
    if !(a2 > 0.0 && a1 > a2) {
        return Err(DgdError::arg(format!("need a1 > a2 > 0, got a1={a1}, a2={a2}")));
    }
    CostEnsemble::new(vec![
        LocalCost::Isotropic {
            coef: a1,
            center: vec![0.0],
        },
        LocalCost::Isotropic {
            coef: -a2,
            center: vec![0.0],
        },
    ])
}

/// `eta = mu L / (mu + L)`.
pub fn eta(mu: f64, l: f64) -> Result<f64> {
    if !(mu > 0.0 && l > 0.0) {
        return Err(DgdError::arg(format!("eta needs mu, L > 0 (mu={mu}, L={l})")));
    }
    Ok(mu * l / (mu + l))
}

/// `D = max_i |grad f_i(x_star)|`, recomputed from the gradients.
pub fn grad_norm_at_opt(e: &CostEnsemble) -> f64 {
    (0..e.m())
        .map(|i| {
            let mut g = vec![0.0; e.dim()];
            e.grad_i_into(i, e.x_star(), &mut g);
            norm(&g)
        })
        .fold(0.0, f64::max)
}
