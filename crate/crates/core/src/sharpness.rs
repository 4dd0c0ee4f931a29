//! Two agents, `f_1 = a1 x^2` and `f_2 = -a2 x^2`, mixing with weight
//! `gamma`, constant stepsize `alpha`. The iteration is linear,
//! `x(t+1) = M x(t)`, and diverges exactly when `M` has an eigenvalue
//! above one.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{DgdError, Result};
use crate::network::{two_agent_matrix, MixingMatrix};
use crate::objectives::{eta, quadratic_pair, CostEnsemble};
use crate::schedules::StepsizeSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessInstance {
    pub a1: f64,
    pub a2: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl SharpnessInstance {
    pub fn new(a1: f64, a2: f64, gamma: f64, alpha: f64) -> Result<Self> {
        if !(a2 > 0.0 && a1 > a2) {
            return Err(DgdError::arg(format!("need a1 > a2 > 0, got a1={a1}, a2={a2}")));
        }
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(DgdError::arg(format!("gamma={gamma} outside (0, 1/2]")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(DgdError::arg(format!("alpha={alpha} must be >= 0")));
        }
        Ok(SharpnessInstance { a1, a2, gamma, alpha })
    }

    pub fn mu(&self) -> f64 {
        self.a1 - self.a2
    }

    pub fn l(&self) -> f64 {
        2.0 * self.a1
    }

    pub fn beta(&self) -> f64 {
        1.0 - 2.0 * self.gamma
    }

    pub fn threshold(&self) -> f64 {
        divergence_threshold(self.a1, self.a2, self.gamma)
    }

    /// Ensemble, mixing matrix and constant schedule for the engine.
    pub fn to_problem(&self) -> Result<(CostEnsemble, MixingMatrix, StepsizeSchedule)> {
        Ok((
            quadratic_pair(self.a1, self.a2)?,
            two_agent_matrix(self.gamma)?,
            StepsizeSchedule::constant(self.alpha)?,
        ))
    }
}

/// `M = [[1 - gamma - 2 alpha a1, gamma], [gamma, 1 - gamma + 2 alpha a2]]`.
pub fn iteration_matrix(inst: &SharpnessInstance) -> Matrix2<f64> {
    let SharpnessInstance { a1, a2, gamma, alpha } = *inst;
    Matrix2::new(
        1.0 - gamma - 2.0 * alpha * a1,
        gamma,
        gamma,
        1.0 - gamma + 2.0 * alpha * a2,
    )
}

/// Both eigenvalues from the closed form, descending.
pub fn eigenvalues(inst: &SharpnessInstance) -> [f64; 2] {
    let SharpnessInstance { a1, a2, gamma, alpha } = *inst;
    let center = (1.0 - gamma) + (a2 - a1) * alpha;
    let radius = ((a1 + a2).powi(2) * alpha * alpha + gamma * gamma).sqrt();
    [center + radius, center - radius]
}

/// Eigenvalues of `M` from a symmetric eigensolve, descending.
pub fn eigenvalues_direct(inst: &SharpnessInstance) -> [f64; 2] {
    let ev = iteration_matrix(inst).symmetric_eigenvalues();
    [ev[0].max(ev[1]), ev[0].min(ev[1])]
}

/// `(1 - gamma) + (a2 - a1) alpha + sqrt((a1 + a2)^2 alpha^2 + gamma^2)`.
pub fn top_eigenvalue(inst: &SharpnessInstance) -> f64 {
    eigenvalues(inst)[0]
}

/// Spectral radius of `M`.
pub fn spectral_radius(inst: &SharpnessInstance) -> f64 {
    let [hi, lo] = eigenvalues(inst);
    hi.abs().max(lo.abs())
}

/// `gamma (a1 - a2) / (2 a1 a2)`.
pub fn divergence_threshold(a1: f64, a2: f64, gamma: f64) -> f64 {
    gamma * (a1 - a2) / (2.0 * a1 * a2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessRatio {
    /// `2 mu gamma / (L (L - 2 mu))`: above this the pair diverges.
    pub lemma_threshold: f64,
    /// `2 mu gamma / ((eta + L)(mu + L))`: the consensus stepsize bound
    /// written with `beta = 1 - 2 gamma`.
    pub theorem_threshold: f64,
    pub ratio: f64,
}

/// Compare the guaranteed-bounded stepsize with the divergence onset for the
/// pair `a1 = L/2`, `a2 = L/2 - mu`.
pub fn sharpness_ratio(mu: f64, l: f64, gamma: f64) -> Result<SharpnessRatio> {
    if !(mu > 0.0 && l > 2.0 * mu) {
        return Err(DgdError::arg(format!(
            "need L > 2 mu > 0, got mu={mu}, L={l}"
        )));
    }
    let eta = eta(mu, l)?;
    let lemma_threshold = 2.0 * mu * gamma / (l * (l - 2.0 * mu));
    let theorem_threshold = 2.0 * mu * gamma / ((eta + l) * (mu + l));
    Ok(SharpnessRatio {
        lemma_threshold,
        theorem_threshold,
        ratio: theorem_threshold / lemma_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(alpha: f64) -> SharpnessInstance {
        SharpnessInstance::new(10.0, 6.0, 0.2, alpha).unwrap()
    }

    #[test]
    fn matrix_examples() {
        let m = iteration_matrix(&inst(0.0));
        assert_eq!(m, Matrix2::new(0.8, 0.2, 0.2, 0.8));
        let m = iteration_matrix(&inst(0.01));
        let expect = Matrix2::new(0.6, 0.2, 0.2, 0.92);
        assert!((m - expect).amax() < 1e-15);
        let half = SharpnessInstance::new(10.0, 6.0, 0.5, 0.0).unwrap();
        let [hi, lo] = eigenvalues_direct(&half);
        assert!((hi - 1.0).abs() < 1e-15 && lo.abs() < 1e-15);
    }

    #[test]
    fn threshold_examples() {
        assert!((divergence_threshold(10.0, 6.0, 0.2) - 1.0 / 150.0).abs() < 1e-17);
        assert!((top_eigenvalue(&inst(1.0 / 150.0)) - 1.0).abs() < 1e-12);
        assert_eq!(top_eigenvalue(&inst(0.0)), 1.0);
        assert!(divergence_threshold(10.0, 6.0, 1e-9) < 1e-9);
        let (l, mu, beta) = (4.0, 1.0, 0.4);
        let gamma = (1.0 - beta) / 2.0;
        let t = divergence_threshold(l / 2.0, l / 2.0 - mu, gamma);
        assert!((t - 2.0 * mu * gamma / (l * (l - 2.0 * mu))).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_direct() {
        for alpha in [0.0, 1e-3, 1.0 / 150.0, 0.01, 0.1] {
            let a = eigenvalues(&inst(alpha));
            let b = eigenvalues_direct(&inst(alpha));
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_examples() {
        assert!((sharpness_ratio(0.01, 10.0, 0.2).unwrap().ratio - 1.0).abs() < 1e-2);
        assert!((sharpness_ratio(1.0, 1e3, 0.2).unwrap().ratio - 1.0).abs() < 1e-2);
        assert!(sharpness_ratio(1.0, 3.0, 0.2).unwrap().ratio < 1.0);
        assert!(sharpness_ratio(1.0, 2.0, 0.2).is_err());
    }

    #[test]
    fn instance_validation() {
        assert!(SharpnessInstance::new(6.0, 6.0, 0.2, 0.01).is_err());
        assert!(SharpnessInstance::new(10.0, 6.0, 0.6, 0.01).is_err());
    }
}
