//! Log-log tail slope of a decaying series.

use serde::{Deserialize, Serialize};

use crate::error::{DgdError, Result};

pub const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeEstimate {
    pub slope: f64,
    pub intercept: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub residual_rms: f64,
    pub points: usize,
}

/// Fit `ln v = intercept + slope ln t` over the last `window_fraction` of
/// the logarithmic `t` range spanned by the points with `t > 0`.
pub fn tail_slope(series: &[(f64, f64)], window_fraction: f64) -> Result<SlopeEstimate> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(DgdError::arg(format!(
            "window_fraction={window_fraction} outside (0, 1]"
        )));
    }
    let positive_t = series.iter().map(|p| p.0).filter(|&t| t > 0.0);
    let (lo, hi) = positive_t.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        (lo.min(t), hi.max(t))
    });
    if !(lo <= hi) {
        return Err(DgdError::EstimateUnavailable("no points with t > 0".into()));
    }
    let t_lo = (hi.ln() - window_fraction * (hi.ln() - lo.ln())).exp();
    tail_slope_window(series, t_lo, hi)
}

/// Fit over `t_lo <= t <= t_hi`.
pub fn tail_slope_window(series: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Result<SlopeEstimate> {
    let window: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t > 0.0 && t >= t_lo * (1.0 - 1e-12) && t <= t_hi)
        .collect();
    if window.len() < MIN_POINTS {
        return Err(DgdError::EstimateUnavailable(format!(
            "{} points in [{t_lo}, {t_hi}], need {MIN_POINTS}",
            window.len()
        )));
    }
    if let Some(&(t, v)) = window.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(DgdError::EstimateUnavailable(format!(
            "value {v} at t={t} has no logarithm"
        )));
    }
    let n = window.len() as f64;
    let xs: Vec<f64> = window.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = window.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(DgdError::EstimateUnavailable("window has a single t".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeEstimate {
        slope,
        intercept,
        t_lo: window[0].0,
        t_hi: window[window.len() - 1].0,
        residual_rms: (ss / n).sqrt(),
        points: window.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..=120).map(|k| 10f64.powf(k as f64 / 20.0).floor()).collect()
    }

    #[test]
    fn exact_power_law() {
        let s: Vec<_> = grid().into_iter().map(|t| (t, t.powf(-0.5))).collect();
        let e = tail_slope(&s, 1.0 / 6.0).unwrap();
        assert!((e.slope + 0.5).abs() < 1e-9);
        assert!(e.points >= MIN_POINTS);
        assert!(e.residual_rms < 1e-9);
    }

    #[test]
    fn constant_series() {
        let s: Vec<_> = grid().into_iter().map(|t| (t, 3.0)).collect();
        assert!(tail_slope(&s, 0.5).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn zeros_and_short_windows() {
        let mut s: Vec<_> = grid().into_iter().map(|t| (t, 1.0 / t)).collect();
        s.last_mut().unwrap().1 = 0.0;
        assert!(matches!(tail_slope(&s, 0.2), Err(DgdError::EstimateUnavailable(_))));
        let short: Vec<_> = (1..5).map(|t| (t as f64, 1.0)).collect();
        assert!(tail_slope(&short, 1.0).is_err());
    }
}
