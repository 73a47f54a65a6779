//! ARIMA(1,1,1) baseline fitted by conditional sum of squares.
//!
//! With `w` the first differences of the series, the residual recursion is
//!
//! ```text
//! ε_t = w_t - μ - φ (w_{t-1} - μ) - θ ε_{t-1},    ε_0 = 0
//! ```
//!
//! and the fit minimises `Σ ε_t²`. For fixed (φ, θ) the residuals are affine
//! in μ, so the intercept is solved in closed form; (φ, θ) come from a grid
//! search refined by Nelder-Mead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest series `fit_css` accepts.
pub const MIN_FIT_LEN: usize = 20;

/// Coefficient bound for both φ and θ.
pub const COEF_BOUND: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArimaParams {
    pub phi: f64,
    pub theta: f64,
    pub intercept: f64,
    pub sigma2: f64,
}

impl ArimaParams {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaFit {
    pub params: ArimaParams,
    /// Conditional sum of squares at the returned optimum.
    pub css: f64,
    /// Best objective over the grid, before refinement.
    pub grid_css: f64,
    pub warnings: Vec<String>,
}

pub fn difference(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: series.len(),
        });
    }
    Ok(series.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Inverse of [`difference`] given the first level.
pub fn integrate(diffs: &[f64], first: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(diffs.len() + 1);
    out.push(first);
    let mut level = first;
    for d in diffs {
        level += d;
        out.push(level);
    }
    out
}

/// Residuals for the given coefficients; `eps[0] = 0`.
pub fn css_residuals(w: &[f64], phi: f64, theta: f64, intercept: f64) -> Vec<f64> {
    let mut eps = vec![0.0; w.len()];
    for t in 1..w.len() {
        eps[t] = w[t] - intercept - phi * (w[t - 1] - intercept) - theta * eps[t - 1];
    }
    eps
}

/// Minimum of the CSS over μ for fixed (φ, θ), as `(css, μ)`.
///
/// `ε_t = a_t + μ b_t` where `a` is the μ = 0 recursion and
/// `b_t = -(1 - φ) - θ b_{t-1}`.
fn profile_intercept(w: &[f64], phi: f64, theta: f64) -> (f64, f64) {
    let (mut a, mut b) = (0.0, 0.0);
    let (mut saa, mut sab, mut sbb) = (0.0, 0.0, 0.0);
    for t in 1..w.len() {
        a = w[t] - phi * w[t - 1] - theta * a;
        b = -(1.0 - phi) - theta * b;
        saa += a * a;
        sab += a * b;
        sbb += b * b;
    }
    if sbb > 0.0 {
        let mu = -sab / sbb;
        ((saa + 2.0 * mu * sab + mu * mu * sbb).max(0.0), mu)
    } else {
        (saa, 0.0)
    }
}

fn css(w: &[f64], phi: f64, theta: f64, intercept: f64) -> f64 {
    css_residuals(w, phi, theta, intercept)
        .iter()
        .map(|e| e * e)
        .sum()
}

/// Grid values from -0.99 to 0.99 at step 0.01.
fn grid_axis() -> Vec<f64> {
    (-99..=99).map(|k| k as f64 / 100.0).collect()
}

pub fn fit_css(series: &[f64]) -> Result<ArimaFit> {
    if series.len() < MIN_FIT_LEN {
        return Err(Error::InsufficientData {
            needed: MIN_FIT_LEN,
            got: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("series contains non-finite values".into()));
    }
    let w = difference(series)?;
    let axis = grid_axis();

    // Lowest CSS wins; exact ties go to the point nearest the origin, then
    // to grid order.
    let (grid_css, g_phi, g_theta) = axis
        .par_iter()
        .map(|&phi| {
            axis.iter()
                .map(|&theta| (profile_intercept(&w, phi, theta).0, phi, theta))
                .fold(None, pick_better)
                .expect("non-empty axis")
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(None, pick_better)
        .expect("non-empty axis");

    let objective = |p: [f64; 2]| {
        if p[0].abs() > COEF_BOUND || p[1].abs() > COEF_BOUND {
            f64::INFINITY
        } else {
            profile_intercept(&w, p[0], p[1]).0
        }
    };
    let ([phi, theta], refined) = nelder_mead(objective, [g_phi, g_theta], 0.02, 1e-12, 500);
    let (best_css, phi, theta) = if refined <= grid_css {
        (refined, phi, theta)
    } else {
        (grid_css, g_phi, g_theta)
    };
    let intercept = profile_intercept(&w, phi, theta).1;
    // Report the residual sum directly rather than the profiled algebra.
    let direct = css(&w, phi, theta, intercept);

    let mut warnings = Vec::new();
    for (name, v) in [("phi", phi), ("theta", theta)] {
        if v.abs() >= COEF_BOUND - 1e-9 {
            let msg = format!("{name} = {v} is on the stationarity/invertibility boundary; clamped to ±{COEF_BOUND}");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let denom = (w.len() as f64 - 1.0).max(1.0);
    Ok(ArimaFit {
        params: ArimaParams {
            phi: phi.clamp(-COEF_BOUND, COEF_BOUND),
            theta: theta.clamp(-COEF_BOUND, COEF_BOUND),
            intercept,
            sigma2: (direct / denom).max(f64::MIN_POSITIVE),
        },
        css: best_css.min(direct),
        grid_css,
        warnings,
    })
}

fn pick_better(acc: Option<(f64, f64, f64)>, cand: (f64, f64, f64)) -> Option<(f64, f64, f64)> {
    match acc {
        None => Some(cand),
        Some(best) => {
            let closer = cand.1.abs() + cand.2.abs() < best.1.abs() + best.2.abs();
            if cand.0 < best.0 || (cand.0 == best.0 && closer) {
                Some(cand)
            } else {
                Some(best)
            }
        }
    }
}

/// Two-dimensional Nelder-Mead with standard coefficients. Returns the best
/// vertex and its value; never worse than the starting point.
fn nelder_mead(
    f: impl Fn([f64; 2]) -> f64,
    start: [f64; 2],
    step: f64,
    ftol: f64,
    max_iter: usize,
) -> ([f64; 2], f64) {
    let mut simplex = [
        start,
        [start[0] + step, start[1]],
        [start[0], start[1] + step],
    ];
    let mut values = simplex.map(&f);
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if (values[2] - values[0]).abs() <= ftol * (values[0].abs() + ftol) {
            break;
        }
        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] { along(-0.5) } else { along(0.5) };
            let fc = f(contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    values[k] = f(simplex[k]);
                }
            }
        }
    }
    let best = (0..3)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    (simplex[best], values[best])
}

fn next_difference(params: &ArimaParams, w_last: f64, eps_last: f64) -> f64 {
    params.intercept + params.phi * (w_last - params.intercept) + params.theta * eps_last
}

/// One-step-ahead level forecast after `history`.
pub fn forecast_one_step(params: &ArimaParams, history: &[f64]) -> Result<f64> {
    let w = difference(history)?;
    let eps = css_residuals(&w, params.phi, params.theta, params.intercept);
    let last = history[history.len() - 1];
    Ok(last + next_difference(params, w[w.len() - 1], eps[eps.len() - 1]))
}

/// Rolling one-step forecasts of `series[t]` for each `t` in `start..len`,
/// each using only `series[..t]`. Parameters stay frozen.
pub fn rolling_forecasts(params: &ArimaParams, series: &[f64], start: usize) -> Result<Vec<f64>> {
    if start < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: start,
        });
    }
    if start > series.len() {
        return Err(Error::Argument(format!(
            "forecast start {start} beyond series length {}",
            series.len()
        )));
    }
    let w = difference(series)?;
    let eps = css_residuals(&w, params.phi, params.theta, params.intercept);
    // Forecasting series[t] uses w[..t-1], whose last residual is eps[t-2].
    Ok((start..series.len())
        .map(|t| series[t - 1] + next_difference(params, w[t - 2], eps[t - 2]))
        .collect())
}

/// `idx,actual,forecast` CSV.
pub fn forecast_csv(indices: &[usize], actual: &[f64], forecast: &[f64]) -> String {
    let mut out = String::from("idx,actual,forecast\n");
    for ((i, a), f) in indices.iter().zip(actual).zip(forecast) {
        out.push_str(&format!("{i},{a},{f}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_examples() {
        assert_eq!(difference(&[1.0, 3.0, 6.0]).unwrap(), vec![2.0, 3.0]);
        assert_eq!(difference(&[4.0, 4.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        assert!(difference(&[1.0]).is_err());
        let x = [1.5, -2.0, 7.25, 0.0, 3.0];
        assert_eq!(integrate(&difference(&x).unwrap(), x[0]), x.to_vec());
    }

    #[test]
    fn random_walk_forecast_is_last_value() {
        let p = ArimaParams {
            phi: 0.0,
            theta: 0.0,
            intercept: 0.0,
            sigma2: 1.0,
        };
        assert_eq!(forecast_one_step(&p, &[1.0, 4.0, 2.0]).unwrap(), 2.0);
        let drift = ArimaParams { intercept: 0.5, ..p };
        assert_eq!(forecast_one_step(&drift, &[1.0, 4.0, 2.0]).unwrap(), 2.5);
    }

    #[test]
    fn hand_traced_four_point_history() {
        // w = [1, 2, 1]; ε_1 = 2 - 0.5·1 = 1.5; ε_2 = 1 - 0.5·2 - 0.2·1.5 = -0.3;
        // ŵ = 0.5·1 + 0.2·(-0.3) = 0.44; forecast = 5 + 0.44.
        let p = ArimaParams {
            phi: 0.5,
            theta: 0.2,
            intercept: 0.0,
            sigma2: 1.0,
        };
        let f = forecast_one_step(&p, &[1.0, 2.0, 4.0, 5.0]).unwrap();
        assert!((f - 5.44).abs() < 1e-12);
    }

    #[test]
    fn rolling_matches_refitting_history() {
        let p = ArimaParams {
            phi: 0.4,
            theta: -0.3,
            intercept: 0.01,
            sigma2: 1.0,
        };
        let series: Vec<f64> = (0..30).map(|i| ((i * 7 % 11) as f64).sin() + i as f64 * 0.1).collect();
        let rolled = rolling_forecasts(&p, &series, 5).unwrap();
        for (k, t) in (5..series.len()).enumerate() {
            assert_eq!(rolled[k], forecast_one_step(&p, &series[..t]).unwrap());
        }
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            fit_css(&[1.0; 19]),
            Err(Error::InsufficientData { needed: 20, .. })
        ));
    }

    #[test]
    fn linear_ramp_recovers_drift() {
        let series: Vec<f64> = (0..100).map(|i| 3.0 + 0.25 * i as f64).collect();
        let fit = fit_css(&series).unwrap();
        assert!((fit.params.intercept - 0.25).abs() < 1e-9);
        assert!(fit.css < 1e-18);
        assert!(fit.params.sigma2 > 0.0);
    }

    #[test]
    fn profiled_intercept_matches_direct_css() {
        let w = [0.3, -0.1, 0.4, 0.2, -0.5, 0.1, 0.0, 0.6];
        let (c, mu) = profile_intercept(&w, 0.3, -0.4);
        assert!((c - css(&w, 0.3, -0.4, mu)).abs() < 1e-12);
        for d in [-0.01, 0.01] {
            assert!(css(&w, 0.3, -0.4, mu + d) > c);
        }
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let (p, v) = nelder_mead(
            |p| (p[0] - 0.3).powi(2) + 2.0 * (p[1] + 0.2).powi(2),
            [0.0, 0.0],
            0.1,
            1e-16,
            1000,
        );
        assert!((p[0] - 0.3).abs() < 1e-5 && (p[1] + 0.2).abs() < 1e-5, "{p:?} {v}");
    }

    #[test]
    fn params_json_schema() {
        let p = ArimaParams {
            phi: 0.1,
            theta: 0.2,
            intercept: 0.3,
            sigma2: 0.4,
        };
        let text = p.to_json().unwrap();
        assert_eq!(ArimaParams::from_json(&text).unwrap(), p);
        for key in ["phi", "theta", "intercept", "sigma2"] {
            assert!(text.contains(key));
        }
    }
}
