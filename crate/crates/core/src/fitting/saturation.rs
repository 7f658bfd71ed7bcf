//! Saturation-curve fitting: I(P) = I_sat P / (P + P_sat) + c P + D.

use super::lsq::{levenberg_marquardt, LsqOptions, LsqProblem};
use super::FitError;
use serde::Serialize;

/// Detector dark counts assumed when none are given, cps.
pub const DEFAULT_DARK_COUNTS_CPS: f64 = 500.0;

#[derive(Debug, Clone)]
pub struct SaturationData {
    /// (excitation power mW, detected rate cps), powers strictly increasing.
    pub rows: Vec<(f64, f64)>,
    /// Optional per-row rate uncertainty, cps.
    pub sigma_cps: Option<Vec<f64>>,
}

impl SaturationData {
    fn validate(&self) -> Result<(), FitError> {
        if self.rows.len() < 4 {
            return Err(FitError::Domain(
                "saturation fit needs at least 4 data points".into(),
            ));
        }
        for pair in self.rows.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(FitError::Domain(
                    "powers must be strictly increasing".into(),
                ));
            }
        }
        if self.rows.iter().any(|r| r.0 <= 0.0 || r.1 < 0.0) {
            return Err(FitError::Domain(
                "powers must be positive and rates nonnegative".into(),
            ));
        }
        if let Some(sigma) = &self.sigma_cps {
            if sigma.len() != self.rows.len() || sigma.iter().any(|s| *s <= 0.0) {
                return Err(FitError::Domain("bad uncertainty column".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SaturationFit {
    pub i_sat_cps: f64,
    pub p_sat_mw: f64,
    pub c_cps_per_mw: f64,
    pub d_cps: f64,
    pub i_sat_err: f64,
    pub p_sat_err: f64,
    pub c_err: f64,
    pub d_err: f64,
    /// True when the linear background was pinned to zero (either on
    /// request or because a free fit drove it negative).
    pub c_fixed: bool,
    pub d_fixed: bool,
    pub residual_norm: f64,
}

/// The model itself, handy for forward simulation.
pub fn saturation_model(i_sat: f64, p_sat: f64, c: f64, d: f64, power_mw: f64) -> f64 {
    i_sat * power_mw / (power_mw + p_sat) + c * power_mw + d
}

/// Weighted least squares of the saturation model. The dark-count term D is
/// fixed (to `fix_d` or 500 cps); the linear background c is free unless
/// `fix_c_to_zero`, and is re-fit pinned to zero if it converges negative.
pub fn fit_saturation(
    data: &SaturationData,
    fix_c_to_zero: bool,
    fix_d: Option<f64>,
) -> Result<SaturationFit, FitError> {
    data.validate()?;
    check_span(data)?;
    let d = fix_d.unwrap_or(DEFAULT_DARK_COUNTS_CPS);

    let first = run(data, d, false)?;
    let (fit, c_fixed) = if fix_c_to_zero || first.params.get(2).copied().unwrap_or(0.0) < 0.0 {
        (run(data, d, true)?, true)
    } else {
        (first, false)
    };

    let p_max = data.rows.last().unwrap().0;
    let p_min = data.rows.first().unwrap().0;
    let p_sat = fit.params[1];
    if p_sat > p_max || p_sat < p_min / 10.0 {
        return Err(FitError::Domain(format!(
            "data does not span the half-saturation power (P_sat = {p_sat:.3} mW, data [{p_min}, {p_max}] mW)"
        )));
    }

    let free_c = fit.params.len() == 3;
    Ok(SaturationFit {
        i_sat_cps: fit.params[0],
        p_sat_mw: fit.params[1],
        c_cps_per_mw: if free_c { fit.params[2] } else { 0.0 },
        d_cps: d,
        i_sat_err: fit.std_errors[0],
        p_sat_err: fit.std_errors[1],
        c_err: if free_c { fit.std_errors[2] } else { 0.0 },
        d_err: 0.0,
        c_fixed,
        d_fixed: true,
        residual_norm: fit.residual_norm,
    })
}

/// The data must actually bend: below saturation the rate grows linearly
/// with power, so a last-third slope close to the first-third slope means
/// the half-saturation power was never reached.
fn check_span(data: &SaturationData) -> Result<(), FitError> {
    let third = (data.rows.len() / 3).max(2);
    let slope = |rows: &[(f64, f64)]| -> f64 {
        let n = rows.len() as f64;
        let sx: f64 = rows.iter().map(|r| r.0).sum();
        let sy: f64 = rows.iter().map(|r| r.1).sum();
        let sxx: f64 = rows.iter().map(|r| r.0 * r.0).sum();
        let sxy: f64 = rows.iter().map(|r| r.0 * r.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    let lo = slope(&data.rows[..third]);
    let hi = slope(&data.rows[data.rows.len() - third..]);
    if lo > 0.0 && hi > 0.75 * lo {
        return Err(FitError::Domain(
            "data does not span the half-saturation power (no curvature over the measured range)"
                .into(),
        ));
    }
    Ok(())
}

fn run(
    data: &SaturationData,
    d: f64,
    pin_c: bool,
) -> Result<super::lsq::LsqFit, FitError> {
    let x: Vec<f64> = data.rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = data.rows.iter().map(|r| r.1).collect();
    let weights: Option<Vec<f64>> = data
        .sigma_cps
        .as_ref()
        .map(|s| s.iter().map(|v| 1.0 / (v * v)).collect());

    let max_rate = y.iter().cloned().fold(0.0_f64, f64::max);
    let i_sat0 = (1.5 * (max_rate - d)).max(1.0);
    // power where the rate first passes half of the top estimate
    let half = d + 0.5 * (max_rate - d);
    let p_sat0 = data
        .rows
        .iter()
        .find(|r| r.1 >= half)
        .map(|r| r.0)
        .unwrap_or(x[x.len() / 2])
        .max(1e-6);

    let model_free = |p: &[f64], power: f64| saturation_model(p[0], p[1], p[2], d, power);
    let jac_free = |p: &[f64], power: f64| {
        let denom = power + p[1];
        vec![
            power / denom,
            -p[0] * power / (denom * denom),
            power,
        ]
    };
    let model_pinned = |p: &[f64], power: f64| saturation_model(p[0], p[1], 0.0, d, power);
    let jac_pinned = |p: &[f64], power: f64| {
        let denom = power + p[1];
        vec![power / denom, -p[0] * power / (denom * denom)]
    };

    let options = LsqOptions::default();
    if pin_c {
        levenberg_marquardt(
            &LsqProblem {
                model: &model_pinned,
                jacobian: Some(&jac_pinned),
                x: &x,
                y: &y,
                weights: weights.as_deref(),
                lower: Some(&[0.0, 1e-9]),
                upper: None,
            },
            &[i_sat0, p_sat0],
            &options,
        )
    } else {
        levenberg_marquardt(
            &LsqProblem {
                model: &model_free,
                jacobian: Some(&jac_free),
                x: &x,
                y: &y,
                weights: weights.as_deref(),
                lower: Some(&[0.0, 1e-9, f64::NEG_INFINITY]),
                upper: None,
            },
            &[i_sat0, p_sat0, 0.0],
            &options,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn forward(i_sat: f64, p_sat: f64, c: f64, d: f64, noise: f64, seed: u64) -> SaturationData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<(f64, f64)> = (1..=25)
            .map(|i| {
                let p = 0.05 * 1.35f64.powi(i); // log-spaced through saturation
                let clean = saturation_model(i_sat, p_sat, c, d, p);
                let jitter: f64 = rng.random_range(-1.0..1.0);
                (p, (clean * (1.0 + noise * jitter)).max(0.0))
            })
            .collect();
        SaturationData {
            rows,
            sigma_cps: None,
        }
    }

    #[test]
    fn half_saturation_identity() {
        let (i_sat, p_sat, c, d) = (3e5, 0.5, 120.0, 500.0);
        let at_psat = saturation_model(i_sat, p_sat, c, d, p_sat);
        assert_relative_eq!(at_psat, i_sat / 2.0 + c * p_sat + d, epsilon = 1e-9);
    }

    #[test]
    fn noise_free_round_trip_is_exact() {
        let data = forward(3e5, 0.5, 0.0, 500.0, 0.0, 1);
        let fit = fit_saturation(&data, false, Some(500.0)).unwrap();
        assert_relative_eq!(fit.i_sat_cps, 3e5, max_relative = 1e-6);
        assert_relative_eq!(fit.p_sat_mw, 0.5, max_relative = 1e-6);
        assert!(fit.c_cps_per_mw.abs() < 1e-3);
    }

    #[test]
    fn noisy_round_trip_within_three_sigma() {
        let data = forward(3e5, 0.5, 0.0, 500.0, 0.01, 42);
        let fit = fit_saturation(&data, false, Some(500.0)).unwrap();
        assert!(
            (fit.i_sat_cps - 3e5).abs() < 3.0 * fit.i_sat_err.max(1.0),
            "I_sat {} +- {}",
            fit.i_sat_cps,
            fit.i_sat_err
        );
        assert!(
            (fit.p_sat_mw - 0.5).abs() < 3.0 * fit.p_sat_err.max(1e-6),
            "P_sat {} +- {}",
            fit.p_sat_mw,
            fit.p_sat_err
        );
    }

    #[test]
    fn negative_background_is_refit_pinned_to_zero() {
        // data generated with c slightly negative drives a free c below 0
        let mut data = forward(1e5, 2.0, -300.0, 500.0, 0.0, 3);
        for row in data.rows.iter_mut() {
            row.1 = row.1.max(0.0);
        }
        let fit = fit_saturation(&data, false, None).unwrap();
        assert!(fit.c_fixed);
        assert_eq!(fit.c_cps_per_mw, 0.0);
    }

    #[test]
    fn insufficient_span_is_a_domain_error() {
        // all powers far below saturation
        let rows: Vec<(f64, f64)> = (1..=10)
            .map(|i| {
                let p = 1e-4 * i as f64;
                (p, saturation_model(3e5, 5.0, 0.0, 500.0, p))
            })
            .collect();
        let data = SaturationData {
            rows,
            sigma_cps: None,
        };
        assert!(matches!(
            fit_saturation(&data, true, None),
            Err(FitError::Domain(_))
        ));
    }

    #[test]
    fn too_few_points_rejected() {
        let data = SaturationData {
            rows: vec![(0.1, 10.0), (0.2, 20.0), (0.3, 28.0)],
            sigma_cps: None,
        };
        assert!(matches!(
            fit_saturation(&data, true, None),
            Err(FitError::Domain(_))
        ));
    }
}
