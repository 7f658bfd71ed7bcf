//! Photon-autocorrelation fitting with detector jitter.
//!
//! Three-level emitter model with one shelving (bunching) term,
//!
//!   g2(tau) = 1 - (1 + a) exp(-|tau|/tau1) + a exp(-|tau|/tau2),
//!
//! scaled by the emitter-to-total background ratio rho as
//! 1 - rho^2 + rho^2 g2, and convolved with the Gaussian detector response.
//! The exponential-Gaussian convolution has the closed form
//! (1/2) e^{s^2/2T^2} [e^{t/T} erfc((t/s + s/T)/sqrt2) + (t -> -t)], which
//! is evaluated in a scaled-complementary form to stay finite at large
//! delays.

use super::lsq::{levenberg_marquardt, LsqFit, LsqOptions, LsqProblem};
use super::FitError;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct G2Data {
    /// (delay ns, normalized coincidences).
    pub rows: Vec<(f64, f64)>,
    pub detector_jitter_sigma_ns: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct G2Fit {
    /// Convolved model at zero delay (what the detector sees).
    pub g2_zero_raw: f64,
    /// Background-scaled model at zero delay without jitter: 1 - rho^2.
    pub g2_zero_deconvolved: f64,
    pub antibunching_time_ns: f64,
    pub bunching_amplitude: f64,
    pub bunching_time_ns: f64,
    /// Emitter PL over total PL.
    pub background_ratio: f64,
    pub rho_err: f64,
    pub a_fixed_zero: bool,
    pub residual_norm: f64,
}

/// Scaled complementary error function erfcx(x) = e^{x^2} erfc(x), x >= 0.
fn erfcx(x: f64) -> f64 {
    if x < 2.0 {
        (x * x).exp() * statrs::function::erf::erfc(x)
    } else {
        // Laplace continued fraction, bottom-up
        let mut f = x;
        for k in (1..=60).rev() {
            f = x + (k as f64 / 2.0) / f;
        }
        1.0 / (std::f64::consts::PI.sqrt() * f)
    }
}

/// e^a erfc(b) without overflow.
fn exp_erfc(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        (a - b * b).exp() * erfcx(b)
    } else {
        2.0 * a.exp() - (a - b * b).exp() * erfcx(-b)
    }
}

/// exp(-|t|/tau) convolved with a unit-area Gaussian of width sigma.
fn exp_conv_gauss(t: f64, tau: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return (-t.abs() / tau).exp();
    }
    let a = sigma * sigma / (2.0 * tau * tau);
    let sqrt2 = std::f64::consts::SQRT_2;
    let b_plus = (t / sigma + sigma / tau) / sqrt2;
    let b_minus = (-t / sigma + sigma / tau) / sqrt2;
    0.5 * (exp_erfc(a + t / tau, b_plus) + exp_erfc(a - t / tau, b_minus))
}

/// Background-scaled, jitter-convolved model.
pub fn g2_background_model(
    tau_ns: f64,
    rho: f64,
    tau1_ns: f64,
    a: f64,
    tau2_ns: f64,
    jitter_sigma_ns: f64,
) -> f64 {
    let anti = exp_conv_gauss(tau_ns, tau1_ns, jitter_sigma_ns);
    let bunch = if a != 0.0 {
        exp_conv_gauss(tau_ns, tau2_ns, jitter_sigma_ns)
    } else {
        0.0
    };
    let g2 = 1.0 - (1.0 + a) * anti + a * bunch;
    1.0 - rho * rho + rho * rho * g2
}

/// Least-squares fit of the convolved model. The bunching term is kept only
/// if data support it: the fit runs first with a = 0, then with a free, and
/// the simpler model wins when the amplitude is consistent with zero.
pub fn fit_g2(data: &G2Data) -> Result<G2Fit, FitError> {
    let sigma = data.detector_jitter_sigma_ns;
    if !(sigma > 0.0) {
        return Err(FitError::Domain("jitter sigma must be positive".into()));
    }
    if data.rows.len() < 8 {
        return Err(FitError::Domain("g2 fit needs at least 8 points".into()));
    }
    if data.rows.iter().any(|r| r.1 < 0.0) {
        return Err(FitError::Domain("g2 values must be nonnegative".into()));
    }
    let x: Vec<f64> = data.rows.iter().map(|r| r.0).collect();
    let y: Vec<f64> = data.rows.iter().map(|r| r.1).collect();
    let tau_max = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    // crude initial guesses from the dip
    let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let rho0 = (1.0 - y_min).clamp(0.01, 1.0).sqrt();
    let depth = 1.0 - y_min;
    let recovery = 1.0 - depth * 0.37;
    let tau1_0 = data
        .rows
        .iter()
        .filter(|r| r.0 > 0.0 && r.1 >= recovery)
        .map(|r| r.0)
        .fold(f64::INFINITY, f64::min)
        .min(tau_max / 5.0)
        .max(sigma);

    let options = LsqOptions::default();

    // stage 1: no bunching
    let model2 = |p: &[f64], t: f64| g2_background_model(t, p[0], p[1], 0.0, 1.0, sigma);
    let fit2 = levenberg_marquardt(
        &LsqProblem {
            model: &model2,
            jacobian: None,
            x: &x,
            y: &y,
            weights: None,
            lower: Some(&[0.0, 1e-4]),
            upper: Some(&[1.0, f64::INFINITY]),
        },
        &[rho0, tau1_0],
        &options,
    )?;

    // stage 2: try the shelving term
    let model4 = |p: &[f64], t: f64| g2_background_model(t, p[0], p[1], p[2], p[3], sigma);
    let fit4 = levenberg_marquardt(
        &LsqProblem {
            model: &model4,
            jacobian: None,
            x: &x,
            y: &y,
            weights: None,
            lower: Some(&[0.0, 1e-4, 0.0, 1e-4]),
            upper: Some(&[1.0, f64::INFINITY, f64::INFINITY, f64::INFINITY]),
        },
        &[fit2.params[0], fit2.params[1], 0.05, 8.0 * fit2.params[1]],
        &options,
    );

    let (fit, a_fixed_zero): (LsqFit, bool) = match fit4 {
        Ok(f4) if f4.params[2] > f4.std_errors[2] && f4.chi2 < fit2.chi2 => (f4, false),
        _ => (fit2, true),
    };

    let rho = fit.params[0];
    let tau1 = fit.params[1];
    let (a, tau2) = if a_fixed_zero {
        (0.0, 0.0)
    } else {
        (fit.params[2], fit.params[3])
    };

    if tau_max < 5.0 * tau1 {
        return Err(FitError::Domain(format!(
            "delay range {tau_max:.2} ns shorter than 5x the antibunching time {tau1:.2} ns"
        )));
    }

    Ok(G2Fit {
        g2_zero_raw: g2_background_model(0.0, rho, tau1, a, tau2.max(1e-4), sigma),
        g2_zero_deconvolved: 1.0 - rho * rho,
        antibunching_time_ns: tau1,
        bunching_amplitude: a,
        bunching_time_ns: tau2,
        background_ratio: rho,
        rho_err: fit.std_errors[0],
        a_fixed_zero,
        residual_norm: fit.residual_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn erfcx_reference_values() {
        // high-precision references
        assert_relative_eq!(erfcx(0.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(erfcx(1.0), 0.42758357615580700441, epsilon = 1e-10);
        assert_relative_eq!(erfcx(2.0), 0.25539567631050574387, epsilon = 1e-9);
        assert_relative_eq!(erfcx(5.0), 0.11070463773306862637, epsilon = 1e-12);
        assert_relative_eq!(erfcx(20.0), 0.028174348741051319, epsilon = 1e-12);
    }

    #[test]
    fn convolution_reduces_to_exponential_for_small_jitter() {
        // the cusp at zero delay is rounded by at most sigma sqrt(2/pi)/tau
        let sigma = 1e-4;
        let tau = 5.0;
        let cusp = sigma * (2.0 / std::f64::consts::PI).sqrt() / tau;
        for t in [0.0, 0.5, 2.0, 10.0, 40.0] {
            let plain = (-t / tau).exp();
            let conv = exp_conv_gauss(t, tau, sigma);
            assert!(
                (conv - plain).abs() <= 1.1 * cusp + 1e-12,
                "t={t}: {conv} vs {plain}"
            );
        }
    }

    #[test]
    fn convolution_is_finite_at_extreme_delays() {
        let v = exp_conv_gauss(1e4, 0.1, 0.3);
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn perfect_emitter_and_pure_background_limits() {
        // rho = 1, no jitter: perfect dip to zero at tau = 0
        assert_relative_eq!(
            g2_background_model(0.0, 1.0, 5.0, 0.0, 1.0, 0.0),
            0.0,
            epsilon = 1e-12
        );
        // rho = 0: flat unity for all delays
        for t in [-20.0, 0.0, 3.0, 50.0] {
            assert_relative_eq!(
                g2_background_model(t, 0.0, 5.0, 0.3, 30.0, 0.4),
                1.0,
                epsilon = 1e-12
            );
        }
    }

    fn synthetic(rho: f64, tau1: f64, a: f64, tau2: f64, sigma: f64, noise: f64) -> G2Data {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let rows: Vec<(f64, f64)> = (-400..=400)
            .map(|i| {
                let t = i as f64 * 0.125;
                let clean = g2_background_model(t, rho, tau1, a, tau2, sigma);
                let jitter: f64 = rng.random_range(-1.0..1.0);
                (t, (clean + noise * jitter).max(0.0))
            })
            .collect();
        G2Data {
            rows,
            detector_jitter_sigma_ns: sigma,
        }
    }

    #[test]
    fn recovers_background_ratio_from_noisy_dip() {
        // the paper's regime: rho = 0.87 gives a raw dip near 0.3 once the
        // 0.3 ns detector jitter rounds it off
        let data = synthetic(0.87, 5.0, 0.0, 1.0, 0.3, 0.02);
        let fit = fit_g2(&data).unwrap();
        assert!(
            (fit.background_ratio - 0.87).abs() < 0.04,
            "rho = {}",
            fit.background_ratio
        );
        assert!(fit.g2_zero_raw > 0.2 && fit.g2_zero_raw < 0.4);
        assert_relative_eq!(
            fit.g2_zero_deconvolved,
            1.0 - fit.background_ratio * fit.background_ratio,
            epsilon = 1e-12
        );
        assert!((fit.antibunching_time_ns - 5.0).abs() < 0.5);
    }

    #[test]
    fn noise_free_fit_with_bunching_recovers_parameters() {
        let data = synthetic(0.9, 4.0, 0.25, 25.0, 0.3, 0.0);
        let fit = fit_g2(&data).unwrap();
        assert!(!fit.a_fixed_zero);
        assert_relative_eq!(fit.background_ratio, 0.9, max_relative = 1e-4);
        assert_relative_eq!(fit.antibunching_time_ns, 4.0, max_relative = 1e-3);
        assert_relative_eq!(fit.bunching_amplitude, 0.25, max_relative = 1e-2);
        assert_relative_eq!(fit.bunching_time_ns, 25.0, max_relative = 1e-2);
    }

    #[test]
    fn bunching_term_auto_disables_without_support() {
        let data = synthetic(0.8, 5.0, 0.0, 1.0, 0.3, 0.01);
        let fit = fit_g2(&data).unwrap();
        assert!(fit.a_fixed_zero);
        assert_eq!(fit.bunching_amplitude, 0.0);
    }

    #[test]
    fn jitter_must_be_positive() {
        let data = G2Data {
            rows: (-10..=10).map(|i| (i as f64, 1.0)).collect(),
            detector_jitter_sigma_ns: 0.0,
        };
        assert!(matches!(fit_g2(&data), Err(FitError::Domain(_))));
    }

    #[test]
    fn short_delay_range_is_rejected() {
        // tau1 = 5 ns but data only reaches +-10 ns
        let rows: Vec<(f64, f64)> = (-80..=80)
            .map(|i| {
                let t = i as f64 * 0.125;
                (t, g2_background_model(t, 0.9, 5.0, 0.0, 1.0, 0.3))
            })
            .collect();
        let data = G2Data {
            rows,
            detector_jitter_sigma_ns: 0.3,
        };
        assert!(matches!(fit_g2(&data), Err(FitError::Domain(_))));
    }
}
