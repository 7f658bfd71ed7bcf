//! Background-ratio estimation from a pair of PL spectra: the emitter
//! spectrum and a nearby background-only spectrum, integrated over the
//! detection window.

use super::FitError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BackgroundRatio {
    /// rho = (S_emitter - S_background) / S_emitter.
    pub rho: f64,
    /// Set when a negative ratio was clamped to zero.
    pub clamped: bool,
}

/// Trapezoidal integral of a sampled spectrum over [w0, w1], interpolating
/// linearly at the window edges. The spectrum must cover the window.
fn integrate_window(
    spectrum: &[(f64, f64)],
    window: (f64, f64),
    label: &str,
) -> Result<f64, FitError> {
    let (w0, w1) = window;
    if !(w1 > w0) {
        return Err(FitError::Domain("empty integration window".into()));
    }
    if spectrum.len() < 2 {
        return Err(FitError::Domain(format!("{label}: too few samples")));
    }
    let mut rows = spectrum.to_vec();
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if rows.first().unwrap().0 > w0 || rows.last().unwrap().0 < w1 {
        return Err(FitError::Domain(format!(
            "{label}: spectrum does not cover the window [{w0}, {w1}] nm"
        )));
    }
    let value_at = |wl: f64| -> f64 {
        let idx = rows.partition_point(|r| r.0 <= wl).clamp(1, rows.len() - 1);
        let (x0, y0) = rows[idx - 1];
        let (x1, y1) = rows[idx];
        y0 + (wl - x0) / (x1 - x0) * (y1 - y0)
    };
    let mut nodes: Vec<(f64, f64)> = vec![(w0, value_at(w0))];
    nodes.extend(rows.iter().filter(|r| r.0 > w0 && r.0 < w1));
    nodes.push((w1, value_at(w1)));
    let mut sum = 0.0;
    for pair in nodes.windows(2) {
        sum += 0.5 * (pair[0].1 + pair[1].1) * (pair[1].0 - pair[0].0);
    }
    Ok(sum)
}

/// rho from integrated spectra. Negative ratios (background above the
/// emitter spectrum) are clamped to zero and flagged.
pub fn background_ratio_from_spectra(
    emitter_spectrum: &[(f64, f64)],
    background_spectrum: &[(f64, f64)],
    integration_window_nm: (f64, f64),
) -> Result<BackgroundRatio, FitError> {
    let s_emitter = integrate_window(emitter_spectrum, integration_window_nm, "emitter")?;
    let s_background = integrate_window(background_spectrum, integration_window_nm, "background")?;
    if s_emitter <= 0.0 {
        return Err(FitError::Domain("emitter spectrum integrates to zero".into()));
    }
    let raw = (s_emitter - s_background) / s_emitter;
    if raw < 0.0 {
        Ok(BackgroundRatio {
            rho: 0.0,
            clamped: true,
        })
    } else {
        Ok(BackgroundRatio {
            rho: raw,
            clamped: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat(level: f64) -> Vec<(f64, f64)> {
        (600..=660).map(|wl| (wl as f64, level)).collect()
    }

    #[test]
    fn zero_background_gives_unity() {
        let r = background_ratio_from_spectra(&flat(100.0), &flat(0.0), (610.0, 650.0)).unwrap();
        assert_relative_eq!(r.rho, 1.0);
        assert!(!r.clamped);
    }

    #[test]
    fn equal_spectra_give_zero() {
        let r = background_ratio_from_spectra(&flat(70.0), &flat(70.0), (610.0, 650.0)).unwrap();
        assert_relative_eq!(r.rho, 0.0);
        assert!(!r.clamped);
    }

    #[test]
    fn negative_ratio_clamps_with_flag() {
        let r = background_ratio_from_spectra(&flat(50.0), &flat(80.0), (610.0, 650.0)).unwrap();
        assert_eq!(r.rho, 0.0);
        assert!(r.clamped);
    }

    #[test]
    fn paper_like_ratio() {
        // emitter line on background: 88% of the window integral is signal
        let emitter: Vec<(f64, f64)> = (600..=660)
            .map(|wl| {
                let x = wl as f64;
                let line = 1655.0 * (-((x - 620.0) / 3.0).powi(2)).exp();
                (x, line + 30.0)
            })
            .collect();
        let background = flat(30.0);
        let r =
            background_ratio_from_spectra(&emitter, &background, (610.0, 650.0)).unwrap();
        let s_line = 1655.0 * 3.0 * std::f64::consts::PI.sqrt(); // Gaussian area
        let expected = s_line / (s_line + 30.0 * 40.0);
        assert_relative_eq!(r.rho, expected, epsilon = 1e-3);
        assert!((r.rho - 0.88).abs() < 0.02);
    }

    #[test]
    fn window_coverage_enforced() {
        assert!(background_ratio_from_spectra(&flat(1.0), &flat(1.0), (590.0, 650.0)).is_err());
    }
}
