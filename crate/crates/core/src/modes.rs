//! Mode analysis on top of the angular spectrum.
//!
//! Peaks of p(n_eff) are the modes the dipole actually couples to. They are
//! classified by where they sit relative to the collection half space and
//! the host: below n_+ they leak out at a well-defined polar angle, between
//! n_+ and n_0 they are trapped by total internal reflection, above n_0
//! they are evanescent in the host (interface plasmons).
//!
//! The transcendental slab equations provide an independent oracle for the
//! guided modes of a symmetric dielectric slab, and the mirror reflection
//! phase gives the penetration depth entering the Fabry-Perot resonance
//! condition q lambda/2 = t0 sqrt(n0^2 - n_eff^2) + d_pen.

use serde::Serialize;
use thiserror::Error;

use crate::dipole::AngularSpectrum;
use crate::stack::Substack;
use crate::tmm::{k0, substack_coefficients, PlaneWaveChannel, Polarization, TmmError};

#[derive(Debug, Error)]
pub enum ModesError {
    #[error("|r| = {r_abs:.3} at n_eff = {n_eff}: substack is not a mirror here")]
    NoMirror { r_abs: f64, n_eff: f64 },
    #[error("n_eff = {n_eff} >= n_upper = {n_upper}: not a leaky mode")]
    NotLeaky { n_eff: f64, n_upper: f64 },
    #[error("no order-{order_q} resonance in the leaky band")]
    NoResonance { order_q: u32 },
    #[error("invalid stack: {0}")]
    InvalidStack(String),
    #[error(transparent)]
    Tmm(#[from] TmmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeKind {
    Leaky,
    Guided,
    Spp,
}

impl std::fmt::Display for ModeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeKind::Leaky => write!(f, "leaky"),
            ModeKind::Guided => write!(f, "guided"),
            ModeKind::Spp => write!(f, "spp"),
        }
    }
}

/// One extracted peak of the angular spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct ModeRecord {
    pub n_eff: f64,
    pub polarization: Polarization,
    pub kind: ModeKind,
    pub peak_height: f64,
    pub fwhm_n_eff: f64,
}

/// CSV rows `n_eff,pol,kind,fwhm`.
pub fn modes_to_csv(modes: &[ModeRecord]) -> String {
    let mut out = String::from("n_eff,pol,kind,fwhm\n");
    for m in modes {
        out.push_str(&format!(
            "{:.9e},{},{},{:.9e}\n",
            m.n_eff, m.polarization, m.kind, m.fwhm_n_eff
        ));
    }
    out
}

/// Extract local maxima with prominence at least 3x the local background
/// from both polarization channels of the spectrum.
pub fn find_modes(
    spectrum: &AngularSpectrum,
    host_index: f64,
    upper_index: f64,
) -> Vec<ModeRecord> {
    let mut records = Vec::new();
    for (values, pol) in [
        (&spectrum.p_s, Polarization::S),
        (&spectrum.p_p, Polarization::P),
    ] {
        records.extend(peaks_of(
            &spectrum.n_eff,
            values,
            pol,
            host_index,
            upper_index,
        ));
    }
    records.sort_by(|a, b| a.n_eff.partial_cmp(&b.n_eff).unwrap());
    records
}

fn peaks_of(
    n_eff: &[f64],
    p: &[f64],
    pol: Polarization,
    host_index: f64,
    upper_index: f64,
) -> Vec<ModeRecord> {
    let n = p.len();
    if n < 3 {
        return Vec::new();
    }
    let global_max = p.iter().fold(0.0_f64, |m, v| m.max(*v));
    // densities are in units of P_hom per unit n_eff; anything this small
    // is numerical residue of a structureless spectrum
    if global_max <= 1e-9 {
        return Vec::new();
    }
    let floor = 1e-6 * global_max;

    let mut candidates: Vec<ModeRecord> = Vec::new();
    for i in 1..n - 1 {
        if !(p[i] > p[i - 1] && p[i] >= p[i + 1] && p[i] > 0.0) {
            continue;
        }
        // topographic prominence: drop to the key saddle on either side,
        // walking until a higher point is met
        let mut left_valley = p[i];
        for j in (0..i).rev() {
            if p[j] > p[i] {
                break;
            }
            left_valley = left_valley.min(p[j]);
        }
        let mut right_valley = p[i];
        for value in p.iter().take(n).skip(i + 1) {
            if *value > p[i] {
                break;
            }
            right_valley = right_valley.min(*value);
        }
        let background = left_valley.max(right_valley);
        let prominence = p[i] - background;
        if prominence < 3.0 * background.abs().max(floor) {
            continue;
        }

        let nu = parabolic_peak(n_eff, p, i);
        let half = background + 0.5 * prominence;
        let fwhm = width_at(n_eff, p, i, half);
        let kind = if nu < upper_index {
            ModeKind::Leaky
        } else if nu < host_index {
            ModeKind::Guided
        } else {
            ModeKind::Spp
        };
        candidates.push(ModeRecord {
            n_eff: nu,
            polarization: pol,
            kind,
            peak_height: p[i],
            fwhm_n_eff: fwhm,
        });
    }

    // merge split maxima that sit within each other's width
    candidates.sort_by(|a, b| a.n_eff.partial_cmp(&b.n_eff).unwrap());
    let mut merged: Vec<ModeRecord> = Vec::new();
    for c in candidates {
        match merged.last_mut() {
            Some(last)
                if (c.n_eff - last.n_eff).abs()
                    < 0.5 * last.fwhm_n_eff.max(c.fwhm_n_eff).max(1e-6) =>
            {
                if c.peak_height > last.peak_height {
                    *last = c;
                }
            }
            _ => merged.push(c),
        }
    }
    merged
}

/// Vertex of the parabola through the three samples around index `i`
/// (non-uniform grid).
fn parabolic_peak(x: &[f64], y: &[f64], i: usize) -> f64 {
    let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
    let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let curv = (d1 - d0) / (x2 - x0);
    if curv >= 0.0 {
        return x1;
    }
    let vertex = 0.5 * (x0 + x1 - d0 / curv);
    if vertex.is_finite() && vertex > x0 && vertex < x2 {
        vertex
    } else {
        x1
    }
}

fn width_at(x: &[f64], y: &[f64], peak: usize, level: f64) -> f64 {
    let mut left = x[0];
    for j in (1..=peak).rev() {
        if y[j - 1] <= level {
            let f = (y[j] - level) / (y[j] - y[j - 1]);
            left = x[j] - f * (x[j] - x[j - 1]);
            break;
        }
    }
    let mut right = *x.last().unwrap();
    for j in peak..x.len() - 1 {
        if y[j + 1] <= level {
            let f = (y[j] - level) / (y[j] - y[j + 1]);
            right = x[j] + f * (x[j + 1] - x[j]);
            break;
        }
    }
    right - left
}

/// Guided modes of the symmetric dielectric slab by bracketed root search
/// on the transcendental dispersion relations. Returns (n_eff, pol) pairs,
/// ascending in n_eff.
pub fn slab_modes_oracle(
    n_core: f64,
    n_clad: f64,
    t0_nm: f64,
    wavelength_nm: f64,
) -> Vec<(f64, Polarization)> {
    assert!(
        n_core > n_clad && n_clad > 0.0,
        "slab oracle needs real indices with n_core > n_clad"
    );
    let half_kt = 0.5 * k0(wavelength_nm) * t0_nm;
    let r = half_kt * (n_core * n_core - n_clad * n_clad).sqrt();
    let eps_ratio = (n_core / n_clad).powi(2);

    let mut modes = Vec::new();
    let half_pi = std::f64::consts::FRAC_PI_2;
    for pol in [Polarization::S, Polarization::P] {
        let scale = match pol {
            Polarization::S => 1.0,
            Polarization::P => eps_ratio,
        };
        let mut branch = 0usize;
        loop {
            let lo = branch as f64 * half_pi;
            if lo >= r {
                break;
            }
            // even branches: u tan u = scale * w; odd: -u cot u = scale * w
            let f = |u: f64| -> f64 {
                let w = (r * r - u * u).max(0.0).sqrt();
                if branch % 2 == 0 {
                    u * u.tan() - scale * w
                } else {
                    -u / u.tan() - scale * w
                }
            };
            // back off the tan singularity at the branch top; the w = 0
            // endpoint at u = r is fine to evaluate exactly
            let top = (branch + 1) as f64 * half_pi;
            let b = if r < top { r } else { top - 1e-9 };
            let a = lo + 1e-12 * (1.0 + lo);
            if b > a && f(a) < 0.0 && f(b) > 0.0 {
                let u = bisect(&f, a, b);
                let transverse = 2.0 * u / (k0(wavelength_nm) * t0_nm);
                // the bracket keeps u < R, so the mode is guided; clamp
                // guards the cancellation right at cutoff
                let nu_sq = (n_core * n_core - transverse * transverse)
                    .max(n_clad * n_clad);
                modes.push((nu_sq.sqrt(), pol));
            }
            branch += 1;
        }
    }
    modes.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    modes
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Effective extra cavity length of a mirror substack: the reflection
/// phase referenced to an ideal mirror, in lambda/2 bookkeeping units,
/// d_pen = ((arg r + pi) mod pi) / (2 k0). Zero for a perfect mirror of
/// either (electric or magnetic) sign convention.
pub fn penetration_depth(
    mirror: &Substack,
    n_eff: f64,
    wavelength_nm: f64,
    polarization: Polarization,
) -> Result<f64, ModesError> {
    let coeffs = substack_coefficients(
        mirror,
        &PlaneWaveChannel {
            wavelength_nm,
            n_parallel: n_eff,
            polarization,
        },
    )?;
    let r_abs = coeffs.r.norm();
    if r_abs <= 0.1 {
        return Err(ModesError::NoMirror { r_abs, n_eff });
    }
    let psi = (coeffs.r.arg() + std::f64::consts::PI).rem_euclid(std::f64::consts::PI);
    Ok(psi / (2.0 * k0(wavelength_nm)))
}

/// One evaluation of the resonance condition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResonanceCheck {
    pub order_q: u32,
    pub lhs_nm: f64,
    pub rhs_nm: f64,
    pub residual_nm: f64,
}

/// q lambda/2 = t0 sqrt(n0^2 - n_eff^2) + d_pen_up + d_pen_low, with q the
/// nearest positive integer.
pub fn resonance_check(
    t0_nm: f64,
    n0: f64,
    n_eff: f64,
    d_pen_up_nm: f64,
    d_pen_low_nm: f64,
    wavelength_nm: f64,
) -> ResonanceCheck {
    let rhs = t0_nm * (n0 * n0 - n_eff * n_eff).sqrt() + d_pen_up_nm + d_pen_low_nm;
    let half_lambda = 0.5 * wavelength_nm;
    let order_q = (rhs / half_lambda).round().max(1.0) as u32;
    let lhs = order_q as f64 * half_lambda;
    ResonanceCheck {
        order_q,
        lhs_nm: lhs,
        rhs_nm: rhs,
        residual_nm: lhs - rhs,
    }
}

/// Polar angle (degrees) in the collection half space at which a leaky
/// mode propagates: Snell mapping theta_up = arcsin(n_eff / n_upper).
pub fn leaky_to_angle(n_eff: f64, n_upper: f64) -> Result<f64, ModesError> {
    if n_eff >= n_upper {
        return Err(ModesError::NotLeaky { n_eff, n_upper });
    }
    Ok((n_eff / n_upper).asin().to_degrees())
}

/// Effective index solving the round-trip phase condition of order q,
/// q lambda/2 = t0 sqrt(n0^2 - n_eff^2) + d_pen_up + d_pen_low,
/// found by a bracketed scan over the leaky band. This is the mode proper;
/// the corresponding peak of p(n_eff) sits slightly higher because of the
/// channel-weight factors under a broad resonance.
pub fn resonance_mode(
    stack: &crate::stack::Stack,
    polarization: Polarization,
    order_q: u32,
) -> Result<f64, ModesError> {
    let (upper, lower) = stack
        .split_at_dipole()
        .map_err(|e| ModesError::InvalidStack(e.to_string()))?;
    let wl = stack.dipole.wavelength_nm;
    let n0 = stack
        .host
        .material
        .index_at(wl)
        .map_err(TmmError::Material)?
        .n;
    let t0 = stack.host.thickness_nm;
    let residual = |nu: f64| -> Result<f64, ModesError> {
        let rhs = t0 * (n0 * n0 - nu * nu).sqrt()
            + penetration_depth(&upper, nu, wl, polarization)?
            + penetration_depth(&lower, nu, wl, polarization)?;
        Ok(order_q as f64 * 0.5 * wl - rhs)
    };

    let step = 1e-3;
    let nu_max = n0 - 1e-6;
    let mut prev_nu = 0.0;
    let mut prev_res = residual(prev_nu)?;
    let mut nu = step;
    while nu < nu_max {
        let res = residual(nu)?;
        // skip penetration-phase wrap discontinuities
        if prev_res.signum() != res.signum() && (res - prev_res).abs() < 0.2 * wl {
            let (mut a, mut b) = (prev_nu, nu);
            let mut fa = prev_res;
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                let fm = residual(m)?;
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        prev_nu = nu;
        prev_res = res;
        nu += step;
    }
    Err(ModesError::NoResonance { order_q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dipole::{angular_spectrum, EmissionSettings, SpectrumGrid};
    use crate::stack::stacks;
    use approx::assert_relative_eq;

    #[test]
    fn slab_oracle_fundamental_never_cuts_off() {
        let modes = slab_modes_oracle(2.414, 1.0, 5.0, 620.0);
        let te: Vec<_> = modes
            .iter()
            .filter(|(_, p)| *p == Polarization::S)
            .collect();
        assert_eq!(te.len(), 1, "thin slab keeps exactly one TE mode");
    }

    #[test]
    fn slab_oracle_vanishing_confinement() {
        let modes = slab_modes_oracle(1.0 + 1e-12, 1.0, 400.0, 620.0);
        let (nu, _) = modes.first().expect("fundamental mode must survive");
        assert_relative_eq!(*nu, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn slab_oracle_residuals_satisfy_dispersion() {
        let t0 = 350.0;
        let lambda = 620.0;
        for (nu, pol) in slab_modes_oracle(2.414, 1.0, t0, lambda) {
            let kappa = k0(lambda) * (2.414f64.powi(2) - nu * nu).sqrt();
            let gamma = k0(lambda) * (nu * nu - 1.0).sqrt();
            let u = 0.5 * kappa * t0;
            let w = 0.5 * gamma * t0;
            let scale = match pol {
                Polarization::S => 1.0,
                Polarization::P => 2.414f64.powi(2),
            };
            // the mode satisfies either the even or the odd relation
            let even = u * u.sin() - scale * w * u.cos();
            let odd = u * u.cos() + scale * w * u.sin();
            let residual = even.abs().min(odd.abs()) / (1.0 + u + scale * w);
            assert!(
                residual < 1e-10,
                "{pol} mode at n_eff={nu}: residual {residual}"
            );
        }
    }

    #[test]
    fn find_modes_matches_slab_oracle_at_350nm() {
        let stack = stacks::bare_membrane(350.0, 175.0, 90.0, 620.0);
        let spectrum = angular_spectrum(
            &stack,
            &SpectrumGrid::new(2.414),
            &EmissionSettings::default(),
        )
        .unwrap();
        let found = find_modes(&spectrum, 2.414, 1.0);
        let guided: Vec<&ModeRecord> = found
            .iter()
            .filter(|m| m.kind == ModeKind::Guided)
            .collect();
        assert!(!guided.is_empty());
        let oracle = slab_modes_oracle(2.414, 1.0, 350.0, 620.0);
        for mode in guided {
            let closest = oracle
                .iter()
                .filter(|(_, p)| *p == mode.polarization)
                .map(|(nu, _)| (nu - mode.n_eff).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(
                closest < 1e-3,
                "{} peak at {} has no oracle root within 1e-3 (distance {closest})",
                mode.polarization,
                mode.n_eff
            );
        }
    }

    #[test]
    fn homogeneous_spectrum_has_no_modes() {
        use crate::materials::presets;
        use crate::stack::{DipoleSource, Layer, Stack};
        let stack = Stack {
            upper_half_space: presets::diamond(),
            layers_above: vec![],
            host: Layer::new(presets::diamond(), 400.0),
            layers_below: vec![],
            lower_half_space: presets::diamond(),
            dipole: DipoleSource {
                wavelength_nm: 620.0,
                polar_angle_deg: 90.0,
                depth_nm: 200.0,
            },
        };
        let spectrum = angular_spectrum(
            &stack,
            &SpectrumGrid::new(3.0),
            &EmissionSettings {
                host_kappa: 0.0,
                ..EmissionSettings::default()
            },
        )
        .unwrap();
        assert!(find_modes(&spectrum, 2.414, 2.414).is_empty());
    }

    #[test]
    fn resonance_check_ideal_half_wave_cavity() {
        let n0 = 2.414;
        let t0 = 620.0 / (2.0 * n0);
        let check = resonance_check(t0, n0, 0.0, 0.0, 0.0, 620.0);
        assert_eq!(check.order_q, 1);
        assert_relative_eq!(check.residual_nm, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn resonance_check_case_i_numbers() {
        let check = resonance_check(86.5, 2.414, 0.33, 52.1, 50.8, 620.0);
        assert_eq!(check.order_q, 1);
        assert_relative_eq!(check.rhs_nm, 309.8, epsilon = 0.1);
        assert!(check.residual_nm.abs() < 0.5);
    }

    #[test]
    fn leaky_angle_snell_mapping() {
        assert_relative_eq!(leaky_to_angle(0.475, 1.0).unwrap(), 28.36, epsilon = 0.01);
        assert_relative_eq!(leaky_to_angle(0.0, 1.0).unwrap(), 0.0);
        assert!(leaky_to_angle(1.2, 1.0).is_err());
    }

    #[test]
    fn penetration_depth_of_magnetic_wall_is_zero() {
        // phase 0 maps to zero penetration; exercised through the formula
        let psi = (0.0_f64 + std::f64::consts::PI).rem_euclid(std::f64::consts::PI);
        assert_relative_eq!(psi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn penetration_depth_needs_a_mirror() {
        use crate::materials::presets;
        let weak = crate::stack::Substack {
            incidence: presets::diamond(),
            layers: vec![],
            exit: presets::diamond(),
            distance_nm: 0.0,
        };
        assert!(matches!(
            penetration_depth(&weak, 0.33, 620.0, Polarization::S),
            Err(ModesError::NoMirror { .. })
        ));
    }
}
