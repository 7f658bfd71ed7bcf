//! Dipole emission in a planar stack via plane-wave expansion.
//!
//! The emitter's field is expanded over transverse wavenumbers; each channel
//! bounces between the generalized reflection coefficients of the substacks
//! above and below the emitter. Summing the work done by the reflected field
//! on the source gives the angular power emission spectrum p(n_eff) — the
//! inhomogeneous part of the emitted power per unit n_eff, normalized to the
//! power a dipole emits in the unbounded host:
//!
//!   P_tot / P_hom = 1 + integral p(n_eff) d n_eff
//!
//! Transmitting the cavity-built-up upward amplitudes through the top
//! substack and applying stationary phase yields the far field, whose
//! integral over the collection cone is the collection factor xi. The
//! power-rate equivalence makes that ratio directly the photon rate into
//! the objective relative to the homogeneous decay rate.
//!
//! The vertical dipole component (cos theta) drives only p-polarized
//! channels; the in-plane component (sin theta) drives both. Powers of the
//! two components add incoherently after azimuthal integration, while the
//! far field keeps their per-channel coherence.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::materials::MaterialError;
use crate::quadrature::adaptive_simpson;
use crate::stack::Stack;
use crate::tmm::{k0, Polarization, ResolvedChain};

#[derive(Debug, Error)]
pub enum EmissionError {
    #[error("invalid stack: {0:?}")]
    InvalidStack(Vec<String>),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("evanescent tail not converged by n_eff = {n_eff_reached}")]
    TailNotConverged { n_eff_reached: f64 },
    #[error("numerical aperture {na} outside (0, {n_upper}]")]
    NaDomain { na: f64, n_upper: f64 },
    #[error("{side} half space is absorbing; far fields are undefined there")]
    OpaqueHalfSpace { side: &'static str },
    #[error("n_eff_max = {n_eff_max} must be >= host index {n_host}")]
    SpectrumTooNarrow { n_eff_max: f64, n_host: f64 },
}

/// Numerical controls of the emission integrals.
#[derive(Debug, Clone)]
pub struct EmissionSettings {
    /// Extinction floor injected into the host index. Damps the guided-mode
    /// poles of lossless hosts; set to 0 for strict energy bookkeeping.
    pub host_kappa: f64,
    /// Local Simpson error budget relative to the running integral.
    pub refine_rel_tol: f64,
    /// Stop the evanescent tail when a block contributes less than this,
    /// relative to the running total.
    pub tail_rel_tol: f64,
    /// Give up on the tail beyond this n_eff.
    pub tail_max_n_eff: f64,
}

impl Default for EmissionSettings {
    fn default() -> Self {
        Self {
            host_kappa: 5e-4,
            refine_rel_tol: 1e-7,
            tail_rel_tol: 1e-6,
            tail_max_n_eff: 50.0,
        }
    }
}

/// Sampling of the stored angular spectrum.
#[derive(Debug, Clone)]
pub struct SpectrumGrid {
    pub n_eff_max: f64,
    /// Base sampling step; peaks are bisected further.
    pub base_step: f64,
    /// Local linearity tolerance that triggers bisection.
    pub refine_tol: f64,
    /// Bisection floor; an interval still failing at this width is flagged
    /// as an unresolved peak.
    pub min_step: f64,
}

impl SpectrumGrid {
    pub fn new(n_eff_max: f64) -> Self {
        Self {
            n_eff_max,
            base_step: 1e-3,
            refine_tol: 0.02,
            min_step: 1e-7,
        }
    }
}

/// Sampled angular power emission spectrum, split by polarization.
#[derive(Debug, Clone, Serialize)]
pub struct AngularSpectrum {
    pub wavelength_nm: f64,
    /// Host index real part (classification boundary for evanescence).
    pub host_index: f64,
    pub n_eff: Vec<f64>,
    pub p_s: Vec<f64>,
    pub p_p: Vec<f64>,
    /// n_eff positions where refinement hit the bisection floor.
    pub unresolved_peaks: Vec<f64>,
    /// Grid ranges where p dips below zero, bookkept rather than silently
    /// accepted. Propagating-region dips are interference suppression below
    /// the homogeneous rate; evanescent ones are quenching bookkeeping.
    pub negative_regions: Vec<NegativeRegion>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NegativeRegion {
    pub n_eff_start: f64,
    pub n_eff_end: f64,
    pub evanescent: bool,
}

impl AngularSpectrum {
    /// Plain CSV rows `n_eff,p_s,p_p` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_eff,p_s,p_p\n");
        for i in 0..self.n_eff.len() {
            out.push_str(&format!(
                "{:.9e},{:.9e},{:.9e}\n",
                self.n_eff[i], self.p_s[i], self.p_p[i]
            ));
        }
        out
    }
}

/// Far-field radiant intensity per unit solid angle on a (theta, phi) grid,
/// normalized to P_hom.
#[derive(Debug, Clone, Serialize)]
pub struct FarField {
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
    /// Row-major theta x phi.
    pub intensity: Vec<f64>,
}

impl FarField {
    pub fn at(&self, i_theta: usize, i_phi: usize) -> f64 {
        self.intensity[i_theta * self.phi_deg.len() + i_phi]
    }

    /// Trapezoidal integral of I sin(theta) dtheta dphi over the grid.
    pub fn hemisphere_integral(&self) -> f64 {
        let nt = self.theta_deg.len();
        let np = self.phi_deg.len();
        if nt < 2 || np < 1 {
            return 0.0;
        }
        // phi assumed uniform and periodic
        let dphi = (2.0 * std::f64::consts::PI) / np as f64;
        let mut total = 0.0;
        for it in 0..nt - 1 {
            let th0 = self.theta_deg[it].to_radians();
            let th1 = self.theta_deg[it + 1].to_radians();
            let mut ring0 = 0.0;
            let mut ring1 = 0.0;
            for ip in 0..np {
                ring0 += self.at(it, ip);
                ring1 += self.at(it + 1, ip);
            }
            ring0 *= dphi * th0.sin();
            ring1 *= dphi * th1.sin();
            total += 0.5 * (ring0 + ring1) * (th1 - th0);
        }
        total
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta_deg,phi_deg,intensity\n");
        for (it, th) in self.theta_deg.iter().enumerate() {
            for (ip, ph) in self.phi_deg.iter().enumerate() {
                out.push_str(&format!("{:.9e},{:.9e},{:.9e}\n", th, ph, self.at(it, ip)));
            }
        }
        out
    }
}

/// Emission summary of one stack.
#[derive(Debug, Clone, Serialize)]
pub struct EmissionResult {
    pub p_tot_over_p_hom: f64,
    pub xi: f64,
    pub p_upper_over_p_hom: f64,
    #[serde(skip)]
    pub far_field: FarField,
}

impl EmissionResult {
    pub fn summary_json(&self) -> String {
        format!(
            "{{\n  \"P_tot_over_P_hom\": {:.9e},\n  \"xi\": {:.9e},\n  \"P_upper_over_P_hom\": {:.9e}\n}}\n",
            self.p_tot_over_p_hom, self.xi, self.p_upper_over_p_hom
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hemisphere {
    Upper,
    Lower,
}

/// Per-wavelength evaluation state: resolved substack chains and the
/// dipole decomposition.
///
/// The kappa floor regularizes the real-axis guided-mode poles of the
/// LDOS integrand, so it is applied only on that path. The far-field and
/// collection integrals run over channels that propagate in the exit
/// medium, where every resonance already has finite radiative width, and
/// use the host material as given.
pub(crate) struct EmissionEngine {
    k0: f64,
    /// Host index with the kappa floor applied (LDOS path).
    n0: Complex64,
    n0_sq: Complex64,
    /// Host index as given (far-field path).
    n0_far: Complex64,
    n0_far_sq: Complex64,
    cos2: f64,
    sin2: f64,
    d_up: f64,
    d_low: f64,
    upper: ResolvedChain,
    lower: ResolvedChain,
    upper_far: ResolvedChain,
    lower_far: ResolvedChain,
    n_up_exit: Complex64,
    n_low_exit: Complex64,
}

/// Cavity coefficients of one channel and polarization, in the magnetic
/// convention for p (perfect electric mirror -> +1).
struct CavityChannel {
    a_up: Complex64,
    a_low: Complex64,
}

impl CavityChannel {
    #[inline]
    fn denom(&self) -> Complex64 {
        Complex64::new(1.0, 0.0) - self.a_up * self.a_low
    }

    /// (a+ + a- + 2 a+ a-) / (1 - a+ a-): symmetric source (vertical p,
    /// horizontal s).
    #[inline]
    fn symmetric(&self) -> Complex64 {
        (self.a_up + self.a_low + 2.0 * self.a_up * self.a_low) / self.denom()
    }

    /// (-a+ - a- + 2 a+ a-) / (1 - a+ a-): antisymmetric source
    /// (horizontal p).
    #[inline]
    fn antisymmetric(&self) -> Complex64 {
        (-self.a_up - self.a_low + 2.0 * self.a_up * self.a_low) / self.denom()
    }
}

impl EmissionEngine {
    pub(crate) fn new(stack: &Stack, settings: &EmissionSettings) -> Result<Self, EmissionError> {
        let violations = stack.validate();
        if !violations.is_empty() {
            return Err(EmissionError::InvalidStack(violations));
        }
        let wl = stack.dipole.wavelength_nm;
        let host = stack.host.material.with_absorption(settings.host_kappa);
        let host_idx = host.index_at(wl)?;
        let host_far_idx = stack.host.material.index_at(wl)?;
        let (up_far, low_far) = stack.split_at_dipole().unwrap();
        let mut up_sub = up_far.clone();
        let mut low_sub = low_far.clone();
        up_sub.incidence = host.clone();
        low_sub.incidence = host;
        let theta = stack.dipole.polar_angle_deg.to_radians();
        Ok(Self {
            k0: k0(wl),
            n0: host_idx.as_complex(),
            n0_sq: host_idx.permittivity(),
            n0_far: host_far_idx.as_complex(),
            n0_far_sq: host_far_idx.permittivity(),
            cos2: theta.cos().powi(2),
            sin2: theta.sin().powi(2),
            d_up: stack.dipole.depth_nm,
            d_low: stack.host.thickness_nm - stack.dipole.depth_nm,
            upper: ResolvedChain::from_substack(&up_sub, wl)?,
            lower: ResolvedChain::from_substack(&low_sub, wl)?,
            upper_far: ResolvedChain::from_substack(&up_far, wl)?,
            lower_far: ResolvedChain::from_substack(&low_far, wl)?,
            n_up_exit: stack.upper_half_space.index_at(wl)?.as_complex(),
            n_low_exit: stack.lower_half_space.index_at(wl)?.as_complex(),
        })
    }

    /// sqrt(n0^2 - nu^2) in units of k0, Im >= 0. An exact hit on the host
    /// light line is nudged off it; the 1/q singularity there is
    /// integrable but must not be sampled at the pole itself.
    #[inline]
    fn q(&self, nu: f64) -> Complex64 {
        Self::q_of(self.n0_sq, nu)
    }

    #[inline]
    fn q_far(&self, nu: f64) -> Complex64 {
        Self::q_of(self.n0_far_sq, nu)
    }

    #[inline]
    fn q_of(n_sq: Complex64, nu: f64) -> Complex64 {
        let mut radicand = n_sq - nu * nu;
        if radicand.norm_sqr() == 0.0 {
            let nudged = nu * (1.0 - 1e-12);
            radicand = n_sq - nudged * nudged;
        }
        if radicand.im == 0.0 {
            radicand = Complex64::new(radicand.re, 0.0);
        }
        radicand.sqrt()
    }

    /// Round-trip coefficients for one channel. The p reflections are
    /// sign-flipped into the magnetic convention the cavity sums use.
    fn cavity(&self, nu: f64, pol: Polarization) -> CavityChannel {
        let q = self.q(nu);
        let phase_up = (Complex64::i() * q * self.k0 * (2.0 * self.d_up)).exp();
        let phase_low = (Complex64::i() * q * self.k0 * (2.0 * self.d_low)).exp();
        let sign = match pol {
            Polarization::S => 1.0,
            Polarization::P => -1.0,
        };
        CavityChannel {
            a_up: sign * self.upper.coefficients(nu, pol).r * phase_up,
            a_low: sign * self.lower.coefficients(nu, pol).r * phase_low,
        }
    }

    /// Inhomogeneous power densities (p_s, p_p) per unit n_eff at `nu`,
    /// already weighted by the dipole orientation.
    fn density(&self, nu: f64) -> (f64, f64) {
        if nu == 0.0 {
            return (0.0, 0.0);
        }
        let q = self.q(nu);
        let s = self.cavity(nu, Polarization::S);
        let p = self.cavity(nu, Polarization::P);
        let n0 = self.n0;
        let n0_cubed = n0 * n0 * n0;

        let sym_p = p.symmetric();
        let asym_p = p.antisymmetric();
        let sym_s = s.symmetric();

        let p_vertical = 1.5 * ((nu * nu * nu) / (n0_cubed * q) * sym_p).re;
        let p_horiz_s = 0.75 * (nu / (n0 * q) * sym_s).re;
        let p_horiz_p = 0.75 * (nu * q / n0_cubed * asym_p).re;

        let p_s = self.sin2 * p_horiz_s;
        let p_p = self.cos2 * p_vertical + self.sin2 * p_horiz_p;
        (p_s, p_p)
    }

    fn density_total(&self, nu: f64) -> f64 {
        let (a, b) = self.density(nu);
        a + b
    }

    /// phi-integrated far-field power density per unit polar angle,
    /// d P / d theta, in the chosen hemisphere.
    fn ring_density(&self, theta: f64, hemisphere: Hemisphere) -> f64 {
        let (chain, n_exit, d_near, d_far) = match hemisphere {
            Hemisphere::Upper => (&self.upper_far, self.n_up_exit, self.d_up, self.d_low),
            Hemisphere::Lower => (&self.lower_far, self.n_low_exit, self.d_low, self.d_up),
        };
        let far_chain = match hemisphere {
            Hemisphere::Upper => &self.lower_far,
            Hemisphere::Lower => &self.upper_far,
        };
        let n_out = n_exit.re;
        let nu = n_out * theta.sin();
        let q = self.q_far(nu);
        let kz0 = q * self.k0;
        let kz_out = self.k0 * n_out * theta.cos();

        let cs = chain.coefficients(nu, Polarization::S);
        let cp = chain.coefficients(nu, Polarization::P);
        let a_far_s = far_chain.coefficients(nu, Polarization::S).r
            * (Complex64::i() * kz0 * (2.0 * d_far)).exp();
        let a_far_p = -far_chain.coefficients(nu, Polarization::P).r
            * (Complex64::i() * kz0 * (2.0 * d_far)).exp();
        let a_near_s = cs.r * (Complex64::i() * kz0 * (2.0 * d_near)).exp();
        let a_near_p = -cp.r * (Complex64::i() * kz0 * (2.0 * d_near)).exp();

        let travel = (Complex64::i() * kz0 * d_near).exp();
        let gs = (Complex64::new(1.0, 0.0) + a_far_s) * travel * cs.t
            / (Complex64::new(1.0, 0.0) - a_near_s * a_far_s);
        let gp_denom = Complex64::new(1.0, 0.0) - a_near_p * a_far_p;
        let gp_v = nu * (Complex64::new(1.0, 0.0) + a_far_p) * travel * cp.t / gp_denom;
        let gp_h = q * (Complex64::new(1.0, 0.0) - a_far_p) * travel * cp.t / gp_denom;

        let pi = std::f64::consts::PI;
        let prefactor = 3.0 * self.k0 * n_out * n_out * theta.cos()
            / (8.0 * pi * self.n0_far.re * kz0.norm_sqr());
        let s_term = kz_out * pi * self.sin2 * gs.norm_sqr();
        let p_term = kz_out / (n_out * n_out)
            * (2.0 * pi * self.cos2 * gp_v.norm_sqr() + pi * self.sin2 * gp_h.norm_sqr());
        prefactor * (s_term + p_term) * theta.sin()
    }

    /// Radiant intensity per unit solid angle at (theta, phi), upper
    /// hemisphere. Keeps the coherent vertical/in-plane interference.
    fn intensity(&self, theta: f64, phi: f64, hemisphere: Hemisphere) -> f64 {
        let (chain, n_exit, d_near, d_far) = match hemisphere {
            Hemisphere::Upper => (&self.upper_far, self.n_up_exit, self.d_up, self.d_low),
            Hemisphere::Lower => (&self.lower_far, self.n_low_exit, self.d_low, self.d_up),
        };
        let far_chain = match hemisphere {
            Hemisphere::Upper => &self.lower_far,
            Hemisphere::Lower => &self.upper_far,
        };
        let n_out = n_exit.re;
        let nu = n_out * theta.sin();
        let q = self.q_far(nu);
        let kz0 = q * self.k0;
        let kz_out = self.k0 * n_out * theta.cos();

        let cs = chain.coefficients(nu, Polarization::S);
        let cp = chain.coefficients(nu, Polarization::P);
        let a_far_s = far_chain.coefficients(nu, Polarization::S).r
            * (Complex64::i() * kz0 * (2.0 * d_far)).exp();
        let a_far_p = -far_chain.coefficients(nu, Polarization::P).r
            * (Complex64::i() * kz0 * (2.0 * d_far)).exp();
        let a_near_s = cs.r * (Complex64::i() * kz0 * (2.0 * d_near)).exp();
        let a_near_p = -cp.r * (Complex64::i() * kz0 * (2.0 * d_near)).exp();

        let travel = (Complex64::i() * kz0 * d_near).exp();
        let sin_dip = self.sin2.sqrt();
        let cos_dip = self.cos2.sqrt();

        let e_s = sin_dip * phi.sin() * (Complex64::new(1.0, 0.0) + a_far_s) * travel * cs.t
            / (Complex64::new(1.0, 0.0) - a_near_s * a_far_s);
        let gp_denom = Complex64::new(1.0, 0.0) - a_near_p * a_far_p;
        let h_p = (cos_dip * nu * (Complex64::new(1.0, 0.0) + a_far_p)
            - sin_dip * phi.cos() * q * (Complex64::new(1.0, 0.0) - a_far_p))
            * travel
            * cp.t
            / gp_denom;

        let pi = std::f64::consts::PI;
        let prefactor = 3.0 * self.k0 * n_out * n_out * theta.cos()
            / (8.0 * pi * self.n0_far.re * kz0.norm_sqr());
        prefactor * (kz_out * e_s.norm_sqr() + kz_out / (n_out * n_out) * h_p.norm_sqr())
    }

    fn hemisphere_exit_index(&self, hemisphere: Hemisphere) -> Complex64 {
        match hemisphere {
            Hemisphere::Upper => self.n_up_exit,
            Hemisphere::Lower => self.n_low_exit,
        }
    }
}

fn check_transparent(
    engine: &EmissionEngine,
    hemisphere: Hemisphere,
) -> Result<(), EmissionError> {
    if engine.hemisphere_exit_index(hemisphere).im > 0.0 {
        return Err(EmissionError::OpaqueHalfSpace {
            side: match hemisphere {
                Hemisphere::Upper => "upper",
                Hemisphere::Lower => "lower",
            },
        });
    }
    Ok(())
}

/// Angular power emission spectrum on an adaptively refined grid.
pub fn angular_spectrum(
    stack: &Stack,
    grid: &SpectrumGrid,
    settings: &EmissionSettings,
) -> Result<AngularSpectrum, EmissionError> {
    let engine = EmissionEngine::new(stack, settings)?;
    let n_host = engine.n0.re;
    if grid.n_eff_max < n_host {
        return Err(EmissionError::SpectrumTooNarrow {
            n_eff_max: grid.n_eff_max,
            n_host,
        });
    }

    let mut points: Vec<(f64, (f64, f64))> = Vec::new();
    let mut unresolved: Vec<f64> = Vec::new();
    let n_base = (grid.n_eff_max / grid.base_step).ceil() as usize;
    let mut scale = 1e-12_f64;

    let eval = |nu: f64| -> (f64, f64) {
        let (a, b) = engine.density(nu);
        if a.is_finite() && b.is_finite() {
            (a, b)
        } else {
            engine.density(nu + 1e-12)
        }
    };

    let mut prev = (0.0, eval(0.0));
    points.push(prev);
    for i in 1..=n_base {
        let nu = (i as f64 / n_base as f64) * grid.n_eff_max;
        let cur = (nu, eval(nu));
        refine_segment(
            &eval,
            prev,
            cur,
            grid,
            &mut points,
            &mut unresolved,
            &mut scale,
            0,
        );
        points.push(cur);
        scale = scale.max(cur.1 .0.abs()).max(cur.1 .1.abs());
        prev = cur;
    }

    let n_eff: Vec<f64> = points.iter().map(|p| p.0).collect();
    let p_s: Vec<f64> = points.iter().map(|p| p.1 .0).collect();
    let p_p: Vec<f64> = points.iter().map(|p| p.1 .1).collect();
    let negative_regions = flag_negative(&n_eff, &p_s, &p_p, n_host);

    Ok(AngularSpectrum {
        wavelength_nm: stack.dipole.wavelength_nm,
        host_index: n_host,
        n_eff,
        p_s,
        p_p,
        unresolved_peaks: unresolved,
        negative_regions,
    })
}

/// Default spectrum: the paper's sampling, reaching past the host index.
pub fn angular_spectrum_default(
    stack: &Stack,
    n_eff_max: f64,
) -> Result<AngularSpectrum, EmissionError> {
    angular_spectrum(
        stack,
        &SpectrumGrid::new(n_eff_max),
        &EmissionSettings::default(),
    )
}

#[allow(clippy::too_many_arguments)]
fn refine_segment<F: Fn(f64) -> (f64, f64)>(
    eval: &F,
    left: (f64, (f64, f64)),
    right: (f64, (f64, f64)),
    grid: &SpectrumGrid,
    points: &mut Vec<(f64, (f64, f64))>,
    unresolved: &mut Vec<f64>,
    scale: &mut f64,
    depth: u32,
) {
    let mid_nu = 0.5 * (left.0 + right.0);
    if right.0 - left.0 <= grid.min_step || depth > 40 {
        return;
    }
    let mid = (mid_nu, eval(mid_nu));
    *scale = scale.max(mid.1 .0.abs()).max(mid.1 .1.abs());
    let lin_s = 0.5 * (left.1 .0 + right.1 .0);
    let lin_p = 0.5 * (left.1 .1 + right.1 .1);
    let tol = grid.refine_tol
        * (mid.1 .0.abs() + mid.1 .1.abs() + lin_s.abs() + lin_p.abs() + 1e-3 * *scale)
        + 1e-12;
    let err = (mid.1 .0 - lin_s).abs() + (mid.1 .1 - lin_p).abs();
    if err > tol {
        if right.0 - left.0 <= 2.0 * grid.min_step {
            unresolved.push(mid_nu);
            points.push(mid);
            return;
        }
        refine_segment(eval, left, mid, grid, points, unresolved, scale, depth + 1);
        points.push(mid);
        refine_segment(eval, mid, right, grid, points, unresolved, scale, depth + 1);
    }
}

fn flag_negative(n_eff: &[f64], p_s: &[f64], p_p: &[f64], n_host: f64) -> Vec<NegativeRegion> {
    let scale = p_s
        .iter()
        .chain(p_p.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let threshold = -(1e-12 + 1e-9 * scale);
    let mut regions: Vec<NegativeRegion> = Vec::new();
    let mut run_start: Option<usize> = None;
    for i in 0..n_eff.len() {
        let negative = p_s[i] < threshold || p_p[i] < threshold;
        match (negative, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                regions.push(NegativeRegion {
                    n_eff_start: n_eff[s],
                    n_eff_end: n_eff[i - 1],
                    evanescent: n_eff[s] >= n_host,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        regions.push(NegativeRegion {
            n_eff_start: n_eff[s],
            n_eff_end: *n_eff.last().unwrap(),
            evanescent: n_eff[s] >= n_host,
        });
    }
    regions
}

/// Total emitted power over the homogeneous-host power: Eq. of the module
/// docs, with the evanescent tail truncated once it stops contributing.
pub fn total_power_with(stack: &Stack, settings: &EmissionSettings) -> Result<f64, EmissionError> {
    let engine = EmissionEngine::new(stack, settings)?;

    // make sure the core region covers every medium's light line (guided
    // modes and interface plasmons live below the largest index)
    let mut core_max = engine.n0.re;
    for layer in stack
        .layers_above
        .iter()
        .chain(stack.layers_below.iter())
        .chain([&stack.host])
    {
        let idx = layer.material.index_at(stack.dipole.wavelength_nm)?;
        core_max = core_max.max((idx.n * idx.n + idx.k * idx.k).sqrt());
    }
    core_max += 1.0;

    let f = |nu: f64| engine.density_total(nu);
    let mut total = 0.0_f64;
    let block = 0.05_f64;
    let mut a = 0.0_f64;
    while a < core_max {
        let b = (a + block).min(core_max);
        let tol = settings.refine_rel_tol * total.abs().max(1.0);
        total += adaptive_simpson(&f, a, b, tol, 48).value;
        a = b;
    }

    // evanescent tail in unit blocks
    let mut small_blocks = 0;
    while small_blocks < 2 {
        if a >= settings.tail_max_n_eff {
            return Err(EmissionError::TailNotConverged { n_eff_reached: a });
        }
        let b = a + 1.0;
        let tol = settings.refine_rel_tol * total.abs().max(1.0);
        let contribution = adaptive_simpson(&f, a, b, tol, 40).value;
        total += contribution;
        if contribution.abs() < settings.tail_rel_tol * total.abs().max(1e-6) {
            small_blocks += 1;
        } else {
            small_blocks = 0;
        }
        a = b;
    }

    Ok(1.0 + total)
}

pub fn total_power(stack: &Stack) -> Result<f64, EmissionError> {
    total_power_with(stack, &EmissionSettings::default())
}

/// Power radiated into one hemisphere (per P_hom), from the far-field side.
pub fn hemisphere_power_with(
    stack: &Stack,
    hemisphere: Hemisphere,
    settings: &EmissionSettings,
) -> Result<f64, EmissionError> {
    let engine = EmissionEngine::new(stack, settings)?;
    check_transparent(&engine, hemisphere)?;
    Ok(integrate_cone(
        &engine,
        hemisphere,
        std::f64::consts::FRAC_PI_2,
        settings,
    ))
}

pub fn hemisphere_power(stack: &Stack, hemisphere: Hemisphere) -> Result<f64, EmissionError> {
    hemisphere_power_with(stack, hemisphere, &EmissionSettings::default())
}

fn integrate_cone(
    engine: &EmissionEngine,
    hemisphere: Hemisphere,
    theta_max: f64,
    settings: &EmissionSettings,
) -> f64 {
    // stay a hair off grazing, where sin(theta) rounds onto the exit
    // medium's light line
    let theta_max = theta_max.min(std::f64::consts::FRAC_PI_2 - 1e-7);
    let f = |theta: f64| engine.ring_density(theta, hemisphere);
    // rough pass for the scale, then an adaptive pass
    let n = 64;
    let mut rough = 0.0;
    for i in 0..n {
        let t = (i as f64 + 0.5) / n as f64 * theta_max;
        rough += f(t) * theta_max / n as f64;
    }
    let tol = (settings.refine_rel_tol * rough.abs()).max(1e-12);
    adaptive_simpson(&f, 0.0, theta_max, tol, 44).value
}

/// Collection factor: far-field photon rate within the objective's
/// aperture over the homogeneous-host decay rate.
pub fn collection_factor_with(
    stack: &Stack,
    numerical_aperture: f64,
    settings: &EmissionSettings,
) -> Result<f64, EmissionError> {
    let engine = EmissionEngine::new(stack, settings)?;
    check_transparent(&engine, Hemisphere::Upper)?;
    let n_up = engine.n_up_exit.re;
    if !(numerical_aperture > 0.0 && numerical_aperture <= n_up) {
        return Err(EmissionError::NaDomain {
            na: numerical_aperture,
            n_upper: n_up,
        });
    }
    let theta_na = (numerical_aperture / n_up).asin();
    Ok(integrate_cone(&engine, Hemisphere::Upper, theta_na, settings))
}

pub fn collection_factor(stack: &Stack, numerical_aperture: f64) -> Result<f64, EmissionError> {
    collection_factor_with(stack, numerical_aperture, &EmissionSettings::default())
}

/// Far field sampled on explicit theta/phi grids (degrees).
pub fn far_field_with(
    stack: &Stack,
    theta_deg: &[f64],
    phi_deg: &[f64],
    settings: &EmissionSettings,
) -> Result<FarField, EmissionError> {
    let engine = EmissionEngine::new(stack, settings)?;
    check_transparent(&engine, Hemisphere::Upper)?;
    let mut intensity = Vec::with_capacity(theta_deg.len() * phi_deg.len());
    for &th in theta_deg {
        let t = th.to_radians();
        for &ph in phi_deg {
            intensity.push(engine.intensity(t, ph.to_radians(), Hemisphere::Upper));
        }
    }
    Ok(FarField {
        theta_deg: theta_deg.to_vec(),
        phi_deg: phi_deg.to_vec(),
        intensity,
    })
}

pub fn far_field(
    stack: &Stack,
    theta_deg: &[f64],
    phi_deg: &[f64],
) -> Result<FarField, EmissionError> {
    far_field_with(stack, theta_deg, phi_deg, &EmissionSettings::default())
}

/// Default far-field grids: 0.25 deg polar steps, 360 azimuthal points.
pub fn default_far_field_grids() -> (Vec<f64>, Vec<f64>) {
    let theta: Vec<f64> = (0..=359).map(|i| i as f64 * 0.25).collect();
    let phi: Vec<f64> = (0..360).map(|i| i as f64).collect();
    (theta, phi)
}

/// Full emission summary: total power, hemisphere split, xi and far field.
pub fn emission_result(
    stack: &Stack,
    numerical_aperture: f64,
    settings: &EmissionSettings,
) -> Result<EmissionResult, EmissionError> {
    let p_tot = total_power_with(stack, settings)?;
    let p_upper = hemisphere_power_with(stack, Hemisphere::Upper, settings)?;
    let xi = collection_factor_with(stack, numerical_aperture, settings)?;
    let (theta, phi) = default_far_field_grids();
    let far = far_field_with(stack, &theta, &phi, settings)?;
    Ok(EmissionResult {
        p_tot_over_p_hom: p_tot,
        xi,
        p_upper_over_p_hom: p_upper,
        far_field: far,
    })
}
