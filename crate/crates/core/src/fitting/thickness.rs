//! Membrane thickness from white-light reflectance: match measured
//! interference fringes against the transfer-matrix reflectance of the
//! stack, with amplitude and offset as nuisance parameters.

use rayon::prelude::*;
use serde::Serialize;

use super::FitError;
use crate::stack::Stack;
use crate::tmm::{stack_reflectance, Polarization};

#[derive(Debug, Clone, Serialize)]
pub struct ThicknessFit {
    pub t0_nm: f64,
    pub uncertainty_nm: f64,
    /// Nuisance scale and offset mapping model reflectance to the
    /// (relative) measurement.
    pub scale: f64,
    pub offset: f64,
    pub sse: f64,
}

/// 1D least squares over the host thickness: global 1 nm scan of the
/// normal-incidence reflectance spectrum, then parabolic refinement of the
/// best minimum. Several comparable minima raise an ambiguity error.
pub fn thickness_from_reflectance(
    measured: &[(f64, f64)],
    template: &Stack,
    t0_bounds_nm: (f64, f64),
) -> Result<ThicknessFit, FitError> {
    let (lo, hi) = t0_bounds_nm;
    if !(hi > lo && lo > 0.0) {
        return Err(FitError::Domain(format!("bad bounds [{lo}, {hi}] nm")));
    }
    if measured.len() < 8 {
        return Err(FitError::Domain(
            "need at least 8 spectral points to fit fringes".into(),
        ));
    }
    let lambdas: Vec<f64> = measured.iter().map(|m| m.0).collect();
    let values: Vec<f64> = measured.iter().map(|m| m.1).collect();

    let grid: Vec<f64> = {
        let n = (hi - lo).ceil() as usize;
        (0..=n).map(|i| lo + i as f64).collect()
    };
    let sse_of = |t0: f64| -> Result<(f64, f64, f64), FitError> {
        let model = model_spectrum(template, t0, &lambdas)?;
        Ok(scaled_sse(&model, &values))
    };
    let scans: Result<Vec<(f64, f64, f64)>, FitError> =
        grid.par_iter().map(|&t0| sse_of(t0)).collect();
    let scans = scans?;
    let sse: Vec<f64> = scans.iter().map(|s| s.0).collect();

    // flat objective carries no thickness information
    let sse_min = sse.iter().cloned().fold(f64::INFINITY, f64::min);
    let sse_max = sse.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let y_scale: f64 = values.iter().map(|v| v * v).sum::<f64>().max(1e-30);
    if sse_max - sse_min <= 1e-9 * y_scale {
        return Err(FitError::AmbiguousThickness { candidates: vec![] });
    }

    // local minima of the scan
    let mut minima: Vec<usize> = Vec::new();
    for i in 1..sse.len() - 1 {
        if sse[i] <= sse[i - 1] && sse[i] < sse[i + 1] {
            minima.push(i);
        }
    }
    if sse[0] < sse[1] {
        minima.insert(0, 0);
    }
    if sse[sse.len() - 1] < sse[sse.len() - 2] {
        minima.push(sse.len() - 1);
    }
    if minima.is_empty() {
        return Err(FitError::AmbiguousThickness { candidates: vec![] });
    }
    let best = *minima
        .iter()
        .min_by(|&&a, &&b| sse[a].partial_cmp(&sse[b]).unwrap())
        .unwrap();
    let comparable: Vec<f64> = minima
        .iter()
        .filter(|&&i| i != best && sse[i] <= 1.2 * sse[best].max(1e-12 * y_scale))
        .filter(|&&i| (grid[i] - grid[best]).abs() > 3.0)
        .map(|&i| grid[i])
        .collect();
    if !comparable.is_empty() {
        let mut candidates = vec![grid[best]];
        candidates.extend(comparable);
        return Err(FitError::AmbiguousThickness { candidates });
    }

    // parabolic refinement around the best grid point
    let (t0_refined, curvature) = if best > 0 && best < sse.len() - 1 {
        let (x0, x1, x2) = (grid[best - 1], grid[best], grid[best + 1]);
        let (y0, y1, y2) = (sse[best - 1], sse[best], sse[best + 1]);
        let d0 = (y1 - y0) / (x1 - x0);
        let d1 = (y2 - y1) / (x2 - x1);
        let curv = (d1 - d0) / (0.5 * (x2 - x0)) * 0.5; // d2 SSE / d t0^2 / 2
        if curv > 0.0 {
            (0.5 * (x0 + x1 - d0 / ((d1 - d0) / (x2 - x0))), 2.0 * curv)
        } else {
            (x1, f64::NAN)
        }
    } else {
        (grid[best], f64::NAN)
    };

    let (final_sse, scale, offset) = sse_of(t0_refined)?;
    let dof = (values.len() as f64 - 3.0).max(1.0);
    let noise_var = final_sse / dof;
    let uncertainty = if curvature.is_finite() && curvature > 0.0 {
        (2.0 * noise_var / curvature).sqrt()
    } else {
        1.0
    };

    Ok(ThicknessFit {
        t0_nm: t0_refined,
        uncertainty_nm: uncertainty,
        scale,
        offset,
        sse: final_sse,
    })
}

/// Normal-incidence reflectance of the template with host thickness t0.
pub fn model_spectrum(
    template: &Stack,
    t0_nm: f64,
    lambdas_nm: &[f64],
) -> Result<Vec<f64>, FitError> {
    let mut stack = template.clone();
    stack.host.thickness_nm = t0_nm;
    // keep the embedded dipole legal for any scanned thickness
    stack.dipole.depth_nm = 0.5 * t0_nm;
    lambdas_nm
        .iter()
        .map(|&wl| {
            let (r, _, _) = stack_reflectance(&stack, wl, 0.0, Polarization::S)?;
            Ok(r)
        })
        .collect()
}

/// Least-squares amplitude/offset match of model to data; returns
/// (sse, scale, offset).
fn scaled_sse(model: &[f64], data: &[f64]) -> (f64, f64, f64) {
    let n = model.len() as f64;
    let sm: f64 = model.iter().sum();
    let sd: f64 = data.iter().sum();
    let smm: f64 = model.iter().map(|m| m * m).sum();
    let smd: f64 = model.iter().zip(data).map(|(m, d)| m * d).sum();
    let denom = n * smm - sm * sm;
    let (a, b) = if denom.abs() < 1e-30 {
        (0.0, sd / n)
    } else {
        let a = (n * smd - sm * sd) / denom;
        (a, (sd - a * sm) / n)
    };
    let sse = model
        .iter()
        .zip(data)
        .map(|(m, d)| {
            let r = d - (a * m + b);
            r * r
        })
        .sum();
    (sse, a, b)
}
