//! Geometry optimization and parameter sweeps of the collection factor.
//!
//! The free parameters are the membrane thickness t0, the dipole depth d,
//! the thin top-mirror thickness t1 (the layer directly above the host) and
//! the capping-layer thickness t2 (the next layer up). A seeded particle
//! swarm explores the bounded space; a bounded quasi-Newton ascent with
//! central finite differences polishes the best particle.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dipole::{collection_factor_with, EmissionError, EmissionSettings};
use crate::stack::Stack;
use crate::tmm::{stack_reflectance, Polarization, TmmError};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Emission(#[from] EmissionError),
    #[error(transparent)]
    Tmm(#[from] TmmError),
    #[error("parameter space: {0}")]
    BadSpace(String),
    #[error("sweep axes: {0}")]
    BadAxes(String),
    #[error("no interior peak in the sampled curve")]
    NoPeak,
    #[error("half maximum not crossed on both flanks (open resonance)")]
    OpenResonance,
}

/// The geometry knobs exposed to the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GeomParam {
    /// Host (membrane) thickness.
    T0,
    /// Dipole depth below the host's top interface.
    D,
    /// Thickness of the layer directly above the host (thin mirror).
    T1,
    /// Thickness of the next layer above (capping layer).
    T2,
}

impl std::fmt::Display for GeomParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeomParam::T0 => write!(f, "t0"),
            GeomParam::D => write!(f, "d"),
            GeomParam::T1 => write!(f, "t1"),
            GeomParam::T2 => write!(f, "t2"),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bound {
    pub param: GeomParam,
    pub lower_nm: f64,
    pub upper_nm: f64,
}

/// Template stack plus the free-parameter box. Everything not listed in
/// `free` stays at the template value.
#[derive(Debug, Clone)]
pub struct ParameterSpace {
    pub template: Stack,
    pub free: Vec<Bound>,
    pub numerical_aperture: f64,
    pub settings: EmissionSettings,
}

impl ParameterSpace {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        if self.free.is_empty() {
            return Err(OptimizeError::BadSpace("no free parameters".into()));
        }
        for b in &self.free {
            if !(b.lower_nm <= b.upper_nm) {
                return Err(OptimizeError::BadSpace(format!(
                    "{}: lower {} > upper {}",
                    b.param, b.lower_nm, b.upper_nm
                )));
            }
            if matches!(b.param, GeomParam::T1 | GeomParam::T2) {
                let needed = if b.param == GeomParam::T1 { 1 } else { 2 };
                if self.template.layers_above.len() < needed {
                    return Err(OptimizeError::BadSpace(format!(
                        "{} requires at least {} layer(s) above the host",
                        b.param, needed
                    )));
                }
            }
        }
        Ok(())
    }

    /// Template with the free parameters substituted.
    pub fn build(&self, values: &[f64]) -> Stack {
        let mut stack = self.template.clone();
        for (bound, &value) in self.free.iter().zip(values) {
            match bound.param {
                GeomParam::T0 => stack.host.thickness_nm = value,
                GeomParam::D => stack.dipole.depth_nm = value,
                GeomParam::T1 => {
                    let last = stack.layers_above.len() - 1;
                    stack.layers_above[last].thickness_nm = value;
                }
                GeomParam::T2 => {
                    let idx = stack.layers_above.len() - 2;
                    stack.layers_above[idx].thickness_nm = value;
                }
            }
        }
        stack
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ObjectiveValue {
    pub xi: f64,
    pub feasible: bool,
}

/// xi of the stack built from `values`; geometrically infeasible points
/// (d >= t0) score zero with the flag set instead of erroring, which keeps
/// swarm dynamics smooth near the coupled bound.
pub fn objective(space: &ParameterSpace, values: &[f64]) -> Result<ObjectiveValue, OptimizeError> {
    let stack = space.build(values);
    if stack.dipole.depth_nm >= stack.host.thickness_nm {
        return Ok(ObjectiveValue {
            xi: 0.0,
            feasible: false,
        });
    }
    let xi = collection_factor_with(&stack, space.numerical_aperture, &space.settings)?;
    Ok(ObjectiveValue { xi, feasible: true })
}

#[derive(Debug, Clone, Serialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        // constriction-style coefficients
        Self {
            swarm_size: 50,
            iterations: 200,
            seed: 0,
            inertia: 0.729,
            cognitive: 1.49,
            social: 1.49,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PsoResult {
    pub best_values: Vec<f64>,
    pub best_xi: f64,
    /// Best xi seen so far, one entry per iteration.
    pub trace: Vec<f64>,
}

/// Seeded particle swarm over the bounded space. Deterministic for a fixed
/// seed: all random draws happen serially, only the objective evaluations
/// fan out over the thread pool.
pub fn pso(space: &ParameterSpace, config: &PsoConfig) -> Result<PsoResult, OptimizeError> {
    space.validate()?;
    let dims = space.free.len();
    let lower: Vec<f64> = space.free.iter().map(|b| b.lower_nm).collect();
    let upper: Vec<f64> = space.free.iter().map(|b| b.upper_nm).collect();
    let range: Vec<f64> = lower
        .iter()
        .zip(&upper)
        .map(|(l, u)| (u - l).max(0.0))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.swarm_size.max(1);

    let mut positions: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dims)
                .map(|k| {
                    if range[k] > 0.0 {
                        rng.random_range(lower[k]..=upper[k])
                    } else {
                        lower[k]
                    }
                })
                .collect()
        })
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dims)
                .map(|k| {
                    if range[k] > 0.0 {
                        rng.random_range(-0.5 * range[k]..=0.5 * range[k])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let evaluate = |positions: &[Vec<f64>]| -> Result<Vec<f64>, OptimizeError> {
        positions
            .par_iter()
            .map(|x| objective(space, x).map(|v| v.xi))
            .collect()
    };

    let mut scores = evaluate(&positions)?;
    let mut personal_best = positions.clone();
    let mut personal_score = scores.clone();
    let (mut best_idx, mut best_xi) = (0usize, f64::NEG_INFINITY);
    for (i, &s) in scores.iter().enumerate() {
        if s > best_xi {
            best_xi = s;
            best_idx = i;
        }
    }
    let mut best_values = positions[best_idx].clone();
    let mut trace = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        for i in 0..n {
            for k in 0..dims {
                if range[k] == 0.0 {
                    positions[i][k] = lower[k];
                    velocities[i][k] = 0.0;
                    continue;
                }
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                velocities[i][k] = config.inertia * velocities[i][k]
                    + config.cognitive * r1 * (personal_best[i][k] - positions[i][k])
                    + config.social * r2 * (best_values[k] - positions[i][k]);
                let mut x = positions[i][k] + velocities[i][k];
                // reflecting bounds
                let mut bounces = 0;
                while (x < lower[k] || x > upper[k]) && bounces < 8 {
                    if x < lower[k] {
                        x = 2.0 * lower[k] - x;
                    } else {
                        x = 2.0 * upper[k] - x;
                    }
                    velocities[i][k] = -velocities[i][k];
                    bounces += 1;
                }
                positions[i][k] = x.clamp(lower[k], upper[k]);
            }
        }
        scores = evaluate(&positions)?;
        for i in 0..n {
            if scores[i] > personal_score[i] {
                personal_score[i] = scores[i];
                personal_best[i] = positions[i].clone();
            }
            if scores[i] > best_xi {
                best_xi = scores[i];
                best_values = positions[i].clone();
            }
        }
        trace.push(best_xi);
    }

    Ok(PsoResult {
        best_values,
        best_xi,
        trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineConfig {
    /// Central-difference step per parameter, nm.
    pub fd_step_nm: f64,
    /// Stop when the projected gradient norm falls below this, per nm.
    pub grad_tol: f64,
    pub max_iterations: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            fd_step_nm: 0.1,
            grad_tol: 1e-5,
            max_iterations: 200,
        }
    }
}

/// Bounded quasi-Newton ascent from `start`. Never leaves the box and never
/// returns a worse objective than it started with.
pub fn local_refine(
    space: &ParameterSpace,
    start: &[f64],
    config: &RefineConfig,
) -> Result<(Vec<f64>, f64), OptimizeError> {
    space.validate()?;
    let lower: Vec<f64> = space.free.iter().map(|b| b.lower_nm).collect();
    let upper: Vec<f64> = space.free.iter().map(|b| b.upper_nm).collect();
    let f = |x: &[f64]| -> Result<f64, OptimizeError> { Ok(objective(space, x)?.xi) };
    refine_bounded(&f, &lower, &upper, start, config)
}

/// The ascent kernel behind [`local_refine`], usable with any bounded
/// objective.
pub fn refine_bounded<F>(
    f: &F,
    lower: &[f64],
    upper: &[f64],
    start: &[f64],
    config: &RefineConfig,
) -> Result<(Vec<f64>, f64), OptimizeError>
where
    F: Fn(&[f64]) -> Result<f64, OptimizeError>,
{
    let dims = lower.len();
    let clamp = |x: &mut Vec<f64>| {
        for k in 0..dims {
            x[k] = x[k].clamp(lower[k], upper[k]);
        }
    };

    let mut x: Vec<f64> = start.to_vec();
    clamp(&mut x);
    let mut fx = f(&x)?;

    let gradient = |x: &[f64]| -> Result<Vec<f64>, OptimizeError> {
        let mut g = vec![0.0; dims];
        for k in 0..dims {
            if upper[k] == lower[k] {
                continue;
            }
            let h = config.fd_step_nm;
            let a = (x[k] + h).min(upper[k]);
            let b = (x[k] - h).max(lower[k]);
            if a == b {
                continue;
            }
            let mut xa = x.to_vec();
            xa[k] = a;
            let mut xb = x.to_vec();
            xb[k] = b;
            g[k] = (f(&xa)? - f(&xb)?) / (a - b);
        }
        Ok(g)
    };

    // inverse-Hessian approximation of the maximization problem
    let mut h_inv: Vec<Vec<f64>> = (0..dims)
        .map(|i| (0..dims).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut g = gradient(&x)?;

    for _ in 0..config.max_iterations {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < config.grad_tol {
            break;
        }
        let mut dir: Vec<f64> = (0..dims)
            .map(|i| (0..dims).map(|j| h_inv[i][j] * g[j]).sum())
            .collect();
        let ascent: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if ascent <= 0.0 {
            dir = g.clone();
        }

        // backtracking line search with monotone acceptance
        let dir_max = dir.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if dir_max == 0.0 {
            break;
        }
        let mut step = (2.0 / dir_max).min(1.0);
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, d)| xi + step * d).collect();
            clamp(&mut trial);
            let ft = f(&trial)?;
            if ft > fx {
                let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let g_new = gradient(&trial)?;
                let y: Vec<f64> = g.iter().zip(&g_new).map(|(old, new)| old - new).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-12 {
                    bfgs_update(&mut h_inv, &s, &y, sy);
                }
                x = trial;
                fx = ft;
                g = g_new;
                accepted = true;
                break;
            }
            step *= 0.5;
            if step * dir_max < 1e-7 {
                break;
            }
        }
        if !accepted {
            break;
        }
    }

    Ok((x, fx))
}

fn bfgs_update(h_inv: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h_inv[i][j] * y[j]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h_inv[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy)
                - (hy[i] * s[j] + s[i] * hy[j]) / sy;
        }
    }
}

/// Axes a sweep can scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxisKey {
    T0,
    D,
    T1,
    T2,
    Lambda,
    DipoleAngle,
    Na,
    AngleOfIncidence,
}

impl std::fmt::Display for SweepAxisKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SweepAxisKey::T0 => "t0",
            SweepAxisKey::D => "d",
            SweepAxisKey::T1 => "t1",
            SweepAxisKey::T2 => "t2",
            SweepAxisKey::Lambda => "lambda",
            SweepAxisKey::DipoleAngle => "theta",
            SweepAxisKey::Na => "na",
            SweepAxisKey::AngleOfIncidence => "angle_of_incidence",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepAxis {
    pub key: SweepAxisKey,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn linspace(key: SweepAxisKey, start: f64, stop: f64, step: f64) -> Self {
        assert!(step > 0.0 && stop >= start);
        let n = ((stop - start) / step).round() as usize;
        let values = (0..=n).map(|i| start + i as f64 * step).collect();
        Self { key, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepQuantity {
    Xi,
    Reflectance,
}

/// Evaluation context of a sweep: the template plus collection settings.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub template: Stack,
    pub numerical_aperture: f64,
    pub settings: EmissionSettings,
    /// Polarization for reflectance sweeps; None averages s and p.
    pub reflectance_pol: Option<Polarization>,
}

/// A 1D or 2D grid of xi (or reflectance when an incidence-angle axis is
/// present), row-major in axis order.
#[derive(Debug, Clone, Serialize)]
pub struct SweepGrid {
    pub axes: Vec<SweepAxis>,
    pub values: Vec<f64>,
    pub infeasible: Vec<bool>,
    pub quantity: SweepQuantity,
    pub numerical_aperture: f64,
}

impl SweepGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    pub fn at(&self, indices: &[usize]) -> f64 {
        self.values[self.flat_index(indices)]
    }

    fn flat_index(&self, indices: &[usize]) -> usize {
        match indices {
            [i] => *i,
            [i, j] => i * self.axes[1].values.len() + j,
            _ => panic!("sweep grids are 1D or 2D"),
        }
    }

    /// Same data with the two axes swapped.
    pub fn transposed(&self) -> SweepGrid {
        assert_eq!(self.axes.len(), 2, "transpose needs a 2D grid");
        let (n0, n1) = (self.axes[0].values.len(), self.axes[1].values.len());
        let mut values = vec![0.0; self.values.len()];
        let mut infeasible = vec![false; self.infeasible.len()];
        for i in 0..n0 {
            for j in 0..n1 {
                values[j * n0 + i] = self.values[i * n1 + j];
                infeasible[j * n0 + i] = self.infeasible[i * n1 + j];
            }
        }
        SweepGrid {
            axes: vec![self.axes[1].clone(), self.axes[0].clone()],
            values,
            infeasible,
            quantity: self.quantity,
            numerical_aperture: self.numerical_aperture,
        }
    }

    /// CSV with `#` metadata lines; 2D grids put the second axis on the
    /// header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# quantity: {}\n",
            match self.quantity {
                SweepQuantity::Xi => "xi",
                SweepQuantity::Reflectance => "reflectance",
            }
        ));
        out.push_str(&format!("# na: {:.9e}\n", self.numerical_aperture));
        match self.axes.len() {
            1 => {
                out.push_str(&format!("{},value\n", self.axes[0].key));
                for (i, v) in self.axes[0].values.iter().enumerate() {
                    out.push_str(&format!("{:.9e},{:.9e}\n", v, self.values[i]));
                }
            }
            2 => {
                out.push_str(&format!("{}\\{}", self.axes[0].key, self.axes[1].key));
                for v in &self.axes[1].values {
                    out.push_str(&format!(",{:.9e}", v));
                }
                out.push('\n');
                for (i, v0) in self.axes[0].values.iter().enumerate() {
                    out.push_str(&format!("{:.9e}", v0));
                    for j in 0..self.axes[1].values.len() {
                        out.push_str(&format!(",{:.9e}", self.at(&[i, j])));
                    }
                    out.push('\n');
                }
            }
            _ => unreachable!(),
        }
        out
    }

    /// JSON sidecar describing the sweep.
    pub fn sidecar_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            quantity: &'a SweepQuantity,
            na: f64,
            axes: Vec<serde_json::Value>,
        }
        let axes = self
            .axes
            .iter()
            .map(|a| {
                serde_json::json!({
                    "name": a.key.to_string(),
                    "start": a.values.first(),
                    "stop": a.values.last(),
                    "points": a.values.len(),
                })
            })
            .collect();
        serde_json::to_string_pretty(&Sidecar {
            quantity: &self.quantity,
            na: self.numerical_aperture,
            axes,
        })
        .unwrap()
    }
}

fn apply_axis(stack: &mut Stack, na: &mut f64, key: SweepAxisKey, value: f64) {
    match key {
        SweepAxisKey::T0 => stack.host.thickness_nm = value,
        SweepAxisKey::D => stack.dipole.depth_nm = value,
        SweepAxisKey::T1 => {
            let last = stack.layers_above.len() - 1;
            stack.layers_above[last].thickness_nm = value;
        }
        SweepAxisKey::T2 => {
            let idx = stack.layers_above.len() - 2;
            stack.layers_above[idx].thickness_nm = value;
        }
        SweepAxisKey::Lambda => stack.dipole.wavelength_nm = value,
        SweepAxisKey::DipoleAngle => stack.dipole.polar_angle_deg = value,
        SweepAxisKey::Na => *na = value,
        SweepAxisKey::AngleOfIncidence => {}
    }
}

/// Evaluate xi (or reflectance) on a 1D/2D grid, in parallel. Rows with
/// d >= t0 are marked infeasible and score zero.
pub fn sweep(spec: &SweepSpec, axes: &[SweepAxis]) -> Result<SweepGrid, OptimizeError> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(OptimizeError::BadAxes(
            "sweeps support exactly 1 or 2 axes".into(),
        ));
    }
    for a in axes {
        if a.values.is_empty() {
            return Err(OptimizeError::BadAxes(format!("axis {} is empty", a.key)));
        }
        if matches!(a.key, SweepAxisKey::T1 | SweepAxisKey::T2) {
            let needed = if a.key == SweepAxisKey::T1 { 1 } else { 2 };
            if spec.template.layers_above.len() < needed {
                return Err(OptimizeError::BadAxes(format!(
                    "axis {} requires at least {} layer(s) above the host",
                    a.key, needed
                )));
            }
        }
    }
    let angle_axis = axes
        .iter()
        .any(|a| a.key == SweepAxisKey::AngleOfIncidence);
    let quantity = if angle_axis {
        SweepQuantity::Reflectance
    } else {
        SweepQuantity::Xi
    };

    let shape: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
    let total: usize = shape.iter().product();
    let results: Result<Vec<(f64, bool)>, OptimizeError> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let indices: Vec<usize> = match shape.len() {
                1 => vec![flat],
                2 => vec![flat / shape[1], flat % shape[1]],
                _ => unreachable!(),
            };
            let mut stack = spec.template.clone();
            let mut na = spec.numerical_aperture;
            let mut incidence_angle = None;
            for (axis, &idx) in axes.iter().zip(&indices) {
                let value = axis.values[idx];
                if axis.key == SweepAxisKey::AngleOfIncidence {
                    incidence_angle = Some(value);
                }
                apply_axis(&mut stack, &mut na, axis.key, value);
            }
            if stack.dipole.depth_nm >= stack.host.thickness_nm {
                return Ok((0.0, true));
            }
            let value = if let Some(angle) = incidence_angle {
                let lambda = stack.dipole.wavelength_nm;
                match spec.reflectance_pol {
                    Some(pol) => stack_reflectance(&stack, lambda, angle, pol)?.0,
                    None => {
                        let s = stack_reflectance(&stack, lambda, angle, Polarization::S)?.0;
                        let p = stack_reflectance(&stack, lambda, angle, Polarization::P)?.0;
                        0.5 * (s + p)
                    }
                }
            } else {
                collection_factor_with(&stack, na, &spec.settings)?
            };
            Ok((value, false))
        })
        .collect();
    let results = results?;

    Ok(SweepGrid {
        axes: axes.to_vec(),
        values: results.iter().map(|r| r.0).collect(),
        infeasible: results.iter().map(|r| r.1).collect(),
        quantity,
        numerical_aperture: spec.numerical_aperture,
    })
}

/// Full width at half maximum of a sampled curve with a unique interior
/// peak, by linear interpolation of the half-maximum crossings.
pub fn fwhm(xs: &[f64], ys: &[f64]) -> Result<f64, OptimizeError> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 3 {
        return Err(OptimizeError::NoPeak);
    }
    let (imax, &ymax) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    if imax == 0 || imax == ys.len() - 1 {
        return Err(OptimizeError::NoPeak);
    }
    let half = 0.5 * ymax;

    let mut left = None;
    for j in (1..=imax).rev() {
        if ys[j - 1] <= half {
            let f = (ys[j] - half) / (ys[j] - ys[j - 1]);
            left = Some(xs[j] - f * (xs[j] - xs[j - 1]));
            break;
        }
    }
    let mut right = None;
    for j in imax..ys.len() - 1 {
        if ys[j + 1] <= half {
            let f = (ys[j] - half) / (ys[j] - ys[j + 1]);
            right = Some(xs[j] + f * (xs[j + 1] - xs[j]));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(OptimizeError::OpenResonance),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientReport {
    /// d lambda_res / d t0 around the working point.
    pub slope_nm_per_nm: f64,
    /// Largest tolerable thickness gradient, nm of thickness per um of
    /// lateral position.
    pub bound_nm_per_um: f64,
    pub spot_diameter_nm: f64,
    pub acceptable_shift_nm: f64,
    /// (t0, resonance wavelength) samples behind the linear fit.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct GradientConfig {
    pub t0_offsets_nm: Vec<f64>,
    pub lambda_half_range_nm: f64,
    pub lambda_step_nm: f64,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            t0_offsets_nm: vec![-8.0, -4.0, 0.0, 4.0, 8.0],
            lambda_half_range_nm: 30.0,
            lambda_step_nm: 1.0,
        }
    }
}

/// Resonance-shift slope from local lambda sweeps at a few thicknesses
/// around the template's working point, then the tolerable-gradient bound
/// acceptable_shift / (slope * spot_diameter).
pub fn gradient_tolerance_report(
    spec: &SweepSpec,
    spot_diameter_nm: f64,
    acceptable_shift_nm: f64,
    config: &GradientConfig,
) -> Result<GradientReport, OptimizeError> {
    let t0_center = spec.template.host.thickness_nm;
    let lambda_center = spec.template.dipole.wavelength_nm;
    let mut samples = Vec::new();
    for offset in &config.t0_offsets_nm {
        let t0 = t0_center + offset;
        let mut stack = spec.template.clone();
        stack.host.thickness_nm = t0;
        let axis = SweepAxis::linspace(
            SweepAxisKey::Lambda,
            lambda_center - config.lambda_half_range_nm,
            lambda_center + config.lambda_half_range_nm,
            config.lambda_step_nm,
        );
        let grid = sweep(
            &SweepSpec {
                template: stack,
                ..spec.clone()
            },
            &[axis.clone()],
        )?;
        let lambda_res = interior_peak_position(&axis.values, &grid.values)?;
        samples.push((t0, lambda_res));
    }

    // least-squares line through (t0, lambda_res)
    let n = samples.len() as f64;
    let sx: f64 = samples.iter().map(|s| s.0).sum();
    let sy: f64 = samples.iter().map(|s| s.1).sum();
    let sxx: f64 = samples.iter().map(|s| s.0 * s.0).sum();
    let sxy: f64 = samples.iter().map(|s| s.0 * s.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    let spot_um = spot_diameter_nm / 1000.0;
    let bound = if acceptable_shift_nm == 0.0 {
        0.0
    } else {
        acceptable_shift_nm / (slope.abs() * spot_um)
    };
    Ok(GradientReport {
        slope_nm_per_nm: slope,
        bound_nm_per_um: bound,
        spot_diameter_nm,
        acceptable_shift_nm,
        samples,
    })
}

/// Parabolic vertex around the maximum of a sampled curve.
fn interior_peak_position(xs: &[f64], ys: &[f64]) -> Result<f64, OptimizeError> {
    let (imax, _) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .ok_or(OptimizeError::NoPeak)?;
    if imax == 0 || imax == ys.len() - 1 {
        return Err(OptimizeError::NoPeak);
    }
    let (x0, x1, x2) = (xs[imax - 1], xs[imax], xs[imax + 1]);
    let (y0, y1, y2) = (ys[imax - 1], ys[imax], ys[imax + 1]);
    let d0 = (y1 - y0) / (x1 - x0);
    let d1 = (y2 - y1) / (x2 - x1);
    let curv = (d1 - d0) / (x2 - x0);
    if curv >= 0.0 {
        return Ok(x1);
    }
    Ok(0.5 * (x0 + x1 - d0 / curv))
}
