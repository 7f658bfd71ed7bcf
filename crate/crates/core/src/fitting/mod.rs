//! Experimental-data analysis: saturation curves, jitter-convolved photon
//! autocorrelation, background estimation from spectra, and membrane
//! thickness extraction from white-light reflectance.

mod g2;
mod lsq;
mod saturation;
mod spectra;
mod thickness;

pub use g2::{fit_g2, g2_background_model, G2Data, G2Fit};
pub use lsq::{levenberg_marquardt, LsqFit, LsqOptions, LsqProblem};
pub use saturation::{fit_saturation, saturation_model, SaturationData, SaturationFit};
pub use spectra::{background_ratio_from_spectra, BackgroundRatio};
pub use thickness::{model_spectrum, thickness_from_reflectance, ThicknessFit};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:.6e})")]
    NonConvergence {
        iterations: usize,
        residual_norm: f64,
    },
    #[error("normal equations singular")]
    Singular,
    #[error("{0}")]
    Domain(String),
    #[error("thickness ambiguous; candidate minima at {candidates:?} nm")]
    AmbiguousThickness { candidates: Vec<f64> },
    #[error(transparent)]
    Tmm(#[from] crate::tmm::TmmError),
}
