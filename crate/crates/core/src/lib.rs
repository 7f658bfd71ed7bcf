//! Simulation and optimization of light emission from a point dipole in a
//! planar metallo-dielectric stack, plus the spectroscopy fitting routines
//! used to characterize fabricated devices.
//!
//! The crate is organized along the processing chain:
//!
//! - [`materials`]: complex refractive indices (constants or tables)
//! - [`stack`]: geometry, validation, JSON parsing
//! - [`tmm`]: generalized Fresnel coefficients of arbitrary substacks
//! - [`dipole`]: angular power emission spectrum, total power, far fields,
//!   and the collection factor xi
//! - [`modes`]: leaky/guided mode extraction, slab-waveguide oracle,
//!   mirror penetration depths and the Fabry-Perot resonance condition
//! - [`optimize`]: sweeps, particle-swarm search and local refinement
//! - [`fitting`]: saturation, photon-autocorrelation, and thickness fits

pub mod dipole;
pub mod fitting;
pub mod materials;
pub mod modes;
pub mod optimize;
pub mod quadrature;
pub mod stack;
pub mod tmm;

pub use materials::{ComplexIndex, Material, MaterialRegistry};
pub use stack::{DipoleSource, Layer, Stack, Substack};
pub use tmm::{PlaneWaveChannel, Polarization, StackCoefficients};
