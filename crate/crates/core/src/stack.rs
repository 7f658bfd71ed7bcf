//! Planar stack geometry: semi-infinite half spaces, finite layers, and the
//! embedded dipole.
//!
//! The z axis points from the lower to the upper half space. The dipole sits
//! inside the host layer at depth `d` below the host's upper interface and
//! spans the polar angle `theta` with the z axis; collection optics live in
//! the upper half space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::{Material, MaterialError, MaterialRegistry};

#[derive(Debug, Error)]
pub enum StackError {
    #[error("invalid stack: {0:?}")]
    Invalid(Vec<String>),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("stack JSON: {0}")]
    Json(String),
}

/// A finite layer of a given material.
#[derive(Debug, Clone)]
pub struct Layer {
    pub material: Material,
    pub thickness_nm: f64,
}

impl Layer {
    pub fn new(material: Material, thickness_nm: f64) -> Self {
        Self {
            material,
            thickness_nm,
        }
    }
}

/// The embedded emitter: vacuum wavelength, polar angle of the dipole axis
/// against the stack normal, and depth below the host's upper interface.
#[derive(Debug, Clone, Copy)]
pub struct DipoleSource {
    pub wavelength_nm: f64,
    pub polar_angle_deg: f64,
    pub depth_nm: f64,
}

/// Full geometry. `layers_above` are ordered top-down (first entry adjacent
/// to the upper half space); `layers_below` likewise (first entry adjacent
/// to the host).
#[derive(Debug, Clone)]
pub struct Stack {
    pub upper_half_space: Material,
    pub layers_above: Vec<Layer>,
    pub host: Layer,
    pub layers_below: Vec<Layer>,
    pub lower_half_space: Material,
    pub dipole: DipoleSource,
}

/// One side of the stack as seen from the dipole: the host as incidence
/// medium, the layers in propagation order (nearest first), the half space
/// as exit medium, and the distance from the emitter to the first interface.
#[derive(Debug, Clone)]
pub struct Substack {
    pub incidence: Material,
    pub layers: Vec<Layer>,
    pub exit: Material,
    pub distance_nm: f64,
}

impl Stack {
    /// Check every type invariant; returns one message per violation.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let wl = self.dipole.wavelength_nm;
        if !(wl > 0.0) || !wl.is_finite() {
            violations.push("dipole.wavelength_nm must be positive".into());
        }
        if !(0.0..=90.0).contains(&self.dipole.polar_angle_deg) {
            violations.push("dipole.polar_angle_deg must be in [0, 90]".into());
        }
        if !(self.dipole.depth_nm > 0.0) {
            violations.push("dipole.depth_nm must be positive".into());
        }
        if !(self.dipole.depth_nm < self.host.thickness_nm) {
            violations.push("dipole.depth_nm must be < host.thickness_nm".into());
        }
        for (label, layer) in self.layers() {
            if !(layer.thickness_nm > 0.0) || !layer.thickness_nm.is_finite() {
                violations.push(format!("{label}.thickness_nm must be positive and finite"));
            }
        }
        if wl > 0.0 {
            match self.upper_half_space.index_at(wl) {
                Ok(idx) if idx.k > 0.0 => {
                    violations.push("collection half space must be transparent".into())
                }
                Ok(_) => {}
                Err(e) => violations.push(format!("upper_half_space: {e}")),
            }
        }
        violations
    }

    fn layers(&self) -> impl Iterator<Item = (String, &Layer)> {
        self.layers_above
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("layers_above[{i}]"), l))
            .chain(std::iter::once(("host".to_string(), &self.host)))
            .chain(
                self.layers_below
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (format!("layers_below[{i}]"), l)),
            )
    }

    /// Split into the substacks above and below the emitter. The upper
    /// substack sees the layers above in bottom-up order at distance `d`;
    /// the lower one sees the layers below at distance `t0 - d`.
    pub fn split_at_dipole(&self) -> Result<(Substack, Substack), StackError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(StackError::Invalid(violations));
        }
        let upper = Substack {
            incidence: self.host.material.clone(),
            layers: self.layers_above.iter().rev().cloned().collect(),
            exit: self.upper_half_space.clone(),
            distance_nm: self.dipole.depth_nm,
        };
        let lower = Substack {
            incidence: self.host.material.clone(),
            layers: self.layers_below.clone(),
            exit: self.lower_half_space.clone(),
            distance_nm: self.host.thickness_nm - self.dipole.depth_nm,
        };
        Ok((upper, lower))
    }

    pub fn from_json(json: &str, registry: &MaterialRegistry) -> Result<Self, StackError> {
        let raw: StackJson =
            serde_json::from_str(json).map_err(|e| StackError::Json(e.to_string()))?;
        raw.resolve(registry)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&StackJson::from(self)).unwrap()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerJson {
    material: String,
    t_nm: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DipoleJson {
    lambda_nm: f64,
    theta_deg: f64,
    d_nm: f64,
}

/// JSON schema of a stack file. Materials are referenced by name and
/// resolved against the registry (presets plus any user materials).
#[derive(Debug, Serialize, Deserialize)]
struct StackJson {
    upper: String,
    #[serde(default)]
    layers_above: Vec<LayerJson>,
    host: LayerJson,
    #[serde(default)]
    layers_below: Vec<LayerJson>,
    lower: String,
    dipole: DipoleJson,
}

impl StackJson {
    fn resolve(self, registry: &MaterialRegistry) -> Result<Stack, StackError> {
        let layer = |l: &LayerJson| -> Result<Layer, StackError> {
            Ok(Layer::new(registry.resolve(&l.material)?, l.t_nm))
        };
        Ok(Stack {
            upper_half_space: registry.resolve(&self.upper)?,
            layers_above: self
                .layers_above
                .iter()
                .map(layer)
                .collect::<Result<_, _>>()?,
            host: layer(&self.host)?,
            layers_below: self
                .layers_below
                .iter()
                .map(layer)
                .collect::<Result<_, _>>()?,
            lower_half_space: registry.resolve(&self.lower)?,
            dipole: DipoleSource {
                wavelength_nm: self.dipole.lambda_nm,
                polar_angle_deg: self.dipole.theta_deg,
                depth_nm: self.dipole.d_nm,
            },
        })
    }
}

impl From<&Stack> for StackJson {
    fn from(stack: &Stack) -> Self {
        let layer = |l: &Layer| LayerJson {
            material: l.material.name().to_string(),
            t_nm: l.thickness_nm,
        };
        StackJson {
            upper: stack.upper_half_space.name().to_string(),
            layers_above: stack.layers_above.iter().map(layer).collect(),
            host: layer(&stack.host),
            layers_below: stack.layers_below.iter().map(layer).collect(),
            lower: stack.lower_half_space.name().to_string(),
            dipole: DipoleJson {
                lambda_nm: stack.dipole.wavelength_nm,
                theta_deg: stack.dipole.polar_angle_deg,
                d_nm: stack.dipole.depth_nm,
            },
        }
    }
}

/// Builders for the geometries the test suite keeps coming back to.
pub mod stacks {
    use super::*;
    use crate::materials::presets;

    /// Diamond membrane in air, dipole centered unless stated otherwise.
    pub fn bare_membrane(t0_nm: f64, d_nm: f64, theta_deg: f64, wavelength_nm: f64) -> Stack {
        Stack {
            upper_half_space: presets::vacuum(),
            layers_above: vec![],
            host: Layer::new(presets::diamond(), t0_nm),
            layers_below: vec![],
            lower_half_space: presets::vacuum(),
            dipole: DipoleSource {
                wavelength_nm,
                polar_angle_deg: theta_deg,
                depth_nm: d_nm,
            },
        }
    }

    /// Silver-coated membrane with a silica capping layer on top, literature
    /// indices: vacuum | silica t2 | silver t1 | diamond t0 | silver t1' | vacuum.
    pub fn coated_membrane(
        t0_nm: f64,
        d_nm: f64,
        t1_nm: f64,
        t2_nm: f64,
        t1_lower_nm: f64,
        theta_deg: f64,
        wavelength_nm: f64,
    ) -> Stack {
        Stack {
            upper_half_space: presets::vacuum(),
            layers_above: vec![
                Layer::new(presets::silica(), t2_nm),
                Layer::new(presets::silver_literature(), t1_nm),
            ],
            host: Layer::new(presets::diamond(), t0_nm),
            layers_below: vec![Layer::new(presets::silver_literature(), t1_lower_nm)],
            lower_half_space: presets::vacuum(),
            dipole: DipoleSource {
                wavelength_nm,
                polar_angle_deg: theta_deg,
                depth_nm: d_nm,
            },
        }
    }

    /// Optimum of the design study: t0 = 86.5, d = 42.9, t1 = 42.4,
    /// t2 = 107.6, lower mirror 300 nm, at 620 nm.
    pub fn case_i(theta_deg: f64) -> Stack {
        coated_membrane(86.5, 42.9, 42.4, 107.6, 300.0, theta_deg, 620.0)
    }

    /// Working-point geometry re-optimized for the implantation depth:
    /// t0 = 609.2, d = 27.5, t1 = 24.9, t2 = 107.7.
    pub fn case_iii() -> Stack {
        coated_membrane(609.2, 27.5, 24.9, 107.7, 300.0, 54.7, 620.0)
    }

    /// The fabricated device with ellipsometry-measured layer properties:
    /// vacuum | silica 128 | silver 30 | diamond t0 | silver 160 | vacuum.
    pub fn fabricated_device(t0_nm: f64) -> Stack {
        Stack {
            upper_half_space: presets::vacuum(),
            layers_above: vec![
                Layer::new(presets::silica_measured(), 128.0),
                Layer::new(presets::silver_thin_measured(), 30.0),
            ],
            host: Layer::new(presets::diamond(), t0_nm),
            layers_below: vec![Layer::new(presets::silver_thick_measured(), 160.0)],
            lower_half_space: presets::vacuum(),
            dipole: DipoleSource {
                wavelength_nm: 620.0,
                polar_angle_deg: 54.7,
                depth_nm: 27.5,
            },
        }
    }

    /// Dipole below a single diamond/air interface: host and lower half
    /// space are both diamond, so the only interface is the top one.
    pub fn bulk_diamond(depth_nm: f64, theta_deg: f64, wavelength_nm: f64) -> Stack {
        Stack {
            upper_half_space: presets::vacuum(),
            layers_above: vec![],
            host: Layer::new(presets::diamond(), depth_nm * 2.0),
            layers_below: vec![],
            lower_half_space: presets::diamond(),
            dipole: DipoleSource {
                wavelength_nm,
                polar_angle_deg: theta_deg,
                depth_nm,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::presets;
    use approx::assert_relative_eq;

    #[test]
    fn case_i_stack_is_valid() {
        assert!(stacks::case_i(90.0).validate().is_empty());
    }

    #[test]
    fn dipole_at_host_boundary_is_flagged() {
        let mut stack = stacks::bare_membrane(350.0, 175.0, 90.0, 620.0);
        stack.dipole.depth_nm = stack.host.thickness_nm;
        let violations = stack.validate();
        assert!(violations
            .iter()
            .any(|v| v == "dipole.depth_nm must be < host.thickness_nm"));
    }

    #[test]
    fn absorbing_upper_half_space_is_flagged() {
        let mut stack = stacks::bare_membrane(350.0, 175.0, 90.0, 620.0);
        stack.upper_half_space = presets::silver_literature();
        let violations = stack.validate();
        assert!(violations
            .iter()
            .any(|v| v == "collection half space must be transparent"));
    }

    #[test]
    fn split_distances_sum_to_host_thickness() {
        let stack = stacks::bare_membrane(350.0, 175.0, 90.0, 620.0);
        let (up, lo) = stack.split_at_dipole().unwrap();
        assert_relative_eq!(up.distance_nm, 175.0);
        assert_relative_eq!(lo.distance_nm, 175.0);

        let case_i = stacks::case_i(90.0);
        let (up, lo) = case_i.split_at_dipole().unwrap();
        assert_relative_eq!(up.distance_nm, 42.9);
        assert_relative_eq!(lo.distance_nm, 43.6, epsilon = 1e-12);
        assert_relative_eq!(up.distance_nm + lo.distance_nm, 86.5, epsilon = 1e-12);
    }

    #[test]
    fn split_preserves_layer_sequence() {
        let stack = stacks::case_i(90.0);
        let (up, lo) = stack.split_at_dipole().unwrap();
        // reassemble: reverse the upper layers back to top-down order
        let mut rebuilt: Vec<&str> = up
            .layers
            .iter()
            .rev()
            .map(|l| l.material.name())
            .collect();
        rebuilt.push(stack.host.material.name());
        rebuilt.extend(lo.layers.iter().map(|l| l.material.name()));
        let original: Vec<&str> = stack
            .layers_above
            .iter()
            .map(|l| l.material.name())
            .chain(std::iter::once(stack.host.material.name()))
            .chain(stack.layers_below.iter().map(|l| l.material.name()))
            .collect();
        assert_eq!(rebuilt, original);
        assert_eq!(
            up.layers.len() + lo.layers.len(),
            stack.layers_above.len() + stack.layers_below.len()
        );
    }

    #[test]
    fn json_round_trip() {
        let registry = MaterialRegistry::with_presets();
        let json = r#"{
            "upper": "vacuum",
            "layers_above": [
                {"material": "silica", "t_nm": 107.6},
                {"material": "silver-literature", "t_nm": 42.4}
            ],
            "host": {"material": "diamond", "t_nm": 86.5},
            "layers_below": [{"material": "silver-literature", "t_nm": 300.0}],
            "lower": "vacuum",
            "dipole": {"lambda_nm": 620.0, "theta_deg": 90.0, "d_nm": 42.9}
        }"#;
        let stack = Stack::from_json(json, &registry).unwrap();
        assert!(stack.validate().is_empty());
        assert_relative_eq!(stack.host.thickness_nm, 86.5);
        let back = Stack::from_json(&stack.to_json(), &registry).unwrap();
        assert_relative_eq!(back.dipole.depth_nm, 42.9);
        assert_eq!(back.layers_above[1].material.name(), "silver-literature");
    }
}
