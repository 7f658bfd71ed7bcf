//! Complex refractive indices of the media making up a stack.
//!
//! A [`Material`] is either a constant complex index or a table of
//! `(wavelength, n, k)` rows interpolated linearly in n and k. The presets
//! cover the media used throughout: diamond, silver and silica at 620 nm
//! (literature values) plus the ellipsometry-measured values of the
//! evaporated layers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("material `{name}`: wavelength {wavelength_nm} nm outside table range [{min_nm}, {max_nm}] nm")]
    WavelengthOutOfRange {
        name: String,
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },
    #[error("material `{name}`: {reason}")]
    Invalid { name: String, reason: String },
    #[error("unknown material `{0}`")]
    Unknown(String),
    #[error("material JSON: {0}")]
    Json(String),
}

/// Complex refractive index n + ik of a passive medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexIndex {
    pub n: f64,
    pub k: f64,
}

impl ComplexIndex {
    pub fn new(n: f64, k: f64) -> Self {
        Self { n, k }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.n, self.k)
    }

    /// Relative permittivity (n + ik)^2.
    pub fn permittivity(&self) -> Complex64 {
        let c = self.as_complex();
        c * c
    }

    pub fn is_lossless(&self) -> bool {
        self.k == 0.0
    }

    fn check(&self) -> Result<(), String> {
        if !(self.n > 0.0) || !self.n.is_finite() {
            return Err(format!("refractive index n = {} must be positive", self.n));
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            return Err(format!("extinction coefficient k = {} must be >= 0", self.k));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum IndexModel {
    Constant(ComplexIndex),
    /// Rows (wavelength_nm, n, k), strictly increasing in wavelength.
    Table(Vec<(f64, f64, f64)>),
}

/// A named dispersion model.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    name: String,
    model: IndexModel,
}

impl Material {
    pub fn constant(name: impl Into<String>, n: f64, k: f64) -> Result<Self, MaterialError> {
        let name = name.into();
        let index = ComplexIndex::new(n, k);
        index.check().map_err(|reason| MaterialError::Invalid {
            name: name.clone(),
            reason,
        })?;
        Ok(Self {
            name,
            model: IndexModel::Constant(index),
        })
    }

    pub fn tabulated(
        name: impl Into<String>,
        rows: Vec<(f64, f64, f64)>,
    ) -> Result<Self, MaterialError> {
        let name = name.into();
        let invalid = |reason: String| MaterialError::Invalid {
            name: name.clone(),
            reason,
        };
        if rows.len() < 2 {
            return Err(invalid("dispersion table needs at least 2 rows".into()));
        }
        for pair in rows.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(invalid(format!(
                    "table wavelengths must be strictly increasing ({} !< {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        for &(wl, n, k) in &rows {
            if !(wl > 0.0) {
                return Err(invalid(format!("table wavelength {wl} must be positive")));
            }
            ComplexIndex::new(n, k)
                .check()
                .map_err(|reason| invalid(format!("at {wl} nm: {reason}")))?;
        }
        Ok(Self {
            name,
            model: IndexModel::Table(rows),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Complex index at the given vacuum wavelength. Tables are interpolated
    /// linearly in n and k separately; exact at the nodes.
    pub fn index_at(&self, wavelength_nm: f64) -> Result<ComplexIndex, MaterialError> {
        match &self.model {
            IndexModel::Constant(c) => Ok(*c),
            IndexModel::Table(rows) => {
                let min = rows.first().unwrap().0;
                let max = rows.last().unwrap().0;
                if wavelength_nm < min || wavelength_nm > max {
                    return Err(MaterialError::WavelengthOutOfRange {
                        name: self.name.clone(),
                        wavelength_nm,
                        min_nm: min,
                        max_nm: max,
                    });
                }
                let idx = rows
                    .partition_point(|row| row.0 <= wavelength_nm)
                    .clamp(1, rows.len() - 1);
                let (w0, n0, k0) = rows[idx - 1];
                let (w1, n1, k1) = rows[idx];
                let f = (wavelength_nm - w0) / (w1 - w0);
                Ok(ComplexIndex::new(n0 + f * (n1 - n0), k0 + f * (k1 - k0)))
            }
        }
    }

    /// True if k = 0 at every table node (or in the constant).
    pub fn is_lossless(&self) -> bool {
        match &self.model {
            IndexModel::Constant(c) => c.is_lossless(),
            IndexModel::Table(rows) => rows.iter().all(|&(_, _, k)| k == 0.0),
        }
    }

    /// Material with extinction floored at `kappa` everywhere; n unchanged.
    /// Used to damp guided-mode poles of otherwise lossless hosts.
    pub fn with_absorption(&self, kappa: f64) -> Material {
        assert!(kappa >= 0.0, "kappa must be nonnegative");
        let model = match &self.model {
            IndexModel::Constant(c) => IndexModel::Constant(ComplexIndex::new(c.n, c.k.max(kappa))),
            IndexModel::Table(rows) => IndexModel::Table(
                rows.iter()
                    .map(|&(w, n, k)| (w, n, k.max(kappa)))
                    .collect(),
            ),
        };
        Material {
            name: self.name.clone(),
            model,
        }
    }

    pub fn from_json(json: &str) -> Result<Self, MaterialError> {
        let raw: MaterialJson =
            serde_json::from_str(json).map_err(|e| MaterialError::Json(e.to_string()))?;
        raw.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MaterialJson::from(self)).unwrap()
    }
}

/// JSON document form: either `{"name": n, "constant": [n, k]}` or
/// `{"name": n, "table": [[lambda_nm, n, k], ...]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct MaterialJson {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 3]>>,
}

impl TryFrom<MaterialJson> for Material {
    type Error = MaterialError;

    fn try_from(raw: MaterialJson) -> Result<Self, Self::Error> {
        match (raw.constant, raw.table) {
            (Some([n, k]), None) => Material::constant(raw.name, n, k),
            (None, Some(rows)) => Material::tabulated(
                raw.name,
                rows.into_iter().map(|[w, n, k]| (w, n, k)).collect(),
            ),
            _ => Err(MaterialError::Json(format!(
                "material `{}` must have exactly one of `constant` or `table`",
                raw.name
            ))),
        }
    }
}

impl From<&Material> for MaterialJson {
    fn from(mat: &Material) -> Self {
        match &mat.model {
            IndexModel::Constant(c) => MaterialJson {
                name: mat.name.clone(),
                constant: Some([c.n, c.k]),
                table: None,
            },
            IndexModel::Table(rows) => MaterialJson {
                name: mat.name.clone(),
                constant: None,
                table: Some(rows.iter().map(|&(w, n, k)| [w, n, k]).collect()),
            },
        }
    }
}

pub mod presets {
    //! Built-in media. Literature values at 620 nm plus the measured
    //! indices of the evaporated layers of the fabricated device.

    use super::Material;

    pub fn vacuum() -> Material {
        Material::constant("vacuum", 1.0, 0.0).unwrap()
    }

    pub fn diamond() -> Material {
        Material::constant("diamond", 2.414, 0.0).unwrap()
    }

    pub fn silver_literature() -> Material {
        Material::constant("silver-literature", 0.05, 4.21).unwrap()
    }

    pub fn silica() -> Material {
        Material::constant("silica", 1.464, 0.0).unwrap()
    }

    pub fn silver_thin_measured() -> Material {
        Material::constant("silver-thin-measured", 0.15, 3.95).unwrap()
    }

    pub fn silver_thick_measured() -> Material {
        Material::constant("silver-thick-measured", 0.07, 4.10).unwrap()
    }

    pub fn silica_measured() -> Material {
        Material::constant("silica-measured", 1.45, 0.0).unwrap()
    }

    /// Look up a preset by name. Hyphens and underscores are equivalent.
    pub fn by_name(name: &str) -> Option<Material> {
        let canon = name.to_ascii_lowercase().replace('_', "-");
        match canon.as_str() {
            "vacuum" | "air" => Some(vacuum()),
            "diamond" => Some(diamond()),
            "silver-literature" => Some(silver_literature()),
            "silica" => Some(silica()),
            "silver-thin-measured" => Some(silver_thin_measured()),
            "silver-thick-measured" => Some(silver_thick_measured()),
            "silica-measured" => Some(silica_measured()),
            _ => None,
        }
    }

    pub fn all() -> Vec<Material> {
        vec![
            vacuum(),
            diamond(),
            silver_literature(),
            silica(),
            silver_thin_measured(),
            silver_thick_measured(),
            silica_measured(),
        ]
    }
}

/// Name -> material resolver used when parsing stack files.
#[derive(Debug, Clone, Default)]
pub struct MaterialRegistry {
    extra: Vec<Material>,
}

impl MaterialRegistry {
    /// Registry that resolves the built-in presets only.
    pub fn with_presets() -> Self {
        Self::default()
    }

    /// User materials take precedence over presets of the same name.
    pub fn insert(&mut self, material: Material) {
        self.extra.retain(|m| m.name() != material.name());
        self.extra.push(material);
    }

    pub fn resolve(&self, name: &str) -> Result<Material, MaterialError> {
        let canon = name.to_ascii_lowercase().replace('_', "-");
        if let Some(m) = self
            .extra
            .iter()
            .find(|m| m.name().to_ascii_lowercase().replace('_', "-") == canon)
        {
            return Ok(m.clone());
        }
        presets::by_name(name).ok_or_else(|| MaterialError::Unknown(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn silver_literature_at_620() {
        let idx = presets::silver_literature().index_at(620.0).unwrap();
        assert_relative_eq!(idx.n, 0.05);
        assert_relative_eq!(idx.k, 4.21);
    }

    #[test]
    fn vacuum_is_unity_at_any_wavelength() {
        for wl in [200.0, 620.0, 1550.0] {
            let idx = presets::vacuum().index_at(wl).unwrap();
            assert_eq!(idx, ComplexIndex::new(1.0, 0.0));
        }
    }

    #[test]
    fn table_interpolates_linearly_and_exactly_at_nodes() {
        let mat =
            Material::tabulated("test", vec![(600.0, 2.0, 0.0), (640.0, 2.2, 0.0)]).unwrap();
        let mid = mat.index_at(620.0).unwrap();
        assert_relative_eq!(mid.n, 2.1, epsilon = 1e-12);
        assert_relative_eq!(mid.k, 0.0);
        let node = mat.index_at(640.0).unwrap();
        assert_relative_eq!(node.n, 2.2, epsilon = 1e-12);
    }

    #[test]
    fn table_out_of_range_names_material() {
        let mat =
            Material::tabulated("narrow", vec![(600.0, 2.0, 0.0), (640.0, 2.2, 0.0)]).unwrap();
        let err = mat.index_at(650.0).unwrap_err();
        assert!(err.to_string().contains("narrow"));
    }

    #[test]
    fn with_absorption_floors_k() {
        let diamond = presets::diamond().with_absorption(5e-4);
        let idx = diamond.index_at(620.0).unwrap();
        assert_relative_eq!(idx.n, 2.414);
        assert_relative_eq!(idx.k, 5e-4);

        // kappa = 0 leaves the material unchanged
        let same = presets::diamond().with_absorption(0.0);
        assert_eq!(same.index_at(620.0).unwrap(), ComplexIndex::new(2.414, 0.0));

        // max() keeps a larger existing k
        let silver = presets::silver_literature().with_absorption(5e-4);
        assert_eq!(
            silver.index_at(620.0).unwrap(),
            ComplexIndex::new(0.05, 4.21)
        );
    }

    #[test]
    fn piecewise_linear_between_nodes() {
        let mat = Material::tabulated(
            "disp",
            vec![(500.0, 1.5, 0.1), (600.0, 1.6, 0.2), (700.0, 1.8, 0.1)],
        )
        .unwrap();
        // halfway in the second segment
        let idx = mat.index_at(650.0).unwrap();
        assert_relative_eq!(idx.n, 1.7, epsilon = 1e-12);
        assert_relative_eq!(idx.k, 0.15, epsilon = 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let mat = Material::from_json(r#"{"name": "glass", "constant": [1.5, 0.0]}"#).unwrap();
        assert_eq!(mat.index_at(620.0).unwrap(), ComplexIndex::new(1.5, 0.0));
        let back = Material::from_json(&mat.to_json()).unwrap();
        assert_eq!(back, mat);

        let tab = Material::from_json(
            r#"{"name": "t", "table": [[600, 2.0, 0.0], [640, 2.2, 0.0]]}"#,
        )
        .unwrap();
        assert_relative_eq!(tab.index_at(620.0).unwrap().n, 2.1, epsilon = 1e-12);
    }

    #[test]
    fn invalid_tables_rejected() {
        assert!(Material::tabulated("bad", vec![(600.0, 2.0, 0.0)]).is_err());
        assert!(
            Material::tabulated("bad", vec![(640.0, 2.0, 0.0), (600.0, 2.2, 0.0)]).is_err()
        );
        assert!(Material::constant("bad", -1.0, 0.0).is_err());
        assert!(Material::constant("bad", 1.0, -0.5).is_err());
    }

    #[test]
    fn registry_resolves_presets_and_overrides() {
        let mut reg = MaterialRegistry::with_presets();
        assert_eq!(reg.resolve("silver_literature").unwrap().name(), "silver-literature");
        assert!(reg.resolve("unobtainium").is_err());
        reg.insert(Material::constant("diamond", 2.40, 0.0).unwrap());
        assert_relative_eq!(reg.resolve("diamond").unwrap().index_at(620.0).unwrap().n, 2.40);
    }
}
