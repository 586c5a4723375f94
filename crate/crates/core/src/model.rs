//! Model persistence: JSON with full-precision `f64` fields, so a
//! save/load round trip is bitwise stable.

use crate::atoms::PoleSet;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Current on-disk format revision.
pub const FORMAT_VERSION: u32 = 1;

/// Summary statistics recorded after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f64,
}

/// Optional per-epoch pole positions for trajectory inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleSnapshot {
    pub epoch: usize,
    pub rho: Vec<f64>,
    pub psi: Vec<f64>,
}

/// Everything needed to rebuild the dictionaries and run prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format_version: u32,
    /// Frame count the model was trained for.
    pub t: usize,
    pub lambda: f64,
    pub trainable_lambda: bool,
    pub rho: Vec<f64>,
    pub psi: Vec<f64>,
    pub include_constant: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<PoleSnapshot>,
}

impl Model {
    /// Builds a model record from a pole set.
    pub fn new(poles: &PoleSet<f64>, t: usize, lambda: f64, trainable_lambda: bool) -> Self {
        Model {
            format_version: FORMAT_VERSION,
            t,
            lambda,
            trainable_lambda,
            rho: poles.rho().to_vec(),
            psi: poles.psi().to_vec(),
            include_constant: poles.include_constant(),
            training: None,
            snapshots: Vec::new(),
        }
    }

    /// Validated pole set for dictionary construction.
    pub fn pole_set(&self) -> Result<PoleSet<f64>> {
        PoleSet::new(self.rho.clone(), self.psi.clone(), self.include_constant)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.rho.len() != self.psi.len() {
            return Err(Error::Format(format!(
                "pole list length mismatch: {} magnitudes vs {} phases",
                self.rho.len(),
                self.psi.len()
            )));
        }
        if self.t < 2 {
            return Err(Error::Format(format!("model frame count {} is below 2", self.t)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Format(format!("invalid lambda {}", self.lambda)));
        }
        self.pole_set().map(|_| ())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("model serialization: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let model: Model = serde_json::from_str(&text).map_err(|e| {
            Error::Format(format!("model file {}: {e}", path.as_ref().display()))
        })?;
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn default_model() -> Model {
        let poles = PoleSet::init_ring(40, 0.85, 1.15).unwrap();
        Model::new(&poles, 9, 0.01, false)
    }

    #[test]
    fn round_trip_is_bitwise_stable() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut model = default_model();
        model.lambda = 0.1 + 0.2; // deliberately non-representable-looking value
        model.training = Some(TrainingMeta { epochs: 7, final_loss: 1.234567890123e-5 });
        model.save(&path).unwrap();
        let loaded = Model::load(&path).unwrap();
        assert_eq!(loaded, model);
        assert!(loaded.lambda.to_bits() == model.lambda.to_bits());
        for (a, b) in loaded.rho.iter().zip(&model.rho) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn default_model_is_small() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        default_model().save(&path).unwrap();
        let bytes = std::fs::metadata(&path).unwrap().len();
        assert!(bytes <= 10 * 1024, "model file is {bytes} bytes");
    }

    #[test]
    fn wrong_version_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut model = default_model();
        model.save(&path).unwrap();
        model.format_version = 99;
        let text = serde_json::to_string(&model).unwrap();
        std::fs::write(&path, text).unwrap();
        assert!(Model::load(&path).is_err());
    }

    #[test]
    fn garbage_file_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, "not json at all").unwrap();
        assert!(Model::load(&path).is_err());
    }

    #[test]
    fn mismatched_pole_lists_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut model = default_model();
        model.psi.pop();
        let text = serde_json::to_string(&model).unwrap();
        std::fs::write(&path, text).unwrap();
        assert!(Model::load(&path).is_err());
    }
}
