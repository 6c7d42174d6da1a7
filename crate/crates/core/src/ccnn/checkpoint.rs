//! Versioned JSON checkpoints.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BatchNormState, CcnnConfig, CcnnModel, FilterBank, LogisticHead, SpatialWeight, WeightMode};
use crate::data::RealMap;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: CcnnConfig,
    /// One row-major `F × F` array per filter.
    pub filters_raw: Vec<Vec<f64>>,
    /// Row-major `(L+F−1)²` raw spatial weight (all ones when uniform).
    pub spatial_raw: Vec<f64>,
    pub beta: Vec<f64>,
    pub bias: f64,
    pub batchnorm: BatchNormState,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn from_model(model: &CcnnModel, metadata: BTreeMap<String, serde_json::Value>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            config: *model.config(),
            filters_raw: model.filters().raw().iter().map(|f| f.as_slice().to_vec()).collect(),
            spatial_raw: model.weight().raw().as_slice().to_vec(),
            beta: model.head.beta.clone(),
            bias: model.head.bias,
            batchnorm: model.batchnorm.clone(),
            metadata,
        }
    }

    pub fn to_model(&self) -> Result<CcnnModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        let cfg = self.config;
        cfg.validate()?;
        let f = cfg.filter_size;
        let filters = self
            .filters_raw
            .iter()
            .map(|v| RealMap::from_vec(f, f, v.clone()))
            .collect::<Result<Vec<_>>>()?;
        let m = cfg.map_size();
        let raw = RealMap::from_vec(m, m, self.spatial_raw.clone())?;
        let weight = match cfg.weight_mode {
            WeightMode::Uniform => SpatialWeight::uniform(m),
            WeightMode::Learned => SpatialWeight::learned(raw)?,
        };
        CcnnModel::new(
            cfg,
            FilterBank::new(filters)?,
            weight,
            LogisticHead {
                beta: self.beta.clone(),
                bias: self.bias,
            },
            self.batchnorm.clone(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut model = CcnnModel::init(CcnnConfig { lattice: 5, ..CcnnConfig::default() }, 11).unwrap();
        model.head.bias = 0.1 + 0.2;
        model.batchnorm.running_var[0] = 1.0 / 3.0;
        let mut meta = BTreeMap::new();
        meta.insert("phase".to_string(), serde_json::json!("checkerboard"));
        let ck = Checkpoint::from_model(&model, meta);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let restored = back.to_model().unwrap();
        assert_eq!(restored, model);
        for (a, b) in restored.parameters().iter().zip(model.parameters()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_version_or_shape_is_rejected() {
        let model = CcnnModel::init(CcnnConfig { lattice: 5, ..CcnnConfig::default() }, 1).unwrap();
        let mut ck = Checkpoint::from_model(&model, BTreeMap::new());
        ck.format_version = 99;
        assert!(ck.to_model().is_err());
        let mut ck = Checkpoint::from_model(&model, BTreeMap::new());
        ck.spatial_raw.pop();
        assert!(ck.to_model().is_err());
    }
}
