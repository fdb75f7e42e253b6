//! Versioned JSON weight documents.
//!
//! ```json
//! {"format_version":1,"model_type":"player_model","meta":{...},
//!  "layers":[{"name":"in.w","shape":[64,16],"values":[...]}]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::Matrix;
use super::layers::ParamSet;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub format_version: u32,
    pub model_type: String,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub layers: Vec<LayerRecord>,
}

impl WeightFile {
    pub fn from_params(model_type: &str, meta: serde_json::Value, params: &ParamSet) -> Result<Self> {
        let layers = params
            .iter()
            .map(|(name, m)| {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("parameter `{name}`")));
                }
                Ok(LayerRecord {
                    name: name.to_string(),
                    shape: [m.nrows(), m.ncols()],
                    values: m.iter().copied().collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            format_version: FORMAT_VERSION,
            model_type: model_type.to_string(),
            meta,
            layers,
        })
    }

    pub fn to_params(&self, expected_type: &str) -> Result<ParamSet> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.model_type != expected_type {
            return Err(Error::Format(format!(
                "expected model_type `{}`, found `{}`",
                expected_type, self.model_type
            )));
        }
        let mut params = ParamSet::new();
        for layer in &self.layers {
            let [r, c] = layer.shape;
            let m = Matrix::from_shape_vec((r, c), layer.values.clone()).map_err(|_| {
                Error::Format(format!(
                    "layer `{}` has {} values for shape {:?}",
                    layer.name,
                    layer.values.len(),
                    layer.shape
                ))
            })?;
            params.push(layer.name.clone(), m);
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
