//! JSON interchange formats for graphs and models, and atomic file output.

use std::fs;
use std::io::Write;
use std::path::Path;

use cfbanzhaf_core::gcn::{GcnModel, Layer};
use cfbanzhaf_core::graph::LabeledGraph;
use cfbanzhaf_core::matrix::Matrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Edges are listed in canonical order: `u < v`, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub motif_nodes: Vec<usize>,
}

impl From<&LabeledGraph> for GraphFile {
    fn from(g: &LabeledGraph) -> Self {
        Self {
            n: g.n(),
            edges: g.edges().iter().map(|e| [e.u, e.v]).collect(),
            features: g.features().to_rows(),
            labels: g.labels().to_vec(),
            motif_nodes: g.motif_nodes().to_vec(),
        }
    }
}

impl TryFrom<GraphFile> for LabeledGraph {
    type Error = HarnessError;

    fn try_from(f: GraphFile) -> Result<Self> {
        let features = if f.features.is_empty() {
            Matrix::zeros(0, 0)
        } else {
            Matrix::from_rows(&f.features)
                .ok_or_else(|| HarnessError::Config("feature rows have unequal lengths".into()))?
        };
        Ok(LabeledGraph::new(
            f.n,
            f.edges.iter().map(|&[u, v]| (u, v)),
            features,
            f.labels,
            f.motif_nodes,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Row-major `input_dim × output_dim`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    /// `[input, hidden..., classes]`.
    pub dims: Vec<usize>,
    pub layers: Vec<LayerFile>,
}

impl From<&GcnModel> for ModelFile {
    fn from(m: &GcnModel) -> Self {
        let mut dims = vec![m.input_dim()];
        dims.extend(m.layers().iter().map(Layer::output_dim));
        let layers = m
            .layers()
            .iter()
            .map(|l| LayerFile {
                input_dim: l.input_dim(),
                output_dim: l.output_dim(),
                weight: l.weight.as_slice().to_vec(),
                bias: l.bias.clone(),
            })
            .collect();
        Self { dims, layers }
    }
}

impl TryFrom<ModelFile> for GcnModel {
    type Error = HarnessError;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.dims.len() != f.layers.len() + 1 {
            return Err(HarnessError::Config(format!(
                "{} dims for {} layers",
                f.dims.len(),
                f.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(f.layers.len());
        for (i, l) in f.layers.into_iter().enumerate() {
            if (l.input_dim, l.output_dim) != (f.dims[i], f.dims[i + 1]) {
                return Err(HarnessError::Config(format!("layer {i} disagrees with dims")));
            }
            let weight = Matrix::from_vec(l.input_dim, l.output_dim, l.weight)
                .ok_or_else(|| HarnessError::Config(format!("layer {i}: weight length")))?;
            layers.push(Layer { weight, bias: l.bias });
        }
        Ok(GcnModel::new(layers)?)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_graph(path: &Path) -> Result<LabeledGraph> {
    read_json::<GraphFile>(path)?.try_into()
}

pub fn load_model(path: &Path) -> Result<GcnModel> {
    read_json::<ModelFile>(path)?.try_into()
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes via a sibling temporary file and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| HarnessError::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        HarnessError::io(path, e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use cfbanzhaf_core::datasets::{generate, DatasetKind, DatasetSpec};
    use rand::SeedableRng;

    #[test]
    fn graph_round_trips() {
        let g = generate(&DatasetSpec::defaults(DatasetKind::TreeCycles, 3)).unwrap();
        let text = serde_json::to_string(&GraphFile::from(&g)).unwrap();
        let back: LabeledGraph = serde_json::from_str::<GraphFile>(&text).unwrap().try_into().unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn model_round_trips_bit_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = GcnModel::glorot(&[10, 20, 20, 2], &mut rng).unwrap();
        let text = serde_json::to_string(&ModelFile::from(&m)).unwrap();
        let back: GcnModel = serde_json::from_str::<ModelFile>(&text).unwrap().try_into().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_inconsistent_model() {
        let mut f = ModelFile::from(&GcnModel::zeros(&[3, 2]).unwrap());
        f.layers[0].weight.pop();
        assert!(GcnModel::try_from(f.clone()).is_err());
        f.dims.push(4);
        assert!(GcnModel::try_from(f).is_err());
    }

    #[test]
    fn rejects_noncanonical_duplicates() {
        let f = GraphFile {
            n: 3,
            edges: vec![[0, 1], [1, 0]],
            features: vec![vec![1.0]; 3],
            labels: vec![0; 3],
            motif_nodes: vec![],
        };
        assert!(LabeledGraph::try_from(f).is_err());
    }
}
