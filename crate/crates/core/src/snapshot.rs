//! Parameter snapshots.
//!
//! A snapshot is a JSON document holding named arrays, named scalars and
//! string tags:
//!
//! ```json
//! {
//!   "format": "voteagg-snapshot",
//!   "version": 1,
//!   "kind": "rbm",
//!   "tags": { "visible_kind": "gaussian", "hidden_kind": "softmax" },
//!   "scalars": { "sigma": 1.0 },
//!   "arrays": {
//!     "W": { "shape": [L, K], "data": [ ... row-major ... ] },
//!     "c": { "shape": [L], "data": [ ... ] },
//!     "b": { "shape": [K], "data": [ ... ] }
//!   }
//! }
//! ```
//!
//! RBM snapshots (`kind = "rbm"`) carry arrays `W`, `c`, `b`, scalar `sigma`
//! and tags `visible_kind`, `hidden_kind`. Mixture snapshots (`kind = "gmm"`)
//! carry arrays `means` (`[M, L]`) and `weights` (`[M]`) and scalar `sigma`.
//! Floats are written with shortest round-trip formatting, so reading a
//! snapshot back reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::SphericalGmm;
use crate::rbm::RbmParams;

pub const FORMAT: &str = "voteagg-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub kind: String,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
    #[serde(default)]
    pub scalars: BTreeMap<String, f64>,
    #[serde(default)]
    pub arrays: BTreeMap<String, NamedArray>,
}

/// Parameters that can live in a snapshot.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Rbm(RbmParams),
    Gmm(SphericalGmm),
}

impl Snapshot {
    fn new(kind: &str) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            kind: kind.into(),
            tags: BTreeMap::new(),
            scalars: BTreeMap::new(),
            arrays: BTreeMap::new(),
        }
    }

    fn put_matrix(&mut self, name: &str, m: &Array2<f64>) {
        self.arrays.insert(
            name.into(),
            NamedArray {
                shape: vec![m.nrows(), m.ncols()],
                data: m.iter().copied().collect(),
            },
        );
    }

    fn put_vector(&mut self, name: &str, v: &Array1<f64>) {
        self.arrays.insert(
            name.into(),
            NamedArray {
                shape: vec![v.len()],
                data: v.to_vec(),
            },
        );
    }

    fn array(&self, name: &str) -> Result<&NamedArray> {
        let a = self
            .arrays
            .get(name)
            .ok_or_else(|| Error::Snapshot(format!("missing array `{name}`")))?;
        if a.shape.iter().product::<usize>() != a.data.len() {
            return Err(Error::Snapshot(format!(
                "array `{name}` has shape {:?} but {} values",
                a.shape,
                a.data.len()
            )));
        }
        Ok(a)
    }

    fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        let a = self.array(name)?;
        match a.shape.as_slice() {
            &[r, c] => Ok(Array2::from_shape_vec((r, c), a.data.clone()).expect("checked length")),
            other => Err(Error::Snapshot(format!("array `{name}` must be 2-D, got {other:?}"))),
        }
    }

    fn vector(&self, name: &str) -> Result<Array1<f64>> {
        let a = self.array(name)?;
        if a.shape.len() != 1 {
            return Err(Error::Snapshot(format!("array `{name}` must be 1-D, got {:?}", a.shape)));
        }
        Ok(Array1::from(a.data.clone()))
    }

    fn scalar(&self, name: &str) -> Result<f64> {
        self.scalars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Snapshot(format!("missing scalar `{name}`")))
    }

    fn tag(&self, name: &str) -> Result<&str> {
        self.tags
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::Snapshot(format!("missing tag `{name}`")))
    }

    pub fn from_model(model: &Model) -> Self {
        match model {
            Model::Rbm(p) => {
                let mut s = Snapshot::new("rbm");
                s.put_matrix("W", &p.weights);
                s.put_vector("c", &p.visible_bias);
                s.put_vector("b", &p.hidden_bias);
                s.scalars.insert("sigma".into(), p.sigma);
                s.tags.insert("visible_kind".into(), p.visible_kind.to_string());
                s.tags.insert("hidden_kind".into(), p.hidden_kind.to_string());
                s
            }
            Model::Gmm(g) => {
                let mut s = Snapshot::new("gmm");
                s.put_matrix("means", &g.means);
                s.put_vector("weights", &g.weights);
                s.scalars.insert("sigma".into(), g.sigma);
                s
            }
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        if self.format != FORMAT {
            return Err(Error::Snapshot(format!("unknown format `{}`", self.format)));
        }
        if self.version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {}", self.version)));
        }
        match self.kind.as_str() {
            "rbm" => Ok(Model::Rbm(RbmParams::new(
                self.matrix("W")?,
                self.vector("c")?,
                self.vector("b")?,
                self.scalar("sigma")?,
                self.tag("visible_kind")?.parse()?,
                self.tag("hidden_kind")?.parse()?,
            )?)),
            "gmm" => Ok(Model::Gmm(SphericalGmm::new(
                self.matrix("means")?,
                self.scalar("sigma")?,
                self.vector("weights")?,
            )?)),
            other => Err(Error::Snapshot(format!("unknown kind `{other}`"))),
        }
    }
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&Snapshot::from_model(model))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let snap: Snapshot = serde_json::from_str(&text)?;
    snap.to_model()
}
