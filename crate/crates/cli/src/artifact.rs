//! Versioned binary model container.
//!
//! Layout: 8 magic bytes, a little-endian `u64` header length, a JSON header
//! with shapes and integer data, then every floating-point array as
//! little-endian `f64` in the order the header lists them. Floats never pass
//! through text, so a loaded model predicts bit-for-bit like the saved one.

use crate::config::Mode;
use crate::data::Standardization;
use crate::error::{CliError, Result};
use gp_grief::basis::{Eigenfunctions, GridInducing};
use gp_grief::exact::SeArdHypers;
use gp_grief::inference::{predict_type1, SampleSet};
use gp_grief::model::{predict, Gram, ModelState, Prediction, SuffStats, Transform};
use gp_grief::tensor::Selection;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"GPGRIEF\0";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to predict: basis, statistics, fitted parameters and
/// optional posterior draws, plus the data scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub mode: Mode,
    /// Base kernel hyperparameters and the noise they were fitted with.
    pub hypers: SeArdHypers,
    pub functions: Eigenfunctions,
    pub transform: Option<Transform>,
    pub stats: SuffStats,
    pub state: ModelState,
    pub samples: Option<SampleSet>,
    pub standardization: Standardization,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl ModelArtifact {
    pub fn d(&self) -> usize {
        self.standardization.d()
    }

    /// Predictive mean and variance of the noisy target, in original units.
    /// Uses the posterior mixture when draws are present.
    pub fn predict(&self, x_raw: &DMatrix<f64>) -> Result<Prediction> {
        let x = self.standardization.transform_x(x_raw);
        let pred = match &self.samples {
            Some(s) => predict_type1(&self.functions, self.transform.as_ref(), &self.stats, s, &x)?,
            None => predict(&self.functions, self.transform.as_ref(), &self.stats, &self.state, &x)?,
        };
        Ok(Prediction {
            mean: self.standardization.inverse_y(&pred.mean),
            var: self.standardization.inverse_var(&pred.var),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| CliError::Format {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.state.mu.is_some() || self.state.w_dense.is_some() {
            return Err(CliError::Usage(
                "models with a weight mean or dense weight covariance cannot be saved".into(),
            ));
        }
        let mut arrays = Arrays::default();
        let grid = self.functions.grid();
        arrays.push("lengthscales", &self.hypers.lengthscales);
        arrays.push("variance", &[self.hypers.variance]);
        arrays.push("hyper_sigma2", &[self.hypers.sigma2]);
        for (i, axis) in grid.axes().iter().enumerate() {
            arrays.push(&format!("axis{i}"), axis);
        }
        arrays.push("log_lambda", self.functions.selection().log_values());
        for (i, c) in self.functions.columns().iter().enumerate() {
            arrays.push(&format!("columns{i}"), c.as_slice());
        }
        if let Some(t) = &self.transform {
            arrays.push("transform_v", t.v.as_slice());
            arrays.push("transform_sigma", t.sigma.as_slice());
        }
        arrays.push("yty", &[self.stats.yty]);
        arrays.push("r", self.stats.r.as_slice());
        if let Gram::Dense(a) = &self.stats.gram {
            arrays.push("gram", a.as_slice());
        }
        arrays.push("w", self.state.w.as_slice());
        arrays.push("sigma2", &[self.state.sigma2]);
        if let Some(s) = &self.samples {
            let w: Vec<f64> = s.draws.iter().flat_map(|d| d.w.iter().copied()).collect();
            let s2: Vec<f64> = s.draws.iter().map(|d| d.sigma2).collect();
            arrays.push("draws_w", &w);
            arrays.push("draws_sigma2", &s2);
            arrays.push("acceptance_rate", &[s.acceptance_rate]);
            arrays.push("step_size", &[s.step_size]);
            arrays.push("log_posterior_trace", &s.log_posterior_trace);
        }
        let st = &self.standardization;
        arrays.push("x_mean", &st.x_mean);
        arrays.push("x_scale", &st.x_scale);
        arrays.push("y_mean", &[st.y_mean]);
        arrays.push("y_scale", &[st.y_scale]);

        let header = Header {
            format_version: FORMAT_VERSION,
            mode: self.mode,
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            constant_dims: grid.constant_dims().to_vec(),
            selection: self.functions.selection().tuples().map(<[usize]>::to_vec).collect(),
            column_counts: self.functions.columns().iter().map(DMatrix::ncols).collect(),
            transform_rank: self.transform.as_ref().map(Transform::effective_p),
            gram: match self.stats.gram {
                Gram::Dense(_) => GramKind::Dense,
                Gram::Identity(_) => GramKind::Identity,
            },
            n: self.stats.n,
            p: self.stats.p(),
            draws: self.samples.as_ref().map(|s| s.draws.len()),
            arrays: arrays.specs,
        };
        let json = serde_json::to_vec(&header).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * arrays.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &arrays.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err("not a gp-grief model file".into());
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body_start = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or("truncated header")?;
        let header: Header =
            serde_json::from_slice(&bytes[16..body_start]).map_err(|e| format!("bad header: {e}"))?;
        if header.format_version != FORMAT_VERSION {
            return Err(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                header.format_version
            ));
        }
        let body = &bytes[body_start..];
        let total: usize = header.arrays.iter().map(|a| a.len).sum();
        if body.len() != 8 * total {
            return Err(format!("expected {} bytes of array data, found {}", 8 * total, body.len()));
        }
        let mut arrays = HashMap::new();
        let mut offset = 0;
        for spec in &header.arrays {
            let values: Vec<f64> = body[offset..offset + 8 * spec.len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            offset += 8 * spec.len;
            arrays.insert(spec.name.clone(), values);
        }
        let mut take = |name: &str, len: Option<usize>| -> std::result::Result<Vec<f64>, String> {
            let v = arrays.remove(name).ok_or_else(|| format!("missing array '{name}'"))?;
            match len {
                Some(l) if l != v.len() => Err(format!("array '{name}' has {} values, expected {l}", v.len())),
                _ => Ok(v),
            }
        };
        let scalar = |v: Vec<f64>| v[0];

        let d = header.feature_names.len();
        let p = header.p;
        let err = |e: gp_grief::GriefError| e.to_string();
        let hypers = SeArdHypers {
            lengthscales: take("lengthscales", Some(d))?,
            variance: scalar(take("variance", Some(1))?),
            sigma2: scalar(take("hyper_sigma2", Some(1))?),
        };
        let axes = (0..d)
            .map(|i| take(&format!("axis{i}"), None))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let sizes: Vec<usize> = axes.iter().map(Vec::len).collect();
        let grid = GridInducing::new(axes)
            .and_then(|g| g.with_constant_dims(header.constant_dims.clone()))
            .map_err(err)?;
        let log_lambda = take("log_lambda", Some(header.selection.len()))?;
        let selection = Selection::new(header.selection.clone(), log_lambda).map_err(err)?;
        if header.column_counts.len() != d {
            return Err("column counts do not match the dimensionality".into());
        }
        let mut columns = Vec::with_capacity(d);
        for (i, &c) in header.column_counts.iter().enumerate() {
            let data = take(&format!("columns{i}"), Some(sizes[i] * c))?;
            columns.push(DMatrix::from_vec(sizes[i], c, data));
        }
        let kernel = hypers.kernel().map_err(err)?;
        let functions = Eigenfunctions::from_parts(grid, kernel, selection, columns).map_err(err)?;
        let transform = match header.transform_rank {
            Some(k) => {
                let basis_p = functions.p();
                Some(Transform {
                    v: DMatrix::from_vec(basis_p, k, take("transform_v", Some(basis_p * k))?),
                    sigma: DVector::from_vec(take("transform_sigma", Some(k))?),
                })
            }
            None => None,
        };
        let yty = scalar(take("yty", Some(1))?);
        let r = DVector::from_vec(take("r", Some(p))?);
        let gram = match header.gram {
            GramKind::Dense => Gram::Dense(DMatrix::from_vec(p, p, take("gram", Some(p * p))?)),
            GramKind::Identity => Gram::Identity(p),
        };
        let stats = SuffStats {
            yty,
            r,
            gram,
            n: header.n,
        };
        let state = ModelState::new(
            DVector::from_vec(take("w", Some(p))?),
            scalar(take("sigma2", Some(1))?),
        )
        .map_err(err)?;
        let samples = match header.draws {
            Some(k) => {
                let w = take("draws_w", Some(k * p))?;
                let s2 = take("draws_sigma2", Some(k))?;
                let draws = (0..k)
                    .map(|j| ModelState::new(DVector::from_column_slice(&w[j * p..(j + 1) * p]), s2[j]))
                    .collect::<gp_grief::Result<Vec<_>>>()
                    .map_err(err)?;
                Some(SampleSet {
                    draws,
                    acceptance_rate: scalar(take("acceptance_rate", Some(1))?),
                    step_size: scalar(take("step_size", Some(1))?),
                    log_posterior_trace: take("log_posterior_trace", None)?,
                })
            }
            None => None,
        };
        let standardization = Standardization {
            x_mean: take("x_mean", Some(d))?,
            x_scale: take("x_scale", Some(d))?,
            y_mean: scalar(take("y_mean", Some(1))?),
            y_scale: scalar(take("y_scale", Some(1))?),
        };
        Ok(Self {
            mode: header.mode,
            hypers,
            functions,
            transform,
            stats,
            state,
            samples,
            standardization,
            feature_names: header.feature_names,
            target_name: header.target_name,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum GramKind {
    Dense,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    mode: Mode,
    feature_names: Vec<String>,
    target_name: String,
    constant_dims: Vec<usize>,
    selection: Vec<Vec<usize>>,
    column_counts: Vec<usize>,
    transform_rank: Option<usize>,
    gram: GramKind,
    n: usize,
    p: usize,
    draws: Option<usize>,
    arrays: Vec<ArraySpec>,
}

#[derive(Default)]
struct Arrays {
    specs: Vec<ArraySpec>,
    data: Vec<f64>,
}

impl Arrays {
    fn push(&mut self, name: &str, values: &[f64]) {
        self.specs.push(ArraySpec {
            name: name.to_string(),
            len: values.len(),
        });
        self.data.extend_from_slice(values);
    }
}
