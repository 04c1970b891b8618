//! Versioned on-disk persistence for trained models.
//!
//! The state file is a single JSON document carrying the feature and
//! estimator configuration next to the fitted model and its sufficient
//! statistics, so a loaded model can keep learning from where it stopped.
//! Floats survive the JSON round trip bit-exactly (shortest-representation
//! printing), which the tests pin down.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EmOptions, ModelState, SufficientStats};
use crate::features::FeatureConfig;

/// Current state-file schema version.
pub const STATE_FORMAT_VERSION: u32 = 1;

/// A trained model plus everything needed to keep using it: the feature
/// recipe that produced its regressors and the estimator options it was
/// fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub consumer_id: String,
    pub features: FeatureConfig,
    pub em: EmOptions,
    pub state: ModelState,
}

#[derive(Serialize, Deserialize)]
struct StateDoc {
    version: u32,
    consumer_id: String,
    features: FeatureConfig,
    em: EmOptions,
    model: ModelDoc,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    theta: Vec<f64>,
    z_hat: Vec<f64>,
    d: Vec<f64>,
    sigma2: f64,
    active: Vec<bool>,
    /// Lower triangle (row-major) of the posterior covariance restricted to
    /// live components, in ascending index order.
    p_live: Vec<f64>,
    stats: StatsDoc,
}

#[derive(Serialize, Deserialize)]
struct StatsDoc {
    n: f64,
    lambda: f64,
    s_yy: f64,
    s_py: Vec<f64>,
    s_gy: Vec<f64>,
    /// Lower triangles, row-major.
    s_pp: Vec<f64>,
    s_gg: Vec<f64>,
    /// Full `K x p` block, row-major.
    s_gp: Vec<f64>,
}

fn pack_lower(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * (m.nrows() + 1) / 2);
    for i in 0..m.nrows() {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn unpack_lower(v: &[f64], dim: usize, what: &str) -> Result<DMatrix<f64>> {
    if v.len() != dim * (dim + 1) / 2 {
        return Err(Error::StateFormat {
            message: format!("{what}: expected {} packed entries, found {}", dim * (dim + 1) / 2, v.len()),
        });
    }
    let mut m = DMatrix::zeros(dim, dim);
    let mut it = v.iter();
    for i in 0..dim {
        for j in 0..=i {
            let x = *it.next().unwrap();
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
    }
    Ok(m)
}

fn pack_full(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn unpack_full(v: &[f64], rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::StateFormat {
            message: format!("{what}: expected {} entries, found {}", rows * cols, v.len()),
        });
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

fn live_indices(state: &ModelState) -> Vec<usize> {
    (0..state.d.len()).filter(|&k| state.active[k] && state.d[k] > 0.0).collect()
}

/// Serializes a model to the JSON state document.
pub fn state_to_json(saved: &SavedModel) -> Result<String> {
    let state = &saved.state;
    let live = live_indices(state);
    let p_live_mat = DMatrix::from_fn(live.len(), live.len(), |i, j| state.p_cov[(live[i], live[j])]);
    let doc = StateDoc {
        version: STATE_FORMAT_VERSION,
        consumer_id: saved.consumer_id.clone(),
        features: saved.features.clone(),
        em: saved.em,
        model: ModelDoc {
            theta: state.theta.iter().copied().collect(),
            z_hat: state.z_hat.iter().copied().collect(),
            d: state.d.iter().copied().collect(),
            sigma2: state.sigma2,
            active: state.active.clone(),
            p_live: pack_lower(&p_live_mat),
            stats: StatsDoc {
                n: state.stats.n,
                lambda: state.stats.lambda,
                s_yy: state.stats.s_yy,
                s_py: state.stats.s_py.iter().copied().collect(),
                s_gy: state.stats.s_gy.iter().copied().collect(),
                s_pp: pack_lower(&state.stats.s_pp),
                s_gg: pack_lower(&state.stats.s_gg),
                s_gp: pack_full(&state.stats.s_gp),
            },
        },
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::StateFormat { message: e.to_string() })
}

/// Parses a JSON state document, checking version and dimensional
/// consistency against the embedded feature configuration.
pub fn state_from_json(json: &str) -> Result<SavedModel> {
    let doc: StateDoc =
        serde_json::from_str(json).map_err(|e| Error::StateFormat { message: e.to_string() })?;
    if doc.version != STATE_FORMAT_VERSION {
        return Err(Error::StateVersion { found: doc.version, expected: STATE_FORMAT_VERSION });
    }
    doc.features.nominal.validate()?;
    doc.features.latent.validate()?;
    doc.em.validate()?;
    let p = doc.features.nominal.n_phi();
    let k = doc.features.latent.n_gamma();
    let m = &doc.model;
    if m.theta.len() != p || m.z_hat.len() != k || m.d.len() != k || m.active.len() != k {
        return Err(Error::StateFormat {
            message: format!(
                "model dimensions ({}, {}) disagree with feature configuration ({p}, {k})",
                m.theta.len(),
                m.z_hat.len()
            ),
        });
    }
    if !(m.sigma2.is_finite() && m.sigma2 > 0.0) {
        return Err(Error::StateFormat { message: format!("sigma2 must be positive, got {}", m.sigma2) });
    }

    let mut stats = SufficientStats::new(p, k, m.stats.lambda)?;
    stats.n = m.stats.n;
    stats.s_yy = m.stats.s_yy;
    if m.stats.s_py.len() != p || m.stats.s_gy.len() != k {
        return Err(Error::StateFormat { message: "statistics vector lengths disagree".into() });
    }
    stats.s_py = DVector::from_row_slice(&m.stats.s_py);
    stats.s_gy = DVector::from_row_slice(&m.stats.s_gy);
    stats.s_pp = unpack_lower(&m.stats.s_pp, p, "s_pp")?;
    stats.s_gg = unpack_lower(&m.stats.s_gg, k, "s_gg")?;
    stats.s_gp = unpack_full(&m.stats.s_gp, k, p, "s_gp")?;

    let mut state = ModelState::new(p, k, m.stats.lambda)?;
    state.theta = DVector::from_row_slice(&m.theta);
    state.z_hat = DVector::from_row_slice(&m.z_hat);
    state.d = DVector::from_row_slice(&m.d);
    state.sigma2 = m.sigma2;
    state.active = m.active.clone();
    state.stats = stats;

    let live = live_indices(&state);
    let p_live_mat = unpack_lower(&m.p_live, live.len(), "p_live")?;
    state.p_cov.fill(0.0);
    for (a, &ka) in live.iter().enumerate() {
        for (b, &kb) in live.iter().enumerate() {
            state.p_cov[(ka, kb)] = p_live_mat[(a, b)];
        }
    }

    Ok(SavedModel {
        consumer_id: doc.consumer_id,
        features: doc.features,
        em: doc.em,
        state,
    })
}

/// Writes the state document to a file.
pub fn save_state(path: &Path, saved: &SavedModel) -> Result<()> {
    let json = state_to_json(saved)?;
    std::fs::write(path, json).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads a state document from a file.
pub fn load_state(path: &Path) -> Result<SavedModel> {
    let json = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    state_from_json(&json)
}
