//! Streaming sufficient statistics for the hybrid linear model.
//!
//! Everything the estimator needs from the data is a handful of Gram
//! matrices and cross products, updated per sample with a rank-one
//! contribution after exponential discounting by the forgetting factor.
//! With forgetting factor 1 the accumulation is lossless: streaming the
//! samples one at a time reproduces the batch statistics exactly (up to
//! floating-point associativity).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Discounted second-order statistics of `(phi, gamma, y)` samples.
///
/// Field names follow the regressor blocks: `s_pp = sum phi phi'`,
/// `s_gg = sum gamma gamma'`, `s_gp = sum gamma phi'`, `s_py = sum phi y`,
/// `s_gy = sum gamma y`, `s_yy = sum y^2`, each sum discounted by `lambda`
/// per step. `n` is the discounted sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub n: f64,
    pub lambda: f64,
    pub s_pp: DMatrix<f64>,
    pub s_gg: DMatrix<f64>,
    pub s_gp: DMatrix<f64>,
    pub s_py: DVector<f64>,
    pub s_gy: DVector<f64>,
    pub s_yy: f64,
}

impl SufficientStats {
    /// Empty statistics for regressor dimensions `n_phi` and `n_gamma`.
    pub fn new(n_phi: usize, n_gamma: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidConfig {
                message: format!("forgetting factor must lie in (0, 1], got {lambda}"),
            });
        }
        Ok(Self {
            n: 0.0,
            lambda,
            s_pp: DMatrix::zeros(n_phi, n_phi),
            s_gg: DMatrix::zeros(n_gamma, n_gamma),
            s_gp: DMatrix::zeros(n_gamma, n_phi),
            s_py: DVector::zeros(n_phi),
            s_gy: DVector::zeros(n_gamma),
            s_yy: 0.0,
        })
    }

    /// Length of `phi`.
    pub fn n_phi(&self) -> usize {
        self.s_pp.nrows()
    }

    /// Length of `gamma`.
    pub fn n_gamma(&self) -> usize {
        self.s_gg.nrows()
    }

    /// Discounts every statistic by `lambda` and adds the rank-one
    /// contribution of one sample; `n <- lambda * n + 1`.
    pub fn update(&mut self, phi: &DVector<f64>, gamma: &DVector<f64>, y: f64) -> Result<()> {
        if phi.len() != self.n_phi() || gamma.len() != self.n_gamma() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "stats update: phi {} (expected {}), gamma {} (expected {})",
                    phi.len(),
                    self.n_phi(),
                    gamma.len(),
                    self.n_gamma()
                ),
            });
        }
        if !y.is_finite() || phi.iter().any(|v| !v.is_finite()) || gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "stats update input".into() });
        }
        let lambda = self.lambda;
        self.s_pp.ger(1.0, phi, phi, lambda);
        if self.n_gamma() > 0 {
            self.s_gg.ger(1.0, gamma, gamma, lambda);
            self.s_gp.ger(1.0, gamma, phi, lambda);
            self.s_gy.axpy(y, gamma, lambda);
        }
        self.s_py.axpy(y, phi, lambda);
        self.s_yy = lambda * self.s_yy + y * y;
        self.n = lambda * self.n + 1.0;
        Ok(())
    }

    /// Accumulates every sample of an iterator; convenience for batch fits.
    pub fn accumulate<'a, I>(&mut self, samples: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a DVector<f64>, &'a DVector<f64>, f64)>,
    {
        for (phi, gamma, y) in samples {
            self.update(phi, gamma, y)?;
        }
        Ok(())
    }
}
