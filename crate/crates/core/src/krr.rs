//! Kernel ridge regression with an RBF kernel, one model per affect dimension.
//!
//! The kernel is `k(a, b) = exp(-gamma * ||a - b||^2)`. Fitting solves
//! `(K + alpha I) c = y` for the dual coefficients `c` with a dense Cholesky
//! factorization followed by one step of iterative refinement; a prediction
//! is `sum_i c_i k(v, x_i)`. Predictions are not clamped to the lexicon range.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::dot;
use crate::error::{Error, Result};
use crate::lexicon::AffectDimension;

pub const KRR_FORMAT: &str = "affect-krr/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Rbf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrrConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub kernel: Kernel,
}

impl Default for KrrConfig {
    fn default() -> Self {
        KrrConfig {
            alpha: 0.6,
            gamma: 1.0,
            kernel: Kernel::Rbf,
        }
    }
}

impl KrrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Squared Euclidean distance from precomputed squared norms, floored at 0.
#[inline]
fn sq_dist(a: &[f64], a_sq: f64, b: &[f64], b_sq: f64) -> f64 {
    (a_sq + b_sq - 2.0 * dot(a, b)).max(0.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrrModel {
    config: KrrConfig,
    dimension: AffectDimension,
    d: usize,
    /// Row-major `n x d`.
    train_x: Vec<f64>,
    sq_norms: Vec<f64>,
    dual_coef: Vec<f64>,
}

impl KrrModel {
    /// Fit on `rows` (feature vectors) and `targets`.
    pub fn fit<R: AsRef<[f64]>>(
        rows: &[R],
        targets: &[f64],
        config: KrrConfig,
        dimension: AffectDimension,
    ) -> Result<Self> {
        config.validate()?;
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("kernel ridge regression needs at least one training point".into()));
        }
        if targets.len() != n {
            return Err(Error::dimension(n, targets.len(), "number of targets"));
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("training target {t}")));
        }
        let d = rows[0].as_ref().len();
        if d == 0 {
            return Err(Error::Empty("feature vectors have no components".into()));
        }
        let mut train_x = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::dimension(d, r.len(), format!("training row {i}")));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("training row {i}")));
            }
            train_x.extend_from_slice(r);
        }
        let sq_norms: Vec<f64> = train_x.chunks_exact(d).map(|r| dot(r, r)).collect();

        let system = regularized_gram(&train_x, &sq_norms, d, config);
        let chol = system
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?;
        let y = DVector::from_column_slice(targets);
        let mut coef = chol.solve(&y);
        let residual = &y - &system * &coef;
        coef += chol.solve(&residual);

        Ok(KrrModel {
            config,
            dimension,
            d,
            train_x,
            sq_norms,
            dual_coef: coef.iter().copied().collect(),
        })
    }

    pub fn config(&self) -> &KrrConfig {
        &self.config
    }

    pub fn dimension(&self) -> AffectDimension {
        self.dimension
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn n_train(&self) -> usize {
        self.dual_coef.len()
    }

    pub fn dual_coef(&self) -> &[f64] {
        &self.dual_coef
    }

    pub fn train_row(&self, i: usize) -> &[f64] {
        &self.train_x[i * self.d..(i + 1) * self.d]
    }

    pub fn predict(&self, v: &[f64]) -> Result<f64> {
        if v.len() != self.d {
            return Err(Error::dimension(self.d, v.len(), "query vector"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("query vector".into()));
        }
        let v_sq = dot(v, v);
        let gamma = self.config.gamma;
        Ok(self
            .train_x
            .chunks_exact(self.d)
            .zip(&self.sq_norms)
            .zip(&self.dual_coef)
            .map(|((x, &x_sq), c)| c * (-gamma * sq_dist(v, v_sq, x, x_sq)).exp())
            .sum())
    }

    pub fn predict_many<R: AsRef<[f64]> + Sync>(&self, queries: &[R]) -> Result<Vec<f64>> {
        queries.par_iter().map(|q| self.predict(q.as_ref())).collect()
    }

    /// `||(K + alpha I) c - y||` for the stored coefficients, with `K`
    /// rebuilt from the training rows.
    pub fn gram_residual(&self, targets: &[f64]) -> f64 {
        let system = regularized_gram(&self.train_x, &self.sq_norms, self.d, self.config);
        let c = DVector::from_column_slice(&self.dual_coef);
        let y = DVector::from_column_slice(targets);
        (system * c - y).norm()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, &self.to_file())?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let raw: KrrFile = serde_json::from_reader(BufReader::new(file))?;
        Self::from_file(raw)
    }

    fn to_file(&self) -> KrrFile {
        KrrFile {
            format: KRR_FORMAT.to_string(),
            dim_tag: self.dimension,
            alpha: self.config.alpha,
            gamma: self.config.gamma,
            d: self.d,
            train_x: self.train_x.chunks_exact(self.d).map(<[f64]>::to_vec).collect(),
            dual_coef: self.dual_coef.clone(),
        }
    }

    fn from_file(raw: KrrFile) -> Result<Self> {
        if raw.format != KRR_FORMAT {
            return Err(Error::Format(format!("unsupported model format `{}`", raw.format)));
        }
        let config = KrrConfig {
            alpha: raw.alpha,
            gamma: raw.gamma,
            kernel: Kernel::Rbf,
        };
        config.validate()?;
        if raw.train_x.len() != raw.dual_coef.len() || raw.train_x.is_empty() {
            return Err(Error::Format(format!(
                "model has {} training rows and {} coefficients",
                raw.train_x.len(),
                raw.dual_coef.len()
            )));
        }
        let mut train_x = Vec::with_capacity(raw.d * raw.train_x.len());
        for (i, r) in raw.train_x.iter().enumerate() {
            if r.len() != raw.d {
                return Err(Error::dimension(raw.d, r.len(), format!("model training row {i}")));
            }
            train_x.extend_from_slice(r);
        }
        if train_x.iter().chain(&raw.dual_coef).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model file".into()));
        }
        let sq_norms = train_x.chunks_exact(raw.d).map(|r| dot(r, r)).collect();
        Ok(KrrModel {
            config,
            dimension: raw.dim_tag,
            d: raw.d,
            train_x,
            sq_norms,
            dual_coef: raw.dual_coef,
        })
    }
}

fn regularized_gram(train_x: &[f64], sq_norms: &[f64], d: usize, config: KrrConfig) -> DMatrix<f64> {
    let n = sq_norms.len();
    let rows: Vec<&[f64]> = train_x.chunks_exact(d).collect();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|j| {
            let rows = &rows;
            (0..n).map(move |i| {
                if i == j {
                    1.0 + config.alpha
                } else {
                    (-config.gamma * sq_dist(rows[i], sq_norms[i], rows[j], sq_norms[j])).exp()
                }
            })
        })
        .collect();
    // Column-major; the matrix is symmetric so the layout only matters for rounding.
    DMatrix::from_vec(n, n, values)
}

#[derive(Serialize, Deserialize)]
struct KrrFile {
    format: String,
    dim_tag: AffectDimension,
    alpha: f64,
    gamma: f64,
    d: usize,
    #[serde(rename = "train_X")]
    train_x: Vec<Vec<f64>>,
    dual_coef: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: AffectDimension = AffectDimension::Power;

    #[test]
    fn single_point_closed_form() {
        let x = [0.6, 0.8];
        let m = KrrModel::fit(&[x], &[0.8], KrrConfig::default(), P).unwrap();
        assert!((m.dual_coef()[0] - 0.5).abs() < 1e-15);
        assert!((m.predict(&x).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_orthonormal_points_match_hand_solve() {
        // [[1.6, e^-2], [e^-2, 1.6]] c = (1, 0), solved by Cramer's rule.
        let k = (-2.0f64).exp();
        let det = 1.6 * 1.6 - k * k;
        let expected = [1.6 / det, -k / det];
        let m = KrrModel::fit(&[[1.0, 0.0], [0.0, 1.0]], &[1.0, 0.0], KrrConfig::default(), P).unwrap();
        for (c, e) in m.dual_coef().iter().zip(expected) {
            assert!((c - e).abs() < 1e-14, "{c} vs {e}");
        }
        assert!(m.gram_residual(&[1.0, 0.0]) <= 1e-8);
    }

    #[test]
    fn tiny_alpha_interpolates() {
        let rows = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0]];
        let y = [0.1, 0.9, 0.4, 0.7];
        let cfg = KrrConfig {
            alpha: 1e-9,
            ..KrrConfig::default()
        };
        let m = KrrModel::fit(&rows, &y, cfg, P).unwrap();
        for (r, t) in rows.iter().zip(y) {
            assert!((m.predict(r).unwrap() - t).abs() < 1e-4);
        }
    }

    #[test]
    fn far_query_decays_to_zero() {
        let m = KrrModel::fit(&[[1.0, 0.0]], &[0.8], KrrConfig::default(), P).unwrap();
        assert_eq!(m.predict(&[1e6, -1e6]).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let empty: [[f64; 2]; 0] = [];
        assert!(matches!(
            KrrModel::fit(&empty, &[], KrrConfig::default(), P),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            KrrModel::fit(&[vec![1.0, 0.0], vec![1.0]], &[0.0, 1.0], KrrConfig::default(), P),
            Err(Error::DimensionMismatch { .. })
        ));
        let m = KrrModel::fit(&[[1.0, 0.0]], &[0.8], KrrConfig::default(), P).unwrap();
        assert!(matches!(m.predict(&[1.0]), Err(Error::DimensionMismatch { .. })));
        let bad = KrrConfig {
            alpha: 0.0,
            ..KrrConfig::default()
        };
        assert!(KrrModel::fit(&[[1.0]], &[0.0], bad, P).unwrap_err().is_config());
    }

    #[test]
    fn predictions_do_not_clamp() {
        let cfg = KrrConfig {
            alpha: 1e-6,
            ..KrrConfig::default()
        };
        let m = KrrModel::fit(&[[1.0, 0.0], [0.9, 0.1]], &[0.0, 1.0], cfg, P).unwrap();
        let out = m.predict(&[0.8, 0.2]).unwrap();
        assert!(out > 1.0, "expected extrapolation beyond 1, got {out}");
    }

    #[test]
    fn model_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("krr.json");
        let m = KrrModel::fit(
            &[[0.6, 0.8], [1.0, 0.0], [0.0, 1.0]],
            &[0.3, 0.5, 1.0 / 3.0],
            KrrConfig::default(),
            AffectDimension::Agency,
        )
        .unwrap();
        m.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(r#"{"format":"affect-krr/1","dim_tag":"agency","alpha":0.6,"gamma":1.0,"d":2,"train_X":[[0.6,0.8]"#));
        let back = KrrModel::load(&path).unwrap();
        assert_eq!(back, m);
    }
}
