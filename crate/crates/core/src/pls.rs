//! Single-response partial least squares (PLS1) with deflation of both X and y.
//!
//! Inputs are centered and scaled column-wise, the target is centered. For
//! component `k` on the deflated pair `(X_d, y_d)`:
//!
//! ```text
//! w_k = X_d' y_d / |X_d' y_d|      t_k = X_d w_k
//! p_k = X_d' t_k / (t_k' t_k)      q_k = y_d' t_k / (t_k' t_k)
//! X_d <- X_d - t_k p_k'            y_d <- y_d - q_k t_k
//! ```
//!
//! and scores for new data use the rotated weights `W* = W (P'W)^-1`, so
//! `T = X_s W*` with `X_s` standardized by the training moments.

use log::warn;
use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_moments, invert};
use crate::preprocess::STD_FLOOR;

pub const PLS_FORMAT: u32 = 1;

/// Latent scores, one row per sample and one column per component.
pub type LatentMatrix = Array2<f64>;

/// A fitted PLS1 model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsModel {
    /// `D x K` unit-norm weight vectors.
    pub w: Array2<f64>,
    /// `D x K` input loadings.
    pub p: Array2<f64>,
    /// Output loadings.
    pub q: Array1<f64>,
    /// `D x K` rotated weights mapping standardized inputs to scores.
    pub w_star: Array2<f64>,
    pub x_mean: Array1<f64>,
    pub x_std: Array1<f64>,
    pub y_mean: f64,
    /// Set when fewer components than requested could be extracted.
    pub truncated: bool,
}

impl PlsModel {
    pub fn n_components(&self) -> usize {
        self.q.len()
    }

    pub fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    fn standardize(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        let mut z = x.clone();
        for mut row in z.rows_mut() {
            row -= &self.x_mean;
            row /= &self.x_std;
        }
        Ok(z)
    }

    /// Latent scores `T = ((X - mean) / std) W*`.
    pub fn transform(&self, x: &Array2<f64>) -> Result<LatentMatrix> {
        Ok(self.standardize(x)?.dot(&self.w_star))
    }

    /// Predicted exposure length `T q + y_mean`.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        self.predict_prefix(x, self.n_components())
    }

    /// Prediction using only the first `k` components.
    ///
    /// Components are nested, so this equals the prediction of a model
    /// fitted with `k` components on the same data.
    pub fn predict_prefix(&self, x: &Array2<f64>, k: usize) -> Result<Array1<f64>> {
        let k = k.min(self.n_components());
        let t = self.standardize(x)?.dot(&self.w_star.slice(s![.., ..k]));
        Ok(t.dot(&self.q.slice(s![..k])) + self.y_mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PlsModelJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: PlsModelJson = serde_json::from_str(text)?;
        j.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct PlsModelJson {
    pls_format: u32,
    n_components: usize,
    n_features: usize,
    truncated: bool,
    y_mean: f64,
    x_mean: Vec<f64>,
    x_std: Vec<f64>,
    q: Vec<f64>,
    w: Vec<Vec<f64>>,
    p: Vec<Vec<f64>>,
    w_star: Vec<Vec<f64>>,
}

fn nested(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn unnest(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<Array2<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidConfig(format!("pls model field {what} has the wrong shape")));
    }
    Ok(Array2::from_shape_fn((nrows, ncols), |(i, j)| rows[i][j]))
}

impl From<&PlsModel> for PlsModelJson {
    fn from(m: &PlsModel) -> Self {
        PlsModelJson {
            pls_format: PLS_FORMAT,
            n_components: m.n_components(),
            n_features: m.n_features(),
            truncated: m.truncated,
            y_mean: m.y_mean,
            x_mean: m.x_mean.to_vec(),
            x_std: m.x_std.to_vec(),
            q: m.q.to_vec(),
            w: nested(&m.w),
            p: nested(&m.p),
            w_star: nested(&m.w_star),
        }
    }
}

impl TryFrom<PlsModelJson> for PlsModel {
    type Error = Error;

    fn try_from(j: PlsModelJson) -> Result<Self> {
        if j.pls_format != PLS_FORMAT {
            return Err(Error::InvalidConfig(format!("unsupported pls_format {}", j.pls_format)));
        }
        let (d, k) = (j.n_features, j.n_components);
        if j.x_mean.len() != d || j.x_std.len() != d || j.q.len() != k {
            return Err(Error::InvalidConfig("pls model vectors have the wrong length".into()));
        }
        Ok(PlsModel {
            w: unnest(&j.w, d, k, "w")?,
            p: unnest(&j.p, d, k, "p")?,
            w_star: unnest(&j.w_star, d, k, "w_star")?,
            q: Array1::from(j.q),
            x_mean: Array1::from(j.x_mean),
            x_std: Array1::from(j.x_std),
            y_mean: j.y_mean,
            truncated: j.truncated,
        })
    }
}

/// Fits a PLS1 model with up to `n_components` components.
pub fn fit_pls(x: &Array2<f64>, y: &Array1<f64>, n_components: usize) -> Result<PlsModel> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("PLS needs at least 2 rows, got {n}")));
    }
    if n_components == 0 || n_components > d.min(n - 1) {
        return Err(Error::InvalidConfig(format!(
            "n_components must lie in 1..={}, got {n_components}",
            d.min(n - 1)
        )));
    }
    let y_mean = y.sum() / n as f64;
    let y_scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if y.iter().all(|v| (v - y_mean).abs() <= 1e-12 * y_scale) {
        return Err(Error::DegenerateTarget);
    }

    let (x_mean, x_std) = column_moments(x);
    let x_std = x_std.mapv(|s| s.max(STD_FLOOR));
    let mut xd = x.clone();
    for mut row in xd.rows_mut() {
        row -= &x_mean;
        row /= &x_std;
    }
    let mut yd = y - y_mean;

    let mut ws: Vec<Array1<f64>> = Vec::with_capacity(n_components);
    let mut ps: Vec<Array1<f64>> = Vec::with_capacity(n_components);
    let mut qs: Vec<f64> = Vec::with_capacity(n_components);
    let mut initial_norm = 0.0;
    let mut truncated = false;

    for k in 0..n_components {
        let c = xd.t().dot(&yd);
        let c_norm = c.dot(&c).sqrt();
        if k == 0 {
            initial_norm = c_norm;
        }
        if !(c_norm > 1e-12 * initial_norm) || c_norm == 0.0 {
            truncated = true;
            break;
        }
        let w = c / c_norm;
        let t = xd.dot(&w);
        let tt = t.dot(&t);
        if !(tt > 0.0) {
            truncated = true;
            break;
        }
        let p = xd.t().dot(&t) / tt;
        let q = yd.dot(&t) / tt;
        for (i, mut row) in xd.rows_mut().into_iter().enumerate() {
            row.scaled_add(-t[i], &p);
        }
        yd.scaled_add(-q, &t);
        ws.push(w);
        ps.push(p);
        qs.push(q);
    }

    if ws.is_empty() {
        return Err(Error::DegenerateTarget);
    }
    if truncated {
        warn!(
            "PLS stopped after {} of {} components: deflated cross-covariance vanished",
            ws.len(),
            n_components
        );
    }

    let stack = |cols: &[Array1<f64>]| {
        let views: Vec<_> = cols.iter().map(|c| c.view().insert_axis(Axis(1))).collect();
        ndarray::concatenate(Axis(1), &views).expect("equal-length columns")
    };
    let w = stack(&ws);
    let p = stack(&ps);
    let ptw = p.t().dot(&w);
    let w_star = w.dot(&invert(&ptw).ok_or(Error::DegenerateTarget)?);

    Ok(PlsModel {
        w,
        p,
        q: Array1::from(qs),
        w_star,
        x_mean,
        x_std,
        y_mean,
        truncated,
    })
}

/// Cross-validated mean squared prediction error for `K = 1..=k_max`.
///
/// Folds are contiguous row blocks. A fold whose training part has a constant
/// target predicts that constant for every `K`.
pub fn cv_errors(x: &Array2<f64>, y: &Array1<f64>, k_max: usize, n_folds: usize) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n_folds < 2 || n < n_folds {
        return Err(Error::InsufficientData(format!(
            "cross-validation needs N >= folds >= 2, got N = {n}, folds = {n_folds}"
        )));
    }
    cv_errors_by_fold(x, y, k_max, &contiguous_folds(n, n_folds))
}

/// Fold index of every row when `n` rows are cut into `n_folds` contiguous blocks.
pub fn contiguous_folds(n: usize, n_folds: usize) -> Vec<usize> {
    let mut fold_of = vec![0; n];
    for f in 0..n_folds {
        fold_of[f * n / n_folds..(f + 1) * n / n_folds].fill(f);
    }
    fold_of
}

/// Cross-validated error with an explicit fold index per row.
pub fn cv_errors_by_fold(x: &Array2<f64>, y: &Array1<f64>, k_max: usize, fold_of: &[usize]) -> Result<Vec<f64>> {
    let (n, d) = x.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if fold_of.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: fold_of.len(),
        });
    }
    let mut folds: Vec<usize> = fold_of.to_vec();
    folds.sort_unstable();
    folds.dedup();
    if folds.len() < 2 {
        return Err(Error::InsufficientData("cross-validation needs at least 2 folds".into()));
    }
    let y_mean = y.sum() / n as f64;
    if y.iter().all(|v| *v == y_mean) {
        return Err(Error::DegenerateTarget);
    }
    let smallest_train = folds
        .iter()
        .map(|&f| fold_of.iter().filter(|&&g| g != f).count())
        .min()
        .unwrap_or(0);
    let k_max = k_max.min(d).min(smallest_train.saturating_sub(1)).max(1);

    let mut sse = vec![0.0; k_max];
    for &f in &folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let x_tr = x.select(Axis(0), &train);
        let y_tr = y.select(Axis(0), &train);
        let x_te = x.select(Axis(0), &test);
        let y_te = y.select(Axis(0), &test);
        let k_fold = k_max.min(d).min(train.len() - 1);
        match fit_pls(&x_tr, &y_tr, k_fold) {
            Ok(model) => {
                for (k, acc) in sse.iter_mut().enumerate() {
                    let pred = model.predict_prefix(&x_te, k + 1)?;
                    *acc += (&pred - &y_te).mapv(|e| e * e).sum();
                }
            }
            Err(Error::DegenerateTarget) => {
                let c = y_tr.sum() / y_tr.len() as f64;
                let e = y_te.mapv(|v| (v - c) * (v - c)).sum();
                sse.iter_mut().for_each(|acc| *acc += e);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(sse.into_iter().map(|s| s / n as f64).collect())
}

/// Number of components minimizing the cross-validated error, ties going to
/// the smaller `K`.
pub fn select_components(x: &Array2<f64>, y: &Array1<f64>, k_max: usize, n_folds: usize) -> Result<usize> {
    let errs = cv_errors(x, y, k_max, n_folds)?;
    Ok(argmin_with_ties(&errs, y))
}

/// [`select_components`] with an explicit fold index per row.
pub fn select_components_by_fold(x: &Array2<f64>, y: &Array1<f64>, k_max: usize, fold_of: &[usize]) -> Result<usize> {
    let errs = cv_errors_by_fold(x, y, k_max, fold_of)?;
    Ok(argmin_with_ties(&errs, y))
}

fn argmin_with_ties(errs: &[f64], y: &Array1<f64>) -> usize {
    let n = y.len() as f64;
    let y_mean = y.sum() / n;
    let var_y = y.mapv(|v| (v - y_mean) * (v - y_mean)).sum() / n;
    let best = errs.iter().copied().fold(f64::INFINITY, f64::min);
    // errors within numerical noise of the minimum count as ties
    let tie = best * (1.0 + 1e-6) + 1e-12 * var_y;
    errs.iter().position(|&e| e <= tie).unwrap_or(0) + 1
}
