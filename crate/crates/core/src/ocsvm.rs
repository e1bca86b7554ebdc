//! One-class SVM with an RBF kernel, trained in the dual.
//!
//! The solver minimizes `1/2 a'Qa` subject to `0 <= a_i <= 1/(nu n)` and
//! `sum a_i = 1`, with `Q_ij = k(t_i, t_j)`, by two-coordinate (SMO) steps.
//! The working pair is the minimal-gradient free-to-increase index plus the
//! partner with the best second-order gain. The decision value is
//! `f(t) = sum_i a_i k(sv_i, t) - rho`.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dasio::Label;
use crate::error::{Error, Result};
use crate::linalg::squared_distance;
use crate::par::Exec;
use crate::preprocess::{apply_scaler, Scaler};

pub const OCSVM_FORMAT: u32 = 1;

/// Default `nu`.
pub const DEFAULT_NU: f64 = 0.1;

/// Gaussian kernel `exp(-gamma |a - b|^2)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    (-gamma * squared_distance(a, b)).exp()
}

/// Width heuristic `1 / (K * Var(T))` over all entries of the latent matrix.
pub fn default_gamma(t: &Array2<f64>) -> f64 {
    let k = t.ncols().max(1) as f64;
    let n = t.len() as f64;
    if n == 0.0 {
        return 1.0 / k;
    }
    let mean = t.sum() / n;
    let var = t.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (k * var)
    } else {
        1.0 / k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    /// Stop when the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            tol: 1e-6,
            max_iter: 1_000_000,
        }
    }
}

/// Result of a dual solve.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    /// Final maximal KKT violation `max_{a>0} G - min_{a<C} G`.
    pub violation: f64,
    pub iterations: usize,
}

/// Solves the one-class dual for a precomputed kernel matrix.
pub fn solve_dual(q: &Array2<f64>, nu: f64, params: &SolverParams) -> Result<DualSolution> {
    let n = q.nrows();
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidNu(nu));
    }
    if n == 0 {
        return Err(Error::InsufficientData("one-class SVM needs at least one point".into()));
    }
    let c = 1.0 / (nu * n as f64);

    // feasible start: fill the first floor(nu n) coordinates to the bound
    let mut alpha = vec![0.0; n];
    let mut remaining = 1.0;
    for a in alpha.iter_mut() {
        if remaining <= 0.0 {
            break;
        }
        *a = c.min(remaining);
        remaining -= *a;
    }
    let mut grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| q[[i, j]] * alpha[j]).sum())
        .collect();

    let mut iterations = 0;
    let violation = loop {
        let mut i_up = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] < c && grad[t] < g_min {
                g_min = grad[t];
                i_up = t;
            }
            if alpha[t] > 0.0 && grad[t] > g_max {
                g_max = grad[t];
            }
        }
        let gap = g_max - g_min;
        if i_up == usize::MAX || !(gap >= params.tol) {
            break gap.max(0.0);
        }
        if iterations >= params.max_iter {
            return Err(Error::NotConverged { iterations, violation: gap });
        }

        let i = i_up;
        let mut j = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for t in 0..n {
            if alpha[t] > 0.0 && grad[t] > g_min {
                let b = grad[t] - g_min;
                let a = (q[[i, i]] + q[[t, t]] - 2.0 * q[[i, t]]).max(1e-12);
                let gain = b * b / a;
                if gain > best_gain {
                    best_gain = gain;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            break gap.max(0.0);
        }

        let eta = (q[[i, i]] + q[[j, j]] - 2.0 * q[[i, j]]).max(1e-12);
        let room_i = c - alpha[i];
        let room_j = alpha[j];
        let delta = ((grad[j] - grad[i]) / eta).min(room_i).min(room_j);
        // snap to the bounds exactly so the active sets stay clean
        alpha[i] = if delta == room_i { c } else { alpha[i] + delta };
        alpha[j] = if delta == room_j { 0.0 } else { alpha[j] - delta };
        for (t, g) in grad.iter_mut().enumerate() {
            *g += delta * (q[[t, i]] - q[[t, j]]);
        }
        iterations += 1;
    };

    let rho = offset(&alpha, &grad, c);
    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();
    Ok(DualSolution {
        alpha,
        rho,
        objective,
        violation,
        iterations,
    })
}

/// `rho` from the KKT conditions: the mean gradient over free coordinates, or
/// the midpoint of the feasible interval when every coordinate is at a bound.
fn offset(alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut n_free = 0usize;
    let mut upper = f64::INFINITY; // min G over a = 0
    let mut lower = f64::NEG_INFINITY; // max G over a = C
    for (&a, &g) in alpha.iter().zip(grad) {
        if a > 0.0 && a < c {
            free_sum += g;
            n_free += 1;
        } else if a == 0.0 {
            upper = upper.min(g);
        } else {
            lower = lower.max(g);
        }
    }
    if n_free > 0 {
        free_sum / n_free as f64
    } else if upper.is_finite() && lower.is_finite() {
        0.5 * (upper + lower)
    } else if lower.is_finite() {
        lower
    } else {
        upper
    }
}

/// Trained one-class SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmModel {
    /// `S x K` support vectors.
    pub support_vectors: Array2<f64>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub nu: f64,
    /// Training set size, fixing the box bound `1 / (nu n)`.
    pub n_train: usize,
}

pub fn kernel_matrix(t: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let n = t.nrows();
    let rows: Vec<Vec<f64>> = t.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut q = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        q[[i, i]] = 1.0;
        for j in 0..i {
            let v = rbf_kernel(&rows[i], &rows[j], gamma);
            q[[i, j]] = v;
            q[[j, i]] = v;
        }
    }
    q
}

pub fn fit_ocsvm(t: &Array2<f64>, nu: f64, gamma: f64) -> Result<OcsvmModel> {
    fit_ocsvm_with(t, nu, gamma, &SolverParams::default())
}

pub fn fit_ocsvm_with(t: &Array2<f64>, nu: f64, gamma: f64, params: &SolverParams) -> Result<OcsvmModel> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidNu(nu));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidGamma(gamma));
    }
    let q = kernel_matrix(t, gamma);
    let sol = solve_dual(&q, nu, params)?;
    let keep: Vec<usize> = (0..sol.alpha.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    Ok(OcsvmModel {
        support_vectors: t.select(ndarray::Axis(0), &keep),
        alphas: keep.iter().map(|&i| sol.alpha[i]).collect(),
        rho: sol.rho,
        gamma,
        nu,
        n_train: t.nrows(),
    })
}

impl OcsvmModel {
    pub fn dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// Signed anomaly score; negative means outside the learned region.
    pub fn decision_function(&self, t: ArrayView1<f64>) -> Result<f64> {
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: t.len(),
            });
        }
        let t = t.to_vec();
        let s: f64 = self
            .support_vectors
            .rows()
            .into_iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * rbf_kernel(sv.as_slice().expect("standard layout"), &t, self.gamma))
            .sum();
        Ok(s - self.rho)
    }

    /// Scores every row of `t`.
    pub fn decision_batch(&self, exec: Exec, t: &Array2<f64>) -> Result<Vec<f64>> {
        exec.try_map_range(t.nrows(), |i| self.decision_function(t.row(i)))
    }

    pub fn classify(&self, t: ArrayView1<f64>) -> Result<Label> {
        Ok(Label::from_score(self.decision_function(t)?))
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct OcsvmJson {
    ocsvm_format: u32,
    support_vectors: Vec<Vec<f64>>,
    alphas: Vec<f64>,
    rho: f64,
    gamma: f64,
    nu: f64,
    n_train: usize,
}

impl Serialize for OcsvmModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OcsvmJson {
            ocsvm_format: OCSVM_FORMAT,
            support_vectors: self.support_vectors.rows().into_iter().map(|r| r.to_vec()).collect(),
            alphas: self.alphas.clone(),
            rho: self.rho,
            gamma: self.gamma,
            nu: self.nu,
            n_train: self.n_train,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OcsvmModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = OcsvmJson::deserialize(d)?;
        if j.ocsvm_format != OCSVM_FORMAT {
            return Err(D::Error::custom(format!("unsupported ocsvm_format {}", j.ocsvm_format)));
        }
        let s = j.support_vectors.len();
        let k = j.support_vectors.first().map_or(0, Vec::len);
        if s == 0 || j.alphas.len() != s || j.support_vectors.iter().any(|r| r.len() != k) {
            return Err(D::Error::custom("support vectors and alphas disagree in shape"));
        }
        Ok(OcsvmModel {
            support_vectors: Array2::from_shape_fn((s, k), |(i, c)| j.support_vectors[i][c]),
            alphas: j.alphas,
            rho: j.rho,
            gamma: j.gamma,
            nu: j.nu,
            n_train: j.n_train,
        })
    }
}

/// Detector of one free-span section: latent scaler, SVM and baseline length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionModel {
    pub section_id: String,
    pub baseline_exposure_m: f64,
    pub scaler: Scaler,
    pub ocsvm: OcsvmModel,
    /// Fingerprint of the PLS model whose latent space this detector lives in.
    pub pls_ref: String,
}

impl SectionModel {
    /// Anomaly scores of raw (unscaled) latent rows.
    pub fn score_latent(&self, exec: Exec, latent: &Array2<f64>) -> Result<Vec<f64>> {
        let z = apply_scaler(&self.scaler, latent)?;
        self.ocsvm.decision_batch(exec, &z)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Convenience for tests and callers holding plain vectors.
pub fn decision_of(model: &OcsvmModel, t: &[f64]) -> Result<f64> {
    model.decision_function(Array1::from(t.to_vec()).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[0.3, -1.0], &[0.3, -1.0], 2.0), 1.0);
        let v = rbf_kernel(&[0.0, 0.0], &[1.0, 1.0], 0.5);
        assert!((v - 0.367_879_441_171_442_3).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            assert_eq!(rbf_kernel(&a, &b, 0.7), rbf_kernel(&b, &a, 0.7));
        }
    }

    #[test]
    fn identical_points_sit_on_the_boundary() {
        let t = Array2::from_elem((7, 2), 0.25);
        let m = fit_ocsvm(&t, 0.3, 1.0).unwrap();
        assert!((m.rho - 1.0).abs() < 1e-12);
        assert!(decision_of(&m, &[0.25, 0.25]).unwrap().abs() < 1e-12);
        assert_eq!(m.classify(array![0.25, 0.25].view()).unwrap(), Label::Normal);
    }

    #[test]
    fn nu_one_forces_uniform_alphas() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = Array2::from_shape_fn((9, 2), |_| rng.sample(StandardNormal));
        let m = fit_ocsvm(&t, 1.0, 0.5).unwrap();
        assert_eq!(m.alphas.len(), 9);
        for a in &m.alphas {
            assert!((a - 1.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_model() {
        let t = array![[1.0, 2.0]];
        let m = fit_ocsvm(&t, 0.5, 1.0).unwrap();
        assert_eq!(m.alphas, vec![1.0]);
        assert!(decision_of(&m, &[1.0, 2.0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn far_points_score_minus_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Array2::from_shape_fn((30, 2), |_| rng.sample(StandardNormal));
        let m = fit_ocsvm(&t, 0.2, 0.5).unwrap();
        assert!(m.rho > 0.0);
        let f = decision_of(&m, &[100.0, -100.0]).unwrap();
        assert!(f < 0.0);
        assert!((f + m.rho).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters() {
        let t = array![[0.0], [1.0]];
        assert!(matches!(fit_ocsvm(&t, 0.0, 1.0), Err(Error::InvalidNu(_))));
        assert!(matches!(fit_ocsvm(&t, 1.5, 1.0), Err(Error::InvalidNu(_))));
        assert!(matches!(fit_ocsvm(&t, 0.5, 0.0), Err(Error::InvalidGamma(_))));
    }

    #[test]
    fn iteration_cap_reports_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = Array2::from_shape_fn((40, 2), |_| rng.sample(StandardNormal));
        let params = SolverParams { tol: 1e-12, max_iter: 1 };
        match fit_ocsvm_with(&t, 0.1, 1.0, &params) {
            Err(Error::NotConverged { iterations, violation }) => {
                assert_eq!(iterations, 1);
                assert!(violation > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_support_vectors_score_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = Array2::from_shape_fn((50, 3), |_| rng.sample(StandardNormal));
        let m = fit_ocsvm(&t, 0.2, 0.4).unwrap();
        let c = 1.0 / (m.nu * m.n_train as f64);
        for (sv, a) in m.support_vectors.rows().into_iter().zip(&m.alphas) {
            if *a < c {
                assert!(m.decision_function(sv).unwrap().abs() < 1e-3);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = Array2::from_shape_fn((12, 2), |_| rng.sample(StandardNormal));
        let m = fit_ocsvm(&t, 0.3, 1.0).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"ocsvm_format\":1"));
        let back: OcsvmModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn gamma_heuristic_on_standardized_latents() {
        let t = array![[1.0, -1.0], [-1.0, 1.0]];
        assert!((default_gamma(&t) - 0.5).abs() < 1e-15);
        assert!((default_gamma(&Array2::zeros((3, 4))) - 0.25).abs() < 1e-15);
    }
}
