//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample(StandardNormal))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.sample(StandardNormal))
}

/// Columns centered and divided by their population standard deviation.
pub fn standardize(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mut z = x.clone();
    for mut col in z.columns_mut() {
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    z
}

/// Unit-norm `X_c^T y_c` with `X_c` standardized and `y_c` centered.
pub fn first_pls_direction(x: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
    let xc = standardize(x);
    let yc = y - y.sum() / y.len() as f64;
    let w = xc.t().dot(&yc);
    let norm = w.dot(&w).sqrt();
    w / norm
}

/// In-sample predictions of least squares with intercept, solved through the
/// normal equations `(A^T A) b = A^T y`.
pub fn ols_predictions(x: &Array2<f64>, y: &Array1<f64>) -> Array1<f64> {
    let (n, d) = x.dim();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
    let yv = DVector::from_iterator(n, y.iter().copied());
    let ata = a.transpose() * &a;
    let aty = a.transpose() * yv;
    let b = ata.lu().solve(&aty).expect("full-rank design");
    let pred = a * b;
    Array1::from_iter(pred.iter().copied())
}

/// Magnitudes of the one-sided DFT of `x * w`, computed term by term.
pub fn naive_dft_magnitudes(x: &[f64], w: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (t, (&xv, &wv)) in x.iter().zip(w).enumerate() {
                let ang = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                re += xv * wv * ang.cos();
                im += xv * wv * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Global optimum of `min 1/2 a^T Q a` s.t. `0 <= a_i <= 1/(nu n)`, `sum a = 1`,
/// found by enumerating every lower/upper/free assignment and solving the
/// equality-constrained problem on the free set.
pub fn brute_force_dual(q: &Array2<f64>, nu: f64) -> (Vec<f64>, f64) {
    let n = q.nrows();
    let c = 1.0 / (nu * n as f64);
    let eps = 1e-10;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut state = vec![0u8; n];
        let mut v = code;
        for s in state.iter_mut() {
            *s = (v % 3) as u8;
            v /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let upper: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
        let mut alpha = vec![0.0; n];
        for &i in &upper {
            alpha[i] = c;
        }
        let fixed_sum = c * upper.len() as f64;
        if free.is_empty() {
            if (fixed_sum - 1.0).abs() > 1e-12 {
                continue;
            }
        } else {
            // [Q_FF  -1] [a_F]   [-Q_FU c 1]
            // [1^T    0] [rho] = [1 - fixed ]
            let m = free.len();
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            let mut b = DVector::<f64>::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = q[[i, j]];
                }
                a[(r, m)] = -1.0;
                b[r] = -upper.iter().map(|&j| q[[i, j]] * c).sum::<f64>();
                a[(m, r)] = 1.0;
            }
            b[m] = 1.0 - fixed_sum;
            let Some(sol) = a.lu().solve(&b) else { continue };
            if free.iter().enumerate().any(|(r, _)| sol[r] < -eps || sol[r] > c + eps) {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
        }
        let obj = 0.5
            * (0..n)
                .map(|i| (0..n).map(|j| alpha[i] * q[[i, j]] * alpha[j]).sum::<f64>())
                .sum::<f64>();
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((alpha, obj));
        }
    }
    best.expect("the feasible set is non-empty")
}

/// `U` of `a` and its exact two-sided p, by enumerating every assignment of
/// the pooled ranks to the first sample. Requires distinct values.
pub fn enumerated_u_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let u_obs = a.iter().map(|x| b.iter().filter(|y| x > y).count()).sum::<usize>() as f64;

    let mut dist: Vec<f64> = Vec::new();
    let mut chosen = Vec::with_capacity(na);
    fn walk(start: usize, n: usize, k: usize, chosen: &mut Vec<usize>, na: usize, out: &mut Vec<f64>) {
        if chosen.len() == k {
            let rank_sum: usize = chosen.iter().map(|r| r + 1).sum();
            out.push((rank_sum - na * (na + 1) / 2) as f64);
            return;
        }
        for r in start..=(n - (k - chosen.len())) {
            chosen.push(r);
            walk(r + 1, n, k, chosen, na, out);
            chosen.pop();
        }
    }
    walk(0, n, na, &mut chosen, na, &mut dist);
    let total = dist.len() as f64;
    let lower = dist.iter().filter(|&&u| u <= u_obs).count() as f64 / total;
    let upper = dist.iter().filter(|&&u| u >= u_obs).count() as f64 / total;
    (u_obs, (2.0 * lower.min(upper)).min(1.0))
}

/// `(#{a > b} - #{a < b}) / (n_a n_b)` over all pairs.
pub fn enumerated_cliffs_delta(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0i64;
    for x in a {
        for y in b {
            s += (x > y) as i64 - (x < y) as i64;
        }
    }
    s as f64 / (a.len() * b.len()) as f64
}
