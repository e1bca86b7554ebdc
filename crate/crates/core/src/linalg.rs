//! Small dense helpers shared by the PLS and SVM code.

use ndarray::{Array1, Array2, ArrayView1};

pub fn dot(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b)
}

pub fn norm(a: ArrayView1<f64>) -> f64 {
    a.dot(&a).sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Inverts a small square matrix by Gauss-Jordan elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `1e-300` (numerically singular).
pub fn invert(m: &Array2<f64>) -> Option<Array2<f64>> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "invert needs a square matrix");
    let mut a = m.clone();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap([pivot, k], [col, k]);
                inv.swap([pivot, k], [col, k]);
            }
        }
        let p = a[[col, col]];
        for k in 0..n {
            a[[col, k]] /= p;
            inv[[col, k]] /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[[row, col]];
                if f != 0.0 {
                    for k in 0..n {
                        a[[row, k]] -= f * a[[col, k]];
                        inv[[row, k]] -= f * inv[[col, k]];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Population mean and standard deviation of each column.
pub fn column_moments(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let means = x.sum_axis(ndarray::Axis(0)) / n;
    let mut var = Array1::<f64>::zeros(x.ncols());
    for row in x.rows() {
        for (j, v) in row.iter().enumerate() {
            let d = v - means[j];
            var[j] += d * d;
        }
    }
    (means, var.mapv(|v| (v / n).sqrt()))
}
