//! Evaluation statistics: rank tests, effect sizes, correlation and
//! classification metrics.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dasio::Label;
use crate::error::{Error, Result};

/// Largest `n_a * n_b` for which the exact null distribution is used.
pub const EXACT_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `U` of the first sample: pairs with `a > b`, ties counting one half.
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    pub method: TestMethod,
}

/// Midranks of the pooled sample plus the tie-group sizes.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = r;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

/// Counts of each `U` value (0..=m*n) under the null, for `m` and `n` samples.
pub fn exact_u_counts(m: usize, n: usize) -> Vec<f64> {
    // f(i, j)[u] = f(i-1, j)[u-j] + f(i, j-1)[u]; keep one row of j per i
    let mut prev: Vec<Vec<f64>> = (0..=n).map(|_| vec![1.0]).collect(); // i = 0
    for i in 1..=m {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        cur.push(vec![1.0]); // j = 0: only U = 0
        for j in 1..=n {
            let mut dist = vec![0.0; i * j + 1];
            for (u, c) in prev[j].iter().enumerate() {
                dist[u + j] += c;
            }
            for (u, c) in cur[j - 1].iter().enumerate() {
                dist[u] += c;
            }
            cur.push(dist);
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

/// Two-sided Mann-Whitney U test of `a` against `b`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;

    if ties.is_empty() && na * nb <= EXACT_LIMIT {
        return Ok(TestResult {
            statistic: u,
            p_value: exact_p(u, na, nb),
            method: TestMethod::Exact,
        });
    }
    Ok(TestResult {
        statistic: u,
        p_value: normal_approx_p(u, na, nb, &ties),
        method: TestMethod::NormalApprox,
    })
}

/// Two-sided p of `U` under the normal approximation with tie and continuity corrections.
pub fn normal_approx_p(u: f64, na: usize, nb: usize, tie_sizes: &[usize]) -> f64 {
    let n = (na + nb) as f64;
    let mean = (na * nb) as f64 / 2.0;
    let tie_term: f64 = tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - tie_term);
    if !(var > 0.0) {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Exact two-sided p of `U` for tie-free samples.
pub fn exact_p(u: f64, na: usize, nb: usize) -> f64 {
    let counts = exact_u_counts(na, nb);
    let total: f64 = counts.iter().sum();
    let u = u.round() as usize;
    let lower: f64 = counts[..=u].iter().sum::<f64>() / total;
    let upper: f64 = counts[u..].iter().sum::<f64>() / total;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Holm step-down adjustment; output in input order.
pub fn holm_correct(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        let v = ((m - rank) as f64 * p_values[i]).min(1.0);
        running = running.max(v);
        adjusted[i] = running;
    }
    adjusted
}

/// Cliff's delta `(#{a > b} - #{a < b}) / (n_a n_b)`.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut sorted = b.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut dominance: i64 = 0;
    for &x in a {
        let below = sorted.partition_point(|&v| v < x) as i64;
        let not_above = sorted.partition_point(|&v| v <= x) as i64;
        let above = sorted.len() as i64 - not_above;
        dominance += below - above;
    }
    Ok(dominance as f64 / (a.len() * b.len()) as f64)
}

/// Pearson product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("correlation needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Confusion counts and rates with `anomalous` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

pub fn binary_metrics(predicted: &[Label], truth: &[Label]) -> Result<BinaryMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptySample);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (Label::Anomalous, Label::Anomalous) => tp += 1,
            (Label::Anomalous, Label::Normal) => fp += 1,
            (Label::Normal, Label::Anomalous) => fn_ += 1,
            (Label::Normal, Label::Normal) => tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryMetrics {
        accuracy: ratio(tp + tn, predicted.len()),
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
    })
}

/// Mean absolute error.
pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(y_true.iter().zip(y_pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / y_true.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn u_statistic_examples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.method, TestMethod::Exact);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(mann_whitney_u(&[1.0, 3.0], &[2.0, 4.0]).unwrap().statistic, 1.0);
    }

    #[test]
    fn exact_counts_sum_to_binomial() {
        let c = exact_u_counts(3, 4);
        assert_eq!(c.len(), 13);
        assert_eq!(c.iter().sum::<f64>(), 35.0);
        // symmetric about m n / 2
        for u in 0..=12 {
            assert_eq!(c[u], c[12 - u]);
        }
    }

    #[test]
    fn ties_use_normal_approximation() {
        let r = mann_whitney_u(&[1.0, 2.0, 2.0], &[2.0, 3.0]).unwrap();
        assert_eq!(r.method, TestMethod::NormalApprox);
        assert_eq!(r.statistic, 1.0); // (2,2) twice at one half each
        let all_tied = mann_whitney_u(&[5.0, 5.0], &[5.0]).unwrap();
        assert_eq!(all_tied.p_value, 1.0);
    }

    #[test]
    fn normal_approx_tracks_exact_for_eight_by_eight() {
        let worst = (0..=64)
            .map(|u| (normal_approx_p(u as f64, 8, 8, &[]) - exact_p(u as f64, 8, 8)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02, "{worst}");
    }

    #[test]
    fn holm_examples() {
        let h = holm_correct(&[0.01, 0.04, 0.03]);
        let want = [0.03, 0.06, 0.06];
        for (a, b) in h.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(holm_correct(&[0.2]), vec![0.2]);
        assert_eq!(holm_correct(&[0.5, 0.9]), vec![1.0, 1.0]);
    }

    #[test]
    fn cliffs_examples() {
        assert_eq!(cliffs_delta(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), -1.0);
        assert_eq!(cliffs_delta(&[5.0], &[5.0]).unwrap(), 0.0);
        assert_eq!(cliffs_delta(&[2.0, 4.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert!(matches!(cliffs_delta(&[], &[1.0]), Err(Error::EmptySample)));
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        assert!((pearson_r(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        let r = pearson_r(&x, &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.9820).abs() < 5e-5, "{r}");
        assert!(matches!(pearson_r(&x, &[2.0, 2.0, 2.0]), Err(Error::UndefinedCorrelation)));
    }

    #[test]
    fn binary_metric_examples() {
        use Label::*;
        let perfect = binary_metrics(&[Anomalous, Normal], &[Anomalous, Normal]).unwrap();
        assert_eq!((perfect.accuracy, perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0, 1.0));

        let pred = [Anomalous, Anomalous, Anomalous, Normal];
        let truth = [Anomalous, Anomalous, Normal, Normal];
        let m = binary_metrics(&pred, &truth).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.accuracy, 0.75);
        assert!((m.f1 - 0.8).abs() < 1e-15);

        let none = binary_metrics(&[Normal, Normal], &[Anomalous, Normal]).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[2.0, 4.0], &[3.0, 3.0]).unwrap(), 1.0);
        assert_eq!(mae(&[3.0, 3.0], &[2.0, 4.0]).unwrap(), 1.0);
        assert!(matches!(mae(&[], &[]), Err(Error::EmptySample)));
    }

    fn sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50i32..50, 1..25).prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn cliffs_delta_is_antisymmetric(a in sample(), b in sample()) {
            prop_assert_eq!(cliffs_delta(&a, &b).unwrap(), -cliffs_delta(&b, &a).unwrap());
        }

        #[test]
        fn u_statistics_are_complementary(a in sample(), b in sample()) {
            let ua = mann_whitney_u(&a, &b).unwrap().statistic;
            let ub = mann_whitney_u(&b, &a).unwrap().statistic;
            prop_assert!((ua + ub - (a.len() * b.len()) as f64).abs() < 1e-9);
        }

        #[test]
        fn holm_is_monotone_and_dominates(p in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let adj = holm_correct(&p);
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
            for w in order.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]]);
            }
            for (a, r) in adj.iter().zip(&p) {
                prop_assert!(a >= r && *a <= 1.0);
            }
        }

        #[test]
        fn pearson_is_affine_invariant(
            xs in prop::collection::vec(-100.0f64..100.0, 3..30),
            scale in 0.1f64..10.0,
            shift in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().enumerate().map(|(i, v)| v * 0.3 + (i as f64).sin()).collect();
            if let Ok(r) = pearson_r(&xs, &ys) {
                let xt: Vec<f64> = xs.iter().map(|v| scale * v + shift).collect();
                prop_assert!((pearson_r(&xt, &ys).unwrap() - r).abs() < 1e-12);
            }
        }
    }
}
