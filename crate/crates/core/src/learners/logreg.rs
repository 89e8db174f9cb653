//! L2-regularized logistic regression trained by full-batch gradient descent
//! with Armijo backtracking. Multiclass is one-vs-rest; inputs are z-scored
//! from training statistics inside the model. All math is f64 regardless of
//! the feature scalar, and the zero init plus deterministic line search make
//! training reproducible without randomness.

use serde::{Deserialize, Serialize};

use super::{argmax_lowest, maybe_par_map, LrParams};
use crate::flowstore::FeatureView;
use crate::Scalar;

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-12;
const MAX_STEP: f64 = 64.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub w: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// Per-feature training mean and standard deviation (1 where constant);
    /// identity transform when standardization is off.
    pub(crate) mu: Vec<f64>,
    pub(crate) sigma: Vec<f64>,
    /// One binary head per class, ascending class order.
    pub(crate) heads: Vec<LinearHead>,
}

impl LogRegModel {
    pub(crate) fn predict_pos<S: Scalar>(&self, row: &[S]) -> usize {
        let z: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(j, v)| (v.to_f64().unwrap() - self.mu[j]) / self.sigma[j])
            .collect();
        let scores: Vec<f64> =
            self.heads.iter().map(|h| dot(&h.w, &z) + h.b).collect();
        argmax_lowest(&scores)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean logistic loss plus `λ/(2n)·‖w‖²` (bias unregularized), with its
/// analytic gradient. `rows` are standardized feature rows, `targets` 0/1.
/// Public so the gradient can be checked against finite differences.
pub fn logistic_loss_grad(
    w: &[f64],
    b: f64,
    rows: &[Vec<f64>],
    targets: &[f64],
    lambda: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_b = 0.0;
    for (x, &t) in rows.iter().zip(targets) {
        let z = dot(w, x) + b;
        // ln(1+e^z) − t·z, stabilized.
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
        let p = sigmoid(z);
        let d = p - t;
        for (g, &xj) in grad_w.iter_mut().zip(x) {
            *g += d * xj;
        }
        grad_b += d;
    }
    loss /= n;
    grad_b /= n;
    for (g, &wj) in grad_w.iter_mut().zip(w) {
        *g = *g / n + lambda * wj / n;
        loss += lambda * wj * wj / (2.0 * n);
    }
    (loss, grad_w, grad_b)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn fit_head(rows: &[Vec<f64>], targets: &[f64], params: &LrParams) -> LinearHead {
    let p = rows[0].len();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut step = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;

    let (mut loss, mut gw, mut gb) = logistic_loss_grad(&w, b, rows, targets, params.strength);
    for _ in 0..params.max_iter {
        let ginf = gw.iter().chain(std::iter::once(&gb)).fold(0.0f64, |m, g| m.max(g.abs()));
        if ginf < params.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let gsq = dot(&gw, &gw) + gb * gb;
        step = (step * 2.0).min(MAX_STEP);
        loop {
            let wt: Vec<f64> = w.iter().zip(&gw).map(|(wj, gj)| wj - step * gj).collect();
            let bt = b - step * gb;
            let (lt, gwt, gbt) = logistic_loss_grad(&wt, bt, rows, targets, params.strength);
            if lt <= loss - ARMIJO_C1 * step * gsq {
                w = wt;
                b = bt;
                loss = lt;
                gw = gwt;
                gb = gbt;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                // Flat to machine precision; treat as converged.
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
    }
    LinearHead { w, b, iterations, converged }
}

pub(crate) fn fit_logreg<S: Scalar>(
    x: &FeatureView<S>,
    y_pos: &[u32],
    k: usize,
    params: &LrParams,
    workers: usize,
) -> LogRegModel {
    let (n, p) = (x.nrows(), x.ncols());
    let (mu, sigma) = if params.standardize {
        let mut mu = vec![0.0; p];
        for row in x.rows() {
            for (m, v) in mu.iter_mut().zip(row) {
                *m += v.to_f64().unwrap();
            }
        }
        mu.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; p];
        for row in x.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mu) {
                let d = v.to_f64().unwrap() - m;
                *s += d * d;
            }
        }
        let sigma =
            var.into_iter().map(|s| (s / n as f64).sqrt()).map(|s| if s > 0.0 { s } else { 1.0 });
        (mu, sigma.collect())
    } else {
        (vec![0.0; p], vec![1.0; p])
    };

    let rows: Vec<Vec<f64>> = x
        .rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, v)| (v.to_f64().unwrap() - mu[j]) / sigma[j])
                .collect()
        })
        .collect();

    let heads = maybe_par_map(workers, k, |class| {
        let targets: Vec<f64> =
            y_pos.iter().map(|&c| if c as usize == class { 1.0 } else { 0.0 }).collect();
        fit_head(&rows, &targets, params)
    });
    LogRegModel { mu, sigma, heads }
}

#[cfg(test)]
mod tests {
    use super::super::testhelp::view;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for case in 0..20 {
            let n = rng.random_range(3..12);
            let p = rng.random_range(1..5);
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let targets: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2))).collect();
            let w: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: f64 = rng.random_range(-1.0..1.0);
            let lambda = [0.0, 1.0, 5.0][case % 3];

            let (_, gw, gb) = logistic_loss_grad(&w, b, &rows, &targets, lambda);
            let h = 1e-6;
            for j in 0..p {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let (lp, _, _) = logistic_loss_grad(&wp, b, &rows, &targets, lambda);
                let (lm, _, _) = logistic_loss_grad(&wm, b, &rows, &targets, lambda);
                let fd = (lp - lm) / (2.0 * h);
                let denom = fd.abs().max(gw[j].abs()).max(1e-8);
                assert!(
                    ((gw[j] - fd) / denom).abs() < 1e-6,
                    "case {case} w[{j}]: analytic {} vs fd {fd}",
                    gw[j],
                );
            }
            let (lp, _, _) = logistic_loss_grad(&w, b + h, &rows, &targets, lambda);
            let (lm, _, _) = logistic_loss_grad(&w, b - h, &rows, &targets, lambda);
            let fd = (lp - lm) / (2.0 * h);
            let denom = fd.abs().max(gb.abs()).max(1e-8);
            assert!(((gb - fd) / denom).abs() < 1e-6, "case {case} bias: {gb} vs {fd}");
        }
    }

    #[test]
    fn separates_shifted_blobs() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for class in 0..2u32 {
            let c = if class == 0 { -3.0 } else { 3.0 };
            for _ in 0..50 {
                rows.push(vec![c + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
                y.push(class);
            }
        }
        let x = view(rows);
        let m = fit_logreg(&x, &y, 2, &LrParams::default(), 1);
        let hits = (0..x.nrows()).filter(|&r| m.predict_pos(x.row(r)) as u32 == y[r]).count();
        assert_eq!(hits, 100);
    }

    #[test]
    fn constant_feature_does_not_break_standardization() {
        let x = view(vec![vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 3.0], vec![5.0, 4.0]]);
        let m = fit_logreg(&x, &[0, 0, 1, 1], 2, &LrParams::default(), 1);
        assert_eq!(m.sigma[0], 1.0);
        for h in &m.heads {
            assert!(h.w.iter().all(|v| v.is_finite()) && h.b.is_finite());
        }
        assert_eq!(m.predict_pos(&[5.0, 1.0]), 0);
        assert_eq!(m.predict_pos(&[5.0, 4.0]), 1);
    }

    #[test]
    fn majority_collapse_is_legal_not_fatal() {
        // Labels independent of features and imbalanced: the optimum is close
        // to predict-the-majority everywhere. That outcome must be accepted.
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let rows: Vec<Vec<f64>> =
            (0..200).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let y: Vec<u32> = (0..200).map(|i| u32::from(i % 10 == 0)).collect();
        let x = view(rows);
        let m = fit_logreg(&x, &y, 2, &LrParams::default(), 1);
        let preds: Vec<usize> = (0..x.nrows()).map(|r| m.predict_pos(x.row(r))).collect();
        assert!(preds.iter().all(|&p| p == 0), "majority collapse expected on noise labels");
    }

    #[test]
    fn multiclass_one_vs_rest_labels_three_blobs() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let centers = [(-5.0, 0.0), (5.0, 0.0), (0.0, 6.0)];
        for (class, (cx, cy)) in centers.iter().enumerate() {
            for _ in 0..40 {
                rows.push(vec![cx + rng.random_range(-1.0..1.0), cy + rng.random_range(-1.0..1.0)]);
                y.push(class as u32);
            }
        }
        let x = view(rows);
        let m = fit_logreg(&x, &y, 3, &LrParams::default(), 1);
        let hits = (0..x.nrows()).filter(|&r| m.predict_pos(x.row(r)) as u32 == y[r]).count();
        assert!(hits as f64 / 120.0 >= 0.99);
    }
}
