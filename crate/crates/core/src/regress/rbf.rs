//! Smoothed radial-basis-function interpolation of coefficient vectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// `exp(-(eps r)^2)`
    Gaussian,
    /// `1 / sqrt(1 + (eps r)^2)`
    InverseMultiquadric,
    /// `sqrt(1 + (eps r)^2)`
    Multiquadric,
}

impl Kernel {
    #[inline]
    pub fn eval(self, r: f64, eps: f64) -> f64 {
        let q = (eps * r) * (eps * r);
        match self {
            Kernel::Gaussian => (-q).exp(),
            Kernel::InverseMultiquadric => 1.0 / (1.0 + q).sqrt(),
            Kernel::Multiquadric => (1.0 + q).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    /// Training parameters mapped to `[0, 1]`.
    pub centers: Vec<f64>,
    pub input_min: f64,
    pub input_max: f64,
    /// `N_s x N_modes`, row per center.
    pub weights: Vec<Vec<f64>>,
    pub kernel: Kernel,
    pub epsilon: f64,
    pub smoothing: f64,
}

fn kernel_matrix(centers: &[f64], kernel: Kernel, eps: f64, smoothing: f64) -> DMatrix<f64> {
    let n = centers.len();
    DMatrix::from_fn(n, n, |i, j| {
        kernel.eval((centers[i] - centers[j]).abs(), eps) + if i == j { smoothing } else { 0.0 }
    })
}

/// Shape parameter: inverse mean pairwise distance of the centers.
pub fn default_epsilon(centers: &[f64]) -> f64 {
    let n = centers.len();
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            sum += (centers[i] - centers[j]).abs();
            count += 1;
        }
    }
    count as f64 / sum
}

/// Merge repeated parameter values, averaging their targets.
fn merge_duplicates(mus: &[f64], coefficients: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut out_mu: Vec<f64> = Vec::new();
    let mut out_y: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for (m, y) in mus.iter().zip(coefficients) {
        match out_mu.iter().position(|x| x == m) {
            Some(i) => {
                for (a, b) in out_y[i].iter_mut().zip(y) {
                    *a += b;
                }
                counts[i] += 1.0;
            }
            None => {
                out_mu.push(*m);
                out_y.push(y.clone());
                counts.push(1.0);
            }
        }
    }
    for (y, c) in out_y.iter_mut().zip(&counts) {
        y.iter_mut().for_each(|v| *v /= c);
    }
    (out_mu, out_y)
}

/// Fit weights solving `(K + smoothing I) W = Y`. Repeated centers are
/// merged first (their targets averaged) so the system stays regular.
pub fn rbf_fit(mus: &[f64], coefficients: &[Vec<f64>], kernel: Kernel, epsilon: Option<f64>, smoothing: f64) -> Result<RbfModel> {
    if mus.len() != coefficients.len() {
        return Err(Error::Dimension {
            expected: mus.len(),
            found: coefficients.len(),
        });
    }
    let (mus, coefficients) = merge_duplicates(mus, coefficients);
    let n = mus.len();
    let lo = mus.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mus.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if n < 2 || !(hi > lo) {
        return Err(Error::Pipeline("RBF fit needs at least two distinct centers".into()));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::Pipeline(format!("RBF smoothing must be >= 0, got {smoothing}")));
    }
    let m = coefficients[0].len();
    if let Some(bad) = coefficients.iter().find(|c| c.len() != m) {
        return Err(Error::Dimension {
            expected: m,
            found: bad.len(),
        });
    }
    let centers: Vec<f64> = mus.iter().map(|x| (x - lo) / (hi - lo)).collect();
    let eps = epsilon.unwrap_or_else(|| default_epsilon(&centers));
    let k = kernel_matrix(&centers, kernel, eps, smoothing);
    let y = DMatrix::from_fn(n, m, |i, j| coefficients[i][j]);

    let w = match k.clone().cholesky() {
        Some(ch) => ch.solve(&y),
        None => {
            let lu = k.clone().lu();
            match lu.solve(&y) {
                Some(w) => w,
                None => {
                    let u = lu.u();
                    let d: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
                    let dmax = d.iter().copied().fold(0.0, f64::max);
                    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
                    return Err(Error::Linalg(format!(
                        "RBF system is singular (pivot ratio estimate of condition {:e})",
                        dmax / dmin
                    )));
                }
            }
        }
    };
    Ok(RbfModel {
        centers,
        input_min: lo,
        input_max: hi,
        weights: (0..n).map(|i| (0..m).map(|j| w[(i, j)]).collect()).collect(),
        kernel,
        epsilon: eps,
        smoothing,
    })
}

impl RbfModel {
    pub fn n_outputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn normalize(&self, mu: f64) -> f64 {
        (mu - self.input_min) / (self.input_max - self.input_min)
    }

    /// Kernel expansion at parameter `mu`.
    pub fn eval(&self, mu: f64) -> Vec<f64> {
        let x = self.normalize(mu);
        let mut out = vec![0.0; self.n_outputs()];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            let phi = self.kernel.eval((x - c).abs(), self.epsilon);
            for (o, wi) in out.iter_mut().zip(w) {
                *o += phi * wi;
            }
        }
        out
    }

    /// `||(K + smoothing I) W - Y|| / ||Y||` in the Frobenius norm.
    pub fn normal_equation_residual(&self, coefficients: &[Vec<f64>]) -> f64 {
        let n = self.centers.len();
        let k = kernel_matrix(&self.centers, self.kernel, self.epsilon, self.smoothing);
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..self.n_outputs() {
            let wj = DVector::from_fn(n, |i, _| self.weights[i][j]);
            let r = &k * wj;
            for i in 0..n {
                num += (r[i] - coefficients[i][j]).powi(2);
                den += coefficients[i][j].powi(2);
            }
        }
        (num / den).sqrt()
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w * w).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<f64>, Vec<Vec<f64>>) {
        let mus: Vec<f64> = (0..11).map(|i| 0.5 + 0.15 * i as f64).collect();
        let ys = mus.iter().map(|m| vec![m.sin(), (2.0 * m).cos(), m * m]).collect();
        (mus, ys)
    }

    #[test]
    fn interpolates_without_smoothing() {
        let (mus, ys) = data();
        for kernel in [Kernel::Gaussian, Kernel::InverseMultiquadric, Kernel::Multiquadric] {
            let model = rbf_fit(&mus, &ys, kernel, None, 0.0).unwrap();
            for (m, y) in mus.iter().zip(&ys) {
                let p = model.eval(*m);
                let num: f64 = p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let den: f64 = y.iter().map(|b| b * b).sum::<f64>().sqrt();
                assert!(num <= 1e-9 * den, "{kernel:?}: {num} vs {den}");
            }
        }
    }

    #[test]
    fn two_center_hand_solution() {
        // Centers 0 and 1 after normalization; eps = 1 / 1.
        let model = rbf_fit(&[2.0, 4.0], &[vec![1.0], vec![3.0]], Kernel::Gaussian, None, 0.0).unwrap();
        assert_eq!(model.epsilon, 1.0);
        let k = (-1.0f64).exp();
        // [[1, k], [k, 1]] w = [1, 3], solved by Cramer's rule.
        let det = 1.0 - k * k;
        let w0 = (1.0 - 3.0 * k) / det;
        let w1 = (3.0 - k) / det;
        let mid = (w0 + w1) * (-0.25f64).exp();
        assert!((model.eval(3.0)[0] - mid).abs() <= 1e-12);
    }

    #[test]
    fn smoothing_shrinks_weights() {
        let (mus, ys) = data();
        let norms: Vec<f64> = [0.0, 0.1, 1.0, 10.0]
            .iter()
            .map(|&s| rbf_fit(&mus, &ys, Kernel::Gaussian, None, s).unwrap().weight_norm())
            .collect();
        for w in norms.windows(2) {
            assert!(w[1] < w[0], "{norms:?}");
        }
        let big = rbf_fit(&mus, &ys, Kernel::Gaussian, None, 1e12).unwrap();
        assert!(big.eval(1.0).iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn smoothed_normal_equations_hold() {
        let (mus, ys) = data();
        let model = rbf_fit(&mus, &ys, Kernel::Gaussian, None, 0.1).unwrap();
        assert!(model.normal_equation_residual(&ys) <= 1e-10);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(rbf_fit(&[1.0, 1.0], &[vec![1.0], vec![2.0]], Kernel::Gaussian, None, 0.0).is_err());
        assert!(rbf_fit(&[1.0, 2.0], &[vec![1.0]], Kernel::Gaussian, None, 0.0).is_err());
    }
}
