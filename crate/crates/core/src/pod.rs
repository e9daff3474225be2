//! Proper orthogonal decomposition by the method of snapshots.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues of the Gram matrix below this fraction of the largest are dropped.
const EIGEN_CUTOFF: f64 = 1e-12;

/// How many modes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RankRule {
    /// At most this many modes.
    Fixed(usize),
    /// Smallest count whose cumulative energy reaches this fraction.
    Energy(f64),
}

impl Default for RankRule {
    fn default() -> Self {
        RankRule::Energy(1.0 - 1e-8)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodBasis {
    pub variable: String,
    /// Orthonormal modes, each of DOF length.
    pub modes: Vec<Vec<f64>>,
    /// Every singular value that survived the eigenvalue cutoff, non-increasing.
    pub singular_values: Vec<f64>,
    pub n_snapshots: usize,
    pub rule: RankRule,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Compute the POD basis of the column snapshots `snapshots[i]`.
pub fn compute_pod(snapshots: &[Vec<f64>], variable: &str, rule: RankRule) -> Result<PodBasis> {
    let ns = snapshots.len();
    if ns < 2 {
        return Err(Error::Pipeline(format!("POD of `{variable}` needs at least 2 snapshots, got {ns}")));
    }
    let n = snapshots[0].len();
    for s in snapshots {
        if s.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: s.len(),
            });
        }
    }
    match rule {
        RankRule::Fixed(0) => {
            return Err(Error::Pipeline("fixed POD rank must be positive".into()));
        }
        RankRule::Energy(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::Pipeline(format!("energy fraction must lie in (0, 1], got {f}")));
        }
        _ => {}
    }

    let gram = DMatrix::from_fn(ns, ns, |i, j| dot(&snapshots[i], &snapshots[j]));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    if !(lmax > 0.0) {
        return Err(Error::Pipeline(format!("snapshot matrix of `{variable}` is zero")));
    }
    let lmin = eig.eigenvalues[order[ns - 1]];
    if lmin < -EIGEN_CUTOFF * lmax {
        return Err(Error::Linalg(format!(
            "Gram matrix of `{variable}` has a negative eigenvalue {lmin:e} (largest {lmax:e})"
        )));
    }

    let kept: Vec<usize> = order.into_iter().filter(|&k| eig.eigenvalues[k] > EIGEN_CUTOFF * lmax).collect();
    let singular_values: Vec<f64> = kept.iter().map(|&k| eig.eigenvalues[k].sqrt()).collect();

    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let n_modes = match rule {
        RankRule::Fixed(r) => r.min(kept.len()),
        RankRule::Energy(f) => {
            let mut acc = 0.0;
            let mut count = kept.len();
            for (i, s) in singular_values.iter().enumerate() {
                acc += s * s;
                if acc >= f * total {
                    count = i + 1;
                    break;
                }
            }
            count
        }
    };

    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    for (&k, &sigma) in kept.iter().zip(&singular_values).take(n_modes) {
        let v = eig.eigenvectors.column(k);
        let mut mode = vec![0.0; n];
        for (j, s) in snapshots.iter().enumerate() {
            let c = v[j] / sigma;
            for (m, x) in mode.iter_mut().zip(s) {
                *m += c * x;
            }
        }
        // Two passes of modified Gram-Schmidt repair the orthogonality lost
        // for small singular values.
        for _ in 0..2 {
            for prev in &modes {
                let c = dot(&mode, prev);
                for (m, p) in mode.iter_mut().zip(prev) {
                    *m -= c * p;
                }
            }
            let nm = norm(&mode);
            mode.iter_mut().for_each(|m| *m /= nm);
        }
        let pivot = mode.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            mode.iter_mut().for_each(|m| *m = -*m);
        }
        modes.push(mode);
    }

    Ok(PodBasis {
        variable: variable.to_string(),
        modes,
        singular_values,
        n_snapshots: ns,
        rule,
    })
}

impl PodBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.modes.first().map_or(0, Vec::len)
    }

    /// Mode-wise Euclidean inner products.
    pub fn project(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.n_dofs() {
            return Err(Error::Dimension {
                expected: self.n_dofs(),
                found: field.len(),
            });
        }
        Ok(self.modes.iter().map(|m| dot(m, field)).collect())
    }

    /// Linear combination of the first `coefficients.len()` modes.
    pub fn reconstruct(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() > self.n_modes() {
            return Err(Error::Dimension {
                expected: self.n_modes(),
                found: coefficients.len(),
            });
        }
        let mut out = vec![0.0; self.n_dofs()];
        for (c, m) in coefficients.iter().zip(&self.modes) {
            for (o, x) in out.iter_mut().zip(m) {
                *o += c * x;
            }
        }
        Ok(out)
    }

    /// Cumulative normalized energy `sum_{j<=k} s_j^2 / sum_j s_j^2`.
    pub fn energy_spectrum(&self) -> Vec<f64> {
        energy_spectrum(&self.singular_values)
    }
}

pub fn energy_spectrum(singular_values: &[f64]) -> Vec<f64> {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    let mut out: Vec<f64> = singular_values
        .iter()
        .map(|s| {
            acc += s * s;
            acc / total
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Relative Euclidean error `||a - b|| / ||b||`.
pub fn relative_error(approx: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = approx.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    num / norm(truth)
}
