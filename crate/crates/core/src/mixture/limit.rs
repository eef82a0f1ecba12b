//! The σ → 0 limit of a spherical mixture with fixed means: soft
//! responsibilities harden into nearest-center assignments and the scaled
//! negative log-likelihood approaches the K-means objective.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2};
use serde::Serialize;

use super::gmm::SphericalGmm;
use super::kmeans::nearest_center;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Largest `1 - max responsibility` still counted as a hard assignment.
pub const HARD_ASSIGNMENT_TOL: f64 = 1e-6;

/// Relative gap below which the two nearest centers count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct LimitStep {
    pub sigma: f64,
    /// Max over non-tied points of `1 - max_k r_k(x)`.
    pub max_nonconfidence: f64,
    /// Fraction of non-tied points whose argmax responsibility is the nearest center.
    pub agreement: f64,
    /// `|2σ² (NLL - N log Z_σ) - objective|`, where `Z_σ` is the uniform-weight
    /// Gaussian normalizer and `objective` is the K-means objective.
    pub scaled_nll_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KMeansLimitReport {
    pub steps: Vec<LimitStep>,
    /// Points equidistant from their two nearest centers; reported, not checked.
    pub ties: Vec<usize>,
    pub kmeans_objective: f64,
}

impl KMeansLimitReport {
    /// Non-confidence never increases as σ shrinks.
    pub fn monotone(&self) -> bool {
        self.steps
            .windows(2)
            .all(|w| w[1].max_nonconfidence <= w[0].max_nonconfidence)
    }

    pub fn smallest(&self) -> &LimitStep {
        self.steps.last().expect("at least one sigma")
    }

    pub fn passed(&self) -> bool {
        let last = self.smallest();
        self.monotone() && last.agreement == 1.0 && last.max_nonconfidence <= HARD_ASSIGNMENT_TOL
    }
}

fn uniform_mixture(centers: ArrayView2<'_, f64>, sigma: f64) -> SphericalGmm {
    let m = centers.nrows();
    SphericalGmm {
        means: centers.to_owned(),
        sigma,
        weights: Array1::from_elem(m, 1.0 / m as f64),
    }
}

fn tied(centers: ArrayView2<'_, f64>, x: ndarray::ArrayView1<'_, f64>) -> bool {
    let mut d: Vec<f64> = centers
        .rows()
        .into_iter()
        .map(|c| x.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect();
    if d.len() < 2 {
        return false;
    }
    d.sort_by(f64::total_cmp);
    d[1] - d[0] <= TIE_TOL * d[0].max(1.0)
}

/// Negative log-likelihood of `data` under the uniform-weight mixture at `sigma`.
pub fn mixture_nll(data: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>, sigma: f64) -> f64 {
    let g = uniform_mixture(centers, sigma);
    -g.log_likelihood(data)
}

/// K-means objective with every point at its nearest center.
pub fn nearest_objective(data: ArrayView2<'_, f64>, centers: ArrayView2<'_, f64>) -> f64 {
    data.rows().into_iter().map(|x| nearest_center(centers, x).1).sum()
}

/// Computes responsibilities with fixed, equally weighted means at every
/// `sigma` and compares them with nearest-center assignment.
pub fn verify_kmeans_limit(
    data: ArrayView2<'_, f64>,
    centers: ArrayView2<'_, f64>,
    sigmas: &[f64],
) -> Result<KMeansLimitReport> {
    if sigmas.is_empty() {
        return Err(Error::invalid("need at least one sigma"));
    }
    if sigmas.iter().any(|&s| !(s > 0.0)) || sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("sigmas must be positive and strictly decreasing"));
    }
    if data.ncols() != centers.ncols() {
        return Err(Error::DimensionMismatch {
            expected: centers.ncols(),
            found: data.ncols(),
        });
    }
    if centers.nrows() == 0 {
        return Err(Error::invalid("need at least one center"));
    }
    let ties: Vec<usize> = data
        .rows()
        .into_iter()
        .enumerate()
        .filter(|(_, x)| tied(centers, *x))
        .map(|(i, _)| i)
        .collect();
    let nearest: Vec<usize> = data
        .rows()
        .into_iter()
        .map(|x| nearest_center(centers, x).0)
        .collect();
    let objective = nearest_objective(data, centers);
    let n = data.nrows();
    let l = data.ncols() as f64;
    let m = centers.nrows() as f64;
    let checked = n - ties.len();

    let mut steps = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let g = uniform_mixture(centers, sigma);
        let mut worst: f64 = 0.0;
        let mut agree = 0usize;
        let mut nll = 0.0;
        for (i, x) in data.rows().into_iter().enumerate() {
            let lj = g.log_joint(x);
            let lse = log_sum_exp(lj.as_slice().expect("contiguous"));
            nll -= lse;
            if ties.binary_search(&i).is_ok() {
                continue;
            }
            // 1 - max r computed as the mass of the other components, which
            // stays accurate when it is far below machine epsilon
            let (best, _) = lj
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
            let others: Vec<f64> = lj
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != best)
                .map(|(_, &v)| v - lse)
                .collect();
            let rest = log_sum_exp(&others).exp();
            worst = worst.max(rest);
            if best == nearest[i] {
                agree += 1;
            }
        }
        let log_norm = 0.5 * l * (2.0 * PI * sigma * sigma).ln() + m.ln();
        let scaled = 2.0 * sigma * sigma * (nll - n as f64 * log_norm);
        steps.push(LimitStep {
            sigma,
            max_nonconfidence: worst,
            agreement: if checked == 0 { 1.0 } else { agree as f64 / checked as f64 },
            scaled_nll_gap: (scaled - objective).abs(),
        });
    }
    Ok(KMeansLimitReport {
        steps,
        ties,
        kmeans_objective: objective,
    })
}

/// True when ranking the candidate center sets by mixture NLL at `sigma`
/// gives the same order as ranking them by the nearest-center K-means
/// objective. Pairs whose objectives differ by less than `1e-9` relative are
/// not compared.
pub fn nll_ordering_matches_kmeans(
    data: ArrayView2<'_, f64>,
    center_sets: &[Array2<f64>],
    sigma: f64,
) -> bool {
    let scored: Vec<(f64, f64)> = center_sets
        .iter()
        .map(|c| (mixture_nll(data, c.view(), sigma), nearest_objective(data, c.view())))
        .collect();
    for (a, &(nll_a, obj_a)) in scored.iter().enumerate() {
        for &(nll_b, obj_b) in &scored[a + 1..] {
            if (obj_a - obj_b).abs() <= 1e-9 * obj_a.abs().max(obj_b.abs()).max(1.0) {
                continue;
            }
            if (obj_a < obj_b) != (nll_a < nll_b) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn equidistant_point_is_reported_as_tie() {
        let data = array![[0.0], [-5.0], [5.0]];
        let centers = array![[-1.0], [1.0]];
        let r = verify_kmeans_limit(data.view(), centers.view(), &[1.0, 0.1, 0.01]).unwrap();
        assert_eq!(r.ties, vec![0]);
        assert!(r.passed());
    }

    #[test]
    fn sigmas_must_decrease() {
        let data = array![[0.0]];
        let centers = array![[1.0]];
        assert!(verify_kmeans_limit(data.view(), centers.view(), &[0.1, 1.0]).is_err());
        assert!(verify_kmeans_limit(data.view(), centers.view(), &[]).is_err());
    }

    #[test]
    fn scaled_nll_approaches_objective() {
        let data = array![[0.0, 0.1], [0.2, -0.1], [4.0, 4.1], [3.9, 4.0]];
        let centers = array![[0.1, 0.0], [4.0, 4.0]];
        let r = verify_kmeans_limit(data.view(), centers.view(), &[1.0, 0.1, 0.01]).unwrap();
        assert!(r.steps[2].scaled_nll_gap < r.steps[0].scaled_nll_gap);
        assert!(r.steps[2].scaled_nll_gap < 1e-9);
    }
}
