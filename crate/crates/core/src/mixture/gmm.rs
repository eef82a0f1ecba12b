use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::kmeans::KMeansResult;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Mixing weights below this are treated as a collapsed component.
pub const COLLAPSE_THRESHOLD: f64 = 1e-10;

/// Gaussian mixture whose components share the covariance `σ²I`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalGmm {
    /// One mean per row; row 0 is the reference component.
    pub means: Array2<f64>,
    pub sigma: f64,
    pub weights: Array1<f64>,
}

impl SphericalGmm {
    pub fn new(means: Array2<f64>, sigma: f64, weights: Array1<f64>) -> Result<Self> {
        if means.nrows() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: means.nrows(),
                found: weights.len(),
            });
        }
        if means.nrows() == 0 {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        if let Some(j) = weights.iter().position(|&w| !(w > 0.0)) {
            return Err(Error::ZeroWeight(j));
        }
        let total = weights.sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}")));
        }
        if means.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("mixture means must be finite"));
        }
        Ok(Self {
            means,
            sigma,
            weights,
        })
    }

    pub fn num_components(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// `log π_k + log N(x; μ_k, σ²I)` for every component.
    pub fn log_joint(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let s2 = self.sigma * self.sigma;
        let norm = -0.5 * self.dim() as f64 * (2.0 * PI * s2).ln();
        Array1::from_iter(self.means.rows().into_iter().zip(self.weights.iter()).map(
            |(mu, &w)| {
                let d: f64 = x.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() + norm - d / (2.0 * s2)
            },
        ))
    }

    pub fn log_density(&self, x: ArrayView1<'_, f64>) -> f64 {
        log_sum_exp(self.log_joint(x).as_slice().expect("contiguous"))
    }

    pub fn responsibilities(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let lj = self.log_joint(x);
        let lse = log_sum_exp(lj.as_slice().expect("contiguous"));
        lj.mapv(|l| (l - lse).exp())
    }

    pub fn log_likelihood(&self, data: ArrayView2<'_, f64>) -> f64 {
        data.rows().into_iter().map(|x| self.log_density(x)).sum()
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: SphericalGmm,
    /// Log-likelihood at the initialization and after every EM iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// EM for a shared-σ spherical mixture, initialized from K-means: means at
/// the centers, weights at the cluster fractions, σ² at the mean squared
/// per-coordinate residual.
pub fn gmm_em(
    data: ArrayView2<'_, f64>,
    num_components: usize,
    init: &KMeansResult,
    max_iters: usize,
    tol: f64,
) -> Result<GmmFit> {
    let (n, l) = data.dim();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if init.k() != num_components || init.assignment.len() != n {
        return Err(Error::invalid(format!(
            "initialization has {} centers for {} points; expected {num_components} centers for {n}",
            init.k(),
            init.assignment.len()
        )));
    }
    if init.centers.ncols() != l {
        return Err(Error::DimensionMismatch {
            expected: l,
            found: init.centers.ncols(),
        });
    }
    let mut counts = vec![0usize; num_components];
    for &a in &init.assignment {
        counts[a] += 1;
    }
    let weights = Array1::from_iter(counts.iter().map(|&c| c as f64 / n as f64));
    if let Some(j) = weights.iter().position(|&w| w < COLLAPSE_THRESHOLD) {
        return Err(Error::ComponentCollapse {
            component: j,
            weight: weights[j],
        });
    }
    let var = init.objective / (n * l) as f64;
    if !(var > 0.0) {
        return Err(Error::invalid("initialization has zero residual variance"));
    }
    let mut model = SphericalGmm {
        means: init.centers.clone(),
        sigma: var.sqrt(),
        weights,
    };
    let mut trace = vec![model.log_likelihood(data)];
    let mut converged = false;
    for _ in 0..max_iters {
        // E-step
        let mut resp = Array2::<f64>::zeros((n, num_components));
        for (x, mut r) in data.rows().into_iter().zip(resp.rows_mut()) {
            r.assign(&model.responsibilities(x));
        }
        // M-step
        let nk = resp.sum_axis(Axis(0));
        let mut weights = &nk / n as f64;
        weights /= weights.sum();
        if let Some(j) = weights.iter().position(|&w| w < COLLAPSE_THRESHOLD) {
            return Err(Error::ComponentCollapse {
                component: j,
                weight: weights[j],
            });
        }
        let mut means = resp.t().dot(&data);
        for (mut mu, &count) in means.rows_mut().into_iter().zip(nk.iter()) {
            mu /= count;
        }
        let mut sq = 0.0;
        for (x, r) in data.rows().into_iter().zip(resp.rows()) {
            for (mu, &rk) in means.rows().into_iter().zip(r.iter()) {
                let d: f64 = x.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                sq += rk * d;
            }
        }
        let var = sq / (n * l) as f64;
        if !(var > 0.0) {
            return Err(Error::invalid("variance collapsed to zero"));
        }
        model = SphericalGmm {
            means,
            sigma: var.sqrt(),
            weights,
        };
        let ll = model.log_likelihood(data);
        let prev = *trace.last().expect("non-empty");
        trace.push(ll);
        if (ll - prev).abs() < tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_zero_weight_and_bad_sigma() {
        let means = array![[0.0], [1.0]];
        assert!(matches!(
            SphericalGmm::new(means.clone(), 1.0, array![1.0, 0.0]),
            Err(Error::ZeroWeight(1))
        ));
        assert!(SphericalGmm::new(means, 0.0, array![0.5, 0.5]).is_err());
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let g = SphericalGmm::new(array![[0.0, 0.0], [1.0, 2.0], [-3.0, 1.0]], 0.7, array![0.2, 0.3, 0.5])
            .unwrap();
        let r = g.responsibilities(array![0.4, 0.9].view());
        assert!((r.sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_density_matches_closed_form() {
        let g = SphericalGmm::new(array![[0.0]], 2.0, array![1.0]).unwrap();
        let x = 1.5f64;
        let expected = (-x * x / 8.0).exp() / (2.0 * (2.0 * PI).sqrt());
        assert!((g.log_density(array![x].view()).exp() - expected).abs() < 1e-15);
    }
}
