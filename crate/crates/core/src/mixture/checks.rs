//! Randomized numerical checks of the RBM/mixture conversions and of the
//! K-means limit, used by the `verify` command.
//!
//! The RBM partition function here is computed by per-coordinate trapezoidal
//! quadrature of the raw energy rather than by the closed-form prior weights
//! used in the conversion, so a marginal mismatch points at the conversion.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::bridge::{gmm_to_rbm, rbm_to_gmm};
use super::gmm::SphericalGmm;
use super::limit::{verify_kmeans_limit, KMeansLimitReport};
use crate::error::Result;
use crate::math::{log_sum_exp, seeded_rng};
use crate::rbm::{energy, hidden_given_visible, HiddenKind, RbmParams, VisibleKind};

pub const MARGINAL_REL_TOL: f64 = 1e-8;
pub const POSTERIOR_TOL: f64 = 1e-10;
pub const ROUNDTRIP_TOL: f64 = 1e-10;

pub fn random_gaussian_softmax<R: Rng + ?Sized>(rng: &mut R, max_visible: usize, max_hidden: usize) -> RbmParams {
    let l = rng.random_range(1..=max_visible);
    let k = rng.random_range(1..=max_hidden);
    let sigma = rng.random_range(0.5..2.0);
    let mut p = RbmParams::zeros(l, k, sigma, VisibleKind::Gaussian, HiddenKind::Softmax)
        .expect("valid shape");
    p.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p.visible_bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p.hidden_bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
    p
}

pub fn random_spherical_gmm<R: Rng + ?Sized>(rng: &mut R, max_dim: usize, max_components: usize) -> SphericalGmm {
    let l = rng.random_range(1..=max_dim);
    let m = rng.random_range(2..=max_components);
    let means = Array2::from_shape_fn((m, l), |_| rng.random_range(-2.0..2.0));
    let raw = Array1::from_shape_fn(m, |_| rng.random_range(0.05..1.0));
    let weights = &raw / raw.sum();
    SphericalGmm::new(means, rng.random_range(0.5..2.0), weights).expect("valid mixture")
}

fn sample_from<R: Rng + ?Sized>(g: &SphericalGmm, rng: &mut R) -> Array1<f64> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut comp = g.num_components() - 1;
    for (k, &w) in g.weights.iter().enumerate() {
        acc += w;
        if u < acc {
            comp = k;
            break;
        }
    }
    g.means.row(comp).mapv(|m| {
        let z: f64 = StandardNormal.sample(rng);
        m + g.sigma * z
    })
}

/// `log ∫ exp(f(x)) dx` by the trapezoidal rule on a grid of spacing
/// `scale / 8` covering `center ± 14 scale`.
fn log_integral_1d(f: impl Fn(f64) -> f64, center: f64, scale: f64) -> f64 {
    let step = scale / 8.0;
    let half = 14.0 * scale;
    let n = (2.0 * half / step).round() as usize;
    let xs: Vec<f64> = (0..=n).map(|i| center - half + i as f64 * step).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (i, v) in vals.iter().enumerate() {
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        sum += w * (v - max).exp();
    }
    max + (sum * step).ln()
}

/// `log Z` of a Gaussian-softmax RBM: for each hidden configuration the
/// integral over `v` factorizes into per-coordinate 1-D integrals.
pub fn log_partition_by_quadrature(p: &RbmParams) -> f64 {
    let s = p.sigma;
    let k = p.num_hidden();
    let mut terms = Vec::with_capacity(k + 1);
    for config in 0..=k {
        let mut total = if config == 0 { 0.0 } else { p.hidden_bias[config - 1] };
        for i in 0..p.num_visible() {
            let c = p.visible_bias[i];
            let w = if config == 0 { 0.0 } else { p.weights[[i, config - 1]] };
            let f = |v: f64| -(v - c) * (v - c) / (2.0 * s * s) + v * w / s;
            total += log_integral_1d(f, c + s * w, s);
        }
        terms.push(total);
    }
    log_sum_exp(&terms)
}

/// `log Σ_h exp(-E(v, h))` over the `K + 1` softmax configurations.
pub fn log_unnormalized_marginal(p: &RbmParams, v: &Array1<f64>) -> f64 {
    let k = p.num_hidden();
    let terms: Vec<f64> = (0..=k)
        .map(|config| {
            let mut h = Array1::zeros(k);
            if config > 0 {
                h[config - 1] = 1.0;
            }
            -energy(p, v.view(), h.view()).expect("shapes match")
        })
        .collect();
    log_sum_exp(&terms)
}

/// Posterior over configurations, all-off first.
fn rbm_configuration_posterior(p: &RbmParams, v: &Array1<f64>) -> Array1<f64> {
    let probs = hidden_given_visible(p, v.view()).expect("shapes match");
    let mut out = Array1::zeros(probs.len() + 1);
    out[0] = 1.0 - probs.sum();
    out.slice_mut(ndarray::s![1..]).assign(&probs);
    out
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EquivalenceSummary {
    pub instances: usize,
    pub points_per_instance: usize,
    /// Max over RBMs and points of `|P_gmm(v) / P_rbm(v) - 1|`.
    pub max_marginal_rel_error: f64,
    /// Max abs gap between mixture responsibilities and the converted RBM's posterior.
    pub max_posterior_error: f64,
    /// Max abs gap of means and weights after mixture -> RBM -> mixture, and of
    /// posteriors after RBM -> mixture -> RBM.
    pub max_roundtrip_error: f64,
}

impl EquivalenceSummary {
    pub fn passed(&self) -> bool {
        self.max_marginal_rel_error < MARGINAL_REL_TOL
            && self.max_posterior_error < POSTERIOR_TOL
            && self.max_roundtrip_error < ROUNDTRIP_TOL
    }
}

/// Runs the conversion identities on `instances` random RBMs and mixtures
/// (at most 10 visible units and 6 hidden units).
pub fn equivalence_suite(instances: usize, points: usize, seed: u64) -> Result<EquivalenceSummary> {
    let mut rng = seeded_rng(seed);
    let mut summary = EquivalenceSummary {
        instances,
        points_per_instance: points,
        ..Default::default()
    };
    for _ in 0..instances {
        let p = random_gaussian_softmax(&mut rng, 10, 6);
        let g = rbm_to_gmm(&p)?;
        let log_z = log_partition_by_quadrature(&p);
        let back = gmm_to_rbm(&g)?;
        for _ in 0..points {
            let v = sample_from(&g, &mut rng);
            let rbm_log = log_unnormalized_marginal(&p, &v) - log_z;
            let rel = (g.log_density(v.view()) - rbm_log).exp_m1().abs();
            summary.max_marginal_rel_error = summary.max_marginal_rel_error.max(rel);
            let gap = max_abs_diff(
                &rbm_configuration_posterior(&p, &v),
                &rbm_configuration_posterior(&back, &v),
            );
            summary.max_roundtrip_error = summary.max_roundtrip_error.max(gap);
        }

        let g = random_spherical_gmm(&mut rng, 10, 7);
        let q = gmm_to_rbm(&g)?;
        for _ in 0..points {
            let v = sample_from(&g, &mut rng);
            let gap = max_abs_diff(&g.responsibilities(v.view()), &rbm_configuration_posterior(&q, &v));
            summary.max_posterior_error = summary.max_posterior_error.max(gap);
        }
        let g2 = rbm_to_gmm(&q)?;
        let mean_gap = (&g2.means - &g.means).iter().map(|x| x.abs()).fold(0.0, f64::max);
        let weight_gap = max_abs_diff(&g2.weights, &g.weights);
        summary.max_roundtrip_error = summary.max_roundtrip_error.max(mean_gap).max(weight_gap);
    }
    Ok(summary)
}

/// A random instance with `k` centers spaced far apart relative to the
/// within-cluster spread, plus points scattered around them.
pub fn random_separated_instance<R: Rng + ?Sized>(rng: &mut R) -> (Array2<f64>, Array2<f64>) {
    let l = rng.random_range(1..=5);
    let k = rng.random_range(2..=5);
    let per = rng.random_range(5..=20);
    let centers = Array2::from_shape_fn((k, l), |(i, j)| {
        10.0 * i as f64 + if j == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }
    });
    let mut data = Array2::zeros((k * per, l));
    for (n, mut row) in data.rows_mut().into_iter().enumerate() {
        let c = centers.row(n % k);
        for (x, m) in row.iter_mut().zip(c.iter()) {
            let z: f64 = StandardNormal.sample(rng);
            *x = m + 0.5 * z;
        }
    }
    (data, centers)
}

pub fn kmeans_limit_suite(instances: usize, sigmas: &[f64], seed: u64) -> Result<Vec<KMeansLimitReport>> {
    let mut rng = seeded_rng(seed);
    (0..instances)
        .map(|_| {
            let (data, centers) = random_separated_instance(&mut rng);
            verify_kmeans_limit(data.view(), centers.view(), sigmas)
        })
        .collect()
}
