//! Exact conversions between a Gaussian-softmax RBM with `K` hidden units and
//! a spherical Gaussian mixture with `K + 1` components sharing `σ²I`.
//!
//! Completing the square in the energy shows that hidden configuration
//! `h = e_j` contributes a Gaussian with mean `σ w_j + c` and prior mass
//! proportional to `exp(b_j + ½||w_j||² + (1/σ) cᵀw_j)`; the all-off
//! configuration contributes mean `c` with mass `exp(0)`. The common
//! `(√(2π) σ)^L` factor cancels on normalization.

use ndarray::{Array1, Array2};

use super::gmm::SphericalGmm;
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::rbm::{HiddenKind, RbmParams, VisibleKind};

fn require_gaussian_softmax(p: &RbmParams) -> Result<()> {
    if p.visible_kind != VisibleKind::Gaussian || p.hidden_kind != HiddenKind::Softmax {
        return Err(Error::invalid(format!(
            "conversion needs a gaussian-visible softmax-hidden RBM, got {}/{}",
            p.visible_kind, p.hidden_kind
        )));
    }
    Ok(())
}

/// Unnormalized log prior of each hidden configuration, all-off first.
pub fn configuration_log_weights(p: &RbmParams) -> Result<Array1<f64>> {
    require_gaussian_softmax(p)?;
    let s = p.sigma;
    let k = p.num_hidden();
    let mut out = Array1::zeros(k + 1);
    for j in 0..k {
        let w = p.weights.column(j);
        out[j + 1] = p.hidden_bias[j] + 0.5 * w.dot(&w) + p.visible_bias.dot(&w) / s;
    }
    Ok(out)
}

/// Component 0 is the all-off configuration (mean `c`); component `j + 1`
/// corresponds to hidden unit `j` (mean `σ w_j + c`).
pub fn rbm_to_gmm(p: &RbmParams) -> Result<SphericalGmm> {
    let log_w = configuration_log_weights(p)?;
    let lse = log_sum_exp(log_w.as_slice().expect("contiguous"));
    // floor at the smallest positive double so an underflowed weight stays valid
    let mut weights = log_w.mapv(|l| (l - lse).exp().max(f64::MIN_POSITIVE));
    weights /= weights.sum();
    let (l, k) = p.weights.dim();
    let mut means = Array2::zeros((k + 1, l));
    means.row_mut(0).assign(&p.visible_bias);
    for j in 0..k {
        let mu = &p.weights.column(j) * p.sigma + &p.visible_bias;
        means.row_mut(j + 1).assign(&mu);
    }
    SphericalGmm::new(means, p.sigma, weights)
}

/// `c = μ_0`, `w_j = (μ_j - c)/σ`, `b_j = log(π_j/π_0) - ½||w_j||² - (1/σ) w_jᵀc`.
pub fn gmm_to_rbm(g: &SphericalGmm) -> Result<RbmParams> {
    if let Some(j) = g.weights.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::ZeroWeight(j));
    }
    let s = g.sigma;
    let c = g.means.row(0).to_owned();
    let k = g.num_components() - 1;
    let mut weights = Array2::zeros((g.dim(), k));
    let mut hidden_bias = Array1::zeros(k);
    let log_pi0 = g.weights[0].ln();
    for j in 0..k {
        let w = (&g.means.row(j + 1) - &c) / s;
        hidden_bias[j] = g.weights[j + 1].ln() - log_pi0 - 0.5 * w.dot(&w) - w.dot(&c) / s;
        weights.column_mut(j).assign(&w);
    }
    RbmParams::new(
        weights,
        c,
        hidden_bias,
        s,
        VisibleKind::Gaussian,
        HiddenKind::Softmax,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_rbm_maps_to_uniform_mixture_at_bias() {
        let mut p = RbmParams::zeros(3, 4, 0.5, VisibleKind::Gaussian, HiddenKind::Softmax).unwrap();
        p.visible_bias = array![1.0, -2.0, 0.5];
        let g = rbm_to_gmm(&p).unwrap();
        assert_eq!(g.num_components(), 5);
        for row in g.means.rows() {
            assert_eq!(row, p.visible_bias);
        }
        for &w in &g.weights {
            assert!((w - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn coincident_equal_weight_mixture_maps_to_zero_rbm() {
        let means = array![[0.3, 0.0], [0.3, 0.0], [0.3, 0.0]];
        let g = SphericalGmm::new(means, 1.3, array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let p = gmm_to_rbm(&g).unwrap();
        assert!(p.weights.iter().all(|&w| w == 0.0));
        assert!(p.hidden_bias.iter().all(|&b| b.abs() < 1e-15));
    }

    #[test]
    fn binary_rbm_is_rejected() {
        let p = RbmParams::zeros(3, 2, 1.0, VisibleKind::Binary, HiddenKind::Softmax).unwrap();
        assert!(rbm_to_gmm(&p).is_err());
    }
}
