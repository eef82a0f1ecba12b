//! Restricted Boltzmann machines with binary or Gaussian visible units and
//! binary or softmax hidden units.
//!
//! Energies, with `W` of shape `L × K`:
//!
//! * Gaussian visible: `E(v,h) = ||v - c||² / (2σ²) - (1/σ) vᵀWh - bᵀh`
//! * binary visible:   `E(v,h) = -vᵀc - vᵀWh - bᵀh` (σ is ignored)
//!
//! Softmax hidden units allow at most one active unit, so the hidden layer has
//! `K + 1` configurations: all-off or exactly one unit on.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{seeded_rng, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisibleKind {
    Binary,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenKind {
    Binary,
    Softmax,
}

impl fmt::Display for VisibleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VisibleKind::Binary => "binary",
            VisibleKind::Gaussian => "gaussian",
        })
    }
}

impl FromStr for VisibleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(VisibleKind::Binary),
            "gaussian" => Ok(VisibleKind::Gaussian),
            other => Err(Error::invalid(format!("unknown visible kind `{other}`"))),
        }
    }
}

impl fmt::Display for HiddenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HiddenKind::Binary => "binary",
            HiddenKind::Softmax => "softmax",
        })
    }
}

impl FromStr for HiddenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(HiddenKind::Binary),
            "softmax" => Ok(HiddenKind::Softmax),
            other => Err(Error::invalid(format!("unknown hidden kind `{other}`"))),
        }
    }
}

/// RBM parameters. `weights[[i, j]]` couples visible unit `i` with hidden unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub sigma: f64,
    pub visible_kind: VisibleKind,
    pub hidden_kind: HiddenKind,
}

impl RbmParams {
    pub fn new(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        sigma: f64,
        visible_kind: VisibleKind,
        hidden_kind: HiddenKind,
    ) -> Result<Self> {
        let (l, k) = weights.dim();
        if visible_bias.len() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                found: visible_bias.len(),
            });
        }
        if hidden_bias.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: hidden_bias.len(),
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
        }
        let p = Self {
            weights,
            visible_bias,
            hidden_bias,
            sigma,
            visible_kind,
            hidden_kind,
        };
        if !p.is_finite() {
            return Err(Error::invalid("RBM parameters must be finite"));
        }
        Ok(p)
    }

    pub fn zeros(
        num_visible: usize,
        num_hidden: usize,
        sigma: f64,
        visible_kind: VisibleKind,
        hidden_kind: HiddenKind,
    ) -> Result<Self> {
        Self::new(
            Array2::zeros((num_visible, num_hidden)),
            Array1::zeros(num_visible),
            Array1::zeros(num_hidden),
            sigma,
            visible_kind,
            hidden_kind,
        )
    }

    /// Weights drawn from N(0, 0.01²), biases zero.
    pub fn random<R: Rng + ?Sized>(
        num_visible: usize,
        num_hidden: usize,
        sigma: f64,
        visible_kind: VisibleKind,
        hidden_kind: HiddenKind,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(num_visible, num_hidden, sigma, visible_kind, hidden_kind)?;
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        p.weights.mapv_inplace(|_| normal.sample(rng));
        Ok(p)
    }

    pub fn num_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_hidden(&self) -> usize {
        self.weights.ncols()
    }

    /// σ as it enters the energy; binary visible units behave as σ = 1.
    pub fn effective_sigma(&self) -> f64 {
        match self.visible_kind {
            VisibleKind::Binary => 1.0,
            VisibleKind::Gaussian => self.sigma,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.sigma.is_finite()
            && self.weights.iter().all(|x| x.is_finite())
            && self.visible_bias.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite())
    }

    fn check_visible(&self, len: usize) -> Result<()> {
        if len != self.num_visible() {
            return Err(Error::DimensionMismatch {
                expected: self.num_visible(),
                found: len,
            });
        }
        Ok(())
    }

    fn check_hidden(&self, h: ArrayView1<'_, f64>) -> Result<()> {
        if h.len() != self.num_hidden() {
            return Err(Error::DimensionMismatch {
                expected: self.num_hidden(),
                found: h.len(),
            });
        }
        if self.hidden_kind == HiddenKind::Softmax {
            if h.iter().any(|&x| x != 0.0 && x != 1.0) {
                return Err(Error::InvalidHiddenState(
                    "softmax hidden units must be 0 or 1".into(),
                ));
            }
            if h.sum() > 1.0 {
                return Err(Error::InvalidHiddenState(
                    "at most one softmax hidden unit may be active".into(),
                ));
            }
        }
        Ok(())
    }

    /// Hidden pre-activations `(1/σ) Wᵀv + b`.
    pub(crate) fn hidden_activation(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        v.dot(&self.weights) / self.effective_sigma() + &self.hidden_bias
    }
}

/// Energy of a joint configuration.
pub fn energy(p: &RbmParams, v: ArrayView1<'_, f64>, h: ArrayView1<'_, f64>) -> Result<f64> {
    p.check_visible(v.len())?;
    p.check_hidden(h)?;
    let cross = v.dot(&p.weights.dot(&h));
    let hidden = p.hidden_bias.dot(&h);
    Ok(match p.visible_kind {
        VisibleKind::Gaussian => {
            let s = p.sigma;
            let diff = &v - &p.visible_bias;
            diff.dot(&diff) / (2.0 * s * s) - cross / s - hidden
        }
        VisibleKind::Binary => -v.dot(&p.visible_bias) - cross - hidden,
    })
}

fn softmax_with_residual(act: ArrayView1<'_, f64>) -> Array1<f64> {
    // the all-off configuration contributes exp(0)
    let max = act.iter().copied().fold(0.0f64, f64::max);
    let denom = (-max).exp() + act.iter().map(|a| (a - max).exp()).sum::<f64>();
    act.mapv(|a| (a - max).exp() / denom)
}

fn hidden_probs_from_activation(kind: HiddenKind, act: ArrayView1<'_, f64>) -> Array1<f64> {
    match kind {
        HiddenKind::Binary => act.mapv(sigmoid),
        HiddenKind::Softmax => softmax_with_residual(act),
    }
}

pub(crate) fn hidden_probs(p: &RbmParams, v: ArrayView1<'_, f64>) -> Array1<f64> {
    hidden_probs_from_activation(p.hidden_kind, p.hidden_activation(v).view())
}

/// `P(h_j = 1 | v)` for every hidden unit.
///
/// For binary hidden units these are independent sigmoids. For softmax hidden
/// units they are the `K` one-hot configuration probabilities; the all-off
/// configuration takes the remaining mass `1 - Σ_j P(h_j = 1 | v)`.
pub fn hidden_given_visible(p: &RbmParams, v: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    p.check_visible(v.len())?;
    Ok(hidden_probs(p, v))
}

/// Distribution of the visible layer given a hidden configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum VisibleConditional {
    /// Independent Bernoulli units with these activation probabilities.
    Bernoulli(Array1<f64>),
    /// Independent Gaussians `N(mean_i, variance)`.
    Gaussian { mean: Array1<f64>, variance: f64 },
}

impl VisibleConditional {
    pub fn mean(&self) -> &Array1<f64> {
        match self {
            VisibleConditional::Bernoulli(p) => p,
            VisibleConditional::Gaussian { mean, .. } => mean,
        }
    }

    pub fn into_mean(self) -> Array1<f64> {
        match self {
            VisibleConditional::Bernoulli(p) => p,
            VisibleConditional::Gaussian { mean, .. } => mean,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        match self {
            VisibleConditional::Bernoulli(p) => {
                p.mapv(|q| if rng.random::<f64>() < q { 1.0 } else { 0.0 })
            }
            VisibleConditional::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                mean.mapv(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + sd * z
                })
            }
        }
    }
}

/// Mean-field visible conditional; `h` may hold probabilities rather than states.
pub(crate) fn visible_conditional(p: &RbmParams, h: ArrayView1<'_, f64>) -> VisibleConditional {
    let wh = p.weights.dot(&h);
    match p.visible_kind {
        VisibleKind::Gaussian => VisibleConditional::Gaussian {
            mean: wh * p.sigma + &p.visible_bias,
            variance: p.sigma * p.sigma,
        },
        VisibleKind::Binary => VisibleConditional::Bernoulli((wh + &p.visible_bias).mapv(sigmoid)),
    }
}

/// `P(v | h)`: Gaussian with mean `σWh + c` and variance `σ²`, or Bernoulli
/// with probabilities `sigm(Wh + c)`.
pub fn visible_given_hidden(p: &RbmParams, h: ArrayView1<'_, f64>) -> Result<VisibleConditional> {
    p.check_hidden(h)?;
    Ok(visible_conditional(p, h))
}

/// Draws a hidden state from `P(h | v)`.
pub fn sample_hidden<R: Rng + ?Sized>(
    p: &RbmParams,
    v: ArrayView1<'_, f64>,
    rng: &mut R,
) -> Array1<f64> {
    sample_hidden_from_probs(p.hidden_kind, hidden_probs(p, v).view(), rng)
}

fn sample_hidden_from_probs<R: Rng + ?Sized>(
    kind: HiddenKind,
    probs: ArrayView1<'_, f64>,
    rng: &mut R,
) -> Array1<f64> {
    match kind {
        HiddenKind::Binary => probs.mapv(|q| if rng.random::<f64>() < q { 1.0 } else { 0.0 }),
        HiddenKind::Softmax => {
            let mut h = Array1::zeros(probs.len());
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (j, &q) in probs.iter().enumerate() {
                acc += q;
                if u < acc {
                    h[j] = 1.0;
                    break;
                }
            }
            h
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsState {
    pub v: Array1<f64>,
    pub h: Array1<f64>,
}

/// One block-Gibbs sweep: `h ~ P(h | v)`, then `v ~ P(v | h)`.
pub fn gibbs_step<R: Rng + ?Sized>(p: &RbmParams, s: &GibbsState, rng: &mut R) -> Result<GibbsState> {
    p.check_visible(s.v.len())?;
    let h = sample_hidden(p, s.v.view(), rng);
    let v = visible_conditional(p, h.view()).sample(rng);
    Ok(GibbsState { v, h })
}

/// Deterministic mean-field reconstruction of `x`.
pub fn reconstruct(p: &RbmParams, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    p.check_visible(x.len())?;
    Ok(reconstruct_unchecked(p, x))
}

pub(crate) fn reconstruct_unchecked(p: &RbmParams, x: ArrayView1<'_, f64>) -> Array1<f64> {
    let h = hidden_probs(p, x);
    visible_conditional(p, h.view()).into_mean()
}

pub(crate) fn reconstruction_error_unchecked(p: &RbmParams, x: ArrayView1<'_, f64>) -> f64 {
    let r = reconstruct_unchecked(p, x);
    x.iter().zip(r.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Squared Euclidean distance between `x` and its mean-field reconstruction.
pub fn reconstruction_error(p: &RbmParams, x: ArrayView1<'_, f64>) -> Result<f64> {
    p.check_visible(x.len())?;
    Ok(reconstruction_error_unchecked(p, x))
}

/// Mean reconstruction error per row of `data`.
pub fn mean_reconstruction_error(p: &RbmParams, data: ArrayView2<'_, f64>) -> Result<f64> {
    p.check_visible(data.ncols())?;
    if data.nrows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = data
        .rows()
        .into_iter()
        .map(|x| reconstruction_error_unchecked(p, x))
        .sum();
    Ok(total / data.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdMethod {
    /// Contrastive divergence: negative chains restart at the data.
    Cd,
    /// Persistent contrastive divergence: one chain per batch slot, kept across updates.
    Pcd,
}

impl FromStr for CdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cd" => Ok(CdMethod::Cd),
            "pcd" => Ok(CdMethod::Pcd),
            other => Err(Error::invalid(format!("unknown training method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: CdMethod,
    /// Gibbs steps per negative phase.
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: CdMethod::Cd,
            k: 1,
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 10,
            momentum: 0.5,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("Gibbs steps k must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be a non-negative finite number"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch_size and epochs must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RbmParams,
    /// Mean reconstruction error per sample after each epoch.
    pub trace: Vec<f64>,
}

/// Contribution of one batch of visible rows and their hidden probabilities
/// to the log-likelihood gradient statistics.
struct Moments {
    vh: Array2<f64>,
    v: Array1<f64>,
    h: Array1<f64>,
}

fn batch_moments(v: ArrayView2<'_, f64>, h: ArrayView2<'_, f64>) -> Moments {
    let n = v.nrows() as f64;
    Moments {
        vh: v.t().dot(&h) / n,
        v: v.sum_axis(Axis(0)) / n,
        h: h.sum_axis(Axis(0)) / n,
    }
}

fn hidden_probs_rows(p: &RbmParams, v: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut act = v.dot(&p.weights) / p.effective_sigma();
    act += &p.hidden_bias;
    for mut row in act.rows_mut() {
        let probs = hidden_probs_from_activation(p.hidden_kind, row.view());
        row.assign(&probs);
    }
    act
}

fn sample_hidden_rows<R: Rng + ?Sized>(p: &RbmParams, probs: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros(probs.dim());
    for (mut dst, src) in out.rows_mut().into_iter().zip(probs.rows()) {
        dst.assign(&sample_hidden_from_probs(p.hidden_kind, src, rng));
    }
    out
}

fn sample_visible_rows<R: Rng + ?Sized>(p: &RbmParams, h: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros((h.nrows(), p.num_visible()));
    for (mut dst, src) in out.rows_mut().into_iter().zip(h.rows()) {
        dst.assign(&visible_conditional(p, src).sample(rng));
    }
    out
}

/// Runs `k` Gibbs sweeps from visible rows `v`; returns the final visible
/// samples and their hidden probabilities.
fn negative_phase<R: Rng + ?Sized>(
    p: &RbmParams,
    v: Array2<f64>,
    k: usize,
    rng: &mut R,
) -> (Array2<f64>, Array2<f64>) {
    let mut v = v;
    for _ in 0..k {
        let ph = hidden_probs_rows(p, v.view());
        let h = sample_hidden_rows(p, &ph, rng);
        v = sample_visible_rows(p, &h, rng);
    }
    let ph = hidden_probs_rows(p, v.view());
    (v, ph)
}

/// One stochastic estimate of the log-likelihood gradient for a batch,
/// as `(dW, dc, db)`. The negative phase starts at `start`.
pub(crate) fn cd_gradient<R: Rng + ?Sized>(
    p: &RbmParams,
    batch: ArrayView2<'_, f64>,
    start: Array2<f64>,
    k: usize,
    rng: &mut R,
) -> (Array2<f64>, Array1<f64>, Array1<f64>, Array2<f64>) {
    let ph0 = hidden_probs_rows(p, batch);
    let pos = batch_moments(batch, ph0.view());
    let (vk, phk) = negative_phase(p, start, k, rng);
    let neg = batch_moments(vk.view(), phk.view());
    let (gw, gc) = match p.visible_kind {
        VisibleKind::Binary => (pos.vh - neg.vh, pos.v - neg.v),
        VisibleKind::Gaussian => {
            let s = p.sigma;
            ((pos.vh - neg.vh) / s, (pos.v - neg.v) / (s * s))
        }
    };
    (gw, gc, pos.h - neg.h, vk)
}

/// Trains `p` on the rows of `data` with CD-k or PCD using minibatch
/// gradient ascent with momentum and L2 weight decay on `W`.
///
/// Rows are shuffled every epoch. After each epoch the mean reconstruction
/// error per sample over all of `data` is appended to the trace. Any
/// non-finite parameter aborts training with the offending epoch and batch.
pub fn train(p: &RbmParams, data: ArrayView2<'_, f64>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    p.check_visible(data.ncols())?;
    let mut rng = seeded_rng(cfg.seed);
    let mut params = p.clone();
    let (l, k) = params.weights.dim();
    let mut vel_w = Array2::<f64>::zeros((l, k));
    let mut vel_c = Array1::<f64>::zeros(l);
    let mut vel_b = Array1::<f64>::zeros(k);
    let n = data.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut chains: Option<Array2<f64>> = match cfg.method {
        CdMethod::Cd => None,
        CdMethod::Pcd => {
            let slots = cfg.batch_size.min(n);
            Some(Array2::from_shape_fn((slots, l), |(i, j)| data[[i % n, j]]))
        }
    };
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_no, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.select(Axis(0), idx);
            let start = match &chains {
                None => batch.clone(),
                Some(c) => c.slice(ndarray::s![..idx.len(), ..]).to_owned(),
            };
            let (gw, gc, gb, vk) = cd_gradient(&params, batch.view(), start, cfg.k, &mut rng);
            if let Some(c) = chains.as_mut() {
                c.slice_mut(ndarray::s![..idx.len(), ..]).assign(&vk);
            }
            vel_w = vel_w * cfg.momentum + (gw - &params.weights * cfg.weight_decay) * cfg.learning_rate;
            vel_c = vel_c * cfg.momentum + gc * cfg.learning_rate;
            vel_b = vel_b * cfg.momentum + gb * cfg.learning_rate;
            params.weights += &vel_w;
            params.visible_bias += &vel_c;
            params.hidden_bias += &vel_b;
            if !params.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: batch_no,
                });
            }
        }
        let err = mean_reconstruction_error(&params, data)?;
        if !err.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: n.div_ceil(cfg.batch_size).saturating_sub(1),
            });
        }
        trace.push(err);
    }
    Ok(TrainOutcome { params, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn gaussian_softmax(l: usize, k: usize, seed: u64) -> RbmParams {
        let mut rng = seeded_rng(seed);
        let mut p = RbmParams::zeros(l, k, 1.0, VisibleKind::Gaussian, HiddenKind::Softmax).unwrap();
        p.weights.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        p.visible_bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        p.hidden_bias.mapv_inplace(|_| rng.random_range(-1.0..1.0));
        p
    }

    #[test]
    fn gaussian_energy_vanishes_at_bias_with_hidden_off() {
        let p = gaussian_softmax(4, 3, 1);
        let v = p.visible_bias.clone();
        let e = energy(&p, v.view(), Array1::zeros(3).view()).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn gaussian_energy_single_active_unit() {
        let mut p = gaussian_softmax(4, 3, 2);
        p.visible_bias.fill(0.0);
        p.hidden_bias.fill(0.0);
        let v = array![0.3, -1.2, 2.0, 0.5];
        let h = array![0.0, 1.0, 0.0];
        let e = energy(&p, v.view(), h.view()).unwrap();
        let expected = 0.5 * v.dot(&v) - v.dot(&p.weights.column(1));
        assert!((e - expected).abs() < 1e-14);
    }

    #[test]
    fn energy_rejects_bad_shapes_and_softmax_violations() {
        let p = gaussian_softmax(4, 3, 3);
        assert!(matches!(
            energy(&p, Array1::zeros(5).view(), Array1::zeros(3).view()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            energy(&p, Array1::zeros(4).view(), array![1.0, 1.0, 0.0].view()),
            Err(Error::InvalidHiddenState(_))
        ));
    }

    #[test]
    fn zero_weights_give_half_or_quarter() {
        let p = RbmParams::zeros(3, 3, 1.0, VisibleKind::Binary, HiddenKind::Binary).unwrap();
        let probs = hidden_given_visible(&p, array![1.0, 0.0, 1.0].view()).unwrap();
        assert!(probs.iter().all(|&q| q == 0.5));
        let p = RbmParams::zeros(3, 3, 1.0, VisibleKind::Gaussian, HiddenKind::Softmax).unwrap();
        let probs = hidden_given_visible(&p, array![1.0, 0.0, 1.0].view()).unwrap();
        assert!(probs.iter().all(|&q| (q - 0.25).abs() < 1e-15));
    }

    #[test]
    fn visible_conditional_with_hidden_off_is_bias() {
        let p = gaussian_softmax(4, 2, 4);
        let c = visible_given_hidden(&p, Array1::zeros(2).view()).unwrap();
        assert_eq!(c.mean(), &p.visible_bias);
        let h = array![0.0, 1.0];
        let c = visible_given_hidden(&p, h.view()).unwrap();
        let expected = &p.weights.column(1) * p.sigma + &p.visible_bias;
        assert_eq!(c.mean(), &expected);

        let mut b = p.clone();
        b.visible_kind = VisibleKind::Binary;
        let c = visible_given_hidden(&b, Array1::zeros(2).view()).unwrap();
        assert_eq!(c.mean(), &b.visible_bias.mapv(sigmoid));
    }

    #[test]
    fn gibbs_is_reproducible_and_respects_softmax() {
        let p = gaussian_softmax(5, 4, 5);
        let s0 = GibbsState {
            v: Array1::zeros(5),
            h: Array1::zeros(4),
        };
        let run = |seed| {
            let mut rng = seeded_rng(seed);
            let mut s = s0.clone();
            let mut out = Vec::new();
            for _ in 0..200 {
                s = gibbs_step(&p, &s, &mut rng).unwrap();
                assert!(s.h.sum() <= 1.0);
                out.push(s.clone());
            }
            out
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
        let mut rng = seeded_rng(11);
        let p = RbmParams::random(6, 3, 1.0, VisibleKind::Binary, HiddenKind::Binary, &mut rng).unwrap();
        let data = Array2::from_shape_fn((20, 6), |(i, j)| ((i + j) % 2) as f64);
        for method in [CdMethod::Cd, CdMethod::Pcd] {
            let cfg = TrainConfig {
                learning_rate: 0.0,
                method,
                batch_size: 7,
                epochs: 3,
                ..TrainConfig::default()
            };
            let out = train(&p, data.view(), &cfg).unwrap();
            assert_eq!(out.params, p);
            assert_eq!(out.trace.len(), 3);
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_error() {
        let mut rng = seeded_rng(12);
        let p = RbmParams::random(8, 2, 1.0, VisibleKind::Binary, HiddenKind::Binary, &mut rng).unwrap();
        let data = Array2::from_shape_fn((40, 8), |(i, j)| if (i % 2 == 0) == (j < 4) { 1.0 } else { 0.0 });
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 30,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train(&p, data.view(), &cfg).unwrap();
        let b = train(&p, data.view(), &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.iter().all(|e| e.is_finite() && *e >= 0.0));
        assert!(a.trace.last().unwrap() < &a.trace[0]);
    }

    #[test]
    fn divergent_learning_rate_is_reported() {
        let p = RbmParams::zeros(3, 2, 1.0, VisibleKind::Gaussian, HiddenKind::Binary).unwrap();
        let data = Array2::from_shape_fn((10, 3), |(i, j)| 1e150 * (i as f64 - j as f64));
        let cfg = TrainConfig {
            learning_rate: 1e200,
            momentum: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&p, data.view(), &cfg), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn reconstruction_error_matches_composed_conditionals() {
        let p = gaussian_softmax(5, 3, 13);
        let x = array![0.1, -0.4, 1.3, 0.0, 2.2];
        let h = hidden_given_visible(&p, x.view()).unwrap();
        let mean = p.weights.dot(&h) * p.sigma + &p.visible_bias;
        let expected: f64 = (&x - &mean).mapv(|d| d * d).sum();
        let got = reconstruction_error(&p, x.view()).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_fixed_point_has_zero_error() {
        // W = 0 makes the reconstruction equal to c regardless of x
        let mut p = RbmParams::zeros(3, 2, 1.0, VisibleKind::Gaussian, HiddenKind::Binary).unwrap();
        p.visible_bias = array![0.5, -1.0, 2.0];
        let x = p.visible_bias.clone();
        assert_eq!(reconstruction_error(&p, x.view()).unwrap(), 0.0);
    }

    #[test]
    fn reconstruction_error_is_invariant_to_visible_permutation() {
        let p = gaussian_softmax(5, 3, 14);
        let x = array![0.3, 0.1, -0.7, 1.5, -2.0];
        let perm = [3, 0, 4, 1, 2];
        let mut q = p.clone();
        let mut y = x.clone();
        for (dst, &src) in perm.iter().enumerate() {
            q.weights.row_mut(dst).assign(&p.weights.row(src));
            q.visible_bias[dst] = p.visible_bias[src];
            y[dst] = x[src];
        }
        let a = reconstruction_error(&p, x.view()).unwrap();
        let b = reconstruction_error(&q, y.view()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
