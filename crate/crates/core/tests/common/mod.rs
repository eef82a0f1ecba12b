//! Independent oracles shared by the integration tests. Nothing here calls the
//! library's energy or conditional code; probabilities come from brute-force
//! enumeration of the energy written out by hand.

#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;
use voteagg::data::{LabelDataset, LabelRecord};
use voteagg::rbm::{HiddenKind, RbmParams, VisibleKind};

/// Hand-written energy for either visible kind.
pub fn energy(p: &RbmParams, v: &[f64], h: &[f64]) -> f64 {
    let (l, k) = p.weights.dim();
    let mut cross = 0.0;
    for i in 0..l {
        for j in 0..k {
            cross += v[i] * p.weights[[i, j]] * h[j];
        }
    }
    let hb: f64 = (0..k).map(|j| p.hidden_bias[j] * h[j]).sum();
    match p.visible_kind {
        VisibleKind::Binary => -(0..l).map(|i| v[i] * p.visible_bias[i]).sum::<f64>() - cross - hb,
        VisibleKind::Gaussian => {
            let s = p.sigma;
            let quad: f64 = (0..l).map(|i| (v[i] - p.visible_bias[i]).powi(2)).sum();
            quad / (2.0 * s * s) - cross / s - hb
        }
    }
}

pub fn binary_configs(n: usize) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|m| (0..n).map(|i| ((m >> i) & 1) as f64).collect())
        .collect()
}

/// All admissible hidden states for the parameter set's hidden kind.
pub fn hidden_configs(p: &RbmParams) -> Vec<Vec<f64>> {
    let k = p.num_hidden();
    match p.hidden_kind {
        HiddenKind::Binary => binary_configs(k),
        HiddenKind::Softmax => {
            let mut out = vec![vec![0.0; k]];
            for j in 0..k {
                let mut h = vec![0.0; k];
                h[j] = 1.0;
                out.push(h);
            }
            out
        }
    }
}

/// Joint distribution of a binary-visible RBM over every (v, h) pair.
pub fn enumerate_joint(p: &RbmParams) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    assert_eq!(p.visible_kind, VisibleKind::Binary);
    let mut states = Vec::new();
    for v in binary_configs(p.num_visible()) {
        for h in hidden_configs(p) {
            let e = energy(p, &v, &h);
            states.push((v.clone(), h, -e));
        }
    }
    let max = states.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = states.iter().map(|s| (s.2 - max).exp()).sum();
    states
        .into_iter()
        .map(|(v, h, a)| (v, h, (a - max).exp() / z))
        .collect()
}

/// `P(h_j = 1 | v)` by summing `exp(-E)` over hidden states.
pub fn enumerated_hidden_conditional(p: &RbmParams, v: &[f64]) -> Vec<f64> {
    let hs = hidden_configs(p);
    let w: Vec<f64> = hs.iter().map(|h| (-energy(p, v, h)).exp()).collect();
    let z: f64 = w.iter().sum();
    (0..p.num_hidden())
        .map(|j| hs.iter().zip(&w).filter(|(h, _)| h[j] == 1.0).map(|(_, x)| x).sum::<f64>() / z)
        .collect()
}

/// `P(v_i = 1 | h)` for binary visible units, by summing over visible states.
pub fn enumerated_visible_conditional(p: &RbmParams, h: &[f64]) -> Vec<f64> {
    let vs = binary_configs(p.num_visible());
    let w: Vec<f64> = vs.iter().map(|v| (-energy(p, v, h)).exp()).collect();
    let z: f64 = w.iter().sum();
    (0..p.num_visible())
        .map(|i| vs.iter().zip(&w).filter(|(v, _)| v[i] == 1.0).map(|(_, x)| x).sum::<f64>() / z)
        .collect()
}

pub fn random_rbm<R: Rng>(
    rng: &mut R,
    l: usize,
    k: usize,
    visible: VisibleKind,
    hidden: HiddenKind,
    scale: f64,
) -> RbmParams {
    let w = Array2::from_shape_fn((l, k), |_| rng.random_range(-scale..scale));
    let c = Array1::from_shape_fn(l, |_| rng.random_range(-scale..scale));
    let b = Array1::from_shape_fn(k, |_| rng.random_range(-scale..scale));
    let sigma = if visible == VisibleKind::Gaussian {
        rng.random_range(0.5..2.0)
    } else {
        1.0
    };
    RbmParams::new(w, c, b, sigma, visible, hidden).unwrap()
}

/// Binary-visible state index, visible bits first then hidden bits.
pub fn state_index(v: &[f64], h: &[f64]) -> usize {
    v.iter()
        .chain(h)
        .enumerate()
        .map(|(i, &x)| (x as usize) << i)
        .sum()
}

/// Items split evenly between two classes; every worker votes the item's class.
pub fn separable_dataset(num_items: usize, votes: usize) -> LabelDataset {
    let mut records = Vec::new();
    let mut gold = BTreeMap::new();
    for i in 0..num_items {
        let item = format!("i{i:04}");
        let label = i % 2;
        for w in 0..votes {
            records.push(LabelRecord::new(item.clone(), format!("w{w:02}"), label));
        }
        gold.insert(item, label);
    }
    LabelDataset::new(records, 2, Some(gold), false).unwrap()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact probability that majority vote with uniform tie-breaking mislabels an
/// item when `n` independent workers each report the truth with probability
/// `accuracy` and every other label with equal probability. Enumerates every
/// vote-count vector.
pub fn exact_majority_error(num_classes: usize, n: usize, accuracy: f64) -> f64 {
    let off = (1.0 - accuracy) / (num_classes - 1) as f64;
    let mut correct = 0.0;
    let mut counts = vec![0usize; num_classes];
    fn walk(c: usize, left: usize, counts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if c + 1 == counts.len() {
            counts[c] = left;
            f(counts);
            return;
        }
        for x in 0..=left {
            counts[c] = x;
            walk(c + 1, left - x, counts, f);
        }
    }
    walk(0, n, &mut counts, &mut |cs: &[usize]| {
        // class 0 is the truth
        let mut prob = 1.0;
        let mut left = n;
        for (c, &x) in cs.iter().enumerate() {
            prob *= binomial(left, x) * if c == 0 { accuracy } else { off }.powi(x as i32);
            left -= x;
        }
        let max = *cs.iter().max().unwrap();
        if cs[0] == max {
            let ties = cs.iter().filter(|&&x| x == max).count();
            correct += prob / ties as f64;
        }
    });
    1.0 - correct
}
