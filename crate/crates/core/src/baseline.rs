//! Majority voting and Dawid-Skene maximum-likelihood aggregation.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::data::LabelDataset;
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, seeded_rng};

/// Pseudocount added to every confusion-matrix cell in the M-step.
pub const CONFUSION_PSEUDOCOUNT: f64 = 1e-6;

/// Modal label per item. Ties are broken uniformly at random by a generator
/// seeded with `seed`, visiting items in lexicographic order.
pub fn majority_vote(ds: &LabelDataset, seed: u64) -> Result<BTreeMap<String, usize>> {
    let c = ds.num_classes();
    let mut rng = seeded_rng(seed);
    let mut out = BTreeMap::new();
    for (item, votes) in ds.votes_by_item() {
        if votes.is_empty() {
            return Err(Error::NoVotes(item.clone()));
        }
        let mut counts = vec![0usize; c];
        for (_, label) in votes {
            counts[*label] += 1;
        }
        let best = *counts.iter().max().expect("at least one class");
        let modal: Vec<usize> = (0..c).filter(|&l| counts[l] == best).collect();
        let label = if modal.len() == 1 {
            modal[0]
        } else {
            modal[rng.random_range(0..modal.len())]
        };
        out.insert(item.clone(), label);
    }
    Ok(out)
}

/// Fitted Dawid-Skene model.
#[derive(Debug, Clone)]
pub struct ConfusionModel {
    /// Per worker, a C×C row-stochastic matrix; entry `(s, t)` is the
    /// probability of reporting `t` when the truth is `s`.
    pub worker_confusions: BTreeMap<String, Array2<f64>>,
    pub class_priors: Array1<f64>,
    /// Per item, the posterior over true labels.
    pub posteriors: BTreeMap<String, Array1<f64>>,
}

impl ConfusionModel {
    pub fn num_classes(&self) -> usize {
        self.class_priors.len()
    }

    /// Argmax of each posterior; ties go to the lowest label.
    pub fn labels(&self) -> BTreeMap<String, usize> {
        self.posteriors
            .iter()
            .map(|(item, post)| {
                let mut best = 0;
                for (l, &p) in post.iter().enumerate() {
                    if p > post[best] {
                        best = l;
                    }
                }
                (item.clone(), best)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DawidSkeneFit {
    pub model: ConfusionModel,
    /// Observed-data log-likelihood after every EM iteration.
    pub log_likelihood: Vec<f64>,
    /// Log-likelihood plus the smoothing log-prior, per iteration. The
    /// pseudocounts make EM a MAP procedure, so this is the quantity EM can
    /// never decrease; the raw log-likelihood may dip by a tiny amount.
    pub log_posterior: Vec<f64>,
    pub converged: bool,
}

/// Index-based view of a dataset used by the EM loops.
struct Indexed<'a> {
    items: Vec<&'a str>,
    workers: Vec<&'a str>,
    // (item index, worker index, label)
    votes: Vec<(usize, usize, usize)>,
}

impl<'a> Indexed<'a> {
    fn new(ds: &'a LabelDataset) -> Self {
        let items: Vec<&str> = ds.items().collect();
        let workers = ds.workers();
        let worker_idx: BTreeMap<&str, usize> =
            workers.iter().enumerate().map(|(i, w)| (*w, i)).collect();
        let mut votes = Vec::with_capacity(ds.records().len());
        for (i, (_, vs)) in ds.votes_by_item().iter().enumerate() {
            for (w, l) in vs {
                votes.push((i, worker_idx[w.as_str()], *l));
            }
        }
        Self {
            items,
            workers,
            votes,
        }
    }
}

fn m_step(idx: &Indexed<'_>, post: &Array2<f64>, c: usize) -> (Array1<f64>, Vec<Array2<f64>>) {
    let n = post.nrows() as f64;
    let priors = post.sum_axis(ndarray::Axis(0)) / n;
    let mut conf = vec![Array2::from_elem((c, c), CONFUSION_PSEUDOCOUNT); idx.workers.len()];
    for &(i, w, l) in &idx.votes {
        for s in 0..c {
            conf[w][[s, l]] += post[[i, s]];
        }
    }
    for m in &mut conf {
        for mut row in m.rows_mut() {
            let total = row.sum();
            row /= total;
        }
    }
    (priors, conf)
}

/// Unnormalized log joint `log P(y_i = s, votes_i)` for every item and class.
fn log_joint(
    idx: &Indexed<'_>,
    priors: &Array1<f64>,
    conf: &[Array2<f64>],
    c: usize,
) -> Array2<f64> {
    let log_prior = priors.mapv(f64::ln);
    let mut lj = Array2::from_shape_fn((idx.items.len(), c), |(_, s)| log_prior[s]);
    for &(i, w, l) in &idx.votes {
        for s in 0..c {
            lj[[i, s]] += conf[w][[s, l]].ln();
        }
    }
    lj
}

/// Normalizes each row in place and returns the total log-likelihood.
fn e_step(lj: &mut Array2<f64>) -> f64 {
    let mut total = 0.0;
    for mut row in lj.rows_mut() {
        let lse = log_sum_exp(row.as_slice().expect("standard layout"));
        total += lse;
        row.mapv_inplace(|x| (x - lse).exp());
    }
    total
}

/// Dawid-Skene EM. Posteriors start at the per-item vote frequencies; each
/// iteration is an M-step (priors and smoothed confusion matrices) followed
/// by an E-step. Stops when the relative log-likelihood change drops below
/// `tol` or after `max_iters` iterations.
pub fn dawid_skene(ds: &LabelDataset, max_iters: usize, tol: f64) -> Result<DawidSkeneFit> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let c = ds.num_classes();
    let idx = Indexed::new(ds);
    let mut post = Array2::<f64>::zeros((idx.items.len(), c));
    for &(i, _, l) in &idx.votes {
        post[[i, l]] += 1.0;
    }
    for mut row in post.rows_mut() {
        let total = row.sum();
        row /= total;
    }

    let mut trace: Vec<f64> = Vec::new();
    let mut penalized = Vec::new();
    let mut converged = false;
    let mut priors = Array1::zeros(c);
    let mut conf = Vec::new();
    for _ in 0..max_iters {
        (priors, conf) = m_step(&idx, &post, c);
        let mut lj = log_joint(&idx, &priors, &conf, c);
        let ll = e_step(&mut lj);
        post = lj;
        let done = trace
            .last()
            .is_some_and(|prev: &f64| (ll - prev).abs() < tol * prev.abs().max(f64::MIN_POSITIVE));
        trace.push(ll);
        penalized.push(ll + log_prior_of(&conf));
        if done {
            converged = true;
            break;
        }
    }

    let model = ConfusionModel {
        worker_confusions: idx
            .workers
            .iter()
            .zip(conf)
            .map(|(w, m)| (w.to_string(), m))
            .collect(),
        class_priors: priors,
        posteriors: idx
            .items
            .iter()
            .zip(post.rows())
            .map(|(item, row)| (item.to_string(), row.to_owned()))
            .collect(),
    };
    Ok(DawidSkeneFit {
        model,
        log_likelihood: trace,
        log_posterior: penalized,
        converged,
    })
}

fn log_prior_of<'a>(conf: impl IntoIterator<Item = &'a Array2<f64>>) -> f64 {
    CONFUSION_PSEUDOCOUNT * conf.into_iter().flat_map(|m| m.iter()).map(|x| x.ln()).sum::<f64>()
}

/// Smoothing log-prior `α Σ_w Σ_{s,t} log conf_w[s, t]` with `α` the
/// confusion pseudocount (a Dirichlet prior, up to a constant).
pub fn ds_log_prior(model: &ConfusionModel) -> f64 {
    log_prior_of(model.worker_confusions.values())
}

/// Observed-data log-likelihood `Σ_i log Σ_s π_s Π_{votes on i} conf_w[s, label]`.
pub fn ds_log_likelihood(ds: &LabelDataset, model: &ConfusionModel) -> Result<f64> {
    let c = ds.num_classes();
    if model.num_classes() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            found: model.num_classes(),
        });
    }
    let log_prior = model.class_priors.mapv(f64::ln);
    let mut total = 0.0;
    let mut terms = vec![0.0; c];
    for (item, votes) in ds.votes_by_item() {
        terms.copy_from_slice(log_prior.as_slice().expect("contiguous"));
        for (w, l) in votes {
            let m = model.worker_confusions.get(w).ok_or_else(|| {
                Error::invalid(format!("worker `{w}` (item `{item}`) is not in the model"))
            })?;
            if m.dim() != (c, c) {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    found: m.nrows(),
                });
            }
            for (s, t) in terms.iter_mut().enumerate() {
                *t += m[[s, *l]].ln();
            }
        }
        total += log_sum_exp(&terms);
    }
    Ok(total)
}
