//! K-RBM clustering of vote encodings and decoding of clusters to labels.
//!
//! `K` component RBMs of identical architecture compete for items. Each outer
//! iteration assigns every item to the component that reconstructs it with
//! the smallest squared error, then trains every component for a fixed
//! number of epochs on its own members only. Clusters are turned into labels
//! by the majority of the observed votes on their members.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{LabelDataset, VoteEncoding};
use crate::error::{Error, Result};
use crate::math::{derive_seed, seeded_rng};
use crate::rbm::{reconstruction_error_unchecked, train, HiddenKind, RbmParams, TrainConfig, VisibleKind};

/// Shape shared by every component RBM; the visible size comes from the encoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub hidden: usize,
    pub visible_kind: VisibleKind,
    pub hidden_kind: HiddenKind,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub component: usize,
    pub mean_recon_error: f64,
}

#[derive(Debug, Clone)]
pub struct KRbmState {
    pub components: Vec<RbmParams>,
    /// Item ids, aligned with `assignment` and with the encoding rows.
    pub items: Vec<String>,
    pub assignment: Vec<usize>,
    /// `Σ_n min_k ε_kn` at every assignment step.
    pub epsilon_history: Vec<f64>,
    /// Outer iterations that trained the components.
    pub iteration: usize,
    /// Mean reconstruction error per member after each component's training.
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

impl KRbmState {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn assignment_map(&self) -> BTreeMap<String, usize> {
        self.items
            .iter()
            .cloned()
            .zip(self.assignment.iter().copied())
            .collect()
    }
}

/// `ε[n, k]`: squared reconstruction error of row `n` under component `k`.
pub fn reconstruction_table(components: &[RbmParams], data: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    for c in components {
        if c.num_visible() != data.ncols() {
            return Err(Error::DimensionMismatch {
                expected: c.num_visible(),
                found: data.ncols(),
            });
        }
    }
    let k = components.len();
    let flat: Vec<f64> = (0..data.nrows())
        .into_par_iter()
        .flat_map_iter(|n| {
            let x = data.row(n);
            components.iter().map(move |c| reconstruction_error_unchecked(c, x))
        })
        .collect();
    let table = Array2::from_shape_vec((data.nrows(), k), flat).expect("row-major table");
    Ok(table)
}

/// Row-wise argmin (ties to the lowest component) and the row minima.
fn argmin_rows(table: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    table
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = (0, row[0]);
            for (k, &e) in row.iter().enumerate().skip(1) {
                if e < best.1 {
                    best = (k, e);
                }
            }
            best
        })
        .unzip()
}

/// Assigns every item to the component with the smallest reconstruction
/// error; ties go to the lowest component index.
pub fn assign_items(state: &KRbmState, enc: &VoteEncoding) -> Result<Vec<usize>> {
    if state.components.is_empty() {
        return Err(Error::invalid("state has no components"));
    }
    let table = reconstruction_table(&state.components, enc.vectors().view())?;
    Ok(argmin_rows(&table).0)
}

/// Gives every empty component the `ceil(N / (10 K))` items with the largest
/// minimum reconstruction error, never emptying a donor component.
pub fn repair_empty_components(assignment: &mut [usize], min_errors: &[f64], k: usize) -> Result<()> {
    let n = assignment.len();
    if n < k {
        return Err(Error::EmptyCluster(format!("{n} items cannot fill {k} components")));
    }
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    if counts.iter().all(|&c| c > 0) {
        return Ok(());
    }
    let quota = n.div_ceil(10 * k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| min_errors[b].total_cmp(&min_errors[a]).then(a.cmp(&b)));
    let mut moved = vec![false; n];
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut taken = 0;
        for &i in &order {
            if taken == quota {
                break;
            }
            let from = assignment[i];
            if moved[i] || counts[from] <= 1 {
                continue;
            }
            counts[from] -= 1;
            counts[j] += 1;
            assignment[i] = j;
            moved[i] = true;
            taken += 1;
        }
        if counts[j] == 0 {
            return Err(Error::EmptyCluster(format!("no donor item for component {j}")));
        }
    }
    Ok(())
}

/// Fits `k` component RBMs to the encoded items.
///
/// Stops once an assignment step leaves every item where it was, or after
/// `outer_iters` training rounds. The returned assignment and the last
/// `epsilon_history` entry always reflect the final parameters.
pub fn krbm_fit(
    enc: &VoteEncoding,
    k: usize,
    arch: &Architecture,
    cfg: &TrainConfig,
    outer_iters: usize,
    seed: u64,
) -> Result<KRbmState> {
    if k == 0 {
        return Err(Error::invalid("need at least one component"));
    }
    if outer_iters == 0 {
        return Err(Error::invalid("outer_iters must be at least 1"));
    }
    if arch.hidden == 0 {
        return Err(Error::invalid("components need at least one hidden unit"));
    }
    cfg.validate()?;
    let data = enc.vectors();
    let n = data.nrows();
    if n < k {
        return Err(Error::EmptyCluster(format!("{n} items cannot fill {k} components")));
    }
    let mut components = (0..k)
        .map(|j| {
            let mut rng = seeded_rng(derive_seed(seed, j as u64));
            RbmParams::random(enc.dim(), arch.hidden, arch.sigma, arch.visible_kind, arch.hidden_kind, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut assignment: Vec<usize> = Vec::new();
    let mut epsilon_history = Vec::new();
    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut converged = false;
    loop {
        let table = reconstruction_table(&components, data.view())?;
        let (mut next, minima) = argmin_rows(&table);
        epsilon_history.push(minima.iter().sum());
        repair_empty_components(&mut next, &minima, k)?;
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;
        if iteration == outer_iters {
            break;
        }

        let round_seed = derive_seed(seed, 1_000_003 + iteration as u64);
        let trained: Vec<(RbmParams, f64)> = components
            .par_iter()
            .enumerate()
            .map(|(j, comp)| {
                let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == j).collect();
                let subset = data.select(Axis(0), &members);
                let cfg = TrainConfig {
                    seed: derive_seed(round_seed, j as u64),
                    ..cfg.clone()
                };
                let out = train(comp, subset.view(), &cfg)?;
                let last = *out.trace.last().expect("epochs > 0");
                Ok((out.params, last))
            })
            .collect::<Result<Vec<_>>>()?;
        for (j, (params, err)) in trained.into_iter().enumerate() {
            components[j] = params;
            trace.push(TraceRow {
                iteration,
                component: j,
                mean_recon_error: err,
            });
        }
        iteration += 1;
    }
    Ok(KRbmState {
        components,
        items: enc.items().to_vec(),
        assignment,
        epsilon_history,
        iteration,
        trace,
        converged,
    })
}

#[derive(Debug, Clone)]
pub struct AggregationResult {
    pub predicted: BTreeMap<String, usize>,
    /// Label of every non-empty cluster.
    pub cluster_to_label: BTreeMap<usize, usize>,
    pub state: KRbmState,
}

/// Labels each cluster with the most frequent observed vote among its
/// members' votes (ties broken by a generator seeded with `seed`, clusters in
/// index order) and gives every item its cluster's label. Gold labels are
/// never read.
pub fn decode_assignment(
    items: &[String],
    assignment: &[usize],
    ds: &LabelDataset,
    seed: u64,
) -> Result<(BTreeMap<String, usize>, BTreeMap<usize, usize>)> {
    if items.len() != assignment.len() {
        return Err(Error::DimensionMismatch {
            expected: items.len(),
            found: assignment.len(),
        });
    }
    let c = ds.num_classes();
    let mut counts: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (item, &cluster) in items.iter().zip(assignment) {
        let votes = ds
            .votes(item)
            .ok_or_else(|| Error::invalid(format!("item `{item}` is not in the dataset")))?;
        let tally = counts.entry(cluster).or_insert_with(|| vec![0; c]);
        for (_, label) in votes {
            tally[*label] += 1;
        }
    }
    for item in ds.items() {
        if items.binary_search_by(|probe| probe.as_str().cmp(item)).is_err() {
            return Err(Error::invalid(format!("item `{item}` has no cluster")));
        }
    }
    let mut rng = seeded_rng(seed);
    let mut cluster_to_label = BTreeMap::new();
    for (cluster, tally) in counts {
        let best = *tally.iter().max().expect("num_classes > 0");
        let modal: Vec<usize> = (0..c).filter(|&l| tally[l] == best).collect();
        let label = if modal.len() == 1 {
            modal[0]
        } else {
            modal[rng.random_range(0..modal.len())]
        };
        cluster_to_label.insert(cluster, label);
    }
    let predicted = items
        .iter()
        .zip(assignment)
        .map(|(item, cluster)| (item.clone(), cluster_to_label[cluster]))
        .collect();
    Ok((predicted, cluster_to_label))
}

pub fn decode_clusters(state: KRbmState, ds: &LabelDataset, seed: u64) -> Result<AggregationResult> {
    let (predicted, cluster_to_label) = decode_assignment(&state.items, &state.assignment, ds, seed)?;
    Ok(AggregationResult {
        predicted,
        cluster_to_label,
        state,
    })
}
