use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{derive_seed, seeded_rng, squared_distance};

const MAX_LLOYD_ITERS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// One center per row.
    pub centers: Array2<f64>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances from each point to its assigned center.
    pub objective: f64,
    pub restarts_used: usize,
    /// Objective after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

impl KMeansResult {
    pub fn k(&self) -> usize {
        self.centers.nrows()
    }
}

/// Index of the nearest row of `centers`; ties go to the lowest index.
pub fn nearest_center(centers: ArrayView2<'_, f64>, x: ArrayView1<'_, f64>) -> (usize, f64) {
    let xs = x.as_slice();
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.rows().into_iter().enumerate() {
        let d = match (xs, c.as_slice()) {
            (Some(a), Some(b)) => squared_distance(a, b),
            _ => x.iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum(),
        };
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn kmeans_objective(
    data: ArrayView2<'_, f64>,
    centers: ArrayView2<'_, f64>,
    assignment: &[usize],
) -> f64 {
    data.rows()
        .into_iter()
        .zip(assignment)
        .map(|(x, &j)| {
            x.iter()
                .zip(centers.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum()
}

fn distinct_rows(data: ArrayView2<'_, f64>) -> Vec<usize> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, row) in data.rows().into_iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
        if seen.insert(key) {
            out.push(i);
        }
    }
    out
}

fn assign_all(data: ArrayView2<'_, f64>, centers: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    data.rows()
        .into_iter()
        .map(|x| nearest_center(centers.view(), x))
        .unzip()
}

fn lloyd(data: ArrayView2<'_, f64>, k: usize, distinct: &[usize], seed: u64) -> KMeansResult {
    let mut rng = seeded_rng(seed);
    let mut pool = distinct.to_vec();
    pool.shuffle(&mut rng);
    let mut centers = data.select(ndarray::Axis(0), &pool[..k]);
    let (mut assignment, mut cost) = assign_all(data, &centers);
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        history.push(cost.iter().sum());
        repair_empty_clusters(k, &mut assignment, &mut cost);
        centers = centroids(data, &assignment, k);
        let (next, next_cost) = assign_all(data, &centers);
        let unchanged = next == assignment;
        assignment = next;
        cost = next_cost;
        if unchanged {
            break;
        }
    }
    let objective = cost.iter().sum();
    history.push(objective);
    KMeansResult {
        centers,
        assignment,
        objective,
        restarts_used: 1,
        history,
    }
}

/// Moves the highest-cost point into every empty cluster, taking it only from
/// clusters that keep at least one other member.
fn repair_empty_clusters(k: usize, assignment: &mut [usize], cost: &mut [f64]) {
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let donor = (0..assignment.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(b.cmp(&a)));
        if let Some(i) = donor {
            counts[assignment[i]] -= 1;
            counts[j] += 1;
            assignment[i] = j;
            cost[i] = 0.0;
        }
    }
}

fn centroids(data: ArrayView2<'_, f64>, assignment: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, data.ncols()));
    let mut counts = vec![0usize; k];
    for (x, &j) in data.rows().into_iter().zip(assignment) {
        let mut row = sums.row_mut(j);
        row += &x;
        counts[j] += 1;
    }
    for (mut row, &n) in sums.rows_mut().into_iter().zip(&counts) {
        if n > 0 {
            row /= n as f64;
        }
    }
    sums
}

/// Lloyd's algorithm from `restarts` seeded random initializations (k distinct
/// data points each); returns the run with the smallest objective, ties to the
/// earliest restart.
pub fn kmeans(data: ArrayView2<'_, f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if data.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || restarts == 0 {
        return Err(Error::invalid("k and restarts must be positive"));
    }
    let distinct = distinct_rows(data);
    if k > distinct.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} distinct points",
            distinct.len()
        )));
    }
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(data, k, &distinct, derive_seed(seed, r as u64)))
        .collect();
    let mut best = runs
        .into_iter()
        .reduce(|best, run| if run.objective < best.objective { run } else { best })
        .expect("restarts > 0");
    best.restarts_used = restarts;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_center_per_point_is_exact() {
        let data = array![[0.0, 1.0], [3.0, -2.0], [5.0, 5.0]];
        let r = kmeans(data.view(), 3, 4, 1).unwrap();
        assert_eq!(r.objective, 0.0);
        let mut used = r.assignment.clone();
        used.sort_unstable();
        assert_eq!(used, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_k_beyond_distinct_points() {
        let data = array![[1.0], [1.0], [2.0]];
        assert!(kmeans(data.view(), 3, 1, 0).is_err());
        assert!(kmeans(Array2::<f64>::zeros((0, 2)).view(), 1, 1, 0).is_err());
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let centers = array![[-1.0], [1.0]];
        assert_eq!(nearest_center(centers.view(), array![0.0].view()).0, 0);
    }

    #[test]
    fn empty_cluster_repair_takes_worst_point() {
        let mut assignment = vec![0, 0, 0];
        let mut cost = vec![1.0, 5.0, 2.0];
        repair_empty_clusters(2, &mut assignment, &mut cost);
        assert_eq!(assignment, vec![0, 1, 0]);
    }
}
