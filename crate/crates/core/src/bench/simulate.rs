//! Synthetic crowds drawn from the worker-confusion-matrix generative model:
//! a gold label per item from the class priors, a random subset of workers
//! per item, and each vote from the worker's confusion row for the gold label.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::experiment::merge_overrides;
use crate::data::{LabelDataset, LabelRecord};
use crate::error::{Error, Result};
use crate::math::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerConfusion {
    /// Every worker reports the truth with probability `accuracy` and each
    /// other label with probability `(1 - accuracy) / (C - 1)`.
    Diagonal { accuracy: f64 },
    /// One C×C matrix for every worker.
    Shared(Vec<Vec<f64>>),
    /// One C×C matrix per worker, in worker order.
    PerWorker(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_items: usize,
    pub num_workers: usize,
    pub votes_per_item: usize,
    pub class_priors: Vec<f64>,
    pub confusion: WorkerConfusion,
    #[serde(default)]
    pub ordinal: bool,
}

/// Flat file form: exactly one of `accuracy`, `confusion`, `worker_confusions`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    num_items: usize,
    num_workers: usize,
    votes_per_item: usize,
    #[serde(default)]
    num_classes: Option<usize>,
    #[serde(default)]
    class_priors: Option<Vec<f64>>,
    #[serde(default)]
    accuracy: Option<f64>,
    #[serde(default)]
    confusion: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    worker_confusions: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    ordinal: bool,
}

fn check_stochastic(m: &[Vec<f64>], c: usize, what: &str) -> Result<()> {
    if m.len() != c || m.iter().any(|r| r.len() != c) {
        return Err(Error::invalid(format!("{what} must be {c}x{c}")));
    }
    for row in m {
        if row.iter().any(|&x| !(x >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("{what} rows must be probability vectors")));
        }
    }
    Ok(())
}

impl SyntheticSpec {
    /// Uniform class priors and a shared diagonal-accuracy template.
    pub fn diagonal(
        num_items: usize,
        num_workers: usize,
        votes_per_item: usize,
        num_classes: usize,
        accuracy: f64,
    ) -> Self {
        Self {
            num_items,
            num_workers,
            votes_per_item,
            class_priors: vec![1.0 / num_classes as f64; num_classes],
            confusion: WorkerConfusion::Diagonal { accuracy },
            ordinal: false,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_priors.len()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Like `from_toml_str`, with `key=value` overrides applied first.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let table = merge_overrides(text, overrides)?;
        let raw: SpecFile = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let c = match (&raw.class_priors, raw.num_classes) {
            (Some(p), _) => p.len(),
            (None, Some(c)) => c,
            (None, None) => return Err(Error::Config("need class_priors or num_classes".into())),
        };
        let class_priors = raw.class_priors.unwrap_or_else(|| vec![1.0 / c as f64; c]);
        let confusion = match (raw.accuracy, raw.confusion, raw.worker_confusions) {
            (Some(accuracy), None, None) => WorkerConfusion::Diagonal { accuracy },
            (None, Some(m), None) => WorkerConfusion::Shared(m),
            (None, None, Some(ms)) => WorkerConfusion::PerWorker(ms),
            _ => {
                return Err(Error::Config(
                    "set exactly one of accuracy, confusion, worker_confusions".into(),
                ))
            }
        };
        let spec = Self {
            num_items: raw.num_items,
            num_workers: raw.num_workers,
            votes_per_item: raw.votes_per_item,
            class_priors,
            confusion,
            ordinal: raw.ordinal,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes();
        if c == 0 {
            return Err(Error::invalid("need at least one class"));
        }
        if self.votes_per_item == 0 || self.votes_per_item > self.num_workers {
            return Err(Error::invalid("votes_per_item must be in 1..=num_workers"));
        }
        if self.class_priors.iter().any(|&p| !(p >= 0.0))
            || (self.class_priors.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid("class_priors must be a probability vector"));
        }
        match &self.confusion {
            WorkerConfusion::Diagonal { accuracy } => {
                if !(0.0..=1.0).contains(accuracy) || (c == 1 && *accuracy != 1.0) {
                    return Err(Error::invalid("accuracy must lie in [0, 1]"));
                }
            }
            WorkerConfusion::Shared(m) => check_stochastic(m, c, "confusion")?,
            WorkerConfusion::PerWorker(ms) => {
                if ms.len() != self.num_workers {
                    return Err(Error::invalid("need one confusion matrix per worker"));
                }
                for m in ms {
                    check_stochastic(m, c, "worker confusion")?;
                }
            }
        }
        Ok(())
    }

    /// The confusion matrix used by `worker`.
    pub fn confusion_for(&self, worker: usize) -> Array2<f64> {
        let c = self.num_classes();
        match &self.confusion {
            WorkerConfusion::Diagonal { accuracy } => Array2::from_shape_fn((c, c), |(s, t)| {
                if s == t {
                    *accuracy
                } else {
                    (1.0 - accuracy) / (c - 1) as f64
                }
            }),
            WorkerConfusion::Shared(m) => Array2::from_shape_fn((c, c), |(s, t)| m[s][t]),
            WorkerConfusion::PerWorker(ms) => Array2::from_shape_fn((c, c), |(s, t)| ms[worker][s][t]),
        }
    }
}

fn id(prefix: char, index: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len();
    format!("{prefix}{index:0width$}")
}

/// Draws a labeled crowd dataset; ids are zero-padded so lexicographic order
/// equals numeric order.
pub fn simulate_crowd(spec: &SyntheticSpec, seed: u64) -> Result<LabelDataset> {
    spec.validate()?;
    let c = spec.num_classes();
    let mut rng = seeded_rng(seed);
    let prior = WeightedIndex::new(&spec.class_priors).map_err(|e| Error::invalid(e.to_string()))?;
    let rows: Vec<Vec<WeightedIndex<f64>>> = (0..spec.num_workers)
        .map(|w| {
            let m = spec.confusion_for(w);
            (0..c)
                .map(|s| WeightedIndex::new(m.row(s).to_vec()).map_err(|e| Error::invalid(e.to_string())))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(spec.num_items * spec.votes_per_item);
    let mut gold = BTreeMap::new();
    for i in 0..spec.num_items {
        let item = id('i', i, spec.num_items);
        let truth = prior.sample(&mut rng);
        let workers = rand::seq::index::sample(&mut rng, spec.num_workers, spec.votes_per_item);
        for w in workers.iter() {
            let label = rows[w][truth].sample(&mut rng);
            records.push(LabelRecord::new(item.clone(), id('w', w, spec.num_workers), label));
        }
        gold.insert(item, truth);
    }
    LabelDataset::new(records, c, Some(gold), spec.ordinal)
}
