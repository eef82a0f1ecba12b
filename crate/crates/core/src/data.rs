//! Crowd label datasets and their fixed-width per-item vote encodings.
//!
//! A dataset is a sparse set of `(item, worker, label)` records. Before an
//! item can be fed to an RBM its votes are laid out in `slots` fixed worker
//! slots: items with more votes are subsampled with a seeded generator, items
//! with fewer are padded, and the surviving votes are ordered by worker id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::seeded_rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub item: String,
    pub worker: String,
    pub label: usize,
}

impl LabelRecord {
    pub fn new(item: impl Into<String>, worker: impl Into<String>, label: usize) -> Self {
        Self {
            item: item.into(),
            worker: worker.into(),
            label,
        }
    }
}

/// Observed crowd labels plus optional gold labels.
///
/// Construction validates every invariant: labels are below `num_classes`,
/// each worker labels an item at most once, and gold labels only reference
/// items that received votes.
#[derive(Debug, Clone)]
pub struct LabelDataset {
    records: Vec<LabelRecord>,
    num_classes: usize,
    gold: Option<BTreeMap<String, usize>>,
    ordinal: bool,
    // item -> [(worker, label)] sorted by worker id
    by_item: BTreeMap<String, Vec<(String, usize)>>,
}

impl LabelDataset {
    pub fn new(
        records: Vec<LabelRecord>,
        num_classes: usize,
        gold: Option<BTreeMap<String, usize>>,
        ordinal: bool,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be at least 1"));
        }
        let mut by_item: BTreeMap<String, Vec<(String, usize)>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for r in &records {
            if r.label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    item: r.item.clone(),
                    label: r.label,
                    num_classes,
                });
            }
            if !seen.insert((r.item.as_str(), r.worker.as_str())) {
                return Err(Error::DuplicateVote {
                    item: r.item.clone(),
                    worker: r.worker.clone(),
                });
            }
            by_item
                .entry(r.item.clone())
                .or_default()
                .push((r.worker.clone(), r.label));
        }
        for votes in by_item.values_mut() {
            votes.sort();
        }
        if let Some(gold) = &gold {
            for (item, &label) in gold {
                if !by_item.contains_key(item) {
                    return Err(Error::UnknownGoldItem(item.clone()));
                }
                if label >= num_classes {
                    return Err(Error::LabelOutOfRange {
                        item: item.clone(),
                        label,
                        num_classes,
                    });
                }
            }
        }
        Ok(Self {
            records,
            num_classes,
            gold,
            ordinal,
            by_item,
        })
    }

    pub fn with_ordinal(mut self, ordinal: bool) -> Self {
        self.ordinal = ordinal;
        self
    }

    /// Same votes, gold labels dropped.
    pub fn without_gold(&self) -> Self {
        Self {
            gold: None,
            ..self.clone()
        }
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn gold(&self) -> Option<&BTreeMap<String, usize>> {
        self.gold.as_ref()
    }

    pub fn is_ordinal(&self) -> bool {
        self.ordinal
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_items(&self) -> usize {
        self.by_item.len()
    }

    pub fn num_workers(&self) -> usize {
        self.workers().len()
    }

    /// Item ids in lexicographic order.
    pub fn items(&self) -> impl Iterator<Item = &str> {
        self.by_item.keys().map(String::as_str)
    }

    /// Worker ids in lexicographic order.
    pub fn workers(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.worker.as_str()).collect();
        set.into_iter().collect()
    }

    /// Votes on `item` as `(worker, label)` pairs sorted by worker id.
    pub fn votes(&self, item: &str) -> Option<&[(String, usize)]> {
        self.by_item.get(item).map(Vec::as_slice)
    }

    /// All items with their votes, items and workers both in lexicographic order.
    pub fn votes_by_item(&self) -> &BTreeMap<String, Vec<(String, usize)>> {
        &self.by_item
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(Error::Parse {
            row: 1,
            column: "header".into(),
            message: format!("expected `{}`, found `{}`", expected.join(","), found.join(",")),
        });
    }
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str, row: usize) -> Result<&'a str> {
    match rec.get(idx) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(Error::Parse {
            row,
            column: name.into(),
            message: "missing value".into(),
        }),
    }
}

fn parse_label(s: &str, row: usize) -> Result<usize> {
    s.parse().map_err(|e| Error::Parse {
        row,
        column: "label".into(),
        message: format!("`{s}` is not a class index ({e})"),
    })
}

fn row_of(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Reads gold labels from a CSV file with header `item,label`.
pub fn load_gold(path: impl AsRef<Path>) -> Result<BTreeMap<String, usize>> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    check_header(&mut reader, &["item", "label"])?;
    let mut gold = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = row_of(&rec);
        let item = field(&rec, 0, "item", row)?;
        let label = parse_label(field(&rec, 1, "label", row)?, row)?;
        if gold.insert(item.to_string(), label).is_some() {
            return Err(Error::Parse {
                row,
                column: "item".into(),
                message: format!("duplicate gold label for `{item}`"),
            });
        }
    }
    Ok(gold)
}

/// Reads a vote file with header `item,worker,label` and an optional gold file.
pub fn load_dataset(
    path: impl AsRef<Path>,
    num_classes: usize,
    gold_path: Option<&Path>,
) -> Result<LabelDataset> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    check_header(&mut reader, &["item", "worker", "label"])?;
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = row_of(&rec);
        let item = field(&rec, 0, "item", row)?;
        let worker = field(&rec, 1, "worker", row)?;
        let label = parse_label(field(&rec, 2, "label", row)?, row)?;
        records.push(LabelRecord::new(item, worker, label));
    }
    let gold = gold_path.map(load_gold).transpose()?;
    LabelDataset::new(records, num_classes, gold, false)
}

pub fn write_dataset(ds: &LabelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["item", "worker", "label"])?;
    for r in ds.records() {
        w.write_record([r.item.as_str(), r.worker.as_str(), &r.label.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes an `item,label` CSV; used for gold files and for predictions.
pub fn write_labels(labels: &BTreeMap<String, usize>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["item", "label"])?;
    for (item, label) in labels {
        w.write_record([item.as_str(), &label.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingScheme {
    /// `slots * C` units; one indicator block per slot.
    OneHot,
    /// `slots * ceil(log2 C)` units; label bits, least-significant first.
    CompactBinary,
    /// `slots` units holding the raw label values.
    RealValued,
}

impl EncodingScheme {
    pub fn dim(self, slots: usize, num_classes: usize) -> usize {
        match self {
            EncodingScheme::OneHot => slots * num_classes,
            EncodingScheme::CompactBinary => slots * bits_for_classes(num_classes),
            EncodingScheme::RealValued => slots,
        }
    }

    pub fn is_binary(self) -> bool {
        !matches!(self, EncodingScheme::RealValued)
    }
}

impl fmt::Display for EncodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncodingScheme::OneHot => "one_hot",
            EncodingScheme::CompactBinary => "compact_binary",
            EncodingScheme::RealValued => "real_valued",
        })
    }
}

impl FromStr for EncodingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_hot" | "onehot" => Ok(EncodingScheme::OneHot),
            "compact_binary" | "binary" => Ok(EncodingScheme::CompactBinary),
            "real_valued" | "real" => Ok(EncodingScheme::RealValued),
            other => Err(Error::invalid(format!("unknown encoding scheme `{other}`"))),
        }
    }
}

/// Bits needed to write every label in `[0, C)`; at least one.
pub fn bits_for_classes(num_classes: usize) -> usize {
    let mut bits = 0;
    while (1usize << bits) < num_classes {
        bits += 1;
    }
    bits.max(1)
}

/// Per-item visible vectors, one row per item in lexicographic item order.
#[derive(Debug, Clone)]
pub struct VoteEncoding {
    pub scheme: EncodingScheme,
    pub slots: usize,
    pub num_classes: usize,
    items: Vec<String>,
    vectors: Array2<f64>,
}

impl VoteEncoding {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    /// The item × dim matrix of visible vectors.
    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, item: &str) -> Option<ArrayView1<'_, f64>> {
        self.items
            .binary_search_by(|probe| probe.as_str().cmp(item))
            .ok()
            .map(|i| self.vectors.row(i))
    }

    /// Returns a copy with every column shifted to zero mean and scaled to
    /// unit variance across items. Constant columns are only centered.
    pub fn standardized(&self) -> VoteEncoding {
        let n = self.vectors.nrows().max(1) as f64;
        let mut out = self.vectors.clone();
        for mut col in out.columns_mut() {
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            col.mapv_inplace(|x| (x - mean) / sd);
        }
        VoteEncoding {
            vectors: out,
            ..self.clone()
        }
    }

    /// Builds an encoding from raw rows; rows must already be in item order.
    pub fn from_parts(
        scheme: EncodingScheme,
        slots: usize,
        num_classes: usize,
        items: Vec<String>,
        vectors: Array2<f64>,
    ) -> Result<Self> {
        if items.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: items.len(),
                found: vectors.nrows(),
            });
        }
        if items.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("encoding items must be strictly sorted"));
        }
        Ok(Self {
            scheme,
            slots,
            num_classes,
            items,
            vectors,
        })
    }
}

/// Chooses at most `slots` votes per item. Items are visited in lexicographic
/// order with one generator seeded by `seed`, so the selection is a pure
/// function of the inputs. Selected votes stay in worker-id order.
pub fn select_slot_votes(
    ds: &LabelDataset,
    slots: usize,
    seed: u64,
) -> BTreeMap<String, Vec<(String, usize)>> {
    let mut rng = seeded_rng(seed);
    ds.votes_by_item()
        .iter()
        .map(|(item, votes)| {
            let chosen = if votes.len() > slots {
                let mut idx = rand::seq::index::sample(&mut rng, votes.len(), slots).into_vec();
                idx.sort_unstable();
                idx.into_iter().map(|i| votes[i].clone()).collect()
            } else {
                votes.clone()
            };
            (item.clone(), chosen)
        })
        .collect()
}

/// Lays every item's votes out in `slots` fixed slots.
///
/// Missing votes are all-zero slots under the binary schemes and the item's
/// mean observed label under `RealValued`. Under `CompactBinary` an empty
/// slot is indistinguishable from label 0.
pub fn encode_votes(
    ds: &LabelDataset,
    scheme: EncodingScheme,
    slots: usize,
    seed: u64,
) -> Result<VoteEncoding> {
    if slots == 0 {
        return Err(Error::invalid("slots must be at least 1"));
    }
    let c = ds.num_classes();
    let dim = scheme.dim(slots, c);
    let bits = bits_for_classes(c);
    let selected = select_slot_votes(ds, slots, seed);
    let mut vectors = Array2::zeros((selected.len(), dim));
    let mut items = Vec::with_capacity(selected.len());
    for (row, (item, votes)) in selected.into_iter().enumerate() {
        let mut v = vectors.row_mut(row);
        match scheme {
            EncodingScheme::OneHot => {
                for (slot, (_, label)) in votes.iter().enumerate() {
                    v[slot * c + label] = 1.0;
                }
            }
            EncodingScheme::CompactBinary => {
                for (slot, (_, label)) in votes.iter().enumerate() {
                    for bit in 0..bits {
                        if (label >> bit) & 1 == 1 {
                            v[slot * bits + bit] = 1.0;
                        }
                    }
                }
            }
            EncodingScheme::RealValued => {
                let mean = if votes.is_empty() {
                    0.0
                } else {
                    votes.iter().map(|(_, l)| *l as f64).sum::<f64>() / votes.len() as f64
                };
                v.fill(mean);
                for (slot, (_, label)) in votes.iter().enumerate() {
                    v[slot] = *label as f64;
                }
            }
        }
        items.push(item);
    }
    Ok(VoteEncoding {
        scheme,
        slots,
        num_classes: c,
        items,
        vectors,
    })
}

/// Recovers the per-item vote labels (in slot order) from a one-hot encoding.
pub fn decode_one_hot(enc: &VoteEncoding) -> Result<BTreeMap<String, Vec<usize>>> {
    if enc.scheme != EncodingScheme::OneHot {
        return Err(Error::invalid("decode_one_hot needs a one-hot encoding"));
    }
    let c = enc.num_classes;
    let mut out = BTreeMap::new();
    for (item, row) in enc.items.iter().zip(enc.vectors.rows()) {
        let mut labels = Vec::new();
        for slot in 0..enc.slots {
            let block = row.slice(ndarray::s![slot * c..(slot + 1) * c]);
            let hot: Vec<usize> = (0..c).filter(|&j| block[j] == 1.0).collect();
            match hot.as_slice() {
                [] => {}
                [label] => labels.push(*label),
                _ => {
                    return Err(Error::invalid(format!(
                        "slot {slot} of `{item}` has {} active units",
                        hot.len()
                    )))
                }
            }
        }
        out.insert(item.clone(), labels);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ds(records: &[(&str, &str, usize)], c: usize) -> LabelDataset {
        LabelDataset::new(
            records
                .iter()
                .map(|&(i, w, l)| LabelRecord::new(i, w, l))
                .collect(),
            c,
            None,
            false,
        )
        .unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows_for_one_item() {
        let f = write_tmp("item,worker,label\nq1,w1,2\nq1,w2,2\nq1,w3,0\n");
        let d = load_dataset(f.path(), 5, None).unwrap();
        assert_eq!(d.records().len(), 3);
        assert_eq!(d.num_items(), 1);
        assert_eq!(d.num_workers(), 3);
    }

    #[test]
    fn rejects_out_of_range_label() {
        let f = write_tmp("item,worker,label\nq1,w1,7\n");
        let err = load_dataset(f.path(), 5, None).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 7, .. }), "{err}");
    }

    #[test]
    fn rejects_duplicate_vote() {
        let f = write_tmp("item,worker,label\nq1,w1,1\nq1,w1,2\n");
        assert!(matches!(
            load_dataset(f.path(), 5, None),
            Err(Error::DuplicateVote { .. })
        ));
    }

    #[test]
    fn parse_error_reports_row_and_column() {
        let f = write_tmp("item,worker,label\nq1,w1,1\nq2,w1,x\n");
        match load_dataset(f.path(), 5, None) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "label");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gold_must_reference_known_items() {
        let f = write_tmp("item,worker,label\nq1,w1,1\n");
        let g = write_tmp("item,label\nq9,1\n");
        assert!(matches!(
            load_dataset(f.path(), 5, Some(g.path())),
            Err(Error::UnknownGoldItem(_))
        ));
        let g = write_tmp("item,label\nq1,4\n");
        let d = load_dataset(f.path(), 5, Some(g.path())).unwrap();
        assert_eq!(d.gold().unwrap()["q1"], 4);
    }

    #[test]
    fn one_hot_pads_missing_slots_with_zeros() {
        let d = ds(&[("a", "w1", 2), ("a", "w2", 2), ("a", "w3", 0)], 5);
        let enc = encode_votes(&d, EncodingScheme::OneHot, 6, 0).unwrap();
        let v = enc.vector("a").unwrap();
        assert_eq!(v.len(), 30);
        assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 3);
        for slot in 3..6 {
            assert!(v.slice(ndarray::s![slot * 5..slot * 5 + 5]).iter().all(|&x| x == 0.0));
        }
        assert_eq!(v[2], 1.0);
        assert_eq!(v[5 + 2], 1.0);
        assert_eq!(v[10], 1.0);
    }

    #[test]
    fn compact_binary_is_lsb_first() {
        let d = ds(&[("a", "w1", 2)], 4);
        let enc = encode_votes(&d, EncodingScheme::CompactBinary, 10, 0).unwrap();
        let v = enc.vector("a").unwrap();
        assert_eq!(v.len(), 20);
        assert_eq!((v[0], v[1]), (0.0, 1.0));
        assert!(v.iter().skip(2).all(|&x| x == 0.0));
        assert_eq!(bits_for_classes(5), 3);
        assert_eq!(bits_for_classes(4), 2);
        assert_eq!(bits_for_classes(2), 1);
    }

    #[test]
    fn real_valued_pads_with_item_mean() {
        let d = ds(&[("a", "w1", 1), ("a", "w2", 4)], 5);
        let enc = encode_votes(&d, EncodingScheme::RealValued, 4, 0).unwrap();
        assert_eq!(enc.vector("a").unwrap().to_vec(), vec![1.0, 4.0, 2.5, 2.5]);
    }

    #[test]
    fn subsampling_is_deterministic_per_seed() {
        let recs: Vec<(String, String, usize)> = (0..12)
            .map(|w| ("a".to_string(), format!("w{w:02}"), w % 4))
            .collect();
        let d = LabelDataset::new(
            recs.iter().map(|(i, w, l)| LabelRecord::new(i.clone(), w.clone(), *l)).collect(),
            4,
            None,
            false,
        )
        .unwrap();
        let first = select_slot_votes(&d, 10, 17);
        for _ in 0..5 {
            assert_eq!(select_slot_votes(&d, 10, 17), first);
        }
        assert_eq!(first["a"].len(), 10);
        let workers: Vec<&String> = first["a"].iter().map(|(w, _)| w).collect();
        assert!(workers.windows(2).all(|w| w[0] < w[1]));
        let a = encode_votes(&d, EncodingScheme::OneHot, 10, 17).unwrap();
        let b = encode_votes(&d, EncodingScheme::OneHot, 10, 17).unwrap();
        assert_eq!(a.vectors(), b.vectors());
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_variance() {
        let d = ds(
            &[("a", "w1", 0), ("a", "w2", 1), ("b", "w1", 3), ("b", "w2", 4), ("c", "w1", 2)],
            5,
        );
        let enc = encode_votes(&d, EncodingScheme::RealValued, 2, 0).unwrap().standardized();
        for col in enc.vectors().columns() {
            let mean = col.sum() / 3.0;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn without_gold_keeps_votes() {
        let mut gold = BTreeMap::new();
        gold.insert("a".to_string(), 1);
        let d = LabelDataset::new(vec![LabelRecord::new("a", "w", 1)], 2, Some(gold), true).unwrap();
        let stripped = d.without_gold();
        assert!(stripped.gold().is_none());
        assert_eq!(stripped.records(), d.records());
        assert!(stripped.is_ordinal());
    }
}
