use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn paired<'a>(
    pred: &'a BTreeMap<String, usize>,
    gold: &'a BTreeMap<String, usize>,
) -> Result<Vec<(usize, usize)>> {
    if gold.is_empty() {
        return Err(Error::invalid("no gold labels to score against"));
    }
    gold.iter()
        .map(|(item, &g)| {
            pred.get(item)
                .map(|&p| (p, g))
                .ok_or_else(|| Error::MissingPrediction(item.clone()))
        })
        .collect()
}

/// Fraction of gold items whose prediction differs from the gold label.
pub fn l0_error(pred: &BTreeMap<String, usize>, gold: &BTreeMap<String, usize>) -> Result<f64> {
    let pairs = paired(pred, gold)?;
    let wrong = pairs.iter().filter(|(p, g)| p != g).count();
    Ok(wrong as f64 / pairs.len() as f64)
}

/// Mean absolute difference between predicted and gold labels. Only defined
/// for ordinal labels.
pub fn l1_error(
    pred: &BTreeMap<String, usize>,
    gold: &BTreeMap<String, usize>,
    ordinal: bool,
) -> Result<f64> {
    if !ordinal {
        return Err(Error::NotOrdinal);
    }
    let pairs = paired(pred, gold)?;
    let total: f64 = pairs.iter().map(|&(p, g)| (p as f64 - g as f64).abs()).sum();
    Ok(total / pairs.len() as f64)
}
