//! Relative influence and partial dependence for fitted boosting models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::math::sigmoid;
use crate::schema::{ColumnMeta, Encoder, PassengerRecord, PassengerTrait};
use crate::trees::Gbm;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub group: String,
    pub raw: f64,
    /// Share of the total, out of 100.
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub entries: Vec<Influence>,
    /// Set when no split reduced the loss; every entry is then zero.
    pub zero_total: bool,
}

/// Rescales non-negative values to sum to 100. All zeros when the total is 0.
pub fn normalize_to_100(raw: &[f64]) -> (Vec<f64>, bool) {
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return (vec![0.0; raw.len()], true);
    }
    (raw.iter().map(|v| 100.0 * v / total).collect(), false)
}

/// Split gains summed per column, then per source trait, normalized to 100.
/// Groups are listed in the order their first column appears.
pub fn relative_influence(gbm: &Gbm, columns: &[ColumnMeta]) -> Result<ImportanceTable> {
    if columns.len() != gbm.n_features {
        return Err(Error::ColumnMismatch { expected: gbm.n_features, got: columns.len() });
    }
    let per_col = gbm.column_influence(None);
    let mut order: Vec<String> = Vec::new();
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for (c, v) in columns.iter().zip(&per_col) {
        let g = c.group().to_string();
        if !sums.contains_key(&g) {
            order.push(g.clone());
        }
        *sums.entry(g).or_insert(0.0) += v;
    }
    let raw: Vec<f64> = order.iter().map(|g| sums[g]).collect();
    let (rel, zero_total) = normalize_to_100(&raw);
    let entries = order
        .into_iter()
        .zip(raw.iter().zip(rel))
        .map(|(group, (&raw, relative))| Influence { group, raw, relative })
        .collect();
    Ok(ImportanceTable { entries, zero_total })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdMethod {
    /// Averages over the evaluation records; identical to substituting the
    /// value into every record and averaging the model's log-odds.
    #[default]
    Data,
    /// Blends both branches of other splits by training node weight.
    TrainingWeights,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdPoint {
    pub value: String,
    pub second: Option<String>,
    pub log_odds: f64,
    pub probability: f64,
    /// Evaluation records having this value (this pair of values).
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdpGrid {
    pub trait_name: PassengerTrait,
    pub second_trait: Option<PassengerTrait>,
    pub method: PdMethod,
    pub points: Vec<PdPoint>,
}

/// Values of `t` seen in `records`: every observed integer age, or every
/// encoder level that occurs.
pub fn observed_values(encoder: &Encoder, records: &[PassengerRecord], t: PassengerTrait) -> Vec<String> {
    if t == PassengerTrait::Age {
        let mut ages: Vec<u32> = records.iter().map(|r| r.age).collect();
        ages.sort_unstable();
        ages.dedup();
        return ages.into_iter().map(|a| a.to_string()).collect();
    }
    encoder
        .levels(t)
        .iter()
        .filter(|l| records.iter().any(|r| r.level(t) == l.as_str()))
        .cloned()
        .collect()
}

fn value_of(r: &PassengerRecord, t: PassengerTrait) -> String {
    if t == PassengerTrait::Age {
        r.age.to_string()
    } else {
        r.level(t).to_string()
    }
}

/// Encoded values of the columns owned by `traits` when they take `values`.
fn assignment(encoder: &Encoder, template: &PassengerRecord, traits: &[PassengerTrait], values: &[&str]) -> Result<Vec<Option<f64>>> {
    let mut rec = template.clone();
    for (&t, v) in traits.iter().zip(values) {
        rec.set_level(t, v)?;
    }
    let x = encoder.transform(std::slice::from_ref(&rec));
    let mut fixed = vec![None; encoder.n_cols()];
    for &t in traits {
        for j in x.columns_of(t) {
            fixed[j] = Some(x.get(0, j));
        }
    }
    Ok(fixed)
}

/// Average log-odds with the assigned columns held fixed.
pub fn pd_log_odds(gbm: &Gbm, x: &crate::schema::DesignMatrix, fixed: &[Option<f64>], method: PdMethod) -> f64 {
    let f = |j: usize| fixed.get(j).copied().flatten();
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let total: f64 = match method {
        PdMethod::Data => gbm.trees.iter().map(|t| t.substituted_sum(x, &rows, &f)).sum::<f64>() / rows.len() as f64,
        PdMethod::TrainingWeights => gbm.trees.iter().map(|t| t.weighted_traversal(&f)).sum(),
    };
    gbm.init + gbm.params.shrinkage * total
}

/// Partial dependence of a GBM on one trait, or on a pair of traits for an
/// interaction panel, over the values observed in `records`.
pub fn partial_dependence(
    gbm: &Gbm,
    encoder: &Encoder,
    records: &[PassengerRecord],
    first: PassengerTrait,
    second: Option<PassengerTrait>,
    method: PdMethod,
) -> Result<PdpGrid> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if encoder.n_cols() != gbm.n_features {
        return Err(Error::ColumnMismatch { expected: gbm.n_features, got: encoder.n_cols() });
    }
    for t in std::iter::once(first).chain(second) {
        if !encoder.stage().traits().contains(&t) {
            return Err(Error::InvalidParameter(format!("{t} is not in the model's stage")));
        }
    }
    if second == Some(first) {
        return Err(Error::InvalidParameter("interaction needs two different traits".into()));
    }
    let x = encoder.transform(records);
    let mut counts: BTreeMap<(String, Option<String>), usize> = BTreeMap::new();
    for r in records {
        *counts.entry((value_of(r, first), second.map(|s| value_of(r, s)))).or_insert(0) += 1;
    }
    let firsts = observed_values(encoder, records, first);
    let seconds: Vec<Option<String>> = match second {
        Some(s) => observed_values(encoder, records, s).into_iter().map(Some).collect(),
        None => vec![None],
    };
    let mut points = Vec::with_capacity(firsts.len() * seconds.len());
    for s in &seconds {
        for v in &firsts {
            let (traits, values): (Vec<PassengerTrait>, Vec<&str>) = match (second, s) {
                (Some(t2), Some(s)) => (vec![first, t2], vec![v.as_str(), s.as_str()]),
                _ => (vec![first], vec![v.as_str()]),
            };
            let fixed = assignment(encoder, &records[0], &traits, &values)?;
            let lo = pd_log_odds(gbm, &x, &fixed, method);
            let count = counts.get(&(v.clone(), s.clone())).copied().unwrap_or(0);
            points.push(PdPoint { value: v.clone(), second: s.clone(), log_odds: lo, probability: sigmoid(lo), count });
        }
    }
    Ok(PdpGrid { trait_name: first, second_trait: second, method, points })
}
