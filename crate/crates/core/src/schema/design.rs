use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::collapse::NOT_OTHERWISE_SPECIFIED;
use super::spline::{build_spline_basis, SplineMeta};
use super::{Dataset, PassengerRecord, PassengerTrait};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureStage {
    /// Traits visible without the passenger card: age and sex.
    Stage1,
    /// All six traits.
    Stage12,
}

impl FeatureStage {
    pub const BOTH: [FeatureStage; 2] = [FeatureStage::Stage1, FeatureStage::Stage12];

    /// Traits in column order.
    pub fn traits(self) -> &'static [PassengerTrait] {
        use PassengerTrait::*;
        match self {
            FeatureStage::Stage1 => &[Age, Sex],
            FeatureStage::Stage12 => &[Age, Sex, CitizenshipGroup, DeclarationStatus, Occupation, VisitReason],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureStage::Stage1 => "stage1",
            FeatureStage::Stage12 => "stage12",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::BOTH.into_iter().find(|st| st.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ColumnKind {
    AgeLinear,
    Spline(usize),
    Level(String),
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub source: Option<PassengerTrait>,
    pub kind: ColumnKind,
}

impl ColumnMeta {
    /// Name of the group this column's importance is credited to.
    pub fn group(&self) -> &str {
        match self.source {
            Some(t) => t.name(),
            None => &self.name,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeOptions {
    /// Radial spline block for age with this many knots.
    pub spline_knots: Option<usize>,
    /// Citizenship, occupation and visit reason get one indicator per level
    /// instead of reference coding.
    pub one_hot_multi_level: bool,
    /// Overrides the most-frequent-level reference choice.
    pub reference: BTreeMap<PassengerTrait, String>,
}

impl EncodeOptions {
    /// Age plus reference-coded indicators; used by tree models and the network.
    pub fn plain() -> Self {
        EncodeOptions::default()
    }

    pub fn with_spline(knots: usize) -> Self {
        EncodeOptions {
            spline_knots: Some(knots),
            ..Default::default()
        }
    }

    /// Spline block plus one indicator per level of the multi-level traits.
    pub fn hierarchical(knots: usize) -> Self {
        EncodeOptions {
            spline_knots: Some(knots),
            one_hot_multi_level: true,
            ..Default::default()
        }
    }
}

/// Encoding fitted on training records and reusable on new records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    stage: FeatureStage,
    options: EncodeOptions,
    levels: BTreeMap<PassengerTrait, Vec<String>>,
    reference: BTreeMap<PassengerTrait, String>,
    spline: Option<SplineMeta>,
    columns: Vec<ColumnMeta>,
    /// (trait, level) -> column
    #[serde(skip)]
    lookup: BTreeMap<(PassengerTrait, String), usize>,
}

impl Encoder {
    pub fn fit(ds: &Dataset, stage: FeatureStage, options: EncodeOptions) -> Result<Encoder> {
        let mut levels = BTreeMap::new();
        let mut reference = BTreeMap::new();
        for &t in stage.traits().iter().filter(|t| t.is_categorical()) {
            let lv = ds.levels(t).to_vec();
            let chosen = match options.reference.get(&t) {
                Some(r) if lv.contains(r) => r.clone(),
                Some(r) => {
                    return Err(Error::UnknownLevel {
                        variable: t.name().into(),
                        level: r.clone(),
                    })
                }
                None => most_frequent(ds.records(), t, &lv),
            };
            reference.insert(t, chosen);
            levels.insert(t, lv);
        }
        let spline = match options.spline_knots {
            Some(k) => {
                let ages: Vec<f64> = ds.records().iter().map(|r| f64::from(r.age)).collect();
                Some(build_spline_basis(&ages, k)?.meta)
            }
            None => None,
        };
        let mut enc = Encoder {
            stage,
            options,
            levels,
            reference,
            spline,
            columns: Vec::new(),
            lookup: BTreeMap::new(),
        };
        enc.columns = enc.build_columns();
        enc.rebuild_lookup();
        Ok(enc)
    }

    fn one_hot(&self, t: PassengerTrait) -> bool {
        self.options.one_hot_multi_level && PassengerTrait::MULTI_LEVEL.contains(&t)
    }

    fn build_columns(&self) -> Vec<ColumnMeta> {
        let mut cols = Vec::new();
        for &t in self.stage.traits() {
            if t == PassengerTrait::Age {
                cols.push(ColumnMeta {
                    name: "age".into(),
                    source: Some(t),
                    kind: ColumnKind::AgeLinear,
                });
                if let Some(s) = &self.spline {
                    for j in 0..s.n_basis() {
                        cols.push(ColumnMeta {
                            name: format!("age_s{}", j + 1),
                            source: Some(t),
                            kind: ColumnKind::Spline(j),
                        });
                    }
                }
                continue;
            }
            let reference = &self.reference[&t];
            for level in &self.levels[&t] {
                if level == reference && !self.one_hot(t) {
                    continue;
                }
                cols.push(ColumnMeta {
                    name: format!("{}={}", t.name(), level),
                    source: Some(t),
                    kind: ColumnKind::Level(level.clone()),
                });
            }
        }
        cols
    }

    fn rebuild_lookup(&mut self) {
        self.lookup = self
            .columns
            .iter()
            .enumerate()
            .filter_map(|(j, c)| match (&c.kind, c.source) {
                (ColumnKind::Level(l), Some(t)) => Some(((t, l.clone()), j)),
                _ => None,
            })
            .collect();
    }

    /// Restores the lookup table after deserialization.
    pub fn restore(mut self) -> Self {
        self.rebuild_lookup();
        self
    }

    pub fn stage(&self) -> FeatureStage {
        self.stage
    }

    pub fn options(&self) -> &EncodeOptions {
        &self.options
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn spline(&self) -> Option<&SplineMeta> {
        self.spline.as_ref()
    }

    pub fn levels(&self, t: PassengerTrait) -> &[String] {
        self.levels.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn reference_level(&self, t: PassengerTrait) -> Option<&str> {
        self.reference.get(&t).map(String::as_str)
    }

    /// Column holding the indicator for `level`, if it has one.
    pub fn level_column(&self, t: PassengerTrait, level: &str) -> Option<usize> {
        self.lookup.get(&(t, level.to_owned())).copied()
    }

    /// Resolves a level seen at prediction time: known levels map to
    /// themselves, unknown ones to the pooled rare level when present and to
    /// the reference level otherwise. The flag reports a remap.
    fn resolve<'a>(&'a self, t: PassengerTrait, level: &'a str) -> (&'a str, bool) {
        let lv = &self.levels[&t];
        if lv.iter().any(|l| l == level) {
            (level, false)
        } else if lv.iter().any(|l| l == NOT_OTHERWISE_SPECIFIED) {
            (NOT_OTHERWISE_SPECIFIED, true)
        } else {
            (&self.reference[&t], true)
        }
    }

    /// Strict variant of [`Encoder::transform`]: unseen levels are an error.
    pub fn transform_strict(&self, records: &[PassengerRecord]) -> Result<DesignMatrix> {
        for r in records {
            for &t in self.stage.traits().iter().filter(|t| t.is_categorical()) {
                if self.resolve(t, r.level(t)).1 {
                    return Err(Error::UnknownLevel {
                        variable: t.name().into(),
                        level: r.level(t).into(),
                    });
                }
            }
        }
        Ok(self.transform(records))
    }

    pub fn transform(&self, records: &[PassengerRecord]) -> DesignMatrix {
        let p = self.columns.len();
        let mut values = vec![0.0; records.len() * p];
        let mut remapped = 0;
        let k = self.spline.as_ref().map_or(0, SplineMeta::n_basis);
        for (row, r) in values.chunks_mut(p).zip(records) {
            let mut j = 0;
            for &t in self.stage.traits() {
                if t == PassengerTrait::Age {
                    row[j] = f64::from(r.age);
                    j += 1;
                    if let Some(s) = &self.spline {
                        s.evaluate_into(f64::from(r.age), &mut row[j..j + k]);
                        j += k;
                    }
                    continue;
                }
                let (level, was_remapped) = self.resolve(t, r.level(t));
                remapped += usize::from(was_remapped);
                if let Some(&c) = self.lookup.get(&(t, level.to_owned())) {
                    row[c] = 1.0;
                }
            }
        }
        DesignMatrix {
            n_rows: records.len(),
            n_cols: p,
            values,
            columns: self.columns.clone(),
            spline: self.spline.clone(),
            remapped_levels: remapped,
        }
    }
}

fn most_frequent(records: &[PassengerRecord], t: PassengerTrait, levels: &[String]) -> String {
    let mut best = (0usize, levels[0].as_str());
    for l in levels {
        let c = records.iter().filter(|r| r.level(t) == l).count();
        if c > best.0 {
            best = (c, l);
        }
    }
    best.1.to_owned()
}

/// Fits an encoder with a `knots`-knot spline block and encodes `ds`.
pub fn encode_design(ds: &Dataset, stage: FeatureStage, knots: usize) -> Result<(Encoder, DesignMatrix)> {
    let enc = Encoder::fit(ds, stage, EncodeOptions::with_spline(knots))?;
    let x = enc.transform(ds.records());
    Ok((enc, x))
}

/// Dense row-major numeric matrix with per-column provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    columns: Vec<ColumnMeta>,
    spline: Option<SplineMeta>,
    remapped_levels: usize,
}

impl DesignMatrix {
    pub fn new(columns: Vec<ColumnMeta>, values: Vec<f64>) -> Result<Self> {
        let p = columns.len();
        if p == 0 || values.len() % p != 0 {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: p,
            });
        }
        Ok(DesignMatrix {
            n_rows: values.len() / p,
            n_cols: p,
            values,
            columns,
            spline: None,
            remapped_levels: 0,
        })
    }

    /// Unnamed numeric columns, for tests and synthetic experiments.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        let columns = (0..p)
            .map(|j| ColumnMeta {
                name: format!("x{j}"),
                source: None,
                kind: ColumnKind::Other,
            })
            .collect();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidParameter("ragged rows".into()));
        }
        DesignMatrix::new(columns, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn spline(&self) -> Option<&SplineMeta> {
        self.spline.as_ref()
    }

    /// Count of categorical values mapped to a fallback level during encoding.
    pub fn remapped_levels(&self) -> usize {
        self.remapped_levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.n_cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns_of(&self, t: PassengerTrait) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.source == Some(t))
            .map(|(j, _)| j)
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            n_rows: rows.len(),
            values,
            columns: self.columns.clone(),
            spline: self.spline.clone(),
            remapped_levels: 0,
            ..*self
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            let row = self.row(i);
            values.extend(cols.iter().map(|&j| row[j]));
        }
        DesignMatrix {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            values,
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            spline: self.spline.clone(),
            remapped_levels: self.remapped_levels,
        }
    }

    pub fn push_column(&mut self, meta: ColumnMeta, column: &[f64]) -> Result<()> {
        if column.len() != self.n_rows {
            return Err(Error::LengthMismatch {
                left: column.len(),
                right: self.n_rows,
            });
        }
        let p = self.n_cols;
        let mut values = Vec::with_capacity(self.n_rows * (p + 1));
        for (i, &v) in column.iter().enumerate() {
            values.extend_from_slice(&self.values[i * p..(i + 1) * p]);
            values.push(v);
        }
        self.values = values;
        self.n_cols += 1;
        self.columns.push(meta);
        Ok(())
    }

    pub(crate) fn check_columns(&self, expected: usize) -> Result<()> {
        if self.n_cols != expected {
            return Err(Error::ColumnMismatch {
                expected,
                got: self.n_cols,
            });
        }
        Ok(())
    }
}
