//! Passenger data model, ingest, preprocessing and numeric encoding.

mod collapse;
mod design;
mod io;
mod spline;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use collapse::{collapse_rare_levels, NOT_OTHERWISE_SPECIFIED};
pub use design::{encode_design, ColumnKind, ColumnMeta, DesignMatrix, EncodeOptions, Encoder, FeatureStage};
pub use io::{load_dataset, write_dataset, CsvFormat, IngestReport};
pub use spline::{build_spline_basis, SplineBasis, SplineMeta};

pub const MAX_AGE: u32 = 120;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }
}

impl FromStr for Sex {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "male" => Ok(Sex::Male),
            "female" => Ok(Sex::Female),
            _ => Err(()),
        }
    }
}

/// A recorded passenger characteristic (predictor).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassengerTrait {
    Age,
    Sex,
    CitizenshipGroup,
    DeclarationStatus,
    Occupation,
    VisitReason,
}

impl PassengerTrait {
    pub const ALL: [PassengerTrait; 6] = [
        PassengerTrait::Age,
        PassengerTrait::Sex,
        PassengerTrait::CitizenshipGroup,
        PassengerTrait::DeclarationStatus,
        PassengerTrait::Occupation,
        PassengerTrait::VisitReason,
    ];

    pub const CATEGORICAL: [PassengerTrait; 5] = [
        PassengerTrait::Sex,
        PassengerTrait::CitizenshipGroup,
        PassengerTrait::DeclarationStatus,
        PassengerTrait::Occupation,
        PassengerTrait::VisitReason,
    ];

    /// Free-form categorical traits subject to rare-level pooling.
    pub const MULTI_LEVEL: [PassengerTrait; 3] = [
        PassengerTrait::CitizenshipGroup,
        PassengerTrait::Occupation,
        PassengerTrait::VisitReason,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PassengerTrait::Age => "age",
            PassengerTrait::Sex => "sex",
            PassengerTrait::CitizenshipGroup => "citizenship_group",
            PassengerTrait::DeclarationStatus => "declaration_status",
            PassengerTrait::Occupation => "occupation",
            PassengerTrait::VisitReason => "visit_reason",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn is_categorical(self) -> bool {
        self != PassengerTrait::Age
    }
}

impl fmt::Display for PassengerTrait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One arriving passenger.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassengerRecord {
    pub age: u32,
    pub sex: Sex,
    pub citizenship_group: String,
    /// `true` for a declarant.
    pub declaration_status: bool,
    pub occupation: String,
    pub visit_reason: String,
    pub non_compliant: bool,
}

impl PassengerRecord {
    /// Level label of a categorical trait. Panics on [`PassengerTrait::Age`].
    pub fn level(&self, t: PassengerTrait) -> &str {
        match t {
            PassengerTrait::Sex => self.sex.as_str(),
            PassengerTrait::DeclarationStatus => {
                if self.declaration_status {
                    "1"
                } else {
                    "0"
                }
            }
            PassengerTrait::CitizenshipGroup => &self.citizenship_group,
            PassengerTrait::Occupation => &self.occupation,
            PassengerTrait::VisitReason => &self.visit_reason,
            PassengerTrait::Age => panic!("age is not categorical"),
        }
    }

    /// Sets a trait from its level label; ages are given in years.
    pub fn set_level(&mut self, t: PassengerTrait, level: &str) -> Result<()> {
        let bad = || Error::UnknownLevel { variable: t.name().to_string(), level: level.to_string() };
        match t {
            PassengerTrait::Age => {
                let a: u32 = level.parse().map_err(|_| bad())?;
                if a > MAX_AGE {
                    return Err(bad());
                }
                self.age = a;
            }
            PassengerTrait::Sex => self.sex = level.parse().map_err(|_| bad())?,
            PassengerTrait::DeclarationStatus => {
                self.declaration_status = match level {
                    "1" => true,
                    "0" => false,
                    _ => return Err(bad()),
                }
            }
            other => *self.level_mut(other) = level.to_string(),
        }
        Ok(())
    }

    pub(crate) fn level_mut(&mut self, t: PassengerTrait) -> &mut String {
        match t {
            PassengerTrait::CitizenshipGroup => &mut self.citizenship_group,
            PassengerTrait::Occupation => &mut self.occupation,
            PassengerTrait::VisitReason => &mut self.visit_reason,
            other => panic!("{other} has a fixed level set"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    File { path: PathBuf },
    Generator { seed: u64 },
    Derived { from: String },
}

/// Ordered level list per categorical trait.
pub type LevelSets = BTreeMap<PassengerTrait, Vec<String>>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    records: Vec<PassengerRecord>,
    levels: LevelSets,
    provenance: Provenance,
}

impl PartialEq for Dataset {
    /// Provenance is descriptive only and excluded from equality.
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.levels == other.levels
    }
}

impl Dataset {
    /// Builds a dataset, inferring level sets from the records.
    pub fn new(records: Vec<PassengerRecord>, provenance: Provenance) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(r) = records.iter().find(|r| r.age > MAX_AGE) {
            return Err(Error::InvalidParameter(format!("age {} exceeds {MAX_AGE}", r.age)));
        }
        let levels = infer_levels(&records);
        Ok(Dataset {
            records,
            levels,
            provenance,
        })
    }

    pub fn records(&self) -> &[PassengerRecord] {
        &self.records
    }

    pub fn levels(&self, t: PassengerTrait) -> &[String] {
        self.levels.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn level_sets(&self) -> &LevelSets {
        &self.levels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.non_compliant).count()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| if r.non_compliant { 1.0 } else { 0.0 })
            .collect()
    }

    /// Fails unless both label classes are present.
    pub fn require_both_classes(&self) -> Result<()> {
        let pos = self.positives();
        if pos == 0 || pos == self.len() {
            return Err(Error::SingleClass);
        }
        Ok(())
    }

    /// Rows at `indices`, in that order, with level sets re-inferred.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::new(
            records,
            Provenance::Derived {
                from: describe(&self.provenance),
            },
        )
    }

    pub(crate) fn with_records(&self, records: Vec<PassengerRecord>) -> Dataset {
        Dataset {
            levels: infer_levels(&records),
            records,
            provenance: self.provenance.clone(),
        }
    }
}

fn describe(p: &Provenance) -> String {
    match p {
        Provenance::File { path } => path.display().to_string(),
        Provenance::Generator { seed } => format!("generator seed {seed}"),
        Provenance::Derived { from } => from.clone(),
    }
}

fn infer_levels(records: &[PassengerRecord]) -> LevelSets {
    PassengerTrait::CATEGORICAL
        .into_iter()
        .map(|t| {
            let mut seen: Vec<String> = records.iter().map(|r| r.level(t).to_owned()).collect();
            seen.sort();
            seen.dedup();
            (t, seen)
        })
        .collect()
}
