use std::fs::File;
use std::path::Path;

use super::{Dataset, PassengerRecord, PassengerTrait, Provenance, Sex, MAX_AGE};
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "non_compliant";

/// Column order used when writing.
pub const COLUMNS: [&str; 7] = [
    "age",
    "sex",
    "citizenship_group",
    "declaration_status",
    "occupation",
    "visit_reason",
    LABEL_COLUMN,
];

#[derive(Clone, Copy, Debug)]
pub struct CsvFormat {
    pub delimiter: u8,
}

impl Default for CsvFormat {
    fn default() -> Self {
        CsvFormat { delimiter: b',' }
    }
}

/// Rows dropped at ingest because a field was blank.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rejected_lines: Vec<u64>,
}

impl IngestReport {
    pub fn rejected(&self) -> usize {
        self.rejected_lines.len()
    }
}

pub fn load_dataset(path: &Path, format: CsvFormat) -> Result<(Dataset, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(true)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    for h in headers.iter() {
        if !COLUMNS.contains(&h.trim()) {
            return Err(Error::UnknownColumn(h.to_owned()));
        }
    }
    let mut position = [0usize; 7];
    for (slot, name) in position.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))?;
    }

    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = position.iter().map(|&i| row.get(i).unwrap_or("").trim()).collect();
        if fields.iter().any(|f| f.is_empty()) {
            report.rejected_lines.push(line);
            continue;
        }
        records.push(parse_row(&fields, line)?);
    }
    let dataset = Dataset::new(
        records,
        Provenance::File {
            path: path.to_path_buf(),
        },
    )?;
    Ok((dataset, report))
}

fn parse_row(f: &[&str], line: u64) -> Result<PassengerRecord> {
    let bad = |field: &str, value: &str| Error::Parse {
        line,
        field: field.to_owned(),
        value: value.to_owned(),
    };
    let age: u32 = f[0].parse().map_err(|_| bad("age", f[0]))?;
    if age > MAX_AGE {
        return Err(bad("age", f[0]));
    }
    let sex: Sex = f[1].parse().map_err(|_| bad("sex", f[1]))?;
    let flag = |i: usize, field: &str| match f[i] {
        "0" => Ok(false),
        "1" => Ok(true),
        v => Err(bad(field, v)),
    };
    Ok(PassengerRecord {
        age,
        sex,
        citizenship_group: f[2].to_owned(),
        declaration_status: flag(3, PassengerTrait::DeclarationStatus.name())?,
        occupation: f[4].to_owned(),
        visit_reason: f[5].to_owned(),
        non_compliant: flag(6, LABEL_COLUMN)?,
    })
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(COLUMNS)?;
    for r in ds.records() {
        let age = r.age.to_string();
        w.write_record([
            age.as_str(),
            r.sex.as_str(),
            &r.citizenship_group,
            if r.declaration_status { "1" } else { "0" },
            &r.occupation,
            &r.visit_reason,
            if r.non_compliant { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures::small_dataset;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "age,sex,citizenship_group,declaration_status,occupation,visit_reason,non_compliant\n";

    #[test]
    fn header_only_is_empty_dataset() {
        let f = write_tmp(HEADER);
        assert!(matches!(load_dataset(f.path(), CsvFormat::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn blank_field_row_is_rejected_and_counted() {
        let body = format!(
            "{HEADER}34,male,cit_a,0,student,holiday,1\n51,female,cit_b,1,,business,0\n22,female,cit_a,0,farmer,holiday,0\n"
        );
        let f = write_tmp(&body);
        let (ds, report) = load_dataset(f.path(), CsvFormat::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(report.rejected(), 1);
        assert_eq!(report.rejected_lines, vec![3]);
    }

    #[test]
    fn unknown_column_and_bad_age() {
        let f = write_tmp("age,sex,shoe_size\n1,male,3\n");
        assert!(matches!(load_dataset(f.path(), CsvFormat::default()), Err(Error::UnknownColumn(c)) if c == "shoe_size"));
        let f = write_tmp(&format!("{HEADER}thirty,male,a,0,b,c,1\n"));
        assert!(matches!(load_dataset(f.path(), CsvFormat::default()), Err(Error::Parse { .. })));
        let f = write_tmp("age,sex\n1,male\n");
        assert!(matches!(load_dataset(f.path(), CsvFormat::default()), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn reordered_columns_and_other_delimiter() {
        let f = write_tmp("non_compliant;age;sex;citizenship_group;declaration_status;occupation;visit_reason\n1;40;female;x;0;y;z\n");
        let (ds, _) = load_dataset(f.path(), CsvFormat { delimiter: b';' }).unwrap();
        assert_eq!(ds.records()[0].age, 40);
        assert!(ds.records()[0].non_compliant);
    }

    #[test]
    fn round_trip_is_identical() {
        let ds = small_dataset();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dataset(&ds, f.path()).unwrap();
        let (back, report) = load_dataset(f.path(), CsvFormat::default()).unwrap();
        assert_eq!(report.rejected(), 0);
        assert_eq!(back, ds);
    }
}
