use std::collections::HashMap;

use super::{Dataset, PassengerTrait};
use crate::error::{Error, Result};

pub const NOT_OTHERWISE_SPECIFIED: &str = "not_otherwise_specified";

/// Relabels every level observed fewer than `threshold` times to
/// [`NOT_OTHERWISE_SPECIFIED`]. Applies to the free-form categorical traits
/// (citizenship group, occupation, visit reason); record order is preserved.
pub fn collapse_rare_levels(ds: &Dataset, threshold: usize) -> Result<Dataset> {
    if threshold < 1 {
        return Err(Error::InvalidParameter("collapse threshold must be at least 1".into()));
    }
    let mut records = ds.records().to_vec();
    for t in PassengerTrait::MULTI_LEVEL {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for r in ds.records() {
            *counts.entry(r.level(t)).or_default() += 1;
        }
        let rare: Vec<&str> = counts
            .iter()
            .filter(|&(_, &c)| c < threshold)
            .map(|(&l, _)| l)
            .collect();
        if rare.is_empty() {
            continue;
        }
        for r in records.iter_mut() {
            if rare.contains(&r.level(t)) {
                *r.level_mut(t) = NOT_OTHERWISE_SPECIFIED.to_owned();
            }
        }
    }
    Ok(ds.with_records(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures::record;
    use crate::schema::Provenance;

    fn with_counts(counts: &[(&str, usize)]) -> Dataset {
        let mut records = Vec::new();
        for &(occ, c) in counts {
            for i in 0..c {
                records.push(record(20 + (i % 50) as u32, occ, i % 10 == 0));
            }
        }
        Dataset::new(records, Provenance::Derived { from: "t".into() }).unwrap()
    }

    #[test]
    fn strict_inequality_boundary() {
        let ds = with_counts(&[("big", 120), ("edge", 50), ("rare", 49)]);
        let out = collapse_rare_levels(&ds, 50).unwrap();
        assert_eq!(
            out.levels(PassengerTrait::Occupation),
            ["big", "edge", NOT_OTHERWISE_SPECIFIED]
        );
        assert_eq!(out.len(), ds.len());
        for (a, b) in ds.records().iter().zip(out.records()) {
            assert_eq!(a.age, b.age);
            if a.occupation == "rare" {
                assert_eq!(b.occupation, NOT_OTHERWISE_SPECIFIED);
            } else {
                assert_eq!(a.occupation, b.occupation);
            }
        }
    }

    #[test]
    fn identity_when_nothing_is_rare() {
        let ds = with_counts(&[("a", 60), ("b", 70)]);
        let out = collapse_rare_levels(&ds, 30).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn idempotent() {
        let ds = with_counts(&[("big", 100), ("r1", 10), ("r2", 12), ("r3", 40)]);
        let once = collapse_rare_levels(&ds, 50).unwrap();
        let twice = collapse_rare_levels(&once, 50).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn zero_threshold_rejected() {
        let ds = with_counts(&[("a", 3)]);
        assert!(collapse_rare_levels(&ds, 0).is_err());
    }
}
