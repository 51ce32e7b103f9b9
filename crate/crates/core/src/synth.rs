//! Synthetic passenger data with a known non-compliance probability surface.
//!
//! Every record gets a true probability `inverse_logit(intercept + offsets)`;
//! the intercept is solved by bisection so the mean true probability equals
//! the configured base rate. The per-record probabilities are kept in a
//! [`TruthManifest`] and act as the oracle for model comparisons.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::schema::{Dataset, PassengerRecord, PassengerTrait, Provenance, Sex, MAX_AGE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    pub name: String,
    pub frequency: f64,
    pub log_odds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub levels: Vec<LevelSpec>,
}

impl CategoricalSpec {
    fn offset(&self, level: &str) -> f64 {
        self.levels
            .iter()
            .find(|l| l.name == level)
            .map_or(0.0, |l| l.log_odds)
    }

    fn weights(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.frequency).collect()
    }
}

/// Ages in `from..=to` are drawn uniformly once the band is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeBand {
    pub from: u32,
    pub to: u32,
    pub frequency: f64,
}

/// Step of the age effect: `log_odds` applies from `from` up to the next step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgeStep {
    pub from: u32,
    pub log_odds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionCell {
    pub occupation: String,
    pub citizenship_group: String,
    pub log_odds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    pub base_rate: f64,
    pub age_bands: Vec<AgeBand>,
    pub age_effect: Vec<AgeStep>,
    pub sex: CategoricalSpec,
    pub declaration_status: CategoricalSpec,
    pub citizenship_group: CategoricalSpec,
    pub occupation: CategoricalSpec,
    /// Occupation frequencies (aligned with `occupation.levels`) for
    /// particular citizenship groups; other groups use the marginal ones.
    #[serde(default)]
    pub occupation_given_citizenship: BTreeMap<String, Vec<f64>>,
    pub visit_reason: CategoricalSpec,
    #[serde(default)]
    pub interactions: Vec<InteractionCell>,
}

fn level(name: &str, frequency: f64, log_odds: f64) -> LevelSpec {
    LevelSpec {
        name: name.into(),
        frequency,
        log_odds,
    }
}

/// The canonical study configuration: 3361 passengers at a 6.5% base rate,
/// an age effect stepping up near 20 and 45 and down near 60, an
/// occupation x citizenship interaction, and one rare level per free-form
/// categorical trait. Effect sizes are illustrative.
pub fn default_study_config() -> GeneratorConfig {
    GeneratorConfig {
        n: 3361,
        seed: 20150618,
        base_rate: 0.065,
        age_bands: vec![
            AgeBand { from: 1, to: 17, frequency: 0.10 },
            AgeBand { from: 18, to: 29, frequency: 0.22 },
            AgeBand { from: 30, to: 44, frequency: 0.26 },
            AgeBand { from: 45, to: 59, frequency: 0.24 },
            AgeBand { from: 60, to: 85, frequency: 0.18 },
        ],
        age_effect: vec![
            AgeStep { from: 0, log_odds: 0.0 },
            AgeStep { from: 20, log_odds: 0.7 },
            AgeStep { from: 45, log_odds: 1.4 },
            AgeStep { from: 60, log_odds: 0.3 },
        ],
        sex: CategoricalSpec {
            levels: vec![level("male", 0.52, 0.15), level("female", 0.48, 0.0)],
        },
        declaration_status: CategoricalSpec {
            levels: vec![level("0", 0.8, 0.0), level("1", 0.2, -0.6)],
        },
        citizenship_group: CategoricalSpec {
            levels: vec![
                level("cit_a", 0.30, 0.0),
                level("cit_b", 0.22, 0.3),
                level("cit_c", 0.18, 0.2),
                level("cit_d", 0.15, -0.3),
                level("cit_e", 0.14, 0.1),
                level("cit_f", 0.01, 0.4),
            ],
        },
        occupation: CategoricalSpec {
            levels: vec![
                level("professional", 0.18, -0.4),
                level("student", 0.14, 0.2),
                level("retired", 0.12, 0.5),
                level("trades", 0.11, 0.3),
                level("home_duties", 0.10, 0.6),
                level("business", 0.10, -0.3),
                level("farmer", 0.09, 0.1),
                level("clerical", 0.08, -0.2),
                level("unemployed", 0.07, 0.4),
                level("clergy", 0.01, 0.0),
            ],
        },
        occupation_given_citizenship: BTreeMap::from([(
            "cit_c".to_owned(),
            vec![0.12, 0.10, 0.10, 0.10, 0.10, 0.08, 0.25, 0.08, 0.06, 0.01],
        )]),
        visit_reason: CategoricalSpec {
            levels: vec![
                level("holiday", 0.30, 0.0),
                level("visiting_relatives", 0.25, 0.8),
                level("business", 0.15, -0.5),
                level("education", 0.10, 0.2),
                level("returning_resident", 0.12, -0.3),
                level("employment", 0.07, 0.3),
                level("exhibition", 0.01, 0.0),
            ],
        },
        interactions: vec![InteractionCell {
            occupation: "farmer".into(),
            citizenship_group: "cit_c".into(),
            log_odds: 1.8,
        }],
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        default_study_config()
    }
}

impl GeneratorConfig {
    /// A configuration whose only structure is the base rate.
    pub fn null_effects(mut self) -> Self {
        self.age_effect = vec![AgeStep { from: 0, log_odds: 0.0 }];
        for spec in [
            &mut self.sex,
            &mut self.declaration_status,
            &mut self.citizenship_group,
            &mut self.occupation,
            &mut self.visit_reason,
        ] {
            for l in &mut spec.levels {
                l.log_odds = 0.0;
            }
        }
        self.interactions.clear();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return bad(format!("base rate {} outside (0, 1)", self.base_rate));
        }
        let sums_to_one = |w: &[f64]| w.iter().all(|&v| v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        let bands: Vec<f64> = self.age_bands.iter().map(|b| b.frequency).collect();
        if !sums_to_one(&bands) || self.age_bands.iter().any(|b| b.from > b.to || b.to > MAX_AGE) {
            return bad("age bands must be ordered, within 0..=120, frequencies summing to 1".into());
        }
        if self.age_effect.is_empty() || self.age_effect.windows(2).any(|w| w[0].from >= w[1].from) {
            return bad("age effect steps must be non-empty and strictly increasing".into());
        }
        for (name, spec) in [
            ("sex", &self.sex),
            ("declaration_status", &self.declaration_status),
            ("citizenship_group", &self.citizenship_group),
            ("occupation", &self.occupation),
            ("visit_reason", &self.visit_reason),
        ] {
            if spec.levels.is_empty() || !sums_to_one(&spec.weights()) {
                return bad(format!("{name} level frequencies must sum to 1"));
            }
        }
        if self.sex.levels.iter().any(|l| l.name.parse::<Sex>().is_err()) {
            return bad("sex levels must be `male` or `female`".into());
        }
        if self.declaration_status.levels.iter().any(|l| l.name != "0" && l.name != "1") {
            return bad("declaration status levels must be `0` or `1`".into());
        }
        for (cit, w) in &self.occupation_given_citizenship {
            if w.len() != self.occupation.levels.len() || !sums_to_one(w) {
                return bad(format!("occupation table for {cit} must match the occupation levels and sum to 1"));
            }
        }
        Ok(())
    }

    pub fn age_offset(&self, age: u32) -> f64 {
        self.age_effect
            .iter()
            .take_while(|s| s.from <= age)
            .last()
            .map_or(0.0, |s| s.log_odds)
    }

    /// Log-odds of `r` relative to the calibrated intercept.
    pub fn offset(&self, r: &PassengerRecord) -> f64 {
        let interaction: f64 = self
            .interactions
            .iter()
            .filter(|c| c.occupation == r.occupation && c.citizenship_group == r.citizenship_group)
            .map(|c| c.log_odds)
            .sum();
        self.age_offset(r.age)
            + self.sex.offset(r.sex.as_str())
            + self.declaration_status.offset(r.level(PassengerTrait::DeclarationStatus))
            + self.citizenship_group.offset(&r.citizenship_group)
            + self.occupation.offset(&r.occupation)
            + self.visit_reason.offset(&r.visit_reason)
            + interaction
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub config: GeneratorConfig,
    pub intercept: f64,
    /// Mean of the true probabilities (matches the base rate).
    pub calibrated_rate: f64,
    /// Share of generated labels that are positive.
    pub empirical_rate: f64,
    pub probabilities: Vec<f64>,
}

impl TruthManifest {
    pub fn true_probability(&self, index: usize) -> Result<f64> {
        self.probabilities
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index,
                len: self.probabilities.len(),
            })
    }
}

fn draw<'a>(spec: &'a CategoricalSpec, weights: &WeightedIndex<f64>, rng: &mut ChaCha8Rng) -> &'a str {
    &spec.levels[weights.sample(rng)].name
}

fn weighted(w: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(w).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Solves `mean(sigmoid(c + offsets)) = target` for `c`.
fn calibrate_intercept(offsets: &[f64], target: f64) -> Result<f64> {
    let mean_at = |c: f64| offsets.iter().map(|&o| sigmoid(c + o)).sum::<f64>() / offsets.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    if mean_at(lo) > target || mean_at(hi) < target {
        return Err(Error::Calibration { lo, hi, target });
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn generate(cfg: &GeneratorConfig) -> Result<(Dataset, TruthManifest)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bands = weighted(&cfg.age_bands.iter().map(|b| b.frequency).collect::<Vec<_>>())?;
    let sex = weighted(&cfg.sex.weights())?;
    let decl = weighted(&cfg.declaration_status.weights())?;
    let cit = weighted(&cfg.citizenship_group.weights())?;
    let occ = weighted(&cfg.occupation.weights())?;
    let occ_given: BTreeMap<&str, WeightedIndex<f64>> = cfg
        .occupation_given_citizenship
        .iter()
        .map(|(k, w)| Ok((k.as_str(), weighted(w)?)))
        .collect::<Result<_>>()?;
    let visit = weighted(&cfg.visit_reason.weights())?;

    let mut records = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let band = &cfg.age_bands[bands.sample(&mut rng)];
        let age = rng.random_range(band.from..=band.to);
        let sex = draw(&cfg.sex, &sex, &mut rng).parse::<Sex>().expect("validated");
        let declaration_status = draw(&cfg.declaration_status, &decl, &mut rng) == "1";
        let citizenship_group = draw(&cfg.citizenship_group, &cit, &mut rng).to_owned();
        let occ_weights = occ_given.get(citizenship_group.as_str()).unwrap_or(&occ);
        let occupation = draw(&cfg.occupation, occ_weights, &mut rng).to_owned();
        let visit_reason = draw(&cfg.visit_reason, &visit, &mut rng).to_owned();
        records.push(PassengerRecord {
            age,
            sex,
            citizenship_group,
            declaration_status,
            occupation,
            visit_reason,
            non_compliant: false,
        });
    }

    let offsets: Vec<f64> = records.iter().map(|r| cfg.offset(r)).collect();
    let intercept = calibrate_intercept(&offsets, cfg.base_rate)?;
    let probabilities: Vec<f64> = offsets.iter().map(|&o| sigmoid(intercept + o)).collect();
    for (r, &p) in records.iter_mut().zip(&probabilities) {
        r.non_compliant = rng.random::<f64>() < p;
    }
    let n = cfg.n as f64;
    let empirical_rate = records.iter().filter(|r| r.non_compliant).count() as f64 / n;
    let calibrated_rate = probabilities.iter().sum::<f64>() / n;
    let dataset = Dataset::new(records, Provenance::Generator { seed: cfg.seed })?;
    Ok((
        dataset,
        TruthManifest {
            config: cfg.clone(),
            intercept,
            calibrated_rate,
            empirical_rate,
            probabilities,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;

    fn small(n: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n,
            seed,
            ..default_study_config()
        }
    }

    #[test]
    fn default_config_shape() {
        let cfg = default_study_config();
        cfg.validate().unwrap();
        assert_eq!(cfg.n, 3361);
        assert_eq!(cfg.base_rate, 0.065);
        assert!(cfg.occupation.levels.len() >= 5);
        assert!(cfg.visit_reason.levels.len() >= 4);
        assert!(cfg.citizenship_group.levels.len() >= 3);
        assert_eq!(cfg.interactions.len(), 1);
        for spec in [&cfg.citizenship_group, &cfg.occupation, &cfg.visit_reason] {
            let rarest = spec.levels.iter().map(|l| l.frequency).fold(1.0, f64::min);
            assert!(cfg.n as f64 * rarest < 50.0);
        }
    }

    #[test]
    fn null_effects_give_constant_probability() {
        let cfg = default_study_config().null_effects();
        let (ds, truth) = generate(&cfg).unwrap();
        assert_eq!(ds.len(), 3361);
        for i in 0..ds.len() {
            assert!((truth.true_probability(i).unwrap() - 0.065).abs() < 1e-9);
        }
        assert!((truth.intercept - logit(0.065)).abs() < 1e-9);
        let sd = (0.065 * 0.935 / 3361.0f64).sqrt();
        assert!((truth.empirical_rate - 0.065).abs() <= 3.0 * sd);
        assert!(matches!(
            truth.true_probability(ds.len()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let (a, ta) = generate(&small(500, 11)).unwrap();
        let (b, tb) = generate(&small(500, 11)).unwrap();
        assert_eq!(a.records(), b.records());
        assert_eq!(ta, tb);
        let (c, _) = generate(&small(500, 12)).unwrap();
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn calibrated_to_base_rate() {
        let (_, truth) = generate(&default_study_config()).unwrap();
        assert!((truth.calibrated_rate - 0.065).abs() < 1e-6);
        let sd = (0.065 * 0.935 / 3361.0f64).sqrt();
        assert!((truth.empirical_rate - 0.065).abs() <= 3.0 * sd);
    }

    #[test]
    fn older_cohort_riskier_under_step() {
        let mut cfg = default_study_config().null_effects();
        cfg.age_effect = vec![AgeStep { from: 0, log_odds: 0.0 }, AgeStep { from: 45, log_odds: 1.0 }];
        let (ds, truth) = generate(&cfg).unwrap();
        let (mut hi, mut nhi, mut lo, mut nlo) = (0.0, 0, 0.0, 0);
        for (r, p) in ds.records().iter().zip(&truth.probabilities) {
            if r.age >= 45 {
                hi += p;
                nhi += 1;
            } else {
                lo += p;
                nlo += 1;
            }
        }
        assert!(hi / nhi as f64 > lo / nlo as f64);
    }

    #[test]
    fn highest_risk_cell_matches_hand_logit() {
        let cfg = default_study_config();
        let (ds, truth) = generate(&cfg).unwrap();
        let (i, r) = ds
            .records()
            .iter()
            .enumerate()
            .find(|(_, r)| {
                r.occupation == "farmer"
                    && r.citizenship_group == "cit_c"
                    && (45..60).contains(&r.age)
                    && r.visit_reason == "visiting_relatives"
            })
            .expect("cell populated");
        // age 45-59: 1.4, farmer 0.1, cit_c 0.2, interaction 1.8, visiting 0.8
        let mut eta = truth.intercept + 1.4 + 0.1 + 0.2 + 1.8 + 0.8;
        if r.sex == Sex::Male {
            eta += 0.15;
        }
        if r.declaration_status {
            eta -= 0.6;
        }
        let expected = 1.0 / (1.0 + (-eta).exp());
        assert!((truth.true_probability(i).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn invalid_frequencies_rejected() {
        let mut cfg = default_study_config();
        cfg.visit_reason.levels[0].frequency = 0.9;
        assert!(generate(&cfg).is_err());
        let cfg = GeneratorConfig { n: 0, ..default_study_config() };
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn pathological_offsets_fail_to_bracket() {
        let mut cfg = default_study_config().null_effects();
        cfg.base_rate = 1e-30;
        assert!(matches!(generate(&cfg), Err(Error::Calibration { .. })));
    }
}
