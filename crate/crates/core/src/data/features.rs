//! Facility-month feature engineering.
//!
//! Column families, in output order:
//!
//! | family | columns |
//! |---|---|
//! | volume | `facencnt` |
//! | service lines | `cpsins_<line>` |
//! | payors | `pyr_<group>` |
//! | ages | `age<bucket>` |
//! | base class mix | `baseclass_perc_{ED,IP,OP}` (percent of encounters) |
//! | rankings | `zip_rank1..n`, `physician_rank1..n`, `drg_rank1..n` |
//! | physicians | `total_physicians`, `total_physicians_atleast30` |
//! | ratings | one column per optional rating input (count-weighted mean) |
//! | profile | `licensed_bed_cnt`, `nurse_avg_rate`, `is_covid`, `emergency_services` |
//! | geography | `numoffac0to10km` |
//! | one-hot | `sa_<area>`, `htype_<type>`, `hospownd_<ownership>` |
//!
//! Category vocabularies are the sorted distinct values seen in the inputs,
//! so the column order is a pure function of the data. With the generator's
//! defaults (9 service lines, 17 payors, 9 age buckets, top 10 rankings,
//! 3 ratings, 5 areas, 4 types, 4 ownerships) this yields 92 columns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::{BaseClass, FacilityId, FacilityProfile, FactTable, IngestError, MonthYear};
use crate::graph::{haversine_km, GeoPoint};

pub const DEFAULT_TOP_N: usize = 10;
const NEAR_KM: f64 = 10.0;
const BUSY_PHYSICIAN: u64 = 30;

/// One modelling row: a facility-month and its features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub facility_id: FacilityId,
    pub month: MonthYear,
    /// Aligned with [`FeatureTable::feature_names`].
    pub values: Vec<f64>,
    /// Market share in percent, once computed.
    pub target: Option<f64>,
}

/// Feature rows sharing one ordered feature-name list.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Named view of one row.
    pub fn row_map(&self, i: usize) -> BTreeMap<&str, f64> {
        self.feature_names
            .iter()
            .map(String::as_str)
            .zip(self.rows[i].values.iter().copied())
            .collect()
    }

    /// Distinct months, ascending.
    pub fn months(&self) -> Vec<MonthYear> {
        self.rows
            .iter()
            .map(|r| r.month)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Attaches targets keyed by (facility, month) and drops rows without one.
    pub fn with_targets(mut self, targets: &BTreeMap<(FacilityId, MonthYear), f64>) -> Self {
        self.rows.retain_mut(|row| match targets.get(&(row.facility_id.clone(), row.month)) {
            Some(&t) => {
                row.target = Some(t);
                true
            }
            None => false,
        });
        self
    }

    /// Writes `features.csv`: `facility_id,year,month,target,<features...>`.
    pub fn write_csv(&self, path: &Path) -> Result<(), IngestError> {
        let err = |source| IngestError::Csv {
            path: path.to_owned(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        let mut header = vec!["facility_id", "year", "month", "target"];
        header.extend(self.feature_names.iter().map(String::as_str));
        w.write_record(&header).map_err(err)?;
        for row in &self.rows {
            let mut rec = vec![
                row.facility_id.0.clone(),
                row.month.year().to_string(),
                row.month.month().to_string(),
                row.target.map(|t| t.to_string()).unwrap_or_default(),
            ];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(err)?;
        }
        w.flush().map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self, IngestError> {
        let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut reader = csv::Reader::from_reader(file);
        let header = reader
            .headers()
            .map_err(|source| IngestError::Csv {
                path: path.to_owned(),
                source,
            })?
            .clone();
        let expected = ["facility_id", "year", "month", "target"];
        if header.len() < 4 || header.iter().take(4).ne(expected) {
            return Err(IngestError::HeaderMismatch {
                expected: expected.iter().map(|s| (*s).to_owned()).collect(),
                found: header.iter().map(str::to_owned).collect(),
            });
        }
        let feature_names: Vec<String> = header.iter().skip(4).map(str::to_owned).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|source| IngestError::Csv {
                path: path.to_owned(),
                source,
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let bad = |reason: String| IngestError::MalformedRow { line, reason };
            let year: i32 = record[1].parse().map_err(|_| bad(format!("bad year {:?}", &record[1])))?;
            let month: u32 = record[2].parse().map_err(|_| bad(format!("bad month {:?}", &record[2])))?;
            let month = MonthYear::new(year, month).ok_or_else(|| bad("month out of range".into()))?;
            let target = match &record[3] {
                "" => None,
                t => Some(t.parse::<f64>().map_err(|_| bad(format!("bad target {t:?}")))?),
            };
            let values = record
                .iter()
                .skip(4)
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad feature value {v:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(FeatureRow {
                facility_id: FacilityId::new(&record[0]),
                month,
                values,
                target,
            });
        }
        Ok(Self { feature_names, rows })
    }
}

#[derive(Default)]
struct Accumulator {
    total: u64,
    service: HashMap<String, u64>,
    payor: HashMap<String, u64>,
    age: HashMap<String, u64>,
    base: [u64; 3],
    zip: HashMap<String, u64>,
    physician: HashMap<String, u64>,
    drg: HashMap<String, u64>,
    rating_sums: Vec<f64>,
    rating_rows: u64,
}

/// Counts of the `top_n` largest categories, descending, zero-padded.
fn ranked(counts: &HashMap<String, u64>, top_n: usize) -> Vec<f64> {
    let mut v: Vec<(&String, u64)> = counts.iter().map(|(k, c)| (k, *c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut out: Vec<f64> = v.iter().take(top_n).map(|(_, c)| *c as f64).collect();
    out.resize(top_n, 0.0);
    out
}

fn one_hot<'a>(vocab: &'a [String], value: &'a str) -> impl Iterator<Item = f64> + 'a {
    vocab.iter().map(move |v| f64::from(u8::from(v == value)))
}

fn vocab<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    values.collect::<BTreeSet<_>>().into_iter().map(str::to_owned).collect()
}

/// Builds one [`FeatureRow`] per facility-month present in `facts`. Targets
/// are left unset.
pub fn engineer_features(
    facts: &FactTable,
    profiles: &[FacilityProfile],
    top_n: usize,
) -> Result<FeatureTable, IngestError> {
    if facts.is_empty() {
        return Err(IngestError::EmptyFacts);
    }
    if top_n == 0 {
        return Err(IngestError::ConfigInvalid("top_n must be at least 1".into()));
    }
    let by_id: HashMap<&FacilityId, &FacilityProfile> =
        profiles.iter().map(|p| (&p.facility_id, p)).collect();

    let n_ratings = facts.rating_columns.len();
    let mut acc: BTreeMap<(FacilityId, MonthYear), Accumulator> = BTreeMap::new();
    for f in &facts.facts {
        if !by_id.contains_key(&f.facility_id) {
            return Err(IngestError::UnknownFacility(f.facility_id.clone()));
        }
        let a = acc.entry((f.facility_id.clone(), f.month)).or_default();
        a.total += f.count;
        *a.service.entry(f.service_line.clone()).or_default() += f.count;
        *a.payor.entry(f.payor_group.clone()).or_default() += f.count;
        *a.age.entry(f.age_bucket.clone()).or_default() += f.count;
        a.base[BaseClass::ALL.iter().position(|b| *b == f.base_class).expect("known class")] += f.count;
        *a.zip.entry(f.zip_code.clone()).or_default() += f.count;
        *a.physician.entry(f.physician_id.clone()).or_default() += f.count;
        *a.drg.entry(f.drg_code.clone()).or_default() += f.count;
        if a.rating_sums.is_empty() {
            a.rating_sums = vec![0.0; n_ratings];
        }
        // Weight by count; rows with zero count still contribute once.
        let w = f.count.max(1) as f64;
        for (s, r) in a.rating_sums.iter_mut().zip(&f.ratings) {
            *s += w * r;
        }
        a.rating_rows += f.count.max(1);
    }

    let services = vocab(facts.facts.iter().map(|f| f.service_line.as_str()));
    let payors = vocab(facts.facts.iter().map(|f| f.payor_group.as_str()));
    let ages = vocab(facts.facts.iter().map(|f| f.age_bucket.as_str()));
    let areas = vocab(profiles.iter().map(|p| p.service_area.as_str()));
    let types = vocab(profiles.iter().map(|p| p.hospital_type.as_str()));
    let owners = vocab(profiles.iter().map(|p| p.ownership.as_str()));

    let mut names: Vec<String> = vec!["facencnt".into()];
    names.extend(services.iter().map(|s| format!("cpsins_{s}")));
    names.extend(payors.iter().map(|s| format!("pyr_{s}")));
    names.extend(ages.iter().map(|s| format!("age{s}")));
    names.extend(BaseClass::ALL.iter().map(|b| format!("baseclass_perc_{}", b.code())));
    for family in ["zip_rank", "physician_rank", "drg_rank"] {
        names.extend((1..=top_n).map(|i| format!("{family}{i}")));
    }
    names.push("total_physicians".into());
    names.push("total_physicians_atleast30".into());
    names.extend(facts.rating_columns.iter().cloned());
    names.extend(
        ["licensed_bed_cnt", "nurse_avg_rate", "is_covid", "emergency_services", "numoffac0to10km"]
            .map(String::from),
    );
    names.extend(areas.iter().map(|s| format!("sa_{s}")));
    names.extend(types.iter().map(|s| format!("htype_{s}")));
    names.extend(owners.iter().map(|s| format!("hospownd_{s}")));

    let nearby: HashMap<&FacilityId, f64> = profiles
        .iter()
        .map(|p| {
            let here = GeoPoint::new(p.latitude, p.longitude).expect("validated profile");
            let n = profiles
                .iter()
                .filter(|q| q.facility_id != p.facility_id)
                .filter(|q| {
                    let there = GeoPoint::new(q.latitude, q.longitude).expect("validated profile");
                    haversine_km(here, there) <= NEAR_KM
                })
                .count();
            (&p.facility_id, n as f64)
        })
        .collect();

    let rows = acc
        .into_iter()
        .map(|((id, month), a)| {
            let p = by_id[&id];
            let mut v = Vec::with_capacity(names.len());
            v.push(a.total as f64);
            let lookup = |m: &HashMap<String, u64>, k: &String| m.get(k).copied().unwrap_or(0) as f64;
            v.extend(services.iter().map(|s| lookup(&a.service, s)));
            v.extend(payors.iter().map(|s| lookup(&a.payor, s)));
            v.extend(ages.iter().map(|s| lookup(&a.age, s)));
            v.extend(a.base.iter().map(|&c| {
                if a.total == 0 {
                    0.0
                } else {
                    100.0 * c as f64 / a.total as f64
                }
            }));
            v.extend(ranked(&a.zip, top_n));
            v.extend(ranked(&a.physician, top_n));
            v.extend(ranked(&a.drg, top_n));
            v.push(a.physician.values().filter(|&&c| c > 0).count() as f64);
            v.push(a.physician.values().filter(|&&c| c >= BUSY_PHYSICIAN).count() as f64);
            v.extend(a.rating_sums.iter().map(|s| s / a.rating_rows as f64));
            v.push(f64::from(p.licensed_bed_cnt));
            v.push(p.nurse_avg_rate);
            v.push(f64::from(u8::from(p.is_covid)));
            v.push(f64::from(u8::from(p.emergency_services)));
            v.push(nearby[&id]);
            v.extend(one_hot(&areas, &p.service_area));
            v.extend(one_hot(&types, &p.hospital_type));
            v.extend(one_hot(&owners, &p.ownership));
            debug_assert_eq!(v.len(), names.len());
            FeatureRow {
                facility_id: id,
                month,
                values: v,
                target: None,
            }
        })
        .collect();

    Ok(FeatureTable {
        feature_names: names,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, EncounterFact, SyntheticConfig};

    fn profile(id: &str, area: &str, lat: f64) -> FacilityProfile {
        FacilityProfile {
            facility_id: id.into(),
            name: id.into(),
            system_id: format!("S-{id}"),
            latitude: lat,
            longitude: -122.0,
            licensed_bed_cnt: 50,
            nurse_avg_rate: 4.0,
            service_area: area.into(),
            hospital_type: "Acute".into(),
            ownership: "Gov".into(),
            is_covid: false,
            emergency_services: true,
        }
    }

    fn fact(id: &str, zip: &str, count: u64) -> EncounterFact {
        EncounterFact {
            facility_id: id.into(),
            month: MonthYear::new(2020, 1).unwrap(),
            service_line: "Heart".into(),
            base_class: BaseClass::Emergency,
            payor_group: "SelfPay".into(),
            age_bucket: "30to40".into(),
            zip_code: zip.into(),
            physician_id: "P1".into(),
            drg_code: "D1".into(),
            count,
            ratings: vec![],
        }
    }

    #[test]
    fn zip_ranks_keep_top_n_descending() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", "z1", 20), fact("A", "z2", 30), fact("A", "z3", 5)],
        };
        let t = engineer_features(&facts, &[profile("A", "X", 47.0)], 2).unwrap();
        let row = t.row_map(0);
        assert_eq!(row["zip_rank1"], 30.0);
        assert_eq!(row["zip_rank2"], 20.0);
        assert!(!row.contains_key("zip_rank3"));
        assert_eq!(row["facencnt"], 55.0);
        assert_eq!(row["baseclass_perc_ED"], 100.0);
    }

    #[test]
    fn service_area_one_hot() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", "z1", 1), fact("B", "z1", 1)],
        };
        let t = engineer_features(&facts, &[profile("A", "X", 47.0), profile("B", "Y", 48.0)], 3).unwrap();
        let a = t.row_map(0);
        assert_eq!((a["sa_X"], a["sa_Y"]), (1.0, 0.0));
        let b = t.row_map(1);
        assert_eq!((b["sa_X"], b["sa_Y"]), (0.0, 1.0));
    }

    #[test]
    fn nearby_count_uses_distance() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", "z1", 1)],
        };
        // 0.05 degrees of latitude is about 5.6 km.
        let profiles = [profile("A", "X", 47.0), profile("B", "X", 47.05), profile("C", "X", 48.0)];
        let t = engineer_features(&facts, &profiles, 1).unwrap();
        assert_eq!(t.row_map(0)["numoffac0to10km"], 1.0);
    }

    #[test]
    fn empty_and_unknown_rejected() {
        assert!(matches!(
            engineer_features(&FactTable::default(), &[], 10),
            Err(IngestError::EmptyFacts)
        ));
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("Z", "z1", 1)],
        };
        assert!(matches!(
            engineer_features(&facts, &[profile("A", "X", 47.0)], 10),
            Err(IngestError::UnknownFacility(_))
        ));
    }

    #[test]
    fn synthetic_features_hold_invariants() {
        let data = generate_synthetic(&SyntheticConfig::default()).unwrap();
        let t = engineer_features(&data.facts, &data.profiles, DEFAULT_TOP_N).unwrap();
        assert_eq!(t.n_features(), 92);
        assert_eq!(t.rows.len(), 30 * 27);
        for family in ["zip_rank", "physician_rank", "drg_rank"] {
            let idx: Vec<usize> = (1..=DEFAULT_TOP_N)
                .map(|i| t.feature_index(&format!("{family}{i}")).unwrap())
                .collect();
            for row in &t.rows {
                assert!(idx.windows(2).all(|w| row.values[w[0]] >= row.values[w[1]]));
            }
        }
        for prefix in ["sa_", "htype_", "hospownd_"] {
            let idx: Vec<usize> = (0..t.n_features())
                .filter(|&j| t.feature_names[j].starts_with(prefix))
                .collect();
            assert!(!idx.is_empty());
            for row in &t.rows {
                assert_eq!(idx.iter().map(|&j| row.values[j]).sum::<f64>(), 1.0);
            }
        }
        assert!(t.rows.iter().all(|r| r.values.iter().all(|v| v.is_finite())));
        // Pure: a second run is identical.
        assert_eq!(t, engineer_features(&data.facts, &data.profiles, DEFAULT_TOP_N).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", "z1", 20), fact("A", "z2", 30)],
        };
        let mut t = engineer_features(&facts, &[profile("A", "X", 47.0)], 2).unwrap();
        t.rows[0].target = Some(12.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        t.write_csv(&path).unwrap();
        assert_eq!(FeatureTable::read_csv(&path).unwrap(), t);
    }
}
