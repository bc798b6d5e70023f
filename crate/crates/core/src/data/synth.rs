//! Planted-structure synthetic data.
//!
//! Facilities are placed in geographic clusters whose centres are several
//! hundred kilometres apart, with every facility inside a 25 km disc around
//! its centre. Each cluster offers each service line through a window of at
//! most four member facilities. Those members split a fixed monthly demand
//! pool by time-varying weights, so one facility's gain is another's loss.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::schema::write_text;
use super::{BaseClass, EncounterFact, FacilityId, FacilityProfile, FactTable, IngestError, MonthYear};
use crate::seed;

pub const SERVICE_LINES: [&str; 9] = [
    "Cancer",
    "DigestiveHealth",
    "Heart",
    "Neuroscience",
    "Orthopedics",
    "Pulmonary",
    "WomenandChildren",
    "Unmapped",
    "AllOther",
];

pub const PAYOR_GROUPS: [&str; 17] = [
    "commercialPrivateIndemPPO",
    "DepartmentofDefense",
    "DeptofVeteransAffairs",
    "HMOManagedCare",
    "HealthExchange",
    "IndianHealthServiceofTribe",
    "KaiserPermanente",
    "MedicaidFeeforService",
    "MedicaidManagedCare",
    "MedicareFeeforService",
    "MedicareManagedCare",
    "CharityCare",
    "OtherGovernment",
    "PremeraBlueCross",
    "Regence",
    "SelfPay",
    "WorkerCompensation",
];

pub const AGE_BUCKETS: [&str; 9] = [
    "0to10", "10to20", "20to30", "30to40", "40to50", "50to60", "60to70", "70to80", "80Plus",
];

const SERVICE_AREAS: [&str; 5] = ["WA-MT SE WA", "OR SW WA", "PGTSND KING", "PGTSND SOUTH", "WA-MT INWA"];
const HOSPITAL_TYPES: [&str; 4] = [
    "Acute Care Hospitals",
    "Critical Access Hospitals",
    "Childrens",
    "Psychiatric",
];
const OWNERSHIP: [&str; 4] = [
    "Government - Hospital District or Authority",
    "Voluntary non-profit - Private",
    "Voluntary non-profit - Church",
    "Proprietary",
];
const RATING_COLUMNS: [&str; 3] = ["nurse_sentiment", "phys_sentiment", "phyavgrate"];

/// Facilities per service line inside one cluster.
const OFFER_WINDOW: usize = 4;
const CLUSTER_RADIUS_KM: f64 = 25.0;
const CENTER_LAT_STEP: f64 = 3.0;
const CENTER_LON_STEP: f64 = 6.0;
const MAX_CLUSTERS: usize = 100;
/// Fact rows per (facility, month, service line) before merging duplicates.
const CHUNKS: usize = 16;
const KM_PER_DEGREE: f64 = 111.195;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_facilities: usize,
    pub n_months: usize,
    pub n_service_lines: usize,
    pub n_clusters: usize,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_facilities: 30,
            n_months: 27,
            n_service_lines: SERVICE_LINES.len(),
            n_clusters: 5,
            noise_scale: 0.01,
            seed: 42,
        }
    }
}

/// Shortest series a fully controlled partial correlation accepts.
const MIN_MONTHS: usize = 6;

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let fail = |m: String| Err(IngestError::ConfigInvalid(m));
        if self.n_clusters == 0 {
            return fail("n_clusters must be at least 1".into());
        }
        if self.n_clusters > MAX_CLUSTERS {
            return fail(format!("n_clusters must be at most {MAX_CLUSTERS}"));
        }
        if self.n_facilities < 2 * self.n_clusters {
            return fail(format!(
                "n_facilities ({}) must be at least 2 * n_clusters ({})",
                self.n_facilities, self.n_clusters
            ));
        }
        if self.n_months < MIN_MONTHS {
            return fail(format!("n_months ({}) must be at least {MIN_MONTHS}", self.n_months));
        }
        if self.n_service_lines == 0 {
            return fail("n_service_lines must be at least 1".into());
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return fail("noise_scale must be a non-negative finite number".into());
        }
        Ok(())
    }

    pub fn start_month() -> MonthYear {
        MonthYear::new(2020, 1).expect("valid month")
    }

    pub fn service_lines(&self) -> Vec<String> {
        (0..self.n_service_lines)
            .map(|i| match SERVICE_LINES.get(i) {
                Some(name) => (*name).to_owned(),
                None => format!("ServiceLine{}", i + 1),
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub facts: FactTable,
    pub profiles: Vec<FacilityProfile>,
    /// Planted cluster index per facility.
    pub ground_truth: BTreeMap<FacilityId, usize>,
}

struct Facility {
    id: FacilityId,
    cluster: usize,
    member: usize,
    lat: f64,
    lon: f64,
    size: f64,
    payor_w: Vec<f64>,
    age_w: Vec<f64>,
    base_w: [f64; 3],
    zip_w: Vec<f64>,
    physicians: Vec<String>,
    physician_w: Vec<f64>,
    rating_base: [f64; 3],
}

fn lognormal_weights(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    let d = LogNormal::new(0.0, sigma).expect("valid sigma");
    (0..n).map(|_| d.sample(rng)).collect()
}

fn pick<'a>(rng: &mut ChaCha8Rng, weights: &[f64], items: &'a [String]) -> &'a str {
    let idx = WeightedIndex::new(weights).expect("positive weights").sample(rng);
    &items[idx]
}

fn round_to(x: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (x * f).round() / f
}

/// Generates facts, profiles and the planted cluster labels.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticData, IngestError> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, &[seed::label("synth")]);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let service_lines = cfg.service_lines();
    let width = cfg.n_facilities.to_string().len().max(3);
    let grid_cols = (cfg.n_clusters as f64).sqrt().ceil() as usize;

    let centers: Vec<(f64, f64)> = (0..cfg.n_clusters)
        .map(|c| {
            let (row, col) = (c / grid_cols, c % grid_cols);
            (40.0 + CENTER_LAT_STEP * row as f64, -125.0 + CENTER_LON_STEP * col as f64)
        })
        .collect();

    let payors: Vec<String> = PAYOR_GROUPS.iter().map(|s| (*s).to_owned()).collect();
    let ages: Vec<String> = AGE_BUCKETS.iter().map(|s| (*s).to_owned()).collect();
    let cluster_zips: Vec<Vec<String>> = (0..cfg.n_clusters)
        .map(|c| (0..15).map(|z| format!("{:05}", 90000 + c * 100 + z)).collect())
        .collect();
    let drgs: Vec<Vec<String>> = (0..service_lines.len())
        .map(|s| (0..12).map(|d| format!("DRG{:03}", 100 + s * 20 + d)).collect())
        .collect();

    let facilities: Vec<Facility> = (0..cfg.n_facilities)
        .map(|i| {
            let cluster = i % cfg.n_clusters;
            let (clat, clon) = centers[cluster];
            let r = CLUSTER_RADIUS_KM * rng.random::<f64>().sqrt();
            let theta = std::f64::consts::TAU * rng.random::<f64>();
            let lat = clat + r * theta.cos() / KM_PER_DEGREE;
            let lon = clon + r * theta.sin() / (KM_PER_DEGREE * clat.to_radians().cos());
            let id = FacilityId(format!("F{:0width$}", i + 1));
            let physicians = (0..12).map(|p| format!("{}-P{:02}", id, p + 1)).collect();
            let size: f64 = rng.sample::<f64, _>(StandardNormal) * 0.4;
            Facility {
                cluster,
                member: i / cfg.n_clusters,
                lat: round_to(lat, 5),
                lon: round_to(lon, 5),
                size: size.exp(),
                payor_w: lognormal_weights(&mut rng, payors.len(), 1.0),
                age_w: lognormal_weights(&mut rng, ages.len(), 0.6),
                base_w: [
                    0.3 * rng.random_range(0.5..1.5),
                    0.2 * rng.random_range(0.5..1.5),
                    0.5 * rng.random_range(0.5..1.5),
                ],
                zip_w: lognormal_weights(&mut rng, 15, 1.2),
                physician_w: lognormal_weights(&mut rng, 12, 1.0),
                physicians,
                rating_base: [
                    rng.random_range(2.0..4.5),
                    rng.random_range(2.0..4.5),
                    rng.random_range(2.0..4.5),
                ],
                id,
            }
        })
        .collect();

    let profiles: Vec<FacilityProfile> = facilities
        .iter()
        .map(|f| FacilityProfile {
            facility_id: f.id.clone(),
            name: format!("Facility {}", f.id),
            // Member k of every cluster belongs to system k, so same-system
            // pairs are always in different clusters.
            system_id: format!("SYS{:02}", f.member + 1),
            latitude: f.lat,
            longitude: f.lon,
            licensed_bed_cnt: (80.0 * f.size * rng.random_range(0.8..1.25)).round().max(10.0) as u32,
            nurse_avg_rate: round_to(rng.random_range(2.5..5.0), 2),
            service_area: SERVICE_AREAS[f.cluster % SERVICE_AREAS.len()].to_owned(),
            hospital_type: HOSPITAL_TYPES[rng.random_range(0..HOSPITAL_TYPES.len())].to_owned(),
            ownership: OWNERSHIP[rng.random_range(0..OWNERSHIP.len())].to_owned(),
            is_covid: rng.random_bool(0.5),
            emergency_services: rng.random_bool(0.8),
        })
        .collect();

    // Monthly counts per (facility index, service line index).
    let start = SyntheticConfig::start_month();
    let mut counts: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
    for cluster in 0..cfg.n_clusters {
        let members: Vec<usize> = (0..cfg.n_facilities).filter(|i| i % cfg.n_clusters == cluster).collect();
        let k = members.len();
        let window = k.min(OFFER_WINDOW);
        for s in 0..service_lines.len() {
            let offset = (s + cluster) % k;
            let offering: Vec<usize> = (0..window).map(|j| members[(offset + j) % k]).collect();
            let base: Vec<f64> = offering
                .iter()
                .map(|&i| facilities[i].size * rng.random_range(40.0..200.0))
                .collect();
            let pool: f64 = base.iter().sum();
            let mut drift: Vec<f64> = offering.iter().map(|_| normal.sample(&mut rng)).collect();
            let mut series = vec![Vec::with_capacity(cfg.n_months); offering.len()];
            for _t in 0..cfg.n_months {
                for g in drift.iter_mut() {
                    *g = 0.6 * *g + 0.8 * normal.sample(&mut rng);
                }
                let w: Vec<f64> = base.iter().zip(&drift).map(|(b, g)| b * (0.35 * g).exp()).collect();
                let total_w: f64 = w.iter().sum();
                let demand = pool * (1.0 + cfg.noise_scale * normal.sample(&mut rng)).max(0.0);
                for (j, wj) in w.iter().enumerate() {
                    series[j].push((demand * wj / total_w).round() as u64);
                }
            }
            for (j, &i) in offering.iter().enumerate() {
                counts.insert((i, s), std::mem::take(&mut series[j]));
            }
        }
    }

    // Split each count over dimension tuples, merging repeats.
    type Key = (usize, i64, usize, BaseClass, String, String, String, String, String);
    let mut merged: BTreeMap<Key, (u64, Vec<f64>)> = BTreeMap::new();
    let mut monthly_ratings: BTreeMap<(usize, i64), Vec<f64>> = BTreeMap::new();
    for ((i, s), series) in &counts {
        let f = &facilities[*i];
        for (t, &n) in series.iter().enumerate() {
            let month = start.add_months(t as i64);
            let ratings = monthly_ratings
                .entry((*i, month.ordinal()))
                .or_insert_with(|| {
                    f.rating_base
                        .iter()
                        .map(|b| round_to((b + 0.2 * normal.sample(&mut rng)).clamp(0.0, 5.0), 3))
                        .collect()
                })
                .clone();
            let chunks = (n as usize).min(CHUNKS);
            if chunks == 0 {
                continue;
            }
            let mut sizes = vec![0u64; chunks];
            for _ in 0..n {
                sizes[rng.random_range(0..chunks)] += 1;
            }
            for size in sizes.into_iter().filter(|&c| c > 0) {
                let base = BaseClass::ALL[WeightedIndex::new(f.base_w).expect("weights").sample(&mut rng)];
                let key: Key = (
                    *i,
                    month.ordinal(),
                    *s,
                    base,
                    pick(&mut rng, &f.payor_w, &payors).to_owned(),
                    pick(&mut rng, &f.age_w, &ages).to_owned(),
                    pick(&mut rng, &f.zip_w, &cluster_zips[f.cluster]).to_owned(),
                    pick(&mut rng, &f.physician_w, &f.physicians).to_owned(),
                    drgs[*s][rng.random_range(0..drgs[*s].len())].clone(),
                );
                merged.entry(key).or_insert_with(|| (0, ratings.clone())).0 += size;
            }
        }
    }

    let facts = merged
        .into_iter()
        .map(|((i, ord, s, base, payor, age, zip, phys, drg), (count, ratings))| EncounterFact {
            facility_id: facilities[i].id.clone(),
            month: MonthYear::from_ordinal(ord),
            service_line: service_lines[s].clone(),
            base_class: base,
            payor_group: payor,
            age_bucket: age,
            zip_code: zip,
            physician_id: phys,
            drg_code: drg,
            count,
            ratings,
        })
        .collect();

    Ok(SyntheticData {
        facts: FactTable {
            rating_columns: RATING_COLUMNS.iter().map(|s| (*s).to_owned()).collect(),
            facts,
        },
        profiles,
        ground_truth: facilities.iter().map(|f| (f.id.clone(), f.cluster)).collect(),
    })
}

/// Writes the `ground_truth_clusters.json` sidecar.
pub fn write_ground_truth(path: &Path, truth: &BTreeMap<FacilityId, usize>) -> Result<(), IngestError> {
    let json = serde_json::to_string_pretty(truth).map_err(|source| IngestError::Json {
        path: path.to_owned(),
        source,
    })?;
    write_text(path, &json)
}

pub fn load_ground_truth(path: &Path) -> Result<BTreeMap<FacilityId, usize>, IngestError> {
    let raw = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&raw).map_err(|source| IngestError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Set of facilities per planted cluster.
#[cfg(test)]
fn clusters_of(truth: &BTreeMap<FacilityId, usize>) -> Vec<std::collections::BTreeSet<FacilityId>> {
    let n = truth.values().max().map_or(0, |m| m + 1);
    let mut out = vec![std::collections::BTreeSet::new(); n];
    for (id, &c) in truth {
        out[c].insert(id.clone());
    }
    out
}
