use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FacilityId, FactTable, IngestError, MonthYear};

/// Denominator used for market share.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Total encounters of the facility's competitor pool.
    #[default]
    Component,
    /// Total encounters of every facility in the data set.
    Statewide,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShareTargets {
    /// Market share in percent per (facility, month).
    pub targets: BTreeMap<(FacilityId, MonthYear), f64>,
    /// Facility-months whose pool had zero encounters.
    pub dropped: Vec<(FacilityId, MonthYear)>,
}

/// Computes `100 * facility encounters / pool encounters` for every
/// facility-month in `facts`.
///
/// Every facility with facts must belong to exactly one of `components`.
pub fn compute_market_share(
    facts: &FactTable,
    components: &[BTreeSet<FacilityId>],
    denominator: Denominator,
) -> Result<ShareTargets, IngestError> {
    let mut component_of: BTreeMap<&FacilityId, usize> = BTreeMap::new();
    for (c, members) in components.iter().enumerate() {
        for m in members {
            if component_of.insert(m, c).is_some() {
                return Err(IngestError::MultipleComponents(m.clone()));
            }
        }
    }

    let mut volume: BTreeMap<(FacilityId, MonthYear), u64> = BTreeMap::new();
    for f in &facts.facts {
        *volume.entry((f.facility_id.clone(), f.month)).or_default() += f.count;
    }

    let mut pool_total: BTreeMap<(usize, MonthYear), u64> = BTreeMap::new();
    for ((id, month), &n) in &volume {
        let c = match denominator {
            Denominator::Component => *component_of
                .get(id)
                .ok_or_else(|| IngestError::Unassigned(id.clone()))?,
            Denominator::Statewide => 0,
        };
        *pool_total.entry((c, *month)).or_default() += n;
    }

    let mut out = ShareTargets::default();
    for ((id, month), n) in volume {
        let c = match denominator {
            Denominator::Component => component_of[&id],
            Denominator::Statewide => 0,
        };
        let total = pool_total[&(c, month)];
        if total == 0 {
            log::warn!("pool of {id} has zero encounters in {month}; row dropped");
            out.dropped.push((id, month));
            continue;
        }
        out.targets.insert((id, month), 100.0 * n as f64 / total as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BaseClass, EncounterFact};

    fn fact(id: &str, month: u32, count: u64) -> EncounterFact {
        EncounterFact {
            facility_id: id.into(),
            month: MonthYear::new(2020, month).unwrap(),
            service_line: "Heart".into(),
            base_class: BaseClass::Inpatient,
            payor_group: "SelfPay".into(),
            age_bucket: "0to10".into(),
            zip_code: "1".into(),
            physician_id: "P".into(),
            drg_code: "D".into(),
            count,
            ratings: vec![],
        }
    }

    fn set(ids: &[&str]) -> BTreeSet<FacilityId> {
        ids.iter().map(|s| FacilityId::from(*s)).collect()
    }

    fn month(m: u32) -> MonthYear {
        MonthYear::new(2020, m).unwrap()
    }

    #[test]
    fn direct_ratio() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", 1, 50), fact("B", 1, 150)],
        };
        let t = compute_market_share(&facts, &[set(&["A", "B"])], Denominator::Component).unwrap();
        assert_eq!(t.targets[&("A".into(), month(1))], 25.0);
        assert_eq!(t.targets[&("B".into(), month(1))], 75.0);
    }

    #[test]
    fn singleton_is_hundred() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", 1, 7), fact("B", 1, 3)],
        };
        let t = compute_market_share(&facts, &[set(&["A"]), set(&["B"])], Denominator::Component).unwrap();
        assert_eq!(t.targets[&("A".into(), month(1))], 100.0);
    }

    #[test]
    fn zero_pool_drops_row() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", 1, 0), fact("B", 1, 0), fact("A", 2, 4)],
        };
        let t = compute_market_share(&facts, &[set(&["A", "B"])], Denominator::Component).unwrap();
        assert_eq!(t.dropped.len(), 2);
        assert_eq!(t.targets.len(), 1);
    }

    #[test]
    fn unassigned_and_double_membership_rejected() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", 1, 1), fact("C", 1, 1)],
        };
        assert!(matches!(
            compute_market_share(&facts, &[set(&["A"])], Denominator::Component),
            Err(IngestError::Unassigned(_))
        ));
        assert!(matches!(
            compute_market_share(&facts, &[set(&["A", "C"]), set(&["A"])], Denominator::Component),
            Err(IngestError::MultipleComponents(_))
        ));
    }

    #[test]
    fn statewide_uses_all_facilities() {
        let facts = FactTable {
            rating_columns: vec![],
            facts: vec![fact("A", 1, 10), fact("B", 1, 30)],
        };
        let t = compute_market_share(&facts, &[], Denominator::Statewide).unwrap();
        assert_eq!(t.targets[&("A".into(), month(1))], 25.0);
    }

    proptest::proptest! {
        #[test]
        fn pool_shares_sum_to_hundred(
            counts in proptest::collection::vec((0usize..8, 1u32..=4, 0u64..500), 1..60),
            cut in 1usize..8,
        ) {
            let ids = ["A", "B", "C", "D", "E", "F", "G", "H"];
            let facts = FactTable {
                rating_columns: vec![],
                facts: counts.iter().map(|&(f, m, n)| fact(ids[f], m, n)).collect(),
            };
            let pools = [set(&ids[..cut]), set(&ids[cut..])];
            let t = compute_market_share(&facts, &pools, Denominator::Component).unwrap();
            let mut sums: BTreeMap<(bool, MonthYear), f64> = BTreeMap::new();
            for ((id, m), v) in &t.targets {
                proptest::prop_assert!((0.0..=100.0).contains(v));
                *sums.entry((pools[0].contains(id), *m)).or_default() += v;
            }
            for s in sums.values() {
                proptest::prop_assert!((s - 100.0).abs() <= 1e-9, "sum {}", s);
            }
        }
    }
}
