use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExplainError;

pub const OTHER_GROUP: &str = "Other";

/// Default groups as (name, feature-name prefixes). A prefix ending in `*`
/// matches by prefix; otherwise the name must match exactly.
pub const DEFAULT_GROUPS: &[(&str, &[&str])] = &[
    ("Physician Encounters", &["physician_rank*", "total_physicians*"]),
    ("Payor Groups", &["pyr_*"]),
    ("Nurse ratings", &["nurse_avg_rate", "nurse_sentiment"]),
    ("Encounter Types", &["baseclass_perc_*"]),
    ("Service Lines", &["cpsins_*"]),
    ("Zip Level Encounters", &["zip_rank*"]),
    ("Service Area", &["sa_*"]),
    ("Hospital Types", &["htype_*", "hospownd_*"]),
    ("Facility Ratings", &["phys_sentiment", "phyavgrate"]),
];

fn matches(pattern: &str, name: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => name.starts_with(prefix),
        None => pattern == name,
    }
}

/// Group name to member features. Serialized as a JSON object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureGroupMap {
    pub groups: BTreeMap<String, Vec<String>>,
}

impl FeatureGroupMap {
    /// Default grouping of `feature_names`; features matching no group are
    /// left out (they fall into "Other" on lookup).
    pub fn defaults_for(feature_names: &[String]) -> Self {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for name in feature_names {
            if let Some((g, _)) = DEFAULT_GROUPS.iter().find(|(_, pats)| pats.iter().any(|p| matches(p, name))) {
                groups.entry((*g).to_owned()).or_default().push(name.clone());
            }
        }
        Self { groups }
    }

    pub fn validate(&self) -> Result<(), ExplainError> {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (g, members) in &self.groups {
            for m in members {
                if let Some(first) = owner.insert(m, g) {
                    return Err(ExplainError::DuplicateMember {
                        feature: m.clone(),
                        first: first.to_owned(),
                        second: g.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn group_of(&self, feature: &str) -> &str {
        self.groups
            .iter()
            .find(|(_, m)| m.iter().any(|f| f == feature))
            .map_or(OTHER_GROUP, |(g, _)| g.as_str())
    }

    /// Column names after grouping `feature_names`: declared groups with at
    /// least one present member, then "Other" if anything is ungrouped.
    /// Returns the names and, per feature, its column index.
    pub fn columns(&self, feature_names: &[String]) -> (Vec<String>, Vec<usize>) {
        let owner: Vec<&str> = feature_names.iter().map(|f| self.group_of(f)).collect();
        let mut names: Vec<String> = self
            .groups
            .keys()
            .filter(|g| owner.contains(&g.as_str()))
            .cloned()
            .collect();
        if owner.contains(&OTHER_GROUP) && !names.iter().any(|n| n == OTHER_GROUP) {
            names.push(OTHER_GROUP.to_owned());
        }
        let index = owner
            .iter()
            .map(|o| names.iter().position(|n| n == o).expect("every owner is a column"))
            .collect();
        (names, index)
    }

    pub fn load(path: &Path) -> Result<Self, ExplainError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExplainError::Io {
            path: path.to_owned(),
            source,
        })?;
        let map: Self = serde_json::from_str(&text).map_err(|source| ExplainError::Json {
            path: path.to_owned(),
            source,
        })?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("groups serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| (*s).to_owned()).collect()
    }

    #[test]
    fn defaults_cover_families() {
        let f = names(&["facencnt", "pyr_Medicare", "zip_rank1", "zip_rank2", "htype_Acute", "nurse_sentiment", "phyavgrate"]);
        let g = FeatureGroupMap::defaults_for(&f);
        assert_eq!(g.group_of("pyr_Medicare"), "Payor Groups");
        assert_eq!(g.group_of("zip_rank2"), "Zip Level Encounters");
        assert_eq!(g.group_of("htype_Acute"), "Hospital Types");
        assert_eq!(g.group_of("nurse_sentiment"), "Nurse ratings");
        assert_eq!(g.group_of("phyavgrate"), "Facility Ratings");
        assert_eq!(g.group_of("facencnt"), OTHER_GROUP);
        let (cols, idx) = g.columns(&f);
        assert_eq!(cols.last().unwrap(), OTHER_GROUP);
        assert_eq!(cols[idx[2]], "Zip Level Encounters");
        g.validate().unwrap();
    }

    #[test]
    fn duplicate_member_rejected() {
        let mut g = FeatureGroupMap::default();
        g.groups.insert("A".into(), names(&["x"]));
        g.groups.insert("B".into(), names(&["x"]));
        assert!(matches!(g.validate(), Err(ExplainError::DuplicateMember { .. })));
    }

    #[test]
    fn json_round_trip() {
        let g = FeatureGroupMap::defaults_for(&names(&["pyr_a", "sa_b"]));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("groups.json");
        std::fs::write(&p, g.to_json()).unwrap();
        assert_eq!(FeatureGroupMap::load(&p).unwrap(), g);
        assert!(g.to_json().contains("\"Payor Groups\": ["));
    }
}
