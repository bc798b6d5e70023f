use serde::{Deserialize, Serialize};

use super::RegressionError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub n_trees: usize,
    /// `None` grows until the leaf-size or zero-gain stop.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Fraction of features considered at each split, in (0, 1].
    pub max_features_fraction: f64,
    pub bootstrap: bool,
    /// Shrinkage for boosting; ignored by bagging.
    pub learning_rate: f64,
    pub cap_lo: f64,
    pub cap_hi: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: Some(10),
            min_samples_leaf: 2,
            max_features_fraction: 0.5,
            bootstrap: true,
            learning_rate: 0.1,
            cap_lo: 2.0,
            cap_hi: 99.0,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), RegressionError> {
        let bad = |m: &str| Err(RegressionError::InvalidParams(m.into()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        if !(self.max_features_fraction > 0.0 && self.max_features_fraction <= 1.0) {
            return bad("max_features_fraction must lie in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0, 1]");
        }
        if !(self.cap_lo < self.cap_hi) {
            return bad("cap_lo must be below cap_hi");
        }
        Ok(())
    }

    /// Number of candidate features per split for `d` features.
    pub fn candidate_count(&self, d: usize) -> usize {
        ((self.max_features_fraction * d as f64).ceil() as usize).clamp(1, d.max(1))
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.cap_lo, self.cap_hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let p = HyperParams::default();
        p.validate().unwrap();
        assert_eq!((p.cap_lo, p.cap_hi), (2.0, 99.0));
    }

    #[test]
    fn rejects_bad_values() {
        for p in [
            HyperParams { n_trees: 0, ..Default::default() },
            HyperParams { max_features_fraction: 0.0, ..Default::default() },
            HyperParams { learning_rate: 1.5, ..Default::default() },
            HyperParams { cap_lo: 99.0, cap_hi: 2.0, ..Default::default() },
        ] {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn candidate_count_rounds_up() {
        let p = HyperParams { max_features_fraction: 0.3, ..Default::default() };
        assert_eq!(p.candidate_count(10), 3);
        assert_eq!(p.candidate_count(11), 4);
        assert_eq!(p.candidate_count(1), 1);
    }
}
