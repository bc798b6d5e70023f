use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit_model, Algo, EvalMetrics, HyperParams, RegressionError};
use crate::{exec, seed};

/// Ranges sampled by [`random_search`]. Integer and real ranges are
/// inclusive; `n_trees` and `learning_rate` are drawn log-uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub n_trees: (usize, usize),
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_leaf: (usize, usize),
    pub max_features_fraction: (f64, f64),
    pub bootstrap: Vec<bool>,
    pub learning_rate: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_trees: (20, 120),
            max_depth: vec![Some(4), Some(6), Some(8), Some(10)],
            min_samples_leaf: (1, 8),
            max_features_fraction: (0.3, 1.0),
            bootstrap: vec![true],
            learning_rate: (0.03, 0.3),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), RegressionError> {
        let empty = |m: &str| Err(RegressionError::EmptySpace(m.into()));
        if self.n_trees.0 == 0 || self.n_trees.0 > self.n_trees.1 {
            return empty("n_trees range");
        }
        if self.max_depth.is_empty() || self.bootstrap.is_empty() {
            return empty("max_depth or bootstrap choices");
        }
        if self.min_samples_leaf.0 == 0 || self.min_samples_leaf.0 > self.min_samples_leaf.1 {
            return empty("min_samples_leaf range");
        }
        let (flo, fhi) = self.max_features_fraction;
        if !(flo > 0.0 && flo <= fhi && fhi <= 1.0) {
            return empty("max_features_fraction range");
        }
        let (llo, lhi) = self.learning_rate;
        if !(llo > 0.0 && llo <= lhi && lhi <= 1.0) {
            return empty("learning_rate range");
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, base: &HyperParams, rng: &mut R) -> HyperParams {
        let log_uniform = |rng: &mut R, lo: f64, hi: f64| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo.ln()..=hi.ln()).exp()
            }
        };
        let n_trees = log_uniform(rng, self.n_trees.0 as f64, self.n_trees.1 as f64 + 1.0).floor() as usize;
        HyperParams {
            n_trees: n_trees.clamp(self.n_trees.0, self.n_trees.1),
            max_depth: *self.max_depth.choose(rng).expect("validated"),
            min_samples_leaf: rng.random_range(self.min_samples_leaf.0..=self.min_samples_leaf.1),
            max_features_fraction: rng.random_range(self.max_features_fraction.0..=self.max_features_fraction.1),
            bootstrap: *self.bootstrap.choose(rng).expect("validated"),
            learning_rate: log_uniform(rng, self.learning_rate.0, self.learning_rate.1),
            cap_lo: base.cap_lo,
            cap_hi: base.cap_hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: HyperParams,
    pub validation: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub algo: Algo,
    pub best: HyperParams,
    pub best_index: usize,
    pub trials: Vec<Trial>,
}

/// Samples `n_iter` configurations, fits each on `train` and keeps the one
/// with the lowest validation MAPE (capped predictions; earliest trial wins
/// ties). Configurations are drawn sequentially from one stream and the fits
/// run in parallel, so the trial log is independent of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    space: &SearchSpace,
    base: &HyperParams,
    n_iter: usize,
    algo: Algo,
    feature_names: &[String],
    train: (&[Vec<f64>], &[f64]),
    valid: (&[Vec<f64>], &[f64]),
    seed: u64,
) -> Result<SearchResult, RegressionError> {
    space.validate()?;
    if n_iter == 0 {
        return Err(RegressionError::EmptySpace("n_iter must be at least 1".into()));
    }
    let mut rng = seed::rng(seed, &[seed::label("search")]);
    let configs: Vec<HyperParams> = if algo == Algo::Lr {
        vec![base.clone()]
    } else {
        (0..n_iter).map(|_| space.sample(base, &mut rng)).collect()
    };
    let trials = exec::try_map_range(configs.len(), |i| {
        let params = &configs[i];
        let trial_seed = seed::derive(seed, &[seed::label("trial"), i as u64]);
        let model = fit_model(algo, feature_names, train.0, train.1, params, trial_seed)?;
        let validation = EvalMetrics::compute(valid.1, &model.predict(valid.0)?)?;
        Ok::<_, RegressionError>(Trial {
            index: i,
            params: params.clone(),
            validation,
        })
    })?;
    let best_index = trials
        .iter()
        .min_by(|a, b| a.validation.mape.total_cmp(&b.validation.mape).then(a.index.cmp(&b.index)))
        .map(|t| t.index)
        .expect("at least one trial");
    Ok(SearchResult {
        algo,
        best: trials[best_index].params.clone(),
        best_index,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let y = x.iter().map(|r| if r[0] > 0.5 { 60.0 } else { 20.0 } + 10.0 * r[1]).collect();
        (x, y)
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn small() -> SearchSpace {
        SearchSpace {
            n_trees: (3, 12),
            ..Default::default()
        }
    }

    #[test]
    fn argmin_over_trial_log() {
        let (xt, yt) = data(1, 120);
        let (xv, yv) = data(2, 40);
        let r = random_search(&small(), &HyperParams::default(), 6, Algo::Rf, &names(), (&xt, &yt), (&xv, &yv), 3).unwrap();
        assert_eq!(r.trials.len(), 6);
        let min = r.trials.iter().map(|t| t.validation.mape).fold(f64::INFINITY, f64::min);
        assert_eq!(r.trials[r.best_index].validation.mape, min);
        assert_eq!(r.best, r.trials[r.best_index].params);
        for t in &r.trials {
            assert!((3..=12).contains(&t.params.n_trees));
            assert!((0.03..=0.3).contains(&t.params.learning_rate));
        }
    }

    #[test]
    fn single_iteration_returns_its_sample() {
        let (xt, yt) = data(1, 60);
        let r = random_search(&small(), &HyperParams::default(), 1, Algo::Gbm, &names(), (&xt, &yt), (&xt, &yt), 3).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best, r.trials[0].params);
    }

    #[test]
    fn fixed_seed_fixed_trials() {
        let (xt, yt) = data(1, 60);
        let run = |s| random_search(&small(), &HyperParams::default(), 4, Algo::Rf, &names(), (&xt, &yt), (&xt, &yt), s).unwrap();
        assert_eq!(run(9), run(9));
        assert_ne!(run(9).trials[0].params, run(10).trials[0].params);
    }

    #[test]
    fn empty_space_rejected() {
        let (xt, yt) = data(1, 10);
        let space = SearchSpace { max_depth: vec![], ..Default::default() };
        assert!(matches!(
            random_search(&space, &HyperParams::default(), 2, Algo::Rf, &names(), (&xt, &yt), (&xt, &yt), 0),
            Err(RegressionError::EmptySpace(_))
        ));
    }
}
