use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::grow_tree;
use super::{check_xy, HyperParams, RegressionError, Tree};
use crate::{exec, seed};

/// How tree outputs combine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForestKind {
    /// Mean of the trees.
    Bagged,
    /// `base + learning_rate * sum of trees`.
    Boosted { base: f64, learning_rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub kind: ForestKind,
    pub feature_names: Vec<String>,
    pub params: HyperParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Uncapped model output.
    pub fn raw_predict_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        match self.kind {
            ForestKind::Bagged => sum / self.trees.len() as f64,
            ForestKind::Boosted { base, learning_rate } => base + learning_rate * sum,
        }
    }

    /// Training MSE after each boosting round (or each added tree).
    pub fn staged_mse(&self, x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; x.len()];
        let mut out = Vec::with_capacity(self.trees.len());
        for (t, tree) in self.trees.iter().enumerate() {
            for (a, row) in acc.iter_mut().zip(x) {
                *a += tree.predict_row(row);
            }
            let mse = acc
                .iter()
                .zip(y)
                .map(|(a, target)| {
                    let pred = match self.kind {
                        ForestKind::Bagged => a / (t + 1) as f64,
                        ForestKind::Boosted { base, learning_rate } => base + learning_rate * a,
                    };
                    (pred - target).powi(2)
                })
                .sum::<f64>()
                / y.len() as f64;
            out.push(mse);
        }
        out
    }

    pub fn validate(&self) -> Result<(), RegressionError> {
        if self.trees.is_empty() {
            return Err(RegressionError::UntrainedModel);
        }
        self.trees.iter().try_for_each(|t| t.validate(self.feature_names.len()))
    }
}

fn check_names(names: &[String], d: usize) -> Result<(), RegressionError> {
    if names.len() != d {
        return Err(RegressionError::SchemaMismatch {
            expected: names.len(),
            found: d,
        });
    }
    Ok(())
}

/// Bagged random forest. Tree `t` draws its bootstrap sample and feature
/// subsets from the stream `(seed, t)`, so the result does not depend on how
/// many threads grew the trees.
pub fn fit_forest(
    feature_names: &[String],
    x: &[Vec<f64>],
    y: &[f64],
    params: &HyperParams,
    seed: u64,
) -> Result<ForestModel, RegressionError> {
    let d = check_xy(x, y)?;
    check_names(feature_names, d)?;
    params.validate()?;
    let n = x.len();
    let trees = exec::map_range(params.n_trees, |t| {
        let mut rng = seed::rng(seed, &[t as u64]);
        let idx: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        grow_tree(x, y, idx, params, &mut rng)
    });
    Ok(ForestModel {
        kind: ForestKind::Bagged,
        feature_names: feature_names.to_vec(),
        params: params.clone(),
        seed,
        trees,
    })
}

/// Stagewise squared-loss boosting: each tree fits the residuals of the
/// ensemble so far on all rows (no row subsampling).
pub fn fit_gbm(
    feature_names: &[String],
    x: &[Vec<f64>],
    y: &[f64],
    params: &HyperParams,
    seed: u64,
) -> Result<ForestModel, RegressionError> {
    let d = check_xy(x, y)?;
    check_names(feature_names, d)?;
    params.validate()?;
    let n = x.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let lr = params.learning_rate;
    let mut current = vec![base; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let residual: Vec<f64> = y.iter().zip(&current).map(|(a, b)| a - b).collect();
        let mut rng = seed::rng(seed, &[t as u64]);
        let tree = grow_tree(x, &residual, (0..n).collect(), params, &mut rng);
        let step = exec::map_slice(x, |row| tree.predict_row(row));
        for (c, s) in current.iter_mut().zip(step) {
            *c += lr * s;
        }
        trees.push(tree);
    }
    Ok(ForestModel {
        kind: ForestKind::Boosted { base, learning_rate: lr },
        feature_names: feature_names.to_vec(),
        params: params.clone(),
        seed,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::{fit_linear, fit_tree};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("f{j}")).collect()
    }

    fn nonlinear(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y = x
            .iter()
            .map(|r| {
                let step = if r[0] > 0.5 { 40.0 } else { 10.0 };
                step + 20.0 * (r[1] * r[2] > 0.25) as u8 as f64 + rng.random_range(-1.0..1.0)
            })
            .collect();
        (x, y)
    }

    #[test]
    fn single_tree_forest_equals_tree() {
        let (x, y) = nonlinear(80, 1);
        let p = HyperParams {
            n_trees: 1,
            bootstrap: false,
            max_features_fraction: 1.0,
            ..Default::default()
        };
        let f = fit_forest(&names(4), &x, &y, &p, 9).unwrap();
        let t = fit_tree(&x, &y, &p, 9).unwrap();
        for row in &x {
            assert_eq!(f.raw_predict_row(row), t.predict_row(row));
        }
    }

    #[test]
    fn stub_trees_average() {
        let f = ForestModel {
            kind: ForestKind::Bagged,
            feature_names: names(1),
            params: HyperParams::default(),
            seed: 0,
            trees: vec![Tree::leaf(10.0, 1.0), Tree::leaf(20.0, 1.0)],
        };
        assert_eq!(f.raw_predict_row(&[0.0]), 15.0);
    }

    #[test]
    fn forest_prediction_is_tree_mean() {
        let (x, y) = nonlinear(120, 2);
        let f = fit_forest(&names(4), &x, &y, &HyperParams { n_trees: 7, ..Default::default() }, 3).unwrap();
        for row in &x {
            let mean = f.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / 7.0;
            assert!((f.raw_predict_row(row) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn forest_beats_linear_on_training_data() {
        let (x, y) = nonlinear(200, 3);
        let f = fit_forest(&names(4), &x, &y, &HyperParams { n_trees: 30, ..Default::default() }, 3).unwrap();
        let l = fit_linear(&names(4), &x, &y).unwrap();
        let mse = |p: &dyn Fn(&[f64]) -> f64| x.iter().zip(&y).map(|(r, t)| (p(r) - t).powi(2)).sum::<f64>();
        assert!(mse(&|r| f.raw_predict_row(r)) <= mse(&|r| l.predict_row(r)));
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = nonlinear(100, 4);
        let p = HyperParams { n_trees: 10, ..Default::default() };
        assert_eq!(fit_forest(&names(4), &x, &y, &p, 5).unwrap(), fit_forest(&names(4), &x, &y, &p, 5).unwrap());
        assert_ne!(fit_forest(&names(4), &x, &y, &p, 5).unwrap(), fit_forest(&names(4), &x, &y, &p, 6).unwrap());
    }

    #[test]
    fn one_full_boosting_round_interpolates() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64).collect();
        let p = HyperParams {
            n_trees: 1,
            learning_rate: 1.0,
            max_depth: None,
            min_samples_leaf: 1,
            max_features_fraction: 1.0,
            ..Default::default()
        };
        let g = fit_gbm(&names(1), &x, &y, &p, 0).unwrap();
        for (row, t) in x.iter().zip(&y) {
            assert!((g.raw_predict_row(row) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rounds_rejected() {
        let p = HyperParams { n_trees: 0, ..Default::default() };
        assert!(matches!(
            fit_gbm(&names(1), &[vec![1.0]], &[1.0], &p, 0),
            Err(RegressionError::InvalidParams(_))
        ));
    }

    #[test]
    fn boosting_mse_non_increasing() {
        let (x, y) = nonlinear(150, 5);
        let p = HyperParams {
            n_trees: 40,
            max_depth: Some(3),
            learning_rate: 0.3,
            ..Default::default()
        };
        let g = fit_gbm(&names(4), &x, &y, &p, 1).unwrap();
        let trace = g.staged_mse(&x, &y);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "{w:?}");
        }
        assert!(trace.last().unwrap() < &trace[0]);
    }
}
