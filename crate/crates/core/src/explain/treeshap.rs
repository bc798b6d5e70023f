//! Path-dependent Tree SHAP.
//!
//! Each tree is walked once per row while maintaining the permutation
//! weights of the unique features on the current root-to-node path. A
//! feature outside the coalition follows both children in proportion to
//! their training cover, so the explained quantity is the raw tree output
//! and `base + sum(phi)` reproduces it exactly.

use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::exec;
use crate::regression::{ForestKind, ForestModel, Tree};

/// Per-row attributions. `base_value + values[i].sum()` is the raw model
/// output for row `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub feature_names: Vec<String>,
    pub base_value: f64,
    pub values: Vec<Vec<f64>>,
}

impl ShapMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    /// `base_value + sum(phi)` for row `i`.
    pub fn reconstructed(&self, i: usize) -> f64 {
        self.base_value + self.values[i].iter().sum::<f64>()
    }

    /// Mean |phi| per feature over all rows.
    pub fn mean_abs(&self) -> Vec<f64> {
        let n = self.values.len().max(1) as f64;
        let mut out = vec![0.0; self.feature_names.len()];
        for row in &self.values {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v.abs();
            }
        }
        out.iter().map(|s| s / n).collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElement {
        feature,
        zero,
        one,
        weight: if l == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..l).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / (l + 1) as f64;
        path[i].weight = zero * path[i].weight * (l - i) as f64 / (l + 1) as f64;
    }
}

fn unwind(path: &mut Vec<PathElement>, i: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut next = path[l].weight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = path[j].weight;
            path[j].weight = next * (l + 1) as f64 / ((j + 1) as f64 * one);
            next = t - path[j].weight * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            path[j].weight = path[j].weight * (l + 1) as f64 / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

/// Total permutation weight of the path with element `i` removed.
fn unwound_sum(path: &[PathElement], i: usize) -> f64 {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let mut next = path[l].weight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let t = next * (l + 1) as f64 / ((j + 1) as f64 * one);
            total += t;
            next = path[j].weight - t * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            total += path[j].weight / zero * (l + 1) as f64 / (l - j) as f64;
        }
    }
    total
}

struct Walk<'a> {
    tree: &'a Tree,
    covers: Vec<f64>,
    x: &'a [f64],
    phi: &'a mut [f64],
}

impl Walk<'_> {
    fn recurse(&mut self, node: usize, mut path: Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
        extend(&mut path, zero, one, feature);
        let n = &self.tree.nodes[node];
        let Some(split) = n.split else {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                let f = el.feature.expect("only the root element lacks a feature");
                self.phi[f] += w * (el.one - el.zero) * n.value;
            }
            return;
        };
        let f = split.feature_index;
        let (hot, cold) = if self.x[f] <= split.threshold {
            (split.left, split.right)
        } else {
            (split.right, split.left)
        };
        let (mut iz, mut io) = (1.0, 1.0);
        if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(f)) {
            iz = path[k].zero;
            io = path[k].one;
            unwind(&mut path, k);
        }
        let here = self.covers[node];
        let (rh, rc) = (self.covers[hot], self.covers[cold]);
        self.recurse(hot, path.clone(), iz * rh / here, io, Some(f));
        self.recurse(cold, path, iz * rc / here, 0.0, Some(f));
    }
}

fn covers(tree: &Tree, index: usize) -> Result<Vec<f64>, ExplainError> {
    tree.nodes
        .iter()
        .enumerate()
        .map(|(node, n)| match n.cover {
            Some(c) if c > 0.0 => Ok(c),
            _ => Err(ExplainError::MissingCover { tree: index, node }),
        })
        .collect()
}

fn expected_value(tree: &Tree, covers: &[f64]) -> f64 {
    let root = covers[0];
    tree.nodes
        .iter()
        .zip(covers)
        .filter(|(n, _)| n.split.is_none())
        .map(|(n, c)| n.value * c / root)
        .sum()
}

fn explain_tree(tree: &Tree, covers: &[f64], x: &[f64], d: usize) -> Vec<f64> {
    let mut phi = vec![0.0; d];
    let mut walk = Walk {
        tree,
        covers: covers.to_vec(),
        x,
        phi: &mut phi,
    };
    walk.recurse(0, Vec::with_capacity(16), 1.0, 1.0, None);
    phi
}

/// Attributions of one tree for one row, with the tree's cover-weighted
/// expected output.
pub fn tree_shap_single(tree: &Tree, x: &[f64]) -> Result<(Vec<f64>, f64), ExplainError> {
    let c = covers(tree, 0)?;
    Ok((explain_tree(tree, &c, x, x.len()), expected_value(tree, &c)))
}

/// Tree SHAP for every row of `x`. Bagged forests average the per-tree
/// values; boosted models scale their sum by the learning rate and add the
/// initial constant to the base value.
pub fn tree_shap(model: &ForestModel, x: &[Vec<f64>]) -> Result<ShapMatrix, ExplainError> {
    let d = model.feature_names.len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(ExplainError::SchemaMismatch {
            expected: d,
            found: r.len(),
        });
    }
    let all_covers = model
        .trees
        .iter()
        .enumerate()
        .map(|(i, t)| covers(t, i))
        .collect::<Result<Vec<_>, _>>()?;
    let (scale, offset) = match model.kind {
        ForestKind::Bagged => (1.0 / model.trees.len() as f64, 0.0),
        ForestKind::Boosted { base, learning_rate } => (learning_rate, base),
    };
    let base_value = offset
        + scale
            * model
                .trees
                .iter()
                .zip(&all_covers)
                .map(|(t, c)| expected_value(t, c))
                .sum::<f64>();
    let values = exec::map_slice(x, |row| {
        let mut phi = vec![0.0; d];
        for (t, c) in model.trees.iter().zip(&all_covers) {
            for (p, v) in phi.iter_mut().zip(explain_tree(t, c, row, d)) {
                *p += v;
            }
        }
        phi.iter_mut().for_each(|p| *p *= scale);
        phi
    });
    Ok(ShapMatrix {
        feature_names: model.feature_names.clone(),
        base_value,
        values,
    })
}
