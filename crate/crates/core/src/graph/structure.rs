use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use super::{CorrelationEdge, GraphError, Scope};
use crate::data::FacilityId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeAttrs {
    pub rho: f64,
    pub distance_km: f64,
}

/// Undirected facility graph for one scope. Edge keys are ordered pairs
/// `(low id, high id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FacilityGraph {
    pub scope: Scope,
    pub nodes: BTreeSet<FacilityId>,
    pub edges: BTreeMap<(FacilityId, FacilityId), EdgeAttrs>,
}

impl FacilityGraph {
    pub fn neighbors<'a>(&'a self, id: &'a FacilityId) -> impl Iterator<Item = (&'a FacilityId, EdgeAttrs)> + 'a {
        self.edges.iter().filter_map(move |((a, b), attrs)| {
            if a == id {
                Some((b, *attrs))
            } else if b == id {
                Some((a, *attrs))
            } else {
                None
            }
        })
    }

    pub fn edge_list(&self) -> Vec<CorrelationEdge> {
        self.edges
            .iter()
            .map(|((a, b), e)| CorrelationEdge {
                a: a.clone(),
                b: b.clone(),
                scope: self.scope.clone(),
                rho: e.rho,
                distance_km: e.distance_km,
            })
            .collect()
    }
}

/// Builds the graph of one scope from its edges plus any extra `facilities`
/// that should appear as nodes even without edges.
pub fn build_graph<'a>(
    edges: &[CorrelationEdge],
    scope: &Scope,
    facilities: impl IntoIterator<Item = &'a FacilityId>,
) -> Result<FacilityGraph, GraphError> {
    let mut g = FacilityGraph {
        scope: scope.clone(),
        nodes: facilities.into_iter().cloned().collect(),
        edges: BTreeMap::new(),
    };
    for e in edges {
        if &e.scope != scope {
            return Err(GraphError::ScopeMismatch {
                expected: scope.clone(),
                found: e.scope.clone(),
            });
        }
        if e.a == e.b {
            return Err(GraphError::SelfLoop(e.a.clone()));
        }
        let key = if e.a < e.b {
            (e.a.clone(), e.b.clone())
        } else {
            (e.b.clone(), e.a.clone())
        };
        let attrs = EdgeAttrs {
            rho: e.rho,
            distance_km: e.distance_km,
        };
        if let Some(prev) = g.edges.get(&key) {
            if prev.rho != attrs.rho {
                return Err(GraphError::ConflictingEdge {
                    a: key.0,
                    b: key.1,
                    first: prev.rho,
                    second: attrs.rho,
                });
            }
            continue;
        }
        g.nodes.insert(key.0.clone());
        g.nodes.insert(key.1.clone());
        g.edges.insert(key, attrs);
    }
    Ok(g)
}

fn components_of<'a>(
    nodes: impl IntoIterator<Item = &'a FacilityId>,
    edges: impl IntoIterator<Item = (&'a FacilityId, &'a FacilityId)>,
) -> Vec<BTreeSet<FacilityId>> {
    let nodes: BTreeSet<&FacilityId> = nodes.into_iter().collect();
    let index: HashMap<&FacilityId, usize> = nodes.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut uf = UnionFind::<usize>::new(nodes.len());
    for (a, b) in edges {
        uf.union(index[a], index[b]);
    }
    let mut groups: BTreeMap<usize, BTreeSet<FacilityId>> = BTreeMap::new();
    for (id, &i) in &index {
        groups.entry(uf.find(i)).or_default().insert((*id).clone());
    }
    let mut out: Vec<BTreeSet<FacilityId>> = groups.into_values().collect();
    out.sort_by(|a, b| a.first().cmp(&b.first()));
    out
}

/// Connected components, ignoring edge sign. Sorted by smallest member.
pub fn connected_components(g: &FacilityGraph) -> Vec<BTreeSet<FacilityId>> {
    components_of(&g.nodes, g.edges.keys().map(|(a, b)| (a, b)))
}

/// Components of the union of several scope graphs: two facilities share a
/// pool when any scope links them.
pub fn pooled_components(graphs: &[FacilityGraph]) -> Vec<BTreeSet<FacilityId>> {
    components_of(
        graphs.iter().flat_map(|g| g.nodes.iter()),
        graphs.iter().flat_map(|g| g.edges.keys().map(|(a, b)| (a, b))),
    )
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Returns 1.0 when both partitions are identical, including the degenerate
/// cases where the index is otherwise undefined.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n).max(1.0);
    let max = (sum_a + sum_b) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        return if index == max { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Graphviz rendering of several scope graphs. Edge attributes carry
/// `rho` and `distance_km`; negative edges are drawn dashed.
pub fn write_dot(graphs: &[FacilityGraph]) -> String {
    let mut out = String::new();
    for g in graphs {
        let _ = writeln!(out, "graph \"{}\" {{", g.scope);
        for n in &g.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for ((a, b), e) in &g.edges {
            let style = if e.rho < 0.0 { "dashed" } else { "solid" };
            let _ = writeln!(
                out,
                "  \"{a}\" -- \"{b}\" [rho={}, distance_km={}, style={style}];",
                e.rho, e.distance_km
            );
        }
        out.push_str("}\n");
    }
    out
}
