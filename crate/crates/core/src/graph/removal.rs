//! Spectral node and link removal.
//!
//! Removing a node or link from a nonnegative matrix can only lower its Perron
//! root, so the exact searches only look at sets of exactly `budget` elements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::spectral::{lambda_max, SpectralError};
use super::Graph;

/// Largest graph the exact node search will enumerate.
pub const MAX_EXACT_NODES: usize = 15;

/// Upper bound on subsets visited by the exhaustive link search.
const MAX_LINK_SUBSETS: u128 = 2_000_000;

/// Eigenvalues within this (relative) distance count as tied.
const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum RemovalError {
    #[error("exact node removal enumerates subsets and is limited to n <= {max} (got n = {n}); use remove_nodes_greedy")]
    TooLarge { n: usize, max: usize },
    #[error("budget {budget} exceeds the {available} available {what}")]
    BudgetTooLarge {
        budget: usize,
        available: usize,
        what: &'static str,
    },
    #[error("exhaustive link search would visit {subsets} subsets; use remove_links_greedy")]
    TooManySubsets { subsets: u128 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeScore {
    /// Number of distinct neighbours in either direction.
    Degree,
    /// `left_i * right_i` of the current Perron vectors.
    PerronProduct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRemoval {
    /// Ascending for the exact search, in removal order for greedy.
    pub removed: Vec<usize>,
    pub lambda_before: f64,
    pub lambda_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRemoval {
    /// Directed edges `(source, target)`.
    pub removed: Vec<(usize, usize)>,
    pub lambda_before: f64,
    pub lambda_after: f64,
}

fn radius(g: &Graph) -> Result<f64, SpectralError> {
    Ok(lambda_max(&g.adjacency())?.lambda_max)
}

fn strictly_better(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - TIE_TOL * incumbent.abs().max(1.0)
}

fn strictly_larger(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE_TOL * incumbent.abs().max(1.0)
}

/// Visits every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(
    n: usize,
    k: usize,
    mut f: impl FnMut(&[usize]) -> Result<(), SpectralError>,
) -> Result<(), SpectralError> {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx)?;
        // rightmost position that can still move
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return Ok(());
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Globally optimal removal of `budget` nodes by enumeration.
///
/// Ties go to the lexicographically smallest node set.
pub fn remove_nodes_exact(g: &Graph, budget: usize) -> Result<NodeRemoval, RemovalError> {
    let n = g.node_count();
    if n > MAX_EXACT_NODES {
        return Err(RemovalError::TooLarge {
            n,
            max: MAX_EXACT_NODES,
        });
    }
    if budget > n {
        return Err(RemovalError::BudgetTooLarge {
            budget,
            available: n,
            what: "nodes",
        });
    }
    let before = radius(g)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for_each_combination(n, budget, |set| {
        let lam = radius(&g.without_nodes(set))?;
        if best.as_ref().is_none_or(|(_, b)| strictly_better(lam, *b)) {
            best = Some((set.to_vec(), lam));
        }
        Ok(())
    })?;
    let (removed, after) = best.expect("at least one subset is visited");
    Ok(NodeRemoval {
        removed,
        lambda_before: before,
        lambda_after: after,
    })
}

/// Removes `budget` nodes one at a time, each time taking the highest score
/// on the current graph (smallest index on ties).
pub fn remove_nodes_greedy(
    g: &Graph,
    budget: usize,
    score: NodeScore,
) -> Result<NodeRemoval, RemovalError> {
    let n = g.node_count();
    if budget > n {
        return Err(RemovalError::BudgetTooLarge {
            budget,
            available: n,
            what: "nodes",
        });
    }
    let before = radius(g)?;
    let mut removed: Vec<usize> = Vec::with_capacity(budget);
    let mut current = g.clone();
    let mut lam = before;
    for _ in 0..budget {
        let scores: Vec<f64> = match score {
            NodeScore::Degree => (0..n).map(|i| current.degree(i) as f64).collect(),
            NodeScore::PerronProduct => {
                let s = lambda_max(&current.adjacency())?;
                s.left_vector
                    .iter()
                    .zip(&s.right_vector)
                    .map(|(l, r)| l * r)
                    .collect()
            }
        };
        let mut pick: Option<(usize, f64)> = None;
        for i in (0..n).filter(|i| !removed.contains(i)) {
            if pick.is_none_or(|(_, best)| strictly_larger(scores[i], best)) {
                pick = Some((i, scores[i]));
            }
        }
        let (node, _) = pick.expect("budget <= n leaves a candidate");
        removed.push(node);
        current = g.without_nodes(&removed);
        lam = radius(&current)?;
    }
    Ok(NodeRemoval {
        removed,
        lambda_before: before,
        lambda_after: lam,
    })
}

/// Removes `budget` directed links one at a time, scoring `(i, j)` by
/// `left_i * right_j`, the first-order drop of the Perron root.
/// Ties go to the lexicographically smallest edge.
pub fn remove_links_greedy(g: &Graph, budget: usize) -> Result<LinkRemoval, RemovalError> {
    if budget > g.edge_count() {
        return Err(RemovalError::BudgetTooLarge {
            budget,
            available: g.edge_count(),
            what: "links",
        });
    }
    let before = radius(g)?;
    let mut removed = Vec::with_capacity(budget);
    let mut current = g.clone();
    let mut lam = before;
    for _ in 0..budget {
        let s = lambda_max(&current.adjacency())?;
        let mut candidates: Vec<(usize, usize, f64)> = current
            .edges()
            .iter()
            .map(|e| {
                (
                    e.source,
                    e.target,
                    e.weight * s.left_vector[e.source] * s.right_vector[e.target],
                )
            })
            .collect();
        candidates.sort_by_key(|a| (a.0, a.1));
        let mut pick: Option<(usize, usize, f64)> = None;
        for c in candidates {
            if pick.is_none_or(|p| strictly_larger(c.2, p.2)) {
                pick = Some(c);
            }
        }
        let (i, j, _) = pick.expect("budget <= edge count leaves a candidate");
        removed.push((i, j));
        current = g.without_edges(&removed);
        lam = radius(&current)?;
    }
    Ok(LinkRemoval {
        removed,
        lambda_before: before,
        lambda_after: lam,
    })
}

/// Best set of exactly `budget` links by enumeration (small graphs only).
/// Edges are ordered lexicographically; ties go to the smallest edge set.
pub fn remove_links_exhaustive(g: &Graph, budget: usize) -> Result<LinkRemoval, RemovalError> {
    let m = g.edge_count();
    if budget > m {
        return Err(RemovalError::BudgetTooLarge {
            budget,
            available: m,
            what: "links",
        });
    }
    let subsets = binomial(m, budget);
    if subsets > MAX_LINK_SUBSETS {
        return Err(RemovalError::TooManySubsets { subsets });
    }
    let mut edges: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.source, e.target)).collect();
    edges.sort_unstable();
    let before = radius(g)?;
    let mut best: Option<(Vec<(usize, usize)>, f64)> = None;
    for_each_combination(m, budget, |set| {
        let chosen: Vec<(usize, usize)> = set.iter().map(|&k| edges[k]).collect();
        let lam = radius(&g.without_edges(&chosen))?;
        if best.as_ref().is_none_or(|(_, b)| strictly_better(lam, *b)) {
            best = Some((chosen, lam));
        }
        Ok(())
    })?;
    let (removed, after) = best.expect("at least one subset is visited");
    Ok(LinkRemoval {
        removed,
        lambda_before: before,
        lambda_after: after,
    })
}
