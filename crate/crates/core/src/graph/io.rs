//! Plain-text edge lists.
//!
//! ```text
//! # comment
//! n 4 undirected
//! 0 1
//! 1 0
//! 2 3 0.5
//! ```
//!
//! The header `n <N> [directed|undirected]` is optional; without it the node
//! count is one past the largest index and the graph is directed. Indices are
//! 0-based, a missing weight means 1.

use std::fmt::Write as _;

use super::{Edge, Graph, GraphError};

pub fn load_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut declared: Option<usize> = None;
    let mut directed = true;
    let mut edges = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| GraphError::Parse {
            line: line_no,
            message,
        };

        if fields[0] == "n" {
            if declared.is_some() || !edges.is_empty() {
                return Err(err("header must come first and appear once".into()));
            }
            let count = fields
                .get(1)
                .ok_or_else(|| err("header needs a node count".into()))?
                .parse::<usize>()
                .map_err(|e| err(format!("bad node count: {e}")))?;
            match fields.get(2).copied() {
                None | Some("directed") => directed = true,
                Some("undirected") => directed = false,
                Some(other) => return Err(err(format!("unknown header flag `{other}`"))),
            }
            if fields.len() > 3 {
                return Err(err("trailing tokens after header".into()));
            }
            declared = Some(count);
            continue;
        }

        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!(
                "expected `src dst [weight]`, found {} fields",
                fields.len()
            )));
        }
        let source = fields[0]
            .parse::<usize>()
            .map_err(|e| err(format!("bad source index `{}`: {e}", fields[0])))?;
        let target = fields[1]
            .parse::<usize>()
            .map_err(|e| err(format!("bad target index `{}`: {e}", fields[1])))?;
        let weight = match fields.get(2) {
            Some(w) => w
                .parse::<f64>()
                .map_err(|e| err(format!("bad weight `{w}`: {e}")))?,
            None => 1.0,
        };
        if weight < 0.0 {
            return Err(err(format!("negative weight {weight}")));
        }
        if let Some(n) = declared {
            if source >= n || target >= n {
                return Err(err(format!("index out of range for n = {n}")));
            }
        }
        edges.push(Edge::new(source, target, weight));
    }

    let n = match declared {
        Some(n) => n,
        None => edges
            .iter()
            .map(|e| e.source.max(e.target) + 1)
            .max()
            .ok_or(GraphError::Empty)?,
    };
    Graph::new(n, edges, directed)
}

/// Inverse of [`load_edge_list`]: header line, then one edge per line in
/// stored order, unit weights omitted.
pub fn save_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    let flag = if g.is_directed() {
        "directed"
    } else {
        "undirected"
    };
    let _ = writeln!(out, "n {} {}", g.node_count(), flag);
    for e in g.edges() {
        if e.weight == 1.0 {
            let _ = writeln!(out, "{} {}", e.source, e.target);
        } else {
            let _ = writeln!(out, "{} {} {}", e.source, e.target, e.weight);
        }
    }
    out
}
