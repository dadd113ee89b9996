//! Depth-1 Weisfeiler-Lehman relabelling over sampled neighbourhoods.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::graph::{TransactionGraph, LABEL_SEPARATOR, NEIGHBOUR_SEPARATOR};

/// Canonical text of a rooted-subgraph label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WlFeature(pub String);

impl fmt::Display for WlFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Depth-1 label of a node: `own|n1,n2,...` with neighbour labels sorted
/// (repeats kept).
pub fn depth1_label<'a>(own: &str, neighbours: impl IntoIterator<Item = &'a str>) -> WlFeature {
    let mut nbrs: Vec<&str> = neighbours.into_iter().collect();
    nbrs.sort_unstable();
    let mut s = String::with_capacity(own.len() + 1 + nbrs.iter().map(|n| n.len() + 1).sum::<usize>());
    s.push_str(own);
    s.push(LABEL_SEPARATOR);
    for (i, n) in nbrs.iter().enumerate() {
        if i > 0 {
            s.push(NEIGHBOUR_SEPARATOR);
        }
        s.push_str(n);
    }
    WlFeature(s)
}

/// Feature multiset of one graph: every node's pool label followed by its
/// depth-1 label, in node order.
pub fn wl_relabel(g: &TransactionGraph, neighbourhoods: &[Vec<usize>]) -> Vec<WlFeature> {
    let mut out = Vec::with_capacity(2 * g.len());
    for (s, (_, label)) in g.nodes.iter().enumerate() {
        out.push(WlFeature(label.clone()));
        let nbrs = neighbourhoods
            .get(s)
            .map(|n| n.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(|&r| g.nodes[r].1.as_str());
        out.push(depth1_label(label, nbrs));
    }
    out
}
