use crate::hypercore::Hypergraph;

use super::NicheError;

/// Lifts a graph to a hypergraph with one hyperedge per vertex `v`, holding
/// every `w` with `d(v, w) ≤ k` (including `v`). Hyperedge `j` is anchored at
/// vertex `j`; identical neighbourhoods stay separate hyperedges.
pub fn khop_lift(g0: &Hypergraph, k: usize) -> Result<Hypergraph, NicheError> {
    if k == 0 {
        return Err(NicheError::InvalidConfig("hop_k must be at least 1".into()));
    }
    let n = g0.n();
    let mut stamp = vec![usize::MAX; n];
    let mut edge_stamp = vec![usize::MAX; g0.m()];
    let mut edges = Vec::with_capacity(n);
    let mut frontier = Vec::new();
    let mut next = Vec::new();
    for v in 0..n {
        let mut members = vec![v];
        stamp[v] = v;
        frontier.clear();
        frontier.push(v);
        for _ in 0..k {
            next.clear();
            for &u in &frontier {
                for &e in g0.vertex_edges(u) {
                    if edge_stamp[e] == v {
                        continue;
                    }
                    edge_stamp[e] = v;
                    for &w in g0.edge_members(e) {
                        if stamp[w] != v {
                            stamp[w] = v;
                            members.push(w);
                            next.push(w);
                        }
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            std::mem::swap(&mut frontier, &mut next);
        }
        members.sort_unstable();
        edges.push(members);
    }
    Ok(Hypergraph::new(n, edges)?.with_anchors((0..n).collect())?)
}
