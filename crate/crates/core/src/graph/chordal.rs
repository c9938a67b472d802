use std::collections::BTreeSet;

use super::{Graph, VarSet};
use crate::error::{Error, Result};

/// Chordal supergraph produced by [`triangulate`].
#[derive(Clone, Debug)]
pub struct Triangulation {
    pub chordal: Graph,
    /// Edges added to the input graph, `s < t`, in the order they were added.
    pub fill_edges: Vec<(usize, usize)>,
    pub elimination_order: Vec<usize>,
}

/// Greedy minimum-fill triangulation.
///
/// At every step the remaining vertex whose elimination adds the fewest fill
/// edges is eliminated; ties go to the lowest label. Trees and other chordal
/// inputs come back unchanged.
pub fn triangulate(graph: &Graph) -> Triangulation {
    let p = graph.p();
    let mut work: Vec<BTreeSet<usize>> = (0..p).map(|v| graph.neighbors(v).clone()).collect();
    let mut chordal = graph.clone();
    let mut alive = vec![true; p];
    let mut order = Vec::with_capacity(p);
    let mut fill_edges = Vec::new();

    for _ in 0..p {
        let mut best: Option<(usize, usize)> = None;
        for v in (0..p).filter(|&v| alive[v]) {
            let fill = missing_pairs(&work, v).len();
            if best.is_none_or(|(_, f)| fill < f) {
                best = Some((v, fill));
            }
        }
        let (v, _) = best.expect("at least one vertex remains");
        for (a, b) in missing_pairs(&work, v) {
            work[a].insert(b);
            work[b].insert(a);
            chordal
                .add_edge(a, b)
                .expect("fill edges join distinct in-range vertices");
            fill_edges.push((a.min(b), a.max(b)));
        }
        for &w in &work[v].clone() {
            work[w].remove(&v);
        }
        work[v].clear();
        alive[v] = false;
        order.push(v);
    }

    Triangulation {
        chordal,
        fill_edges,
        elimination_order: order,
    }
}

fn missing_pairs(work: &[BTreeSet<usize>], v: usize) -> Vec<(usize, usize)> {
    let nb: Vec<usize> = work[v].iter().copied().collect();
    let mut out = Vec::new();
    for (i, &a) in nb.iter().enumerate() {
        for &b in &nb[i + 1..] {
            if !work[a].contains(&b) {
                out.push((a, b));
            }
        }
    }
    out
}

/// A perfect elimination ordering, or `None` if the graph is not chordal.
///
/// Runs maximum cardinality search and verifies the reversed visit order.
pub fn perfect_elimination_order(graph: &Graph) -> Option<Vec<usize>> {
    let p = graph.p();
    let mut weight = vec![0usize; p];
    let mut visited = vec![false; p];
    let mut visit = Vec::with_capacity(p);
    for _ in 0..p {
        let v = (0..p)
            .filter(|&v| !visited[v])
            .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(b.cmp(&a)))
            .unwrap();
        visited[v] = true;
        visit.push(v);
        for &w in graph.neighbors(v) {
            if !visited[w] {
                weight[w] += 1;
            }
        }
    }
    visit.reverse();
    if is_perfect_elimination_order(graph, &visit) {
        Some(visit)
    } else {
        None
    }
}

fn is_perfect_elimination_order(graph: &Graph, order: &[usize]) -> bool {
    let mut position = vec![0; graph.p()];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    order.iter().all(|&v| {
        let later: Vec<usize> = graph
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&w| position[w] > position[v])
            .collect();
        match later.iter().min_by_key(|&&w| position[w]) {
            None => true,
            Some(&u) => later.iter().all(|&w| w == u || graph.has_edge(u, w)),
        }
    })
}

pub fn is_chordal(graph: &Graph) -> bool {
    perfect_elimination_order(graph).is_some()
}

/// Junction tree over the maximal cliques of a chordal graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JunctionTree {
    p: usize,
    pub cliques: Vec<VarSet>,
    /// Tree edges as pairs of clique indices.
    pub tree_edges: Vec<(usize, usize)>,
    /// `separators[k]` is the intersection of the endpoints of `tree_edges[k]`.
    pub separators: Vec<VarSet>,
}

/// Builds a junction tree as a maximum-weight spanning tree of the clique
/// graph, weights `|C_i ∩ C_j|`. Disconnected inputs are joined through
/// empty separators.
pub fn build_junction_tree(chordal: &Graph) -> Result<JunctionTree> {
    let order = perfect_elimination_order(chordal).ok_or(Error::NotChordal)?;
    let mut position = vec![0; chordal.p()];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    let mut candidates: Vec<VarSet> = order
        .iter()
        .map(|&v| {
            let mut c: Vec<usize> = chordal
                .neighbors(v)
                .iter()
                .copied()
                .filter(|&w| position[w] > position[v])
                .collect();
            c.push(v);
            VarSet::new(c)
        })
        .collect();
    candidates.sort();
    candidates.dedup();
    let cliques: Vec<VarSet> = candidates
        .iter()
        .filter(|c| {
            !candidates
                .iter()
                .any(|d| d.len() > c.len() && c.is_subset(d))
        })
        .cloned()
        .collect();

    let k = cliques.len();
    let mut pairs = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            pairs.push((cliques[i].intersection(&cliques[j]).len(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut y = x;
        while parent[y] != r {
            let next = parent[y];
            parent[y] = r;
            y = next;
        }
        r
    }
    let mut tree_edges = Vec::with_capacity(k.saturating_sub(1));
    let mut separators = Vec::with_capacity(k.saturating_sub(1));
    for (_, i, j) in pairs {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            tree_edges.push((i, j));
            separators.push(cliques[i].intersection(&cliques[j]));
        }
    }

    let jt = JunctionTree {
        p: chordal.p(),
        cliques,
        tree_edges,
        separators,
    };
    if !jt.running_intersection_holds() {
        return Err(Error::InvalidGraph(
            "junction tree violates running intersection".into(),
        ));
    }
    Ok(jt)
}

impl JunctionTree {
    pub fn p(&self) -> usize {
        self.p
    }

    /// Graph whose edges are all pairs inside some clique.
    pub fn chordal_graph(&self) -> Graph {
        let mut g = Graph::new(self.p).expect("p >= 1");
        for c in &self.cliques {
            let v = c.as_slice();
            for (i, &s) in v.iter().enumerate() {
                for &t in &v[i + 1..] {
                    g.add_edge(s, t).expect("clique vertices are distinct");
                }
            }
        }
        g
    }

    /// Distinct nonempty separator sets.
    pub fn separator_sets(&self) -> Vec<VarSet> {
        let set: BTreeSet<VarSet> = self
            .separators
            .iter()
            .filter(|s| !s.is_empty())
            .cloned()
            .collect();
        set.into_iter().collect()
    }

    pub fn has_singleton_separators(&self) -> bool {
        self.separators.iter().all(|s| s.len() <= 1)
    }

    /// Every clique of the triangulation: all nonempty subsets of the
    /// maximal cliques, graded lexicographic.
    pub fn all_cliques(&self) -> Vec<VarSet> {
        let set: BTreeSet<VarSet> = self
            .cliques
            .iter()
            .flat_map(|c| c.nonempty_subsets())
            .collect();
        set.into_iter().collect()
    }

    /// Whether `a` and `b` sit inside a common maximal clique.
    pub fn share_maximal_clique(&self, a: &VarSet, b: &VarSet) -> bool {
        self.cliques
            .iter()
            .any(|c| a.is_subset(c) && b.is_subset(c))
    }

    /// Tree-edge indices on the path between cliques `i` and `j`.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let k = self.cliques.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k];
        for (e, &(a, b)) in self.tree_edges.iter().enumerate() {
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; k];
        let mut seen = vec![false; k];
        let mut stack = vec![i];
        seen[i] = true;
        while let Some(u) = stack.pop() {
            for &(w, e) in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    prev[w] = Some((u, e));
                    stack.push(w);
                }
            }
        }
        let mut out = Vec::new();
        let mut cur = j;
        while let Some((u, e)) = prev[cur] {
            out.push(e);
            cur = u;
        }
        out
    }

    /// Spanning-tree shape, separator consistency and running intersection.
    pub fn running_intersection_holds(&self) -> bool {
        let k = self.cliques.len();
        if self.tree_edges.len() + 1 != k.max(1) || self.separators.len() != self.tree_edges.len() {
            return false;
        }
        for (e, &(a, b)) in self.tree_edges.iter().enumerate() {
            if self.separators[e] != self.cliques[a].intersection(&self.cliques[b]) {
                return false;
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                let path = self.path(i, j);
                if path.is_empty() {
                    return false;
                }
                let common = self.cliques[i].intersection(&self.cliques[j]);
                if !path.iter().all(|&e| common.is_subset(&self.separators[e])) {
                    return false;
                }
            }
        }
        true
    }
}
