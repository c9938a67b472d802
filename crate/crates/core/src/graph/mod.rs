//! Undirected graphs, triangulation, junction trees and the benchmark graph
//! families used by the experiments.

mod chordal;
mod families;
mod varset;

pub use chordal::{
    build_junction_tree, is_chordal, perfect_elimination_order, triangulate, JunctionTree,
    Triangulation,
};
pub use families::{dino, generate_graph, GraphFamily, GraphFamilySpec};
pub use varset::{count_subsets_up_to, subsets_up_to, VarSet};

use std::collections::{BTreeSet, VecDeque};
use std::io::{BufRead, Write};

use crate::error::{parse_err, Error, Result};

/// Simple undirected graph on vertices `0..p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<BTreeSet<usize>>,
}

impl Graph {
    /// Empty graph on `p >= 1` vertices.
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidGraph(
                "graph needs at least one vertex".into(),
            ));
        }
        Ok(Graph {
            adj: vec![BTreeSet::new(); p],
        })
    }

    pub fn from_edges(p: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Graph::new(p)?;
        for &(s, t) in edges {
            g.add_edge(s, t)?;
        }
        Ok(g)
    }

    /// Axis-aligned `rows x cols` lattice with 4-neighbor connectivity.
    /// Vertex `(r, c)` has label `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let mut g = Graph::new(rows * cols)?;
        for r in 0..rows {
            for c in 0..cols {
                let v = r * cols + c;
                if c + 1 < cols {
                    g.add_edge(v, v + 1)?;
                }
                if r + 1 < rows {
                    g.add_edge(v, v + cols)?;
                }
            }
        }
        Ok(g)
    }

    pub fn complete(p: usize) -> Result<Self> {
        let mut g = Graph::new(p)?;
        for s in 0..p {
            for t in s + 1..p {
                g.add_edge(s, t)?;
            }
        }
        Ok(g)
    }

    pub fn p(&self) -> usize {
        self.adj.len()
    }

    pub fn add_edge(&mut self, s: usize, t: usize) -> Result<()> {
        let p = self.p();
        if s == t {
            return Err(Error::InvalidGraph(format!("self-loop at vertex {s}")));
        }
        if s >= p || t >= p {
            return Err(Error::InvalidGraph(format!(
                "edge ({s}, {t}) out of range for p = {p}"
            )));
        }
        self.adj[s].insert(t);
        self.adj[t].insert(s);
        Ok(())
    }

    pub fn has_edge(&self, s: usize, t: usize) -> bool {
        s < self.p() && self.adj[s].contains(&t)
    }

    pub fn neighbors(&self, s: usize) -> &BTreeSet<usize> {
        &self.adj[s]
    }

    pub fn degree(&self, s: usize) -> usize {
        self.adj[s].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(|a| a.len()).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    /// Edges as `(s, t)` with `s < t`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (s, nb) in self.adj.iter().enumerate() {
            out.extend(nb.range(s + 1..).map(|&t| (s, t)));
        }
        out
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges().into_iter().collect()
    }

    pub fn is_clique(&self, set: &VarSet) -> bool {
        let v = set.as_slice();
        v.iter()
            .enumerate()
            .all(|(i, &s)| v[i + 1..].iter().all(|&t| self.has_edge(s, t)))
    }

    /// Connected-component label per vertex.
    pub fn components(&self) -> Vec<usize> {
        let mut comp = vec![usize::MAX; self.p()];
        let mut next = 0;
        for start in 0..self.p() {
            if comp[start] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            comp[start] = next;
            while let Some(u) = queue.pop_front() {
                for &w in &self.adj[u] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn is_forest(&self) -> bool {
        let comps = self.components();
        let k = comps.iter().max().map_or(0, |m| m + 1);
        self.edge_count() + k == self.p()
    }

    /// Shortest-path lengths from `s`; `None` for unreachable vertices.
    pub fn distances_from(&self, s: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.p()];
        dist[s] = Some(0);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &w in &self.adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Whether `s` and `t` lie in different components after deleting the
    /// vertices in `removed`.
    pub fn separated_by(&self, s: usize, t: usize, removed: &[usize]) -> bool {
        let mut seen = vec![false; self.p()];
        for &r in removed {
            seen[r] = true;
        }
        if seen[s] || seen[t] {
            return false;
        }
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                return false;
            }
            for &w in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        true
    }

    /// Non-adjacent pairs `(s, t)`, `s < t`, that are separated by the
    /// empty set or by a single vertex. For such pairs some junction tree has
    /// a singleton (or empty) separator between a clique holding `s` and a
    /// clique holding `t`.
    pub fn singleton_separable_pairs(&self) -> Vec<(usize, usize)> {
        let p = self.p();
        let mut out = Vec::new();
        for s in 0..p {
            for t in s + 1..p {
                if self.has_edge(s, t) {
                    continue;
                }
                if self.separated_by(s, t, &[])
                    || (0..p).any(|u| u != s && u != t && self.separated_by(s, t, &[u]))
                {
                    out.push((s, t));
                }
            }
        }
        out
    }

    /// All cliques (maximal or not) with at most `max_size` vertices, in
    /// graded lexicographic order.
    pub fn cliques_up_to(&self, max_size: usize) -> Vec<VarSet> {
        let mut out = Vec::new();
        let mut current = Vec::new();
        for v in 0..self.p() {
            current.push(v);
            self.extend_cliques(&mut current, max_size, &mut out);
            current.pop();
        }
        out.sort();
        out
    }

    fn extend_cliques(&self, current: &mut Vec<usize>, max_size: usize, out: &mut Vec<VarSet>) {
        out.push(VarSet::new(current.clone()));
        if current.len() == max_size {
            return;
        }
        let last = *current.last().unwrap();
        let candidates: Vec<usize> = self.adj[last].range(last + 1..).copied().collect();
        for w in candidates {
            if current.iter().all(|&c| self.has_edge(c, w)) {
                current.push(w);
                self.extend_cliques(current, max_size, out);
                current.pop();
            }
        }
    }

    /// Reads the text format: `p <count>` followed by one `s t` pair per
    /// line, 0-indexed. Blank lines and `#` comments are skipped.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut graph: Option<Graph> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let fields: Vec<&str> = body.split_whitespace().collect();
            match graph.as_mut() {
                None => {
                    if fields.len() != 2 || fields[0] != "p" {
                        return Err(parse_err(lineno, "expected header `p <count>`"));
                    }
                    let p: usize = fields[1]
                        .parse()
                        .map_err(|_| parse_err(lineno, "vertex count is not an integer"))?;
                    graph = Some(Graph::new(p).map_err(|e| parse_err(lineno, e.to_string()))?);
                }
                Some(g) => {
                    if fields.len() != 2 {
                        return Err(parse_err(lineno, "expected `s t`"));
                    }
                    let s: usize = fields[0]
                        .parse()
                        .map_err(|_| parse_err(lineno, "vertex is not an integer"))?;
                    let t: usize = fields[1]
                        .parse()
                        .map_err(|_| parse_err(lineno, "vertex is not an integer"))?;
                    g.add_edge(s, t)
                        .map_err(|e| parse_err(lineno, e.to_string()))?;
                }
            }
        }
        graph.ok_or_else(|| parse_err(0, "missing `p <count>` header"))
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        Self::read_text(text.as_bytes())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "p {}", self.p())?;
        for (s, t) in self.edges() {
            writeln!(w, "{s} {t}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("graph text is ASCII")
    }
}
