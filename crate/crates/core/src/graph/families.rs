use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

const DINO_TEXT: &str = include_str!("../../data/dino.graph");

/// The 13-vertex, 15-edge "dino" fixture: a graph that is not a tree but
/// whose junction tree has only singleton separators.
pub fn dino() -> Graph {
    Graph::parse_text(DINO_TEXT).expect("bundled dino fixture parses")
}

/// Benchmark graph families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum GraphFamily {
    Chain,
    Cycle,
    /// Square lattice; `p` must be a perfect square.
    Grid2d,
    /// Each pair present independently; defaults to probability `3 / p`.
    ErdosRenyi {
        edge_prob: Option<f64>,
    },
    /// Hub `0` joined to leaves `1..=d`, `d = floor(ln p)` unless
    /// overridden. Leftover vertices hang off leaf `d` as a pendant path.
    Star {
        hub_degree: Option<usize>,
    },
    /// The bundled dino fixture; `p` must be 13.
    Dino,
    Custom(CustomGraph),
}

/// Explicit edge list for [`GraphFamily::Custom`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomGraph {
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphFamilySpec {
    pub family: GraphFamily,
    pub p: usize,
    /// Seed used by [`GraphFamilySpec::build`] for random families.
    pub seed: u64,
}

impl GraphFamilySpec {
    pub fn new(family: GraphFamily, p: usize) -> Self {
        GraphFamilySpec { family, p, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p;
        if p == 0 {
            return Err(Error::InvalidSpec("p must be at least 1".into()));
        }
        match &self.family {
            GraphFamily::Cycle if p < 3 => Err(Error::InvalidSpec(
                "a cycle needs at least 3 vertices".into(),
            )),
            GraphFamily::Grid2d if isqrt(p) * isqrt(p) != p => Err(Error::InvalidSpec(format!(
                "grid2d needs a perfect-square p, got {p}"
            ))),
            GraphFamily::ErdosRenyi { edge_prob: Some(q) } if !(0.0..=1.0).contains(q) => Err(
                Error::InvalidSpec(format!("edge probability {q} outside [0, 1]")),
            ),
            GraphFamily::Star {
                hub_degree: Some(d),
            } if *d == 0 || *d >= p => Err(Error::InvalidSpec(format!(
                "hub degree {d} invalid for p = {p}"
            ))),
            GraphFamily::Star { .. } if p < 2 => Err(Error::InvalidSpec(
                "a star needs at least 2 vertices".into(),
            )),
            GraphFamily::Dino if p != 13 => Err(Error::InvalidSpec(format!(
                "the dino fixture has 13 vertices, got p = {p}"
            ))),
            _ => Ok(()),
        }
    }

    /// Generates the graph from `self.seed`.
    pub fn build(&self) -> Result<Graph> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        generate_graph(self, &mut rng)
    }

    /// Hub degree a star family would use for this `p`.
    pub fn star_hub_degree(&self) -> usize {
        match &self.family {
            GraphFamily::Star {
                hub_degree: Some(d),
            } => *d,
            _ => ((self.p as f64).ln().floor() as usize).clamp(1, self.p.saturating_sub(1).max(1)),
        }
    }
}

fn isqrt(p: usize) -> usize {
    let mut r = (p as f64).sqrt() as usize;
    while r * r > p {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= p {
        r += 1;
    }
    r
}

/// Generates a member of a graph family. Only the random families consume
/// randomness; the result is a pure function of `spec` and the RNG state.
pub fn generate_graph<R: Rng + ?Sized>(spec: &GraphFamilySpec, rng: &mut R) -> Result<Graph> {
    spec.validate()?;
    let p = spec.p;
    match &spec.family {
        GraphFamily::Chain => {
            let edges: Vec<_> = (1..p).map(|t| (t - 1, t)).collect();
            Graph::from_edges(p, &edges)
        }
        GraphFamily::Cycle => {
            let mut edges: Vec<_> = (1..p).map(|t| (t - 1, t)).collect();
            edges.push((0, p - 1));
            Graph::from_edges(p, &edges)
        }
        GraphFamily::Grid2d => {
            let k = isqrt(p);
            Graph::grid(k, k)
        }
        GraphFamily::ErdosRenyi { edge_prob } => {
            let q = edge_prob.unwrap_or_else(|| (3.0 / p as f64).min(1.0));
            let mut g = Graph::new(p)?;
            for s in 0..p {
                for t in s + 1..p {
                    if rng.gen::<f64>() < q {
                        g.add_edge(s, t)?;
                    }
                }
            }
            Ok(g)
        }
        GraphFamily::Star { .. } => {
            let d = spec.star_hub_degree();
            let mut g = Graph::new(p)?;
            for leaf in 1..=d {
                g.add_edge(0, leaf)?;
            }
            for v in d + 1..p {
                g.add_edge(v - 1, v)?;
            }
            Ok(g)
        }
        GraphFamily::Dino => Ok(dino()),
        GraphFamily::Custom(c) => Graph::from_edges(p, &c.edges),
    }
}
