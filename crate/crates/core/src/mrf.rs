//! Discrete Markov random fields in exponential-family form.
//!
//! A model over `p` variables with values `0..m` carries a weight
//! `θ_{C;J}` for every clique `C` and every configuration `J` of `C` with
//! all coordinates nonzero. The unnormalized log-density of `x` is the sum
//! of the weights whose indicator `x_C == J` fires.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{parse_err, Error, Result};
use crate::graph::{Graph, VarSet};

/// Largest clique order a potential or statistic may have.
pub const MAX_CLIQUE_ORDER: usize = 5;

/// Default cap on `m^p` for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// A joint assignment `x` with entries in `0..m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration(Vec<u8>);

impl Configuration {
    pub fn new(values: Vec<u8>, m: usize) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v as usize >= m) {
            return Err(Error::InvalidInput(format!(
                "value {v} out of range for alphabet size {m}"
            )));
        }
        Ok(Configuration(values))
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Position of configuration `x_C` inside its clique block, or `None` if
/// some coordinate is zero. Configurations are ordered lexicographically
/// over `{1..m-1}^|C|` with the first vertex most significant.
#[inline]
pub(crate) fn block_offset(m: usize, clique: &[usize], x: &[u8]) -> Option<usize> {
    let mut off = 0usize;
    for &v in clique {
        let xv = x[v] as usize;
        if xv == 0 {
            return None;
        }
        off = off * (m - 1) + (xv - 1);
    }
    Some(off)
}

/// All configurations of a `k`-clique with nonzero coordinates, in block
/// order.
pub fn nonzero_configurations(m: usize, k: usize) -> Vec<Vec<u8>> {
    let count = (m - 1).pow(k as u32);
    (0..count)
        .map(|mut idx| {
            let mut j = vec![0u8; k];
            for pos in (0..k).rev() {
                j[pos] = (idx % (m - 1) + 1) as u8;
                idx /= m - 1;
            }
            j
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Block {
    set: VarSet,
    start: usize,
    len: usize,
}

/// Ordered collection of indicator statistics `I_{C;J}`.
///
/// Cliques are kept in graded lexicographic order and each occupies a
/// contiguous block of `(m-1)^|C|` coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatisticBasis {
    m: usize,
    blocks: Vec<Block>,
    dim: usize,
}

impl StatisticBasis {
    pub fn new<I: IntoIterator<Item = VarSet>>(m: usize, sets: I) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput(format!("alphabet size {m} < 2")));
        }
        let mut sets: Vec<VarSet> = sets.into_iter().collect();
        sets.sort();
        sets.dedup();
        let mut blocks = Vec::with_capacity(sets.len());
        let mut dim = 0;
        for set in sets {
            if set.is_empty() {
                return Err(Error::InvalidInput("basis clique is empty".into()));
            }
            if set.len() > MAX_CLIQUE_ORDER {
                return Err(Error::InvalidInput(format!(
                    "clique {set} exceeds the maximum order {MAX_CLIQUE_ORDER}"
                )));
            }
            let len = (m - 1).pow(set.len() as u32);
            blocks.push(Block {
                set,
                start: dim,
                len,
            });
            dim += len;
        }
        Ok(StatisticBasis { m, blocks, dim })
    }

    /// Vertex statistics `Ψ(X; V)`.
    pub fn vertices(p: usize, m: usize) -> Result<Self> {
        Self::new(m, (0..p).map(VarSet::singleton))
    }

    /// All nonempty subsets of every set in `sets`.
    pub fn pow<'a, I: IntoIterator<Item = &'a VarSet>>(m: usize, sets: I) -> Result<Self> {
        Self::new(m, sets.into_iter().flat_map(|s| s.nonempty_subsets()))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cliques(&self) -> impl Iterator<Item = &VarSet> + '_ {
        self.blocks.iter().map(|b| &b.set)
    }

    pub fn clique_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn contains(&self, set: &VarSet) -> bool {
        self.blocks.binary_search_by(|b| b.set.cmp(set)).is_ok()
    }

    /// Coordinate range of the block for `set`.
    pub fn block_range(&self, set: &VarSet) -> Option<Range<usize>> {
        self.blocks
            .binary_search_by(|b| b.set.cmp(set))
            .ok()
            .map(|i| {
                let b = &self.blocks[i];
                b.start..b.start + b.len
            })
    }

    /// `(clique, range)` for each block in order.
    pub fn blocks(&self) -> impl Iterator<Item = (&VarSet, Range<usize>)> + '_ {
        self.blocks
            .iter()
            .map(|b| (&b.set, b.start..b.start + b.len))
    }

    /// `(C, J)` for each coordinate.
    pub fn entries(&self) -> Vec<(VarSet, Vec<u8>)> {
        let mut out = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            for j in nonzero_configurations(self.m, b.set.len()) {
                out.push((b.set.clone(), j));
            }
        }
        out
    }

    /// Human-readable label per coordinate. Binary bases print the clique
    /// only; otherwise `clique:J`.
    pub fn labels(&self) -> Vec<String> {
        self.entries()
            .into_iter()
            .map(|(c, j)| {
                if self.m == 2 {
                    c.to_string()
                } else {
                    let js: Vec<String> = j.iter().map(|v| v.to_string()).collect();
                    format!("{c}:{}", js.join(","))
                }
            })
            .collect()
    }

    fn check_shape(&self, p: usize, m: usize) -> Result<()> {
        if m != self.m {
            return Err(Error::DimensionMismatch(format!(
                "basis built for m = {}, model has m = {m}",
                self.m
            )));
        }
        if let Some(b) = self
            .blocks
            .iter()
            .find(|b| b.set.max_vertex().is_some_and(|v| v >= p))
        {
            return Err(Error::DimensionMismatch(format!(
                "basis clique {} out of range for p = {p}",
                b.set
            )));
        }
        Ok(())
    }

    /// Indices of the coordinates equal to one at `x` (at most one per
    /// block). `x` must already be validated.
    #[inline]
    pub(crate) fn active_indices(&self, x: &[u8], out: &mut Vec<usize>) {
        out.clear();
        for b in &self.blocks {
            if let Some(off) = block_offset(self.m, b.set.as_slice(), x) {
                out.push(b.start + off);
            }
        }
    }

    /// The statistic vector `I(x)`.
    pub fn indicator(&self, p: usize, x: &Configuration) -> Result<Vec<f64>> {
        self.check_shape(p, self.m)?;
        if x.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "configuration has length {}, expected {p}",
                x.len()
            )));
        }
        let mut active = Vec::new();
        self.active_indices(x.values(), &mut active);
        let mut out = vec![0.0; self.dim];
        for i in active {
            out[i] = 1.0;
        }
        Ok(out)
    }
}

/// `I(x)` for a model of shape `(p, m)`.
pub fn indicator_vector(
    p: usize,
    m: usize,
    basis: &StatisticBasis,
    x: &Configuration,
) -> Result<Vec<f64>> {
    basis.check_shape(p, m)?;
    if let Some(v) = x.values().iter().find(|&&v| v as usize >= m) {
        return Err(Error::DimensionMismatch(format!(
            "value {v} out of range for m = {m}"
        )));
    }
    basis.indicator(p, x)
}

/// Discrete MRF with dense weight tables per clique.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMrf {
    p: usize,
    m: usize,
    potentials: BTreeMap<VarSet, Vec<f64>>,
}

impl DiscreteMrf {
    pub fn new(p: usize, m: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput(
                "model needs at least one variable".into(),
            ));
        }
        if !(2..=256).contains(&m) {
            return Err(Error::InvalidInput(format!(
                "alphabet size {m} outside 2..=256"
            )));
        }
        Ok(DiscreteMrf {
            p,
            m,
            potentials: BTreeMap::new(),
        })
    }

    /// Binary pairwise model with one node weight and one edge weight.
    pub fn ising(graph: &Graph, node_weight: f64, edge_weight: f64) -> Self {
        let mut model = DiscreteMrf::new(graph.p(), 2).expect("graph has p >= 1");
        for s in 0..graph.p() {
            model
                .potentials
                .insert(VarSet::singleton(s), vec![node_weight]);
        }
        for (s, t) in graph.edges() {
            model
                .potentials
                .insert(VarSet::from([s, t]), vec![edge_weight]);
        }
        model
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn potentials(&self) -> &BTreeMap<VarSet, Vec<f64>> {
        &self.potentials
    }

    pub fn potential(&self, clique: &VarSet) -> Option<&[f64]> {
        self.potentials.get(clique).map(|v| v.as_slice())
    }

    pub fn set_potential(&mut self, clique: VarSet, table: Vec<f64>) -> Result<()> {
        if clique.is_empty() {
            return Err(Error::InvalidInput("potential clique is empty".into()));
        }
        if clique.len() > MAX_CLIQUE_ORDER {
            return Err(Error::InvalidInput(format!(
                "clique {clique} exceeds the maximum order {MAX_CLIQUE_ORDER}"
            )));
        }
        if clique.max_vertex().unwrap() >= self.p {
            return Err(Error::DimensionMismatch(format!(
                "clique {clique} out of range for p = {}",
                self.p
            )));
        }
        let expected = (self.m - 1).pow(clique.len() as u32);
        if table.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "clique {clique} needs {expected} weights, got {}",
                table.len()
            )));
        }
        self.potentials.insert(clique, table);
        Ok(())
    }

    /// Sets every entry of the clique's table to `value`.
    pub fn set_uniform_potential(&mut self, clique: VarSet, value: f64) -> Result<()> {
        let len = (self.m - 1).pow(clique.len() as u32);
        self.set_potential(clique, vec![value; len])
    }

    /// Unnormalized log-probability `<θ, I(x)>`.
    #[inline]
    pub fn energy(&self, x: &[u8]) -> f64 {
        self.potentials
            .iter()
            .filter_map(|(c, t)| block_offset(self.m, c.as_slice(), x).map(|o| t[o]))
            .sum()
    }

    /// Graph with an edge between every pair sharing a potential.
    pub fn interaction_graph(&self) -> Graph {
        let mut g = Graph::new(self.p).expect("p >= 1");
        for c in self.potentials.keys() {
            let v = c.as_slice();
            for (i, &s) in v.iter().enumerate() {
                for &t in &v[i + 1..] {
                    g.add_edge(s, t).expect("clique vertices are distinct");
                }
            }
        }
        g
    }

    /// Whether every potential is on a single vertex or a pair.
    pub fn is_pairwise(&self) -> bool {
        self.potentials.keys().all(|c| c.len() <= 2)
    }

    pub fn state_count(&self) -> u128 {
        (self.m as u128).saturating_pow(self.p as u32)
    }

    /// Writes `p m` then one `C:J:value` line per weight.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.p, self.m)?;
        for (c, table) in &self.potentials {
            for (j, value) in nonzero_configurations(self.m, c.len()).iter().zip(table) {
                let js: Vec<String> = j.iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}:{}:{:?}", c.to_label(), js.join(","), value)?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("model text is ASCII")
    }

    /// Reads the format written by [`DiscreteMrf::write_text`]. Weights a
    /// clique's lines leave out default to zero.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut model: Option<DiscreteMrf> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some(model) = model.as_mut() else {
                let fields: Vec<&str> = body.split_whitespace().collect();
                if fields.len() != 2 {
                    return Err(parse_err(lineno, "expected header `p m`"));
                }
                let p = parse_usize(fields[0], lineno)?;
                let m = parse_usize(fields[1], lineno)?;
                model = Some(DiscreteMrf::new(p, m).map_err(|e| parse_err(lineno, e.to_string()))?);
                continue;
            };
            let parts: Vec<&str> = body.split(':').collect();
            if parts.len() != 3 {
                return Err(parse_err(lineno, "expected `C:J:value`"));
            }
            let raw: Vec<usize> = parts[0]
                .split(',')
                .map(|s| parse_usize(s.trim(), lineno))
                .collect::<Result<_>>()?;
            let clique = VarSet::new(raw.clone());
            if clique.len() != raw.len() || raw.windows(2).any(|w| w[0] > w[1]) {
                return Err(parse_err(
                    lineno,
                    "clique must list distinct vertices in increasing order",
                ));
            }
            let j: Vec<usize> = parts[1]
                .split(',')
                .map(|s| parse_usize(s.trim(), lineno))
                .collect::<Result<_>>()?;
            if j.len() != clique.len() || j.iter().any(|&v| v == 0 || v >= model.m) {
                return Err(parse_err(
                    lineno,
                    "configuration must have one value in 1..m per vertex",
                ));
            }
            let value: f64 = parts[2]
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, "weight is not a number"))?;
            if clique.max_vertex().unwrap() >= model.p || clique.len() > MAX_CLIQUE_ORDER {
                return Err(parse_err(
                    lineno,
                    format!("clique {clique} invalid for this model"),
                ));
            }
            let len = (model.m - 1).pow(clique.len() as u32);
            let offset = j.iter().fold(0, |acc, &v| acc * (model.m - 1) + (v - 1));
            model
                .potentials
                .entry(clique)
                .or_insert_with(|| vec![0.0; len])[offset] = value;
        }
        model.ok_or_else(|| parse_err(0, "missing `p m` header"))
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        Self::read_text(text.as_bytes())
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(line, format!("`{s}` is not a nonnegative integer")))
}

/// Exact joint distribution of a model, by enumeration of all `m^p` states.
///
/// States are indexed in mixed radix with `x_0` most significant.
#[derive(Clone, Debug)]
pub struct ExactDistribution {
    p: usize,
    m: usize,
    probs: Vec<f64>,
    log_partition: f64,
}

pub fn exact_distribution(model: &DiscreteMrf) -> Result<ExactDistribution> {
    exact_distribution_capped(model, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_distribution_capped(model: &DiscreteMrf, cap: u128) -> Result<ExactDistribution> {
    let states = model.state_count();
    if states > cap || model.p >= 64 {
        return Err(Error::TooLargeToEnumerate { states, cap });
    }
    let (p, m) = (model.p, model.m);
    let n = states as usize;

    let cliques: Vec<(&[usize], &[f64])> = model
        .potentials
        .iter()
        .map(|(c, t)| (c.as_slice(), t.as_slice()))
        .collect();
    let mut log_weights = Vec::with_capacity(n);
    let mut x = vec![0u8; p];
    for _ in 0..n {
        let e: f64 = cliques
            .iter()
            .filter_map(|(c, t)| block_offset(m, c, &x).map(|o| t[o]))
            .sum();
        log_weights.push(e);
        advance(&mut x, m);
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in log_weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in log_weights.iter_mut() {
        *w /= total;
    }
    Ok(ExactDistribution {
        p,
        m,
        probs: log_weights,
        log_partition: max + total.ln(),
    })
}

/// Odometer step over `{0..m}^p`, last coordinate fastest.
#[inline]
pub(crate) fn advance(x: &mut [u8], m: usize) {
    for v in x.iter_mut().rev() {
        if (*v as usize) + 1 < m {
            *v += 1;
            return;
        }
        *v = 0;
    }
}

impl ExactDistribution {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `Φ(θ) = log Σ_x exp<θ, I(x)>`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn state_index(&self, x: &[u8]) -> usize {
        x.iter().fold(0, |acc, &v| acc * self.m + v as usize)
    }

    pub fn prob(&self, x: &[u8]) -> f64 {
        self.probs[self.state_index(x)]
    }

    pub fn decode(&self, mut index: usize, out: &mut [u8]) {
        for v in out.iter_mut().rev() {
            *v = (index % self.m) as u8;
            index /= self.m;
        }
    }

    /// Calls `f(x, q(x))` for every state in index order.
    pub fn for_each_state<F: FnMut(&[u8], f64)>(&self, mut f: F) {
        let mut x = vec![0u8; self.p];
        for &q in &self.probs {
            f(&x, q);
            advance(&mut x, self.m);
        }
    }

    /// Marginal table over `set`, indexed in mixed radix with the first
    /// vertex of the set most significant.
    pub fn marginal(&self, set: &VarSet) -> Vec<f64> {
        let k = set.len();
        let mut out = vec![0.0; self.m.pow(k as u32)];
        let vs = set.as_slice();
        self.for_each_state(|x, q| {
            let idx = vs.iter().fold(0, |acc, &v| acc * self.m + x[v] as usize);
            out[idx] += q;
        });
        out
    }

    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }

    pub fn marginal_entropy(&self, set: &VarSet) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        entropy_of(&self.marginal(set))
    }

    /// `E[X_s]` for each variable, on the raw value scale.
    pub fn means(&self) -> Vec<f64> {
        let mut mu = vec![0.0; self.p];
        self.for_each_state(|x, q| {
            for (m, &v) in mu.iter_mut().zip(x) {
                *m += q * v as f64;
            }
        });
        mu
    }
}

pub(crate) fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q * q.ln())
        .sum::<f64>()
}

/// Distribution of a single weight draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDist {
    Constant(f64),
    Uniform { low: f64, high: f64 },
}

impl WeightDist {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            WeightDist::Constant(v) => v,
            WeightDist::Uniform { low, high } => rng.gen_range(low..high),
        }
    }
}

/// Weights for [`random_model`]: one distribution for vertices, one for
/// edges and, optionally, one for cliques of order 3 and above.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub node: WeightDist,
    pub edge: WeightDist,
    pub higher: Option<WeightDist>,
}

impl WeightSpec {
    pub fn constant(node: f64, edge: f64) -> Self {
        WeightSpec {
            node: WeightDist::Constant(node),
            edge: WeightDist::Constant(edge),
            higher: None,
        }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        let d = WeightDist::Uniform { low, high };
        WeightSpec {
            node: d,
            edge: d,
            higher: Some(d),
        }
    }
}

/// Model with potentials on the cliques of `graph`. Every table entry is an
/// independent draw; cliques above order 2 get weights only when
/// `spec.higher` is set.
pub fn random_model<R: Rng + ?Sized>(
    graph: &Graph,
    m: usize,
    spec: &WeightSpec,
    rng: &mut R,
) -> Result<DiscreteMrf> {
    let mut model = DiscreteMrf::new(graph.p(), m)?;
    let max_order = if spec.higher.is_some() {
        MAX_CLIQUE_ORDER
    } else {
        2
    };
    for clique in graph.cliques_up_to(max_order) {
        let dist = match clique.len() {
            1 => spec.node,
            2 => spec.edge,
            _ => spec
                .higher
                .expect("higher-order cliques only enumerated when set"),
        };
        let len = (m - 1).pow(clique.len() as u32);
        let table = (0..len).map(|_| dist.sample(rng)).collect();
        model.set_potential(clique, table)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain4() -> Graph {
        Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn binary_vertex_indicators_are_identity() {
        let basis = StatisticBasis::vertices(3, 2).unwrap();
        let x = Configuration::new(vec![1, 0, 1], 2).unwrap();
        assert_eq!(
            indicator_vector(3, 2, &basis, &x).unwrap(),
            vec![1.0, 0.0, 1.0]
        );
    }

    #[test]
    fn pair_indicator_is_product() {
        let basis = StatisticBasis::new(
            2,
            [VarSet::from([0]), VarSet::from([2]), VarSet::from([0, 2])],
        )
        .unwrap();
        let x = Configuration::new(vec![1, 0, 1, 0], 2).unwrap();
        assert_eq!(
            indicator_vector(4, 2, &basis, &x).unwrap(),
            vec![1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn ternary_zero_kills_blocks() {
        let basis = StatisticBasis::pow(3, [&VarSet::from([0, 1])]).unwrap();
        assert_eq!(basis.dim(), 2 + 2 + 4);
        let x = Configuration::new(vec![0, 2], 3).unwrap();
        let v = indicator_vector(2, 3, &basis, &x).unwrap();
        assert_eq!(&v[0..2], &[0.0, 0.0]);
        assert_eq!(&v[2..4], &[0.0, 1.0]);
        assert_eq!(&v[4..8], &[0.0; 4]);
    }

    #[test]
    fn indicator_shape_errors() {
        let basis = StatisticBasis::vertices(3, 2).unwrap();
        let x = Configuration::new(vec![1, 0], 2).unwrap();
        assert!(matches!(
            indicator_vector(3, 2, &basis, &x),
            Err(Error::DimensionMismatch(_))
        ));
        let x = Configuration::new(vec![1, 0, 1], 2).unwrap();
        assert!(indicator_vector(2, 2, &basis, &x).is_err());
        assert!(indicator_vector(3, 3, &basis, &x).is_err());
    }

    #[test]
    fn single_fair_coin() {
        let mut model = DiscreteMrf::new(1, 2).unwrap();
        model
            .set_uniform_potential(VarSet::singleton(0), 0.0)
            .unwrap();
        let d = exact_distribution(&model).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.5]);
        assert!((d.log_partition() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_logistic() {
        let mut model = DiscreteMrf::new(1, 2).unwrap();
        model
            .set_uniform_potential(VarSet::singleton(0), 0.1)
            .unwrap();
        let d = exact_distribution(&model).unwrap();
        let expected = 0.1f64.exp() / (1.0 + 0.1f64.exp());
        assert!((d.probs()[1] - expected).abs() < 1e-15);
        assert!((d.probs()[1] - 0.524979).abs() < 1e-6);
    }

    #[test]
    fn chain_matches_direct_summation() {
        let model = DiscreteMrf::ising(&chain4(), 0.1, 2.0);
        let d = exact_distribution(&model).unwrap();
        // Independent oracle: explicit Ising energy, no statistic machinery.
        let mut weights = Vec::new();
        for idx in 0..16usize {
            let x: Vec<f64> = (0..4).map(|s| ((idx >> (3 - s)) & 1) as f64).collect();
            let e = 0.1 * x.iter().sum::<f64>() + 2.0 * (x[0] * x[1] + x[1] * x[2] + x[2] * x[3]);
            weights.push(e.exp());
        }
        let z: f64 = weights.iter().sum();
        for (q, w) in d.probs().iter().zip(&weights) {
            assert!((q - w / z).abs() < 1e-15);
        }
        assert!((d.log_partition() - z.ln()).abs() < 1e-12);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap() {
        let g = Graph::new(21).unwrap();
        let model = DiscreteMrf::ising(&g, 0.0, 0.0);
        assert!(matches!(
            exact_distribution(&model),
            Err(Error::TooLargeToEnumerate { .. })
        ));
        assert!(exact_distribution_capped(&model, 1 << 21).is_ok());
    }

    #[test]
    fn random_model_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let empty = Graph::new(3).unwrap();
        let model = random_model(&empty, 2, &WeightSpec::constant(0.1, 0.3), &mut rng).unwrap();
        assert_eq!(model.potentials().len(), 3);
        assert!(model.potentials().keys().all(|c| c.len() == 1));

        let model = random_model(&chain4(), 2, &WeightSpec::constant(0.1, 2.0), &mut rng).unwrap();
        assert_eq!(model, DiscreteMrf::ising(&chain4(), 0.1, 2.0));

        let tri = Graph::complete(3).unwrap();
        let spec = WeightSpec::uniform(-1.0, 1.0);
        let a = random_model(&tri, 3, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = random_model(&tri, 3, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.potential(&VarSet::from([0, 1, 2])).unwrap().len(), 8);
        assert!(a.potentials().values().flatten().all(|&w| w != 0.0));
    }

    #[test]
    fn model_text_round_trip() {
        let tri = Graph::complete(3).unwrap();
        let model = random_model(
            &tri,
            3,
            &WeightSpec::uniform(-1.0, 1.0),
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        let text = model.to_text();
        let back = DiscreteMrf::parse_text(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn model_text_rejects_bad_lines() {
        assert!(DiscreteMrf::parse_text("2 2\n0,0:1,1:1.0\n").is_err());
        assert!(DiscreteMrf::parse_text("2 2\n0:2:1.0\n").is_err());
        assert!(DiscreteMrf::parse_text("2 2\n0,1:1:1.0\n").is_err());
        assert!(DiscreteMrf::parse_text("2 2\n3:1:1.0\n").is_err());
        let m = DiscreteMrf::parse_text("2 2\n0:1:0.5\n0,1:1,1:-1\n").unwrap();
        assert_eq!(m.potential(&VarSet::from([0, 1])).unwrap(), &[-1.0]);
    }
}
