//! Sampling from discrete MRFs and zero-filled missing-data corruption.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::VarSet;
use crate::mrf::{
    block_offset, exact_distribution_capped, DiscreteMrf, ExactDistribution,
    DEFAULT_ENUMERATION_CAP,
};

/// Erasure record attached to a corrupted dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Corruption {
    pub rho: f64,
    /// Row-major; `true` marks an erased cell.
    pub mask: Vec<bool>,
}

/// `n × p` matrix of values in `0..m`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    p: usize,
    m: usize,
    values: Vec<u8>,
    corruption: Option<Corruption>,
}

impl Dataset {
    pub fn new(n: usize, p: usize, m: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != n * p {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n} x {p} dataset",
                values.len()
            )));
        }
        if m < 2 {
            return Err(Error::InvalidInput(format!("alphabet size {m} < 2")));
        }
        if let Some(v) = values.iter().find(|&&v| v as usize >= m) {
            return Err(Error::InvalidInput(format!(
                "value {v} out of range for m = {m}"
            )));
        }
        Ok(Dataset {
            n,
            p,
            m,
            values,
            corruption: None,
        })
    }

    pub fn from_rows(rows: &[Vec<u8>], p: usize, m: usize) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} in a dataset with p = {p}",
                r.len()
            )));
        }
        Dataset::new(rows.len(), p, m, rows.concat())
    }

    /// Attaches an erasure record. Masked cells must already hold zero.
    pub fn with_corruption(mut self, rho: f64, mask: Vec<bool>) -> Result<Self> {
        check_rho(rho)?;
        if mask.len() != self.values.len() {
            return Err(Error::DimensionMismatch(
                "mask and data sizes differ".into(),
            ));
        }
        if mask.iter().zip(&self.values).any(|(&e, &v)| e && v != 0) {
            return Err(Error::InvalidInput(
                "erased cells must be zero-filled".into(),
            ));
        }
        self.corruption = Some(Corruption { rho, mask });
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> + '_ {
        // chunks_exact panics on a zero chunk size.
        self.values.chunks_exact(self.p.max(1)).take(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.values[i * self.p + j]
    }

    pub fn corruption(&self) -> Option<&Corruption> {
        self.corruption.as_ref()
    }

    /// Missing-data rate, zero when uncorrupted.
    pub fn rho(&self) -> f64 {
        self.corruption.as_ref().map_or(0.0, |c| c.rho)
    }

    /// Writes one comma-separated row of integers per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for row in self.rows() {
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes the erasure mask as 0/1 rows; all zeros when uncorrupted.
    pub fn write_mask_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.n {
            let rec = (0..self.p).map(|j| match &self.corruption {
                Some(c) if c.mask[i * self.p + j] => "1",
                _ => "0",
            });
            out.write_record(rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads integer rows. With `m = None` the alphabet size is inferred
    /// as one more than the largest value, at least 2.
    pub fn read_csv<R: Read>(r: R, m: Option<usize>) -> Result<Self> {
        let rows = read_int_rows(r)?;
        let p = rows.first().map_or(0, |r| r.len());
        let inferred = rows
            .iter()
            .flatten()
            .map(|&v| v as usize + 1)
            .max()
            .unwrap_or(2)
            .max(2);
        Dataset::from_rows(&rows, p, m.unwrap_or(inferred))
    }

    /// Attaches a mask read from a 0/1 CSV written by
    /// [`Dataset::write_mask_csv`].
    pub fn read_mask_csv<R: Read>(self, r: R, rho: f64) -> Result<Self> {
        let rows = read_int_rows(r)?;
        if rows.iter().flatten().any(|&v| v > 1) {
            return Err(Error::InvalidInput("mask entries must be 0 or 1".into()));
        }
        if rows.len() != self.n || rows.iter().any(|r| r.len() != self.p) {
            return Err(Error::DimensionMismatch(
                "mask shape differs from data".into(),
            ));
        }
        let mask = rows.concat().into_iter().map(|v| v == 1).collect();
        self.with_corruption(rho, mask)
    }
}

fn read_int_rows<R: Read>(r: R) -> Result<Vec<Vec<u8>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<u8>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("`{f}` is not a value in 0..=255"),
                })
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(Error::InvalidRho(rho))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMode {
    /// Inverse CDF over the enumerated distribution.
    Exact,
    /// Single-site Gibbs sweeps.
    Gibbs,
    /// Exact ancestral sampling for pairwise models on forests.
    Forest,
    /// Exact when enumerable, forest when applicable, Gibbs otherwise.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    pub burn_in: usize,
    pub thinning: usize,
    /// Used by [`sample_seeded`]; other entry points take an RNG.
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: SamplerMode::Auto,
            burn_in: 1000,
            thinning: 10,
            seed: 0,
        }
    }
}

/// Inverse-CDF sampler over a precomputed cumulative table.
#[derive(Clone, Debug)]
pub struct ExactSampler {
    p: usize,
    m: usize,
    cdf: Vec<f64>,
}

impl ExactSampler {
    pub fn new(dist: &ExactDistribution) -> Self {
        let mut acc = 0.0;
        let cdf = dist
            .probs()
            .iter()
            .map(|&q| {
                acc += q;
                acc
            })
            .collect();
        ExactSampler {
            p: dist.p(),
            m: dist.m(),
            cdf,
        }
    }

    pub fn from_model(model: &DiscreteMrf) -> Result<Self> {
        Ok(Self::new(&exact_distribution_capped(
            model,
            DEFAULT_ENUMERATION_CAP,
        )?))
    }

    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        let total = *self.cdf.last().expect("distribution is nonempty");
        let u = rng.gen::<f64>() * total;
        let mut idx = self
            .cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1);
        for v in out.iter_mut().rev() {
            *v = (idx % self.m) as u8;
            idx /= self.m;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let mut values = vec![0u8; n * self.p];
        for row in values.chunks_exact_mut(self.p) {
            self.draw_into(rng, row);
        }
        Dataset::new(n, self.p, self.m, values).expect("sampled values are in range")
    }
}

/// `n` i.i.d. draws from the enumerated distribution.
pub fn exact_sample<R: Rng + ?Sized>(
    model: &DiscreteMrf,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    Ok(ExactSampler::from_model(model)?.sample(n, rng))
}

/// Single-site Gibbs sampler. After `burn_in` sweeps from a uniform random
/// start, one state is recorded every `thinning` sweeps.
pub fn gibbs_sample<R: Rng + ?Sized>(
    model: &DiscreteMrf,
    n: usize,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Dataset> {
    if config.thinning == 0 {
        return Err(Error::InvalidInput("thinning must be at least 1".into()));
    }
    let (p, m) = (model.p(), model.m());
    let mut touching: Vec<Vec<(&VarSet, &[f64])>> = vec![Vec::new(); p];
    for (c, t) in model.potentials() {
        for v in c.iter() {
            touching[v].push((c, t.as_slice()));
        }
    }
    let mut x: Vec<u8> = (0..p).map(|_| rng.gen_range(0..m) as u8).collect();
    let mut logits = vec![0.0; m];
    let mut sweep = |x: &mut Vec<u8>, rng: &mut R| {
        for v in 0..p {
            for (a, l) in logits.iter_mut().enumerate() {
                x[v] = a as u8;
                *l = touching[v]
                    .iter()
                    .filter_map(|(c, t)| block_offset(m, c.as_slice(), x).map(|o| t[o]))
                    .sum();
            }
            x[v] = draw_logits(&mut logits, rng) as u8;
        }
    };
    for _ in 0..config.burn_in {
        sweep(&mut x, rng);
    }
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        for _ in 0..config.thinning {
            sweep(&mut x, rng);
        }
        values.extend_from_slice(&x);
    }
    Dataset::new(n, p, m, values)
}

/// Samples an index with probability proportional to `exp(logits)`.
/// Overwrites `logits` with the unnormalized weights.
fn draw_logits<R: Rng + ?Sized>(logits: &mut [f64], rng: &mut R) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    let mut u = rng.gen::<f64>() * total;
    for (a, &w) in logits.iter().enumerate() {
        if u < w {
            return a;
        }
        u -= w;
    }
    logits.len() - 1
}

/// Exact ancestral sampler for pairwise models whose interaction graph is a
/// forest. Each tree is rooted at its smallest vertex; upward messages give
/// the root marginal and the child-given-parent conditionals.
#[derive(Clone, Debug)]
pub struct ForestSampler {
    p: usize,
    m: usize,
    /// Vertices in an order where parents precede children.
    order: Vec<usize>,
    parent: Vec<Option<usize>>,
    /// Root: cumulative marginal (length `m`). Non-root: `m` cumulative
    /// conditionals, one per parent value, concatenated.
    tables: Vec<Vec<f64>>,
}

impl ForestSampler {
    pub fn new(model: &DiscreteMrf) -> Result<Self> {
        if !model.is_pairwise() {
            return Err(Error::InvalidInput(
                "forest sampler needs a pairwise model".into(),
            ));
        }
        let graph = model.interaction_graph();
        if !graph.is_forest() {
            return Err(Error::InvalidInput(
                "interaction graph is not a forest".into(),
            ));
        }
        let (p, m) = (model.p(), model.m());
        let node = |v: usize, a: usize| -> f64 {
            match model.potential(&VarSet::singleton(v)) {
                Some(t) if a > 0 => t[a - 1],
                _ => 0.0,
            }
        };
        // Edge weight with `a` the value of `u` and `b` the value of `w`.
        let edge = |u: usize, w: usize, a: usize, b: usize| -> f64 {
            if a == 0 || b == 0 {
                return 0.0;
            }
            let (lo, hi, alo, bhi) = if u < w { (u, w, a, b) } else { (w, u, b, a) };
            match model.potential(&VarSet::from([lo, hi])) {
                Some(t) => t[(alo - 1) * (m - 1) + (bhi - 1)],
                None => 0.0,
            }
        };

        let mut parent = vec![None; p];
        let mut order = Vec::with_capacity(p);
        let mut seen = vec![false; p];
        for root in 0..p {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut queue = VecDeque::from([root]);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for &w in graph.neighbors(u) {
                    if !seen[w] {
                        seen[w] = true;
                        parent[w] = Some(u);
                        queue.push_back(w);
                    }
                }
            }
        }

        // Log upward message from each vertex to its parent, indexed by the
        // parent's value; `inbox[v][a]` sums the messages v receives.
        let mut inbox = vec![vec![0.0; m]; p];
        let mut tables = vec![Vec::new(); p];
        for &v in order.iter().rev() {
            let local: Vec<f64> = (0..m).map(|a| node(v, a) + inbox[v][a]).collect();
            match parent[v] {
                None => tables[v] = cumulative(&local),
                Some(u) => {
                    let mut table = Vec::with_capacity(m * m);
                    for (b, msg) in inbox[u].iter_mut().enumerate() {
                        let logits: Vec<f64> =
                            (0..m).map(|a| local[a] + edge(v, u, a, b)).collect();
                        *msg += log_sum_exp(&logits);
                        table.extend(cumulative(&logits));
                    }
                    tables[v] = table;
                }
            }
        }
        Ok(ForestSampler {
            p,
            m,
            order,
            parent,
            tables,
        })
    }

    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u8]) {
        for &v in &self.order {
            let cdf = match self.parent[v] {
                None => &self.tables[v][..],
                Some(u) => {
                    let b = out[u] as usize;
                    &self.tables[v][b * self.m..(b + 1) * self.m]
                }
            };
            let u: f64 = rng.gen();
            out[v] = cdf.partition_point(|&c| c <= u).min(self.m - 1) as u8;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let mut values = vec![0u8; n * self.p];
        for row in values.chunks_exact_mut(self.p.max(1)) {
            self.draw_into(rng, row);
        }
        Dataset::new(n, self.p, self.m, values).expect("sampled values are in range")
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalized cumulative distribution of `exp(logits)`.
fn cumulative(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    let mut acc = 0.0;
    let mut out: Vec<f64> = logits
        .iter()
        .map(|l| {
            acc += (l - lse).exp();
            acc
        })
        .collect();
    // Guard against round-off leaving the last entry just below one.
    *out.last_mut().unwrap() = f64::INFINITY;
    out
}

/// A model-specific sampler chosen once and reused across draws.
#[derive(Clone, Debug)]
pub enum Sampler {
    Exact(ExactSampler),
    Forest(ForestSampler),
    Gibbs(DiscreteMrf, SamplerConfig),
}

impl Sampler {
    pub fn new(model: &DiscreteMrf, config: &SamplerConfig) -> Result<Self> {
        Ok(match config.mode {
            SamplerMode::Exact => Sampler::Exact(ExactSampler::from_model(model)?),
            SamplerMode::Forest => Sampler::Forest(ForestSampler::new(model)?),
            SamplerMode::Gibbs => Sampler::Gibbs(model.clone(), *config),
            SamplerMode::Auto => {
                if model.state_count() <= DEFAULT_ENUMERATION_CAP {
                    Sampler::Exact(ExactSampler::from_model(model)?)
                } else if model.is_pairwise() && model.interaction_graph().is_forest() {
                    Sampler::Forest(ForestSampler::new(model)?)
                } else {
                    Sampler::Gibbs(model.clone(), *config)
                }
            }
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        match self {
            Sampler::Exact(s) => Ok(s.sample(n, rng)),
            Sampler::Forest(s) => Ok(s.sample(n, rng)),
            Sampler::Gibbs(model, config) => gibbs_sample(model, n, config, rng),
        }
    }
}

/// Samples with a fresh ChaCha8 stream seeded from `config.seed`.
pub fn sample_seeded(model: &DiscreteMrf, n: usize, config: &SamplerConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Sampler::new(model, config)?.sample(n, &mut rng)
}

/// Erases each cell independently with probability `rho`, replacing it by
/// zero and recording the mask. The input is left untouched.
pub fn corrupt_missing<R: Rng + ?Sized>(data: &Dataset, rho: f64, rng: &mut R) -> Result<Dataset> {
    check_rho(rho)?;
    if data.corruption.is_some() {
        return Err(Error::InvalidInput("dataset is already corrupted".into()));
    }
    let mut values = data.values.clone();
    let mask: Vec<bool> = if rho == 0.0 {
        vec![false; values.len()]
    } else {
        values
            .iter_mut()
            .map(|v| {
                let erased = rng.gen::<f64>() < rho;
                if erased {
                    *v = 0;
                }
                erased
            })
            .collect()
    };
    Ok(Dataset {
        values,
        corruption: Some(Corruption { rho, mask }),
        ..data.clone()
    })
}
