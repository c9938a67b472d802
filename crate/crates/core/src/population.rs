//! Population-level analysis: exact generalized covariance matrices, their
//! inverses, block zero-pattern checks, the junction-tree entropy identity
//! and mutual incoherence.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::graph::{subsets_up_to, Graph, JunctionTree, VarSet};
use crate::mrf::{
    exact_distribution_capped, DiscreteMrf, ExactDistribution, StatisticBasis,
    DEFAULT_ENUMERATION_CAP,
};

/// Default tolerance for blocks that must vanish, relative to `max |Γ|`.
pub const ZERO_TOL: f64 = 1e-8;

/// Default floor for blocks that must not vanish, relative to `max |Γ|`.
pub const NONZERO_TOL: f64 = 1e-6;

/// Condition numbers above this are logged.
const CONDITION_WARN: f64 = 1e10;

/// `cov(I(X))` for a statistic basis under an exact distribution.
#[derive(Clone, Debug)]
pub struct GeneralizedCovariance {
    basis: StatisticBasis,
    matrix: DMatrix<f64>,
    mean: DVector<f64>,
}

/// A basis subset together with its coordinate range.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockIndex {
    pub set: VarSet,
    pub range: Range<usize>,
}

impl GeneralizedCovariance {
    /// Exact `E[I Iᵀ] − μμᵀ`. Fails with `NotPositiveDefinite` when the
    /// basis is degenerate for this distribution.
    pub fn from_distribution(dist: &ExactDistribution, basis: &StatisticBasis) -> Result<Self> {
        if basis.m() != dist.m() {
            return Err(Error::DimensionMismatch(format!(
                "basis built for m = {}, distribution has m = {}",
                basis.m(),
                dist.m()
            )));
        }
        if let Some(c) = basis
            .cliques()
            .find(|c| c.max_vertex().is_some_and(|v| v >= dist.p()))
        {
            return Err(Error::DimensionMismatch(format!(
                "basis clique {c} out of range for p = {}",
                dist.p()
            )));
        }
        let dim = basis.dim();
        // Upper triangle of the second moment, row-major.
        let mut second = vec![0.0; dim * dim];
        let mut mean = vec![0.0; dim];
        let mut active = Vec::with_capacity(basis.clique_count());
        dist.for_each_state(|x, q| {
            basis.active_indices(x, &mut active);
            for (i, &a) in active.iter().enumerate() {
                mean[a] += q;
                let row = &mut second[a * dim..(a + 1) * dim];
                for &b in &active[i..] {
                    row[b] += q;
                }
            }
        });
        let matrix = DMatrix::from_fn(dim, dim, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            second[a * dim + b] - mean[a] * mean[b]
        });
        if matrix.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(GeneralizedCovariance {
            basis: basis.clone(),
            matrix,
            mean: DVector::from_vec(mean),
        })
    }

    pub fn basis(&self) -> &StatisticBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `μ = E[I(X)]`; coordinate `(C, J)` is `P(X_C = J)`.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn block_index(&self, set: &VarSet) -> Option<BlockIndex> {
        block_index(&self.basis, set)
    }

    pub fn block(&self, a: &VarSet, b: &VarSet) -> Option<DMatrix<f64>> {
        block_of(&self.basis, &self.matrix, a, b)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

fn block_index(basis: &StatisticBasis, set: &VarSet) -> Option<BlockIndex> {
    basis.block_range(set).map(|range| BlockIndex {
        set: set.clone(),
        range,
    })
}

fn block_of(
    basis: &StatisticBasis,
    m: &DMatrix<f64>,
    a: &VarSet,
    b: &VarSet,
) -> Option<DMatrix<f64>> {
    let ra = basis.block_range(a)?;
    let rb = basis.block_range(b)?;
    Some(
        m.view((ra.start, rb.start), (ra.len(), rb.len()))
            .into_owned(),
    )
}

/// Generalized covariance of `basis` under `model`, with the default
/// enumeration cap.
pub fn generalized_covariance(
    model: &DiscreteMrf,
    basis: &StatisticBasis,
) -> Result<GeneralizedCovariance> {
    generalized_covariance_capped(model, basis, DEFAULT_ENUMERATION_CAP)
}

pub fn generalized_covariance_capped(
    model: &DiscreteMrf,
    basis: &StatisticBasis,
    cap: u128,
) -> Result<GeneralizedCovariance> {
    let dist = exact_distribution_capped(model, cap)?;
    GeneralizedCovariance::from_distribution(&dist, basis)
}

/// `Γ = cov⁻¹` with block access.
#[derive(Clone, Debug)]
pub struct InverseCovariance {
    basis: StatisticBasis,
    gamma: DMatrix<f64>,
    condition_number: f64,
}

impl InverseCovariance {
    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn basis(&self) -> &StatisticBasis {
        &self.basis
    }

    /// The `d_A × d_B` block `Γ(A, B)`.
    pub fn block(&self, a: &VarSet, b: &VarSet) -> Option<DMatrix<f64>> {
        block_of(&self.basis, &self.gamma, a, b)
    }

    pub fn block_index(&self, set: &VarSet) -> Option<BlockIndex> {
        block_index(&self.basis, set)
    }

    /// `max |Γ(A, B)|`, or `None` if either set is missing from the basis.
    pub fn block_max_abs(&self, a: &VarSet, b: &VarSet) -> Option<f64> {
        self.block(a, b).map(|m| m.amax())
    }

    pub fn max_abs(&self) -> f64 {
        self.gamma.amax()
    }

    /// Ratio of extreme eigenvalues of the covariance.
    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }
}

/// Inverts a generalized covariance through its Cholesky factor.
pub fn inverse_and_blocks(cov: &GeneralizedCovariance) -> Result<InverseCovariance> {
    let chol = cov.matrix.clone().cholesky().ok_or(Error::SingularMatrix)?;
    let gamma = chol.inverse();
    let eig = SymmetricEigen::new(cov.matrix.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let condition_number = hi / lo;
    if condition_number > CONDITION_WARN {
        log::warn!(
            "generalized covariance is ill-conditioned (condition number {condition_number:.3e})"
        );
    }
    Ok(InverseCovariance {
        basis: cov.basis.clone(),
        gamma,
        condition_number,
    })
}

/// Outcome for one block pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCheck {
    pub a: VarSet,
    pub b: VarSet,
    /// Whether the block must vanish.
    pub forbidden: bool,
    /// `max |Γ(A, B)| / max |Γ|`.
    pub max_abs: f64,
    pub pass: bool,
}

/// Block zero-pattern verification report.
#[derive(Clone, Debug)]
pub struct StructureReport {
    pub checks: Vec<BlockCheck>,
    pub tol: f64,
    /// `max |Γ|`, the scale every `max_abs` is divided by.
    pub scale: f64,
    pub condition_number: f64,
}

impl StructureReport {
    fn new(inv: &InverseCovariance, pairs: Vec<(VarSet, VarSet, bool)>, tol: f64) -> Self {
        let scale = inv.max_abs();
        let checks = pairs
            .into_iter()
            .map(|(a, b, forbidden)| {
                let max_abs = inv
                    .block_max_abs(&a, &b)
                    .expect("checked pairs come from the basis")
                    / scale;
                BlockCheck {
                    pass: !forbidden || max_abs < tol,
                    a,
                    b,
                    forbidden,
                    max_abs,
                }
            })
            .collect();
        StructureReport {
            checks,
            tol,
            scale,
            condition_number: inv.condition_number(),
        }
    }

    /// Every forbidden block is below tolerance.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn violations(&self) -> impl Iterator<Item = &BlockCheck> + '_ {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// Largest scaled magnitude over forbidden blocks (0 if none).
    pub fn max_forbidden(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| c.forbidden)
            .map(|c| c.max_abs)
            .fold(0.0, f64::max)
    }

    /// Smallest scaled magnitude over allowed blocks (∞ if none).
    pub fn min_allowed(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| !c.forbidden)
            .map(|c| c.max_abs)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn forbidden_count(&self) -> usize {
        self.checks.iter().filter(|c| c.forbidden).count()
    }

    /// CSV with columns `A,B,forbidden,max_abs,pass`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["A", "B", "forbidden", "max_abs", "pass"])?;
        for c in &self.checks {
            out.write_record([
                c.a.to_label(),
                c.b.to_label(),
                c.forbidden.to_string(),
                format!("{:e}", c.max_abs),
                c.pass.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_markov(model: &DiscreteMrf, jt: &JunctionTree) -> Result<()> {
    if jt.p() != model.p() {
        return Err(Error::DimensionMismatch(format!(
            "junction tree has p = {}, model has p = {}",
            jt.p(),
            model.p()
        )));
    }
    for c in model.potentials().keys() {
        if !jt.cliques.iter().any(|k| c.is_subset(k)) {
            return Err(Error::InvalidInput(format!(
                "potential on {c} is not inside any junction-tree clique"
            )));
        }
    }
    Ok(())
}

/// Checks that `Γ(A, B)` vanishes whenever `A` and `B` do not share a
/// maximal clique, with the basis made of every clique of the
/// triangulation.
pub fn verify_junction_tree_zeros(
    model: &DiscreteMrf,
    jt: &JunctionTree,
    tol: f64,
) -> Result<StructureReport> {
    verify_junction_tree_zeros_capped(model, jt, tol, DEFAULT_ENUMERATION_CAP)
}

pub fn verify_junction_tree_zeros_capped(
    model: &DiscreteMrf,
    jt: &JunctionTree,
    tol: f64,
    cap: u128,
) -> Result<StructureReport> {
    check_markov(model, jt)?;
    let basis = StatisticBasis::new(model.m(), jt.all_cliques())?;
    let inv = inverse_and_blocks(&generalized_covariance_capped(model, &basis, cap)?)?;
    let sets: Vec<VarSet> = basis.cliques().cloned().collect();
    let mut pairs = Vec::new();
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            pairs.push((a.clone(), b.clone(), !jt.share_maximal_clique(a, b)));
        }
    }
    Ok(StructureReport::new(&inv, pairs, tol))
}

/// Checks an arbitrary basis against the junction tree: `Γ(A, B)` must
/// vanish when `A` and `B` share no maximal clique. The zeros are only
/// guaranteed when the basis holds every vertex and every subset of each
/// separator; see [`basis_covers_separators`].
pub fn verify_basis_structure(
    model: &DiscreteMrf,
    jt: &JunctionTree,
    basis: &StatisticBasis,
    tol: f64,
) -> Result<StructureReport> {
    check_markov(model, jt)?;
    let inv = inverse_and_blocks(&generalized_covariance(model, basis)?)?;
    let sets: Vec<VarSet> = basis.cliques().cloned().collect();
    let mut pairs = Vec::new();
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            pairs.push((a.clone(), b.clone(), !jt.share_maximal_clique(a, b)));
        }
    }
    Ok(StructureReport::new(&inv, pairs, tol))
}

/// Whether `basis` contains every vertex and every nonempty subset of each
/// separator of `jt`.
pub fn basis_covers_separators(basis: &StatisticBasis, jt: &JunctionTree) -> bool {
    (0..jt.p()).all(|v| basis.contains(&VarSet::singleton(v)))
        && jt
            .separator_sets()
            .iter()
            .all(|s| s.nonempty_subsets().iter().all(|t| basis.contains(t)))
}

/// Vertex-pair checks on a basis containing every vertex: pairs in
/// `forbidden` must vanish, edges of `allowed` are reported alongside.
fn vertex_pair_report(
    inv: &InverseCovariance,
    p: usize,
    forbidden: impl Fn(usize, usize) -> bool,
    allowed: impl Fn(usize, usize) -> bool,
    tol: f64,
) -> StructureReport {
    let mut pairs = Vec::new();
    for s in 0..p {
        for t in s + 1..p {
            let f = forbidden(s, t);
            if f || allowed(s, t) {
                pairs.push((VarSet::singleton(s), VarSet::singleton(t), f));
            }
        }
    }
    StructureReport::new(inv, pairs, tol)
}

/// With basis `V ∪ pow(separators)`, checks `Γ({s},{t}) = 0` for every pair
/// that is not an edge of the triangulation.
pub fn verify_separator_corollary(
    model: &DiscreteMrf,
    jt: &JunctionTree,
    tol: f64,
) -> Result<StructureReport> {
    check_markov(model, jt)?;
    let p = model.p();
    let mut sets: Vec<VarSet> = (0..p).map(VarSet::singleton).collect();
    for sep in jt.separator_sets() {
        sets.extend(sep.nonempty_subsets());
    }
    let basis = StatisticBasis::new(model.m(), sets)?;
    let inv = inverse_and_blocks(&generalized_covariance(model, &basis)?)?;
    let chordal = jt.chordal_graph();
    Ok(vertex_pair_report(
        &inv,
        p,
        |s, t| !chordal.has_edge(s, t),
        |s, t| chordal.has_edge(s, t),
        tol,
    ))
}

/// Basis `V` alone, valid when every separator has at most one vertex:
/// `Γ` is then graph-structured.
pub fn verify_singleton_separators(
    model: &DiscreteMrf,
    jt: &JunctionTree,
    tol: f64,
) -> Result<StructureReport> {
    check_markov(model, jt)?;
    if !jt.has_singleton_separators() {
        return Err(Error::InvalidInput(
            "junction tree has a separator with more than one vertex".into(),
        ));
    }
    let inv = vertex_inverse(model)?;
    let chordal = jt.chordal_graph();
    Ok(vertex_pair_report(
        &inv,
        model.p(),
        |s, t| !chordal.has_edge(s, t),
        |s, t| chordal.has_edge(s, t),
        tol,
    ))
}

/// Basis `V` on an arbitrary graph: checks `Γ({s},{t}) = 0` for pairs cut
/// apart by removing at most one vertex. Edges are reported as allowed;
/// other pairs are left unchecked.
pub fn verify_singleton_separable_pairs(
    model: &DiscreteMrf,
    graph: &Graph,
    tol: f64,
) -> Result<StructureReport> {
    if graph.p() != model.p() {
        return Err(Error::DimensionMismatch(
            "graph and model sizes differ".into(),
        ));
    }
    let separable = graph.singleton_separable_pairs();
    let inv = vertex_inverse(model)?;
    Ok(vertex_pair_report(
        &inv,
        model.p(),
        |s, t| separable.binary_search(&(s, t)).is_ok(),
        |s, t| graph.has_edge(s, t),
        tol,
    ))
}

fn vertex_inverse(model: &DiscreteMrf) -> Result<InverseCovariance> {
    let basis = StatisticBasis::vertices(model.p(), model.m())?;
    inverse_and_blocks(&generalized_covariance(model, &basis)?)
}

/// With basis `{s}` plus every subset of `V∖{s}` of size at most `d`, checks
/// `Γ({s}, B) = 0` for each `B` not contained in `N(s)`. Neighborhoods
/// come from the model's interaction graph.
pub fn verify_neighborhood_corollary(
    model: &DiscreteMrf,
    s: usize,
    d: usize,
    tol: f64,
) -> Result<StructureReport> {
    let p = model.p();
    if s >= p {
        return Err(Error::InvalidInput(format!(
            "vertex {s} out of range for p = {p}"
        )));
    }
    let graph = model.interaction_graph();
    if graph.degree(s) > d {
        return Err(Error::InvalidInput(format!(
            "vertex {s} has degree {} > d = {d}",
            graph.degree(s)
        )));
    }
    let others: Vec<usize> = (0..p).filter(|&v| v != s).collect();
    let mut sets = subsets_up_to(&others, d);
    let target = VarSet::singleton(s);
    sets.push(target.clone());
    let basis = StatisticBasis::new(model.m(), sets)?;
    let inv = inverse_and_blocks(&generalized_covariance(model, &basis)?)?;
    let neighborhood = VarSet::new(graph.neighbors(s).iter().copied().collect());
    let pairs = basis
        .cliques()
        .filter(|b| **b != target)
        .map(|b| (target.clone(), b.clone(), !b.is_subset(&neighborhood)))
        .collect();
    Ok(StructureReport::new(&inv, pairs, tol))
}

/// Joint entropy against the junction-tree decomposition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyCheck {
    pub joint: f64,
    /// `Σ_C H_C − Σ_S H_S`.
    pub decomposed: f64,
    pub gap: f64,
    /// `max_x |q(x) − Π_C q_C(x_C) / Π_S q_S(x_S)|`.
    pub factorization_gap: f64,
}

pub fn entropy_decomposition_check(model: &DiscreteMrf, jt: &JunctionTree) -> Result<EntropyCheck> {
    check_markov(model, jt)?;
    let dist = exact_distribution_capped(model, DEFAULT_ENUMERATION_CAP)?;
    let m = dist.m();
    let cliques: Vec<(&VarSet, Vec<f64>)> =
        jt.cliques.iter().map(|c| (c, dist.marginal(c))).collect();
    let seps: Vec<(&VarSet, Vec<f64>)> = jt
        .separators
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| (s, dist.marginal(s)))
        .collect();
    let h = |t: &[f64]| crate::mrf::entropy_of(t);
    let decomposed = cliques.iter().map(|(_, t)| h(t)).sum::<f64>()
        - seps.iter().map(|(_, t)| h(t)).sum::<f64>();
    let joint = dist.entropy();

    let index = |set: &VarSet, x: &[u8]| set.iter().fold(0, |acc, v| acc * m + x[v] as usize);
    let mut factorization_gap = 0.0f64;
    dist.for_each_state(|x, q| {
        let num: f64 = cliques.iter().map(|(c, t)| t[index(c, x)]).product();
        let den: f64 = seps.iter().map(|(s, t)| t[index(s, x)]).product();
        factorization_gap = factorization_gap.max((q - num / den).abs());
    });
    Ok(EntropyCheck {
        joint,
        decomposed,
        gap: (joint - decomposed).abs(),
        factorization_gap,
    })
}

/// `α = 1 − max_{e∈Sᶜ} ‖Γ*_{eS} (Γ*_{SS})⁻¹‖₁` with `Γ* = Σ ⊗ Σ`.
///
/// `S` is every diagonal pair plus both orientations of each listed pair.
/// An empty complement gives `α = 1`.
pub fn incoherence_alpha(sigma: &DMatrix<f64>, support: &[(usize, usize)]) -> Result<f64> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::DimensionMismatch("covariance is not square".into()));
    }
    let mut in_s = vec![false; p * p];
    for i in 0..p {
        in_s[i * p + i] = true;
    }
    for &(s, t) in support {
        if s >= p || t >= p {
            return Err(Error::InvalidInput(format!("pair ({s}, {t}) out of range")));
        }
        in_s[s * p + t] = true;
        in_s[t * p + s] = true;
    }
    let s_idx: Vec<(usize, usize)> = (0..p * p)
        .filter(|&k| in_s[k])
        .map(|k| (k / p, k % p))
        .collect();
    let c_idx: Vec<(usize, usize)> = (0..p * p)
        .filter(|&k| !in_s[k])
        .map(|k| (k / p, k % p))
        .collect();
    if c_idx.is_empty() {
        return Ok(1.0);
    }
    let kron = |(i, j): (usize, usize), (k, l): (usize, usize)| sigma[(i, k)] * sigma[(j, l)];
    let g_ss = DMatrix::from_fn(s_idx.len(), s_idx.len(), |a, b| kron(s_idx[a], s_idx[b]));
    let g_sc = DMatrix::from_fn(s_idx.len(), c_idx.len(), |a, b| kron(s_idx[a], c_idx[b]));
    let lu = g_ss.lu();
    // Γ_SS is symmetric, so the rows Γ_eS Γ_SS⁻¹ are the columns of Γ_SS⁻¹ Γ_SSᶜ.
    let x = lu.solve(&g_sc).ok_or(Error::SingularSubmatrix)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSubmatrix);
    }
    let worst = x
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(1.0 - worst)
}

/// Rounds like `{:.precision$}` but never prints a negative zero.
fn fixed(v: f64, precision: usize) -> String {
    let s = format!("{v:.precision$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// Fixed-width rendering of a labeled square matrix.
pub fn format_matrix(labels: &[String], m: &DMatrix<f64>, precision: usize) -> String {
    let width = m
        .iter()
        .map(|v| fixed(*v, precision).len())
        .chain(labels.iter().map(|l| l.len()))
        .max()
        .unwrap_or(1)
        + 2;
    let lw = labels.iter().map(|l| l.len()).max().unwrap_or(0);
    let mut out = String::new();
    let _ = write!(out, "{:lw$}", "");
    for l in labels {
        let _ = write!(out, "{l:>width$}");
    }
    out.push('\n');
    for (i, l) in labels.iter().enumerate() {
        let _ = write!(out, "{l:lw$}");
        for j in 0..m.ncols() {
            let _ = write!(out, "{:>width$}", fixed(m[(i, j)], precision));
        }
        out.push('\n');
    }
    out
}
