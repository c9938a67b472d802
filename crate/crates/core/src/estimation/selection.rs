use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariance::{nodewise_pair, Moments};
use super::glasso::{graphical_lasso_solve, GlassoOptions, GlassoSolution};
use super::lasso::{default_radius, modified_lasso_solve, LassoOptions};
use crate::error::{Error, Result};
use crate::graph::{count_subsets_up_to, subsets_up_to, Graph, VarSet};

/// Regularization and threshold levels for one estimation problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub lambda: f64,
    pub tau: f64,
    /// ℓ1-ball radius for the modified Lasso; `None` uses the ridge-based
    /// default.
    #[serde(default)]
    pub radius: Option<f64>,
}

impl PenaltyParams {
    pub fn new(lambda: f64, tau: f64) -> Self {
        PenaltyParams {
            lambda,
            tau,
            radius: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let negative = |x: f64| x.is_nan() || x < 0.0;
        if negative(self.lambda)
            || negative(self.tau)
            || self.radius.is_some_and(|r| r.is_nan() || r <= 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "invalid penalty parameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Sample-size scaling `λ = c_λ √(log p̃ / n)`, `τ = c_τ √(log p̃ / n)`,
/// where `p̃` is the number of regression features (or `p` for the
/// graphical Lasso).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyRule {
    pub lambda_scale: f64,
    pub tau_scale: f64,
}

impl Default for PenaltyRule {
    fn default() -> Self {
        PenaltyRule {
            lambda_scale: 0.5,
            tau_scale: 1.0,
        }
    }
}

impl PenaltyRule {
    pub fn params(&self, features: usize, n: usize) -> PenaltyParams {
        let rate = ((features.max(2) as f64).ln() / n.max(1) as f64).sqrt();
        PenaltyParams::new(self.lambda_scale * rate, self.tau_scale * rate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Fixed(PenaltyParams),
    Rule(PenaltyRule),
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::Rule(PenaltyRule::default())
    }
}

impl Penalty {
    /// Concrete levels for a problem with `features` regressors. A rule
    /// needs a sample size, so population moments require fixed levels.
    pub fn resolve(&self, features: usize, n: Option<usize>) -> Result<PenaltyParams> {
        let params = match (self, n) {
            (Penalty::Fixed(p), _) => *p,
            (Penalty::Rule(r), Some(n)) => r.params(features, n),
            (Penalty::Rule(_), None) => {
                return Err(Error::InvalidInput(
                    "a sample-size penalty rule needs data; use fixed levels".into(),
                ))
            }
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    And,
    #[default]
    Or,
}

/// Estimated edge set with supporting statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeEstimate {
    pub p: usize,
    /// Pairs `(s, t)` with `s < t`.
    pub edges: BTreeSet<(usize, usize)>,
    /// Statistic magnitude per candidate pair (kept and dropped).
    pub magnitudes: BTreeMap<(usize, usize), f64>,
    pub neighborhoods: Option<Vec<BTreeSet<usize>>>,
    pub warnings: Vec<String>,
}

impl EdgeEstimate {
    pub fn graph(&self) -> Graph {
        let edges: Vec<_> = self.edges.iter().copied().collect();
        Graph::from_edges(self.p.max(1), &edges).expect("estimated edges are in range")
    }

    /// Exact edge-set equality with `truth`.
    pub fn recovers(&self, truth: &Graph) -> bool {
        self.edges == truth.edge_set()
    }

    /// `(precision, recall)`; an empty estimate has precision 1 and an
    /// empty truth has recall 1.
    pub fn precision_recall(&self, truth: &Graph) -> (f64, f64) {
        let t = truth.edge_set();
        let hit = self.edges.intersection(&t).count() as f64;
        let precision = if self.edges.is_empty() {
            1.0
        } else {
            hit / self.edges.len() as f64
        };
        let recall = if t.is_empty() {
            1.0
        } else {
            hit / t.len() as f64
        };
        (precision, recall)
    }
}

/// Keeps off-diagonal entries with `|Θ_st| > τ`.
pub fn threshold_edges(theta: &DMatrix<f64>, tau: f64) -> EdgeEstimate {
    let p = theta.nrows();
    let mut edges = BTreeSet::new();
    let mut magnitudes = BTreeMap::new();
    for s in 0..p {
        for t in s + 1..p {
            let mag = theta[(s, t)].abs().max(theta[(t, s)].abs());
            magnitudes.insert((s, t), mag);
            if mag > tau {
                edges.insert((s, t));
            }
        }
    }
    EdgeEstimate {
        p,
        edges,
        magnitudes,
        neighborhoods: None,
        warnings: Vec::new(),
    }
}

#[derive(Clone, Debug)]
pub struct GlassoSelection {
    pub edges: EdgeEstimate,
    pub solution: GlassoSolution,
    pub params: PenaltyParams,
}

/// Graphical Lasso on the (corrected) vertex covariance, then
/// thresholding at `τ`.
pub fn select_glasso<M: Moments + ?Sized>(
    moments: &M,
    penalty: &Penalty,
    opts: &GlassoOptions,
) -> Result<GlassoSelection> {
    let params = penalty.resolve(moments.p(), moments.sample_size())?;
    let sigma = moments.vertex_covariance()?;
    let solution = graphical_lasso_solve(&sigma, params.lambda, opts)?;
    let mut edges = threshold_edges(&solution.theta, params.tau);
    if solution.shift > 0.0 {
        edges.warnings.push(format!(
            "input shifted by {:.3e} to keep the objective bounded",
            solution.shift
        ));
    }
    Ok(GlassoSelection {
        edges,
        solution,
        params,
    })
}

/// How the correlation-decay method picks its candidate set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRule {
    /// Vertices with `r̂_C(s, t) > κ / 2`.
    Threshold { kappa: f64 },
    /// The `k` most correlated vertices, ties to the lower index.
    TopK { k: usize },
}

impl CandidateRule {
    /// The prescreen of size `⌊2.5 d⌋`.
    pub fn prescreen(d: usize) -> Self {
        CandidateRule::TopK {
            k: (2.5 * d as f64).floor() as usize,
        }
    }
}

/// Correlation-decay constants: `κ` bounds edge correlations from below
/// and `ζ` is the decay rate in graph distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDecayParams {
    pub kappa: f64,
    pub zeta: f64,
    pub d: usize,
}

impl CorrelationDecayParams {
    /// `d^{log(4/κ)/ζ}`, the largest candidate set the decay allows.
    pub fn candidate_bound(&self) -> f64 {
        (self.d as f64).powf((4.0 / self.kappa).ln() / self.zeta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NodewiseMethod {
    /// Singleton features only.
    Tree,
    /// All products of at most `d` other vertices.
    General,
    /// Singletons plus products over a correlation-screened candidate set.
    CorrDecay { rule: CandidateRule },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodewiseOptions {
    pub degree_bound: usize,
    pub feature_cap: usize,
    pub lasso: LassoOptions,
}

impl Default for NodewiseOptions {
    fn default() -> Self {
        NodewiseOptions {
            degree_bound: 2,
            feature_cap: 20_000,
            lasso: LassoOptions::default(),
        }
    }
}

/// Neighborhood estimate for a single vertex.
#[derive(Clone, Debug)]
pub struct NodeEstimate {
    pub target: usize,
    pub neighborhood: BTreeSet<usize>,
    pub beta: DVector<f64>,
    pub labels: Vec<VarSet>,
    pub params: PenaltyParams,
    pub radius: f64,
    pub candidates: Option<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl NodeEstimate {
    fn empty(target: usize, params: PenaltyParams, warning: String) -> Self {
        NodeEstimate {
            target,
            neighborhood: BTreeSet::new(),
            beta: DVector::zeros(0),
            labels: Vec::new(),
            params,
            radius: 0.0,
            candidates: Some(Vec::new()),
            warnings: vec![warning],
        }
    }
}

fn regress<M: Moments + ?Sized>(
    moments: &M,
    s: usize,
    features: Vec<VarSet>,
    penalty: &Penalty,
    opts: &NodewiseOptions,
) -> Result<NodeEstimate> {
    let params = penalty.resolve(features.len(), moments.sample_size())?;
    if features.is_empty() {
        return Ok(NodeEstimate {
            target: s,
            neighborhood: BTreeSet::new(),
            beta: DVector::zeros(0),
            labels: features,
            params,
            radius: 0.0,
            candidates: None,
            warnings: Vec::new(),
        });
    }
    let pair = nodewise_pair(moments, s, &features)?;
    let mut warnings = Vec::new();
    if !pair.constant_columns.is_empty() {
        warnings.push(format!(
            "node {s}: {} constant predictor(s)",
            pair.constant_columns.len()
        ));
    }
    let radius = params
        .radius
        .unwrap_or_else(|| default_radius(&pair, opts.degree_bound));
    let sol = modified_lasso_solve(&pair, params.lambda, radius, &opts.lasso)?;
    let neighborhood = pair
        .labels
        .iter()
        .zip(sol.beta.iter())
        .filter(|(_, b)| b.abs() > params.tau)
        .flat_map(|(f, _)| f.iter())
        .collect();
    Ok(NodeEstimate {
        target: s,
        neighborhood,
        beta: sol.beta,
        labels: pair.labels,
        params,
        radius,
        candidates: None,
        warnings,
    })
}

fn others(p: usize, s: usize) -> Vec<usize> {
    (0..p).filter(|&v| v != s).collect()
}

/// Nodewise regression on singleton features, for trees.
pub fn select_nodewise_tree<M: Moments + ?Sized>(
    moments: &M,
    s: usize,
    penalty: &Penalty,
    opts: &NodewiseOptions,
) -> Result<NodeEstimate> {
    check_target(moments, s)?;
    let features = others(moments.p(), s)
        .into_iter()
        .map(VarSet::singleton)
        .collect();
    regress(moments, s, features, penalty, opts)
}

/// Nodewise regression on all products of at most `d` other vertices. The
/// neighborhood is every vertex of a surviving feature.
pub fn select_nodewise_general<M: Moments + ?Sized>(
    moments: &M,
    s: usize,
    penalty: &Penalty,
    opts: &NodewiseOptions,
) -> Result<NodeEstimate> {
    check_target(moments, s)?;
    let rest = others(moments.p(), s);
    let count = count_subsets_up_to(rest.len(), opts.degree_bound);
    if count > opts.feature_cap {
        return Err(Error::FeatureExplosion {
            count,
            cap: opts.feature_cap,
        });
    }
    let features = subsets_up_to(&rest, opts.degree_bound);
    regress(moments, s, features, penalty, opts)
}

/// Candidate vertices for the correlation-decay method, sorted.
pub fn candidate_set<M: Moments + ?Sized>(
    moments: &M,
    s: usize,
    rule: &CandidateRule,
) -> Vec<usize> {
    let scored: Vec<(usize, f64)> = others(moments.p(), s)
        .into_iter()
        .map(|t| (t, moments.correlation(s, t)))
        .collect();
    let mut out: Vec<usize> = match *rule {
        CandidateRule::Threshold { kappa } => scored
            .iter()
            .filter(|(_, r)| *r > kappa / 2.0)
            .map(|(t, _)| *t)
            .collect(),
        CandidateRule::TopK { k } => {
            let mut ranked = scored.clone();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.into_iter().take(k).map(|(t, _)| t).collect()
        }
    };
    out.sort_unstable();
    out
}

/// Correlation screening followed by regression on every singleton plus
/// products of at most `d` candidates. An empty candidate set yields an
/// empty neighborhood and a warning.
pub fn select_corr_decay<M: Moments + ?Sized>(
    moments: &M,
    s: usize,
    rule: &CandidateRule,
    penalty: &Penalty,
    opts: &NodewiseOptions,
) -> Result<NodeEstimate> {
    check_target(moments, s)?;
    let candidates = candidate_set(moments, s, rule);
    if candidates.is_empty() {
        let params = penalty.resolve(1, moments.sample_size())?;
        let msg = format!("node {s}: empty candidate set");
        log::warn!("{msg}");
        return Ok(NodeEstimate::empty(s, params, msg));
    }
    let count = moments.p() - 1 + count_subsets_up_to(candidates.len(), opts.degree_bound)
        - candidates.len();
    if count > opts.feature_cap {
        return Err(Error::FeatureExplosion {
            count,
            cap: opts.feature_cap,
        });
    }
    let mut features: Vec<VarSet> = others(moments.p(), s)
        .into_iter()
        .map(VarSet::singleton)
        .collect();
    features.extend(
        subsets_up_to(&candidates, opts.degree_bound)
            .into_iter()
            .filter(|f| f.len() >= 2),
    );
    let mut est = regress(moments, s, features, penalty, opts)?;
    est.candidates = Some(candidates);
    Ok(est)
}

fn check_target<M: Moments + ?Sized>(moments: &M, s: usize) -> Result<()> {
    if s >= moments.p() {
        return Err(Error::InvalidInput(format!(
            "vertex {s} out of range for p = {}",
            moments.p()
        )));
    }
    if moments.m() != 2 {
        return Err(Error::InvalidInput(
            "nodewise selection needs binary variables".into(),
        ));
    }
    Ok(())
}

/// Symmetrizes per-vertex neighborhoods.
pub fn combine_neighborhoods(neighborhoods: &[BTreeSet<usize>], mode: CombineMode) -> EdgeEstimate {
    let p = neighborhoods.len();
    let mut edges = BTreeSet::new();
    for s in 0..p {
        for t in s + 1..p {
            let st = neighborhoods[s].contains(&t);
            let ts = neighborhoods[t].contains(&s);
            let keep = match mode {
                CombineMode::And => st && ts,
                CombineMode::Or => st || ts,
            };
            if keep {
                edges.insert((s, t));
            }
        }
    }
    EdgeEstimate {
        p,
        edges,
        magnitudes: BTreeMap::new(),
        neighborhoods: Some(neighborhoods.to_vec()),
        warnings: Vec::new(),
    }
}

/// Graph-selection method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Glasso,
    NodewiseTree,
    NodewiseGeneral,
    CorrDecay,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Glasso => "glasso",
            Method::NodewiseTree => "nodewise_tree",
            Method::NodewiseGeneral => "nodewise_general",
            Method::CorrDecay => "corr_decay",
        }
    }
}

/// Everything [`estimate_graph`] needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub method: Method,
    pub penalty: Penalty,
    pub combine: CombineMode,
    /// Candidate rule for [`Method::CorrDecay`].
    pub candidates: CandidateRule,
    pub nodewise: NodewiseOptions,
    pub glasso: GlassoOptions,
}

impl EstimatorConfig {
    pub fn new(method: Method) -> Self {
        EstimatorConfig {
            method,
            penalty: Penalty::default(),
            combine: CombineMode::Or,
            candidates: CandidateRule::prescreen(2),
            nodewise: NodewiseOptions::default(),
            glasso: GlassoOptions::default(),
        }
    }
}

/// Runs the configured method over all vertices and returns the edge set.
pub fn estimate_graph<M: Moments + ?Sized>(
    moments: &M,
    cfg: &EstimatorConfig,
) -> Result<EdgeEstimate> {
    let node = |s| match cfg.method {
        Method::NodewiseTree => select_nodewise_tree(moments, s, &cfg.penalty, &cfg.nodewise),
        Method::NodewiseGeneral => select_nodewise_general(moments, s, &cfg.penalty, &cfg.nodewise),
        Method::CorrDecay => {
            select_corr_decay(moments, s, &cfg.candidates, &cfg.penalty, &cfg.nodewise)
        }
        Method::Glasso => unreachable!("handled below"),
    };
    if cfg.method == Method::Glasso {
        return Ok(select_glasso(moments, &cfg.penalty, &cfg.glasso)?.edges);
    }
    let mut neighborhoods = Vec::with_capacity(moments.p());
    let mut warnings = Vec::new();
    let mut magnitudes: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for s in 0..moments.p() {
        let est = node(s)?;
        for (f, b) in est.labels.iter().zip(est.beta.iter()) {
            for t in f.iter() {
                let key = (s.min(t), s.max(t));
                let e = magnitudes.entry(key).or_insert(0.0);
                *e = e.max(b.abs());
            }
        }
        warnings.extend(est.warnings);
        neighborhoods.push(est.neighborhood);
    }
    let mut out = combine_neighborhoods(&neighborhoods, cfg.combine);
    out.magnitudes = magnitudes;
    out.warnings = warnings;
    Ok(out)
}
