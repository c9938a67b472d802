//! Experiment drivers: population-level verification runs and Monte-Carlo
//! phase-transition sweeps, with their CSV formats.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    estimate_graph, CandidateRule, CombineMode, EstimatorConfig, GlassoOptions, LassoOptions,
    Method, NodewiseOptions, Penalty, PenaltyParams, PenaltyRule, SampleMoments,
};
use crate::graph::{
    build_junction_tree, dino, generate_graph, triangulate, Graph, GraphFamily, GraphFamilySpec,
    JunctionTree, VarSet,
};
use crate::mrf::{DiscreteMrf, StatisticBasis};
use crate::population::{
    basis_covers_separators, format_matrix, generalized_covariance, inverse_and_blocks,
    verify_basis_structure, StructureReport, ZERO_TOL,
};
use crate::sampling::{corrupt_missing, Sampler, SamplerConfig};

/// Header of the phase-transition CSV.
pub const RESULTS_HEADER: [&str; 9] = [
    "family",
    "p",
    "n",
    "n_over_logp",
    "rho",
    "method",
    "success_rate",
    "trials",
    "mean_runtime_ms",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSection {
    #[serde(flatten)]
    pub family: GraphFamily,
    /// Graph sizes to sweep. May be omitted for the dino fixture.
    #[serde(default)]
    pub p: Vec<usize>,
}

/// Ising weights. Exactly one of `edge` and `edge_over_hub_degree` must be
/// set; the latter gives edge weight `c / d` for a star with hub degree `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    #[serde(default = "default_node_weight")]
    pub node: f64,
    #[serde(default)]
    pub edge: Option<f64>,
    #[serde(default)]
    pub edge_over_hub_degree: Option<f64>,
}

fn default_node_weight() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub name: Method,
    #[serde(default)]
    pub combine: CombineMode,
    /// Degree bound `d`; defaults to the true maximum degree of each graph.
    #[serde(default)]
    pub degree_bound: Option<usize>,
    #[serde(default = "default_lambda_scale")]
    pub lambda_scale: f64,
    #[serde(default = "default_tau_scale")]
    pub tau_scale: f64,
    /// Fixed levels override the scaling rule; both must be given.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    /// Candidate threshold `κ` for `corr_decay`; without it the top
    /// `prescreen` vertices are kept.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Prescreen size for `corr_decay`; defaults to `⌊2.5 d⌋`.
    #[serde(default)]
    pub prescreen: Option<usize>,
    #[serde(default = "default_feature_cap")]
    pub feature_cap: usize,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

fn default_lambda_scale() -> f64 {
    PenaltyRule::default().lambda_scale
}

fn default_tau_scale() -> f64 {
    PenaltyRule::default().tau_scale
}

fn default_feature_cap() -> usize {
    NodewiseOptions::default().feature_cap
}

impl MethodSection {
    pub fn new(name: Method) -> Self {
        MethodSection {
            name,
            combine: CombineMode::Or,
            degree_bound: None,
            lambda_scale: default_lambda_scale(),
            tau_scale: default_tau_scale(),
            lambda: None,
            tau: None,
            radius: None,
            kappa: None,
            prescreen: None,
            feature_cap: default_feature_cap(),
            max_iter: None,
        }
    }

    pub fn penalty(&self) -> Penalty {
        match (self.lambda, self.tau) {
            (Some(lambda), Some(tau)) => Penalty::Fixed(PenaltyParams {
                lambda,
                tau,
                radius: self.radius,
            }),
            _ => Penalty::Rule(PenaltyRule {
                lambda_scale: self.lambda_scale,
                tau_scale: self.tau_scale,
            }),
        }
    }

    /// Estimator settings for a graph whose true maximum degree is
    /// `true_degree`.
    pub fn estimator(&self, true_degree: usize) -> EstimatorConfig {
        let d = self.degree_bound.unwrap_or(true_degree).max(1);
        let mut penalty = self.penalty();
        if let (Penalty::Rule(_), Some(_)) = (&penalty, self.radius) {
            log::warn!("radius is only used with fixed lambda and tau");
        }
        if let Penalty::Fixed(p) = &mut penalty {
            p.radius = self.radius;
        }
        let mut lasso = LassoOptions::default();
        let mut glasso = GlassoOptions::default();
        if let Some(it) = self.max_iter {
            lasso.max_iter = it;
            glasso.max_iter = it;
        }
        EstimatorConfig {
            method: self.name,
            penalty,
            combine: self.combine,
            candidates: match (self.kappa, self.prescreen) {
                (Some(kappa), _) => CandidateRule::Threshold { kappa },
                (None, Some(k)) => CandidateRule::TopK { k },
                (None, None) => CandidateRule::prescreen(d),
            },
            nodewise: NodewiseOptions {
                degree_bound: d,
                feature_cap: self.feature_cap,
                lasso,
            },
            glasso,
        }
    }
}

/// Sample-size grid: either absolute `n` values or rescaled `n / log p`
/// values (natural log), plus the missing-data fractions and trial count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default)]
    pub n_over_logp: Option<Vec<f64>>,
    #[serde(default = "default_rho")]
    pub rho: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_rho() -> Vec<f64> {
    vec![0.0]
}

fn default_trials() -> usize {
    100
}

/// A phase-transition experiment, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub graph: GraphSection,
    pub weights: WeightSection,
    pub method: MethodSection,
    pub grid: GridSection,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidSpec(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Graph sizes, defaulting to 13 for the dino fixture.
    pub fn sizes(&self) -> Vec<usize> {
        if self.graph.p.is_empty() && self.graph.family == GraphFamily::Dino {
            vec![13]
        } else {
            self.graph.p.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        let sizes = self.sizes();
        if sizes.is_empty() {
            return bad("graph.p must list at least one size".into());
        }
        for &p in &sizes {
            GraphFamilySpec::new(self.graph.family.clone(), p).validate()?;
            if p < 2 {
                return bad("graph.p must be at least 2".into());
            }
        }
        match (self.weights.edge, self.weights.edge_over_hub_degree) {
            (Some(_), None) => {}
            (None, Some(_)) if matches!(self.graph.family, GraphFamily::Star { .. }) => {}
            (None, Some(_)) => return bad("edge_over_hub_degree needs the star family".into()),
            _ => {
                return bad(
                    "set exactly one of weights.edge and weights.edge_over_hub_degree".into(),
                )
            }
        }
        if self.grid.trials == 0 {
            return bad("grid.trials must be at least 1".into());
        }
        match (&self.grid.n, &self.grid.n_over_logp) {
            (Some(n), None) if !n.is_empty() && n.iter().all(|&v| v > 0) => {}
            (None, Some(r)) if !r.is_empty() && r.iter().all(|&v| v > 0.0 && v.is_finite()) => {}
            _ => {
                return bad(
                    "set exactly one nonempty positive grid: grid.n or grid.n_over_logp".into(),
                )
            }
        }
        if self.grid.rho.is_empty() || self.grid.rho.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("grid.rho must be a nonempty list of values in [0, 1)".into());
        }
        if self.method.lambda.is_some() != self.method.tau.is_some() {
            return bad("method.lambda and method.tau must be set together".into());
        }
        self.method.penalty().resolve(2, Some(1))?;
        Ok(())
    }

    /// Grid cells ordered by `p`, then `ρ`, then `n`, so each curve is
    /// contiguous.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for p in self.sizes() {
            let log_p = (p as f64).ln();
            let ns: Vec<usize> = match (&self.grid.n, &self.grid.n_over_logp) {
                (Some(n), _) => n.clone(),
                (None, Some(r)) => r
                    .iter()
                    .map(|c| (c * log_p).round().max(1.0) as usize)
                    .collect(),
                (None, None) => Vec::new(),
            };
            for &rho in &self.grid.rho {
                for &n in &ns {
                    out.push(Cell {
                        index: out.len(),
                        p,
                        n,
                        rho,
                    });
                }
            }
        }
        out
    }

    fn edge_weight(&self, spec: &GraphFamilySpec) -> f64 {
        match (self.weights.edge, self.weights.edge_over_hub_degree) {
            (Some(w), _) => w,
            (None, Some(c)) => c / spec.star_hub_degree() as f64,
            (None, None) => unreachable!("validated"),
        }
    }

    fn family_is_random(&self) -> bool {
        matches!(self.graph.family, GraphFamily::ErdosRenyi { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub p: usize,
    pub n: usize,
    pub rho: f64,
}

impl Cell {
    pub fn n_over_logp(&self) -> f64 {
        self.n as f64 / (self.p as f64).ln()
    }
}

/// Seeds a trial from the cell's contents rather than its position, so
/// adding grid cells leaves other cells' streams unchanged.
pub fn trial_rng(master: u64, cell: &Cell, trial: usize) -> ChaCha8Rng {
    let mut h = master;
    for word in [cell.p as u64, cell.n as u64, cell.rho.to_bits()] {
        h = splitmix(h ^ word);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    rng.set_stream(trial as u64);
    rng
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Aggregated outcome for one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRow {
    pub family: String,
    pub p: usize,
    pub n: usize,
    pub n_over_logp: f64,
    pub rho: f64,
    pub method: String,
    pub success_count: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_runtime_ms: f64,
    /// Trials whose solver returned an error (counted as failures).
    pub solver_failures: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub lambda_const: f64,
    pub tau_const: f64,
    pub penalty: String,
    pub combine: String,
}

#[derive(Serialize, Deserialize)]
struct ResultRecord {
    family: String,
    p: usize,
    n: usize,
    n_over_logp: f64,
    rho: f64,
    method: String,
    success_rate: f64,
    trials: usize,
    mean_runtime_ms: f64,
}

#[derive(Serialize)]
struct DetailRecord<'a> {
    family: &'a str,
    p: usize,
    n: usize,
    rho: f64,
    method: &'a str,
    penalty: &'a str,
    lambda_const: f64,
    tau_const: f64,
    combine: &'a str,
    success_count: usize,
    trials: usize,
    solver_failures: usize,
    mean_precision: f64,
    mean_recall: f64,
}

impl PhaseRow {
    fn record(&self) -> ResultRecord {
        ResultRecord {
            family: self.family.clone(),
            p: self.p,
            n: self.n,
            n_over_logp: self.n_over_logp,
            rho: self.rho,
            method: self.method.clone(),
            success_rate: self.success_rate,
            trials: self.trials,
            mean_runtime_ms: (self.mean_runtime_ms * 1000.0).round() / 1000.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseCurve {
    pub rows: Vec<PhaseRow>,
}

/// One `(p, ρ)` curve's 0.5 crossing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveCrossing {
    pub p: usize,
    pub rho: f64,
    pub crossing: Option<f64>,
}

impl PhaseCurve {
    /// Rows of the curve for `(p, ρ)`, sorted by `n`.
    pub fn curve(&self, p: usize, rho: f64) -> Vec<&PhaseRow> {
        let mut rows: Vec<&PhaseRow> = self
            .rows
            .iter()
            .filter(|r| r.p == p && r.rho == rho)
            .collect();
        rows.sort_by_key(|r| r.n);
        rows
    }

    pub fn crossings(&self) -> Vec<CurveCrossing> {
        let mut keys: Vec<(usize, f64)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|&(p, rho)| p == r.p && rho == r.rho) {
                keys.push((r.p, r.rho));
            }
        }
        keys.into_iter()
            .map(|(p, rho)| {
                let pts: Vec<(f64, f64)> = self
                    .curve(p, rho)
                    .iter()
                    .map(|r| (r.n_over_logp, r.success_rate))
                    .collect();
                CurveCrossing {
                    p,
                    rho,
                    crossing: crossing(&pts, 0.5),
                }
            })
            .collect()
    }
}

/// First `x` where the piecewise-linear curve through `points` (sorted by
/// `x`) rises through `level`. `None` when it never does or already
/// starts at or above it.
pub fn crossing(points: &[(f64, f64)], level: f64) -> Option<f64> {
    if points.first().is_none_or(|&(_, y)| y >= level) {
        return None;
    }
    points.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        (y0 < level && y1 >= level).then(|| x0 + (level - y0) * (x1 - x0) / (y1 - y0))
    })
}

/// Writes the fixed-header results CSV.
pub fn emit_results<W: Write>(curve: &PhaseCurve, w: W) -> Result<()> {
    let mut out = ResultsWriter::new(w)?;
    for row in &curve.rows {
        out.write(row)?;
    }
    out.finish()
}

pub fn emit_results_path(curve: &PhaseCurve, path: impl AsRef<Path>) -> Result<()> {
    emit_results(curve, std::fs::File::create(path)?)
}

/// Streams result rows as they complete.
pub struct ResultsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(RESULTS_HEADER)?;
        Ok(ResultsWriter { inner })
    }

    pub fn write(&mut self, row: &PhaseRow) -> Result<()> {
        self.inner.serialize(row.record())?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Reads a results CSV. Columns outside the fixed header come back as
/// defaults; `success_count` is recovered from the rate.
pub fn read_results<R: Read>(r: R) -> Result<PhaseCurve> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {}", header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        let r: ResultRecord = rec?;
        rows.push(PhaseRow {
            success_count: (r.success_rate * r.trials as f64).round() as usize,
            family: r.family,
            p: r.p,
            n: r.n,
            n_over_logp: r.n_over_logp,
            rho: r.rho,
            method: r.method,
            trials: r.trials,
            success_rate: r.success_rate,
            mean_runtime_ms: r.mean_runtime_ms,
            solver_failures: 0,
            mean_precision: f64::NAN,
            mean_recall: f64::NAN,
            lambda_const: f64::NAN,
            tau_const: f64::NAN,
            penalty: String::new(),
            combine: String::new(),
        });
    }
    Ok(PhaseCurve { rows })
}

/// Companion CSV with the penalty constants, solver failures and partial
/// recovery metrics for each cell.
pub fn emit_details<W: Write>(curve: &PhaseCurve, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in &curve.rows {
        out.serialize(DetailRecord {
            family: &r.family,
            p: r.p,
            n: r.n,
            rho: r.rho,
            method: &r.method,
            penalty: &r.penalty,
            lambda_const: r.lambda_const,
            tau_const: r.tau_const,
            combine: &r.combine,
            success_count: r.success_count,
            trials: r.trials,
            solver_failures: r.solver_failures,
            mean_precision: r.mean_precision,
            mean_recall: r.mean_recall,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn family_name(family: &GraphFamily) -> &'static str {
    match family {
        GraphFamily::Chain => "chain",
        GraphFamily::Cycle => "cycle",
        GraphFamily::Grid2d => "grid2d",
        GraphFamily::ErdosRenyi { .. } => "erdos_renyi",
        GraphFamily::Star { .. } => "star",
        GraphFamily::Dino => "dino",
        GraphFamily::Custom(_) => "custom",
    }
}

/// Graph, model and sampler for one trial.
struct Instance {
    graph: Graph,
    sampler: Sampler,
    estimator: EstimatorConfig,
}

impl Instance {
    fn new(cfg: &ExperimentConfig, spec: &GraphFamilySpec, graph: Graph) -> Result<Self> {
        let model = DiscreteMrf::ising(&graph, cfg.weights.node, cfg.edge_weight(spec));
        let sampler = Sampler::new(&model, &cfg.sampler)?;
        let estimator = cfg.method.estimator(graph.max_degree());
        Ok(Instance {
            graph,
            sampler,
            estimator,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct TrialOutcome {
    success: bool,
    failed: bool,
    precision: f64,
    recall: f64,
    runtime_ms: f64,
}

fn run_trial(instance: &Instance, cell: &Cell, rng: &mut ChaCha8Rng) -> Result<TrialOutcome> {
    let start = Instant::now();
    let mut data = instance.sampler.sample(cell.n, rng)?;
    if cell.rho > 0.0 {
        data = corrupt_missing(&data, cell.rho, rng)?;
    }
    let moments = SampleMoments::new(&data);
    let est = estimate_graph(&moments, &instance.estimator)?;
    let (precision, recall) = est.precision_recall(&instance.graph);
    Ok(TrialOutcome {
        success: est.recovers(&instance.graph),
        failed: false,
        precision,
        recall,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs every cell, calling `on_row` in cell order as each finishes.
/// Trials run in parallel; solver errors count as failures and are
/// logged.
pub fn run_phase_transition_with(
    cfg: &ExperimentConfig,
    mut on_row: impl FnMut(&PhaseRow) -> Result<()>,
) -> Result<PhaseCurve> {
    cfg.validate()?;
    let family = family_name(&cfg.graph.family).to_string();
    let method = cfg.method.name.name().to_string();
    let (penalty, lambda_const, tau_const) = match cfg.method.penalty() {
        Penalty::Fixed(p) => ("fixed", p.lambda, p.tau),
        Penalty::Rule(r) => ("rule", r.lambda_scale, r.tau_scale),
    };
    let combine = match cfg.method.combine {
        CombineMode::And => "and",
        CombineMode::Or => "or",
    };
    let mut rows = Vec::new();
    let mut cached: Option<(usize, Instance)> = None;
    for cell in cfg.cells() {
        let spec = GraphFamilySpec::new(cfg.graph.family.clone(), cell.p);
        if !cfg.family_is_random() && cached.as_ref().is_none_or(|(p, _)| *p != cell.p) {
            cached = Some((cell.p, Instance::new(cfg, &spec, spec.build()?)?));
        }
        let outcomes: Vec<TrialOutcome> = (0..cfg.grid.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = trial_rng(cfg.seed, &cell, trial);
                let fresh;
                let instance = match &cached {
                    Some((_, inst)) => inst,
                    None => {
                        let graph = generate_graph(&spec, &mut rng);
                        match graph.and_then(|g| Instance::new(cfg, &spec, g)) {
                            Ok(inst) => {
                                fresh = inst;
                                &fresh
                            }
                            Err(e) => {
                                log::warn!("cell {} trial {trial}: {e}", cell.index);
                                return TrialOutcome {
                                    failed: true,
                                    ..Default::default()
                                };
                            }
                        }
                    }
                };
                run_trial(instance, &cell, &mut rng).unwrap_or_else(|e| {
                    log::warn!("cell {} trial {trial}: {e}", cell.index);
                    TrialOutcome {
                        failed: true,
                        ..Default::default()
                    }
                })
            })
            .collect();
        let trials = outcomes.len();
        let mean =
            |f: fn(&TrialOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / trials as f64;
        let success_count = outcomes.iter().filter(|o| o.success).count();
        let row = PhaseRow {
            family: family.clone(),
            p: cell.p,
            n: cell.n,
            n_over_logp: cell.n_over_logp(),
            rho: cell.rho,
            method: method.clone(),
            success_count,
            trials,
            success_rate: success_count as f64 / trials as f64,
            mean_runtime_ms: mean(|o| o.runtime_ms),
            solver_failures: outcomes.iter().filter(|o| o.failed).count(),
            mean_precision: mean(|o| o.precision),
            mean_recall: mean(|o| o.recall),
            lambda_const,
            tau_const,
            penalty: penalty.to_string(),
            combine: combine.to_string(),
        };
        log::info!(
            "p={} n={} rho={} success={}/{}",
            row.p,
            row.n,
            row.rho,
            row.success_count,
            row.trials
        );
        on_row(&row)?;
        rows.push(row);
    }
    Ok(PhaseCurve { rows })
}

pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<PhaseCurve> {
    run_phase_transition_with(cfg, |_| Ok(()))
}

/// One term of a basis description.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisTerm {
    Vertices,
    /// Every clique of the triangulation.
    Cliques,
    /// Every nonempty subset of every junction-tree separator.
    Separators,
    /// A single extra set.
    Set(VarSet),
}

/// Basis description such as `vertices`, `vertices+sep:0,2` or `cliques`.
/// Terms are joined with `+`; `sep:` and `set:` both add one vertex set.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisSpec {
    pub terms: Vec<BasisTerm>,
}

impl std::str::FromStr for BasisSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for tok in s.split('+').map(str::trim) {
            let term = match tok {
                "vertices" | "V" => BasisTerm::Vertices,
                "cliques" => BasisTerm::Cliques,
                "separators" => BasisTerm::Separators,
                _ => {
                    let list = tok
                        .strip_prefix("sep:")
                        .or_else(|| tok.strip_prefix("set:"))
                        .ok_or_else(|| Error::InvalidSpec(format!("unknown basis term '{tok}'")))?;
                    let vs = list
                        .split(',')
                        .map(|v| v.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::InvalidSpec(format!("basis term '{tok}': {e}")))?;
                    if vs.is_empty() {
                        return Err(Error::InvalidSpec(format!("empty set in '{tok}'")));
                    }
                    BasisTerm::Set(VarSet::new(vs))
                }
            };
            terms.push(term);
        }
        Ok(BasisSpec { terms })
    }
}

impl BasisSpec {
    pub fn vertices() -> Self {
        BasisSpec {
            terms: vec![BasisTerm::Vertices],
        }
    }

    /// Extra sets, which the junction tree is forced to contain.
    pub fn extra_sets(&self) -> impl Iterator<Item = &VarSet> + '_ {
        self.terms.iter().filter_map(|t| match t {
            BasisTerm::Set(s) => Some(s),
            _ => None,
        })
    }

    /// Sets in graded-lex order without duplicates.
    pub fn sets(&self, jt: &JunctionTree) -> Vec<VarSet> {
        let mut out = BTreeSet::new();
        for t in &self.terms {
            match t {
                BasisTerm::Vertices => out.extend((0..jt.p()).map(VarSet::singleton)),
                BasisTerm::Cliques => out.extend(jt.all_cliques()),
                BasisTerm::Separators => {
                    for s in jt.separator_sets() {
                        out.extend(s.nonempty_subsets());
                    }
                }
                BasisTerm::Set(s) => {
                    out.insert(s.clone());
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Junction tree for `graph` after completing every set in `forced`, so a
/// chosen separator survives triangulation.
pub fn junction_tree_with(graph: &Graph, forced: &[VarSet]) -> Result<JunctionTree> {
    let mut g = graph.clone();
    for set in forced {
        let vs = set.as_slice();
        for (i, &a) in vs.iter().enumerate() {
            for &b in &vs[i + 1..] {
                g.add_edge(a, b)?;
            }
        }
    }
    build_junction_tree(&triangulate(&g).chordal)
}

/// Output of a population-level check.
#[derive(Clone, Debug)]
pub struct PopulationReport {
    pub labels: Vec<String>,
    pub mean: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub structure: StructureReport,
    /// Whether the basis covers every separator, so the checked zeros are
    /// guaranteed rather than merely tested.
    pub guaranteed: bool,
    pub fill_edges: Vec<(usize, usize)>,
    pub precision: usize,
}

impl PopulationReport {
    pub fn passed(&self) -> bool {
        self.structure.passed()
    }
}

impl fmt::Display for PopulationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precision;
        writeln!(f, "mean:")?;
        for (label, mu) in self.labels.iter().zip(self.mean.iter()) {
            writeln!(f, "  {label}: {mu:.p$}")?;
        }
        writeln!(f, "covariance:")?;
        writeln!(f, "{}", format_matrix(&self.labels, &self.sigma, p))?;
        writeln!(f, "inverse covariance:")?;
        writeln!(f, "{}", format_matrix(&self.labels, &self.gamma, p))?;
        if !self.fill_edges.is_empty() {
            writeln!(f, "fill edges: {:?}", self.fill_edges)?;
        }
        let s = &self.structure;
        writeln!(
            f,
            "structure: {} forbidden block(s), max forbidden {:.3e}, min allowed {:.3e} (scale {:.4e}, cond {:.3e})",
            s.forbidden_count(),
            s.max_forbidden(),
            s.min_allowed(),
            s.scale,
            s.condition_number
        )?;
        if !self.guaranteed {
            writeln!(
                f,
                "note: basis misses some separator subsets; zeros are not guaranteed"
            )?;
        }
        for v in s.violations() {
            writeln!(
                f,
                "violation: Γ({}, {}) scaled max {:.3e}",
                v.a, v.b, v.max_abs
            )?;
        }
        write!(f, "{}", if s.passed() { "PASS" } else { "FAIL" })
    }
}

/// Prints-ready population analysis: `μ`, `Σ` and `Γ` for `basis`, with
/// every block pair checked against the junction tree.
pub fn run_population_check(
    model: &DiscreteMrf,
    basis: &BasisSpec,
    precision: usize,
) -> Result<PopulationReport> {
    let graph = model.interaction_graph();
    let forced: Vec<VarSet> = basis.extra_sets().cloned().collect();
    let jt = junction_tree_with(&graph, &forced)?;
    let fill_edges: Vec<(usize, usize)> = jt
        .chordal_graph()
        .edges()
        .into_iter()
        .filter(|&(s, t)| !graph.has_edge(s, t))
        .collect();
    let basis = StatisticBasis::new(model.m(), basis.sets(&jt))?;
    let cov = generalized_covariance(model, &basis)?;
    let inv = inverse_and_blocks(&cov)?;
    let structure = verify_basis_structure(model, &jt, &basis, ZERO_TOL)?;
    Ok(PopulationReport {
        labels: basis.labels(),
        mean: cov.mean().clone(),
        sigma: cov.matrix().clone(),
        gamma: inv.gamma().clone(),
        guaranteed: basis_covers_separators(&basis, &jt),
        structure,
        fill_edges,
        precision,
    })
}

/// Graphs by name: `chainN`, `cycleN`, `starN`, `completeN`, `gridRxC`,
/// `dino`; anything else is read as a graph file.
pub fn named_graph(name: &str) -> Result<Graph> {
    let num = |prefix: &str| -> Option<usize> { name.strip_prefix(prefix)?.parse().ok() };
    let family = |f: GraphFamily, p: usize| GraphFamilySpec::new(f, p).build();
    if name == "dino" {
        return Ok(dino());
    }
    if let Some(p) = num("chain") {
        return family(GraphFamily::Chain, p);
    }
    if let Some(p) = num("cycle") {
        return family(GraphFamily::Cycle, p);
    }
    if let Some(p) = num("complete") {
        return Graph::complete(p);
    }
    if let Some(p) = num("star") {
        if p < 2 {
            return Err(Error::InvalidSpec(
                "a star needs at least 2 vertices".into(),
            ));
        }
        let edges: Vec<_> = (1..p).map(|t| (0, t)).collect();
        return Graph::from_edges(p, &edges);
    }
    if let Some((r, c)) = name.strip_prefix("grid").and_then(|s| s.split_once('x')) {
        if let (Ok(r), Ok(c)) = (r.parse(), c.parse()) {
            return Graph::grid(r, c);
        }
    }
    let path = Path::new(name);
    if path.exists() {
        return Graph::read_text(std::io::BufReader::new(std::fs::File::open(path)?));
    }
    Err(Error::InvalidSpec(format!("unknown graph '{name}'")))
}

/// A random seed for callers that did not fix one.
pub fn fresh_seed() -> u64 {
    rand::thread_rng().gen()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CHAIN: &str = r#"
seed = 7
[graph]
family = "chain"
p = [8]
[weights]
node = 0.1
edge = 0.6
[method]
name = "nodewise_tree"
[grid]
n = [50, 400]
trials = 4
"#;

    #[test]
    fn config_parses_and_validates() {
        let cfg = ExperimentConfig::from_toml_str(CHAIN).unwrap();
        assert_eq!(cfg.method.combine, CombineMode::Or);
        assert_eq!(cfg.grid.rho, vec![0.0]);
        assert_eq!(cfg.cells().len(), 2);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
        let zero = CHAIN.replace("trials = 4", "trials = 0");
        assert!(ExperimentConfig::from_toml_str(&zero).is_err());
        let both = CHAIN.replace("n = [50, 400]", "n = [50]\nn_over_logp = [3.0]");
        assert!(ExperimentConfig::from_toml_str(&both).is_err());
        let typo = CHAIN.replace("trials = 4", "trails = 4");
        assert!(ExperimentConfig::from_toml_str(&typo).is_err());
    }

    #[test]
    fn dino_defaults_to_thirteen() {
        let text = CHAIN.replace("family = \"chain\"\np = [8]", "family = \"dino\"");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.sizes(), vec![13]);
    }

    #[test]
    fn rescaled_grid() {
        let text = CHAIN.replace("n = [50, 400]", "n_over_logp = [10.0]");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.cells()[0].n, (10.0 * 8f64.ln()).round() as usize);
    }

    #[test]
    fn crossing_interpolates() {
        assert_eq!(crossing(&[(0.0, 0.0), (10.0, 1.0)], 0.5), Some(5.0));
        assert_eq!(crossing(&[(0.0, 0.6), (10.0, 1.0)], 0.5), None);
        assert_eq!(crossing(&[(0.0, 0.0), (10.0, 0.2)], 0.5), None);
        assert_eq!(crossing(&[(1.0, 0.1), (2.0, 0.5)], 0.5), Some(2.0));
    }

    #[test]
    fn trial_streams_depend_on_cell_contents() {
        let a = Cell {
            index: 0,
            p: 8,
            n: 100,
            rho: 0.0,
        };
        let b = Cell { index: 5, ..a };
        let x: u64 = trial_rng(1, &a, 3).gen();
        assert_eq!(x, trial_rng(1, &b, 3).gen::<u64>());
        assert_ne!(x, trial_rng(1, &a, 4).gen::<u64>());
        assert_ne!(x, trial_rng(2, &a, 3).gen::<u64>());
    }

    #[test]
    fn sweep_is_deterministic() {
        let cfg = ExperimentConfig::from_toml_str(CHAIN).unwrap();
        let a = run_phase_transition(&cfg).unwrap();
        let b = run_phase_transition(&cfg).unwrap();
        let strip = |c: &PhaseCurve| {
            c.rows
                .iter()
                .map(|r| (r.n, r.success_count, r.mean_precision.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.rows.len(), 2);
    }

    #[test]
    fn results_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(CHAIN).unwrap();
        let curve = run_phase_transition(&cfg).unwrap();
        let mut buf = Vec::new();
        emit_results(&curve, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "family,p,n,n_over_logp,rho,method,success_rate,trials,mean_runtime_ms\n"
        ));
        assert_eq!(text.lines().count(), 3);
        let back = read_results(&buf[..]).unwrap();
        for (x, y) in back.rows.iter().zip(&curve.rows) {
            assert_eq!(
                (x.p, x.n, x.success_count, x.trials),
                (y.p, y.n, y.success_count, y.trials)
            );
            assert_eq!(x.n_over_logp, y.n_over_logp);
        }
        let mut empty = Vec::new();
        emit_results(&PhaseCurve::default(), &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().lines().count(), 1);
    }

    #[test]
    fn basis_spec_parsing() {
        let b: BasisSpec = "vertices+sep:0,2".parse().unwrap();
        assert_eq!(
            b.terms,
            vec![BasisTerm::Vertices, BasisTerm::Set(VarSet::from([0, 2]))]
        );
        assert!("vertices+bogus".parse::<BasisSpec>().is_err());
        assert!("sep:a".parse::<BasisSpec>().is_err());
    }

    #[test]
    fn population_check_cycle() {
        let model = DiscreteMrf::ising(&named_graph("cycle4").unwrap(), 0.1, 2.0);
        let plain = run_population_check(&model, &BasisSpec::vertices(), 2).unwrap();
        assert!(!plain.passed());
        assert!(!plain.guaranteed);
        let aug = run_population_check(&model, &"vertices+sep:0,2".parse().unwrap(), 2).unwrap();
        assert!(aug.passed() && aug.guaranteed);
        assert!(aug.gamma[(1, 3)].abs() < 1e-8 * aug.structure.scale);
        assert!(aug.to_string().ends_with("PASS"));
    }

    #[test]
    fn named_graphs() {
        assert_eq!(named_graph("chain4").unwrap().edge_count(), 3);
        assert_eq!(named_graph("grid2x3").unwrap().edge_count(), 7);
        assert_eq!(named_graph("dino").unwrap().edge_count(), 15);
        assert!(named_graph("nonsense").is_err());
    }
}
