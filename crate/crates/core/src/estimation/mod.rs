//! Covariance estimators, the graphical and modified Lasso solvers, and
//! graph selection by thresholding or nodewise regression.

mod covariance;
mod glasso;
mod lasso;
mod selection;

pub use covariance::{
    corrected_covariance_missing, empirical_correlation, nodewise_pair, population_correlation,
    sample_covariance, CovarianceEstimate, Moments, PopulationMoments, Provenance, RegressionPair,
    SampleMoments,
};
pub use glasso::{
    glasso_objective, graphical_lasso_solve, kkt_residual, GlassoOptions, GlassoSolution,
    GlassoTraceRow,
};
pub use lasso::{
    default_radius, lasso_objective, modified_lasso, modified_lasso_solve, project_l1_ball,
    ridge_l1_norm, soft_threshold, LassoOptions, LassoSolution,
};
pub use selection::{
    candidate_set, combine_neighborhoods, estimate_graph, select_corr_decay, select_glasso,
    select_nodewise_general, select_nodewise_tree, threshold_edges, CandidateRule, CombineMode,
    CorrelationDecayParams, EdgeEstimate, EstimatorConfig, GlassoSelection, Method, NodeEstimate,
    NodewiseMethod, NodewiseOptions, Penalty, PenaltyParams, PenaltyRule,
};
