//! Training-free scores for a genome: expressivity (Zen-Score), trainability
//! (NTK eigenvalue ratio), cost (MACs, parameters) and block diversity.

mod diversity;
mod ntk;
mod zen;

pub use diversity::{diversity_from_counts, diversity_index, pairwise_sum, MAX_PAIRWISE_SUM};
pub use ntk::{
    condition_ratio, gram, jacobian, ntk_cond, ntk_cond_of, symmetric_eigenvalues, GraphFunction, LinearProbe,
    NtkResult, ParamFunction,
};
pub use zen::{zen_score, zen_score_single, ZenScore};

use rayon::prelude::*;

use crate::blocks::{build_graph_with_bins, cost_full_model_with_bins, INPUT_MULTIPLE};
use crate::error::{Error, Result};
use crate::events::DEFAULT_BINS;
use crate::genome::Genome;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreConfig {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    /// Scale of the input perturbation.
    pub noise_alpha: f64,
    /// Each seed draws one input batch and perturbation; scores are averaged.
    pub seeds: Vec<u64>,
    /// Seed of the network weights.
    pub weight_seed: u64,
    pub bins: usize,
    pub ntk_probe_count: usize,
    pub ntk_fd_step: f64,
    /// Graphs with more parameters skip the NTK.
    pub ntk_max_params: usize,
    /// Report `lambda_max / lambda_min` instead of `lambda_min / lambda_max`.
    pub ntk_reciprocal: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            batch: 8,
            height: 64,
            width: 64,
            noise_alpha: 0.01,
            seeds: vec![0, 1, 2, 3],
            weight_seed: 0,
            bins: DEFAULT_BINS,
            ntk_probe_count: 8,
            ntk_fd_step: 1e-3,
            ntk_max_params: 50_000,
            ntk_reciprocal: false,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch == 0 || self.bins == 0 || self.ntk_probe_count == 0 {
            return bad("batch, bins and ntk probe count must be positive");
        }
        if self.height == 0
            || self.width == 0
            || !self.height.is_multiple_of(INPUT_MULTIPLE)
            || !self.width.is_multiple_of(INPUT_MULTIPLE)
        {
            return bad("score resolution must be a positive multiple of 32");
        }
        if self.seeds.is_empty() {
            return bad("at least one score seed is required");
        }
        if !(self.noise_alpha > 0.0 && self.noise_alpha.is_finite())
            || self.ntk_fd_step.is_nan()
            || self.ntk_fd_step <= 0.0
        {
            return bad("noise alpha and finite-difference step must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProxyVector {
    pub zen: f64,
    pub macs: u64,
    pub params: u64,
    pub ntk_cond: Option<f64>,
    pub diversity: f64,
}

/// Score one genome. `params` and `macs` cover the full detector at the score
/// resolution; the other proxies run on the backbone only.
pub fn profile(g: &Genome, cfg: &ScoreConfig) -> Result<ProxyVector> {
    cfg.validate()?;
    let cost = cost_full_model_with_bins(g, cfg.bins, cfg.height, cfg.width)?;
    let graph = build_graph_with_bins(g, cfg.bins, cfg.height, cfg.width, cfg.weight_seed)?;
    let zen = zen_score(&graph, cfg)?;
    if zen.zero_delta {
        return Err(Error::Degenerate(format!(
            "{g}: output does not respond to input perturbation"
        )));
    }
    let ntk = ntk_cond(&graph, cfg)?;
    Ok(ProxyVector {
        zen: zen.value,
        macs: cost.macs,
        params: cost.params,
        ntk_cond: ntk.value(),
        diversity: diversity_index(g),
    })
}

/// Profile many genomes on `jobs` worker threads. Results keep input order.
pub fn profile_many(genomes: &[Genome], cfg: &ScoreConfig, jobs: usize) -> Result<Vec<Result<ProxyVector>>> {
    if jobs <= 1 {
        return Ok(genomes.iter().map(|g| profile(g, cfg)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| genomes.par_iter().map(|g| profile(g, cfg)).collect()))
}
