//! Running an algorithm and writing its artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mfabc::cache_io::{load_caches, save_caches};
use mfabc::kuramoto::{KuramotoConfig, KuramotoModel, ObservedData};
use mfabc::{
    abc_is, abc_smc, compute_ess, fit_kernel, mf_abc_is, mf_abc_smc, mf_abc_smc_alpha, ContinuationPolicy,
    GenerationResult, ImportanceDistribution, Neighborhood, ParticleCache, RunSeed, SamplerSettings, Thresholds,
    UniformPrior,
};

use crate::config::{Algorithm, RunPlan};

pub const SUMMARY_FILE: &str = "generations.csv";

/// One row of the generation summary.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub epsilon: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub proposals: usize,
    pub hi_runs: usize,
    pub ess: f64,
    pub sim_time_s: f64,
    pub time_per_proposal_s: f64,
    pub efficiency_per_s: f64,
    pub target_unreachable: bool,
}

impl GenerationSummary {
    fn new(cache: &ParticleCache, epsilon: f64, policy: ContinuationPolicy, target_unreachable: bool) -> Self {
        let ess = compute_ess(cache.entries.iter().map(|e| e.weight)).unwrap_or(0.0);
        let time = cache.total_sim_time();
        GenerationSummary {
            generation: cache.generation,
            epsilon,
            eta1: policy.eta1,
            eta2: policy.eta2,
            proposals: cache.len(),
            hi_runs: cache.hi_count(),
            ess,
            sim_time_s: time,
            time_per_proposal_s: time / cache.len().max(1) as f64,
            efficiency_per_s: if time > 0.0 { ess / time } else { 0.0 },
            target_unreachable,
        }
    }
}

pub fn cache_file_name(generation: usize) -> String {
    format!("generation_{generation}.csv")
}

pub fn load_observed(path: &Path) -> Result<ObservedData> {
    let text = fs::read_to_string(path).with_context(|| format!("reading observed data {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing observed data {}", path.display()))
}

fn importance_from(path: &Path, prior: &UniformPrior) -> Result<ImportanceDistribution> {
    let caches = load_caches(path).with_context(|| format!("reading importance cache {}", path.display()))?;
    let last = caches
        .last()
        .with_context(|| format!("{} holds no particles", path.display()))?;
    let sample = last.to_sample();
    let kernel = fit_kernel(&sample, prior)?;
    Ok(ImportanceDistribution::mixture(prior.clone(), &sample, kernel)?)
}

/// Run the planned algorithm once and return per-generation caches and
/// summaries.
pub fn execute(
    plan: &RunPlan,
    config: KuramotoConfig,
    data: &ObservedData,
    seed: RunSeed,
) -> mfabc::Result<Vec<(ParticleCache, GenerationSummary)>> {
    let model = KuramotoModel::for_data(config, data)?;
    let prior = &plan.prior;
    let schedule = &plan.schedule;
    let initial = match schedule.thresholds {
        Thresholds::Fixed(ref v) => v[0],
        Thresholds::Adaptive { initial, .. } => initial,
    };
    let observed = Neighborhood::new(initial, data.summary().into())?;

    let from_smc = |run: Vec<GenerationResult>| {
        run.into_iter()
            .map(|g| {
                let s = GenerationSummary::new(&g.cache, g.epsilon_used, g.policy_used, g.target_unreachable);
                (g.cache, s)
            })
            .collect()
    };

    if plan.algorithm.is_single_generation() {
        let q = match &plan.importance {
            Some(path) => importance_from(path, prior).map_err(|e| mfabc::Error::InvalidArgument(format!("{e:#}")))?,
            None => ImportanceDistribution::prior(prior.clone()),
        };
        let settings = SamplerSettings {
            batch_size: schedule.batch_size,
            proposal_ceiling: schedule.proposal_ceiling,
            ..SamplerSettings::new(seed)
        };
        let stop = schedule.stops[0];
        let (cache, policy) = match plan.algorithm {
            Algorithm::AbcRs | Algorithm::AbcIs => (
                abc_is(&model, prior, &q, &observed, stop, &settings)?.1,
                ContinuationPolicy::ALWAYS,
            ),
            _ => {
                let policy = plan.policies[0];
                (
                    mf_abc_is(&model, prior, &q, &observed, policy, stop, &settings)?.1,
                    policy,
                )
            }
        };
        let summary = GenerationSummary::new(&cache, initial, policy, false);
        return Ok(vec![(cache, summary)]);
    }

    Ok(match plan.algorithm {
        Algorithm::AbcSmc => from_smc(abc_smc(&model, prior, &observed, schedule, seed)?),
        Algorithm::MfAbcSmcAlpha => from_smc(mf_abc_smc_alpha(
            &model,
            prior,
            &observed,
            schedule,
            &plan.policies,
            seed,
        )?),
        _ => from_smc(mf_abc_smc(&model, prior, &observed, schedule, seed)?),
    })
}

/// Write per-generation caches and the summary table into `dir`.
pub fn write_artifacts(dir: &Path, results: &[(ParticleCache, GenerationSummary)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for (cache, _) in results {
        let path = dir.join(cache_file_name(cache.generation));
        save_caches(&path, &[cache]).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for (_, s) in results {
        w.serialize(s)?;
    }
    w.flush()?;
    written.push(path);
    Ok(written)
}

/// Output directory and seed of replicate `r` out of `count`.
pub fn replicate_target(out: &Path, seed: u64, r: usize, count: usize) -> (PathBuf, RunSeed) {
    if count == 1 {
        (out.to_path_buf(), RunSeed(seed))
    } else {
        (out.join(format!("rep_{r:03}")), RunSeed(seed).replicate(r as u64))
    }
}
