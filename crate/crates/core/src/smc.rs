//! Generation loops for ABC-SMC and its multifidelity variants.

use serde::{Deserialize, Serialize};

use crate::continuation::{
    optimal_continuation, select_epsilon, CoefficientEstimator, EfficiencyCoefficients, EtaBounds, QSTAR_FLOOR,
};
use crate::error::{Error, Result};
use crate::models::{fit_kernel, CoupledModel, ImportanceDistribution, PerturbationKernel, Prior};
use crate::rng::RunSeed;
use crate::sample::{efficiency_report, WeightedSample};
use crate::samplers::{
    abc_is, mf_abc_is, ContinuationPolicy, Neighborhood, ParticleCache, SamplerSettings, StoppingCondition,
    DEFAULT_BATCH_SIZE, DEFAULT_PROPOSAL_CEILING,
};

/// Where the efficiency target for adaptive thresholds comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiTarget {
    /// Observed efficiency (ESS per second of simulation) of generation 1.
    FirstGeneration,
    /// Fixed target in ESS per second.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds {
    /// Strictly decreasing thresholds, one per generation.
    Fixed(Vec<f64>),
    /// Start at `initial` and choose each later threshold to keep the
    /// predicted efficiency at the target.
    Adaptive {
        initial: f64,
        generations: usize,
        psi_target: PsiTarget,
    },
}

impl Thresholds {
    pub fn generations(&self) -> usize {
        match self {
            Thresholds::Fixed(v) => v.len(),
            Thresholds::Adaptive { generations, .. } => *generations,
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Thresholds::Adaptive { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcSchedule {
    pub thresholds: Thresholds,
    /// One stopping condition per generation.
    pub stops: Vec<StoppingCondition>,
    pub bounds: EtaBounds,
    /// Policy of generation 1 for the adaptive multifidelity sampler.
    pub initial_policy: ContinuationPolicy,
    pub batch_size: usize,
    pub proposal_ceiling: usize,
}

impl SmcSchedule {
    pub fn new(thresholds: Thresholds, stops: Vec<StoppingCondition>) -> Self {
        SmcSchedule {
            thresholds,
            stops,
            bounds: EtaBounds::default(),
            initial_policy: ContinuationPolicy::ALWAYS,
            batch_size: DEFAULT_BATCH_SIZE,
            proposal_ceiling: DEFAULT_PROPOSAL_CEILING,
        }
    }

    /// The same stopping condition in every generation.
    pub fn uniform(thresholds: Thresholds, stop: StoppingCondition) -> Self {
        let n = thresholds.generations();
        Self::new(thresholds, vec![stop; n])
    }

    pub fn generations(&self) -> usize {
        self.thresholds.generations()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidArgument(msg));
        match &self.thresholds {
            Thresholds::Fixed(v) => {
                if v.is_empty() {
                    return invalid("empty threshold schedule".into());
                }
                if v.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                    return invalid(format!("thresholds must be positive and finite: {v:?}"));
                }
                if v.windows(2).any(|w| w[1] >= w[0]) {
                    return invalid(format!("thresholds must be strictly decreasing: {v:?}"));
                }
            }
            Thresholds::Adaptive {
                initial,
                generations,
                psi_target,
            } => {
                if !(*initial > 0.0) || *generations == 0 {
                    return invalid(
                        "adaptive schedule needs a positive initial threshold and at least one generation".into(),
                    );
                }
                if let PsiTarget::Fixed(p) = psi_target {
                    if !(*p > 0.0) {
                        return invalid(format!("efficiency target must be positive, got {p}"));
                    }
                }
            }
        }
        if self.stops.len() != self.generations() {
            return invalid(format!(
                "{} stopping conditions for {} generations",
                self.stops.len(),
                self.generations()
            ));
        }
        for s in &self.stops {
            s.validate()?;
        }
        if self.batch_size == 0 {
            return invalid("batch size must be positive".into());
        }
        ContinuationPolicy::new(self.initial_policy.eta1, self.initial_policy.eta2)?;
        Ok(())
    }

    fn settings(&self, seed: RunSeed, generation: usize) -> SamplerSettings {
        SamplerSettings {
            seed,
            generation,
            batch_size: self.batch_size,
            proposal_ceiling: self.proposal_ceiling,
        }
    }
}

/// Output of one generation.
#[derive(Debug, Clone)]
pub struct GenerationResult {
    /// Generation index, starting at 1.
    pub index: usize,
    pub sample: WeightedSample,
    pub cache: ParticleCache,
    pub policy_used: ContinuationPolicy,
    pub epsilon_used: f64,
    /// Kernel of the importance mixture; `None` when sampling from the prior.
    pub kernel: Option<PerturbationKernel>,
    /// Coefficients predicted from the previous generation for this one.
    pub coefficients: Option<EfficiencyCoefficients>,
    /// Previous-generation particles whose importance density underflowed.
    pub qstar_floored: usize,
    /// Adaptive threshold search could not move below the previous threshold.
    pub target_unreachable: bool,
}

impl GenerationResult {
    pub fn ess(&self) -> f64 {
        self.sample.ess().unwrap_or(0.0)
    }

    pub fn sim_time(&self) -> f64 {
        self.cache.total_sim_time()
    }

    pub fn proposals(&self) -> usize {
        self.cache.len()
    }
}

/// Total simulation time of a run in seconds.
pub fn total_sim_time(generations: &[GenerationResult]) -> f64 {
    generations.iter().map(GenerationResult::sim_time).sum()
}

/// Final-generation ESS divided by the simulation time of all generations.
pub fn overall_efficiency(generations: &[GenerationResult]) -> Result<f64> {
    let last = generations.last().ok_or(Error::EmptyCache)?;
    let time = total_sim_time(generations);
    if !(time > 0.0) {
        return Err(Error::InvalidArgument("run has no simulation time".into()));
    }
    Ok(last.sample.ess()? / time)
}

#[derive(Debug, Clone, Copy)]
enum Mode<'a> {
    Abc,
    FixedPolicies(&'a [ContinuationPolicy]),
    Adaptive,
}

/// Plan for the next generation.
struct Next<P> {
    importance: ImportanceDistribution<P>,
    epsilon: f64,
    policy: ContinuationPolicy,
    coefficients: Option<EfficiencyCoefficients>,
    floored: usize,
    unreachable: bool,
}

fn run_smc<M, P>(
    model: &M,
    prior: &P,
    observed: &Neighborhood,
    schedule: &SmcSchedule,
    seed: RunSeed,
    mode: Mode,
) -> Result<Vec<GenerationResult>>
where
    M: CoupledModel + ?Sized,
    P: Prior + Clone,
{
    schedule.validate()?;
    let generations = schedule.generations();
    if let Mode::FixedPolicies(p) = mode {
        if p.len() != generations {
            return Err(Error::InvalidArgument(format!(
                "{} continuation policies for {generations} generations",
                p.len()
            )));
        }
        if schedule.thresholds.is_adaptive() {
            return Err(Error::InvalidArgument(
                "adaptive thresholds need either ABC-SMC or the adaptive multifidelity sampler".into(),
            ));
        }
    }
    let first_epsilon = match &schedule.thresholds {
        Thresholds::Fixed(v) => v[0],
        Thresholds::Adaptive { initial, .. } => *initial,
    };
    let first_policy = match mode {
        Mode::Abc => ContinuationPolicy::ALWAYS,
        Mode::FixedPolicies(p) => p[0],
        Mode::Adaptive => schedule.initial_policy,
    };
    let mut next = Next {
        importance: ImportanceDistribution::prior(prior.clone()),
        epsilon: first_epsilon,
        policy: first_policy,
        coefficients: None,
        floored: 0,
        unreachable: false,
    };
    let mut psi_target = None;
    let mut out: Vec<GenerationResult> = Vec::with_capacity(generations);

    for t in 1..=generations {
        let nbhd = observed.with_epsilon(next.epsilon)?;
        let settings = schedule.settings(seed, t);
        let stop = schedule.stops[t - 1];
        let (sample, cache) = match mode {
            Mode::Abc => abc_is(model, prior, &next.importance, &nbhd, stop, &settings)?,
            _ => mf_abc_is(model, prior, &next.importance, &nbhd, next.policy, stop, &settings)?,
        };
        if sample.weight_sum() == 0.0 || sample.weights().all(|w| w == 0.0) {
            return Err(Error::DegenerateGeneration {
                generation: t,
                reason: format!(
                    "weights sum to zero after {} proposals at epsilon = {}",
                    cache.len(),
                    next.epsilon
                ),
            });
        }
        log::info!(
            "generation {t}: epsilon {:.4}, eta ({:.3}, {:.3}), {} proposals, ESS {:.1}, {:.3} s",
            next.epsilon,
            next.policy.eta1,
            next.policy.eta2,
            cache.len(),
            sample.ess().unwrap_or(0.0),
            cache.total_sim_time()
        );
        if t == 1 {
            psi_target = match &schedule.thresholds {
                Thresholds::Adaptive {
                    psi_target: PsiTarget::FirstGeneration,
                    ..
                } => Some(efficiency_report(&sample)?.observed_efficiency),
                Thresholds::Adaptive {
                    psi_target: PsiTarget::Fixed(p),
                    ..
                } => Some(*p),
                Thresholds::Fixed(_) => None,
            };
        }

        let following = if t < generations {
            Some(plan_next(
                prior,
                schedule,
                mode,
                &sample,
                &cache,
                next.epsilon,
                t,
                psi_target,
            )?)
        } else {
            None
        };
        out.push(GenerationResult {
            index: t,
            sample,
            cache,
            policy_used: next.policy,
            epsilon_used: next.epsilon,
            kernel: next.importance.kernel().cloned(),
            coefficients: next.coefficients,
            qstar_floored: next.floored,
            target_unreachable: next.unreachable,
        });
        match following {
            Some(n) => next = n,
            None => break,
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn plan_next<P: Prior + Clone>(
    prior: &P,
    schedule: &SmcSchedule,
    mode: Mode,
    sample: &WeightedSample,
    cache: &ParticleCache,
    epsilon: f64,
    t: usize,
    psi_target: Option<f64>,
) -> Result<Next<P>> {
    let degenerate = |e: Error| Error::DegenerateGeneration {
        generation: t,
        reason: e.to_string(),
    };
    let kernel = fit_kernel(sample, prior).map_err(degenerate)?;
    let importance = ImportanceDistribution::mixture(prior.clone(), sample, kernel).map_err(degenerate)?;

    let needs_estimates = schedule.thresholds.is_adaptive() || matches!(mode, Mode::Adaptive);
    let estimator = if needs_estimates {
        Some(CoefficientEstimator::new(cache, prior, &importance, Some(QSTAR_FLOOR))?)
    } else {
        None
    };
    let floored = estimator.as_ref().map_or(0, |e| e.floored);
    if floored > 0 {
        log::warn!(
            "generation {}: importance density floored at {floored} cached particles",
            t + 1
        );
    }

    let (next_epsilon, adaptive_policy, unreachable) = match (&schedule.thresholds, &estimator) {
        (Thresholds::Fixed(v), _) => (v[t], None, false),
        (Thresholds::Adaptive { .. }, Some(est)) => {
            let target = psi_target.expect("target set after generation 1");
            let chosen = select_epsilon(est, epsilon, target, &schedule.bounds, matches!(mode, Mode::Adaptive))?;
            if chosen.target_unreachable {
                log::warn!(
                    "generation {}: efficiency target {target:.4e} not reachable below epsilon = {epsilon}",
                    t + 1
                );
            }
            (chosen.epsilon, Some(chosen.policy), chosen.target_unreachable)
        }
        (Thresholds::Adaptive { .. }, None) => unreachable!("estimator built for adaptive thresholds"),
    };

    let coefficients = estimator.as_ref().map(|e| e.at(next_epsilon));
    let policy = match mode {
        Mode::Abc => ContinuationPolicy::ALWAYS,
        Mode::FixedPolicies(p) => p[t],
        Mode::Adaptive => match adaptive_policy {
            Some(p) => p,
            None => {
                let c = coefficients.expect("estimates computed in adaptive mode");
                match optimal_continuation(&c, &schedule.bounds) {
                    Ok((p, _)) => p,
                    Err(e) => {
                        log::warn!(
                            "generation {}: continuation optimisation failed ({e}); using (1, 1)",
                            t + 1
                        );
                        ContinuationPolicy::ALWAYS
                    }
                }
            }
        },
    };
    Ok(Next {
        importance,
        epsilon: next_epsilon,
        policy,
        coefficients,
        floored,
        unreachable,
    })
}

/// ABC-SMC: each generation runs ABC importance sampling from a kernel
/// mixture over the previous generation.
pub fn abc_smc<M, P>(
    model: &M,
    prior: &P,
    observed: &Neighborhood,
    schedule: &SmcSchedule,
    seed: RunSeed,
) -> Result<Vec<GenerationResult>>
where
    M: CoupledModel + ?Sized,
    P: Prior + Clone,
{
    run_smc(model, prior, observed, schedule, seed, Mode::Abc)
}

/// Multifidelity ABC-SMC with one fixed continuation policy per generation.
pub fn mf_abc_smc_alpha<M, P>(
    model: &M,
    prior: &P,
    observed: &Neighborhood,
    schedule: &SmcSchedule,
    policies: &[ContinuationPolicy],
    seed: RunSeed,
) -> Result<Vec<GenerationResult>>
where
    M: CoupledModel + ?Sized,
    P: Prior + Clone,
{
    for p in policies {
        ContinuationPolicy::new(p.eta1, p.eta2)?;
    }
    run_smc(model, prior, observed, schedule, seed, Mode::FixedPolicies(policies))
}

/// Multifidelity ABC-SMC with continuation probabilities optimised from the
/// previous generation's cache.
pub fn mf_abc_smc<M, P>(
    model: &M,
    prior: &P,
    observed: &Neighborhood,
    schedule: &SmcSchedule,
    seed: RunSeed,
) -> Result<Vec<GenerationResult>>
where
    M: CoupledModel + ?Sized,
    P: Prior + Clone,
{
    run_smc(model, prior, observed, schedule, seed, Mode::Adaptive)
}
