//! Single-generation samplers: ABC importance sampling and its multifidelity
//! variant, with per-proposal caching of everything needed to re-derive
//! weights and efficiency coefficients later.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CoupledModel, Prior, Proposal, Simulation, SummaryVector};
use crate::rng::{RunSeed, Stream};
use crate::sample::{ParameterVector, WeightedParticle, WeightedSample};

pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const DEFAULT_PROPOSAL_CEILING: usize = 1_000_000;

/// The ABC acceptance region `{y : d(y, y_obs) < ε}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    epsilon: f64,
    observed: SummaryVector,
}

impl Neighborhood {
    pub fn new(epsilon: f64, observed: SummaryVector) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold must be positive, got {epsilon}"
            )));
        }
        Ok(Neighborhood { epsilon, observed })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn observed(&self) -> &SummaryVector {
        &self.observed
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Neighborhood::new(epsilon, self.observed.clone())
    }

    pub fn contains_distance(&self, d: f64) -> bool {
        d < self.epsilon
    }
}

/// Continuation probability `α = η₁ I(ỹ ∈ Ω) + η₂ I(ỹ ∉ Ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationPolicy {
    pub eta1: f64,
    pub eta2: f64,
}

impl ContinuationPolicy {
    /// Always run the high-fidelity model.
    pub const ALWAYS: ContinuationPolicy = ContinuationPolicy { eta1: 1.0, eta2: 1.0 };

    pub fn new(eta1: f64, eta2: f64) -> Result<Self> {
        let valid = |x: f64| x > 0.0 && x <= 1.0;
        if !valid(eta1) || !valid(eta2) {
            return Err(Error::InvalidArgument(format!(
                "continuation probabilities must lie in (0, 1], got ({eta1}, {eta2})"
            )));
        }
        Ok(ContinuationPolicy { eta1, eta2 })
    }

    pub fn constant(alpha: f64) -> Result<Self> {
        Self::new(alpha, alpha)
    }

    pub fn alpha(&self, tilde_in: bool) -> f64 {
        if tilde_in {
            self.eta1
        } else {
            self.eta2
        }
    }
}

impl Default for ContinuationPolicy {
    fn default() -> Self {
        Self::ALWAYS
    }
}

/// A simulation outcome as stored in the cache.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    /// Distance to the observed data; `+inf` for a failed simulation.
    pub d: f64,
    pub t_ns: u64,
}

impl SimRecord {
    pub fn failed(&self) -> bool {
        self.d.is_infinite()
    }

    pub fn seconds(&self) -> f64 {
        self.t_ns as f64 * 1e-9
    }
}

/// Everything recorded about one parameter proposal.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub theta: ParameterVector,
    /// Unnormalised importance function value at `theta`.
    pub q_value: f64,
    /// Low-fidelity outcome; absent when the sampler skipped the
    /// low-fidelity model (ABC-IS).
    pub lo: Option<SimRecord>,
    pub alpha: f64,
    pub u: f64,
    /// High-fidelity outcome; present iff `u < alpha`.
    pub hi: Option<SimRecord>,
    pub weight: f64,
}

impl CacheEntry {
    /// Low-fidelity membership at threshold `epsilon`. Entries without a
    /// low-fidelity record behave as if the low-fidelity model agreed with
    /// the high-fidelity one.
    pub fn tilde_in(&self, epsilon: f64) -> bool {
        match (&self.lo, &self.hi) {
            (Some(lo), _) => lo.d < epsilon,
            (None, Some(hi)) => hi.d < epsilon,
            (None, None) => false,
        }
    }

    pub fn hi_in(&self, epsilon: f64) -> Option<bool> {
        self.hi.map(|h| h.d < epsilon)
    }

    pub fn sim_time_ns(&self) -> u64 {
        self.lo.map_or(0, |r| r.t_ns) + self.hi.map_or(0, |r| r.t_ns)
    }

    /// Re-derive the weight from the stored fields.
    pub fn recompute_weight(&self, prior_density: f64, epsilon: f64) -> Result<f64> {
        match self.lo {
            None => {
                let hi = self
                    .hi
                    .ok_or_else(|| Error::InvalidArgument("entry without any simulation".into()))?;
                importance_weight(prior_density, self.q_value, hi.d < epsilon)
            }
            Some(lo) => multifidelity_weight(
                prior_density,
                self.q_value,
                lo.d < epsilon,
                self.u,
                self.alpha,
                self.hi_in(epsilon),
            ),
        }
    }
}

/// All proposals made by one sampler run.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCache {
    pub generation: usize,
    pub epsilon: f64,
    pub entries: Vec<CacheEntry>,
}

impl ParticleCache {
    pub fn new(generation: usize, epsilon: f64) -> Self {
        ParticleCache {
            generation,
            epsilon,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_sim_time_ns(&self) -> u64 {
        self.entries.iter().map(CacheEntry::sim_time_ns).sum()
    }

    /// Seconds.
    pub fn total_sim_time(&self) -> f64 {
        self.total_sim_time_ns() as f64 * 1e-9
    }

    pub fn hi_count(&self) -> usize {
        self.entries.iter().filter(|e| e.hi.is_some()).count()
    }

    pub fn failed_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.lo.is_some_and(|r| r.failed()) || e.hi.is_some_and(|r| r.failed()))
            .count()
    }

    pub fn to_sample(&self) -> WeightedSample {
        WeightedSample::new(
            self.entries
                .iter()
                .map(|e| WeightedParticle {
                    theta: e.theta.clone(),
                    weight: e.weight,
                })
                .collect(),
            self.total_sim_time(),
        )
    }
}

/// When a sampler stops proposing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingCondition {
    /// Exactly this many proposals.
    MaxProposals(usize),
    /// Stop at the first batch boundary where the ESS reaches `ess`.
    EssTarget { ess: f64, check_every: usize },
    /// Stop at the first batch boundary where simulation time reaches this
    /// many seconds.
    TimeBudget(f64),
}

impl StoppingCondition {
    pub fn ess(ess: f64) -> Self {
        StoppingCondition::EssTarget {
            ess,
            check_every: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StoppingCondition::MaxProposals(n) => n > 0,
            StoppingCondition::EssTarget { ess, check_every } => ess > 0.0 && check_every > 0,
            StoppingCondition::TimeBudget(s) => s > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "stopping condition parameters must be positive: {self:?}"
            )))
        }
    }

    /// Whether a finished sample satisfies this condition.
    pub fn is_met(&self, cache: &ParticleCache) -> bool {
        match *self {
            StoppingCondition::MaxProposals(n) => cache.len() >= n,
            StoppingCondition::EssTarget { ess, .. } => {
                crate::sample::compute_ess(cache.entries.iter().map(|e| e.weight)).is_ok_and(|e| e >= ess)
            }
            StoppingCondition::TimeBudget(s) => cache.total_sim_time() >= s,
        }
    }
}

/// Seeding and batching of one sampler run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSettings {
    pub seed: RunSeed,
    pub generation: usize,
    /// Proposals simulated together between stopping checks (ignored by
    /// `EssTarget`, which carries its own batch size).
    pub batch_size: usize,
    /// Abort threshold for conditions that may never be met.
    pub proposal_ceiling: usize,
}

impl SamplerSettings {
    pub fn new(seed: RunSeed) -> Self {
        SamplerSettings {
            seed,
            generation: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            proposal_ceiling: DEFAULT_PROPOSAL_CEILING,
        }
    }

    pub fn generation(mut self, generation: usize) -> Self {
        self.generation = generation;
        self
    }
}

/// `w = (π/q) I(y ∈ Ω)`.
pub fn importance_weight(prior_density: f64, q_value: f64, in_neighborhood: bool) -> Result<f64> {
    if !(q_value > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "importance function must be positive, got {q_value}"
        )));
    }
    Ok(if in_neighborhood { prior_density / q_value } else { 0.0 })
}

/// Multifidelity weight
/// `(π/q) [I(ỹ∈Ω) + I(u<α)/α · (I(y∈Ω) − I(ỹ∈Ω))]`.
///
/// `hi_in` must be present exactly when `u < alpha`.
pub fn multifidelity_weight(
    prior_density: f64,
    q_value: f64,
    tilde_in: bool,
    u: f64,
    alpha: f64,
    hi_in: Option<bool>,
) -> Result<f64> {
    if !(q_value > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "importance function must be positive, got {q_value}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "continuation probability must lie in (0, 1], got {alpha}"
        )));
    }
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    let lo = indicator(tilde_in);
    let bracket = match (u < alpha, hi_in) {
        (true, Some(hi)) => lo + (indicator(hi) - lo) / alpha,
        (false, None) => lo,
        (true, None) => {
            return Err(Error::InvalidArgument(
                "u < alpha requires a high-fidelity outcome".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidArgument(
                "high-fidelity outcome supplied although u >= alpha".into(),
            ))
        }
    };
    Ok(prior_density / q_value * bracket)
}

#[derive(Debug, Clone, Copy)]
enum Fidelity {
    HighOnly,
    Multi(ContinuationPolicy),
}

fn timed<F: FnOnce() -> Simulation>(f: F) -> (Simulation, u64) {
    let start = Instant::now();
    let sim = f();
    let elapsed = start.elapsed().as_nanos() as u64;
    let t = sim.cost_ns.unwrap_or(elapsed);
    (sim, t)
}

fn record<M: CoupledModel + ?Sized>(model: &M, sim: &Simulation, t_ns: u64, nbhd: &Neighborhood) -> SimRecord {
    let d = match &sim.summary {
        Some(s) => {
            let d = model.distance(s, nbhd.observed());
            if d.is_nan() {
                f64::INFINITY
            } else {
                d
            }
        }
        None => f64::INFINITY,
    };
    SimRecord { d, t_ns }
}

fn propose<M, P, Q>(
    model: &M,
    prior: &P,
    importance: &Q,
    nbhd: &Neighborhood,
    fidelity: Fidelity,
    settings: &SamplerSettings,
    index: usize,
) -> Result<CacheEntry>
where
    M: CoupledModel + ?Sized,
    P: Prior + ?Sized,
    Q: Proposal + ?Sized,
{
    let rng_for = |s| settings.seed.proposal_rng(settings.generation, index, s);
    let theta = importance.sample(&mut rng_for(Stream::Proposal))?;
    let q_value = importance.q(&theta);
    let prior_density = prior.density(&theta)?;
    let u: f64 = rng_for(Stream::Continuation).gen();

    let entry = match fidelity {
        Fidelity::HighOnly => {
            let (sim, t) = timed(|| model.simulate_hi(&theta, None, &mut rng_for(Stream::HighFidelity)));
            let hi = record(model, &sim, t, nbhd);
            let weight = importance_weight(prior_density, q_value, nbhd.contains_distance(hi.d))?;
            CacheEntry {
                theta,
                q_value,
                lo: None,
                alpha: 1.0,
                u,
                hi: Some(hi),
                weight,
            }
        }
        Fidelity::Multi(policy) => {
            let (lo_sim, lo_t) = timed(|| model.simulate_lo(&theta, &mut rng_for(Stream::LowFidelity)));
            let lo = record(model, &lo_sim, lo_t, nbhd);
            let tilde_in = nbhd.contains_distance(lo.d);
            let alpha = policy.alpha(tilde_in);
            let hi = if u < alpha {
                let (sim, t) =
                    timed(|| model.simulate_hi(&theta, lo_sim.summary.as_ref(), &mut rng_for(Stream::HighFidelity)));
                Some(record(model, &sim, t, nbhd))
            } else {
                None
            };
            let hi_in = hi.map(|h| nbhd.contains_distance(h.d));
            let weight = multifidelity_weight(prior_density, q_value, tilde_in, u, alpha, hi_in)?;
            CacheEntry {
                theta,
                q_value,
                lo: Some(lo),
                alpha,
                u,
                hi,
                weight,
            }
        }
    };
    Ok(entry)
}

fn run<M, P, Q>(
    model: &M,
    prior: &P,
    importance: &Q,
    nbhd: &Neighborhood,
    fidelity: Fidelity,
    stop: StoppingCondition,
    settings: &SamplerSettings,
) -> Result<(WeightedSample, ParticleCache)>
where
    M: CoupledModel + ?Sized,
    P: Prior + ?Sized,
    Q: Proposal + ?Sized,
{
    stop.validate()?;
    let mut cache = ParticleCache::new(settings.generation, nbhd.epsilon());
    let (mut sum, mut sum_sq, mut time_ns) = (0.0f64, 0.0f64, 0u64);
    loop {
        let done = cache.len();
        let batch = match stop {
            StoppingCondition::MaxProposals(n) => settings.batch_size.max(1).min(n - done),
            StoppingCondition::EssTarget { check_every, .. } => check_every,
            StoppingCondition::TimeBudget(_) => settings.batch_size.max(1),
        };
        if done + batch > settings.proposal_ceiling.max(batch) {
            return Err(Error::ProposalCeiling {
                generation: settings.generation,
                ceiling: settings.proposal_ceiling,
            });
        }
        let fresh: Vec<CacheEntry> = (done..done + batch)
            .into_par_iter()
            .map(|i| propose(model, prior, importance, nbhd, fidelity, settings, i))
            .collect::<Result<_>>()?;
        for e in &fresh {
            sum += e.weight;
            sum_sq += e.weight * e.weight;
            time_ns += e.sim_time_ns();
        }
        cache.entries.extend(fresh);

        let finished = match stop {
            StoppingCondition::MaxProposals(n) => cache.len() >= n,
            StoppingCondition::EssTarget { ess, .. } => sum_sq > 0.0 && sum * sum / sum_sq >= ess,
            StoppingCondition::TimeBudget(s) => time_ns as f64 * 1e-9 >= s,
        };
        if finished {
            break;
        }
    }
    Ok((cache.to_sample(), cache))
}

/// ABC importance sampling. Only the high-fidelity model is simulated; the
/// continuation draw `u` is still consumed so paired seeds stay aligned with
/// [`mf_abc_is`].
pub fn abc_is<M, P, Q>(
    model: &M,
    prior: &P,
    importance: &Q,
    nbhd: &Neighborhood,
    stop: StoppingCondition,
    settings: &SamplerSettings,
) -> Result<(WeightedSample, ParticleCache)>
where
    M: CoupledModel + ?Sized,
    P: Prior + ?Sized,
    Q: Proposal + ?Sized,
{
    run(model, prior, importance, nbhd, Fidelity::HighOnly, stop, settings)
}

/// Multifidelity ABC importance sampling with a two-constant continuation
/// policy.
pub fn mf_abc_is<M, P, Q>(
    model: &M,
    prior: &P,
    importance: &Q,
    nbhd: &Neighborhood,
    policy: ContinuationPolicy,
    stop: StoppingCondition,
    settings: &SamplerSettings,
) -> Result<(WeightedSample, ParticleCache)>
where
    M: CoupledModel + ?Sized,
    P: Prior + ?Sized,
    Q: Proposal + ?Sized,
{
    ContinuationPolicy::new(policy.eta1, policy.eta2)?;
    run(model, prior, importance, nbhd, Fidelity::Multi(policy), stop, settings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn importance_weight_examples() {
        assert_eq!(importance_weight(0.5, 0.5, true).unwrap(), 1.0);
        assert_eq!(importance_weight(0.7, 0.2, false).unwrap(), 0.0);
        assert_eq!(importance_weight(0.5, 0.25, true).unwrap(), 2.0);
        assert!(importance_weight(0.5, 0.0, true).is_err());
    }

    #[test]
    fn multifidelity_weight_examples() {
        assert_eq!(
            multifidelity_weight(1.0, 1.0, true, 0.3, 1.0, Some(false)).unwrap(),
            0.0
        );
        assert_eq!(multifidelity_weight(1.0, 1.0, true, 0.9, 0.5, None).unwrap(), 1.0);
        assert_eq!(
            multifidelity_weight(1.0, 1.0, true, 0.1, 0.5, Some(false)).unwrap(),
            -1.0
        );
        assert_eq!(
            multifidelity_weight(1.0, 1.0, false, 0.1, 0.25, Some(true)).unwrap(),
            4.0
        );
        assert!(multifidelity_weight(1.0, 1.0, false, 0.1, 0.25, None).is_err());
        assert!(multifidelity_weight(1.0, 1.0, false, 0.9, 0.25, Some(true)).is_err());
        assert!(multifidelity_weight(1.0, 1.0, false, 0.9, 0.0, None).is_err());
    }

    #[test]
    fn marginalisation_identity() {
        for &alpha in &[0.01, 0.1, 0.5, 1.0] {
            for &ratio in &[0.3, 1.0, 2.5] {
                for tilde_in in [false, true] {
                    for hi_in in [false, true] {
                        let cont = multifidelity_weight(ratio, 1.0, tilde_in, 0.0, alpha, Some(hi_in)).unwrap();
                        let avg = if alpha < 1.0 {
                            let stop = multifidelity_weight(ratio, 1.0, tilde_in, alpha, alpha, None).unwrap();
                            alpha * cont + (1.0 - alpha) * stop
                        } else {
                            cont
                        };
                        let exact = if hi_in { ratio } else { 0.0 };
                        assert!((avg - exact).abs() <= f64::EPSILON * ratio.max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn policy_validation() {
        assert!(ContinuationPolicy::new(0.0, 0.5).is_err());
        assert!(ContinuationPolicy::new(0.5, 1.5).is_err());
        let p = ContinuationPolicy::new(0.2, 0.7).unwrap();
        assert_eq!(p.alpha(true), 0.2);
        assert_eq!(p.alpha(false), 0.7);
        assert!(Neighborhood::new(0.0, SummaryVector(vec![0.0])).is_err());
    }
}
