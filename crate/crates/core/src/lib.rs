//! Multifidelity approximate Bayesian computation.
//!
//! Rejection, importance and sequential Monte Carlo ABC samplers that pair a
//! cheap low-fidelity model with an expensive high-fidelity one, deciding per
//! proposal whether the expensive simulation is worth running. Continuation
//! probabilities are tuned from previous generations to maximise the
//! effective sample size per unit of simulation time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache_io;
pub mod continuation;
pub mod error;
pub mod kuramoto;
pub mod models;
pub mod ode;
pub mod rng;
pub mod sample;
pub mod samplers;
pub mod smc;

pub use continuation::{
    adaptive_epsilon, estimate_coefficients, optimal_continuation, phi, theoretical_efficiency, AdaptiveEpsilon,
    EfficiencyCoefficients, EtaBounds,
};
pub use error::{Error, Result};
pub use models::{
    fit_kernel, CoupledModel, ImportanceDistribution, PerturbationKernel, Prior, Proposal, Simulation, SummaryVector,
    UniformPrior,
};
pub use rng::{RunSeed, SimRng, Stream};
pub use sample::{
    compute_ess, efficiency_report, posterior_estimate, EfficiencyReport, ParameterVector, WeightedParticle,
    WeightedSample,
};
pub use samplers::{
    abc_is, mf_abc_is, CacheEntry, ContinuationPolicy, Neighborhood, ParticleCache, SamplerSettings, SimRecord,
    StoppingCondition,
};
pub use smc::{abc_smc, mf_abc_smc, mf_abc_smc_alpha, GenerationResult, PsiTarget, SmcSchedule, Thresholds};
