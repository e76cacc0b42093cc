//! Weighted Monte Carlo samples, effective sample size and efficiency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(components: Vec<f64>) -> Self {
        ParameterVector(components)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A parameter with a (possibly negative) Monte Carlo weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedParticle {
    pub theta: ParameterVector,
    pub weight: f64,
}

/// A weighted sample together with the simulation time spent producing it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedSample {
    pub particles: Vec<WeightedParticle>,
    /// Seconds.
    pub total_sim_time: f64,
}

impl WeightedSample {
    pub fn new(particles: Vec<WeightedParticle>, total_sim_time: f64) -> Self {
        WeightedSample {
            particles,
            total_sim_time,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.weight)
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights().sum()
    }

    pub fn ess(&self) -> Result<f64> {
        compute_ess(self.weights())
    }

    pub fn estimate<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&ParameterVector) -> f64,
    {
        posterior_estimate(self, f)
    }
}

/// ESS and observed efficiency of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub ess: f64,
    /// Seconds.
    pub sim_time: f64,
    /// Effective samples per second.
    pub observed_efficiency: f64,
}

impl EfficiencyReport {
    pub fn from_parts(ess: f64, sim_time: f64) -> Result<Self> {
        if !(sim_time > 0.0) || !sim_time.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "simulation time must be positive, got {sim_time}"
            )));
        }
        Ok(EfficiencyReport {
            ess,
            sim_time,
            observed_efficiency: ess / sim_time,
        })
    }

    /// Efficiency in effective samples per minute.
    pub fn per_minute(&self) -> f64 {
        self.observed_efficiency * 60.0
    }
}

/// Effective sample size `(Σw)² / Σw²` of signed weights.
pub fn compute_ess<I>(weights: I) -> Result<f64>
where
    I: IntoIterator<Item = f64>,
{
    let (sum, sum_sq) = weights.into_iter().fold((0.0, 0.0), |(s, s2), w| (s + w, s2 + w * w));
    if sum_sq == 0.0 {
        return Err(Error::DegenerateSample("all weights are zero"));
    }
    Ok(sum * sum / sum_sq)
}

/// Self-normalised estimate `Σ w F(θ) / Σ w`.
pub fn posterior_estimate<F>(sample: &WeightedSample, f: F) -> Result<f64>
where
    F: Fn(&ParameterVector) -> f64,
{
    let (num, den) = sample
        .particles
        .iter()
        .filter(|p| p.weight != 0.0)
        .fold((0.0, 0.0), |(n, d), p| (n + p.weight * f(&p.theta), d + p.weight));
    if den == 0.0 {
        return Err(Error::DegenerateSample("weights sum to zero"));
    }
    Ok(num / den)
}

pub fn efficiency_report(sample: &WeightedSample) -> Result<EfficiencyReport> {
    EfficiencyReport::from_parts(sample.ess()?, sample.total_sim_time)
}
