//! Priors, perturbation kernels, importance distributions and the coupled
//! two-fidelity simulator contract.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::sample::{ParameterVector, WeightedSample};

/// Default cap on consecutive out-of-support kernel draws.
pub const DEFAULT_MAX_REJECTIONS: usize = 1_000_000;

/// Relative floor on kernel variances, in units of the squared prior width.
pub const KERNEL_VARIANCE_FLOOR: f64 = 1e-12;

/// Model output (or observed data) reduced to summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SummaryVector(pub Vec<f64>);

impl SummaryVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A prior distribution on the parameter space.
pub trait Prior: Send + Sync {
    fn dim(&self) -> usize;

    /// Density at `theta`; zero outside the support. Dimension is not checked.
    fn density_unchecked(&self, theta: &ParameterVector) -> f64;

    fn sample(&self, rng: &mut SimRng) -> ParameterVector;

    /// Characteristic width of each dimension, used to floor kernel variances.
    fn scales(&self) -> Vec<f64>;

    fn density(&self, theta: &ParameterVector) -> Result<f64> {
        if theta.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.dim(),
            });
        }
        Ok(self.density_unchecked(theta))
    }
}

/// An importance distribution known through an unnormalised function `q`.
pub trait Proposal: Send + Sync {
    fn sample(&self, rng: &mut SimRng) -> Result<ParameterVector>;

    /// Unnormalised importance function `q(θ)`; positive wherever the prior is.
    fn q(&self, theta: &ParameterVector) -> f64;
}

/// Independent uniform priors on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct UniformPrior {
    bounds: Vec<(f64, f64)>,
    density: f64,
}

impl TryFrom<Vec<(f64, f64)>> for UniformPrior {
    type Error = Error;

    fn try_from(bounds: Vec<(f64, f64)>) -> Result<Self> {
        UniformPrior::new(bounds)
    }
}

impl From<UniformPrior> for Vec<(f64, f64)> {
    fn from(p: UniformPrior) -> Self {
        p.bounds
    }
}

impl UniformPrior {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("prior needs at least one dimension".into()));
        }
        for &(lo, hi) in &bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("invalid uniform bounds [{lo}, {hi}]")));
            }
        }
        let density = bounds.iter().map(|(lo, hi)| 1.0 / (hi - lo)).product();
        Ok(UniformPrior { bounds, density })
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn contains(&self, theta: &ParameterVector) -> bool {
        theta
            .as_slice()
            .iter()
            .zip(&self.bounds)
            .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }
}

impl Prior for UniformPrior {
    fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn density_unchecked(&self, theta: &ParameterVector) -> f64 {
        if self.contains(theta) {
            self.density
        } else {
            0.0
        }
    }

    fn sample(&self, rng: &mut SimRng) -> ParameterVector {
        ParameterVector::new(
            self.bounds
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                .collect(),
        )
    }

    fn scales(&self) -> Vec<f64> {
        self.bounds.iter().map(|(lo, hi)| hi - lo).collect()
    }
}

/// Gaussian perturbation kernel with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PerturbationKernel {
    variances: Vec<f64>,
    std_devs: Vec<f64>,
    log_norm: f64,
}

impl TryFrom<Vec<f64>> for PerturbationKernel {
    type Error = Error;

    fn try_from(variances: Vec<f64>) -> Result<Self> {
        PerturbationKernel::new(variances)
    }
}

impl From<PerturbationKernel> for Vec<f64> {
    fn from(k: PerturbationKernel) -> Self {
        k.variances
    }
}

impl PerturbationKernel {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() || variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel variances must be positive and finite: {variances:?}"
            )));
        }
        let std_devs = variances.iter().map(|v| v.sqrt()).collect();
        let log_norm = -0.5
            * variances
                .iter()
                .map(|v| (2.0 * std::f64::consts::PI * v).ln())
                .sum::<f64>();
        Ok(PerturbationKernel {
            variances,
            std_devs,
            log_norm,
        })
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    /// `K(to | from)`.
    pub fn density(&self, to: &[f64], from: &[f64]) -> f64 {
        let quad: f64 = to
            .iter()
            .zip(from)
            .zip(&self.variances)
            .map(|((a, b), v)| (a - b) * (a - b) / v)
            .sum();
        (self.log_norm - 0.5 * quad).exp()
    }

    pub fn perturb(&self, from: &[f64], rng: &mut SimRng) -> ParameterVector {
        ParameterVector::new(
            from.iter()
                .zip(&self.std_devs)
                .map(|(x, s)| x + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    }
}

/// Fit a kernel whose variance is twice the `|w|`-weighted empirical variance
/// of the sample, floored relative to the prior widths.
pub fn fit_kernel<P: Prior + ?Sized>(sample: &WeightedSample, prior: &P) -> Result<PerturbationKernel> {
    let total: f64 = sample.weights().map(f64::abs).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSample("all weights are zero"));
    }
    let dim = prior.dim();
    if let Some(p) = sample.particles.iter().find(|p| p.theta.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.theta.dim(),
        });
    }
    let scales = prior.scales();
    let variances = (0..dim)
        .map(|d| {
            let mean = sample
                .particles
                .iter()
                .map(|p| p.weight.abs() * p.theta[d])
                .sum::<f64>()
                / total;
            let var = sample
                .particles
                .iter()
                .map(|p| p.weight.abs() * (p.theta[d] - mean).powi(2))
                .sum::<f64>()
                / total;
            (2.0 * var).max(KERNEL_VARIANCE_FLOOR * scales[d] * scales[d])
        })
        .collect();
    PerturbationKernel::new(variances)
}

#[derive(Debug, Clone)]
struct Mixture {
    support: Vec<ParameterVector>,
    /// Normalised `|w|` of each support particle.
    mass: Vec<f64>,
    cumulative: Vec<f64>,
    kernel: PerturbationKernel,
}

#[derive(Debug, Clone)]
enum Kind {
    Prior,
    Mixture(Mixture),
}

/// Either the prior itself or a `|w|`-weighted kernel mixture over a previous
/// generation's particles, truncated to the prior support.
#[derive(Debug, Clone)]
pub struct ImportanceDistribution<P = UniformPrior> {
    prior: P,
    kind: Kind,
    max_rejections: usize,
}

impl<P: Prior + Clone> ImportanceDistribution<P> {
    pub fn prior(prior: P) -> Self {
        ImportanceDistribution {
            prior,
            kind: Kind::Prior,
            max_rejections: DEFAULT_MAX_REJECTIONS,
        }
    }

    /// Mixture with component masses proportional to `|w|`; zero-weight
    /// particles are dropped.
    pub fn mixture(prior: P, sample: &WeightedSample, kernel: PerturbationKernel) -> Result<Self> {
        if kernel.dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                got: kernel.dim(),
            });
        }
        let (support, abs_w): (Vec<_>, Vec<_>) = sample
            .particles
            .iter()
            .filter(|p| p.weight != 0.0)
            .map(|p| (p.theta.clone(), p.weight.abs()))
            .unzip();
        let total: f64 = abs_w.iter().sum();
        if support.is_empty() || !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateSample("mixture needs a nonzero weight"));
        }
        let mass: Vec<f64> = abs_w.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = abs_w
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(ImportanceDistribution {
            prior,
            kind: Kind::Mixture(Mixture {
                support,
                mass,
                cumulative,
                kernel,
            }),
            max_rejections: DEFAULT_MAX_REJECTIONS,
        })
    }

    pub fn with_max_rejections(mut self, n: usize) -> Self {
        self.max_rejections = n.max(1);
        self
    }

    pub fn prior_ref(&self) -> &P {
        &self.prior
    }

    pub fn is_prior(&self) -> bool {
        matches!(self.kind, Kind::Prior)
    }

    pub fn kernel(&self) -> Option<&PerturbationKernel> {
        match &self.kind {
            Kind::Prior => None,
            Kind::Mixture(m) => Some(&m.kernel),
        }
    }

    /// Normalised component masses (empty for the prior kind).
    pub fn component_masses(&self) -> &[f64] {
        match &self.kind {
            Kind::Prior => &[],
            Kind::Mixture(m) => &m.mass,
        }
    }

    pub fn density(&self, theta: &ParameterVector) -> Result<f64> {
        if theta.dim() != self.prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.prior.dim(),
                got: theta.dim(),
            });
        }
        Ok(self.q(theta))
    }

    /// Index of the mixture component chosen for a draw, followed by the
    /// perturbed point before any support check.
    fn draw_component(m: &Mixture, rng: &mut SimRng) -> usize {
        let total = *m.cumulative.last().unwrap();
        let target = rng.gen::<f64>() * total;
        m.cumulative
            .partition_point(|&c| c <= target)
            .min(m.cumulative.len() - 1)
    }

    /// Draw that also reports which mixture component produced it.
    pub fn sample_with_component(&self, rng: &mut SimRng) -> Result<(ParameterVector, Option<usize>)> {
        match &self.kind {
            Kind::Prior => Ok((self.prior.sample(rng), None)),
            Kind::Mixture(m) => {
                for _ in 0..self.max_rejections {
                    let i = Self::draw_component(m, rng);
                    let theta = m.kernel.perturb(m.support[i].as_slice(), rng);
                    if self.prior.density_unchecked(&theta) > 0.0 {
                        return Ok((theta, Some(i)));
                    }
                }
                Err(Error::SamplerAbort(self.max_rejections))
            }
        }
    }
}

impl<P: Prior + Clone> Proposal for ImportanceDistribution<P> {
    fn sample(&self, rng: &mut SimRng) -> Result<ParameterVector> {
        self.sample_with_component(rng).map(|(theta, _)| theta)
    }

    fn q(&self, theta: &ParameterVector) -> f64 {
        let prior_density = self.prior.density_unchecked(theta);
        match &self.kind {
            Kind::Prior => prior_density,
            Kind::Mixture(m) => {
                if prior_density <= 0.0 {
                    return 0.0;
                }
                let x = theta.as_slice();
                m.support
                    .iter()
                    .zip(&m.mass)
                    .map(|(c, a)| a * m.kernel.density(x, c.as_slice()))
                    .sum()
            }
        }
    }
}

/// A simulated summary, or a failed simulation (treated as infinitely far
/// from the data).
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub summary: Option<SummaryVector>,
    /// Model-reported cost in nanoseconds, used instead of wall-clock time.
    pub cost_ns: Option<u64>,
}

impl Simulation {
    pub fn ok(summary: SummaryVector) -> Self {
        Simulation {
            summary: Some(summary),
            cost_ns: None,
        }
    }

    pub fn failed() -> Self {
        Simulation {
            summary: None,
            cost_ns: None,
        }
    }

    pub fn with_cost_ns(mut self, ns: u64) -> Self {
        self.cost_ns = Some(ns);
        self
    }
}

/// A low-fidelity model `f̃`, a high-fidelity model `f`, their coupling, and
/// the distance to observed data.
pub trait CoupledModel: Send + Sync {
    fn simulate_lo(&self, theta: &ParameterVector, rng: &mut SimRng) -> Simulation;

    /// High-fidelity simulation, conditioned on the low-fidelity output when
    /// the coupling uses it. ABC-IS calls this with `lo = None`.
    fn simulate_hi(&self, theta: &ParameterVector, lo: Option<&SummaryVector>, rng: &mut SimRng) -> Simulation;

    fn distance(&self, a: &SummaryVector, b: &SummaryVector) -> f64;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RunSeed;
    use crate::sample::WeightedParticle;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sample(points: &[f64], weights: &[f64]) -> WeightedSample {
        WeightedSample::new(
            points
                .iter()
                .zip(weights)
                .map(|(&x, &w)| WeightedParticle {
                    theta: ParameterVector::new(vec![x]),
                    weight: w,
                })
                .collect(),
            0.0,
        )
    }

    fn kuramoto_box() -> UniformPrior {
        UniformPrior::new(vec![(1.0, 3.0), (-2.0 * PI, 2.0 * PI), (0.0, 1.0)]).unwrap()
    }

    #[test]
    fn prior_density_examples() {
        let p = kuramoto_box();
        let d = p.density(&vec![2.0, 0.0, 0.5].into()).unwrap();
        assert_relative_eq!(d, 1.0 / (2.0 * 4.0 * PI), max_relative = 1e-15);
        assert_relative_eq!(d, 0.039788735772973836, max_relative = 1e-12);
        assert_eq!(p.density(&vec![0.5, 0.0, 0.5].into()).unwrap(), 0.0);
        let unit = UniformPrior::new(vec![(0.0, 1.0)]).unwrap();
        assert_eq!(unit.density(&vec![0.3].into()).unwrap(), 1.0);
        assert!(matches!(
            unit.density(&vec![0.3, 0.1].into()),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(UniformPrior::new(vec![(1.0, 1.0)]).is_err());
    }

    #[test]
    fn prior_samples_stay_in_box() {
        let p = kuramoto_box();
        let mut rng = RunSeed(3).aux_rng(0);
        for _ in 0..1000 {
            assert!(p.contains(&p.sample(&mut rng)));
        }
    }

    #[test]
    fn fit_kernel_examples() {
        let prior = UniformPrior::new(vec![(-10.0, 10.0)]).unwrap();
        let k = fit_kernel(&sample(&[0.0, 1.0], &[1.0, 1.0]), &prior).unwrap();
        assert_relative_eq!(k.variances()[0], 0.5, max_relative = 1e-15);
        let k = fit_kernel(&sample(&[-1.0, 1.0], &[1.0, 3.0]), &prior).unwrap();
        assert_relative_eq!(k.variances()[0], 1.5, max_relative = 1e-15);
        // Negative weights enter through |w|.
        let k = fit_kernel(&sample(&[-1.0, 1.0], &[-1.0, 3.0]), &prior).unwrap();
        assert_relative_eq!(k.variances()[0], 1.5, max_relative = 1e-15);
        let k = fit_kernel(&sample(&[0.3], &[1.0]), &prior).unwrap();
        assert_relative_eq!(k.variances()[0], KERNEL_VARIANCE_FLOOR * 400.0, max_relative = 1e-12);
        assert!(fit_kernel(&sample(&[0.3, 0.2], &[0.0, 0.0]), &prior).is_err());
    }

    #[test]
    fn fit_kernel_scale_invariant() {
        let prior = UniformPrior::new(vec![(-10.0, 10.0)]).unwrap();
        let a = fit_kernel(&sample(&[0.1, 1.7, -2.0], &[0.5, -1.25, 2.0]), &prior).unwrap();
        let b = fit_kernel(&sample(&[0.1, 1.7, -2.0], &[1.5, -3.75, 6.0]), &prior).unwrap();
        assert_relative_eq!(a.variances()[0], b.variances()[0], max_relative = 1e-14);
    }

    #[test]
    fn mixture_density_examples() {
        let prior = UniformPrior::new(vec![(-10.0, 10.0)]).unwrap();
        let kernel = PerturbationKernel::new(vec![0.25]).unwrap();
        let one = ImportanceDistribution::mixture(prior.clone(), &sample(&[1.0], &[2.0]), kernel.clone()).unwrap();
        let x = ParameterVector::new(vec![1.3]);
        assert_relative_eq!(one.q(&x), kernel.density(&[1.3], &[1.0]), max_relative = 1e-15);
        assert_eq!(one.q(&vec![11.0].into()), 0.0);

        let two = ImportanceDistribution::mixture(prior, &sample(&[0.0, 1.0], &[1.0, -3.0]), kernel.clone()).unwrap();
        let expected = 0.25 * kernel.density(&[0.4], &[0.0]) + 0.75 * kernel.density(&[0.4], &[1.0]);
        assert_relative_eq!(two.q(&vec![0.4].into()), expected, max_relative = 1e-14);
        // Gaussian normalisation: K(x|x) = 1/sqrt(2π·0.25).
        assert_relative_eq!(
            kernel.density(&[0.0], &[0.0]),
            1.0 / (2.0 * PI * 0.25).sqrt(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn mixture_integrates_to_one() {
        // Trapezoid quadrature over a box much wider than the kernel spread.
        let prior = UniformPrior::new(vec![(-20.0, 20.0)]).unwrap();
        let kernel = PerturbationKernel::new(vec![0.3]).unwrap();
        let q = ImportanceDistribution::mixture(prior, &sample(&[-1.0, 0.5, 2.0], &[1.0, -2.0, 0.5]), kernel).unwrap();
        let n = 40_000;
        let h = 40.0 / n as f64;
        let integral: f64 = (0..=n)
            .map(|i| {
                let x = -20.0 + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                w * q.q(&vec![x].into())
            })
            .sum::<f64>()
            * h;
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
    }

    #[test]
    fn mixture_sampling_concentrates_and_respects_support() {
        let prior = UniformPrior::new(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let kernel = PerturbationKernel::new(vec![1e-8, 1e-8]).unwrap();
        let s = WeightedSample::new(
            vec![WeightedParticle {
                theta: vec![0.5, 0.5].into(),
                weight: 1.0,
            }],
            0.0,
        );
        let q = ImportanceDistribution::mixture(prior.clone(), &s, kernel).unwrap();
        let mut rng = RunSeed(9).aux_rng(1);
        for _ in 0..500 {
            let t = q.sample(&mut rng).unwrap();
            assert!((t[0] - 0.5).abs() < 1e-3 && (t[1] - 0.5).abs() < 1e-3);
        }
        let pq = ImportanceDistribution::prior(prior.clone());
        for _ in 0..500 {
            assert!(prior.contains(&pq.sample(&mut rng).unwrap()));
        }
    }

    #[test]
    fn sampler_aborts_when_support_unreachable() {
        let prior = UniformPrior::new(vec![(0.0, 1.0)]).unwrap();
        let kernel = PerturbationKernel::new(vec![1e-6]).unwrap();
        let q = ImportanceDistribution::mixture(prior, &sample(&[50.0], &[1.0]), kernel)
            .unwrap()
            .with_max_rejections(100);
        let mut rng = RunSeed(1).aux_rng(2);
        assert!(matches!(q.sample(&mut rng), Err(Error::SamplerAbort(100))));
    }

    #[test]
    fn component_selection_frequencies() {
        let prior = UniformPrior::new(vec![(-100.0, 100.0)]).unwrap();
        let kernel = PerturbationKernel::new(vec![0.01]).unwrap();
        let q = ImportanceDistribution::mixture(prior, &sample(&[-5.0, 5.0], &[1.0, 3.0]), kernel).unwrap();
        let mut rng = RunSeed(17).aux_rng(3);
        let n = 10_000;
        let second = (0..n)
            .filter(|_| q.sample_with_component(&mut rng).unwrap().1 == Some(1))
            .count() as f64;
        let sigma = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((second - 0.75 * n as f64).abs() < 3.0 * sigma, "{second}");
    }

    #[test]
    fn serde_revalidates() {
        let prior: UniformPrior = serde_json::from_str("[[0.0, 2.0], [1.0, 5.0]]").unwrap();
        assert_eq!(prior.density(&ParameterVector::new(vec![1.0, 2.0])).unwrap(), 0.125);
        assert!(serde_json::from_str::<UniformPrior>("[[1.0, 0.0]]").is_err());
        let kernel: PerturbationKernel = serde_json::from_str("[4.0]").unwrap();
        assert_eq!(kernel, PerturbationKernel::new(vec![4.0]).unwrap());
        assert_eq!(serde_json::to_string(&kernel).unwrap(), "[4.0]");
        assert!(serde_json::from_str::<PerturbationKernel>("[-1.0]").is_err());
    }
}
