//! Shared fixtures: an enumerable two-point model and small Kuramoto setups.
#![allow(dead_code)]

use mfabc::rng::SimRng;
use mfabc::*;
use rand::Rng;

/// Parameter space `{0, 1}` with a probability mass function standing in
/// for a density.
#[derive(Debug, Clone)]
pub struct TwoPointPmf(pub [f64; 2]);

impl TwoPointPmf {
    fn index(theta: &ParameterVector) -> Option<usize> {
        if theta[0] == 0.0 {
            Some(0)
        } else if theta[0] == 1.0 {
            Some(1)
        } else {
            None
        }
    }

    fn draw(&self, rng: &mut SimRng) -> ParameterVector {
        let x = if rng.gen::<f64>() < self.0[0] { 0.0 } else { 1.0 };
        ParameterVector::new(vec![x])
    }
}

impl Prior for TwoPointPmf {
    fn dim(&self) -> usize {
        1
    }

    fn density_unchecked(&self, theta: &ParameterVector) -> f64 {
        Self::index(theta).map_or(0.0, |i| self.0[i])
    }

    fn sample(&self, rng: &mut SimRng) -> ParameterVector {
        self.draw(rng)
    }

    fn scales(&self) -> Vec<f64> {
        vec![1.0]
    }
}

impl Proposal for TwoPointPmf {
    fn sample(&self, rng: &mut SimRng) -> Result<ParameterVector> {
        Ok(self.draw(rng))
    }

    fn q(&self, theta: &ParameterVector) -> f64 {
        Self::index(theta).map_or(0.0, |i| self.0[i])
    }
}

/// Joint law of `(ỹ ∈ Ω, y ∈ Ω)` for each parameter value, with synthetic
/// simulation costs. Summaries are `0` inside the neighbourhood and `2`
/// outside; the observation is `0` and `ε = 1`.
#[derive(Debug, Clone)]
pub struct TwoPointModel {
    /// `joint[θ][2·I(ỹ∈Ω) + I(y∈Ω)]`.
    pub joint: [[f64; 4]; 2],
    pub lo_cost: [u64; 2],
    /// `hi_cost[θ][I(ỹ∈Ω)]`.
    pub hi_cost: [[u64; 2]; 2],
}

pub const EPS: f64 = 1.0;

pub fn observed() -> Neighborhood {
    Neighborhood::new(EPS, SummaryVector(vec![0.0])).unwrap()
}

fn summary(inside: bool) -> SummaryVector {
    SummaryVector(vec![if inside { 0.0 } else { 2.0 }])
}

impl TwoPointModel {
    pub fn standard() -> Self {
        TwoPointModel {
            joint: [[0.30, 0.10, 0.05, 0.55], [0.15, 0.25, 0.10, 0.50]],
            lo_cost: [1_000, 1_500],
            hi_cost: [[40_000, 30_000], [60_000, 45_000]],
        }
    }

    fn theta_index(theta: &ParameterVector) -> usize {
        (theta[0] == 1.0) as usize
    }

    pub fn p_lo(&self, i: usize) -> f64 {
        self.joint[i][3] + self.joint[i][2]
    }

    pub fn p_hi(&self, i: usize) -> f64 {
        self.joint[i][3] + self.joint[i][1]
    }

    pub fn p(&self, i: usize, lo: bool, hi: bool) -> f64 {
        self.joint[i][2 * lo as usize + hi as usize]
    }
}

impl CoupledModel for TwoPointModel {
    fn simulate_lo(&self, theta: &ParameterVector, rng: &mut SimRng) -> Simulation {
        let i = Self::theta_index(theta);
        Simulation::ok(summary(rng.gen::<f64>() < self.p_lo(i))).with_cost_ns(self.lo_cost[i])
    }

    fn simulate_hi(&self, theta: &ParameterVector, lo: Option<&SummaryVector>, rng: &mut SimRng) -> Simulation {
        let i = Self::theta_index(theta);
        let lo_in = match lo {
            Some(s) => s.0[0] == 0.0,
            None => rng.gen::<f64>() < self.p_lo(i),
        };
        let p_hi_given_lo = self.p(i, lo_in, true) / (self.p(i, lo_in, true) + self.p(i, lo_in, false));
        let hi_in = rng.gen::<f64>() < p_hi_given_lo;
        Simulation::ok(summary(hi_in)).with_cost_ns(self.hi_cost[i][lo_in as usize])
    }

    fn distance(&self, a: &SummaryVector, b: &SummaryVector) -> f64 {
        (a.0[0] - b.0[0]).abs()
    }
}

/// Exact values by summing over the two parameter values.
pub struct Enumeration {
    pub z: f64,
    pub posterior_mean: f64,
    pub coefficients: EfficiencyCoefficients,
}

pub fn enumerate(model: &TwoPointModel, prior: &TwoPointPmf, q_star: &TwoPointPmf) -> Enumeration {
    let (mut z, mut first_moment) = (0.0, 0.0);
    let mut c = EfficiencyCoefficients {
        z: 0.0,
        w: 0.0,
        w_fp: 0.0,
        w_fn: 0.0,
        t_lo: 0.0,
        t_hi_p: 0.0,
        t_hi_n: 0.0,
    };
    for i in 0..2 {
        let (pi, qs) = (prior.0[i], q_star.0[i]);
        z += pi * model.p_hi(i);
        first_moment += i as f64 * pi * model.p_hi(i);
        let r = pi * pi / qs;
        c.w += r * model.p_hi(i);
        c.w_fp += r * model.p(i, true, false);
        c.w_fn += r * model.p(i, false, true);
        c.t_lo += qs * model.lo_cost[i] as f64 * 1e-9;
        c.t_hi_p += qs * model.p_lo(i) * model.hi_cost[i][1] as f64 * 1e-9;
        c.t_hi_n += qs * (1.0 - model.p_lo(i)) * model.hi_cost[i][0] as f64 * 1e-9;
    }
    c.z = z;
    Enumeration {
        z,
        posterior_mean: first_moment / z,
        coefficients: c,
    }
}

/// Mean and standard error of per-proposal contributions.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-proposal contributions to the seven coefficient estimators, computed
/// from the raw cache fields.
pub fn coefficient_contributions(
    cache: &ParticleCache,
    prior: &TwoPointPmf,
    q_star: &TwoPointPmf,
    eps: f64,
) -> [Vec<f64>; 7] {
    let mut out: [Vec<f64>; 7] = Default::default();
    for e in &cache.entries {
        let pi = prior.density(&e.theta).unwrap();
        let qs = q_star.q(&e.theta);
        let lo = e.lo.unwrap();
        let lo_in = lo.d < eps;
        let hi = e.hi.map(|h| (h.d < eps, h.t_ns as f64 * 1e-9));
        let ind = |b: bool| b as u8 as f64;
        let base = pi / e.q_value;
        let corr = hi.map_or(0.0, |(h, _)| (ind(h) - ind(lo_in)) / e.alpha);
        out[0].push(base * (ind(lo_in) + corr));
        let wr = pi * pi / (qs * e.q_value);
        out[1].push(wr * (ind(lo_in) + corr));
        out[2].push(hi.map_or(0.0, |(h, _)| wr / e.alpha * ind(lo_in && !h)));
        out[3].push(hi.map_or(0.0, |(h, _)| wr / e.alpha * ind(!lo_in && h)));
        out[4].push(qs / e.q_value * lo.t_ns as f64 * 1e-9);
        out[5].push(hi.map_or(0.0, |(_, t)| qs / (e.q_value * e.alpha) * t * ind(lo_in)));
        out[6].push(hi.map_or(0.0, |(_, t)| qs / (e.q_value * e.alpha) * t * ind(!lo_in)));
    }
    out
}

pub fn coefficient_array(c: &EfficiencyCoefficients) -> [f64; 7] {
    [c.z, c.w, c.w_fp, c.w_fn, c.t_lo, c.t_hi_p, c.t_hi_n]
}

pub const COEFFICIENT_NAMES: [&str; 7] = ["Z", "W", "W_fp", "W_fn", "T_lo", "T_hi,p", "T_hi,n"];

/// Result of the discrete-model oracle check over several seeds.
pub struct ToyReport {
    pub seeds: usize,
    pub z_hits: usize,
    pub mean_hits: usize,
    pub coefficient_hits: [usize; 7],
}

pub fn toy_oracle(seeds: u64, n: usize) -> ToyReport {
    let model = TwoPointModel::standard();
    let prior = TwoPointPmf([0.3, 0.7]);
    let q = TwoPointPmf([0.6, 0.4]);
    let q_star = TwoPointPmf([0.45, 0.55]);
    let exact = enumerate(&model, &prior, &q_star);
    let policy = ContinuationPolicy::new(0.5, 0.3).unwrap();
    let mut report = ToyReport {
        seeds: seeds as usize,
        z_hits: 0,
        mean_hits: 0,
        coefficient_hits: [0; 7],
    };
    for seed in 0..seeds {
        let settings = SamplerSettings {
            batch_size: 10_000,
            ..SamplerSettings::new(RunSeed(1000 + seed))
        };
        let (sample, cache) = mf_abc_is(
            &model,
            &prior,
            &q,
            &observed(),
            policy,
            StoppingCondition::MaxProposals(n),
            &settings,
        )
        .unwrap();
        let w: Vec<f64> = sample.weights().collect();
        let (z, z_se) = mean_se(&w);
        report.z_hits += ((z - exact.z).abs() <= 3.0 * z_se) as usize;

        let mean = sample.estimate(|t| t[0]).unwrap();
        let total: f64 = w.iter().sum();
        let resid: f64 = sample
            .particles
            .iter()
            .map(|p| (p.weight * (p.theta[0] - mean)).powi(2))
            .sum();
        let mean_se = resid.sqrt() / total;
        report.mean_hits += ((mean - exact.posterior_mean).abs() <= 3.0 * mean_se) as usize;

        let estimated = coefficient_array(&estimate_coefficients(&cache, &prior, &q_star, EPS).unwrap());
        let contributions = coefficient_contributions(&cache, &prior, &q_star, EPS);
        let exact_c = coefficient_array(&exact.coefficients);
        for k in 0..7 {
            let (_, se) = self::mean_se(&contributions[k]);
            report.coefficient_hits[k] += ((estimated[k] - exact_c[k]).abs() <= 3.0 * se) as usize;
        }
    }
    report
}

/// Coefficient sets for optimiser checks, half of them with
/// `W ≤ W_fp + W_fn` and a few with a vanishing false-positive or
/// false-negative term.
pub fn random_coefficients(seed: u64, count: usize) -> Vec<EfficiencyCoefficients> {
    let mut rng = RunSeed(seed).aux_rng(99);
    (0..count)
        .map(|i| {
            let mut w_fp: f64 = rng.gen_range(0.01..1.0);
            let mut w_fn: f64 = rng.gen_range(0.01..1.0);
            match i % 10 {
                3 => w_fp = 0.0,
                7 => w_fn = 0.0,
                _ => {}
            }
            let scale = if i % 2 == 0 {
                rng.gen_range(1.05..4.0)
            } else {
                rng.gen_range(0.3..1.0)
            };
            let w = (w_fp + w_fn).max(0.05) * scale;
            let t = |rng: &mut SimRng| 10f64.powf(rng.gen_range(-2.0..1.0));
            EfficiencyCoefficients {
                z: rng.gen_range(0.1..2.0),
                w,
                w_fp,
                w_fn,
                t_lo: t(&mut rng),
                t_hi_p: t(&mut rng),
                t_hi_n: t(&mut rng),
            }
        })
        .collect()
}

/// Smallest φ on an `n × n` grid covering `[ρ₁, 1] × [ρ₂, 1]`.
pub fn grid_minimum(c: &EfficiencyCoefficients, bounds: &EtaBounds, n: usize) -> f64 {
    let axis = |rho: f64| (0..n).map(move |k| rho + (1.0 - rho) * k as f64 / (n - 1) as f64);
    let mut best = f64::INFINITY;
    for e1 in axis(bounds.rho1) {
        for e2 in axis(bounds.rho2) {
            best = best.min(phi(c, e1, e2).unwrap());
        }
    }
    best
}

/// Count of coefficient sets where the optimiser beats the grid.
pub fn optimizer_grid_check(seed: u64, count: usize, n: usize) -> (usize, usize, bool) {
    let bounds = EtaBounds::default();
    let sets = random_coefficients(seed, count);
    let mut ok = 0;
    let mut in_h = true;
    let covers_both = sets.iter().any(|c| c.w > c.w_fp + c.w_fn) && sets.iter().any(|c| c.w <= c.w_fp + c.w_fn);
    for c in &sets {
        let (policy, phi_star) = optimal_continuation(c, &bounds).unwrap();
        in_h &= bounds.contains(policy.eta1, policy.eta2);
        let grid = grid_minimum(c, &bounds, n);
        if phi_star <= grid * (1.0 + 1e-9)
            && (phi(c, policy.eta1, policy.eta2).unwrap() - phi_star).abs() <= 1e-12 * phi_star
        {
            ok += 1;
        }
    }
    (ok, sets.len(), in_h && covers_both)
}
