//! Kuramoto oscillator benchmark.
//!
//! High fidelity: `M` oscillators on a complete graph with Cauchy-distributed
//! intrinsic frequencies, `φ̇_i = ω_i + (K/M) Σ_j sin(φ_j − φ_i)`.
//! Low fidelity: the Ott–Antonsen reduction for the order parameter,
//! `Ṙ = (K/2 − γ) R − (K/2) R³`, `Φ̇ = ω₀`, started at `(R, Φ) = (1, 0)`.
//!
//! Both are reduced to three summaries of the order parameter
//! `Z₁ = R e^{iΦ} = (1/M) Σ_j e^{iφ_j}` on `[0, t_end]`: the squared time
//! average of `R`, the mean phase velocity, and `R` at a fixed time `t_half`.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CoupledModel, Simulation, SummaryVector, UniformPrior};
use crate::ode::{Dopri5, SolveStats};
use crate::rng::{RunSeed, SimRng};
use crate::sample::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KuramotoParams {
    /// Coupling strength.
    #[serde(rename = "K")]
    pub k: f64,
    /// Median intrinsic angular velocity.
    pub omega0: f64,
    /// Cauchy dispersion of the intrinsic angular velocities.
    pub gamma: f64,
}

impl KuramotoParams {
    /// Parameters used to generate the synthetic data set.
    pub const TRUE: KuramotoParams = KuramotoParams {
        k: 2.0,
        omega0: PI / 3.0,
        gamma: 0.1,
    };

    pub fn new(k: f64, omega0: f64, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !k.is_finite() || !omega0.is_finite() || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "invalid Kuramoto parameters (K={k}, omega0={omega0}, gamma={gamma})"
            )));
        }
        Ok(KuramotoParams { k, omega0, gamma })
    }

    /// Parameters from `(K, ω₀, γ)`.
    pub fn from_theta(theta: &ParameterVector) -> Result<Self> {
        match theta.as_slice() {
            &[k, omega0, gamma] => Self::new(k, omega0, gamma),
            other => Err(Error::DimensionMismatch {
                expected: 3,
                got: other.len(),
            }),
        }
    }

    pub fn to_theta(&self) -> ParameterVector {
        ParameterVector::new(vec![self.k, self.omega0, self.gamma])
    }
}

/// Uniform priors `K ∈ [1, 3]`, `ω₀ ∈ [−2π, 2π]`, `γ ∈ [0, 1]`.
pub fn default_prior() -> UniformPrior {
    UniformPrior::new(vec![(1.0, 3.0), (-2.0 * PI, 2.0 * PI), (0.0, 1.0)]).expect("static bounds are valid")
}

/// How simulation cost is reported to the samplers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// Deterministic cost from solver work counts, so runs whose
    /// continuation probabilities depend on cost estimates are reproducible.
    #[default]
    Work,
    /// Measured wall-clock time.
    WallClock,
}

// Work-model rates, fitted to wall-clock measurements of both models over
// prior draws at M = 16..256.
const NS_PER_STATE_EVAL: f64 = 21.0;
const NS_PER_STATE_SAMPLE: f64 = 8.0;
const NS_PER_GRID_POINT: f64 = 4.0;

/// Modelled cost in nanoseconds of an integration of `dim` states with the
/// given solver counters, sampled on `grid_points` output times.
pub fn work_cost_ns(stats: &SolveStats, dim: usize, grid_points: usize) -> u64 {
    let evals = stats.rhs_evals as f64 * dim as f64;
    let samples = grid_points as f64 * dim as f64;
    (NS_PER_STATE_EVAL * evals + NS_PER_STATE_SAMPLE * samples + NS_PER_GRID_POINT * grid_points as f64).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KuramotoConfig {
    /// Number of oscillators `M`.
    pub oscillators: usize,
    pub t_end: f64,
    /// Uniform output grid on `[0, t_end]` used for the summaries.
    pub grid_points: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub timing: Timing,
}

impl Default for KuramotoConfig {
    fn default() -> Self {
        KuramotoConfig {
            oscillators: 256,
            t_end: 30.0,
            grid_points: 3001,
            rtol: 1e-6,
            atol: 1e-8,
            max_steps: 200_000,
            timing: Timing::Work,
        }
    }
}

impl KuramotoConfig {
    pub fn with_oscillators(mut self, m: usize) -> Self {
        self.oscillators = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.oscillators < 2 {
            return Err(Error::InvalidArgument("need at least two oscillators".into()));
        }
        if !(self.t_end > 0.0) || self.grid_points < 2 {
            return Err(Error::InvalidArgument(
                "need a positive horizon and at least two grid points".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points - 1;
        (0..=n).map(|i| self.t_end * i as f64 / n as f64).collect()
    }

    fn solver(&self) -> Dopri5 {
        Dopri5 {
            rtol: self.rtol,
            atol: self.atol,
            max_steps: self.max_steps,
        }
    }
}

/// `(S₁, S₂, S₃)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KuramotoSummary {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl From<KuramotoSummary> for SummaryVector {
    fn from(s: KuramotoSummary) -> Self {
        SummaryVector(vec![s.s1, s.s2, s.s3])
    }
}

impl KuramotoSummary {
    pub fn from_vector(v: &SummaryVector) -> Result<Self> {
        match v.as_slice() {
            &[s1, s2, s3] => Ok(KuramotoSummary { s1, s2, s3 }),
            other => Err(Error::DimensionMismatch {
                expected: 3,
                got: other.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedData {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub t_half: f64,
    pub seed: u64,
    pub true_params: KuramotoParams,
}

impl ObservedData {
    pub fn summary(&self) -> KuramotoSummary {
        KuramotoSummary {
            s1: self.s1,
            s2: self.s2,
            s3: self.s3,
        }
    }
}

/// Sampled order-parameter trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    /// Wrapped phase in `(−π, π]`; unwrapped by [`summarize`].
    pub phase: Vec<f64>,
}

/// Weighted Euclidean distance `√(4Δ₁² + Δ₂² + Δ₃²)`.
pub fn distance(a: &KuramotoSummary, b: &KuramotoSummary) -> f64 {
    (4.0 * (a.s1 - b.s1).powi(2) + (a.s2 - b.s2).powi(2) + (a.s3 - b.s3).powi(2)).sqrt()
}

/// Remove `2π` jumps between consecutive samples.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    for (i, &p) in phase.iter().enumerate() {
        if i > 0 {
            let jump = p - phase[i - 1];
            if jump > PI {
                offset -= 2.0 * PI * ((jump + PI) / (2.0 * PI)).floor();
            } else if jump < -PI {
                offset += 2.0 * PI * ((-jump + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(p + offset);
    }
    out
}

fn interpolate(t: &[f64], y: &[f64], at: f64) -> Result<f64> {
    let (first, last) = (t[0], t[t.len() - 1]);
    if !(at >= first && at <= last) {
        return Err(Error::InvalidArgument(format!(
            "t_half = {at} outside the sampled interval [{first}, {last}]"
        )));
    }
    let j = t.partition_point(|&x| x <= at);
    if j == 0 {
        return Ok(y[0]);
    }
    if j >= t.len() {
        return Ok(y[t.len() - 1]);
    }
    let (t0, t1) = (t[j - 1], t[j]);
    let s = (at - t0) / (t1 - t0);
    Ok(y[j - 1] + s * (y[j] - y[j - 1]))
}

/// Summaries of a trajectory: squared trapezoidal time-average of `R`, mean
/// phase velocity of the unwrapped phase, and `R(t_half)` by linear
/// interpolation.
pub fn summarize(traj: &Trajectory, t_half: f64) -> Result<KuramotoSummary> {
    let n = traj.t.len();
    if n < 2 || traj.r.len() != n || traj.phase.len() != n {
        return Err(Error::InvalidArgument(
            "trajectory needs at least two aligned samples".into(),
        ));
    }
    let span = traj.t[n - 1] - traj.t[0];
    let integral: f64 = traj
        .t
        .windows(2)
        .zip(traj.r.windows(2))
        .map(|(t, r)| 0.5 * (t[1] - t[0]) * (r[0] + r[1]))
        .sum();
    let unwrapped = unwrap_phase(&traj.phase);
    Ok(KuramotoSummary {
        s1: (integral / span).powi(2),
        s2: (unwrapped[n - 1] - unwrapped[0]) / span,
        s3: interpolate(&traj.t, &traj.r, t_half)?,
    })
}

// Joint sine and cosine with one Cody–Waite reduction by π/2 and the fdlibm
// kernel polynomials on [−π/4, π/4]. Large arguments go to the standard
// library.
const FRAC_2_PI: f64 = std::f64::consts::FRAC_2_PI;
#[allow(clippy::excessive_precision)]
const PIO2_1: f64 = 1.570_796_326_734_125_614_17e0;
#[allow(clippy::excessive_precision)]
const PIO2_2: f64 = 6.077_100_506_303_965_976_60e-11;
#[allow(clippy::excessive_precision)]
const PIO2_3: f64 = 2.022_266_248_711_166_455_80e-21;
#[allow(clippy::excessive_precision)]
const S: [f64; 6] = [
    -1.666_666_666_666_663_243_48e-1,
    8.333_333_333_322_489_461_24e-3,
    -1.984_126_982_985_794_931_34e-4,
    2.755_731_370_707_006_767_89e-6,
    -2.505_076_025_340_686_341_95e-8,
    1.589_690_995_211_550_102_21e-10,
];
#[allow(clippy::excessive_precision)]
const C: [f64; 6] = [
    4.166_666_666_666_660_190_37e-2,
    -1.388_888_888_887_410_957_49e-3,
    2.480_158_728_947_672_941_78e-5,
    -2.755_731_435_139_066_330_35e-7,
    2.087_572_321_298_174_827_90e-9,
    -1.135_964_755_778_819_482_65e-11,
];

#[inline]
pub(crate) fn sin_cos(x: f64) -> (f64, f64) {
    if !(x.abs() < 1e5) {
        return x.sin_cos();
    }
    // Round to nearest by adding and removing 1.5·2⁵², avoiding a libm call.
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    let k = (x * FRAC_2_PI + SHIFT) - SHIFT;
    let r = ((x - k * PIO2_1) - k * PIO2_2) - k * PIO2_3;
    let z = r * r;
    let s = r + r * z * (S[0] + z * (S[1] + z * (S[2] + z * (S[3] + z * (S[4] + z * S[5])))));
    let c = 1.0 - 0.5 * z + z * z * (C[0] + z * (C[1] + z * (C[2] + z * (C[3] + z * (C[4] + z * C[5])))));
    match (k as i64) & 3 {
        0 => (s, c),
        1 => (c, -s),
        2 => (-s, -c),
        _ => (-c, s),
    }
}

/// Order parameter `(Re Z₁, Im Z₁)` of a phase vector.
pub fn order_parameter(phases: &[f64]) -> (f64, f64) {
    let (mut c, mut s) = (0.0, 0.0);
    for &p in phases {
        let (sp, cp) = sin_cos(p);
        c += cp;
        s += sp;
    }
    let m = phases.len() as f64;
    (c / m, s / m)
}

/// Network right-hand side through the order parameter, `O(M)`.
pub fn network_rhs(k: f64, omega: &[f64], phases: &[f64], out: &mut [f64], scratch: &mut Vec<(f64, f64)>) {
    scratch.clear();
    let (mut c, mut s) = (0.0, 0.0);
    for &p in phases {
        let sc = sin_cos(p);
        c += sc.1;
        s += sc.0;
        scratch.push(sc);
    }
    let m = phases.len() as f64;
    let (zr, zi) = (c / m, s / m);
    for ((o, w), (sp, cp)) in out.iter_mut().zip(omega).zip(scratch.iter()) {
        // R sin(Φ − φ) = Im(Z₁) cos φ − Re(Z₁) sin φ
        *o = w + k * (zi * cp - zr * sp);
    }
}

/// Network right-hand side by the direct double sum, `O(M²)`.
pub fn network_rhs_direct(k: f64, omega: &[f64], phases: &[f64], out: &mut [f64]) {
    let m = phases.len() as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let coupling: f64 = phases.iter().map(|pj| (pj - phases[i]).sin()).sum();
        *o = omega[i] + k / m * coupling;
    }
}

/// Draw `M` intrinsic frequencies from `Cauchy(ω₀, γ)` by inversion.
pub fn draw_frequencies(params: &KuramotoParams, m: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..m)
        .map(|_| {
            let v: f64 = rng.sample(Open01);
            params.omega0 + params.gamma * (PI * (v - 0.5)).tan()
        })
        .collect()
}

/// Integrate the oscillator network and sample its order parameter.
pub fn network_trajectory(
    params: &KuramotoParams,
    config: &KuramotoConfig,
    rng: &mut SimRng,
) -> Result<(Trajectory, SolveStats)> {
    config.validate()?;
    let omega = draw_frequencies(params, config.oscillators, rng);
    let grid = config.grid();
    let mut r = vec![0.0; grid.len()];
    let mut phase = vec![0.0; grid.len()];
    let mut scratch = Vec::with_capacity(config.oscillators);
    let k = params.k;
    let stats = config.solver().solve(
        |_, y, dy| network_rhs(k, &omega, y, dy, &mut scratch),
        0.0,
        &vec![0.0; config.oscillators],
        config.t_end,
        &grid,
        |i, _, y| {
            let (zr, zi) = order_parameter(y);
            r[i] = zr.hypot(zi);
            phase[i] = zi.atan2(zr);
        },
        |_, _| {},
    )?;
    if r.iter().chain(&phase).any(|x| !x.is_finite()) {
        return Err(Error::Solver("non-finite order parameter".into()));
    }
    Ok((Trajectory { t: grid, r, phase }, stats))
}

/// Integrate the Ott–Antonsen reduction and sample its order parameter.
pub fn reduced_trajectory(params: &KuramotoParams, config: &KuramotoConfig) -> Result<(Trajectory, SolveStats)> {
    config.validate()?;
    let grid = config.grid();
    let mut r = vec![0.0; grid.len()];
    let mut phase = vec![0.0; grid.len()];
    let (half_k, gamma, omega0) = (0.5 * params.k, params.gamma, params.omega0);
    let stats = config.solver().solve(
        |_, y, dy| {
            dy[0] = (half_k - gamma) * y[0] - half_k * y[0].powi(3);
            dy[1] = omega0;
        },
        0.0,
        &[1.0, 0.0],
        config.t_end,
        &grid,
        |i, _, y| {
            r[i] = y[0];
            phase[i] = y[1];
        },
        |_, _| {},
    )?;
    if r.iter().chain(&phase).any(|x| !x.is_finite()) {
        return Err(Error::Solver("non-finite reduced trajectory".into()));
    }
    Ok((Trajectory { t: grid, r, phase }, stats))
}

/// High-fidelity summaries and the wall-clock time to produce them.
pub fn simulate_hi(
    params: &KuramotoParams,
    config: &KuramotoConfig,
    t_half: f64,
    rng: &mut SimRng,
) -> (Result<KuramotoSummary>, Duration) {
    let start = Instant::now();
    let out = network_trajectory(params, config, rng).and_then(|(traj, _)| summarize(&traj, t_half));
    (out, start.elapsed())
}

/// Low-fidelity summaries and the wall-clock time to produce them.
pub fn simulate_lo(
    params: &KuramotoParams,
    config: &KuramotoConfig,
    t_half: f64,
) -> (Result<KuramotoSummary>, Duration) {
    let start = Instant::now();
    let out = reduced_trajectory(params, config).and_then(|(traj, _)| summarize(&traj, t_half));
    (out, start.elapsed())
}

/// First grid time at which `R` has fallen halfway from `R(0) = 1` to its
/// time-averaged value.
pub fn half_time(traj: &Trajectory) -> Result<f64> {
    let n = traj.t.len();
    let span = traj.t[n - 1] - traj.t[0];
    let mean_r: f64 = traj
        .t
        .windows(2)
        .zip(traj.r.windows(2))
        .map(|(t, r)| 0.5 * (t[1] - t[0]) * (r[0] + r[1]))
        .sum::<f64>()
        / span;
    let midpoint = 0.5 * (1.0 + mean_r);
    traj.t
        .iter()
        .zip(&traj.r)
        .skip(1)
        .find(|(_, &r)| r <= midpoint)
        .map(|(&t, _)| t)
        .filter(|&t| t > 0.0 && t < traj.t[n - 1])
        .ok_or(Error::NoCrossing)
}

/// Synthetic observed data from one high-fidelity run at the true parameters.
pub fn generate_observed(config: &KuramotoConfig, seed: u64) -> Result<ObservedData> {
    let params = KuramotoParams::TRUE;
    let mut rng = RunSeed(seed).aux_rng(0x0b5e_57ed);
    let (traj, _) = network_trajectory(&params, config, &mut rng)?;
    let t_half = half_time(&traj)?;
    let s = summarize(&traj, t_half)?;
    Ok(ObservedData {
        s1: s.s1,
        s2: s.s2,
        s3: s.s3,
        t_half,
        seed,
        true_params: params,
    })
}

/// The network/reduction pair as a coupled model. The high-fidelity
/// simulation ignores the low-fidelity output.
#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoModel {
    pub config: KuramotoConfig,
    pub t_half: f64,
}

impl KuramotoModel {
    pub fn new(config: KuramotoConfig, t_half: f64) -> Result<Self> {
        config.validate()?;
        if !(t_half > 0.0 && t_half <= config.t_end) {
            return Err(Error::InvalidArgument(format!(
                "t_half = {t_half} outside (0, {}]",
                config.t_end
            )));
        }
        Ok(KuramotoModel { config, t_half })
    }

    pub fn for_data(config: KuramotoConfig, data: &ObservedData) -> Result<Self> {
        Self::new(config, data.t_half)
    }
}

impl KuramotoModel {
    fn finish(&self, out: Result<(Trajectory, SolveStats)>, dim: usize) -> Simulation {
        let cost = |stats: &SolveStats| work_cost_ns(stats, dim, self.config.grid_points);
        let (sim, stats) = match out {
            Ok((traj, stats)) => match summarize(&traj, self.t_half) {
                Ok(s) => (Simulation::ok(s.into()), stats),
                Err(_) => (Simulation::failed(), stats),
            },
            // A failed integration is charged as if it ran to the step limit.
            Err(_) => (
                Simulation::failed(),
                SolveStats {
                    rhs_evals: 6 * self.config.max_steps,
                    ..Default::default()
                },
            ),
        };
        match self.config.timing {
            Timing::Work => sim.with_cost_ns(cost(&stats)),
            Timing::WallClock => sim,
        }
    }
}

impl CoupledModel for KuramotoModel {
    fn simulate_lo(&self, theta: &ParameterVector, _rng: &mut SimRng) -> Simulation {
        match KuramotoParams::from_theta(theta) {
            Ok(p) => self.finish(reduced_trajectory(&p, &self.config), 2),
            Err(_) => Simulation::failed(),
        }
    }

    fn simulate_hi(&self, theta: &ParameterVector, _lo: Option<&SummaryVector>, rng: &mut SimRng) -> Simulation {
        match KuramotoParams::from_theta(theta) {
            Ok(p) => self.finish(network_trajectory(&p, &self.config, rng), self.config.oscillators),
            Err(_) => Simulation::failed(),
        }
    }

    fn distance(&self, a: &SummaryVector, b: &SummaryVector) -> f64 {
        match (KuramotoSummary::from_vector(a), KuramotoSummary::from_vector(b)) {
            (Ok(a), Ok(b)) => distance(&a, &b),
            _ => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn traj(r: impl Fn(f64) -> f64, phase: impl Fn(f64) -> f64) -> Trajectory {
        let t: Vec<f64> = (0..=3000).map(|i| i as f64 * 0.01).collect();
        Trajectory {
            r: t.iter().map(|&x| r(x)).collect(),
            phase: t.iter().map(|&x| phase(x)).collect(),
            t,
        }
    }

    #[test]
    fn distance_examples() {
        let z = KuramotoSummary {
            s1: 0.0,
            s2: 0.0,
            s3: 0.0,
        };
        let a = KuramotoSummary {
            s1: 0.3,
            s2: 1.2,
            s3: -0.4,
        };
        assert_eq!(distance(&a, &a), 0.0);
        assert_eq!(distance(&KuramotoSummary { s1: 1.0, ..z }, &z), 2.0);
        assert_relative_eq!(distance(&KuramotoSummary { s2: 1.0, s3: 1.0, ..z }, &z), 2f64.sqrt());
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&traj(|_| 0.7, |_| 0.0), 10.0).unwrap();
        assert_relative_eq!(s.s1, 0.49, max_relative = 1e-12);
        // Wrapped linear phase 2t.
        let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
        let s = summarize(&traj(|_| 1.0, |t| wrap(2.0 * t)), 10.0).unwrap();
        assert_relative_eq!(s.s2, 2.0, max_relative = 1e-12);
        let s = summarize(&traj(|t| 1.0 - t / 30.0, |_| 0.0), 15.0).unwrap();
        assert_relative_eq!(s.s3, 0.5, max_relative = 1e-12);
        assert!(summarize(&traj(|_| 1.0, |_| 0.0), 31.0).is_err());
    }

    #[test]
    fn unwrap_handles_negative_rotation() {
        let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
        let raw: Vec<f64> = (0..200).map(|i| wrap(-0.5 * i as f64)).collect();
        let un = unwrap_phase(&raw);
        for (i, u) in un.iter().enumerate() {
            assert_relative_eq!(*u, -0.5 * i as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn sin_cos_matches_std() {
        let mut rng = RunSeed(11).aux_rng(0);
        for i in 0..200_000 {
            let scale = [1.0, 10.0, 1e3, 9e4, 1e7][i % 5];
            let x = (rng.gen::<f64>() * 2.0 - 1.0) * scale;
            let (s, c) = sin_cos(x);
            let ulps = 4.0 * f64::EPSILON * x.abs().max(1.0) / 1e4;
            assert!((s - x.sin()).abs() <= ulps.max(4e-16), "sin {x}");
            assert!((c - x.cos()).abs() <= ulps.max(4e-16), "cos {x}");
        }
        for x in [0.0, -0.0, PI / 4.0, PI / 2.0, PI, -PI, 1e5, f64::INFINITY] {
            let (s, c) = sin_cos(x);
            assert!(s.is_nan() && x.is_infinite() || (s - x.sin()).abs() < 1e-15);
            assert!(c.is_nan() && x.is_infinite() || (c - x.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn rhs_identity_matches_double_sum() {
        let mut rng = RunSeed(5).aux_rng(0);
        for m in [2usize, 7, 64] {
            let phases: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 20.0 - 10.0).collect();
            let omega: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
            let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
            network_rhs(1.7, &omega, &phases, &mut a, &mut Vec::new());
            network_rhs_direct(1.7, &omega, &phases, &mut b);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn reduced_model_analytics() {
        let config = KuramotoConfig::default();
        let p = KuramotoParams::TRUE;
        let (traj, _) = reduced_trajectory(&p, &config).unwrap();
        let r_end = *traj.r.last().unwrap();
        assert!((r_end - (1.0 - 2.0 * p.gamma / p.k).sqrt()).abs() < 1e-3);
        let s = summarize(&traj, 5.0).unwrap();
        assert!((s.s2 - p.omega0).abs() < 1e-6);
        assert!(traj.r.iter().all(|&r| (0.0..=1.0 + 1e-12).contains(&r)));

        let critical = KuramotoParams::new(0.4, 1.0, 0.2).unwrap();
        let (traj, _) = reduced_trajectory(&critical, &config).unwrap();
        assert!(traj.r.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*traj.r.last().unwrap() < 0.5);
    }

    #[test]
    fn reduced_model_is_deterministic() {
        let model = KuramotoModel::new(KuramotoConfig::default(), 3.0).unwrap();
        let theta = ParameterVector::new(vec![1.5, -2.0, 0.3]);
        let mut rng = RunSeed(0).aux_rng(0);
        let a = model.simulate_lo(&theta, &mut rng);
        let b = model.simulate_lo(&theta, &mut rng);
        assert_eq!(a, b);
        assert!(a.summary.is_some());
    }

    #[test]
    fn homogeneous_uncoupled_network_stays_synchronised() {
        let config = KuramotoConfig::default().with_oscillators(16);
        let p = KuramotoParams::new(0.0, 0.8, 1e-12).unwrap();
        let mut rng = RunSeed(2).aux_rng(0);
        let (traj, _) = network_trajectory(&p, &config, &mut rng).unwrap();
        assert!(traj.r.iter().all(|&r| (r - 1.0).abs() < 1e-6));
        let s = summarize(&traj, 10.0).unwrap();
        assert!((s.s2 - 0.8).abs() < 1e-6);
    }

    #[test]
    fn params_from_theta() {
        assert!(KuramotoParams::from_theta(&vec![1.0, 2.0].into()).is_err());
        assert!(KuramotoParams::new(1.0, 0.0, -0.1).is_err());
        let p = KuramotoParams::from_theta(&vec![2.0, 1.0, 0.1].into()).unwrap();
        assert_eq!(p.to_theta().as_slice(), &[2.0, 1.0, 0.1]);
    }
}
