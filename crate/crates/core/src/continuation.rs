//! Efficiency algebra for two-constant continuation probabilities.
//!
//! The expected cost-weighted variance of the multifidelity weight factors as
//!
//! ```text
//! φ(η₁, η₂) = (W + (1/η₁ − 1) W_fp + (1/η₂ − 1) W_fn) · (T_lo + η₁ T_hi,p + η₂ T_hi,n)
//! ```
//!
//! and the theoretical efficiency is `ψ = Z² / φ`. This module minimises `φ`
//! over the box `[ρ₁, 1] × [ρ₂, 1]`, estimates the seven coefficients from a
//! cached generation, and chooses the next ABC threshold for a target `ψ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Prior, Proposal};
use crate::samplers::{CacheEntry, ContinuationPolicy, ParticleCache};

/// Default lower bound on both continuation probabilities.
pub const DEFAULT_RHO: f64 = 0.01;

/// Floor applied to underflowing importance evaluations during estimation.
pub const QSTAR_FLOOR: f64 = 1e-300;

const EPSILON_GRID_POINTS: usize = 64;
const EPSILON_BISECTIONS: usize = 40;
const EPSILON_FLOOR_QUANTILE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyCoefficients {
    pub z: f64,
    pub w: f64,
    pub w_fp: f64,
    pub w_fn: f64,
    /// Seconds.
    pub t_lo: f64,
    pub t_hi_p: f64,
    pub t_hi_n: f64,
}

impl EfficiencyCoefficients {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.z,
            self.w,
            self.w_fp,
            self.w_fn,
            self.t_lo,
            self.t_hi_p,
            self.t_hi_n,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite efficiency coefficient: {self:?}"
            )));
        }
        if self.w_fp < 0.0 || self.w_fn < 0.0 || self.t_lo < 0.0 || self.t_hi_p < 0.0 || self.t_hi_n < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "negative efficiency coefficient: {self:?}"
            )));
        }
        Ok(())
    }

    /// `W − W_fp − W_fn`.
    fn w_true(&self) -> f64 {
        self.w - self.w_fp - self.w_fn
    }
}

/// Lower bounds `(ρ₁, ρ₂)` on the continuation probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaBounds {
    pub rho1: f64,
    pub rho2: f64,
}

impl EtaBounds {
    pub fn new(rho1: f64, rho2: f64) -> Result<Self> {
        let valid = |x: f64| x > 0.0 && x < 1.0;
        if !valid(rho1) || !valid(rho2) {
            return Err(Error::InvalidArgument(format!(
                "continuation bounds must lie in (0, 1), got ({rho1}, {rho2})"
            )));
        }
        Ok(EtaBounds { rho1, rho2 })
    }

    pub fn contains(&self, eta1: f64, eta2: f64) -> bool {
        eta1 >= self.rho1 && eta1 <= 1.0 && eta2 >= self.rho2 && eta2 <= 1.0
    }
}

impl Default for EtaBounds {
    fn default() -> Self {
        EtaBounds {
            rho1: DEFAULT_RHO,
            rho2: DEFAULT_RHO,
        }
    }
}

/// Which continuation probability a boundary expression solves for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eta {
    /// `η₁`, with `η₂ = x` held fixed.
    First,
    /// `η₂`, with `η₁ = x` held fixed.
    Second,
}

fn check_eta(eta1: f64, eta2: f64) -> Result<()> {
    if !(eta1 > 0.0) || !(eta2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "continuation probabilities must be positive, got ({eta1}, {eta2})"
        )));
    }
    Ok(())
}

fn phi_unchecked(c: &EfficiencyCoefficients, eta1: f64, eta2: f64) -> f64 {
    (c.w + (1.0 / eta1 - 1.0) * c.w_fp + (1.0 / eta2 - 1.0) * c.w_fn) * (c.t_lo + eta1 * c.t_hi_p + eta2 * c.t_hi_n)
}

pub fn phi(coeffs: &EfficiencyCoefficients, eta1: f64, eta2: f64) -> Result<f64> {
    check_eta(eta1, eta2)?;
    Ok(phi_unchecked(coeffs, eta1, eta2))
}

/// `ψ = Z² / φ`.
pub fn theoretical_efficiency(coeffs: &EfficiencyCoefficients, eta1: f64, eta2: f64) -> Result<f64> {
    Ok(coeffs.z * coeffs.z / phi(coeffs, eta1, eta2)?)
}

/// Stationary point of `φ` over the open positive quadrant and its value, if
/// `W > W_fp + W_fn`; otherwise `φ` has no minimum there.
pub fn unconstrained_optimum(coeffs: &EfficiencyCoefficients) -> Option<((f64, f64), f64)> {
    let wt = coeffs.w_true();
    if !(wt > 0.0) {
        return None;
    }
    let base = coeffs.t_lo / wt;
    let eta1 = (base * coeffs.w_fp / coeffs.t_hi_p).sqrt();
    let eta2 = (base * coeffs.w_fn / coeffs.t_hi_n).sqrt();
    let phi_bar =
        ((wt * coeffs.t_lo).sqrt() + (coeffs.w_fp * coeffs.t_hi_p).sqrt() + (coeffs.w_fn * coeffs.t_hi_n).sqrt())
            .powi(2);
    Some(((eta1, eta2), phi_bar))
}

/// Minimiser of `φ` along the edge where the other probability equals `x`,
/// clamped into `[ρ, 1]`.
pub fn boundary_eta(coeffs: &EfficiencyCoefficients, bounds: &EtaBounds, which: Eta, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "boundary argument must be positive, got {x}"
        )));
    }
    // Along the edge, φ(η) = (A + w_f/η)(B + η t_f) up to constants.
    let (a, b, w_f, t_f, rho) = match which {
        Eta::First => (
            coeffs.w - coeffs.w_fp - (1.0 - 1.0 / x) * coeffs.w_fn,
            coeffs.t_lo + coeffs.t_hi_n * x,
            coeffs.w_fp,
            coeffs.t_hi_p,
            bounds.rho1,
        ),
        Eta::Second => (
            coeffs.w - (1.0 - 1.0 / x) * coeffs.w_fp - coeffs.w_fn,
            coeffs.t_lo + coeffs.t_hi_p * x,
            coeffs.w_fn,
            coeffs.t_hi_n,
            bounds.rho2,
        ),
    };
    let num = b * w_f;
    let den = a * t_f;
    let raw = if num == 0.0 && den == 0.0 {
        // φ is constant along this edge.
        1.0
    } else if num == 0.0 {
        // Decreasing η costs nothing, or costs only through a negative A.
        if den > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else if den <= 0.0 {
        // A ≤ 0 or free high-fidelity time: φ decreases towards η = 1.
        f64::INFINITY
    } else {
        (num / den).sqrt()
    };
    Ok(raw.min(1.0).max(rho))
}

/// The minimiser of `φ` over `[ρ₁, 1] × [ρ₂, 1]` and the minimum value.
pub fn optimal_continuation(coeffs: &EfficiencyCoefficients, bounds: &EtaBounds) -> Result<(ContinuationPolicy, f64)> {
    coeffs.validate()?;
    if let Some(((e1, e2), phi_bar)) = unconstrained_optimum(coeffs) {
        if e1.is_finite() && e2.is_finite() && bounds.contains(e1, e2) {
            return Ok((ContinuationPolicy::new(e1, e2)?, phi_bar));
        }
    }
    let candidates = [
        (1.0, boundary_eta(coeffs, bounds, Eta::Second, 1.0)?),
        (boundary_eta(coeffs, bounds, Eta::First, 1.0)?, 1.0),
        (bounds.rho1, boundary_eta(coeffs, bounds, Eta::Second, bounds.rho1)?),
        (boundary_eta(coeffs, bounds, Eta::First, bounds.rho2)?, bounds.rho2),
    ];
    let mut best = candidates[0];
    let mut best_phi = phi_unchecked(coeffs, best.0, best.1);
    for &c in &candidates[1..] {
        let v = phi_unchecked(coeffs, c.0, c.1);
        if v < best_phi || (v == best_phi && c > best) {
            best = c;
            best_phi = v;
        }
    }
    Ok((ContinuationPolicy::new(best.0, best.1)?, best_phi))
}

/// Per-entry quantities that do not depend on the threshold.
#[derive(Debug, Clone, Copy)]
struct Prepared {
    /// `π / q_n`.
    ratio: f64,
    /// `π² / (q* q_n)`.
    w_ratio: f64,
    /// `q* / q_n`.
    t_ratio: f64,
    alpha: f64,
    tilde_d: f64,
    tilde_t: f64,
    hi: Option<(f64, f64)>,
}

/// A cache with `π` and `q*` evaluated once, from which coefficients can be
/// estimated at any threshold in `O(N)`.
#[derive(Debug, Clone)]
pub struct CoefficientEstimator {
    entries: Vec<Prepared>,
    /// Entries whose `q*` underflowed and was floored.
    pub floored: usize,
}

impl CoefficientEstimator {
    /// Evaluate `π(θ_n)` and `q*(θ_n)` for every cached proposal. With
    /// `floor = None`, a vanishing `q*` inside the prior support is an error;
    /// otherwise it is raised to the floor and counted.
    pub fn new<P, Q>(cache: &ParticleCache, prior: &P, q_star: &Q, floor: Option<f64>) -> Result<Self>
    where
        P: Prior + ?Sized,
        Q: Proposal + ?Sized,
    {
        if cache.is_empty() {
            return Err(Error::EmptyCache);
        }
        let mut floored = 0;
        let entries = cache
            .entries
            .iter()
            .enumerate()
            .map(|(index, e)| {
                let pi = prior.density(&e.theta)?;
                let mut qs = q_star.q(&e.theta);
                if pi > 0.0 && !(qs > 0.0) {
                    match floor {
                        Some(f) => {
                            qs = f;
                            floored += 1;
                        }
                        None => return Err(Error::InvalidImportanceSupport { index }),
                    }
                }
                Ok(prepare(e, pi, qs))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoefficientEstimator { entries, floored })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Monte Carlo estimates of the seven coefficients at threshold `epsilon`.
    pub fn at(&self, epsilon: f64) -> EfficiencyCoefficients {
        let mut c = EfficiencyCoefficients {
            z: 0.0,
            w: 0.0,
            w_fp: 0.0,
            w_fn: 0.0,
            t_lo: 0.0,
            t_hi_p: 0.0,
            t_hi_n: 0.0,
        };
        for p in &self.entries {
            let tilde_in = p.tilde_d < epsilon;
            let lo = if tilde_in { 1.0 } else { 0.0 };
            if p.ratio != 0.0 {
                c.z += p.ratio * lo;
                c.w += p.w_ratio * lo;
            }
            c.t_lo += p.t_ratio * p.tilde_t;
            if let Some((d, t)) = p.hi {
                let hi_in = d < epsilon;
                let diff = if hi_in { 1.0 } else { 0.0 } - lo;
                if p.ratio != 0.0 {
                    c.z += p.ratio / p.alpha * diff;
                    c.w += p.w_ratio / p.alpha * diff;
                    if tilde_in && !hi_in {
                        c.w_fp += p.w_ratio / p.alpha;
                    }
                    if !tilde_in && hi_in {
                        c.w_fn += p.w_ratio / p.alpha;
                    }
                }
                if tilde_in {
                    c.t_hi_p += p.t_ratio / p.alpha * t;
                } else {
                    c.t_hi_n += p.t_ratio / p.alpha * t;
                }
            }
        }
        let n = self.entries.len() as f64;
        c.z /= n;
        c.w /= n;
        c.w_fp /= n;
        c.w_fn /= n;
        c.t_lo /= n;
        c.t_hi_p /= n;
        c.t_hi_n /= n;
        c
    }

    /// Sorted finite low-fidelity distances (high-fidelity distances stand in
    /// for entries without a low-fidelity record).
    fn sorted_tilde_distances(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self
            .entries
            .iter()
            .map(|p| p.tilde_d)
            .filter(|d| d.is_finite())
            .collect();
        d.sort_by(f64::total_cmp);
        d
    }
}

fn prepare(e: &CacheEntry, pi: f64, q_star: f64) -> Prepared {
    let (tilde_d, tilde_t) = match (e.lo, e.hi) {
        (Some(lo), _) => (lo.d, lo.seconds()),
        (None, Some(hi)) => (hi.d, 0.0),
        (None, None) => (f64::INFINITY, 0.0),
    };
    let ratio = pi / e.q_value;
    Prepared {
        ratio,
        w_ratio: if pi == 0.0 { 0.0 } else { ratio * pi / q_star },
        t_ratio: q_star / e.q_value,
        alpha: e.alpha,
        tilde_d,
        tilde_t,
        hi: e.hi.map(|h| (h.d, h.seconds())),
    }
}

/// The seven Monte Carlo coefficient estimates for a new run with importance
/// function `q_star` and threshold `epsilon_new`.
pub fn estimate_coefficients<P, Q>(
    cache: &ParticleCache,
    prior: &P,
    q_star: &Q,
    epsilon_new: f64,
) -> Result<EfficiencyCoefficients>
where
    P: Prior + ?Sized,
    Q: Proposal + ?Sized,
{
    if !(epsilon_new > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {epsilon_new}"
        )));
    }
    Ok(CoefficientEstimator::new(cache, prior, q_star, None)?.at(epsilon_new))
}

/// Outcome of the adaptive threshold search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveEpsilon {
    pub epsilon: f64,
    pub policy: ContinuationPolicy,
    /// Predicted efficiency at the chosen threshold.
    pub predicted_psi: f64,
    /// The search returned the previous threshold: the efficiency target is
    /// not achievable and should be reviewed.
    pub target_unreachable: bool,
}

fn psi_hat(c: &EfficiencyCoefficients, policy: &ContinuationPolicy) -> f64 {
    let phi = phi_unchecked(c, policy.eta1, policy.eta2);
    if phi > 0.0 {
        c.z * c.z / phi
    } else {
        0.0
    }
}

/// Choose `ε_{t+1} = max{0 < ε ≤ ε_t : ψ̂(η*; ε) ≤ ψ*}` (or `ε_t` if empty)
/// from a cached generation and the next importance function `q_star`.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_epsilon<P, Q>(
    cache: &ParticleCache,
    prior: &P,
    q_star: &Q,
    epsilon_t: f64,
    psi_target: f64,
    bounds: &EtaBounds,
    multifidelity: bool,
) -> Result<AdaptiveEpsilon>
where
    P: Prior + ?Sized,
    Q: Proposal + ?Sized,
{
    let estimator = CoefficientEstimator::new(cache, prior, q_star, Some(QSTAR_FLOOR))?;
    select_epsilon(&estimator, epsilon_t, psi_target, bounds, multifidelity)
}

/// Threshold search over a prepared estimator; see [`adaptive_epsilon`].
///
/// `η*` is optimised at `ε_t` when `multifidelity` is set and fixed at
/// `(1, 1)` otherwise. The maximum is approximated on a geometric grid of 64
/// candidates from `ε_t` down to the 1st percentile of cached low-fidelity
/// distances, refined by 40 bisection steps between the bracketing points.
pub fn select_epsilon(
    estimator: &CoefficientEstimator,
    epsilon_t: f64,
    psi_target: f64,
    bounds: &EtaBounds,
    multifidelity: bool,
) -> Result<AdaptiveEpsilon> {
    if !(psi_target > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "efficiency target must be positive, got {psi_target}"
        )));
    }
    if !(epsilon_t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must be positive, got {epsilon_t}"
        )));
    }
    if estimator.is_empty() {
        return Err(Error::EmptyCache);
    }
    let policy = if multifidelity {
        optimal_continuation(&estimator.at(epsilon_t), bounds)?.0
    } else {
        ContinuationPolicy::ALWAYS
    };
    let admissible = |eps: f64| psi_hat(&estimator.at(eps), &policy) <= psi_target;

    let unreachable = |policy| {
        Ok(AdaptiveEpsilon {
            epsilon: epsilon_t,
            policy,
            predicted_psi: psi_hat(&estimator.at(epsilon_t), &policy),
            target_unreachable: true,
        })
    };

    if admissible(epsilon_t) {
        return unreachable(policy);
    }
    let distances = estimator.sorted_tilde_distances();
    if distances.is_empty() {
        return unreachable(policy);
    }
    let idx = ((distances.len() - 1) as f64 * EPSILON_FLOOR_QUANTILE).floor() as usize;
    let floor = distances[idx];
    let floor = if floor > 0.0 && floor < epsilon_t {
        floor
    } else {
        epsilon_t * 1e-6
    };
    let ratio = (floor / epsilon_t).powf(1.0 / (EPSILON_GRID_POINTS - 1) as f64);
    let mut upper = epsilon_t;
    let mut lower = None;
    for k in 1..EPSILON_GRID_POINTS {
        let eps = if k == EPSILON_GRID_POINTS - 1 {
            floor
        } else {
            epsilon_t * ratio.powi(k as i32)
        };
        if admissible(eps) {
            lower = Some(eps);
            break;
        }
        upper = eps;
    }
    let Some(mut lower) = lower else {
        return unreachable(policy);
    };
    for _ in 0..EPSILON_BISECTIONS {
        let mid = 0.5 * (lower + upper);
        if admissible(mid) {
            lower = mid;
        } else {
            upper = mid;
        }
    }
    Ok(AdaptiveEpsilon {
        epsilon: lower,
        policy,
        predicted_psi: psi_hat(&estimator.at(lower), &policy),
        target_unreachable: false,
    })
}
