//! Experiment configuration, read from TOML.
//!
//! ```toml
//! [model]
//! data = "observed.json"
//! [model.kuramoto]
//! oscillators = 64
//!
//! [algorithm]
//! name = "mf-abc-smc"
//!
//! [schedule]
//! thresholds = [2.0, 1.0, 0.6, 0.3]
//! stop = { ess = 100 }
//!
//! [run]
//! seed = 7
//! out = "runs/mf"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use mfabc::kuramoto::{default_prior, KuramotoConfig};
use mfabc::samplers::{DEFAULT_BATCH_SIZE, DEFAULT_PROPOSAL_CEILING};
use mfabc::{ContinuationPolicy, EtaBounds, PsiTarget, SmcSchedule, StoppingCondition, Thresholds, UniformPrior};
use serde::Deserialize;

/// Invalid or inconsistent configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelSection,
    pub algorithm: Option<AlgorithmSection>,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kuramoto: KuramotoConfig,
    pub prior: PriorSection,
    /// Observed-data JSON written by `generate-data`.
    pub data: PathBuf,
    /// Seed used by `generate-data` when `--seed` is absent.
    pub data_seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kuramoto: KuramotoConfig::default(),
            prior: PriorSection::default(),
            data: PathBuf::from("observed.json"),
            data_seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    #[serde(rename = "K")]
    pub k: [f64; 2],
    pub omega0: [f64; 2],
    pub gamma: [f64; 2],
}

impl Default for PriorSection {
    fn default() -> Self {
        let b = default_prior().bounds().to_vec();
        PriorSection {
            k: [b[0].0, b[0].1],
            omega0: [b[1].0, b[1].1],
            gamma: [b[2].0, b[2].1],
        }
    }
}

impl PriorSection {
    pub fn to_prior(self) -> Result<UniformPrior, ConfigError> {
        if self.gamma[0] < 0.0 {
            return fail("prior on gamma must be non-negative");
        }
        UniformPrior::new([self.k, self.omega0, self.gamma].iter().map(|b| (b[0], b[1])).collect())
            .map_err(|e| ConfigError(format!("prior: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    AbcRs,
    AbcIs,
    AbcSmc,
    MfAbcRs,
    MfAbcIs,
    MfAbcSmcAlpha,
    MfAbcSmc,
}

impl Algorithm {
    pub fn is_single_generation(self) -> bool {
        matches!(
            self,
            Algorithm::AbcRs | Algorithm::AbcIs | Algorithm::MfAbcRs | Algorithm::MfAbcIs
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::AbcRs => "abc-rs",
            Algorithm::AbcIs => "abc-is",
            Algorithm::AbcSmc => "abc-smc",
            Algorithm::MfAbcRs => "mf-abc-rs",
            Algorithm::MfAbcIs => "mf-abc-is",
            Algorithm::MfAbcSmcAlpha => "mf-abc-smc-alpha",
            Algorithm::MfAbcSmc => "mf-abc-smc",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub name: Algorithm,
    /// Cache CSV whose last generation defines the importance distribution
    /// of `abc-is` and `mf-abc-is`.
    pub importance: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    pub proposals: Option<usize>,
    pub ess: Option<f64>,
    pub seconds: Option<f64>,
}

impl StopSpec {
    fn to_condition(self, batch_size: usize) -> Result<StoppingCondition, ConfigError> {
        let cond = match (self.proposals, self.ess, self.seconds) {
            (Some(n), None, None) => StoppingCondition::MaxProposals(n),
            (None, Some(ess), None) => StoppingCondition::EssTarget {
                ess,
                check_every: batch_size,
            },
            (None, None, Some(s)) => StoppingCondition::TimeBudget(s),
            _ => return fail("a stop needs exactly one of `proposals`, `ess`, `seconds`"),
        };
        cond.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cond)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PsiTargetSpec {
    Fixed(f64),
    Named(PsiTargetName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiTargetName {
    FirstGeneration,
}

impl Default for PsiTargetSpec {
    fn default() -> Self {
        PsiTargetSpec::Named(PsiTargetName::FirstGeneration)
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSection {
    pub initial: f64,
    pub generations: usize,
    #[serde(default)]
    pub psi_target: PsiTargetSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub thresholds: Option<Vec<f64>>,
    pub adaptive: Option<AdaptiveSection>,
    /// Stopping condition shared by every generation.
    pub stop: Option<StopSpec>,
    /// One stopping condition per generation.
    pub stops: Option<Vec<StopSpec>>,
    #[serde(default = "default_rho")]
    pub rho: [f64; 2],
    /// `(η₁, η₂)` per generation for `mf-abc-smc-alpha`, or a single pair
    /// for `mf-abc-rs` and `mf-abc-is`.
    pub alpha: Option<Vec<[f64; 2]>>,
    /// Continuation probabilities of the first `mf-abc-smc` generation.
    #[serde(default = "default_eta")]
    pub initial_eta: [f64; 2],
}

fn default_rho() -> [f64; 2] {
    [0.01, 0.01]
}

fn default_eta() -> [f64; 2] {
    [1.0, 1.0]
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            thresholds: None,
            adaptive: None,
            stop: None,
            stops: None,
            rho: default_rho(),
            alpha: None,
            initial_eta: default_eta(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub batch_size: usize,
    pub proposal_ceiling: usize,
    pub out: PathBuf,
    pub replicates: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            proposal_ceiling: DEFAULT_PROPOSAL_CEILING,
            out: PathBuf::from("runs"),
            replicates: 1,
        }
    }
}

/// Everything a run needs, checked against the chosen algorithm.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub algorithm: Algorithm,
    pub importance: Option<PathBuf>,
    pub prior: UniformPrior,
    pub schedule: SmcSchedule,
    pub policies: Vec<ContinuationPolicy>,
}

fn policy(eta: [f64; 2]) -> Result<ContinuationPolicy, ConfigError> {
    ContinuationPolicy::new(eta[0], eta[1]).map_err(|e| ConfigError(e.to_string()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn kuramoto(&self) -> Result<KuramotoConfig, ConfigError> {
        let k = self.model.kuramoto;
        k.validate().map_err(|e| ConfigError(format!("model: {e}")))?;
        Ok(k)
    }

    /// Validate the algorithm, schedule and run sections together.
    pub fn plan(&self) -> Result<RunPlan, ConfigError> {
        let Some(alg) = &self.algorithm else {
            return fail("missing [algorithm] section");
        };
        let algorithm = alg.name;
        let s = &self.schedule;
        let run = &self.run;
        if run.batch_size == 0 || run.replicates == 0 {
            return fail("run.batch_size and run.replicates must be positive");
        }

        let thresholds = match (&s.thresholds, &s.adaptive) {
            (Some(t), None) => Thresholds::Fixed(t.clone()),
            (None, Some(a)) => {
                if !matches!(algorithm, Algorithm::AbcSmc | Algorithm::MfAbcSmc) {
                    return fail(format!("{} does not support adaptive thresholds", algorithm.name()));
                }
                Thresholds::Adaptive {
                    initial: a.initial,
                    generations: a.generations,
                    psi_target: match a.psi_target {
                        PsiTargetSpec::Fixed(p) => PsiTarget::Fixed(p),
                        PsiTargetSpec::Named(PsiTargetName::FirstGeneration) => PsiTarget::FirstGeneration,
                    },
                }
            }
            _ => return fail("schedule needs exactly one of `thresholds` and `adaptive`"),
        };
        let generations = thresholds.generations();
        if algorithm.is_single_generation() && generations != 1 {
            return fail(format!(
                "{} takes a single threshold, got {generations}",
                algorithm.name()
            ));
        }

        let stops = match (&s.stop, &s.stops) {
            (Some(stop), None) => vec![stop.to_condition(run.batch_size)?; generations],
            (None, Some(v)) => {
                if v.len() != generations {
                    return fail(format!("{} stops for {generations} generations", v.len()));
                }
                v.iter()
                    .map(|x| x.to_condition(run.batch_size))
                    .collect::<Result<_, _>>()?
            }
            _ => return fail("schedule needs exactly one of `stop` and `stops`"),
        };

        let policies = match (algorithm, &s.alpha) {
            (Algorithm::MfAbcRs | Algorithm::MfAbcIs, Some(a)) if a.len() == 1 => vec![policy(a[0])?],
            (Algorithm::MfAbcRs | Algorithm::MfAbcIs, _) => {
                return fail(format!("{} needs exactly one `alpha` pair", algorithm.name()))
            }
            (Algorithm::MfAbcSmcAlpha, Some(a)) if a.len() == generations => {
                a.iter().map(|&e| policy(e)).collect::<Result<_, _>>()?
            }
            (Algorithm::MfAbcSmcAlpha, _) => {
                return fail(format!(
                    "mf-abc-smc-alpha needs one `alpha` pair per generation ({generations})"
                ))
            }
            (_, Some(_)) => return fail(format!("{} does not take `alpha`", algorithm.name())),
            (_, None) => Vec::new(),
        };

        let needs_importance = matches!(algorithm, Algorithm::AbcIs | Algorithm::MfAbcIs);
        if needs_importance != alg.importance.is_some() {
            return fail(if needs_importance {
                format!("{} needs `algorithm.importance`", algorithm.name())
            } else {
                format!("{} does not take `algorithm.importance`", algorithm.name())
            });
        }

        let schedule = SmcSchedule {
            bounds: EtaBounds::new(s.rho[0], s.rho[1]).map_err(|e| ConfigError(e.to_string()))?,
            initial_policy: policy(s.initial_eta)?,
            batch_size: run.batch_size,
            proposal_ceiling: run.proposal_ceiling,
            ..SmcSchedule::new(thresholds, stops)
        };
        schedule.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(RunPlan {
            algorithm,
            importance: alg.importance.clone(),
            prior: self.model.prior.to_prior()?,
            schedule,
            policies,
        })
    }
}
