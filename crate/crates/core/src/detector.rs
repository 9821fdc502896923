//! The online detector: warm-up, per-observation predictive checking, the
//! posterior update policy, and snapshot/restore.

use crate::checks::{
    cardinality_pvalue, feature_pvalue, fisher_combine_with, CheckResult, FisherThresholds,
    NbPredictive, ScaleVariant,
};
use crate::error::{Error, Result};
use crate::posterior::{
    init_prior, DiscountFactor, GammaPosterior, NiwPosterior, PosteriorSnapshot, PriorSpec,
};
use crate::rfs::PointPattern;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const SNAPSHOT_VERSION: u32 = 1;
pub const DEFAULT_HISTORY_LEN: usize = 128;

/// What to do with the posteriors when an observation alarms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdatePolicy {
    /// An alarmed observation is excluded from the posterior entirely; the
    /// discount bookkeeping does not advance either, only the time index.
    SkipOnAlarm,
    /// Every observation updates the posterior, alarms included.
    AlwaysUpdate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub alpha0: DiscountFactor,
    /// False-alarm rate for the chi-squared alarm threshold, in (0, 1).
    pub alpha: f64,
    pub prior: PriorSpec,
    pub dim: usize,
    pub scale_variant: ScaleVariant,
    pub update_policy: UpdatePolicy,
    /// Length of the diagnostic result ring; never feeds decisions.
    pub history_len: usize,
}

impl DetectorConfig {
    /// Jeffreys prior, no discounting, α = 1/100 — the reference setup.
    pub fn jeffreys(dim: usize) -> Self {
        DetectorConfig {
            alpha0: DiscountFactor::ONE,
            alpha: 0.01,
            prior: PriorSpec::jeffreys(),
            dim,
            scale_variant: ScaleVariant::Derived,
            update_policy: UpdatePolicy::SkipOnAlarm,
            history_len: DEFAULT_HISTORY_LEN,
        }
    }

    pub fn with_alpha0(mut self, alpha0: DiscountFactor) -> Self {
        self.alpha0 = alpha0;
        self
    }

    pub fn with_prior(mut self, prior: PriorSpec) -> Self {
        self.prior = prior;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_update_policy(mut self, policy: UpdatePolicy) -> Self {
        self.update_policy = policy;
        self
    }

    pub fn with_scale_variant(mut self, variant: ScaleVariant) -> Self {
        self.scale_variant = variant;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Result of processing one observation.
#[derive(Debug, Clone, Serialize)]
pub struct StepResult {
    pub t: u64,
    pub n_obs: u64,
    /// `None` during warm-up (the first observation is spent learning).
    pub check: Option<CheckResult>,
    /// Whether the posteriors absorbed this observation.
    pub updated: bool,
}

impl StepResult {
    pub fn alarmed(&self) -> bool {
        self.check.map(|c| c.alarm).unwrap_or(false)
    }
}

/// One detector instance monitors one logical stream; updates must be
/// externally serialized. Distinct instances share nothing and may run
/// concurrently.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    thresholds: FisherThresholds,
    gamma: GammaPosterior,
    niw: NiwPosterior,
    t: u64,
    history: VecDeque<StepResult>,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let (gamma, niw) = init_prior(&config.prior, config.dim)?;
        let thresholds = FisherThresholds::new(config.alpha)?;
        Ok(Detector {
            config,
            thresholds,
            gamma,
            niw,
            t: 0,
            history: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn gamma(&self) -> &GammaPosterior {
        &self.gamma
    }

    pub fn niw(&self) -> &NiwPosterior {
        &self.niw
    }

    pub fn history(&self) -> impl Iterator<Item = &StepResult> {
        self.history.iter()
    }

    /// Runs the predictive checks against the current posteriors without
    /// touching any state. `None` if neither check is available yet.
    pub fn check_only(&self, x: &PointPattern) -> Result<Option<CheckResult>> {
        if x.dim() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                got: x.dim(),
            });
        }
        let n_obs = x.len() as u64;
        let pr_n = match NbPredictive::from_posterior(&self.gamma) {
            Ok(nb) => Some(cardinality_pvalue(n_obs, &nb)),
            Err(_) => None,
        };
        let pr_x = match x.sample_mean() {
            Some(x_bar) => feature_pvalue(&x_bar, n_obs, &self.niw, self.config.scale_variant)?,
            None => None,
        };
        Ok(match (pr_n, pr_x) {
            (Some(pn), px) => Some(fisher_combine_with(pn, px, &self.thresholds)),
            (None, Some(px)) => Some(fisher_combine_with(px, None, &self.thresholds)),
            (None, None) => None,
        })
    }

    /// Processes the next observation: check against the current predictive,
    /// then update the posteriors according to the update policy. The time
    /// index must advance by exactly one.
    pub fn observe(&mut self, x: &PointPattern) -> Result<StepResult> {
        if x.t() != self.t + 1 {
            return Err(Error::OutOfOrder {
                expected: self.t + 1,
                got: x.t(),
            });
        }
        if x.dim() != self.config.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.dim,
                got: x.dim(),
            });
        }

        // Warm-up: the first observation only seeds the posteriors.
        let check = if self.t == 0 { None } else { self.check_only(x)? };

        let alarmed = check.map(|c| c.alarm).unwrap_or(false);
        let update = match self.config.update_policy {
            UpdatePolicy::SkipOnAlarm => !alarmed,
            UpdatePolicy::AlwaysUpdate => true,
        };
        if update {
            self.gamma.update(x.len() as u64, self.config.alpha0);
            self.niw.update(x, self.config.alpha0)?;
        }
        self.t = x.t();

        let result = StepResult {
            t: x.t(),
            n_obs: x.len() as u64,
            check,
            updated: update,
        };
        if self.config.history_len > 0 {
            if self.history.len() == self.config.history_len {
                self.history.pop_front();
            }
            self.history.push_back(result.clone());
        }
        Ok(result)
    }

    pub fn snapshot(&self) -> DetectorSnapshot {
        DetectorSnapshot {
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            posterior: PosteriorSnapshot::capture(&self.gamma, &self.niw, self.config.alpha0, self.t),
        }
    }

    /// Rebuilds a detector that continues bit-for-bit where the snapshotted
    /// one left off (history ring excluded; it is diagnostics only).
    pub fn restore(snapshot: &DetectorSnapshot) -> Result<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {}",
                snapshot.version
            )));
        }
        snapshot.config.validate()?;
        if snapshot.posterior.dim != snapshot.config.dim {
            return Err(Error::Snapshot("posterior/config dimension mismatch".into()));
        }
        if snapshot.posterior.alpha0 != snapshot.config.alpha0.value() {
            return Err(Error::Snapshot("posterior/config alpha0 mismatch".into()));
        }
        let (gamma, niw) = snapshot.posterior.restore()?;
        let thresholds = FisherThresholds::new(snapshot.config.alpha)?;
        Ok(Detector {
            config: snapshot.config.clone(),
            thresholds,
            gamma,
            niw,
            t: snapshot.posterior.t,
            history: VecDeque::new(),
        })
    }
}

/// Serialized detector state: a format version, the configuration echo,
/// and the flat posterior document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorSnapshot {
    pub version: u32,
    pub config: DetectorConfig,
    pub posterior: PosteriorSnapshot,
}
