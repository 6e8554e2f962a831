//! Streaming abnormality detection against a learned execution model.
//!
//! Each observation is tested for membership of the model's probability
//! region. The failure rate of these tests over a sliding time window gets
//! a Beta posterior, and the execution is flagged once the posterior
//! probability that the rate exceeds its nominal value `1 - P` crosses a
//! threshold.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::STATE_DIM;
use crate::model::{mahalanobis_sq, ExecutionTrace, PrimitiveExecutionModel};
use crate::special::{beta_cdf, chi2_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    /// Membership probability of the region each observation is tested against.
    pub p: f64,
    /// Total prior pseudo-count `alpha + beta`.
    pub prior_strength: f64,
    /// Prior pseudo-count of failures.
    pub alpha: f64,
    /// Prior pseudo-count of successes.
    pub beta: f64,
    /// Window length in seconds.
    pub window: f64,
    pub flag_threshold: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self::with_prior(0.999, 1000.0)
    }
}

impl MonitorConfig {
    /// Prior centered on the nominal failure rate: `alpha = n (1 - p)`,
    /// `beta = n p`.
    pub fn with_prior(p: f64, prior_strength: f64) -> Self {
        let beta = prior_strength * p;
        Self {
            p,
            prior_strength,
            alpha: prior_strength - beta,
            beta,
            window: 1.0,
            flag_threshold: 0.999,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.prior_strength, self.alpha, self.beta, self.window]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return Err(Error::InvalidConfig("monitor pseudo-counts and window must be positive".into()));
        }
        if !(self.p > 0.0 && self.p < 1.0) || !(self.flag_threshold > 0.0 && self.flag_threshold < 1.0) {
            return Err(Error::InvalidConfig("monitor probabilities must lie in (0, 1)".into()));
        }
        if (self.alpha + self.beta - self.prior_strength).abs() > 1e-9 * self.prior_strength {
            return Err(Error::InvalidConfig("alpha + beta must equal the prior strength".into()));
        }
        if (self.alpha / (self.alpha + self.beta) - (1.0 - self.p)).abs() > 1e-9 {
            return Err(Error::InvalidConfig("prior mean failure rate must equal 1 - P".into()));
        }
        Ok(())
    }

    /// `p(theta > 1 - P)` under `Beta(alpha + abnormal, beta + normal)`.
    pub fn posterior_exceedance(&self, abnormal: usize, normal: usize) -> f64 {
        1.0 - beta_cdf(1.0 - self.p, self.alpha + abnormal as f64, self.beta + normal as f64)
    }
}

/// Region membership test at a fixed probability over all state dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionTest {
    pub p: f64,
    /// `chi2_n(P)` with `n` state dimensions.
    pub threshold: f64,
}

impl RegionTest {
    pub fn new(p: f64) -> Self {
        Self { p, threshold: chi2_quantile(p, STATE_DIM as u32) }
    }

    /// True iff the observation lies outside the model's probability region at `tau`.
    pub fn is_abnormal(&self, state: &[f64; STATE_DIM], tau: f64, model: &PrimitiveExecutionModel) -> bool {
        let (mu, var) = model.at(tau);
        mahalanobis_sq(state, &mu, &var) > self.threshold
    }
}

pub fn is_abnormal_point(state: &[f64; STATE_DIM], tau: f64, model: &PrimitiveExecutionModel, p: f64) -> bool {
    RegionTest::new(p).is_abnormal(state, tau, model)
}

/// Sliding window of membership outcomes.
#[derive(Debug, Clone, Default)]
pub struct MonitorState {
    window: VecDeque<(f64, bool)>,
    abnormal: usize,
}

impl MonitorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn abnormal_count(&self) -> usize {
        self.abnormal
    }

    pub fn normal_count(&self) -> usize {
        self.window.len() - self.abnormal
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Drop entries older than `window` seconds before `now`. An entry whose
    /// age is exactly the window length is kept.
    pub fn evict(&mut self, now: f64, window: f64) {
        while let Some(&(t, abnormal)) = self.window.front() {
            if now - t > window {
                self.window.pop_front();
                if abnormal {
                    self.abnormal -= 1;
                }
            } else {
                break;
            }
        }
    }

    /// Record one outcome and return the posterior probability that the
    /// failure rate exceeds `1 - P`. A timestamp earlier than the previous
    /// one is treated as equal to it.
    pub fn update(&mut self, timestamp: f64, abnormal: bool, config: &MonitorConfig) -> f64 {
        let t = self.window.back().map_or(timestamp, |&(last, _)| timestamp.max(last));
        self.evict(t, config.window);
        self.window.push_back((t, abnormal));
        if abnormal {
            self.abnormal += 1;
        }
        config.posterior_exceedance(self.abnormal, self.normal_count())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Abnormal as soon as one observation leaves the region.
    Naive,
    /// Abnormal when the windowed failure-rate posterior crosses the threshold.
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub abnormal: bool,
    /// Time of the first flag, if any.
    pub flagged_at: Option<f64>,
    pub exits: usize,
    pub max_posterior: f64,
}

/// Classify one primitive execution against its model.
pub fn classify_execution(
    trace: &ExecutionTrace,
    model: &PrimitiveExecutionModel,
    config: &MonitorConfig,
    method: Method,
) -> Verdict {
    let test = RegionTest::new(config.p);
    let mut state = MonitorState::new();
    let mut verdict = Verdict { abnormal: false, flagged_at: None, exits: 0, max_posterior: 0.0 };
    for s in &trace.samples {
        let out = test.is_abnormal(&s.state.to_array(), s.tau, model);
        if out {
            verdict.exits += 1;
        }
        let flag = match method {
            Method::Naive => out,
            Method::Beta => {
                let post = state.update(s.tau, out, config);
                verdict.max_posterior = verdict.max_posterior.max(post);
                post > config.flag_threshold
            }
        };
        if flag && verdict.flagged_at.is_none() {
            verdict.abnormal = true;
            verdict.flagged_at = Some(s.tau);
        }
    }
    verdict
}

/// Input line of a monitored stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub t: f64,
    pub primitive_id: usize,
    pub tau: f64,
    pub state: [f64; STATE_DIM],
}

/// Output line of a monitored stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamVerdict {
    pub t: f64,
    pub p_failure_rate_exceeds: f64,
    pub flagged: bool,
}

/// Run the Beta monitor over a stream that may span several primitives.
pub fn monitor_stream(
    records: &[StreamRecord],
    models: &BTreeMap<usize, PrimitiveExecutionModel>,
    config: &MonitorConfig,
) -> Result<Vec<StreamVerdict>> {
    config.validate()?;
    let test = RegionTest::new(config.p);
    let mut state = MonitorState::new();
    records
        .iter()
        .map(|r| {
            let model = models.get(&r.primitive_id).ok_or(Error::UnknownPrimitive(r.primitive_id))?;
            let out = test.is_abnormal(&r.state, r.tau, model);
            let p = state.update(r.t, out, config);
            Ok(StreamVerdict { t: r.t, p_failure_rate_exceeds: p, flagged: p > config.flag_threshold })
        })
        .collect()
}
