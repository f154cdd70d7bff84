//! The generic GEMS iteration.
//!
//! A [`GemsDriver`] supplies the problem-specific pieces: an E-step that
//! summarizes the missing data under the current state, the expected
//! criterion `Q(ψ'; ψ)` evaluated through that summary, an MS-step that
//! proposes a new state, and the observed-data criterion. [`run_gems`]
//! alternates the two steps, checks that every MS-step decreases `Q` and that
//! the observed criterion never increases, and records a trace.

use serde::{Deserialize, Serialize};

use crate::error::{GemsError, Result};

/// A model identifier together with its parameters and observed criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiState<M, P> {
    pub model: M,
    pub params: P,
    pub gic: f64,
}

/// Observed-criterion value with a standard error. Exact evaluations have
/// `se = 0`; Monte-Carlo estimates carry their sampling error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GicValue {
    pub value: f64,
    pub se: f64,
}

impl GicValue {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }
}

pub trait GemsDriver {
    type Model: Clone + PartialEq;
    type Params: Clone;
    type Summary;

    /// Conditional-expectation summary defining `Q(·; ψ)`.
    fn e_step(
        &mut self,
        psi: &PsiState<Self::Model, Self::Params>,
        iteration: usize,
    ) -> Result<Self::Summary>;

    /// `Q(ψ'; ψ)` for a candidate `(model, params)` under the summary of `ψ`.
    fn q_value(
        &self,
        model: &Self::Model,
        params: &Self::Params,
        summary: &Self::Summary,
    ) -> Result<f64>;

    /// Propose a new state. Must not increase `Q` relative to `current`.
    fn ms_step(
        &mut self,
        summary: &Self::Summary,
        current: &PsiState<Self::Model, Self::Params>,
    ) -> Result<(Self::Model, Self::Params)>;

    fn observed_gic(&self, model: &Self::Model, params: &Self::Params) -> Result<GicValue>;

    fn model_hash(&self, model: &Self::Model) -> u64;
}

/// What to do when the observed criterion rises beyond tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GicPolicy {
    /// Abort with [`GemsError::GicIncrease`].
    Strict,
    /// Log a warning and flag the trace record.
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GemsConfig {
    pub max_iter: usize,
    pub tol_q: f64,
    pub tol_g: f64,
    /// Allowed GIC rise is `tol_g + se_multiplier * se`.
    pub se_multiplier: f64,
    pub gic_policy: GicPolicy,
    /// When set, a repeated model ends the run only if the MS-step also
    /// moved `Q` by at most `tol_q`, so the final state is a fixed point of
    /// the whole update rather than of the model alone.
    #[serde(default = "default_true")]
    pub stationary_stop: bool,
}

fn default_true() -> bool {
    true
}

impl Default for GemsConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_q: 1e-6,
            tol_g: 1e-6,
            se_multiplier: 2.0,
            gic_policy: GicPolicy::Strict,
            stationary_stop: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ModelFixed,
    QConverged,
    MaxIter,
}

/// One trace line. Iteration 0 is the initial state and carries no `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub model_hash: u64,
    pub q: Option<f64>,
    pub gic: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub gic_se: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub gic_increase: bool,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemsTrace {
    pub records: Vec<TraceRecord>,
    pub stop_reason: StopReason,
}

impl GemsTrace {
    pub fn gic_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.gic).collect()
    }

    /// Largest single-step rise of the observed criterion (negative when the
    /// trace strictly decreases).
    pub fn max_gic_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].gic - w[0].gic)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_monotone(&self, tol: f64) -> bool {
        self.records.windows(2).all(|w| w[1].gic <= w[0].gic + tol)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn run_gems<D: GemsDriver>(
    driver: &mut D,
    init: (D::Model, D::Params),
    config: &GemsConfig,
) -> Result<(PsiState<D::Model, D::Params>, GemsTrace)> {
    let g0 = driver.observed_gic(&init.0, &init.1)?;
    if !g0.value.is_finite() {
        return Err(GemsError::InvalidInput(format!(
            "initial observed GIC is not finite ({})",
            g0.value
        )));
    }
    let mut psi = PsiState {
        model: init.0,
        params: init.1,
        gic: g0.value,
    };
    let mut records = vec![TraceRecord {
        iter: 0,
        model_hash: driver.model_hash(&psi.model),
        q: None,
        gic: g0.value,
        gic_se: g0.se,
        gic_increase: false,
    }];
    let mut prev_q: Option<f64> = None;
    let mut stop_reason = StopReason::MaxIter;

    for t in 1..=config.max_iter {
        let summary = driver.e_step(&psi, t)?;
        let q_current = driver.q_value(&psi.model, &psi.params, &summary)?;
        let (model, params) = driver.ms_step(&summary, &psi)?;
        let q_next = driver.q_value(&model, &params, &summary)?;
        if q_next > q_current + config.tol_q {
            return Err(GemsError::DescentViolation { q_current, q_next });
        }
        let g = driver.observed_gic(&model, &params)?;
        let allowed = config.tol_g + config.se_multiplier * g.se.max(records[t - 1].gic_se);
        let increase = g.value > psi.gic + allowed;
        if increase {
            match config.gic_policy {
                GicPolicy::Strict => {
                    return Err(GemsError::GicIncrease {
                        iteration: t,
                        previous: psi.gic,
                        current: g.value,
                    })
                }
                GicPolicy::Warn => log::warn!(
                    "observed GIC rose from {} to {} at iteration {t}",
                    psi.gic,
                    g.value
                ),
            }
        }
        records.push(TraceRecord {
            iter: t,
            model_hash: driver.model_hash(&model),
            q: Some(q_next),
            gic: g.value,
            gic_se: g.se,
            gic_increase: increase,
        });
        let model_fixed =
            model == psi.model && (!config.stationary_stop || (q_current - q_next).abs() <= config.tol_q);
        let q_converged = prev_q.is_some_and(|pq| (pq - q_next).abs() < config.tol_q);
        log::debug!("iteration {t}: q = {q_next}, gic = {}", g.value);
        psi = PsiState {
            model,
            params,
            gic: g.value,
        };
        prev_q = Some(q_next);
        if model_fixed {
            stop_reason = StopReason::ModelFixed;
            break;
        }
        if q_converged {
            stop_reason = StopReason::QConverged;
            break;
        }
    }
    Ok((
        psi,
        GemsTrace {
            records,
            stop_reason,
        },
    ))
}

/// Result of one extra E-step and MS-step from a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointCheck {
    pub model_unchanged: bool,
    /// `Q(ψ; ψ)`.
    pub q_current: f64,
    /// `Q(ψ'; ψ)` for the proposed `ψ'`.
    pub q_next: f64,
}

impl FixedPointCheck {
    pub fn holds(&self, tol_q: f64) -> bool {
        self.model_unchanged && (self.q_current - self.q_next).abs() <= tol_q
    }
}

pub fn fixed_point_check<D: GemsDriver>(
    driver: &mut D,
    psi: &PsiState<D::Model, D::Params>,
    iteration: usize,
) -> Result<FixedPointCheck> {
    let summary = driver.e_step(psi, iteration)?;
    let q_current = driver.q_value(&psi.model, &psi.params, &summary)?;
    let (model, params) = driver.ms_step(&summary, psi)?;
    let q_next = driver.q_value(&model, &params, &summary)?;
    Ok(FixedPointCheck {
        model_unchanged: model == psi.model,
        q_current,
        q_next,
    })
}

/// True iff one more MS-step keeps the model and moves `Q` by at most
/// `tol_q`.
pub fn check_fixed_point<D: GemsDriver>(
    driver: &mut D,
    psi: &PsiState<D::Model, D::Params>,
    tol_q: f64,
) -> Result<bool> {
    Ok(fixed_point_check(driver, psi, usize::MAX)?.holds(tol_q))
}
