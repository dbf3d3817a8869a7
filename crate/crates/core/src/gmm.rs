//! Two-class Gaussian mixture: data generation, retraining aggregators, the AMP
//! iteration with memory correction, and test-error measurement.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm_se::{se_error_gmm, se_init_gmm, se_step_gmm, SeStateGmm};
use crate::numerics::{normal_cdf, stable_logistic, transpose_mul, RngStream};

/// Experiment parameters for the mixture model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    /// Norm of the class mean.
    pub gamma: f64,
    /// Dimension-to-sample ratio d/n.
    pub alpha: f64,
    /// Label flip probability.
    pub p: f64,
    pub pi_plus: f64,
    pub n: usize,
    pub d: usize,
}

impl GmmParams {
    /// Builds parameters with `d = round(alpha * n)`.
    pub fn new(gamma: f64, alpha: f64, p: f64, pi_plus: f64, n: usize) -> Result<Self> {
        let d = (alpha * n as f64).round() as usize;
        let params = GmmParams {
            gamma,
            alpha,
            p,
            pi_plus,
            n,
            d,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters for theory-only use, where sample sizes are irrelevant.
    pub fn theory(gamma: f64, alpha: f64, p: f64, pi_plus: f64) -> Result<Self> {
        let params = GmmParams {
            gamma,
            alpha,
            p,
            pi_plus,
            n: 1,
            d: 1,
        };
        params.validate_scalars()?;
        Ok(params)
    }

    pub fn pi_minus(&self) -> f64 {
        1.0 - self.pi_plus
    }

    pub fn validate_scalars(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(0.0..0.5).contains(&self.p) {
            return Err(Error::Config(format!(
                "p must lie in [0, 0.5), got {}",
                self.p
            )));
        }
        if !(self.pi_plus > 0.0 && self.pi_plus < 1.0) {
            return Err(Error::Config(format!(
                "pi_plus must lie in (0, 1), got {}",
                self.pi_plus
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_scalars()?;
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config(format!(
                "n and d must be positive (n={}, d={})",
                self.n, self.d
            )));
        }
        let n = self.n as f64;
        if (self.d as f64 / n - self.alpha).abs() > 1.0 / n + 1e-12 {
            return Err(Error::Config(format!(
                "d/n = {}/{} is inconsistent with alpha = {}",
                self.d, self.n, self.alpha
            )));
        }
        Ok(())
    }
}

/// A sampled mixture dataset. Labels are stored as ±1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmDataset {
    pub x: Array2<f64>,
    pub y_true: Array1<f64>,
    pub y_noisy: Array1<f64>,
    pub mu: Array1<f64>,
}

impl GmmDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn check(&self) -> Result<()> {
        let (n, d) = self.x.dim();
        if self.y_true.len() != n || self.y_noisy.len() != n || self.mu.len() != d {
            return Err(Error::Shape(format!(
                "dataset with X {n}x{d}, y_true {}, y_noisy {}, mu {}",
                self.y_true.len(),
                self.y_noisy.len(),
                self.mu.len()
            )));
        }
        Ok(())
    }
}

/// Draws a dataset. Sampling order: μ, then per sample (label, features, flip).
pub fn sample_gmm_dataset(params: &GmmParams, stream: RngStream) -> Result<GmmDataset> {
    params.validate()?;
    let (n, d) = (params.n, params.d);
    let mut rng = stream.rng();
    let mut mu: Array1<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = mu.dot(&mu).sqrt();
    if norm == 0.0 {
        return Err(Error::Numerical("sampled mean vector has zero norm".into()));
    }
    mu *= params.gamma / norm;

    let mut x = Array2::<f64>::zeros((n, d));
    let mut y_true = Array1::<f64>::zeros(n);
    let mut y_noisy = Array1::<f64>::zeros(n);
    for i in 0..n {
        let y = if rng.random::<f64>() < params.pi_plus {
            1.0
        } else {
            -1.0
        };
        let mut row = x.row_mut(i);
        for (xij, &mj) in row.iter_mut().zip(mu.iter()) {
            *xij = y * mj + rng.sample::<f64, _>(StandardNormal);
        }
        let flip = rng.random::<f64>() < params.p;
        y_true[i] = y;
        y_noisy[i] = if flip { -y } else { y };
    }
    Ok(GmmDataset {
        x,
        y_true,
        y_noisy,
        mu,
    })
}

/// Retraining target rule g(y, ŷ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorGmm {
    /// g = ŷ.
    Identity,
    /// Posterior-mean aggregator for signal-to-noise ratio `eta`.
    OptimalGmm { eta: f64 },
    /// 2σ(βy) − 1.
    SmoothedFullRt { beta: f64 },
    /// ŷ σ(βyŷ).
    SmoothedConsensusRt { beta: f64 },
}

#[inline]
fn check_inputs(y: f64, yhat: f64) -> Result<()> {
    if !y.is_finite() {
        return Err(Error::Domain(format!(
            "aggregator input y = {y} is not finite"
        )));
    }
    if yhat != 1.0 && yhat != -1.0 {
        return Err(Error::Domain(format!(
            "noisy label must be +1 or -1, got {yhat}"
        )));
    }
    Ok(())
}

/// γ²/(α(η²+1)), the weight on y inside the optimal log-odds.
#[inline]
pub fn optimal_slope(eta: f64, params: &GmmParams) -> f64 {
    if eta.is_infinite() {
        return 0.0;
    }
    params.gamma * params.gamma / (params.alpha * (eta * eta + 1.0))
}

#[inline]
fn optimal_value(slope: f64, y: f64, yhat: f64, params: &GmmParams) -> f64 {
    if params.p == 0.0 {
        return yhat;
    }
    let label_odds = ((1.0 - params.p) / params.p).ln();
    let prior_odds = (params.pi_plus / params.pi_minus()).ln();
    (0.5 * (yhat * label_odds + 2.0 * slope * y + prior_odds)).tanh()
}

impl AggregatorGmm {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AggregatorGmm::Identity => Ok(()),
            AggregatorGmm::OptimalGmm { eta } => {
                if eta >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::Config(format!("eta must be nonnegative, got {eta}")))
                }
            }
            AggregatorGmm::SmoothedFullRt { beta }
            | AggregatorGmm::SmoothedConsensusRt { beta } => {
                if beta > 0.0 && beta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "beta must be positive and finite, got {beta}"
                    )))
                }
            }
        }
    }

    /// g(y, ŷ) without input checks.
    #[inline]
    pub fn value(&self, y: f64, yhat: f64, params: &GmmParams) -> f64 {
        match *self {
            AggregatorGmm::Identity => yhat,
            AggregatorGmm::OptimalGmm { eta } => {
                optimal_value(optimal_slope(eta, params), y, yhat, params)
            }
            AggregatorGmm::SmoothedFullRt { beta } => 2.0 * stable_logistic(beta * y) - 1.0,
            AggregatorGmm::SmoothedConsensusRt { beta } => yhat * stable_logistic(beta * y * yhat),
        }
    }

    /// ∂g/∂y without input checks.
    #[inline]
    pub fn derivative(&self, y: f64, yhat: f64, params: &GmmParams) -> f64 {
        match *self {
            AggregatorGmm::Identity => 0.0,
            AggregatorGmm::OptimalGmm { eta } => {
                if params.p == 0.0 {
                    return 0.0;
                }
                let slope = optimal_slope(eta, params);
                let g = optimal_value(slope, y, yhat, params);
                slope * (1.0 - g * g)
            }
            AggregatorGmm::SmoothedFullRt { beta } => {
                let s = stable_logistic(beta * y);
                2.0 * beta * s * (1.0 - s)
            }
            AggregatorGmm::SmoothedConsensusRt { beta } => {
                let s = stable_logistic(beta * y * yhat);
                beta * s * (1.0 - s)
            }
        }
    }

    /// Point in y where the function turns over most sharply, used to split
    /// quadrature ranges: the kink of the smoothed rules or the centre of the
    /// optimal rule's transition.
    pub fn transition_point(&self, yhat: f64, params: &GmmParams) -> Option<f64> {
        match *self {
            AggregatorGmm::SmoothedFullRt { .. } | AggregatorGmm::SmoothedConsensusRt { .. } => {
                Some(0.0)
            }
            AggregatorGmm::OptimalGmm { eta } => {
                let slope = optimal_slope(eta, params);
                if params.p == 0.0 || slope == 0.0 {
                    return None;
                }
                let offset = yhat * ((1.0 - params.p) / params.p).ln()
                    + (params.pi_plus / params.pi_minus()).ln();
                Some(-offset / (2.0 * slope))
            }
            AggregatorGmm::Identity => None,
        }
    }
}

pub fn eval_aggregator(agg: &AggregatorGmm, y: f64, yhat: f64, params: &GmmParams) -> Result<f64> {
    check_inputs(y, yhat)?;
    Ok(agg.value(y, yhat, params))
}

pub fn eval_aggregator_deriv(
    agg: &AggregatorGmm,
    y: f64,
    yhat: f64,
    params: &GmmParams,
) -> Result<f64> {
    check_inputs(y, yhat)?;
    Ok(agg.derivative(y, yhat, params))
}

/// Mean derivative of the aggregator over the sample.
pub fn onsager_coefficient(
    agg: &AggregatorGmm,
    y_soft: &Array1<f64>,
    y_noisy: &Array1<f64>,
    params: &GmmParams,
) -> Result<f64> {
    if y_soft.len() != y_noisy.len() {
        return Err(Error::Shape(format!(
            "soft predictions have length {}, labels {}",
            y_soft.len(),
            y_noisy.len()
        )));
    }
    if y_soft.is_empty() {
        return Err(Error::Shape("empty prediction vector".into()));
    }
    let sum: f64 = y_soft
        .iter()
        .zip(y_noisy.iter())
        .map(|(&y, &yh)| agg.derivative(y, yh, params))
        .sum();
    Ok(sum / y_soft.len() as f64)
}

/// Iterate of the AMP recursion. `t = 0` is the all-zero starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpStateGmm {
    pub theta: Array1<f64>,
    pub y_soft: Array1<f64>,
    pub t: usize,
}

impl AmpStateGmm {
    pub fn zeros(n: usize, d: usize) -> Self {
        AmpStateGmm {
            theta: Array1::zeros(d),
            y_soft: Array1::zeros(n),
            t: 0,
        }
    }
}

/// One model-update plus soft-prediction step.
pub fn amp_step_gmm(
    state: &AmpStateGmm,
    data: &GmmDataset,
    agg: &AggregatorGmm,
    params: &GmmParams,
) -> Result<AmpStateGmm> {
    let (n, d) = data.x.dim();
    if state.theta.len() != d || state.y_soft.len() != n || data.y_noisy.len() != n {
        return Err(Error::Shape(format!(
            "state (theta {}, y {}) does not match data {n}x{d}",
            state.theta.len(),
            state.y_soft.len()
        )));
    }
    let g: Array1<f64> = state
        .y_soft
        .iter()
        .zip(data.y_noisy.iter())
        .map(|(&y, &yh)| agg.value(y, yh, params))
        .collect();
    let c = onsager_coefficient(agg, &state.y_soft, &data.y_noisy, params)?;
    let sqrt_n = (n as f64).sqrt();
    let mut theta = transpose_mul(&data.x, &g) / sqrt_n;
    if c != 0.0 {
        theta.scaled_add(-c, &state.theta);
    }
    let mut y_soft = data.x.dot(&theta) / sqrt_n;
    y_soft.scaled_add(-(d as f64) / n as f64, &g);
    let next = AmpStateGmm {
        theta,
        y_soft,
        t: state.t + 1,
    };
    if !next
        .theta
        .iter()
        .chain(next.y_soft.iter())
        .all(|v| v.is_finite())
    {
        return Err(Error::Divergence {
            iteration: next.t,
            detail: "non-finite entry in AMP iterate".into(),
        });
    }
    Ok(next)
}

/// Φ(−μᵀθ/‖θ‖).
pub fn test_error_gmm(theta: &Array1<f64>, mu: &Array1<f64>) -> Result<f64> {
    if theta.len() != mu.len() {
        return Err(Error::Shape(format!(
            "theta has length {}, mu {}",
            theta.len(),
            mu.len()
        )));
    }
    let norm = theta.dot(theta).sqrt();
    if !(norm > 0.0) {
        return Err(Error::DegenerateModel("classifier has zero norm".into()));
    }
    Ok(normal_cdf(-mu.dot(theta) / norm))
}

/// (1/n) Xᵀŷ.
pub fn vanilla_estimator(data: &GmmDataset) -> Array1<f64> {
    transpose_mul(&data.x, &data.y_noisy) / data.n() as f64
}

/// How the aggregator is chosen at each iteration after the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleGmm {
    Identity,
    /// Optimal aggregator tuned from the matched state-evolution trace.
    Optimal,
    /// Optimal aggregator tuned from the overlap measured on the current iterate
    /// (uses the true mean; for exploration only).
    OptimalPlugin,
    SmoothedFullRt {
        beta: f64,
    },
    SmoothedConsensusRt {
        beta: f64,
    },
    /// Explicit list for iterations 1, 2, ...; the last entry repeats.
    Fixed {
        aggregators: Vec<AggregatorGmm>,
    },
}

impl ScheduleGmm {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleGmm::Identity => "identity",
            ScheduleGmm::Optimal => "optimal",
            ScheduleGmm::OptimalPlugin => "optimal_plugin",
            ScheduleGmm::SmoothedFullRt { .. } => "smoothed_ft",
            ScheduleGmm::SmoothedConsensusRt { .. } => "smoothed_ct",
            ScheduleGmm::Fixed { .. } => "fixed",
        }
    }

    /// Aggregator applied to the iterate with index `t >= 1`, given the
    /// state-evolution state predicted for that iterate.
    pub fn aggregator(&self, t: usize, se: &SeStateGmm, params: &GmmParams) -> AggregatorGmm {
        match self {
            ScheduleGmm::Identity => AggregatorGmm::Identity,
            ScheduleGmm::Optimal | ScheduleGmm::OptimalPlugin => AggregatorGmm::OptimalGmm {
                eta: se.matched_eta(params),
            },
            ScheduleGmm::SmoothedFullRt { beta } => AggregatorGmm::SmoothedFullRt { beta: *beta },
            ScheduleGmm::SmoothedConsensusRt { beta } => {
                AggregatorGmm::SmoothedConsensusRt { beta: *beta }
            }
            ScheduleGmm::Fixed { aggregators } => {
                let idx = (t.max(1) - 1).min(aggregators.len().saturating_sub(1));
                aggregators
                    .get(idx)
                    .copied()
                    .unwrap_or(AggregatorGmm::Identity)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScheduleGmm::SmoothedFullRt { beta } | ScheduleGmm::SmoothedConsensusRt { beta } => {
                AggregatorGmm::SmoothedFullRt { beta: *beta }.validate()
            }
            ScheduleGmm::Fixed { aggregators } => {
                if aggregators.is_empty() {
                    return Err(Error::Config(
                        "fixed schedule needs at least one aggregator".into(),
                    ));
                }
                aggregators.iter().try_for_each(|a| a.validate())
            }
            _ => Ok(()),
        }
    }
}

/// Per-iteration measurements of an AMP run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationGmm {
    pub t: usize,
    pub test_error: f64,
    /// μᵀθ/‖θ‖.
    pub overlap: f64,
    pub theta_norm: f64,
    pub y_norm: f64,
    pub onsager: f64,
    /// Aggregator that produced this iterate.
    pub aggregator: AggregatorGmm,
    pub predicted_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGmm {
    pub rows: Vec<IterationGmm>,
    /// Set when the run stopped early.
    pub failure: Option<Error>,
}

/// Runs `iterations` AMP steps from the identity-aggregator start and records
/// metrics after each step, next to the state-evolution prediction.
pub fn run_retraining_gmm(
    params: &GmmParams,
    schedule: &ScheduleGmm,
    iterations: usize,
    stream: RngStream,
) -> Result<TrajectoryGmm> {
    let data = sample_gmm_dataset(params, stream)?;
    run_retraining_on(&data, params, schedule, iterations)
}

pub fn run_retraining_on(
    data: &GmmDataset,
    params: &GmmParams,
    schedule: &ScheduleGmm,
    iterations: usize,
) -> Result<TrajectoryGmm> {
    if iterations == 0 {
        return Err(Error::Config(
            "number of iterations must be at least 1".into(),
        ));
    }
    data.check()?;
    schedule.validate()?;
    let mut state = AmpStateGmm::zeros(data.n(), data.d());
    let mut se = se_init_gmm(params);
    let mut rows = Vec::with_capacity(iterations);
    let mut agg = AggregatorGmm::Identity;
    for t in 1..=iterations {
        if t > 1 {
            agg = match schedule {
                ScheduleGmm::OptimalPlugin => {
                    let measured = measured_state(&state.theta, &data.mu, params);
                    AggregatorGmm::OptimalGmm {
                        eta: measured.matched_eta(params),
                    }
                }
                _ => schedule.aggregator(t - 1, &se, params),
            };
            se = se_step_gmm(&se, &agg, params)?;
        }
        let onsager = onsager_coefficient(&agg, &state.y_soft, &data.y_noisy, params)?;
        state = match amp_step_gmm(&state, data, &agg, params) {
            Ok(s) => s,
            Err(e) => {
                return Ok(TrajectoryGmm {
                    rows,
                    failure: Some(e),
                })
            }
        };
        let theta_norm = state.theta.dot(&state.theta).sqrt();
        let test_error = match test_error_gmm(&state.theta, &data.mu) {
            Ok(v) => v,
            Err(e) => {
                return Ok(TrajectoryGmm {
                    rows,
                    failure: Some(e),
                })
            }
        };
        rows.push(IterationGmm {
            t,
            test_error,
            overlap: data.mu.dot(&state.theta) / theta_norm,
            theta_norm,
            y_norm: state.y_soft.dot(&state.y_soft).sqrt(),
            onsager,
            aggregator: agg,
            predicted_error: se_error_gmm(&se, params),
        });
    }
    Ok(TrajectoryGmm {
        rows,
        failure: None,
    })
}

/// State-evolution coordinates read off an iterate: m = μᵀθ/(γ√d),
/// σ² = ‖θ‖²/d − m².
pub fn measured_state(theta: &Array1<f64>, mu: &Array1<f64>, params: &GmmParams) -> SeStateGmm {
    let d = theta.len() as f64;
    let m = mu.dot(theta) / (params.gamma * d.sqrt());
    let var = (theta.dot(theta) / d - m * m).max(1e-300);
    SeStateGmm::new(m, var.sqrt(), params)
}

/// Hard retraining rules, run without memory correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardRule {
    /// Retrain on sign(y).
    FullRetraining,
    /// Keep ŷ where sign(y) agrees with it, zero elsewhere.
    ConsensusRetraining,
}

impl HardRule {
    #[inline]
    pub fn value(&self, y: f64, yhat: f64) -> f64 {
        let s = if y >= 0.0 { 1.0 } else { -1.0 };
        match self {
            HardRule::FullRetraining => s,
            HardRule::ConsensusRetraining => {
                if s == yhat {
                    yhat
                } else {
                    0.0
                }
            }
        }
    }
}

/// Iterates θ ← Xᵀg(y, ŷ)/√n, y ← Xθ/√n with no correction terms; the first
/// step uses g = ŷ. Returns the test error after each step.
pub fn run_no_memory_gmm(data: &GmmDataset, rule: HardRule, iterations: usize) -> Result<Vec<f64>> {
    if iterations == 0 {
        return Err(Error::Config(
            "number of iterations must be at least 1".into(),
        ));
    }
    data.check()?;
    let sqrt_n = (data.n() as f64).sqrt();
    let mut targets = data.y_noisy.clone();
    let mut errors = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let theta = transpose_mul(&data.x, &targets) / sqrt_n;
        errors.push(test_error_gmm(&theta, &data.mu)?);
        let y = data.x.dot(&theta) / sqrt_n;
        targets = y
            .iter()
            .zip(data.y_noisy.iter())
            .map(|(&yi, &yh)| rule.value(yi, yh))
            .collect();
    }
    Ok(errors)
}
