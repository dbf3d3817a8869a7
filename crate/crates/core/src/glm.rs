//! Generalized linear model with a binary response: data generation, the
//! posterior-score aggregator, the AMP iteration and test error.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    log_normal_cdf, normal_cdf, normal_pdf, stable_logistic, transpose_mul, Quadrature, RngStream,
    DEFAULT_ORDER_1D,
};

/// P(y = +1 | x) = h(xᵀβ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Link {
    /// h(z) = 1{z > 0}.
    Sign,
    /// h(z) = 1/(1 + e^{−scale·z}).
    Logistic { scale: f64 },
    /// h(z) = Φ(scale·z).
    Probit { scale: f64 },
    /// Piecewise-linear interpolation of (z, h) knots, constant outside.
    Tabulated { knots: Vec<(f64, f64)> },
}

impl Link {
    pub fn name(&self) -> &'static str {
        match self {
            Link::Sign => "sign",
            Link::Logistic { .. } => "logistic",
            Link::Probit { .. } => "probit",
            Link::Tabulated { .. } => "tabulated",
        }
    }

    #[inline]
    pub fn h(&self, z: f64) -> f64 {
        match self {
            Link::Sign => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    0.0
                } else {
                    0.5
                }
            }
            Link::Logistic { scale } => stable_logistic(scale * z),
            Link::Probit { scale } => normal_cdf(scale * z),
            Link::Tabulated { knots } => interpolate(knots, z),
        }
    }

    /// ln h(z), accurate where h underflows.
    fn ln_h(&self, z: f64) -> f64 {
        match self {
            Link::Logistic { scale } => {
                let x = scale * z;
                if x >= 0.0 {
                    -(-x).exp().ln_1p()
                } else {
                    x - x.exp().ln_1p()
                }
            }
            Link::Probit { scale } => log_normal_cdf(scale * z),
            _ => self.h(z).ln(),
        }
    }

    /// Points where h jumps.
    pub fn breakpoints(&self) -> &'static [f64] {
        match self {
            Link::Sign => &[0.0],
            _ => &[],
        }
    }

    /// Checks h(u) > h(−u) for u > 0 on a grid, and that h maps into [0, 1].
    pub fn validate(&self) -> Result<()> {
        match self {
            Link::Logistic { scale } | Link::Probit { scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::Config(format!(
                        "link scale must be positive, got {scale}"
                    )));
                }
            }
            Link::Tabulated { knots } => {
                if knots.len() < 2 || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return Err(Error::Config(
                        "tabulated link needs >= 2 knots with increasing z".into(),
                    ));
                }
                if knots
                    .iter()
                    .any(|&(z, h)| !z.is_finite() || !(0.0..=1.0).contains(&h))
                {
                    return Err(Error::Config(
                        "tabulated link values must lie in [0, 1]".into(),
                    ));
                }
            }
            Link::Sign => {}
        }
        for k in 1..=400 {
            let u = 0.025 * k as f64;
            if !(self.h(u) > self.h(-u)) {
                return Err(Error::Config(format!(
                    "link {} violates h(u) > h(-u) at u = {u}",
                    self.name()
                )));
            }
        }
        Ok(())
    }
}

fn interpolate(knots: &[(f64, f64)], z: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if z <= first.0 {
        return first.1;
    }
    if z >= last.0 {
        return last.1;
    }
    let k = knots.partition_point(|&(x, _)| x <= z);
    let (x0, y0) = knots[k - 1];
    let (x1, y1) = knots[k];
    y0 + (y1 - y0) * (z - x0) / (x1 - x0)
}

/// ĥ_p(z) = (1−p)h(z) + p(1−h(z)), the probability that the noisy label is +1.
#[inline]
pub fn hat_h_p(z: f64, link: &Link, p: f64) -> f64 {
    let h = link.h(z);
    (1.0 - p) * h + p * (1.0 - h)
}

/// ln P(Ŷ = yhat | Z = z).
fn ln_label_likelihood(z: f64, yhat: f64, link: &Link, p: f64) -> f64 {
    let f = if yhat > 0.0 {
        hat_h_p(z, link, p)
    } else {
        1.0 - hat_h_p(z, link, p)
    };
    if f > 1e-290 || p > 0.0 {
        return f.ln();
    }
    // clean labels in a far tail
    match link {
        Link::Logistic { .. } | Link::Probit { .. } => link.ln_h(yhat * z),
        _ => f.ln(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmParams {
    /// Signal strength: ‖β‖²/d → γ².
    pub gamma: f64,
    pub alpha: f64,
    pub p: f64,
    pub link: Link,
    pub n: usize,
    pub d: usize,
}

impl GlmParams {
    pub fn new(gamma: f64, alpha: f64, p: f64, link: Link, n: usize) -> Result<Self> {
        let d = (alpha * n as f64).round() as usize;
        let params = GlmParams {
            gamma,
            alpha,
            p,
            link,
            n,
            d,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn theory(gamma: f64, alpha: f64, p: f64, link: Link) -> Result<Self> {
        let params = GlmParams {
            gamma,
            alpha,
            p,
            link,
            n: 1,
            d: 1,
        };
        params.validate_scalars()?;
        Ok(params)
    }

    /// γ used by the theory. The sign link ignores the scale of xᵀβ, so it is
    /// pinned to 1 there.
    pub fn effective_gamma(&self) -> f64 {
        match self.link {
            Link::Sign => 1.0,
            _ => self.gamma,
        }
    }

    /// αγ², the variance of xᵀβ.
    pub fn signal_variance(&self) -> f64 {
        let g = self.effective_gamma();
        self.alpha * g * g
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
        self.link.validate()
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

#[derive(Debug, Clone, PartialEq)]
pub struct GlmDataset {
    /// Entries N(0, 1/n).
    pub x: Array2<f64>,
    pub beta_true: Array1<f64>,
    pub y_true: Array1<f64>,
    pub y_noisy: Array1<f64>,
}

impl GlmDataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn check(&self) -> Result<()> {
        let (n, d) = self.x.dim();
        if self.y_true.len() != n || self.y_noisy.len() != n || self.beta_true.len() != d {
            return Err(Error::Shape(format!(
                "dataset with X {n}x{d}, y_true {}, y_noisy {}, beta {}",
                self.y_true.len(),
                self.y_noisy.len(),
                self.beta_true.len()
            )));
        }
        Ok(())
    }
}

/// Draws a dataset. Sampling order: β, then X row by row, then per sample
/// (label uniform, flip uniform).
pub fn sample_glm_dataset(params: &GlmParams, stream: RngStream) -> Result<GlmDataset> {
    params.validate()?;
    let (n, d) = (params.n, params.d);
    let mut rng = stream.rng();
    let mut beta: Array1<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm2 = beta.dot(&beta);
    if norm2 == 0.0 {
        return Err(Error::Numerical(
            "sampled coefficient vector has zero norm".into(),
        ));
    }
    beta *= params.gamma * (d as f64 / norm2).sqrt();

    let scale = 1.0 / (n as f64).sqrt();
    let mut x = Array2::<f64>::zeros((n, d));
    for v in x.iter_mut() {
        *v = scale * rng.sample::<f64, _>(StandardNormal);
    }
    let margins = x.dot(&beta);
    let mut y_true = Array1::<f64>::zeros(n);
    let mut y_noisy = Array1::<f64>::zeros(n);
    for i in 0..n {
        let y = if rng.random::<f64>() < params.link.h(margins[i]) {
            1.0
        } else {
            -1.0
        };
        let flip = rng.random::<f64>() < params.p;
        y_true[i] = y;
        y_noisy[i] = if flip { -y } else { y };
    }
    Ok(GlmDataset {
        x,
        beta_true: beta,
        y_true,
        y_noisy,
    })
}

/// Posterior of Z ~ N(0, αγ²) after observing a soft prediction and a noisy
/// label. The Gaussian part is N(`centre`, `spread`²); the label tilts it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelPosterior {
    pub centre: f64,
    pub spread: f64,
    /// P(Ŷ = yhat | soft prediction).
    pub evidence: f64,
    /// 𝔼[Z | soft prediction, Ŷ].
    pub mean: f64,
}

impl LabelPosterior {
    /// (𝔼[Z|u,ŷ] − 𝔼[Z|u]) / Var(Z|u).
    pub fn score(&self) -> f64 {
        (self.mean - self.centre) / (self.spread * self.spread)
    }
}

/// Posterior given u = αη²Z + αηG (the canonical soft prediction) and ŷ.
pub fn label_posterior(
    u: f64,
    yhat: f64,
    eta: f64,
    params: &GlmParams,
    quad: &Quadrature,
) -> LabelPosterior {
    let precision = 1.0 / params.signal_variance() + eta * eta;
    let spread = precision.recip().sqrt();
    let centre = u / params.alpha / precision;
    let (p, link) = (params.p, &params.link);

    // Max-shifted sums: Σ wᵢ f(zᵢ) and Σ wᵢ (zᵢ−centre) f(zᵢ).
    let mut top = f64::NEG_INFINITY;
    quad.for_each_normal_point(centre, spread, link.breakpoints(), |z, w| {
        if w > 0.0 {
            top = top.max(w.ln() + ln_label_likelihood(z, yhat, link, p));
        }
    });
    let mut mass = 0.0;
    let mut first = 0.0;
    if top.is_finite() {
        quad.for_each_normal_point(centre, spread, link.breakpoints(), |z, w| {
            if w > 0.0 {
                let v = (w.ln() + ln_label_likelihood(z, yhat, link, p) - top).exp();
                mass += v;
                first += v * (z - centre);
            }
        });
    }
    let evidence = if top.is_finite() {
        mass * top.exp()
    } else {
        0.0
    };
    let mean = if mass > 0.0 {
        centre + first / mass
    } else {
        centre
    };
    LabelPosterior {
        centre,
        spread,
        evidence,
        mean,
    }
}

/// Posterior score at the canonical soft prediction, in closed form for the
/// sign link.
pub(crate) fn canonical_score(
    u: f64,
    yhat: f64,
    eta: f64,
    params: &GlmParams,
    quad: &Quadrature,
) -> f64 {
    match params.link {
        Link::Sign => sign_value(u, yhat, eta, params.alpha, params.p),
        _ => label_posterior(u, yhat, eta, params, quad).score(),
    }
}

/// Optimal aggregator at signal-to-noise ratio `eta`, for the canonical soft
/// prediction u = αη²Z + αηG.
pub fn optimal_aggregator_glm(
    u: f64,
    yhat: f64,
    eta: f64,
    params: &GlmParams,
    order: usize,
) -> Result<f64> {
    check_inputs(u, yhat)?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!(
            "eta must be finite and nonnegative, got {eta}"
        )));
    }
    let quad = Quadrature::cached(order)?;
    Ok(label_posterior(u, yhat, eta, params, &quad).score())
}

/// Closed form of the optimal aggregator for the sign link.
pub fn optimal_aggregator_sign(u: f64, yhat: f64, eta: f64, params: &GlmParams) -> Result<f64> {
    check_inputs(u, yhat)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    Ok(sign_value(u, yhat, eta, params.alpha, params.p))
}

#[inline]
fn sign_value(u: f64, yhat: f64, eta: f64, alpha: f64, p: f64) -> f64 {
    let s = (1.0 / alpha + eta * eta).recip().sqrt();
    let x = u * s / alpha;
    let q = 1.0 - 2.0 * p;
    // 1 + qŷ(2Φ(x) − 1) = 2(p + qΦ(ŷx)), written to keep precision in the tails
    let denom = 2.0 * (p + q * normal_cdf(yhat * x));
    q * yhat * 2.0 * normal_pdf(x) / (s * denom)
}

fn check_inputs(u: f64, yhat: f64) -> Result<()> {
    if !u.is_finite() {
        return Err(Error::Domain(format!("aggregator input {u} is not finite")));
    }
    if yhat != 1.0 && yhat != -1.0 {
        return Err(Error::Domain(format!(
            "noisy label must be +1 or -1, got {yhat}"
        )));
    }
    Ok(())
}

/// Retraining target rule for the linear model.
///
/// The optimal variants take the soft prediction multiplied by `scale`
/// before evaluating the canonical form; `scale = αμ/σ²` maps a state (μ, σ)
/// onto the canonical one with the same η.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorGlm {
    Identity,
    OptimalGlm { eta: f64, scale: f64, order: usize },
    OptimalSign { eta: f64, scale: f64 },
}

impl AggregatorGlm {
    /// Optimal rule matched to the state (μ, σ).
    pub fn optimal_for(mu: f64, sigma: f64, params: &GlmParams, order: usize) -> Self {
        let eta = mu / sigma;
        let scale = params.alpha * mu / (sigma * sigma);
        match params.link {
            Link::Sign if eta > 0.0 => AggregatorGlm::OptimalSign { eta, scale },
            _ => AggregatorGlm::OptimalGlm { eta, scale, order },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AggregatorGlm::Identity => Ok(()),
            AggregatorGlm::OptimalGlm { eta, scale, order } => {
                if !(eta.is_finite() && scale.is_finite()) {
                    return Err(Error::Config(format!(
                        "non-finite aggregator parameters ({eta}, {scale})"
                    )));
                }
                if order < 2 {
                    return Err(Error::Config(format!(
                        "quadrature order must be >= 2, got {order}"
                    )));
                }
                Ok(())
            }
            AggregatorGlm::OptimalSign { eta, scale } => {
                if !(eta > 0.0 && eta.is_finite() && scale.is_finite()) {
                    return Err(Error::Config(format!(
                        "invalid sign aggregator parameters ({eta}, {scale})"
                    )));
                }
                Ok(())
            }
        }
    }

    /// g(u, ŷ) without input checks.
    pub fn value(&self, u: f64, yhat: f64, params: &GlmParams) -> f64 {
        match *self {
            AggregatorGlm::Identity => yhat,
            AggregatorGlm::OptimalGlm { eta, scale, order } => {
                let quad = Quadrature::cached(order).expect("order validated");
                label_posterior(scale * u, yhat, eta, params, &quad).score()
            }
            AggregatorGlm::OptimalSign { eta, scale } => {
                sign_value(scale * u, yhat, eta, params.alpha, params.p)
            }
        }
    }

    /// Central finite difference of g in its first argument.
    pub fn derivative_fd(&self, u: f64, yhat: f64, params: &GlmParams) -> f64 {
        if let AggregatorGlm::Identity = self {
            return 0.0;
        }
        (self.value(u + FD_STEP, yhat, params) - self.value(u - FD_STEP, yhat, params))
            / (2.0 * FD_STEP)
    }
}

/// Step for the finite-difference memory-correction coefficient.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct AmpStateGlm {
    pub beta_est: Array1<f64>,
    pub y_soft: Array1<f64>,
    pub t: usize,
}

impl AmpStateGlm {
    pub fn zeros(n: usize, d: usize) -> Self {
        AmpStateGlm {
            beta_est: Array1::zeros(d),
            y_soft: Array1::zeros(n),
            t: 0,
        }
    }
}

/// (g, C) over a sample: aggregator values and the mean finite-difference derivative.
fn targets_and_onsager(
    agg: &AggregatorGlm,
    y_soft: &Array1<f64>,
    y_noisy: &Array1<f64>,
    params: &GlmParams,
) -> (Array1<f64>, f64) {
    let g: Array1<f64> = y_soft
        .iter()
        .zip(y_noisy.iter())
        .map(|(&u, &yh)| agg.value(u, yh, params))
        .collect();
    let c = if let AggregatorGlm::Identity = agg {
        0.0
    } else {
        y_soft
            .iter()
            .zip(y_noisy.iter())
            .map(|(&u, &yh)| agg.derivative_fd(u, yh, params))
            .sum::<f64>()
            / y_soft.len() as f64
    };
    (g, c)
}

pub fn amp_step_glm(
    state: &AmpStateGlm,
    data: &GlmDataset,
    agg: &AggregatorGlm,
    params: &GlmParams,
) -> Result<AmpStateGlm> {
    let (n, d) = data.x.dim();
    if state.beta_est.len() != d || state.y_soft.len() != n || data.y_noisy.len() != n {
        return Err(Error::Shape(format!(
            "state (beta {}, y {}) does not match data {n}x{d}",
            state.beta_est.len(),
            state.y_soft.len()
        )));
    }
    agg.validate()?;
    let (g, c) = targets_and_onsager(agg, &state.y_soft, &data.y_noisy, params);
    let mut beta_est = transpose_mul(&data.x, &g);
    if c != 0.0 {
        beta_est.scaled_add(-c, &state.beta_est);
    }
    let mut y_soft = data.x.dot(&beta_est);
    y_soft.scaled_add(-(d as f64) / n as f64, &g);
    let next = AmpStateGlm {
        beta_est,
        y_soft,
        t: state.t + 1,
    };
    if !next
        .beta_est
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

/// Lemma-style error integral F(ρ) for a classifier with cosine ρ to β.
pub fn error_from_overlap(rho: f64, params: &GlmParams) -> f64 {
    let rho = rho.clamp(-1.0, 1.0);
    if let Link::Sign = params.link {
        return rho.acos() / std::f64::consts::PI;
    }
    error_from_overlap_quadrature(
        rho,
        params,
        &Quadrature::cached(DEFAULT_ORDER_1D).expect("valid order"),
    )
}

/// F(ρ) by quadrature for any link, split at 0 and at the link's jumps.
pub fn error_from_overlap_quadrature(rho: f64, params: &GlmParams, quad: &Quadrature) -> f64 {
    let sd = params.signal_variance().sqrt();
    let ratio = rho / (1.0 - rho * rho).sqrt();
    let mut cuts = vec![0.0];
    cuts.extend(params.link.breakpoints().iter().map(|b| b / sd));
    quad.expect_normal(0.0, 1.0, &cuts, |z| {
        let h = params.link.h(sd * z);
        normal_cdf(ratio * z) * (1.0 - h) + normal_cdf(-ratio * z) * h
    })
}

/// Test error of θ against the true coefficients.
pub fn test_error_glm(theta: &Array1<f64>, data: &GlmDataset, params: &GlmParams) -> Result<f64> {
    Ok(error_from_overlap(overlap(theta, &data.beta_true)?, params))
}

/// βᵀθ / (‖β‖‖θ‖).
pub fn overlap(theta: &Array1<f64>, beta: &Array1<f64>) -> Result<f64> {
    if theta.len() != beta.len() {
        return Err(Error::Shape(format!(
            "theta has length {}, beta {}",
            theta.len(),
            beta.len()
        )));
    }
    let nt = theta.dot(theta).sqrt();
    let nb = beta.dot(beta).sqrt();
    if !(nt > 0.0 && nb > 0.0) {
        return Err(Error::DegenerateModel(
            "zero-norm classifier or coefficient vector".into(),
        ));
    }
    Ok((beta.dot(theta) / (nt * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleGlm {
    Identity,
    /// Optimal rule matched to the state-evolution trace.
    Optimal {
        order: usize,
    },
    Fixed {
        aggregators: Vec<AggregatorGlm>,
    },
}

impl ScheduleGlm {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleGlm::Identity => "identity",
            ScheduleGlm::Optimal { .. } => "optimal",
            ScheduleGlm::Fixed { .. } => "fixed",
        }
    }

    pub fn aggregator(
        &self,
        t: usize,
        se: &crate::glm_se::SeStateGlm,
        params: &GlmParams,
    ) -> AggregatorGlm {
        match self {
            ScheduleGlm::Identity => AggregatorGlm::Identity,
            ScheduleGlm::Optimal { order } => {
                AggregatorGlm::optimal_for(se.mu, se.sigma, params, *order)
            }
            ScheduleGlm::Fixed { aggregators } => {
                let idx = (t.max(1) - 1).min(aggregators.len().saturating_sub(1));
                aggregators
                    .get(idx)
                    .copied()
                    .unwrap_or(AggregatorGlm::Identity)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScheduleGlm::Optimal { order } if *order < 2 => Err(Error::Config(format!(
                "quadrature order must be >= 2, got {order}"
            ))),
            ScheduleGlm::Fixed { aggregators } if aggregators.is_empty() => Err(Error::Config(
                "fixed schedule needs at least one aggregator".into(),
            )),
            ScheduleGlm::Fixed { aggregators } => aggregators.iter().try_for_each(|a| a.validate()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationGlm {
    pub t: usize,
    pub test_error: f64,
    pub overlap: f64,
    pub beta_norm: f64,
    pub y_norm: f64,
    pub onsager: f64,
    pub aggregator: AggregatorGlm,
    pub predicted_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryGlm {
    pub rows: Vec<IterationGlm>,
    pub failure: Option<Error>,
}

pub fn run_retraining_glm(
    params: &GlmParams,
    schedule: &ScheduleGlm,
    iterations: usize,
    stream: RngStream,
) -> Result<TrajectoryGlm> {
    let data = sample_glm_dataset(params, stream)?;
    run_retraining_glm_on(&data, params, schedule, iterations)
}

pub fn run_retraining_glm_on(
    data: &GlmDataset,
    params: &GlmParams,
    schedule: &ScheduleGlm,
    iterations: usize,
) -> Result<TrajectoryGlm> {
    use crate::glm_se::{se_error_glm, se_init_glm, se_step_glm_generic};
    if iterations == 0 {
        return Err(Error::Config(
            "number of iterations must be at least 1".into(),
        ));
    }
    data.check()?;
    schedule.validate()?;
    let mut state = AmpStateGlm::zeros(data.n(), data.d());
    let mut se = se_init_glm(params)?;
    let mut rows = Vec::with_capacity(iterations);
    let mut agg = AggregatorGlm::Identity;
    for t in 1..=iterations {
        if t > 1 {
            agg = schedule.aggregator(t - 1, &se, params);
            se = se_step_glm_generic(&se, &agg, params, crate::numerics::DEFAULT_ORDER_2D)?;
        }
        let (_, onsager) = targets_and_onsager(&agg, &state.y_soft, &data.y_noisy, params);
        state = match amp_step_glm(&state, data, &agg, params) {
            Ok(s) => s,
            Err(e) => {
                return Ok(TrajectoryGlm {
                    rows,
                    failure: Some(e),
                })
            }
        };
        let rho = match overlap(&state.beta_est, &data.beta_true) {
            Ok(r) => r,
            Err(e) => {
                return Ok(TrajectoryGlm {
                    rows,
                    failure: Some(e),
                })
            }
        };
        rows.push(IterationGlm {
            t,
            test_error: error_from_overlap(rho, params),
            overlap: rho,
            beta_norm: state.beta_est.dot(&state.beta_est).sqrt(),
            y_norm: state.y_soft.dot(&state.y_soft).sqrt(),
            onsager,
            aggregator: agg,
            predicted_error: se_error_glm(se.eta, params),
        });
    }
    Ok(TrajectoryGlm {
        rows,
        failure: None,
    })
}
