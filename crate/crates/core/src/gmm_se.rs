//! State evolution for the mixture model: the (m, σ) recursion, the scalar
//! η² map and its hard-rule limits, fixed points, crossovers and the flip
//! threshold above which optimal retraining improves monotonically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{AggregatorGmm, GmmParams};
use crate::numerics::{find_root_bisect, normal_cdf, Quadrature, DEFAULT_ORDER_1D};

/// Scalar summary of an AMP iterate in the large-system limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeStateGmm {
    pub m: f64,
    pub sigma: f64,
    /// m / σ.
    pub eta: f64,
    /// γ√α·m, the mean of the soft prediction given the label.
    pub m_bar: f64,
    /// √(α(m² + σ²)).
    pub sigma_bar: f64,
}

impl SeStateGmm {
    pub fn new(m: f64, sigma: f64, params: &GmmParams) -> Self {
        let a = params.alpha;
        SeStateGmm {
            m,
            sigma,
            eta: m / sigma,
            m_bar: params.gamma * a.sqrt() * m,
            sigma_bar: (a * (m * m + sigma * sigma)).sqrt(),
        }
    }

    /// The η at which the optimal aggregator's weight on y equals m̄/σ̄², the
    /// exact posterior weight for this state. Equal to `eta` whenever
    /// m = (γ/√α)σ², i.e. after any optimal step; differs at the first
    /// iterate. Returns +∞ (no weight on y) when m ≤ 0.
    pub fn matched_eta(&self, params: &GmmParams) -> f64 {
        if !(self.m > 0.0) {
            return f64::INFINITY;
        }
        let v = params.gamma * (self.m * self.m + self.sigma * self.sigma)
            / (params.alpha.sqrt() * self.m)
            - 1.0;
        v.max(0.0).sqrt()
    }
}

/// State of the first iterate: m₁ = γ(1−2p)/√α, σ₁ = 1.
pub fn se_init_gmm(params: &GmmParams) -> SeStateGmm {
    SeStateGmm::new(
        params.gamma * (1.0 - 2.0 * params.p) / params.alpha.sqrt(),
        1.0,
        params,
    )
}

/// The four (Y, Ŷ) atoms and their probabilities.
pub fn label_atoms(params: &GmmParams) -> [(f64, f64, f64); 4] {
    let (pp, pm, p) = (params.pi_plus, params.pi_minus(), params.p);
    [
        (1.0, 1.0, pp * (1.0 - p)),
        (1.0, -1.0, pp * p),
        (-1.0, -1.0, pm * (1.0 - p)),
        (-1.0, 1.0, pm * p),
    ]
}

/// (𝔼[g·Y], 𝔼[g²]) for g evaluated at m̄Y + σ̄G.
pub fn aggregator_moments(
    agg: &AggregatorGmm,
    m_bar: f64,
    sigma_bar: f64,
    params: &GmmParams,
    quad: &Quadrature,
) -> (f64, f64) {
    let mut ey = 0.0;
    let mut eg2 = 0.0;
    for (y, yhat, w) in label_atoms(params) {
        if w == 0.0 {
            continue;
        }
        let split: Vec<f64> = agg.transition_point(yhat, params).into_iter().collect();
        quad.for_each_normal_point(m_bar * y, sigma_bar, &split, |v, qw| {
            let g = agg.value(v, yhat, params);
            ey += w * qw * g * y;
            eg2 += w * qw * g * g;
        });
    }
    (ey, eg2)
}

pub fn se_step_gmm(
    state: &SeStateGmm,
    agg: &AggregatorGmm,
    params: &GmmParams,
) -> Result<SeStateGmm> {
    let quad = Quadrature::cached(DEFAULT_ORDER_1D)?;
    se_step_gmm_with(state, agg, params, &quad)
}

pub fn se_step_gmm_with(
    state: &SeStateGmm,
    agg: &AggregatorGmm,
    params: &GmmParams,
    quad: &Quadrature,
) -> Result<SeStateGmm> {
    agg.validate()?;
    let (ey, eg2) = aggregator_moments(agg, state.m_bar, state.sigma_bar, params, quad);
    let m = params.gamma / params.alpha.sqrt() * ey;
    let sigma = eg2.sqrt();
    if !m.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Numerical(format!(
            "state evolution step produced m = {m}, sigma = {sigma}"
        )));
    }
    Ok(SeStateGmm::new(m, sigma, params))
}

/// Predicted test error Φ(−mγ/√(m²+σ²)).
pub fn se_error_gmm(state: &SeStateGmm, params: &GmmParams) -> f64 {
    let r = (state.m * state.m + state.sigma * state.sigma).sqrt();
    normal_cdf(-state.m * params.gamma / r)
}

/// Predicted test error as a function of η alone.
pub fn error_from_eta(eta: f64, gamma: f64) -> f64 {
    if eta.is_infinite() {
        return normal_cdf(-gamma);
    }
    normal_cdf(-gamma * eta / (eta * eta + 1.0).sqrt())
}

/// η̄ = γ²u/(1+u), the squared signal-to-noise ratio of the soft prediction.
#[inline]
fn effective_snr(u: f64, params: &GmmParams) -> f64 {
    if u.is_infinite() {
        return params.gamma * params.gamma;
    }
    params.gamma * params.gamma * u / (1.0 + u)
}

/// η² ↦ η² after one optimal step.
pub fn eta_map_opt(u: f64, params: &GmmParams) -> f64 {
    eta_map_opt_with(
        u,
        params,
        &Quadrature::cached(DEFAULT_ORDER_1D).expect("default order is valid"),
    )
}

pub fn eta_map_opt_with(u: f64, params: &GmmParams, quad: &Quadrature) -> f64 {
    let scale = params.gamma * params.gamma / params.alpha;
    if params.p == 0.0 {
        return scale;
    }
    let s = effective_snr(u.max(0.0), params);
    let label_odds = ((1.0 - params.p) / params.p).ln();
    let prior_odds = (params.pi_plus / params.pi_minus()).ln();
    let mut eg2 = 0.0;
    for (y, yhat, w) in label_atoms(params) {
        let centre = -0.5 * (yhat * label_odds + prior_odds);
        quad.for_each_normal_point(s * y, s.sqrt(), &[centre], |v, qw| {
            let g = (0.5 * (yhat * label_odds + 2.0 * v + prior_odds)).tanh();
            eg2 += w * qw * g * g;
        });
    }
    scale * eg2
}

/// Limit of the smoothed full-retraining map as β → ∞.
pub fn eta_map_ft(u: f64, params: &GmmParams) -> f64 {
    let s = effective_snr(u.max(0.0), params).sqrt();
    let v = 2.0 * normal_cdf(s) - 1.0;
    params.gamma * params.gamma / params.alpha * v * v
}

/// Limit of the smoothed consensus-retraining map as β → ∞.
pub fn eta_map_ct(u: f64, params: &GmmParams) -> f64 {
    let phi = normal_cdf(effective_snr(u.max(0.0), params).sqrt());
    let p = params.p;
    params.gamma * params.gamma / params.alpha * (phi - p) * (phi - p) / (p + (1.0 - 2.0 * p) * phi)
}

/// Which η² map to iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeMapVariant {
    Opt,
    FtLimit,
    CtLimit,
    /// One step of the (m, σ) recursion from m = √u, σ = 1.
    Smoothed {
        agg: AggregatorGmm,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeMapSpec {
    pub variant: SeMapVariant,
    pub params: GmmParams,
}

impl SeMapSpec {
    pub fn new(variant: SeMapVariant, params: GmmParams) -> Result<Self> {
        params.validate_scalars()?;
        if let SeMapVariant::Smoothed { agg } = variant {
            agg.validate()?;
        }
        Ok(SeMapSpec { variant, params })
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self.variant {
            SeMapVariant::Opt => eta_map_opt(u, &self.params),
            SeMapVariant::FtLimit => eta_map_ft(u, &self.params),
            SeMapVariant::CtLimit => eta_map_ct(u, &self.params),
            SeMapVariant::Smoothed { agg } => {
                let state = SeStateGmm::new(u.max(0.0).sqrt(), 1.0, &self.params);
                match se_step_gmm(&state, &agg, &self.params) {
                    Ok(next) => next.eta * next.eta,
                    Err(_) => f64::NAN,
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            SeMapVariant::Opt => "opt",
            SeMapVariant::FtLimit => "ft_limit",
            SeMapVariant::CtLimit => "ct_limit",
            SeMapVariant::Smoothed { .. } => "smoothed",
        }
    }
}

/// Default search range for fixed points and crossovers.
pub const DEFAULT_U_MAX: f64 = 50.0;
pub const DEFAULT_GRID: usize = 2000;
const ROOT_TOL: f64 = 1e-12;

/// Roots of `f` on (lo, hi]: sign changes on a uniform grid, each refined by
/// bisection. Exact zeros at grid points are reported once.
pub fn grid_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, grid: usize) -> Result<Vec<f64>> {
    if !(hi > lo) || grid == 0 {
        return Err(Error::Config(format!(
            "invalid search range [{lo}, {hi}] with {grid} cells"
        )));
    }
    let step = (hi - lo) / grid as f64;
    let mut roots: Vec<f64> = Vec::new();
    let mut a = lo;
    let mut fa = f(a);
    if fa == 0.0 {
        roots.push(a);
    }
    for k in 1..=grid {
        let b = if k == grid { hi } else { lo + step * k as f64 };
        let fb = f(b);
        if fb == 0.0 {
            roots.push(b);
        } else if fa != 0.0 && fa.is_finite() && fb.is_finite() && (fa < 0.0) != (fb < 0.0) {
            roots.push(find_root_bisect(&f, a, b, ROOT_TOL)?);
        }
        a = b;
        fa = fb;
    }
    Ok(roots)
}

/// Fixed points u = F(u) in [0, u_max], ascending. The range is widened past
/// γ²/α, which bounds every map offered here.
pub fn find_fixed_points(map: &SeMapSpec, u_max: f64, grid: usize) -> Result<Vec<f64>> {
    if !(u_max > 0.0) {
        return Err(Error::Config(format!(
            "u_max must be positive, got {u_max}"
        )));
    }
    let bound = map.params.gamma * map.params.gamma / map.params.alpha;
    let hi = if u_max > bound {
        u_max
    } else {
        bound * 1.05 + 1e-9
    };
    find_fixed_points_of(|u| map.eval(u), hi, grid)
}

/// Fixed points of an arbitrary map on [0, u_max].
pub fn find_fixed_points_of<F: Fn(f64) -> f64>(f: F, u_max: f64, grid: usize) -> Result<Vec<f64>> {
    grid_roots(|u| f(u) - u, 0.0, u_max, grid)
}

/// All u in (0, u_max] where the consensus and full-retraining limits cross.
pub fn find_crossovers(params: &GmmParams, u_max: f64, grid: usize) -> Result<Vec<f64>> {
    if !(params.p > 0.0 && params.p < 0.5) {
        return Err(Error::Config(format!(
            "crossover needs p in (0, 0.5), got {}",
            params.p
        )));
    }
    let roots = grid_roots(
        |u| eta_map_ct(u, params) - eta_map_ft(u, params),
        0.0,
        u_max,
        grid,
    )?;
    Ok(roots.into_iter().filter(|&u| u > 0.0).collect())
}

/// First crossover in the default range, or `None` when the curves do not cross.
pub fn find_crossover(params: &GmmParams) -> Result<Option<f64>> {
    Ok(find_crossovers(params, DEFAULT_U_MAX, DEFAULT_GRID)?
        .first()
        .copied())
}

/// Φ(−γ²(1−2p)/√(γ²(1−2p)²+α)) − p.
pub fn p_star_residual(p: f64, gamma: f64, alpha: f64) -> f64 {
    let g2 = gamma * gamma;
    let q = 1.0 - 2.0 * p;
    normal_cdf(-g2 * q / (g2 * q * q + alpha).sqrt()) - p
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PStar {
    /// Interior root, if one was found.
    pub p: Option<f64>,
    /// Whether γ² ≥ √(πα/2), the regime where the root is known to exist and
    /// optimal retraining is known to improve monotonically for p ≥ p*.
    pub guaranteed: bool,
    pub residual: f64,
}

/// Flip threshold p* in (0, 1/2). The endpoint root at 1/2 is excluded.
pub fn p_star(gamma: f64, alpha: f64) -> Result<PStar> {
    if !(gamma > 0.0 && alpha > 0.0) {
        return Err(Error::Config(format!(
            "gamma and alpha must be positive (got {gamma}, {alpha})"
        )));
    }
    let guaranteed = gamma * gamma >= (std::f64::consts::PI * alpha / 2.0).sqrt();
    let f = |p: f64| p_star_residual(p, gamma, alpha);
    // Scan towards 1/2; the sign change nearest to it stays clear of the endpoint.
    let hi = 0.5 - 1e-9;
    let grid = 5000;
    let step = hi / grid as f64;
    let mut found = None;
    let mut a = 0.0;
    let mut fa = f(a);
    for k in 1..=grid {
        let b = if k == grid { hi } else { step * k as f64 };
        let fb = f(b);
        if fa > 0.0 && fb <= 0.0 {
            found = Some(find_root_bisect(f, a, b, 1e-15)?);
            break;
        }
        a = b;
        fa = fb;
    }
    Ok(match found {
        Some(p) => PStar {
            p: Some(p),
            guaranteed,
            residual: f(p),
        },
        None => PStar {
            p: None,
            guaranteed,
            residual: f64::NAN,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CobwebTrace {
    /// (u_t, F(u_t)) for t = 1..T.
    pub points: Vec<(f64, f64)>,
    /// True when an iterate became non-finite and the trace stopped early.
    pub truncated: bool,
}

pub fn cobweb_trace(map: &SeMapSpec, u1: f64, iterations: usize) -> Result<CobwebTrace> {
    cobweb_trace_of(|u| map.eval(u), u1, iterations)
}

pub fn cobweb_trace_of<F: Fn(f64) -> f64>(f: F, u1: f64, iterations: usize) -> Result<CobwebTrace> {
    if !(u1 >= 0.0) || iterations == 0 {
        return Err(Error::Config(format!(
            "cobweb needs u1 >= 0 and at least one step (u1 = {u1}, T = {iterations})"
        )));
    }
    let mut points = Vec::with_capacity(iterations);
    let mut u = u1;
    for _ in 0..iterations {
        let next = f(u);
        if !next.is_finite() {
            return Ok(CobwebTrace {
                points,
                truncated: true,
            });
        }
        points.push((u, next));
        u = next;
    }
    Ok(CobwebTrace {
        points,
        truncated: false,
    })
}

/// One row of a state-evolution trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeRowGmm {
    pub t: usize,
    pub m: f64,
    pub sigma: f64,
    pub eta: f64,
    pub error: f64,
}

/// (m, σ) trajectory for t = 1..T driven by an AMP schedule.
pub fn se_trajectory_gmm(
    params: &GmmParams,
    schedule: &crate::gmm::ScheduleGmm,
    iterations: usize,
) -> Result<Vec<SeRowGmm>> {
    schedule.validate()?;
    let mut state = se_init_gmm(params);
    let mut rows = Vec::with_capacity(iterations);
    for t in 1..=iterations {
        if t > 1 {
            let agg = schedule.aggregator(t - 1, &state, params);
            state = se_step_gmm(&state, &agg, params)?;
        }
        rows.push(SeRowGmm {
            t,
            m: state.m,
            sigma: state.sigma,
            eta: state.eta,
            error: se_error_gmm(&state, params),
        });
    }
    Ok(rows)
}

/// η trajectory from iterating an η² map; σ is reported as 1.
pub fn se_trajectory_map(map: &SeMapSpec, eta1: f64, iterations: usize) -> Result<Vec<SeRowGmm>> {
    let trace = cobweb_trace(map, eta1 * eta1, iterations)?;
    if trace.truncated {
        return Err(Error::Numerical(
            "state evolution map produced a non-finite value".into(),
        ));
    }
    Ok(trace
        .points
        .iter()
        .enumerate()
        .map(|(k, &(u, _))| {
            let eta = u.sqrt();
            SeRowGmm {
                t: k + 1,
                m: eta,
                sigma: 1.0,
                eta,
                error: error_from_eta(eta, map.params.gamma),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn fig_params(p: f64) -> GmmParams {
        GmmParams::theory(1.5, 2.0, p, 0.3).unwrap()
    }

    #[test]
    fn init_values() {
        let pr = GmmParams::theory(1.5, 2.0, 0.3, 0.3).unwrap();
        let s = se_init_gmm(&pr);
        assert_abs_diff_eq!(s.eta, 1.5 * 0.4 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.eta, 0.424_264_068_711_928_5, epsilon = 1e-12);
        let pr0 = GmmParams::theory(1.5, 2.0, 0.0, 0.3).unwrap();
        assert_abs_diff_eq!(se_init_gmm(&pr0).eta, 1.5 / 2f64.sqrt(), epsilon = 1e-15);
        let half = GmmParams { p: 0.5, ..pr };
        assert_eq!(se_init_gmm(&half).m, 0.0);
    }

    #[test]
    fn state_invariants() {
        let pr = GmmParams::theory(1.3, 0.7, 0.2, 0.4).unwrap();
        let s = SeStateGmm::new(0.8, 1.7, &pr);
        assert_abs_diff_eq!(s.m_bar, 1.3 * 0.7f64.sqrt() * 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(
            s.sigma_bar * s.sigma_bar,
            0.7 * (0.64 + 1.7 * 1.7),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(s.eta, 0.8 / 1.7, epsilon = 1e-12);
    }

    #[test]
    fn identity_step_returns_to_init() {
        let pr = GmmParams::theory(1.5, 0.8, 0.35, 0.3).unwrap();
        let s = SeStateGmm::new(3.0, 0.5, &pr);
        let next = se_step_gmm(&s, &AggregatorGmm::Identity, &pr).unwrap();
        let init = se_init_gmm(&pr);
        assert_abs_diff_eq!(next.m, init.m, epsilon = 1e-13);
        assert_abs_diff_eq!(next.sigma, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn optimal_step_identity_and_map_agreement() {
        let pr = GmmParams::theory(1.5, 0.8, 0.4, 0.3).unwrap();
        let mut s = se_init_gmm(&pr);
        for _ in 0..10 {
            let agg = AggregatorGmm::OptimalGmm {
                eta: s.matched_eta(&pr),
            };
            let next = se_step_gmm(&s, &agg, &pr).unwrap();
            assert_abs_diff_eq!(
                next.m,
                1.5 / 0.8f64.sqrt() * next.sigma * next.sigma,
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(
                next.eta * next.eta,
                eta_map_opt(s.eta * s.eta, &pr),
                epsilon = 1e-9
            );
            s = next;
        }
    }

    #[test]
    fn known_trajectory() {
        // reference values from an independent dense-grid integration
        let pr = GmmParams::theory(1.5, 0.8, 0.4, 0.3).unwrap();
        let rows = se_trajectory_gmm(&pr, &crate::gmm::ScheduleGmm::Optimal, 3).unwrap();
        assert_abs_diff_eq!(
            rows[0].error,
            normal_cdf(-1.5 * 0.3354101966249685 / (1.0 + 0.3354101966249685f64.powi(2)).sqrt()),
            epsilon = 1e-12
        );
        assert!(rows[1].error < rows[0].error);
        assert!(rows[2].error < rows[1].error);
    }

    #[test]
    fn error_values() {
        let pr = GmmParams::theory(1.5, 2.0, 0.2, 0.3).unwrap();
        assert_eq!(error_from_eta(0.0, 1.5), 0.5);
        assert_abs_diff_eq!(error_from_eta(1e9, 1.5), normal_cdf(-1.5), epsilon = 1e-15);
        assert_abs_diff_eq!(
            error_from_eta(1.0, 1.5),
            normal_cdf(-1.5 / 2f64.sqrt()),
            epsilon = 1e-15
        );
        let s = SeStateGmm::new(2.0, 2.0, &pr);
        assert_abs_diff_eq!(
            se_error_gmm(&s, &pr),
            normal_cdf(-1.5 / 2f64.sqrt()),
            epsilon = 1e-15
        );
        let s0 = SeStateGmm::new(0.0, 1.0, &pr);
        assert_eq!(se_error_gmm(&s0, &pr), 0.5);
    }

    #[test]
    fn map_closed_forms() {
        let pr = fig_params(0.2);
        assert_eq!(eta_map_ft(0.0, &pr), 0.0);
        assert_abs_diff_eq!(eta_map_ct(0.0, &pr), 0.2025, epsilon = 1e-15);
        let lim = 1.125 * (2.0 * normal_cdf(1.5) - 1.0).powi(2);
        assert_abs_diff_eq!(eta_map_ft(1e12, &pr), lim, epsilon = 1e-9);
    }

    #[test]
    fn opt_map_shape() {
        let pr = fig_params(0.3);
        let f0 = eta_map_opt(0.0, &pr);
        assert!(f0 > 0.0);
        let mut prev = f0;
        for k in 1..=200 {
            let u = 10.0 * k as f64 / 200.0;
            let v = eta_map_opt(u, &pr);
            assert!(v >= prev - 1e-10);
            prev = v;
        }
        assert!(eta_map_opt(1e9, &pr) < 1.125);
    }

    #[test]
    fn crossovers_match_reference() {
        for (p, expected) in [(0.2, 4.3135), (0.25, 1.5381), (0.3, 0.7505)] {
            let u = find_crossover(&fig_params(p)).unwrap().unwrap();
            assert_abs_diff_eq!(u, expected, epsilon = 1e-3);
            let pr = fig_params(p);
            assert!((eta_map_ct(u, &pr) - eta_map_ft(u, &pr)).abs() <= 1e-6);
        }
    }

    #[test]
    fn fixed_points() {
        let pr = fig_params(0.3);
        let spec = SeMapSpec::new(SeMapVariant::Opt, pr).unwrap();
        let fps = find_fixed_points(&spec, 10.0, 2000).unwrap();
        assert!(!fps.is_empty());
        assert!(fps[0] > 0.0 && fps[0] < 10.0);
        for &u in &fps {
            assert!((spec.eval(u) - u).abs() <= 1e-8);
        }
        let half = find_fixed_points_of(|u| u / 2.0, 5.0, 100).unwrap();
        assert_eq!(half, vec![0.0]);
    }

    #[test]
    fn cobweb_behaviour() {
        let pr = fig_params(0.3);
        let spec = SeMapSpec::new(SeMapVariant::Opt, pr).unwrap();
        let up = cobweb_trace(&spec, 0.04, 30).unwrap();
        assert!(up.points.windows(2).all(|w| w[1].0 >= w[0].0));
        let star = find_fixed_points(&spec, 10.0, 2000).unwrap()[0];
        let down = cobweb_trace(&spec, 1.0, 30).unwrap();
        if 1.0 > star {
            assert!(down.points.windows(2).all(|w| w[1].0 <= w[0].0 + 1e-12));
        }
        let one = cobweb_trace(&spec, 0.3, 1).unwrap();
        assert_eq!(one.points.len(), 1);
        assert_eq!(one.points[0], (0.3, spec.eval(0.3)));
        let fixed = cobweb_trace(&spec, star, 10).unwrap();
        assert!(fixed.points.iter().all(|&(u, _)| (u - star).abs() <= 1e-8));
        let blow = cobweb_trace_of(|u| if u > 2.0 { f64::NAN } else { 2.0 * u }, 1.0, 5).unwrap();
        assert!(blow.truncated);
        assert_eq!(blow.points.len(), 2);
    }

    #[test]
    fn p_star_regimes() {
        let r = p_star(1.5, 2.0).unwrap();
        assert!(r.guaranteed);
        let p = r.p.unwrap();
        assert!(p > 0.0 && p < 0.5);
        assert!(r.residual.abs() <= 1e-10);
        assert_eq!(p_star_residual(0.5, 1.5, 2.0), 0.0);
        let weak = p_star(0.5, 4.0).unwrap();
        assert!(!weak.guaranteed);
    }

    #[test]
    fn smoothed_map_near_limit() {
        let pr = fig_params(0.2);
        let spec = SeMapSpec::new(
            SeMapVariant::Smoothed {
                agg: AggregatorGmm::SmoothedFullRt { beta: 400.0 },
            },
            pr,
        )
        .unwrap();
        for u in [0.1, 1.0, 5.0] {
            assert!((spec.eval(u) - eta_map_ft(u, &pr)).abs() < 5e-3);
        }
    }
}
