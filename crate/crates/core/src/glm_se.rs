//! State evolution for the linear model: initial state, the (μ, σ) recursion
//! for any aggregator, the η recursion for the optimal one, and predicted
//! test error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{
    canonical_score, error_from_overlap, hat_h_p, AggregatorGlm, GlmParams, Link, ScheduleGlm,
};
use crate::numerics::{Quadrature, DEFAULT_ORDER_1D, DEFAULT_ORDER_2D};

/// State (μ, σ): the soft prediction behaves like μZ + σG with Z ~ N(0, αγ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeStateGlm {
    pub mu: f64,
    pub sigma: f64,
    /// μ / σ.
    pub eta: f64,
}

impl SeStateGlm {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::Numerical(format!(
                "invalid state (mu = {mu}, sigma = {sigma})"
            )));
        }
        Ok(SeStateGlm {
            mu,
            sigma,
            eta: mu / sigma,
        })
    }
}

/// μ₁ = 2𝔼[Zĥ_p(Z)]/(αγ²) by quadrature.
pub fn init_mu_quadrature(params: &GlmParams, quad: &Quadrature) -> f64 {
    let v = params.signal_variance();
    let e = quad.expect_normal(0.0, v.sqrt(), params.link.breakpoints(), |z| {
        z * hat_h_p(z, &params.link, params.p)
    });
    2.0 * e / v
}

/// η₁ = (1−2p)√(2/π)/(αγ) for the sign link.
pub fn sign_eta1(params: &GlmParams) -> f64 {
    (1.0 - 2.0 * params.p) * (2.0 / std::f64::consts::PI).sqrt()
        / (params.alpha * params.effective_gamma())
}

/// State after the first (identity-aggregator) step; σ₁ = √α.
pub fn se_init_glm(params: &GlmParams) -> Result<SeStateGlm> {
    params.validate_scalars()?;
    let sigma = params.alpha.sqrt();
    let mu = match params.link {
        Link::Sign => sign_eta1(params) * sigma,
        _ => init_mu_quadrature(params, &*Quadrature::cached(DEFAULT_ORDER_1D)?),
    };
    SeStateGlm::new(mu, sigma)
}

/// Visits (z, u, ŷ, weight) over Z ~ N(0, αγ²), G ~ N(0,1) and Ŷ | Z, where
/// u = mu·z + sigma·g.
fn for_each_joint_point<V: FnMut(f64, f64, f64, f64)>(
    mu: f64,
    sigma: f64,
    params: &GlmParams,
    quad: &Quadrature,
    mut visit: V,
) {
    let sd = params.signal_variance().sqrt();
    quad.for_each_normal_point(0.0, sd, params.link.breakpoints(), |z, wz| {
        let q = hat_h_p(z, &params.link, params.p);
        for (g, wg) in quad.hermite.std_normal_points() {
            let u = mu * z + sigma * g;
            visit(z, u, 1.0, wz * wg * q);
            visit(z, u, -1.0, wz * wg * (1.0 - q));
        }
    });
}

/// η_{t+1} for the optimal aggregator, from η_t > 0.
pub fn se_step_glm_opt(eta: f64, params: &GlmParams, order: usize) -> Result<f64> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain(format!("eta must be positive, got {eta}")));
    }
    let outer = Quadrature::cached(order)?;
    let inner = Quadrature::cached(DEFAULT_ORDER_1D)?;
    let a = params.alpha;
    let mut eg2 = 0.0;
    for_each_joint_point(a * eta * eta, a * eta, params, &outer, |_, u, yhat, w| {
        if w > 0.0 {
            let g = canonical_score(u, yhat, eta, params, &inner);
            eg2 += w * g * g;
        }
    });
    Ok((eg2 / a).sqrt())
}

/// One step of the (μ, σ) recursion for any aggregator:
/// μ' = 𝔼[s(Z_t, Ŷ)·g(Z_t, Ŷ)], σ'² = α𝔼[g²], where s is the posterior score
/// (𝔼[Z|Z_t,Ŷ] − 𝔼[Z|Z_t]) / Var(Z|Z_t).
pub fn se_step_glm_generic(
    state: &SeStateGlm,
    agg: &AggregatorGlm,
    params: &GlmParams,
    order: usize,
) -> Result<SeStateGlm> {
    agg.validate()?;
    let outer = Quadrature::cached(order)?;
    let inner = Quadrature::cached(DEFAULT_ORDER_1D)?;
    let scale = params.alpha * state.mu / (state.sigma * state.sigma);
    let eta = state.eta;
    let mut cross = 0.0;
    let mut eg2 = 0.0;
    for_each_joint_point(state.mu, state.sigma, params, &outer, |_, u, yhat, w| {
        if w > 0.0 {
            let score = canonical_score(scale * u, yhat, eta, params, &inner);
            let g = agg.value(u, yhat, params);
            cross += w * score * g;
            eg2 += w * g * g;
        }
    });
    SeStateGlm::new(cross, (params.alpha * eg2).sqrt())
}

/// Predicted test error at signal-to-noise ratio η.
pub fn se_error_glm(eta: f64, params: &GlmParams) -> f64 {
    if eta.is_infinite() {
        return error_from_overlap(eta.signum(), params);
    }
    let g = params.effective_gamma();
    let rho = eta * g / (eta * eta * g * g + 1.0 / params.alpha).sqrt();
    error_from_overlap(rho, params)
}

/// η² ↦ η² under the optimal recursion.
pub fn glm_eta_map(u: f64, params: &GlmParams, order: usize) -> Result<f64> {
    if u <= 0.0 {
        return Ok(0.0);
    }
    let next = se_step_glm_opt(u.sqrt(), params, order)?;
    Ok(next * next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeRowGlm {
    pub t: usize,
    pub mu: f64,
    pub sigma: f64,
    pub eta: f64,
    pub error: f64,
}

/// (μ, σ) trajectory for t = 1..T under a schedule.
pub fn se_trajectory_glm(
    params: &GlmParams,
    schedule: &ScheduleGlm,
    iterations: usize,
) -> Result<Vec<SeRowGlm>> {
    schedule.validate()?;
    let mut state = se_init_glm(params)?;
    let mut rows = Vec::with_capacity(iterations);
    for t in 1..=iterations {
        if t > 1 {
            let agg = schedule.aggregator(t - 1, &state, params);
            state = se_step_glm_generic(&state, &agg, params, DEFAULT_ORDER_2D)?;
        }
        rows.push(SeRowGlm {
            t,
            mu: state.mu,
            sigma: state.sigma,
            eta: state.eta,
            error: se_error_glm(state.eta, params),
        });
    }
    Ok(rows)
}

/// η trajectory of the optimal recursion from the first state.
pub fn se_eta_trajectory_glm(
    params: &GlmParams,
    iterations: usize,
    order: usize,
) -> Result<Vec<f64>> {
    let mut eta = se_init_glm(params)?.eta;
    let mut out = Vec::with_capacity(iterations);
    for t in 1..=iterations {
        if t > 1 {
            eta = se_step_glm_opt(eta, params, order)?;
        }
        out.push(eta);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sign(alpha: f64, p: f64) -> GlmParams {
        GlmParams::theory(1.0, alpha, p, Link::Sign).unwrap()
    }

    #[test]
    fn init_cases() {
        let pr = sign(2.0, 0.2);
        let s = se_init_glm(&pr).unwrap();
        assert_abs_diff_eq!(
            s.eta,
            0.3 * (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(s.eta, 0.239_365_368_240_859_6, epsilon = 1e-12);
        let q = init_mu_quadrature(&pr, &Quadrature::new(61).unwrap());
        assert_abs_diff_eq!(q, s.mu, epsilon = 1e-10);
        let half = GlmParams {
            p: 0.5,
            ..GlmParams::theory(1.0, 2.0, 0.1, Link::Logistic { scale: 1.0 }).unwrap()
        };
        assert_abs_diff_eq!(
            init_mu_quadrature(&half, &Quadrature::new(61).unwrap()),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn identity_step() {
        let pr = GlmParams::theory(1.3, 0.7, 0.2, Link::Probit { scale: 1.0 }).unwrap();
        let s = se_init_glm(&pr).unwrap();
        let next = se_step_glm_generic(&s, &AggregatorGlm::Identity, &pr, 41).unwrap();
        assert_abs_diff_eq!(next.sigma * next.sigma, 0.7, epsilon = 1e-12);
        // the identity rule reproduces the first state
        assert_abs_diff_eq!(next.mu, s.mu, epsilon = 1e-9);
    }

    #[test]
    fn uninformative_labels() {
        let pr = GlmParams {
            p: 0.5,
            ..sign(2.0, 0.1)
        };
        assert_abs_diff_eq!(se_step_glm_opt(0.4, &pr, 41).unwrap(), 0.0, epsilon = 1e-14);
        let s = SeStateGlm::new(0.3, 1.0).unwrap();
        let next = se_step_glm_generic(&s, &AggregatorGlm::Identity, &pr, 41).unwrap();
        assert_abs_diff_eq!(next.mu, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn optimal_identity_and_dual_forms() {
        for pr in [
            sign(0.5, 0.2),
            sign(2.0, 0.3),
            GlmParams::theory(1.5, 0.8, 0.15, Link::Logistic { scale: 1.0 }).unwrap(),
        ] {
            let mut state = se_init_glm(&pr).unwrap();
            let mut eta = state.eta;
            for _ in 0..10 {
                let agg = AggregatorGlm::optimal_for(state.mu, state.sigma, &pr, 61);
                let next = se_step_glm_generic(&state, &agg, &pr, 41).unwrap();
                assert!((next.sigma * next.sigma - pr.alpha * next.mu).abs() <= 1e-8);
                eta = se_step_glm_opt(eta, &pr, 41).unwrap();
                assert!((next.eta - eta).abs() <= 1e-8, "{} vs {}", next.eta, eta);
                state = next;
            }
        }
    }

    #[test]
    fn error_values() {
        let pr = sign(2.0, 0.2);
        assert_eq!(se_error_glm(0.0, &pr), 0.5);
        assert_abs_diff_eq!(se_error_glm(0.5f64.sqrt(), &pr), 0.25, epsilon = 1e-15);
        assert!(se_error_glm(1e12, &pr) < 1e-6);
        let lg = GlmParams::theory(1.0, 2.0, 0.2, Link::Logistic { scale: 1.0 }).unwrap();
        assert_abs_diff_eq!(se_error_glm(0.0, &lg), 0.5, epsilon = 1e-14);
        let mut prev = 0.5;
        for k in 1..50 {
            let e = se_error_glm(0.1 * k as f64, &lg);
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn sign_scale_invariance() {
        let a = GlmParams::theory(1.0, 0.5, 0.2, Link::Sign).unwrap();
        let b = GlmParams::theory(2.0, 0.5, 0.2, Link::Sign).unwrap();
        let ta = se_trajectory_glm(&a, &ScheduleGlm::Optimal { order: 61 }, 5).unwrap();
        let tb = se_trajectory_glm(&b, &ScheduleGlm::Optimal { order: 61 }, 5).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn sign_map_has_fixed_point() {
        let pr = sign(0.5, 0.2);
        let mut prev = 0.0;
        for k in 1..=40 {
            let u = 0.25 * k as f64;
            let v = glm_eta_map(u, &pr, 41).unwrap();
            assert!(v >= prev - 1e-10);
            prev = v;
        }
        let traj = se_eta_trajectory_glm(&pr, 30, 41).unwrap();
        let last = traj[29];
        let again = se_step_glm_opt(last, &pr, 41).unwrap();
        assert!((again - last).abs() < 1e-6);
    }
}
