//! Soft retraining targets from a two-component Gaussian fit to a model's
//! logits, and a small linear-model demo of the retraining loop.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{sample_gmm_dataset, test_error_gmm, GmmParams};
use crate::numerics::RngStream;

/// One training example as seen by the aggregator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub id: Option<String>,
    pub z: f64,
    pub yhat: f64,
}

/// Two-component 1-D Gaussian mixture; "plus" is the higher-mean component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BimodalFit {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub pi_plus: f64,
    pub loglik: f64,
    pub iterations: usize,
    /// Set when a standard deviation was raised to the floor.
    pub sigma_clamped: bool,
    /// Log-likelihood before the first update and after every update.
    pub loglik_trace: Vec<f64>,
}

impl BimodalFit {
    /// Symmetric fit with equal weights: means ±m, common spread s.
    pub fn symmetric(m: f64, s: f64) -> Self {
        BimodalFit {
            mu_plus: m.abs(),
            mu_minus: -m.abs(),
            sigma_plus: s,
            sigma_minus: s,
            pi_plus: 0.5,
            loglik: f64::NAN,
            iterations: 0,
            sigma_clamped: false,
            loglik_trace: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu_plus.is_finite()
            && self.mu_minus.is_finite()
            && self.mu_plus >= self.mu_minus
            && self.sigma_plus > 0.0
            && self.sigma_minus > 0.0
            && self.pi_plus > 0.0
            && self.pi_plus < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid mixture fit: {self:?}")))
        }
    }

    fn log_density(&self, z: f64) -> f64 {
        let a = self.pi_plus.ln() + log_normal_pdf(z, self.mu_plus, self.sigma_plus);
        let b = (1.0 - self.pi_plus).ln() + log_normal_pdf(z, self.mu_minus, self.sigma_minus);
        log_add(a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesMixConfig {
    /// Label flip probability, assumed known.
    pub p: f64,
    pub em_max_iters: usize,
    pub em_tol: f64,
    /// Lower bound on fitted standard deviations; `None` means 1e-3 times the
    /// standard deviation of the data.
    pub sigma_floor: Option<f64>,
}

impl BayesMixConfig {
    pub fn new(p: f64) -> Self {
        BayesMixConfig {
            p,
            em_max_iters: 500,
            em_tol: 1e-10,
            sigma_floor: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.p) {
            return Err(Error::Config(format!(
                "p must lie in [0, 0.5], got {}",
                self.p
            )));
        }
        if !(self.em_tol > 0.0) {
            return Err(Error::Config(format!(
                "em_tol must be positive, got {}",
                self.em_tol
            )));
        }
        if self.em_max_iters == 0 {
            return Err(Error::Config("em_max_iters must be at least 1".into()));
        }
        if let Some(f) = self.sigma_floor {
            if !(f > 0.0) {
                return Err(Error::Config(format!(
                    "sigma_floor must be positive, got {f}"
                )));
            }
        }
        Ok(())
    }
}

#[inline]
fn log_normal_pdf(z: f64, mean: f64, sd: f64) -> f64 {
    let r = (z - mean) / sd;
    -0.5 * r * r - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[inline]
fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn loglik(fit: &BimodalFit, xs: &[f64]) -> f64 {
    xs.iter().map(|&z| fit.log_density(z)).sum()
}

/// EM fit of a two-component mixture.
///
/// Starts from the split by sign of the logits (or median ± one standard
/// deviation when every logit has the same sign) and stops when the
/// log-likelihood gains less than `em_tol` or after `em_max_iters` updates.
pub fn fit_bimodal_em(logits: &[f64], cfg: &BayesMixConfig) -> Result<BimodalFit> {
    cfg.validate()?;
    if logits.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "need at least 4 logits, got {}",
            logits.len()
        )));
    }
    if let Some(bad) = logits.iter().find(|z| !z.is_finite()) {
        return Err(Error::Domain(format!("non-finite logit {bad}")));
    }
    let (_, std) = mean_std(logits);
    if !(std > 0.0) {
        return Err(Error::DegenerateFit("all logits are identical".into()));
    }
    let floor = cfg.sigma_floor.unwrap_or(1e-3 * std);
    let mut clamped = false;
    let mut clamp = |s: f64| {
        if s < floor || !s.is_finite() {
            clamped = true;
            floor
        } else {
            s
        }
    };

    let pos: Vec<f64> = logits.iter().copied().filter(|&z| z > 0.0).collect();
    let neg: Vec<f64> = logits.iter().copied().filter(|&z| z <= 0.0).collect();
    let mut fit = if pos.is_empty() || neg.is_empty() {
        let mut sorted = logits.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let k = sorted.len();
        let median = if k % 2 == 1 {
            sorted[k / 2]
        } else {
            0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
        };
        BimodalFit {
            mu_plus: median + std,
            mu_minus: median - std,
            sigma_plus: std,
            sigma_minus: std,
            pi_plus: 0.5,
            ..BimodalFit::symmetric(0.0, 1.0)
        }
    } else {
        let side_sd = |xs: &[f64]| {
            let (_, s) = mean_std(xs);
            if xs.len() >= 2 && s > 0.0 {
                s
            } else {
                std
            }
        };
        BimodalFit {
            mu_plus: mean_std(&pos).0,
            mu_minus: mean_std(&neg).0,
            sigma_plus: side_sd(&pos),
            sigma_minus: side_sd(&neg),
            pi_plus: pos.len() as f64 / logits.len() as f64,
            ..BimodalFit::symmetric(0.0, 1.0)
        }
    };
    fit.sigma_plus = clamp(fit.sigma_plus);
    fit.sigma_minus = clamp(fit.sigma_minus);

    let n = logits.len() as f64;
    let mut ll = loglik(&fit, logits);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut resp = vec![0.0; logits.len()];
    while iterations < cfg.em_max_iters {
        // E-step: responsibility of the "plus" component
        for (r, &z) in resp.iter_mut().zip(logits) {
            let a = fit.pi_plus.ln() + log_normal_pdf(z, fit.mu_plus, fit.sigma_plus);
            let b = (1.0 - fit.pi_plus).ln() + log_normal_pdf(z, fit.mu_minus, fit.sigma_minus);
            *r = 1.0 / (1.0 + (b - a).exp());
        }
        let w_plus: f64 = resp.iter().sum();
        let w_minus = n - w_plus;
        if w_plus < 1e-12 * n || w_minus < 1e-12 * n {
            return Err(Error::DegenerateFit(
                "a mixture component lost all of its mass".into(),
            ));
        }
        let mu_plus = resp.iter().zip(logits).map(|(r, z)| r * z).sum::<f64>() / w_plus;
        let mu_minus = resp
            .iter()
            .zip(logits)
            .map(|(r, z)| (1.0 - r) * z)
            .sum::<f64>()
            / w_minus;
        let var_plus = resp
            .iter()
            .zip(logits)
            .map(|(r, z)| r * (z - mu_plus).powi(2))
            .sum::<f64>()
            / w_plus;
        let var_minus = resp
            .iter()
            .zip(logits)
            .map(|(r, z)| (1.0 - r) * (z - mu_minus).powi(2))
            .sum::<f64>()
            / w_minus;
        fit.mu_plus = mu_plus;
        fit.mu_minus = mu_minus;
        fit.sigma_plus = clamp(var_plus.sqrt());
        fit.sigma_minus = clamp(var_minus.sqrt());
        fit.pi_plus = w_plus / n;
        iterations += 1;
        let next = loglik(&fit, logits);
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain < cfg.em_tol {
            break;
        }
    }
    if fit.mu_plus < fit.mu_minus {
        std::mem::swap(&mut fit.mu_plus, &mut fit.mu_minus);
        std::mem::swap(&mut fit.sigma_plus, &mut fit.sigma_minus);
        fit.pi_plus = 1.0 - fit.pi_plus;
    }
    if !(fit.pi_plus > 0.0 && fit.pi_plus < 1.0) {
        return Err(Error::DegenerateFit(format!(
            "mixture weight {} left (0, 1)",
            fit.pi_plus
        )));
    }
    fit.loglik = ll;
    fit.iterations = iterations;
    fit.sigma_clamped = clamped;
    fit.loglik_trace = trace;
    Ok(fit)
}

/// Soft target for logit `z` and noisy label `yhat`:
/// tanh(½[ŷ ln((1−p)/p) + (z−μ₋)²/(2σ₋²) − (z−μ₊)²/(2σ₊²) + ln(π₊/π₋)]).
pub fn bayesmix_aggregate(z: f64, yhat: f64, fit: &BimodalFit, p: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("non-finite logit {z}")));
    }
    if yhat != 1.0 && yhat != -1.0 {
        return Err(Error::Domain(format!(
            "noisy label must be +1 or -1, got {yhat}"
        )));
    }
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::Config(format!("p must lie in [0, 0.5], got {p}")));
    }
    Ok(aggregate_unchecked(z, yhat, fit, p))
}

#[inline]
fn aggregate_unchecked(z: f64, yhat: f64, fit: &BimodalFit, p: f64) -> f64 {
    if p == 0.0 {
        return yhat;
    }
    let label_odds = ((1.0 - p) / p).ln();
    let dm = (z - fit.mu_minus) / fit.sigma_minus;
    let dp = (z - fit.mu_plus) / fit.sigma_plus;
    let prior = (fit.pi_plus / (1.0 - fit.pi_plus)).ln();
    (0.5 * (yhat * label_odds + 0.5 * dm * dm - 0.5 * dp * dp + prior)).tanh()
}

/// Targets for each record, in input order.
pub fn emit_targets(
    records: &[LogitRecord],
    fit: &BimodalFit,
    cfg: &BayesMixConfig,
) -> Result<Vec<(Option<String>, f64)>> {
    cfg.validate()?;
    fit.validate()?;
    records
        .iter()
        .map(|r| Ok((r.id.clone(), bayesmix_aggregate(r.z, r.yhat, fit, cfg.p)?)))
        .collect()
}

/// Settings of the linear retraining demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    /// Ridge penalty per training sample; the penalty is `ridge_per_sample * n`.
    pub ridge_per_sample: f64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            ridge_per_sample: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTrajectory {
    /// Clean test accuracy after each round; round 0 trains on the noisy labels.
    pub accuracies: Vec<f64>,
    pub fits: Vec<BimodalFit>,
    /// Reason the loop stopped early, if it did.
    pub halted: Option<String>,
}

/// Retraining loop on simulated mixture data: fit a ridge classifier to the
/// current targets, fit the logit mixture, aggregate, repeat. Returns
/// `rounds` accuracies.
pub fn bayesmix_retrain_demo(
    params: &GmmParams,
    cfg: &BayesMixConfig,
    demo: &DemoConfig,
    rounds: usize,
    stream: RngStream,
) -> Result<DemoTrajectory> {
    if rounds == 0 {
        return Err(Error::Config("number of rounds must be at least 1".into()));
    }
    cfg.validate()?;
    if !(demo.ridge_per_sample > 0.0) {
        return Err(Error::Config(format!(
            "ridge penalty must be positive, got {}",
            demo.ridge_per_sample
        )));
    }
    let data = sample_gmm_dataset(params, stream)?;
    let (n, d) = data.x.dim();
    let x = DMatrix::from_row_iterator(n, d, data.x.iter().copied());
    let mut gram = x.transpose() * &x;
    for j in 0..d {
        gram[(j, j)] += demo.ridge_per_sample * n as f64;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("ridge system is not positive definite".into()))?;
    let train = |targets: &DVector<f64>| chol.solve(&(x.transpose() * targets));
    let accuracy = |theta: &DVector<f64>| -> Result<f64> {
        let t = ndarray::Array1::from_iter(theta.iter().copied());
        Ok(1.0 - test_error_gmm(&t, &data.mu)?)
    };

    let noisy = DVector::from_iterator(n, data.y_noisy.iter().copied());
    let mut theta = train(&noisy);
    let mut out = DemoTrajectory {
        accuracies: vec![accuracy(&theta)?],
        fits: Vec::new(),
        halted: None,
    };
    for _ in 1..rounds {
        let logits = &x * &theta;
        let fit = match fit_bimodal_em(logits.as_slice(), cfg) {
            Ok(f) => f,
            Err(e) => {
                out.halted = Some(e.to_string());
                break;
            }
        };
        let targets = DVector::from_iterator(
            n,
            logits
                .iter()
                .zip(data.y_noisy.iter())
                .map(|(&z, &yh)| aggregate_unchecked(z, yh, &fit, cfg.p)),
        );
        theta = train(&targets);
        out.accuracies.push(accuracy(&theta)?);
        out.fits.push(fit);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::AggregatorGmm;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn clusters(seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0).rng();
        let mut xs = Vec::new();
        for _ in 0..500 {
            xs.push(-5.0 + 0.3 * rng.sample::<f64, _>(StandardNormal));
            xs.push(5.0 + 0.3 * rng.sample::<f64, _>(StandardNormal));
        }
        xs
    }

    #[test]
    fn recovers_separated_clusters() {
        let fit = fit_bimodal_em(&clusters(1), &BayesMixConfig::new(0.2)).unwrap();
        assert!((fit.mu_plus - 5.0).abs() < 0.1);
        assert!((fit.mu_minus + 5.0).abs() < 0.1);
        assert!((fit.pi_plus - 0.5).abs() < 0.05);
        assert!(!fit.sigma_clamped);
    }

    #[test]
    fn symmetric_input_gives_symmetric_fit() {
        let mut rng = RngStream::new(2, 0).rng();
        let mut xs = Vec::new();
        for _ in 0..300 {
            let z: f64 = 1.5 + rng.sample::<f64, _>(StandardNormal);
            xs.push(z);
            xs.push(-z);
        }
        let fit = fit_bimodal_em(&xs, &BayesMixConfig::new(0.2)).unwrap();
        assert!((fit.mu_plus + fit.mu_minus).abs() < 1e-6);
    }

    #[test]
    fn loglik_never_decreases() {
        let mut rng = RngStream::new(3, 0).rng();
        let xs: Vec<f64> = (0..400)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5)
            .collect();
        let cfg = BayesMixConfig {
            em_max_iters: 1,
            ..BayesMixConfig::new(0.2)
        };
        let one = fit_bimodal_em(&xs, &cfg).unwrap();
        assert!(one.loglik_trace[1] >= one.loglik_trace[0]);
        let full = fit_bimodal_em(&xs, &BayesMixConfig::new(0.2)).unwrap();
        for w in full.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn degenerate_inputs() {
        let cfg = BayesMixConfig::new(0.2);
        assert!(matches!(
            fit_bimodal_em(&[1.0; 10], &cfg),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(
            fit_bimodal_em(&[1.0, 2.0], &cfg),
            Err(Error::DegenerateFit(_))
        ));
        assert!(fit_bimodal_em(&[1.0, f64::NAN, 2.0, 3.0], &cfg).is_err());
        // all positive: median ± std start
        let fit = fit_bimodal_em(&[1.0, 1.1, 1.2, 5.0, 5.1, 5.2], &cfg).unwrap();
        assert!(fit.mu_plus > 4.0 && fit.mu_minus < 2.0);
    }

    #[test]
    fn aggregate_cases() {
        let fit = BimodalFit::symmetric(2.0, 1.5);
        let p: f64 = 0.3;
        let g = bayesmix_aggregate(2.0, 1.0, &fit, p).unwrap();
        let oracle = 2.0 / (1.0 + (p / (1.0 - p)) * (-2.0 * 4.0 / 2.25f64).exp()) - 1.0;
        assert_abs_diff_eq!(g, oracle, epsilon = 1e-14);
        assert!(g > 0.0);
        assert_abs_diff_eq!(
            bayesmix_aggregate(0.0, -1.0, &fit, p).unwrap(),
            -0.4,
            epsilon = 1e-15
        );
        assert_eq!(bayesmix_aggregate(-9.0, 1.0, &fit, 0.0).unwrap(), 1.0);
        assert!(bayesmix_aggregate(0.3, 0.0, &fit, p).is_err());
        let at_half = bayesmix_aggregate(0.7, -1.0, &fit, 0.5).unwrap();
        assert_abs_diff_eq!(
            at_half,
            (0.5f64 * 2.0 * 2.0 * 0.7 / 2.25).tanh(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn reduces_to_mixture_optimal_rule() {
        // slope γ²/(α(η²+1)) := m/s² by choosing γ, α, η accordingly
        let (m, s): (f64, f64) = (1.7, 1.3);
        let eta: f64 = 0.6;
        let alpha = 1.0;
        let gamma = (m / (s * s) * alpha * (eta * eta + 1.0)).sqrt();
        let pr = GmmParams::theory(gamma, alpha, 0.3, 0.5).unwrap();
        let fit = BimodalFit::symmetric(m, s);
        for k in 0..50 {
            let z = -5.0 + 0.2 * k as f64;
            for yh in [-1.0, 1.0] {
                let a = bayesmix_aggregate(z, yh, &fit, 0.3).unwrap();
                let b = AggregatorGmm::OptimalGmm { eta }.value(z, yh, &pr);
                assert!((a - b).abs() <= 1e-12);
                let c = bayesmix_aggregate(-z, -yh, &fit, 0.3).unwrap();
                assert!((a + c).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn emit_preserves_order() {
        let fit = BimodalFit::symmetric(1.0, 1.0);
        let cfg = BayesMixConfig::new(0.45);
        assert!(emit_targets(&[], &fit, &cfg).unwrap().is_empty());
        let recs: Vec<LogitRecord> = (0..5)
            .map(|i| LogitRecord {
                id: Some(format!("r{i}")),
                z: 0.25,
                yhat: 1.0,
            })
            .collect();
        let out = emit_targets(&recs, &fit, &cfg).unwrap();
        assert!(out.windows(2).all(|w| w[0].1 == w[1].1));
        assert_eq!(out[3].0.as_deref(), Some("r3"));
    }

    #[test]
    fn demo_basics() {
        let pr = GmmParams::new(2.0, 0.1, 0.0, 0.5, 400).unwrap();
        let cfg = BayesMixConfig::new(0.0);
        let demo = DemoConfig::default();
        let traj = bayesmix_retrain_demo(&pr, &cfg, &demo, 4, RngStream::new(1, 0)).unwrap();
        assert_eq!(traj.accuracies.len(), 4);
        for a in &traj.accuracies {
            assert_abs_diff_eq!(*a, traj.accuracies[0], epsilon = 1e-12);
        }
        let one = bayesmix_retrain_demo(&pr, &cfg, &demo, 1, RngStream::new(1, 0)).unwrap();
        assert_eq!(one.accuracies, vec![traj.accuracies[0]]);
    }
}
