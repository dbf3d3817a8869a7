//! Shared numerical kernels: Gaussian CDF/PDF, Gauss–Hermite and Gauss–Legendre
//! rules, bisection, a stable logistic and the seeded random stream contract.
//!
//! Expectations over standard normals are computed with Gauss–Hermite rules in
//! the probabilists' normalization, i.e. `E[f(G)] ≈ Σ wᵢ f(xᵢ)` with `Σ wᵢ = 1`.
//! Integrands with a jump (the sign link) are split at the jump and handled with
//! piecewise Gauss–Legendre against the Gaussian density instead.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default 1-D quadrature order.
pub const DEFAULT_ORDER_1D: usize = 61;
/// Default per-axis order for tensor-product 2-D quadrature.
pub const DEFAULT_ORDER_2D: usize = 41;

/// Half-width (in standard deviations) of the truncated range used by the
/// piecewise rules. The mass outside is below 2e-23.
const SPLIT_HALF_WIDTH: f64 = 10.0;

/// Φ(x) without input checks. Accurate to a few ulp (musl `erfc`).
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// ln Φ(x), usable far into the lower tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        normal_cdf(x).ln()
    } else {
        // Asymptotic Mills-ratio expansion.
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + series.ln()
    }
}

/// Checked Φ(x). Non-finite input is a domain error.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!(
            "std_normal_cdf: non-finite input {x}"
        )));
    }
    Ok(normal_cdf(x))
}

/// 1/(1+e^{-x}) evaluated without overflow on either side.
#[inline]
pub fn stable_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bisection on a sign-changing bracket.
///
/// Returns `x` with `|f(x)| <= tol` or a bracket narrower than `tol`.
pub fn find_root_bisect<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(tol > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!(
            "bisection needs finite bracket and tol > 0 (lo={lo}, hi={hi}, tol={tol})"
        )));
    }
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 || fa.is_nan() || fb.is_nan() {
        return Err(Error::Bracket { lo, hi });
    }
    for _ in 0..2000 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        let next = 0.5 * (a + b);
        if b - a <= tol || next == a || next == b {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Gauss–Hermite rule in the physicists' normalization (weight e^{-x²}).
///
/// Weights sum to √π; [`QuadratureRule::expect_std_normal`] applies the
/// change of variables `g = √2 x` so that `∫ φ(g) dg = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
    // probabilists' form, precomputed
    std_nodes: Vec<f64>,
    std_weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!(
                "quadrature order must be >= 2, got {order}"
            )));
        }
        let (nodes, weights) = hermite_nodes(order);
        let norm = PI.sqrt();
        let std_nodes = nodes.iter().map(|x| SQRT_2 * x).collect();
        let std_weights = weights.iter().map(|w| w / norm).collect();
        Ok(QuadratureRule {
            nodes,
            weights,
            order,
            std_nodes,
            std_weights,
        })
    }

    /// E[f(G)] for G ~ N(0,1).
    #[inline]
    pub fn expect_std_normal<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.std_nodes
            .iter()
            .zip(&self.std_weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// E[f(G₁, G₂)] for independent standard normals, tensor-product rule.
    pub fn expect_std_normal_2d<F: FnMut(f64, f64) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0;
        for (&x, &wx) in self.std_nodes.iter().zip(&self.std_weights) {
            let mut inner = 0.0;
            for (&y, &wy) in self.std_nodes.iter().zip(&self.std_weights) {
                inner += wy * f(x, y);
            }
            acc += wx * inner;
        }
        acc
    }

    /// Nodes and weights for N(0,1) (weights sum to one).
    pub fn std_normal_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.std_nodes
            .iter()
            .copied()
            .zip(self.std_weights.iter().copied())
    }
}

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LegendreRule {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::Config(format!(
                "quadrature order must be >= 2, got {order}"
            )));
        }
        let (nodes, weights) = legendre_nodes(order);
        Ok(LegendreRule { nodes, weights })
    }

    /// ∫_a^b f(x) dx.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }
}

/// A Gauss–Hermite and a Gauss–Legendre rule of the same order, used for
/// Gaussian expectations with or without jump points.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub hermite: QuadratureRule,
    pub legendre: LegendreRule,
}

impl Quadrature {
    pub fn new(order: usize) -> Result<Self> {
        Ok(Quadrature {
            hermite: QuadratureRule::gauss_hermite(order)?,
            legendre: LegendreRule::new(order)?,
        })
    }

    /// Shared, lazily built rule of the given order.
    pub fn cached(order: usize) -> Result<Arc<Quadrature>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Quadrature>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(q) = guard.get(&order) {
            return Ok(Arc::clone(q));
        }
        let q = Arc::new(Quadrature::new(order)?);
        guard.insert(order, Arc::clone(&q));
        Ok(q)
    }

    pub fn order(&self) -> usize {
        self.hermite.order
    }

    /// Visits quadrature points `(x, w)` for X ~ N(mean, sd²), with `Σ w ≈ 1`.
    ///
    /// When a breakpoint falls inside `mean ± 10 sd`, the truncated range is
    /// split there and each piece integrated with Gauss–Legendre against the
    /// density; otherwise Gauss–Hermite is used.
    pub fn for_each_normal_point<V: FnMut(f64, f64)>(
        &self,
        mean: f64,
        sd: f64,
        breakpoints: &[f64],
        mut visit: V,
    ) {
        let lo = mean - SPLIT_HALF_WIDTH * sd;
        let hi = mean + SPLIT_HALF_WIDTH * sd;
        let mut cuts: [f64; 8] = [0.0; 8];
        let mut ncut = 0;
        for &b in breakpoints {
            if b > lo && b < hi && ncut < cuts.len() {
                cuts[ncut] = b;
                ncut += 1;
            }
        }
        if ncut == 0 || sd == 0.0 {
            for (g, w) in self.hermite.std_normal_points() {
                visit(mean + sd * g, w);
            }
            return;
        }
        cuts[..ncut].sort_by(|a, b| a.total_cmp(b));
        let mut left = lo;
        for k in 0..=ncut {
            let right = if k < ncut { cuts[k] } else { hi };
            let half = 0.5 * (right - left);
            let mid = 0.5 * (right + left);
            for (&x, &w) in self.legendre.nodes.iter().zip(&self.legendre.weights) {
                let z = mid + half * x;
                let dens = normal_pdf((z - mean) / sd) / sd;
                visit(z, half * w * dens);
            }
            left = right;
        }
    }

    /// E[f(X)] for X ~ N(mean, sd²) with optional jump points of `f`.
    pub fn expect_normal<F: FnMut(f64) -> f64>(
        &self,
        mean: f64,
        sd: f64,
        breakpoints: &[f64],
        mut f: F,
    ) -> f64 {
        let mut acc = 0.0;
        self.for_each_normal_point(mean, sd, breakpoints, |x, w| acc += w * f(x));
        acc
    }
}

/// Gauss–Hermite estimate of E[f(G)], G ~ N(0,1).
pub fn expect_gauss_1d<F: FnMut(f64) -> f64>(f: F, order: usize) -> Result<f64> {
    Ok(Quadrature::cached(order)?.hermite.expect_std_normal(f))
}

/// Tensor-product Gauss–Hermite estimate of E[f(Z₀, G)] for independent
/// standard normals. Callers apply any scaling to `Z₀` themselves.
pub fn expect_gauss_2d<F: FnMut(f64, f64) -> f64>(f: F, order: usize) -> Result<f64> {
    Ok(Quadrature::cached(order)?.hermite.expect_std_normal_2d(f))
}

fn hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    // ascending order
    x.reverse();
    w.reverse();
    (x, w)
}

fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[m - 1] = 0.0;
    }
    (x, w)
}

/// Xᵀv, accumulated row by row (much faster than a strided transposed
/// product for row-major X).
pub fn transpose_mul(x: &ndarray::Array2<f64>, v: &ndarray::Array1<f64>) -> ndarray::Array1<f64> {
    let mut acc = ndarray::Array1::<f64>::zeros(x.ncols());
    for (row, &vi) in x.outer_iter().zip(v.iter()) {
        acc.scaled_add(vi, &row);
    }
    acc
}

/// A reproducible random stream keyed by `(master_seed, stream_index)`.
///
/// Backed by ChaCha8 with the stream index mapped onto the cipher's stream
/// counter, so distinct indices give non-overlapping keystreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        RngStream {
            master_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn cdf_basics() {
        assert_eq!(std_normal_cdf(0.0).unwrap(), 0.5);
        assert_abs_diff_eq!(std_normal_cdf(40.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(std_normal_cdf(f64::NAN).is_err());
        assert!(std_normal_cdf(f64::INFINITY).is_err());
    }

    /// Independent erf oracle: Maclaurin series, exact enough for |x| <= 3.
    fn erf_series(x: f64) -> f64 {
        let mut sum = 0.0;
        let mut term = x;
        let mut n = 0.0;
        while term.abs() > 1e-20 || n < 5.0 {
            sum += term / (2.0 * n + 1.0);
            n += 1.0;
            term *= -x * x / n;
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn cdf_matches_series_oracle() {
        for i in -40..=40 {
            let x = i as f64 * 0.1;
            let oracle = 0.5 * (1.0 + erf_series(x / SQRT_2));
            assert_abs_diff_eq!(normal_cdf(x), oracle, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-15);
    }

    #[test]
    fn cdf_matches_monte_carlo() {
        // 1e6 draws: standard error ~ 3.7e-4
        let mut rng = RngStream::new(7, 0).rng();
        let draws = 1_000_000;
        let hits = (0..draws)
            .filter(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) < 1.0)
            .count();
        let est = hits as f64 / draws as f64;
        assert!((est - normal_cdf(1.0)).abs() < 4.0 * 3.7e-4);
    }

    #[test]
    fn cdf_symmetry() {
        for i in 0..200 {
            let x = -10.0 + 0.1 * i as f64;
            assert_abs_diff_eq!(normal_cdf(x) + normal_cdf(-x), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn log_cdf_tail_is_continuous() {
        let a = log_normal_cdf(-29.999);
        let b = log_normal_cdf(-30.001);
        assert!((a - b).abs() < 0.1);
        assert_abs_diff_eq!(
            log_normal_cdf(-30.0 - 1e-9),
            normal_cdf(-30.0).ln(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn gauss_expectations() {
        assert_abs_diff_eq!(expect_gauss_1d(|_| 1.0, 61).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            expect_gauss_1d(|g| g * g, 61).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            expect_gauss_1d(normal_cdf, 61).unwrap(),
            0.5,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            expect_gauss_2d(|_, _| 1.0, 41).unwrap(),
            1.0,
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            expect_gauss_2d(|z, g| z * g, 41).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            expect_gauss_2d(|z, g| z * z * g * g, 41).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        assert!(expect_gauss_1d(|_| 1.0, 1).is_err());
    }

    #[test]
    fn hermite_rule_shape() {
        for order in [2, 5, 10, 41, 61, 100] {
            let rule = QuadratureRule::gauss_hermite(order).unwrap();
            assert_eq!(rule.nodes.len(), order);
            let wsum: f64 = rule.weights.iter().sum();
            assert_abs_diff_eq!(wsum, PI.sqrt(), epsilon = 1e-12);
            for k in 0..order {
                assert_abs_diff_eq!(rule.nodes[k], -rule.nodes[order - 1 - k], epsilon = 1e-13);
                if k > 0 {
                    assert!(rule.nodes[k] > rule.nodes[k - 1]);
                }
                assert!(rule.weights[k] > 0.0);
            }
        }
    }

    #[test]
    fn hermite_exact_on_polynomials() {
        // E[G^{2k}] = (2k-1)!!
        for order in [4usize, 10, 20] {
            let rule = QuadratureRule::gauss_hermite(order).unwrap();
            let mut dfact = 1.0;
            for k in 0..order {
                let deg = 2 * k;
                let est = rule.expect_std_normal(|g| g.powi(deg as i32));
                assert!(
                    ((est - dfact) / dfact).abs() < 1e-11,
                    "order {order} deg {deg}"
                );
                let odd = rule.expect_std_normal(|g| g.powi(deg as i32 + 1));
                assert!(odd.abs() < 1e-11 * dfact.max(1.0));
                dfact *= (2 * k + 1) as f64;
            }
        }
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = LegendreRule::new(20).unwrap();
        for deg in 0..40 {
            let exact = (3f64.powi(deg + 1) - 1.0) / (deg + 1) as f64;
            let est = rule.integrate(1.0, 3.0, |x| x.powi(deg));
            assert!(((est - exact) / exact).abs() < 1e-12, "deg {deg}");
        }
    }

    #[test]
    fn split_rule_handles_jumps() {
        let q = Quadrature::new(61).unwrap();
        // P(X > 0) for X ~ N(0.3, 2²)
        let p = q.expect_normal(0.3, 2.0, &[0.0], |x| if x > 0.0 { 1.0 } else { 0.0 });
        assert_abs_diff_eq!(p, normal_cdf(0.15), epsilon = 1e-13);
        let mass = q.expect_normal(-1.0, 0.5, &[0.2], |_| 1.0);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-13);
        // E[X 1(X>0)] = φ(0) for X ~ N(0,1)
        let m = q.expect_normal(0.0, 1.0, &[0.0], |x| x.max(0.0));
        assert_abs_diff_eq!(m, normal_pdf(0.0), epsilon = 1e-13);
    }

    #[test]
    fn bisection() {
        assert_abs_diff_eq!(
            find_root_bisect(|x| x - 1.0, 0.0, 2.0, 1e-12).unwrap(),
            1.0,
            epsilon = 1e-11
        );
        assert_abs_diff_eq!(
            find_root_bisect(|x| normal_cdf(x) - 0.5, -1.0, 1.0, 1e-14).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            find_root_bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-8),
            Err(Error::Bracket { .. })
        ));
        let a = find_root_bisect(|x| x.powi(3) - 2.0, 0.0, 3.0, 1e-9).unwrap();
        let b = find_root_bisect(|x| x.powi(3) - 2.0, 0.0, 3.0, 1e-9).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn logistic() {
        assert_eq!(stable_logistic(0.0), 0.5);
        assert!(stable_logistic(-1e4) <= 1e-300);
        assert_eq!(stable_logistic(1e4), 1.0);
        assert_abs_diff_eq!(stable_logistic(3f64.ln()), 0.75, epsilon = 1e-15);
        assert_eq!(stable_logistic(f64::NEG_INFINITY), 0.0);
        assert_eq!(stable_logistic(f64::INFINITY), 1.0);
    }

    #[test]
    fn rng_streams() {
        let a: Vec<u64> = {
            let mut r = RngStream::new(42, 3).rng();
            (0..16).map(|_| r.random()).collect()
        };
        let b: Vec<u64> = {
            let mut r = RngStream::new(42, 3).rng();
            (0..16).map(|_| r.random()).collect()
        };
        let c: Vec<u64> = {
            let mut r = RngStream::new(42, 4).rng();
            (0..16).map(|_| r.random()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rng_streams_uncorrelated() {
        let mut r0 = RngStream::new(1, 0).rng();
        let mut r1 = RngStream::new(1, 1).rng();
        let n = 200_000;
        let mut s = 0.0;
        for _ in 0..n {
            let a: f64 = r0.sample(rand_distr::StandardNormal);
            let b: f64 = r1.sample(rand_distr::StandardNormal);
            s += a * b;
        }
        // sample correlation ~ N(0, 1/n)
        assert!((s / n as f64).abs() < 5.0 / (n as f64).sqrt());
    }
}
