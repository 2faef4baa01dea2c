//! Standard normal helpers and one-dimensional quadrature for the scalar
//! soft-thresholding denoiser.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Scalar soft threshold `sign(x)·(|x| − t)₊`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

const GL_POINTS: usize = 12;
const Z_LIMIT: f64 = 12.0;
const PANEL_WIDTH: f64 = 0.5;

fn legendre_nodes() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(GL_POINTS))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// `E g(Z)` for `Z ~ N(0,1)`, where `g` is smooth between the given kinks.
pub fn normal_expectation<F: Fn(f64) -> f64>(g: F, kinks: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = kinks
        .iter()
        .copied()
        .filter(|k| k.is_finite() && k.abs() < Z_LIMIT)
        .collect();
    cuts.push(-Z_LIMIT);
    cuts.push(Z_LIMIT);
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();

    let nodes = legendre_nodes();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let panels = ((hi - lo) / PANEL_WIDTH).ceil().max(1.0) as usize;
        let h = (hi - lo) / panels as f64;
        for k in 0..panels {
            let a = lo + k as f64 * h;
            let mid = a + 0.5 * h;
            for &(x, wt) in nodes {
                let z = mid + 0.5 * h * x;
                total += 0.5 * h * wt * g(z) * pdf(z);
            }
        }
    }
    total
}

/// Moments of the scalar denoiser `η_θ(x + τZ)` needed by state evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMoments {
    /// `E (η − x)²`
    pub mse: f64,
    /// `E η²`
    pub second_moment: f64,
    /// `P(η ≠ 0)`
    pub active: f64,
}

/// Moments of `η_θ(x + τZ)` by quadrature over `Z ~ N(0,1)`.
pub fn scalar_moments(x: f64, tau: f64, theta: f64) -> ScalarMoments {
    if tau == 0.0 {
        let eta = soft_threshold(x, theta);
        return ScalarMoments {
            mse: (eta - x).powi(2),
            second_moment: eta * eta,
            active: if eta != 0.0 { 1.0 } else { 0.0 },
        };
    }
    let kinks = [(-theta - x) / tau, (theta - x) / tau];
    let mse = normal_expectation(|z| (soft_threshold(x + tau * z, theta) - x).powi(2), &kinks);
    let second_moment = normal_expectation(|z| soft_threshold(x + tau * z, theta).powi(2), &kinks);
    let active = cdf((x - theta) / tau) + cdf((-x - theta) / tau);
    ScalarMoments {
        mse,
        second_moment,
        active,
    }
}
