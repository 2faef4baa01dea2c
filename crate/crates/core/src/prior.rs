//! Sparse signal priors with a sign asymmetry parameter.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::gaussian::gauss_legendre;
use crate::{Error, Result};

/// Law of `|β₀,j|` given `β₀,j ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum MagnitudeLaw {
    PointMass { value: f64 },
    Exponential { mean: f64 },
}

impl Default for MagnitudeLaw {
    fn default() -> Self {
        MagnitudeLaw::PointMass { value: 1.0 }
    }
}

impl MagnitudeLaw {
    fn validate(&self) -> Result<()> {
        let (name, v) = match self {
            MagnitudeLaw::PointMass { value } => ("point_mass value", *value),
            MagnitudeLaw::Exponential { mean } => ("exponential mean", *mean),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Parameter(format!("{name} must be > 0, got {v}")));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MagnitudeLaw::PointMass { value } => value,
            MagnitudeLaw::Exponential { mean } => Exp::new(1.0 / mean).expect("validated rate").sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MagnitudeLaw::PointMass { value } => value,
            MagnitudeLaw::Exponential { mean } => mean,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            MagnitudeLaw::PointMass { value } => value * value,
            MagnitudeLaw::Exponential { mean } => 2.0 * mean * mean,
        }
    }

    /// Quadrature nodes `(magnitude, weight)` with weights summing to one.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        match *self {
            MagnitudeLaw::PointMass { value } => vec![(value, 1.0)],
            MagnitudeLaw::Exponential { mean } => {
                let gl = gauss_legendre(12);
                let upper = 40.0 * mean;
                let panels = 80;
                let h = upper / panels as f64;
                let mut out = Vec::with_capacity(panels * gl.len());
                for k in 0..panels {
                    let mid = (k as f64 + 0.5) * h;
                    for &(x, w) in &gl {
                        let m = mid + 0.5 * h * x;
                        out.push((m, 0.5 * h * w * (-m / mean).exp() / mean));
                    }
                }
                let total: f64 = out.iter().map(|(_, w)| w).sum();
                out.iter_mut().for_each(|(_, w)| *w /= total);
                out
            }
        }
    }
}

/// `β₀,j` is nonzero with probability ε, positive with conditional
/// probability `(1 + dε)/2`, and has magnitude drawn from `magnitude`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPrior {
    pub epsilon: f64,
    #[serde(default)]
    pub d_epsilon: f64,
    #[serde(default)]
    pub magnitude: MagnitudeLaw,
}

impl SignalPrior {
    pub fn new(epsilon: f64, d_epsilon: f64) -> Self {
        SignalPrior {
            epsilon,
            d_epsilon,
            magnitude: MagnitudeLaw::default(),
        }
    }

    pub fn with_magnitude(mut self, magnitude: MagnitudeLaw) -> Self {
        self.magnitude = magnitude;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Parameter(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.d_epsilon) {
            return Err(Error::Parameter(format!("d_epsilon must lie in [0, 1], got {}", self.d_epsilon)));
        }
        self.magnitude.validate()
    }

    /// `P(β₀ > 0)`
    pub fn eps_plus(&self) -> f64 {
        0.5 * self.epsilon * (1.0 + self.d_epsilon)
    }

    /// `P(β₀ < 0)`
    pub fn eps_minus(&self) -> f64 {
        0.5 * self.epsilon * (1.0 - self.d_epsilon)
    }

    /// Same prior with positive and negative masses swapped.
    pub fn negated(&self) -> NegatedPrior {
        NegatedPrior(*self)
    }

    pub fn mean(&self) -> f64 {
        (self.eps_plus() - self.eps_minus()) * self.magnitude.mean()
    }

    pub fn second_moment(&self) -> f64 {
        self.epsilon * self.magnitude.second_moment()
    }

    /// Atoms `(value, probability)` of the scalar law, for quadrature.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 1.0 - self.epsilon)];
        for (m, w) in self.magnitude.nodes() {
            if self.eps_plus() > 0.0 {
                out.push((m, w * self.eps_plus()));
            }
            if self.eps_minus() > 0.0 {
                out.push((-m, w * self.eps_minus()));
            }
        }
        out
    }

    /// One entry; `flip` negates the sign.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, flip: bool) -> f64 {
        let u: f64 = rng.random();
        let sign = if u < self.eps_plus() {
            1.0
        } else if u < self.epsilon {
            -1.0
        } else {
            return 0.0;
        };
        let sign = if flip { -sign } else { sign };
        sign * self.magnitude.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(p, |_, _| self.draw(rng, false))
    }
}

/// A prior whose draws are the negation of the wrapped prior's draws on the
/// same random stream.
#[derive(Debug, Clone, Copy)]
pub struct NegatedPrior(SignalPrior);

impl NegatedPrior {
    pub fn sample<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(p, |_, _| self.0.draw(rng, true))
    }
}
