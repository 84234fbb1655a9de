//! Bounded, symmetric noise samplers with an optional state-dependent
//! amplitude multiplier.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseFamily {
    /// Student-t with `dof` degrees of freedom, scaled by `scale`, rejected
    /// outside `±trunc·scale`.
    TruncatedStudentT { dof: f64, scale: f64, trunc: f64 },
    /// Laplace with scale `scale`, rejected outside `±trunc·scale`.
    BoundedLaplace { scale: f64, trunc: f64 },
}

impl NoiseFamily {
    pub fn scale(&self) -> f64 {
        match *self {
            Self::TruncatedStudentT { scale, .. } | Self::BoundedLaplace { scale, .. } => scale,
        }
    }

    /// Support half-width `trunc·scale` before any multiplier.
    pub fn radius(&self) -> f64 {
        match *self {
            Self::TruncatedStudentT { scale, trunc, .. } | Self::BoundedLaplace { scale, trunc } => scale * trunc,
        }
    }

    fn validate(&self) -> SimResult<()> {
        let ok = match *self {
            Self::TruncatedStudentT { dof, scale, trunc } => dof > 0.0 && scale >= 0.0 && trunc > 0.0,
            Self::BoundedLaplace { scale, trunc } => scale >= 0.0 && trunc > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("invalid noise parameters {self:?}")))
        }
    }

    /// Standardized draw in `[−trunc, trunc]`.
    fn unit_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::TruncatedStudentT { dof, trunc, .. } => {
                let t = StudentT::new(dof).expect("validated dof");
                loop {
                    let s: f64 = t.sample(rng);
                    if s.abs() <= trunc {
                        return s;
                    }
                }
            }
            Self::BoundedLaplace { trunc, .. } => loop {
                let e: f64 = Exp1.sample(rng);
                if e <= trunc {
                    return if rng.random::<bool>() { e } else { -e };
                }
            },
        }
    }
}

/// Multiplies the noise amplitude by `multiplier` while `x[component] > threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeteroRule {
    pub component: usize,
    pub threshold: f64,
    pub multiplier: f64,
}

impl HeteroRule {
    pub fn factor(&self, state: &DVector<f64>) -> f64 {
        if state[self.component] > self.threshold {
            self.multiplier
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSampler {
    pub family: NoiseFamily,
    #[serde(default)]
    pub hetero: Option<HeteroRule>,
}

impl NoiseSampler {
    pub fn new(family: NoiseFamily, hetero: Option<HeteroRule>) -> SimResult<Self> {
        family.validate()?;
        if let Some(h) = hetero {
            if !(h.multiplier > 0.0) {
                return Err(SimError::Config(format!("hetero multiplier must be positive, got {}", h.multiplier)));
            }
        }
        Ok(Self { family, hetero })
    }

    /// Multiplier in force at `state`.
    pub fn factor(&self, state: &DVector<f64>) -> f64 {
        self.hetero.map_or(1.0, |h| h.factor(state))
    }

    /// Largest multiplier the rule can apply.
    pub fn worst_factor(&self) -> f64 {
        self.hetero.map_or(1.0, |h| h.multiplier.max(1.0))
    }

    /// Vector of independent draws at amplitude `factor`.
    pub fn draw<R: Rng + ?Sized>(&self, dim: usize, factor: f64, rng: &mut R) -> DVector<f64> {
        let s = self.family.scale() * factor;
        if s == 0.0 {
            return DVector::zeros(dim);
        }
        DVector::from_fn(dim, |_, _| s * self.family.unit_draw(rng))
    }

    /// `n` vectors drawn at a fixed amplitude.
    pub fn draw_many<R: Rng + ?Sized>(&self, dim: usize, n: usize, factor: f64, rng: &mut R) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.draw(dim, factor, rng)).collect()
    }
}

/// Process and measurement noise at `state`; both share the multiplier.
pub fn sample_noise<R: Rng + ?Sized>(
    sampler: &NoiseSampler,
    state: &DVector<f64>,
    ny: usize,
    rng: &mut R,
) -> (DVector<f64>, DVector<f64>) {
    let f = sampler.factor(state);
    let w = sampler.draw(state.len(), f, rng);
    let eps = sampler.draw(ny, f, rng);
    (w, eps)
}
