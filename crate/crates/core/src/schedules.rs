//! Annealing schedules `k -> beta(k)` and the noise blend they drive.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Decay policy for the fresh-noise weight during annealed reflow.
///
/// Every non-constant kind starts at 1 and is non-increasing. `linear` and the
/// two cosine kinds hit exactly 0 at their horizon; `exponential` falls below
/// 1e-6 after `14 * k_step` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    Constant {
        beta0: f64,
    },
    /// `1 - min(1, k / horizon)`
    Linear {
        horizon: u64,
    },
    /// `exp(-k / k_step)`
    Exponential {
        k_step: u64,
    },
    /// `cos(pi * min(1, k / 2k_step) / 2)`
    CosineHalf {
        k_step: u64,
    },
    /// `(1 + cos(pi * min(1, k / 2k_step))) / 2`
    CosineFull {
        k_step: u64,
    },
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BetaSchedule::Constant { beta0 } if !(0.0..=1.0).contains(&beta0) => Err(
                Error::contract(format!("constant beta {beta0} outside [0, 1]")),
            ),
            BetaSchedule::Linear { horizon: 0 }
            | BetaSchedule::Exponential { k_step: 0 }
            | BetaSchedule::CosineHalf { k_step: 0 }
            | BetaSchedule::CosineFull { k_step: 0 } => {
                Err(Error::contract("schedule horizon must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Iteration after which beta is (numerically) zero; `None` for constant schedules.
    pub fn horizon(&self) -> Option<u64> {
        match *self {
            BetaSchedule::Constant { .. } => None,
            BetaSchedule::Linear { horizon } => Some(horizon),
            BetaSchedule::Exponential { k_step } => Some(14 * k_step),
            BetaSchedule::CosineHalf { k_step } | BetaSchedule::CosineFull { k_step } => {
                Some(2 * k_step)
            }
        }
    }

    pub fn beta_at(&self, k: u64) -> f64 {
        let k = k as f64;
        match *self {
            BetaSchedule::Constant { beta0 } => beta0,
            BetaSchedule::Linear { horizon } => 1.0 - (k / horizon as f64).min(1.0),
            BetaSchedule::Exponential { k_step } => (-k / k_step as f64).exp(),
            BetaSchedule::CosineHalf { k_step } => {
                let u = (k / (2.0 * k_step as f64)).min(1.0);
                if u >= 1.0 {
                    0.0
                } else {
                    (PI * u / 2.0).cos()
                }
            }
            BetaSchedule::CosineFull { k_step } => {
                let u = (k / (2.0 * k_step as f64)).min(1.0);
                if u >= 1.0 {
                    0.0
                } else {
                    (1.0 + (PI * u).cos()) / 2.0
                }
            }
        }
    }
}

pub fn beta_at(schedule: &BetaSchedule, k: u64) -> f64 {
    schedule.beta_at(k)
}

/// `sqrt(1 - beta^2) * x1 + beta * x1_prime`, componentwise.
pub fn blend_noise(x1: &[f64], x1_prime: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_dim(x1.len(), x1_prime.len())?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::contract(format!("beta {beta} outside [0, 1]")));
    }
    let keep = (1.0 - beta * beta).sqrt();
    Ok(x1
        .iter()
        .zip(x1_prime)
        .map(|(&a, &b)| keep * a + beta * b)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const K: u64 = 50_000;

    fn all_annealing() -> Vec<BetaSchedule> {
        vec![
            BetaSchedule::Linear { horizon: 6 * K },
            BetaSchedule::Exponential { k_step: K },
            BetaSchedule::CosineHalf { k_step: K },
            BetaSchedule::CosineFull { k_step: K },
        ]
    }

    #[test]
    fn closed_form_values() {
        let lin = BetaSchedule::Linear { horizon: 300_000 };
        assert_eq!(lin.beta_at(0), 1.0);
        assert_eq!(lin.beta_at(150_000), 0.5);
        assert_eq!(lin.beta_at(300_000), 0.0);
        let exp = BetaSchedule::Exponential { k_step: K };
        assert!((exp.beta_at(K) - (-1f64).exp()).abs() < 1e-15);
        assert!((exp.beta_at(K) - 0.367879).abs() < 1e-6);
        let cf = BetaSchedule::CosineFull { k_step: K };
        assert!((cf.beta_at(K) - 0.5).abs() < 1e-15);
        let ch = BetaSchedule::CosineHalf { k_step: K };
        assert!((ch.beta_at(K) - (PI / 4.0).cos()).abs() < 1e-15);
    }

    #[test]
    fn annealing_schedules_start_at_one_and_decay_to_zero() {
        for s in all_annealing() {
            assert_eq!(s.beta_at(0), 1.0, "{s:?}");
            let h = s.horizon().unwrap();
            let mut prev = 1.0;
            for k in (0..=h + 10 * K).step_by(997) {
                let b = s.beta_at(k);
                assert!((0.0..=1.0).contains(&b));
                assert!(b <= prev, "{s:?} increases at {k}");
                if k >= h {
                    assert!(b <= 1e-6, "{s:?} at {k} = {b}");
                }
                prev = b;
            }
        }
    }

    #[test]
    fn constant_schedule_is_flat() {
        for b in [0.0, 0.1, 0.3, 0.5] {
            let s = BetaSchedule::Constant { beta0: b };
            assert_eq!(s.beta_at(0), b);
            assert_eq!(s.beta_at(1_000_000), b);
        }
        assert!(BetaSchedule::Constant { beta0: 1.5 }.validate().is_err());
    }

    #[test]
    fn blend_limits() {
        let (a, b) = ([1.0, -2.0, 0.5], [0.3, 0.7, -4.0]);
        assert_eq!(blend_noise(&a, &b, 0.0).unwrap(), a.to_vec());
        assert_eq!(blend_noise(&a, &b, 1.0).unwrap(), b.to_vec());
        assert!(blend_noise(&a, &b, 1.2).is_err());
        assert!(blend_noise(&a, &b, -0.1).is_err());
        assert!(blend_noise(&a, &b[..2], 0.5).is_err());
    }

    #[test]
    fn blend_preserves_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let beta = 0.6;
        let (mut s1, mut s2) = ([0.0; 2], [0.0; 2]);
        let mut cross = 0.0;
        for _ in 0..n {
            let x1: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let xp: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let y = blend_noise(&x1, &xp, beta).unwrap();
            for j in 0..2 {
                s1[j] += y[j];
                s2[j] += y[j] * y[j];
            }
            cross += y[0] * y[1];
        }
        let nf = n as f64;
        // 3 sigma bounds: mean ~ 1/sqrt(n), variance ~ sqrt(2/n), covariance ~ 1/sqrt(n)
        for j in 0..2 {
            let mean = s1[j] / nf;
            let var = s2[j] / nf - mean * mean;
            assert!(mean.abs() < 3.0 / nf.sqrt());
            assert!((var - 1.0).abs() < 0.02);
            assert!((var - 1.0).abs() < 3.0 * (2.0 / nf).sqrt());
        }
        assert!((cross / nf).abs() < 3.0 / nf.sqrt());
    }
}
