//! Toy data distributions. The noise side is always a standard normal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", content = "params", rename_all = "snake_case")]
pub enum DistKind {
    GaussMixture {
        centers: Vec<Vec<f64>>,
        weights: Vec<f64>,
        sigma: f64,
    },
    /// Two interleaved half circles, centred near the origin. 2-D only.
    TwoMoons {
        noise: f64,
    },
    /// `cells × cells` grid on `[-extent, extent]²`; cell `(i, j)` is populated when `i + j` is even.
    Checkerboard {
        cells: usize,
        extent: f64,
    },
    StdNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyDistribution {
    #[serde(flatten)]
    pub kind: DistKind,
    pub dim: usize,
}

/// Independent RNG stream for one sample index.
pub fn index_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// `n` standard-normal vectors, one RNG stream per index.
pub fn sample_noise(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| standard_normal(&mut index_rng(seed, i as u64), dim))
        .collect()
}

impl ToyDistribution {
    pub fn std_normal(dim: usize) -> Self {
        ToyDistribution {
            kind: DistKind::StdNormal,
            dim,
        }
    }

    pub fn gauss_mixture(centers: Vec<Vec<f64>>, sigma: f64) -> Self {
        let dim = centers.first().map_or(0, Vec::len);
        let weights = vec![1.0 / centers.len() as f64; centers.len()];
        ToyDistribution {
            kind: DistKind::GaussMixture {
                centers,
                weights,
                sigma,
            },
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::contract("distribution dim must be positive"));
        }
        match &self.kind {
            DistKind::GaussMixture {
                centers,
                weights,
                sigma,
            } => {
                if centers.is_empty() || centers.len() != weights.len() {
                    return Err(Error::contract("mixture needs one weight per center"));
                }
                if centers.iter().any(|c| c.len() != self.dim) {
                    return Err(Error::contract("mixture center dimension differs from dim"));
                }
                if weights.iter().any(|&w| w < 0.0)
                    || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(Error::contract(
                        "mixture weights must be non-negative and sum to 1",
                    ));
                }
                if *sigma <= 0.0 {
                    return Err(Error::contract("mixture sigma must be positive"));
                }
            }
            DistKind::TwoMoons { noise } => {
                if self.dim != 2 || *noise < 0.0 {
                    return Err(Error::contract("two_moons is 2-D with non-negative noise"));
                }
            }
            DistKind::Checkerboard { cells, extent } => {
                if self.dim != 2 || *cells == 0 || *extent <= 0.0 {
                    return Err(Error::contract(
                        "checkerboard is 2-D with positive cells and extent",
                    ));
                }
            }
            DistKind::StdNormal => {}
        }
        Ok(())
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            DistKind::StdNormal => standard_normal(rng, self.dim),
            DistKind::GaussMixture {
                centers,
                weights,
                sigma,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = centers.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                centers[pick]
                    .iter()
                    .map(|&c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            DistKind::TwoMoons { noise } => {
                let theta = rng.random::<f64>() * std::f64::consts::PI;
                let (x, y) = if rng.random::<bool>() {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                vec![x - 0.5 + noise * nx, y - 0.25 + noise * ny]
            }
            DistKind::Checkerboard { cells, extent } => {
                let n = *cells;
                let width = 2.0 * extent / n as f64;
                let permitted = (n * n).div_ceil(2);
                let k = rng.random_range(0..permitted);
                // enumerate cells with (i + j) even in row-major order
                let mut count = 0;
                let mut cell = (0, 0);
                'outer: for i in 0..n {
                    for j in 0..n {
                        if (i + j) % 2 == 0 {
                            if count == k {
                                cell = (i, j);
                                break 'outer;
                            }
                            count += 1;
                        }
                    }
                }
                let ux: f64 = rng.random();
                let uy: f64 = rng.random();
                vec![
                    -extent + (cell.0 as f64 + ux) * width,
                    -extent + (cell.1 as f64 + uy) * width,
                ]
            }
        }
    }

    /// Whether `x` lies in a populated checkerboard cell. `None` for other kinds.
    pub fn checkerboard_contains(&self, x: &[f64]) -> Option<bool> {
        match &self.kind {
            DistKind::Checkerboard { cells, extent } => {
                let width = 2.0 * extent / *cells as f64;
                let i = ((x[0] + extent) / width).floor();
                let j = ((x[1] + extent) / width).floor();
                let inside = i >= 0.0 && j >= 0.0 && (i as usize) < *cells && (j as usize) < *cells;
                Some(inside && (i as usize + j as usize).is_multiple_of(2))
            }
            _ => None,
        }
    }
}

/// `n` i.i.d. draws, deterministic per `(seed, index)`.
pub fn sample_data(dist: &ToyDistribution, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    dist.validate()?;
    if n == 0 {
        return Err(Error::contract("sample_data needs n >= 1"));
    }
    Ok((0..n)
        .map(|i| dist.sample_one(&mut index_rng(seed, i as u64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn std_normal_mean_is_near_zero() {
        let n = 100_000;
        let xs = sample_data(&ToyDistribution::std_normal(3), n, 1).unwrap();
        for j in 0..3 {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn narrow_mixture_stays_near_center() {
        let sigma = 1e-3;
        let dist = ToyDistribution::gauss_mixture(vec![vec![1.5, -0.5]], sigma);
        for x in sample_data(&dist, 2000, 4).unwrap() {
            let r = ((x[0] - 1.5).powi(2) + (x[1] + 0.5).powi(2)).sqrt();
            assert!(r < 6.0 * sigma);
        }
    }

    #[test]
    fn checkerboard_samples_land_in_permitted_cells() {
        let dist = ToyDistribution {
            kind: DistKind::Checkerboard {
                cells: 4,
                extent: 2.0,
            },
            dim: 2,
        };
        for x in sample_data(&dist, 5000, 2).unwrap() {
            assert_eq!(dist.checkerboard_contains(&x), Some(true), "{x:?}");
        }
        assert_eq!(dist.checkerboard_contains(&[-1.9, -0.5]), Some(false));
    }

    #[test]
    fn sampling_is_per_index_deterministic() {
        let dist = ToyDistribution {
            kind: DistKind::TwoMoons { noise: 0.05 },
            dim: 2,
        };
        let a = sample_data(&dist, 10, 5).unwrap();
        let b = sample_data(&dist, 20, 5).unwrap();
        assert_eq!(a[..], b[..10]);
    }

    #[test]
    fn invalid_mixture_weights_rejected() {
        let dist = ToyDistribution {
            kind: DistKind::GaussMixture {
                centers: vec![vec![0.0], vec![1.0]],
                weights: vec![0.5, 0.6],
                sigma: 1.0,
            },
            dim: 1,
        };
        assert!(sample_data(&dist, 1, 0).is_err());
    }

    #[test]
    fn config_json_shape() {
        let json = r#"{"distribution": "gauss_mixture", "dim": 2,
            "params": {"centers": [[1, 0], [-1, 0]], "weights": [0.5, 0.5], "sigma": 0.1}}"#;
        let d: ToyDistribution = serde_json::from_str(json).unwrap();
        assert!(d.validate().is_ok());
        let normal: ToyDistribution =
            serde_json::from_str(r#"{"distribution": "std_normal", "dim": 4}"#).unwrap();
        assert_eq!(normal, ToyDistribution::std_normal(4));
    }
}
