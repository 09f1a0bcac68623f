//! Straightness, sliced Wasserstein distance, and NFE sweeps.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{sample_noise, standard_normal};
use crate::error::{check_dim, Error, Result};
use crate::nn::VelocityField;
use crate::solvers::{SolverSpec, Velocity};

pub const DEFAULT_STRAIGHTNESS_SAMPLES: usize = 256;
pub const DEFAULT_STRAIGHTNESS_STEPS: usize = 100;
pub const DEFAULT_PROJECTIONS: usize = 128;

/// Mean over Euler trajectories of `(1/N) Σ_i ‖v(x_i, t_i) - (x1 - x̂0)‖²`.
///
/// For an Euler trajectory `x1 - x̂0` equals the mean of the step velocities,
/// which is what is used here; the mean is accumulated relative to the first
/// velocity so a field that is constant along the path scores exactly zero.
pub fn straightness<V: Velocity + ?Sized>(
    field: &V,
    n_samples: usize,
    n_steps: usize,
    seed: u64,
) -> Result<f64> {
    if n_steps < 2 {
        return Err(Error::contract("straightness needs at least 2 steps"));
    }
    if n_samples == 0 {
        return Err(Error::contract("straightness needs at least one sample"));
    }
    let d = field.dim();
    let n = n_steps as f64;
    let mut total = 0.0;
    let mut vs = vec![vec![0.0; d]; n_steps];
    for x1 in sample_noise(d, n_samples, seed) {
        let mut x = x1;
        for (i, v) in vs.iter_mut().enumerate() {
            let t = (n_steps - i) as f64 / n;
            field.velocity_into(&x, t, v);
            x.iter_mut()
                .zip(v.iter())
                .for_each(|(xi, vi)| *xi -= vi / n);
            if x.iter().any(|xi| !xi.is_finite()) {
                return Err(Error::NonFiniteState { step: i });
            }
        }
        let base = vs[0].clone();
        let mut shift = vec![0.0; d];
        for v in &vs {
            shift
                .iter_mut()
                .zip(v.iter().zip(&base))
                .for_each(|(s, (a, b))| *s += a - b);
        }
        let mean: Vec<f64> = base.iter().zip(&shift).map(|(b, s)| b + s / n).collect();
        let dev: f64 = vs
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&mean)
                    .map(|(a, m)| (a - m).powi(2))
                    .sum::<f64>()
            })
            .sum();
        total += dev / n;
    }
    Ok(total / n_samples as f64)
}

/// Squared 1-D 2-Wasserstein distance between equal-size samples (sorted matching).
pub fn w2_squared_1d(a: &mut [f64], b: &mut [f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / a.len() as f64
}

/// Unit directions drawn from a seeded Gaussian.
pub fn projection_directions(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let u = standard_normal(&mut rng, dim);
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break u.into_iter().map(|v| v / norm).collect();
            }
        })
        .collect()
}

/// Average over `n_projections` random directions of the squared 1-D W2 between
/// the projected sample sets. The larger set is subsampled (seeded) to the
/// size of the smaller one.
pub fn sliced_w2(a: &[Vec<f64>], b: &[Vec<f64>], n_projections: usize, seed: u64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("sliced_w2 needs non-empty sample sets"));
    }
    if n_projections == 0 {
        return Err(Error::contract("sliced_w2 needs at least one projection"));
    }
    let dim = a[0].len();
    for x in a.iter().chain(b) {
        check_dim(dim, x.len())?;
    }
    let m = a.len().min(b.len());
    let mut sub_rng = ChaCha8Rng::seed_from_u64(seed);
    sub_rng.set_stream(1);
    let subsample = |set: &[Vec<f64>], rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..set.len()).collect();
        if set.len() > m {
            idx.partial_shuffle(rng, m);
            idx.truncate(m);
        }
        idx
    };
    let ia = subsample(a, &mut sub_rng);
    let ib = subsample(b, &mut sub_rng);
    let dirs = projection_directions(dim, n_projections, seed);
    let project = |set: &[Vec<f64>], idx: &[usize], u: &[f64]| -> Vec<f64> {
        idx.iter()
            .map(|&i| set[i].iter().zip(u).map(|(x, w)| x * w).sum())
            .collect()
    };
    let total: f64 = dirs
        .iter()
        .map(|u| {
            let mut pa = project(a, &ia, u);
            let mut pb = project(b, &ib, u);
            w2_squared_1d(&mut pa, &mut pb)
        })
        .sum();
    Ok(total / n_projections as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub straightness: f64,
    pub sw2: f64,
    pub nfe: usize,
    pub params: usize,
    pub macs: usize,
    pub solver: SolverSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalProtocol {
    pub n_samples: usize,
    pub straightness_samples: usize,
    pub straightness_steps: usize,
    pub projections: usize,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            n_samples: 2000,
            straightness_samples: DEFAULT_STRAIGHTNESS_SAMPLES,
            straightness_steps: DEFAULT_STRAIGHTNESS_STEPS,
            projections: DEFAULT_PROJECTIONS,
            seed: 0,
        }
    }
}

/// One report per solver; all solvers start from the same noise and are scored
/// against `reference` with the same projections.
pub fn nfe_sweep(
    field: &VelocityField,
    solvers: &[SolverSpec],
    reference: &[Vec<f64>],
    protocol: &EvalProtocol,
) -> Result<Vec<EvalReport>> {
    let s = straightness(
        field,
        protocol.straightness_samples,
        protocol.straightness_steps,
        protocol.seed,
    )?;
    let (params, macs) = field.spec().count_params_macs();
    let noise = sample_noise(
        field.dim(),
        protocol.n_samples,
        protocol.seed.wrapping_add(1),
    );
    solvers
        .iter()
        .map(|solver| {
            solver.validate()?;
            let mut nfe_total = 0usize;
            let mut samples = Vec::with_capacity(noise.len());
            for x1 in &noise {
                let tr = solver.solve(field, x1)?;
                nfe_total += tr.nfe;
                samples.push(tr.states.last().unwrap().clone());
            }
            let nfe = (nfe_total as f64 / noise.len() as f64).round() as usize;
            let sw2 = sliced_w2(&samples, reference, protocol.projections, protocol.seed)?;
            Ok(EvalReport {
                straightness: s,
                sw2,
                nfe,
                params,
                macs,
                solver: *solver,
                seed: protocol.seed,
            })
        })
        .collect()
}

pub const CSV_HEADER: &str = "checkpoint,solver,nfe,straightness,sw2,params,macs,seed";

pub fn write_reports_csv<W: Write>(
    out: &mut W,
    checkpoint: &str,
    reports: &[EvalReport],
    header: bool,
) -> std::io::Result<()> {
    if header {
        writeln!(out, "{CSV_HEADER}")?;
    }
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            checkpoint, r.solver, r.nfe, r.straightness, r.sw2, r.params, r.macs, r.seed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpSpec;
    use crate::solvers::FnField;
    use proptest::prelude::*;

    #[test]
    fn constant_field_is_perfectly_straight() {
        let f = VelocityField::constant(MlpSpec::new(2, vec![4]), &[0.1, -0.37]).unwrap();
        assert_eq!(straightness(&f, 16, 100, 0).unwrap(), 0.0);
    }

    #[test]
    fn time_linear_field_matches_integral() {
        let f = FnField::new(1, |_x: &[f64], t, out: &mut [f64]| out[0] = t);
        let s = straightness(&f, 4, 100, 0).unwrap();
        assert!((s - 1.0 / 12.0).abs() < 1e-3, "{s}");
        assert!(straightness(&f, 4, 1, 0).is_err());
    }

    #[test]
    fn sliced_w2_point_masses() {
        let a = vec![vec![0.0]];
        let b = vec![vec![1.7]];
        assert!((sliced_w2(&a, &b, 5, 3).unwrap() - 1.7f64.powi(2)).abs() < 1e-12);
        assert_eq!(sliced_w2(&a, &a, 5, 3).unwrap(), 0.0);
        assert!(sliced_w2(&a, &[vec![0.0, 1.0]], 5, 3).is_err());
        assert!(sliced_w2(&a, &[], 5, 3).is_err());
    }

    #[test]
    fn sweep_on_straight_field_is_solver_invariant() {
        let f = VelocityField::constant(MlpSpec::new(2, vec![4]), &[1.0, -0.5]).unwrap();
        let reference = sample_noise(2, 300, 99);
        let solvers = [
            SolverSpec::Euler { steps: 1 },
            SolverSpec::Euler { steps: 2 },
            SolverSpec::Euler { steps: 10 },
        ];
        let protocol = EvalProtocol {
            n_samples: 300,
            ..Default::default()
        };
        let reports = nfe_sweep(&f, &solvers, &reference, &protocol).unwrap();
        assert_eq!(
            reports.iter().map(|r| r.nfe).collect::<Vec<_>>(),
            vec![1, 2, 10]
        );
        for r in &reports {
            assert!((r.sw2 - reports[0].sw2).abs() < 1e-12);
            assert_eq!(r.straightness, 0.0);
        }
    }

    #[test]
    fn csv_row_format() {
        let r = EvalReport {
            straightness: 0.0,
            sw2: 0.25,
            nfe: 1,
            params: 10,
            macs: 8,
            solver: SolverSpec::Euler { steps: 1 },
            seed: 3,
        };
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, "a.ckpt", &[r], true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{CSV_HEADER}\na.ckpt,euler-1,1,0,0.25,10,8,3\n")
        );
    }

    fn cloud(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), n)
    }

    proptest! {
        #[test]
        fn sliced_w2_symmetric_and_quadratic(a in cloud(12), b in cloud(9), k in 0.1f64..4.0) {
            let ab = sliced_w2(&a, &b, 16, 1).unwrap();
            let ba = sliced_w2(&b, &a, 16, 1).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
            let scale = |s: &[Vec<f64>]| s.iter().map(|x| x.iter().map(|v| v * k).collect()).collect::<Vec<Vec<f64>>>();
            let scaled = sliced_w2(&scale(&a), &scale(&b), 16, 1).unwrap();
            prop_assert!((scaled - k * k * ab).abs() <= 1e-9 * scaled.max(1.0));
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(sliced_w2(&a, &a, 16, 1).unwrap(), 0.0);
        }
    }
}
