//! End-to-end acceptance checks, one printed PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so every line shows up in `cargo test`
//! output. Pass criterion numbers as arguments to run a subset.

use std::fs;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slimflow::cli::run_pipeline;
use slimflow::config::PipelineConfig;
use slimflow::data_io::{generate_pairs, sample_data, sample_noise, PairDataset, ToyDistribution};
use slimflow::distill::{
    flow_guided_distill, two_step_loss, two_step_loss_detached, DistillConfig, TwoStepVariant,
};
use slimflow::flow_train::{
    annealing_reflow_loss, augment_pairs, default_schedule, reflow_loss, train_flow, Involution,
    TrainBatch, TrainConfig, TrainSource,
};
use slimflow::metrics::{sliced_w2, straightness};
use slimflow::nn::{
    count_params_macs, velocity_regression, Activation, GradTape, MlpSpec, Row, VelocityField,
};
use slimflow::schedules::BetaSchedule;
use slimflow::solvers::{
    euler_solve, heun_solve, rk45_solve, two_step_euler, Counting, FnField, SolverSpec,
};

const SEEDS: [u64; 3] = [0, 1, 2];
const EVAL_SAMPLES: usize = 2000;
const PROJECTIONS: usize = 128;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------------------
// shared 2-D setup: standard normal -> four-Gaussian mixture (symmetric under x -> -x)

struct Fixture {
    reference: Vec<Vec<f64>>,
    eval_noise: Vec<Vec<f64>>,
    teacher: VelocityField,
    pairs: PairDataset,
    two_flow: VelocityField,
    /// (iteration, straightness) of EMA snapshots during the 2-flow run.
    two_flow_log: Vec<(u64, f64)>,
    two_flow_horizon: u64,
}

fn mixture() -> ToyDistribution {
    let c = 1.5;
    ToyDistribution::gauss_mixture(
        vec![vec![c, c], vec![-c, c], vec![c, -c], vec![-c, -c]],
        0.3,
    )
}

fn teacher_spec() -> MlpSpec {
    MlpSpec::new(2, vec![64, 64])
}

fn student_spec() -> MlpSpec {
    MlpSpec::new(2, vec![32, 32])
}

fn rk45() -> SolverSpec {
    SolverSpec::rk45(1e-3)
}

fn train_config(iters: u64, seed: u64) -> TrainConfig {
    TrainConfig {
        iters,
        batch_size: 256,
        lr: 1e-3,
        ema_ratio: 0.999,
        seed,
        log_every: 0,
    }
}

fn straightness_of(field: &VelocityField) -> f64 {
    straightness(field, 256, 100, 3).unwrap()
}

impl Fixture {
    fn sw2(&self, field: &VelocityField, solver: &SolverSpec) -> f64 {
        let samples = solver.sample(field, &self.eval_noise).unwrap();
        sliced_w2(&samples, &self.reference, PROJECTIONS, 5).unwrap()
    }

    fn reflow(
        &self,
        pairs: &PairDataset,
        schedule: Option<BetaSchedule>,
        iters: u64,
        seed: u64,
    ) -> VelocityField {
        let init = VelocityField::new(student_spec(), 50 + seed).unwrap();
        let cfg = train_config(iters, 100 + seed);
        train_flow(
            &cfg,
            init,
            TrainSource::Pairs { pairs, schedule },
            |_, _| Ok(()),
        )
        .unwrap()
        .field
    }
}

fn fixture() -> &'static Fixture {
    static FX: OnceLock<Fixture> = OnceLock::new();
    FX.get_or_init(|| {
        let t0 = Instant::now();
        let data = mixture();
        let reference = sample_data(&data, EVAL_SAMPLES, 99).unwrap();
        let eval_noise = sample_noise(2, EVAL_SAMPLES, 777);
        let teacher = train_flow(
            &train_config(4000, 0),
            VelocityField::new(teacher_spec(), 1).unwrap(),
            TrainSource::Data(&data),
            |_, _| Ok(()),
        )
        .unwrap()
        .field;
        let pairs = generate_pairs(&teacher, 2000, &rk45(), 11).unwrap();

        let iters = 8000;
        let schedule = BetaSchedule::Linear { horizon: 6000 };
        let mut log = Vec::new();
        let cfg = TrainConfig {
            log_every: 500,
            ..train_config(iters, 100)
        };
        let two_flow = train_flow(
            &cfg,
            VelocityField::new(student_spec(), 50).unwrap(),
            TrainSource::Pairs {
                pairs: &pairs,
                schedule: Some(schedule),
            },
            |k, f| {
                log.push((k, straightness_of(f)));
                Ok(())
            },
        )
        .unwrap()
        .field;
        eprintln!("  [fixture ready in {:.1}s]", t0.elapsed().as_secs_f64());
        Fixture {
            reference,
            eval_noise,
            teacher,
            pairs,
            two_flow,
            two_flow_log: log,
            two_flow_horizon: schedule.horizon().unwrap(),
        }
    })
}

// ---------------------------------------------------------------------------
// 1. gradient exactness

fn loss_value(field: &VelocityField, rows: &[Row]) -> f64 {
    velocity_regression(field, rows.iter().cloned())
        .unwrap()
        .loss
}

fn max_fd_rel_error(
    field: &VelocityField,
    grads: &GradTape,
    loss: impl Fn(&VelocityField) -> f64,
) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..field.param_count() {
        let mut plus = field.clone();
        plus.weights_mut()[i] += h;
        let mut minus = field.clone();
        minus.weights_mut()[i] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let a = grads.grads[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let in_dim = rng.random_range(1..=3);
        let depth = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=12)).collect();
        let activation = if case % 2 == 0 {
            Activation::Silu
        } else {
            Activation::Tanh
        };
        let spec = MlpSpec {
            in_dim,
            hidden,
            time_embed_dim: rng.random_range(1..=6),
            activation,
        };
        let field = VelocityField::new(spec, case).unwrap();
        let rows: Vec<Row> = (0..rng.random_range(1..=6))
            .map(|_| Row {
                x: (0..in_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                t: rng.random(),
                target: (0..in_dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            })
            .collect();
        let grads = velocity_regression(&field, rows.iter().cloned()).unwrap();
        worst = worst.max(max_fd_rel_error(&field, &grads, |f| loss_value(f, &rows)));
    }
    outcome(
        worst < 1e-5,
        format!("max relative error {worst:.2e} over 20 cases (< 1e-5)"),
    )
}

// ---------------------------------------------------------------------------
// 2. Gaussian-to-Gaussian oracle

fn criterion_2() -> Outcome {
    let data = ToyDistribution::std_normal(1);
    let field = train_flow(
        &train_config(5000, 0),
        VelocityField::new(MlpSpec::new(1, vec![64, 64]), 1).unwrap(),
        TrainSource::Data(&data),
        |_, _| Ok(()),
    )
    .unwrap()
    .field;
    let mut se = 0.0;
    for i in 0..21 {
        for j in 0..21 {
            let x = -2.0 + 4.0 * i as f64 / 20.0;
            let t = j as f64 / 20.0;
            let exact = (2.0 * t - 1.0) / (2.0 * t * t - 2.0 * t + 1.0) * x;
            se += (field.forward(&[x], t).unwrap()[0] - exact).powi(2);
        }
    }
    let rmse = (se / 441.0).sqrt();
    outcome(
        rmse < 0.05,
        format!("RMSE {rmse:.4} on 21x21 grid, x in [-2, 2], 5000 iters (< 0.05)"),
    )
}

// ---------------------------------------------------------------------------
// 3. solvers

fn slope(ns: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn criterion_3() -> Outcome {
    let linear = FnField::new(1, |x: &[f64], _t, out: &mut [f64]| out[0] = x[0]);
    let exact = (-1.0f64).exp();
    let ns = [10, 100, 1000];
    let euler: Vec<f64> = ns
        .iter()
        .map(|&n| (euler_solve(&linear, &[1.0], n).unwrap().endpoint()[0] - exact).abs())
        .collect();
    let heun: Vec<f64> = ns
        .iter()
        .map(|&n| (heun_solve(&linear, &[1.0], n).unwrap().endpoint()[0] - exact).abs())
        .collect();
    let (se, sh) = (slope(&ns, &euler), slope(&ns, &heun));
    let rk = (rk45_solve(&linear, &[1.0], 1e-6, 1e-6, 100_000)
        .unwrap()
        .endpoint()[0]
        - exact)
        .abs();

    let c = [0.37, -1.25];
    let constant = VelocityField::constant(MlpSpec::new(2, vec![8]), &c).unwrap();
    let mut worst_const: f64 = 0.0;
    let solvers = [
        SolverSpec::Euler { steps: 1 },
        SolverSpec::Euler { steps: 37 },
        SolverSpec::Heun { steps: 1 },
        SolverSpec::Heun { steps: 25 },
        SolverSpec::rk45(1e-3),
        SolverSpec::rk45(1e-8),
        SolverSpec::TwoStep { t_mid: 0.3 },
    ];
    for x1 in sample_noise(2, 50, 4) {
        for s in &solvers {
            let end = s.solve(&constant, &x1).unwrap();
            for j in 0..2 {
                worst_const = worst_const.max((end.endpoint()[j] - (x1[j] - c[j])).abs());
            }
        }
    }
    let pass =
        (se + 1.0).abs() <= 0.2 && (sh + 2.0).abs() <= 0.2 && rk < 1e-6 && worst_const < 1e-12;
    outcome(
        pass,
        format!(
            "euler slope {se:.3}, heun slope {sh:.3}, rk45(1e-6) error {rk:.2e}, constant-field max error {worst_const:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. straightening

fn criterion_4() -> Outcome {
    let fx = fixture();
    let s_teacher = straightness_of(&fx.teacher);
    let s_student = straightness_of(&fx.two_flow);
    let after: Vec<(u64, f64)> = fx
        .two_flow_log
        .iter()
        .copied()
        .filter(|&(k, _)| k >= fx.two_flow_horizon)
        .collect();
    let monotone = after.windows(2).all(|w| w[1].1 <= w[0].1);
    let trace: Vec<String> = after.iter().map(|(k, s)| format!("{k}:{s:.5}")).collect();
    outcome(
        s_student < s_teacher && after.len() >= 3 && monotone,
        format!(
            "S(teacher) {s_teacher:.4}, S(annealed student) {s_student:.4}; after beta = 0: {}",
            trace.join(" ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. beta = 0 reduction

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let field = VelocityField::new(MlpSpec::new(3, vec![16, 16]), 9).unwrap();
    let mut identical = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=16);
        let gauss = |rng: &mut ChaCha8Rng| {
            (0..3)
                .map(|_| rng.random_range(-3.0..3.0))
                .collect::<Vec<f64>>()
        };
        let batch = TrainBatch {
            x0: (0..n).map(|_| gauss(&mut rng)).collect(),
            x1: (0..n).map(|_| gauss(&mut rng)).collect(),
            t: (0..n).map(|_| rng.random()).collect(),
        };
        let fresh: Vec<Vec<f64>> = (0..n).map(|_| gauss(&mut rng)).collect();
        let a = annealing_reflow_loss(&field, &batch, &fresh, 0.0).unwrap();
        let b = reflow_loss(&field, &batch).unwrap();
        let same = a.loss.to_bits() == b.loss.to_bits()
            && a.grads
                .iter()
                .zip(&b.grads)
                .all(|(x, y)| x.to_bits() == y.to_bits());
        identical += same as usize;
    }
    outcome(
        identical == 100,
        format!("{identical}/100 batches bitwise identical (loss and gradients)"),
    )
}

// ---------------------------------------------------------------------------
// 6. fixed-beta marginal preservation

fn criterion_6() -> Outcome {
    let fx = fixture();
    let mut rk = [Vec::new(), Vec::new(), Vec::new()];
    let mut one = [Vec::new(), Vec::new(), Vec::new()];
    for seed in SEEDS {
        for (i, beta0) in [0.0, 0.3, 0.5].into_iter().enumerate() {
            let f = fx.reflow(
                &fx.pairs,
                Some(BetaSchedule::Constant { beta0 }),
                3000,
                seed,
            );
            rk[i].push(fx.sw2(&f, &rk45()));
            one[i].push(fx.sw2(&f, &SolverSpec::Euler { steps: 1 }));
        }
    }
    let (r0, r3) = (mean(&rk[0]), mean(&rk[1]));
    let gap = (r0 - r3).abs() / r0.min(r3);
    let (o0, o5) = (mean(&one[0]), mean(&one[2]));
    outcome(
        gap <= 0.25 && o5 > o0,
        format!(
            "rk45 sw2 beta=0 {} beta=0.3 {} (relative gap {:.1}% <= 25%); one-step sw2 beta=0 {o0:.4} < beta=0.5 {o5:.4}",
            fmt(&rk[0]),
            fmt(&rk[1]),
            100.0 * gap
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. annealing vs cold reflow

fn criterion_7() -> Outcome {
    let fx = fixture();
    let iters = 3000;
    let (mut lin, mut cold) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        lin.push(fx.sw2(
            &fx.reflow(&fx.pairs, Some(default_schedule(iters)), iters, seed),
            &rk45(),
        ));
        cold.push(fx.sw2(&fx.reflow(&fx.pairs, None, iters, seed), &rk45()));
    }
    let (a, b) = (mean(&lin), mean(&cold));
    outcome(
        a <= b,
        format!(
            "rk45 sw2 linear anneal {} mean {a:.4} vs cold {} mean {b:.4}",
            fmt(&lin),
            fmt(&cold)
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. involution augmentation

fn criterion_8() -> Outcome {
    let fx = fixture();
    let r = Involution::reflection(2, 0);
    let budget = 64;
    let iters = 6000;
    let full = generate_pairs(&fx.teacher, budget, &rk45(), 21).unwrap();
    let half = PairDataset::new(
        2,
        full.pairs[..budget / 2].to_vec(),
        full.provenance.clone(),
    )
    .unwrap();
    let augmented = augment_pairs(&half, &r).unwrap();
    let norms_exact = augmented.pairs[budget / 2..]
        .iter()
        .zip(&half.pairs)
        .all(|(a, p)| {
            let d =
                |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).powi(2)).sum::<f64>();
            d(&a.x1, &a.x0).to_bits() == d(&p.x1, &p.x0).to_bits()
        });
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for seed in SEEDS {
        with.push(fx.sw2(
            &fx.reflow(&augmented, Some(default_schedule(iters)), iters, seed),
            &rk45(),
        ));
        without.push(fx.sw2(
            &fx.reflow(&full, Some(default_schedule(iters)), iters, seed),
            &rk45(),
        ));
    }
    let (a, b) = (mean(&with), mean(&without));
    outcome(
        a <= b && norms_exact,
        format!(
            "rk45 sw2 with {} teacher pairs + flips {} mean {a:.4} vs {} teacher pairs {} mean {b:.4}; norms exact: {norms_exact}",
            budget / 2,
            fmt(&with),
            budget,
            fmt(&without)
        ),
    )
}

// ---------------------------------------------------------------------------
// 9 and 10. flow-guided distillation

struct DistillRuns {
    with: Vec<f64>,
    naive: Vec<f64>,
}

fn distill_runs() -> &'static DistillRuns {
    static RUNS: OnceLock<DistillRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let fx = fixture();
        let dpairs = generate_pairs(&fx.two_flow, 128, &rk45(), 12).unwrap();
        let one = SolverSpec::Euler { steps: 1 };
        let (mut with, mut naive) = (Vec::new(), Vec::new());
        for seed in SEEDS {
            let cfg = DistillConfig {
                iters: 4000,
                batch_size: 256,
                lr: 1e-3,
                seed: 200 + seed,
                ..Default::default()
            };
            with.push(
                fx.sw2(
                    &flow_guided_distill(&fx.two_flow, &dpairs, &cfg)
                        .unwrap()
                        .field,
                    &one,
                ),
            );
            let cfg = DistillConfig {
                use_two_step: false,
                ..cfg
            };
            naive.push(
                fx.sw2(
                    &flow_guided_distill(&fx.two_flow, &dpairs, &cfg)
                        .unwrap()
                        .field,
                    &one,
                ),
            );
        }
        DistillRuns { with, naive }
    })
}

/// Largest |analytic - finite difference| when only the live (non-stop-gradient) path is perturbed.
fn stop_gradient_gap() -> f64 {
    let student = VelocityField::new(MlpSpec::new(2, vec![6]), 3).unwrap();
    let frozen = VelocityField::new(MlpSpec::new(2, vec![6]), 4).unwrap();
    let x1s = sample_noise(2, 4, 8);
    let ts = [0.2, 0.45, 0.7, 0.9];
    let v = TwoStepVariant::StudentFirstSg;
    let analytic = two_step_loss(&student, &frozen, &x1s, &ts, v, 0.01).unwrap();
    let h = 1e-5;
    let mut gap: f64 = 0.0;
    for i in 0..student.param_count() {
        let mut plus = student.clone();
        plus.weights_mut()[i] += h;
        let mut minus = student.clone();
        minus.weights_mut()[i] -= h;
        let lp = two_step_loss_detached(&plus, &student, &frozen, &x1s, &ts, v, 0.01)
            .unwrap()
            .loss;
        let lm = two_step_loss_detached(&minus, &student, &frozen, &x1s, &ts, v, 0.01)
            .unwrap()
            .loss;
        gap = gap.max((analytic.grads[i] - (lp - lm) / (2.0 * h)).abs());
    }
    gap
}

fn criterion_9() -> Outcome {
    let runs = distill_runs();
    let (a, b) = (mean(&runs.with), mean(&runs.naive));
    let gap = stop_gradient_gap();
    outcome(
        a <= b && gap < 1e-8,
        format!(
            "one-step sw2 with two-step term {} mean {a:.4} vs naive {} mean {b:.4}; sg-path gradient residual {gap:.1e}",
            fmt(&runs.with),
            fmt(&runs.naive)
        ),
    )
}

fn criterion_10() -> Outcome {
    let fx = fixture();
    let distilled = distill_runs().with[0];
    let two_flow = fx.sw2(&fx.two_flow, &SolverSpec::Euler { steps: 1 });
    outcome(
        distilled < two_flow,
        format!("one-step sw2 distilled {distilled:.4} < 2-flow euler-1 {two_flow:.4}"),
    )
}

// ---------------------------------------------------------------------------
// 11. accounting

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts_ok = 0;
    for _ in 0..10 {
        let in_dim = rng.random_range(1..=5);
        let hidden: Vec<usize> = (0..rng.random_range(0..=4))
            .map(|_| rng.random_range(1..=40))
            .collect();
        let spec = MlpSpec {
            in_dim,
            hidden: hidden.clone(),
            time_embed_dim: rng.random_range(0..=8),
            activation: Activation::Silu,
        };
        let field = VelocityField::new(spec.clone(), 0).unwrap();
        let mut widths = vec![in_dim + spec.time_embed_dim];
        widths.extend(&hidden);
        widths.push(in_dim);
        let (mut params, mut macs) = (0, 0);
        for w in widths.windows(2) {
            for _out in 0..w[1] {
                for _inp in 0..w[0] {
                    params += 1;
                    macs += 1;
                }
                params += 1;
            }
        }
        let tensors: usize = field.layers().map(|l| l.weights.len() + l.bias.len()).sum();
        if count_params_macs(&spec) == (params, macs)
            && field.weights().len() == params
            && tensors == params
        {
            counts_ok += 1;
        }
    }

    let field = VelocityField::new(MlpSpec::new(2, vec![16]), 7).unwrap();
    let x1 = [0.4, -1.1];
    let mut nfe_ok = 0;
    let solvers = [
        SolverSpec::Euler { steps: 1 },
        SolverSpec::Euler { steps: 17 },
        SolverSpec::Heun { steps: 1 },
        SolverSpec::Heun { steps: 9 },
        SolverSpec::rk45(1e-3),
        SolverSpec::rk45(1e-7),
        SolverSpec::TwoStep { t_mid: 0.5 },
    ];
    for s in &solvers {
        let counter = Counting::new(&field);
        let tr = s.solve(&counter, &x1).unwrap();
        nfe_ok += (tr.nfe == counter.calls()) as usize;
    }
    let counter = Counting::new(&field);
    two_step_euler(&counter, &x1, 0.4).unwrap();
    let two_step_direct = counter.calls() == 2;
    outcome(
        counts_ok == 10 && nfe_ok == solvers.len() && two_step_direct,
        format!(
            "{counts_ok}/10 specs match enumeration; {nfe_ok}/{} solver NFE counters exact",
            solvers.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 12. reproducibility of the full pipeline

fn criterion_12() -> Outcome {
    let text = r#"{
        "seed": 3,
        "data": {"distribution": "gauss_mixture", "dim": 2,
                 "params": {"centers": [[-1.5, 0.0], [1.5, 0.0]], "weights": [0.5, 0.5], "sigma": 0.3}},
        "teacher": {"in_dim": 2, "hidden": [32, 32]},
        "student": {"in_dim": 2, "hidden": [16, 16]},
        "teacher_iters": 600, "iters": 500, "batch_size": 64,
        "pairs": {"count": 300},
        "augment": {"enabled": true},
        "distill": {"pairs": 100, "iters": 300},
        "eval": {"n_samples": 500}
    }"#;
    let cfg = PipelineConfig::from_json(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&cfg, 3, &a).unwrap();
    run_pipeline(&cfg, 3, &b).unwrap();
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let identical = names
        .iter()
        .filter(|n| fs::read(a.join(n)).unwrap() == fs::read(b.join(n)).unwrap())
        .count();
    let ckpts = names.iter().filter(|n| n.ends_with(".ckpt")).count();
    let csvs = names.iter().filter(|n| n.ends_with(".csv")).count();
    outcome(
        identical == names.len() && ckpts == 4 && csvs == 1,
        format!(
            "{identical}/{} files bitwise identical ({ckpts} checkpoints, {csvs} CSV)",
            names.len()
        ),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(usize, fn() -> Outcome); 12] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
        (12, criterion_12),
    ];
    let mut failed = Vec::new();
    for (n, check) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n}: {verdict} - {} ({:.1}s)",
            o.detail,
            t0.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
