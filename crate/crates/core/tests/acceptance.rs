//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `XFNF_ACCEPTANCE=4,5` restricts the run to the listed criteria.
//! Failing criteria are reported, not raised; `XFNF_ACCEPTANCE_STRICT=1` makes them exit nonzero.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xfnf_core::fields::{
    check_gradients, size_to_budget, Arch, ArchConfig, FieldModel, HashGridConfig, KPlanesConfig, SirenConfig,
};
use xfnf_core::io::{Channel, Checkpoint, GridSignal};
use xfnf_core::metrics::{curl, psnr, psnr_with_peak, ssim_2d};
use xfnf_core::synth::{
    generate_sequence, rotate_coords, schwefel, schwefel_grad, warp_coords, ToySequence, ToySequenceConfig,
    Transform,
};
use xfnf_core::transfer::{fit_new, pretrain_joint, PreparedSignal, SharedTrainer, TrainConfig, TrainRun};
use xfnf_core::{DenseArray, Error, Result};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn frames(seq: &ToySequence, arch: Arch) -> Result<Vec<PreparedSignal>> {
    let g = seq.to_grid()?;
    (0..seq.config.timesteps)
        .map(|t| PreparedSignal::new(&g.select(0, t)?, arch))
        .collect()
}

/// SIREN sized to `ratio` against one frame of `n` points.
fn siren_at(in_dim: usize, n: usize, ratio: f64) -> Result<ArchConfig> {
    size_to_budget(&Arch::Siren.default_config(), in_dim, 1, n, ratio)
}

fn fmt_iters(v: Option<usize>) -> String {
    v.map_or("none".into(), |i| i.to_string())
}

// ---------------------------------------------------------------------------
// Criteria 1 and 3: transfer speedup and early PSNR on the Warp sequence.

const C1_GRID: usize = 128;
const C1_SEEDS: u64 = 5;
const C1_ITERS: usize = 4000;
const C1_PRETRAIN: usize = 1000;
const C1_EVAL_EVERY: usize = 2;
const C1_THRESHOLD: f64 = 40.0;

struct TransferRuns {
    random: Vec<TrainRun>,
    t0: Vec<TrainRun>,
    joint: Vec<TrainRun>,
}

fn transfer_runs() -> Result<TransferRuns> {
    let seq = generate_sequence(&ToySequenceConfig::new(Transform::Warp).with_grid(C1_GRID, C1_GRID))?;
    let sig = frames(&seq, Arch::Siren)?;
    let arch = siren_at(2, C1_GRID * C1_GRID, 2.0)?;
    let fit = TrainConfig {
        lr: 1e-4,
        iters: C1_ITERS,
        batch: 16384,
        eval_every: C1_EVAL_EVERY,
        thresholds: vec![C1_THRESHOLD],
        stop_at_psnr: Some(C1_THRESHOLD),
        // The early-PSNR comparison needs the trace up to 10% of the schedule.
        min_iters: C1_ITERS / 10,
        ..TrainConfig::default()
    };
    let pre = TrainConfig {
        iters: C1_PRETRAIN,
        eval_every: C1_PRETRAIN,
        stop_at_psnr: None,
        min_iters: 0,
        ..fit.clone()
    };
    let t = Instant::now();
    let joint_pre = pretrain_joint(&sig[..5], &arch, &pre)?;
    let t0_pre = pretrain_joint(&sig[..1], &arch, &pre)?;
    println!(
        "  pretraining: joint {:.2} dB, t0 {:.2} dB ({:.0}s)",
        joint_pre.final_eval().map_or(f64::NAN, |e| e.psnr),
        t0_pre.final_eval().map_or(f64::NAN, |e| e.psnr),
        t.elapsed().as_secs_f64()
    );
    let mut out = TransferRuns {
        random: Vec::new(),
        t0: Vec::new(),
        joint: Vec::new(),
    };
    for seed in 0..C1_SEEDS {
        let cfg = TrainConfig { seed, ..fit.clone() };
        let t = Instant::now();
        out.random.push(fit_new(&sig[5], None, &arch, &cfg)?);
        let t0_cfg = TrainConfig { min_iters: 0, ..cfg.clone() };
        out.t0.push(fit_new(&sig[5], Some(&t0_pre.encoder), &arch, &t0_cfg)?);
        out.joint.push(fit_new(&sig[5], Some(&joint_pre.encoder), &arch, &cfg)?);
        println!(
            "  seed {seed}: iterations to {C1_THRESHOLD} dB random {} t0 {} joint {} ({:.0}s)",
            fmt_iters(out.random[seed as usize].crossing(C1_THRESHOLD)),
            fmt_iters(out.t0[seed as usize].crossing(C1_THRESHOLD)),
            fmt_iters(out.joint[seed as usize].crossing(C1_THRESHOLD)),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(out)
}

fn criterion_1(r: &TransferRuns) -> Outcome {
    let cross = |runs: &[TrainRun]| -> Vec<f64> {
        runs.iter()
            .map(|r| r.crossing(C1_THRESHOLD).map_or(f64::INFINITY, |i| i as f64))
            .collect()
    };
    let (random, t0, joint) = (cross(&r.random), cross(&r.t0), cross(&r.joint));
    let ordered = (0..random.len()).filter(|&s| joint[s] < t0[s] && t0[s] < random[s]).count();
    let speedup = mean(&random) / mean(&joint);
    outcome(
        ordered >= 4 && speedup >= 5.0,
        format!(
            "joint < t0 < random in {ordered}/{} seeds (need 4); mean iterations random {:.1} t0 {:.1} joint {:.1}; speedup {speedup:.2}x (need 5x)",
            random.len(),
            mean(&random),
            mean(&t0),
            mean(&joint)
        ),
    )
}

fn criterion_3(r: &TransferRuns) -> Outcome {
    let at = C1_ITERS / 10;
    let early = |runs: &[TrainRun]| -> Vec<f64> { runs.iter().map(|r| r.psnr_at(at).unwrap_or(f64::NAN)).collect() };
    let (random, joint) = (early(&r.random), early(&r.joint));
    let gain = mean(&joint) - mean(&random);
    outcome(
        gain >= 3.0,
        format!(
            "PSNR at iteration {at}: joint {:.2} dB, random {:.2} dB, gain {gain:+.2} dB (need +3)",
            mean(&joint),
            mean(&random)
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 2: gradient fidelity after training.

const C2_GRID: usize = 64;
const C2_SEEDS: u64 = 3;
const C2_ITERS: usize = 1000;

fn c2_config(seed: u64, lr: f64) -> TrainConfig {
    TrainConfig {
        lr,
        iters: C2_ITERS,
        batch: C2_GRID * C2_GRID,
        eval_every: C2_ITERS,
        seed,
        ..TrainConfig::default()
    }
}

fn final_grad_rmse(run: &TrainRun, signal: &PreparedSignal, truth: &[f64]) -> Result<f64> {
    signal.gradient_rmse(&run.model(0), truth)
}

fn criterion_2() -> Result<Outcome> {
    let n = C2_GRID * C2_GRID;
    let siren = siren_at(2, n, 2.0)?;
    let mut pass = true;
    let mut parts = Vec::new();
    let mut warp_siren = f64::NAN;
    let mut warp_seq = None;
    for tr in Transform::ALL {
        let seq = generate_sequence(&ToySequenceConfig::new(tr).with_grid(C2_GRID, C2_GRID))?;
        let sig = frames(&seq, Arch::Siren)?;
        let truth = seq.grads(5);
        let pre = pretrain_joint(&sig[..5], &siren, &c2_config(0, 1e-4))?;
        let (mut random, mut joint) = (Vec::new(), Vec::new());
        for seed in 0..C2_SEEDS {
            let cfg = c2_config(seed, 1e-4);
            random.push(final_grad_rmse(&fit_new(&sig[5], None, &siren, &cfg)?, &sig[5], truth)?);
            joint.push(final_grad_rmse(&fit_new(&sig[5], Some(&pre.encoder), &siren, &cfg)?, &sig[5], truth)?);
        }
        let (r, j) = (mean(&random), mean(&joint));
        pass &= j <= r;
        parts.push(format!("{tr} joint {j:.3} vs random {r:.3}"));
        if tr == Transform::Warp {
            warp_siren = r;
            warp_seq = Some(seq);
        }
    }
    let seq = warp_seq.expect("warp is one of the transforms");
    let truth = seq.grads(5);
    for (arch, lr) in [(Arch::Hashgrid, 1e-2), (Arch::Kplanes, 1e-2)] {
        let sig = frames(&seq, arch)?;
        let cfg = size_to_budget(&arch.default_config(), 2, 1, n, 2.0)?;
        let mut rmse = Vec::new();
        for seed in 0..C2_SEEDS {
            rmse.push(final_grad_rmse(&fit_new(&sig[5], None, &cfg, &c2_config(seed, lr))?, &sig[5], truth)?);
        }
        let m = mean(&rmse);
        pass &= warp_siren < m;
        parts.push(format!("warp {arch} {m:.3} vs siren {warp_siren:.3}"));
    }
    Ok(outcome(pass, parts.join("; ")))
}

// ---------------------------------------------------------------------------
// Criterion 4: model gradients against central differences.

fn gradcheck_config(arch: Arch) -> ArchConfig {
    match arch {
        Arch::Siren => ArchConfig::Siren(SirenConfig {
            hidden_width: 24,
            ..SirenConfig::default()
        }),
        Arch::Hashgrid => ArchConfig::Hashgrid(HashGridConfig {
            levels: 4,
            table_size_log2: 8,
            base_resolution: 4,
            max_resolution: 32,
            mlp_width: 16,
            ..HashGridConfig::default()
        }),
        Arch::Kplanes => ArchConfig::Kplanes(KPlanesConfig {
            resolution: 12,
            feature_dim: 4,
            mlp_width: 16,
            ..KPlanesConfig::default()
        }),
    }
}

fn criterion_4() -> Result<Outcome> {
    const POINTS: usize = 6;
    const MARGIN: f64 = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pass = true;
    let mut parts = Vec::new();
    for arch in Arch::ALL {
        let cfg = gradcheck_config(arch);
        let (lo, hi) = arch.coord_range();
        let (mut worst_p, mut worst_x, mut checked) = (0.0f64, 0.0f64, 0);
        for in_dim in [2, 3] {
            for seed in 0..3 {
                let model = FieldModel::<f64>::init(cfg.clone(), in_dim, 2, seed)?;
                loop {
                    let mut pts = Vec::with_capacity(POINTS * in_dim);
                    while pts.len() < POINTS * in_dim {
                        let p: Vec<f64> = (0..in_dim).map(|_| rng.gen_range(lo..hi)).collect();
                        if cfg.cell_face_distance(&p) > MARGIN {
                            pts.extend(p);
                        }
                    }
                    let coords = DenseArray::new(vec![POINTS, in_dim], pts)?;
                    match check_gradients(&model, &coords, 1e-6) {
                        // A ReLU pre-activation lies within h of zero; redraw.
                        Err(Error::NonDifferentiable { .. }) => continue,
                        Err(e) => return Err(e),
                        Ok(r) => {
                            worst_p = worst_p.max(r.param_rel);
                            worst_x = worst_x.max(r.input_rel);
                            checked += r.params_checked;
                            break;
                        }
                    }
                }
            }
        }
        pass &= worst_p < 1e-5 && worst_x < 1e-5;
        parts.push(format!("{arch} params {worst_p:.1e} inputs {worst_x:.1e} ({checked} parameter checks)"));
    }
    Ok(outcome(pass, format!("{} (need < 1e-5)", parts.join("; "))))
}

// ---------------------------------------------------------------------------
// Criterion 5: analytic Schwefel gradients.

fn rel2(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).hypot(a.1 - b.1)) / b.0.hypot(b.1).max(1e-300)
}

/// Gradient of the perturbation for local transforms, from its definition.
fn local_perturbation_grad(cfg: &ToySequenceConfig, t: usize, x1: f64, x2: f64) -> (f64, f64) {
    let s = &cfg.schedules;
    match cfg.transform {
        Transform::Gaussian => {
            let g = &cfg.gaussian;
            let c1 = s.c1.at(t, cfg.timesteps);
            let e = g.amplitude * (-((x1 - c1).powi(2) + (x2 - g.c2).powi(2)) / g.sigma).exp();
            (-2.0 * (x1 - c1) / g.sigma * e, -2.0 * (x2 - g.c2) / g.sigma * e)
        }
        Transform::Wave => {
            let w = &cfg.wave;
            let (dx, dy) = (x1 - w.center.0, x2 - w.center.1);
            let win = (-(dx * dx + dy * dy) / w.sigma).exp();
            let arg = 0.05 * (x1 + x2) + s.phase.at(t, cfg.timesteps);
            let d = |dk: f64| w.amplitude * (-2.0 * dk / w.sigma * win * arg.sin() + 0.05 * win * arg.cos());
            (d(dx), d(dy))
        }
        _ => (0.0, 0.0),
    }
}

fn chain_rule_grad(cfg: &ToySequenceConfig, t: usize, x1: f64, x2: f64) -> (f64, f64) {
    let s = &cfg.schedules;
    let tt = cfg.timesteps;
    // Jacobian rows d(y1, y2)/d(x1, x2) of the coordinate map; gradient = J^T grad f(y).
    let (y, j) = match cfg.transform {
        Transform::Rotation => {
            let th = s.theta.at(t, tt);
            (rotate_coords(x1, x2, th), [[th.cos(), -th.sin()], [th.sin(), th.cos()]])
        }
        Transform::Warp => {
            let a = s.alpha.at(t, tt);
            (
                warp_coords(x1, x2, a),
                [[1.0, a * 0.01 * (0.01 * x2).cos()], [a * 0.01 * (0.01 * x1).cos(), 1.0]],
            )
        }
        _ => ((x1, x2), [[1.0, 0.0], [0.0, 1.0]]),
    };
    let (g1, g2) = schwefel_grad(y.0, y.1);
    let (p1, p2) = local_perturbation_grad(cfg, t, x1, x2);
    (j[0][0] * g1 + j[1][0] * g2 + p1, j[0][1] * g1 + j[1][1] * g2 + p2)
}

fn criterion_5() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_fd = 0.0f64;
    for _ in 0..10_000 {
        let (x, y) = (rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        let h = 1e-5;
        let fd = (
            (schwefel(x + h, y) - schwefel(x - h, y)) / (2.0 * h),
            (schwefel(x, y + h) - schwefel(x, y - h)) / (2.0 * h),
        );
        worst_fd = worst_fd.max(rel2(schwefel_grad(x, y), fd));
    }
    let mut worst_chain = 0.0f64;
    for tr in Transform::ALL {
        let cfg = ToySequenceConfig::new(tr).with_grid(64, 64);
        let seq = generate_sequence(&cfg)?;
        let xs = cfg.axis_coords(64);
        for t in 0..cfg.timesteps {
            let g = seq.grads(t);
            for (i, &x1) in xs.iter().enumerate() {
                for (j, &x2) in xs.iter().enumerate() {
                    let k = (i * 64 + j) * 2;
                    worst_chain = worst_chain.max(rel2((g[k], g[k + 1]), chain_rule_grad(&cfg, t, x1, x2)));
                }
            }
        }
    }
    Ok(outcome(
        worst_fd < 1e-5 && worst_chain < 1e-12,
        format!("max relative error vs differences {worst_fd:.1e} (need 1e-5); chain rule {worst_chain:.1e} over 4 transforms"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 6: vector calculus identities at 64^3.

fn vector_cube(n: usize, h: f64, f: impl Fn(f64, f64, f64) -> [f64; 3]) -> Result<GridSignal> {
    let mut ch = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = f(i as f64 * h, j as f64 * h, k as f64 * h);
                for c in 0..3 {
                    ch[c].push(v[c]);
                }
            }
        }
    }
    let [vx, vy, vz] = ch;
    GridSignal::new(
        vec![n; 3],
        vec!["x1".into(), "x2".into(), "x3".into()],
        vec![h; 3],
        vec![
            Channel { name: "vx".into(), data: vx },
            Channel { name: "vy".into(), data: vy },
            Channel { name: "vz".into(), data: vz },
        ],
    )
}

fn rms(v: &GridSignal) -> f64 {
    let n = v.n_points() as f64;
    (v.variables().iter().flat_map(|c| c.data.iter()).map(|x| x * x).sum::<f64>() / n).sqrt()
}

fn criterion_6() -> Result<Outcome> {
    const N: usize = 64;
    let h = 1.0 / (N - 1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        // phi = sum_k a_k sin(b_k . x + c_k)
        let terms: Vec<(f64, [f64; 3], f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    [rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5)],
                    rng.gen_range(0.0..6.3),
                )
            })
            .collect();
        let grad = vector_cube(N, h, |x, y, z| {
            let mut g = [0.0; 3];
            for (a, b, c) in &terms {
                let d = a * (b[0] * x + b[1] * y + b[2] * z + c).cos();
                for k in 0..3 {
                    g[k] += d * b[k];
                }
            }
            g
        })?;
        worst = worst.max(rms(&curl(&grad)?) / rms(&grad));
    }
    let rot = curl(&vector_cube(N, h, |x, y, _| [-y, x, 0.0])?)?;
    let mut rot_err = 0.0f64;
    for i in 2..N - 2 {
        for j in 2..N - 2 {
            for k in 2..N - 2 {
                let p = (i * N + j) * N + k;
                for (c, expect) in [0.0, 0.0, 2.0].iter().enumerate() {
                    rot_err = rot_err.max((rot.variables()[c].data[p] - expect).abs());
                }
            }
        }
    }
    Ok(outcome(
        worst < 1e-3 && rot_err < 1e-10,
        format!("normalized curl(grad phi) RMSE {worst:.1e} (need 1e-3); rigid rotation max error {rot_err:.1e} (need 1e-10)"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 7: metric oracles.

/// Direct SSIM: explicit 2-D Gaussian window evaluated at every valid position.
fn reference_ssim(x: &[f64], y: &[f64], rows: usize, cols: usize, peak: f64) -> f64 {
    let k = 11usize;
    let mut w = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            w[i * k + j] = (-(di * di + dj * dj) / 4.5).exp();
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for r in 0..=rows - k {
        for c in 0..=cols - k {
            let at = |v: &[f64], i: usize, j: usize| v[(r + i) * cols + c + j];
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    mx += w[i * k + j] * at(x, i, j);
                    my += w[i * k + j] * at(y, i, j);
                }
            }
            let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
            for i in 0..k {
                for j in 0..k {
                    let (a, b) = (at(x, i, j) - mx, at(y, i, j) - my);
                    sxx += w[i * k + j] * a * a;
                    syy += w[i * k + j] * b * b;
                    sxy += w[i * k + j] * a * b;
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

fn criterion_7() -> Result<Outcome> {
    let truth: Vec<f64> = (0..40).map(|i| -1.0 + 2.0 * i as f64 / 39.0).collect();
    let shifted: Vec<f64> = truth.iter().map(|t| t + 0.1).collect();
    let constant_err = (psnr(&shifted, &truth)? - 10.0 * (4.0f64 / 0.01).log10()).abs();
    let noise: Vec<f64> = (0..40).map(|i| 0.05 * (i as f64 * 1.7).sin()).collect();
    let p1: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t + e).collect();
    let p2: Vec<f64> = truth.iter().zip(&noise).map(|(t, e)| t + e / 2.0).collect();
    let halving_err = (psnr_with_peak(&p2, &truth, 2.0)? - psnr_with_peak(&p1, &truth, 2.0)? - 20.0 * 2f64.log10()).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.gen_range(-0.5..0.5)).collect();
        let peak = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - a.iter().cloned().fold(f64::INFINITY, f64::min);
        worst = worst.max((ssim_2d(&b, &a, 32, 32, peak)? - reference_ssim(&b, &a, 32, 32, peak)).abs());
    }
    Ok(outcome(
        constant_err < 1e-9 && halving_err < 1e-9 && worst < 1e-6,
        format!("constant-error case off by {constant_err:.1e}; halving gain off by {halving_err:.1e} (need 1e-9); SSIM vs reference {worst:.1e} over 50 pairs (need 1e-6)"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 8: protocol invariants.

fn small_signal(seed: u64, arch: Arch) -> Result<PreparedSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..12 * 10).map(|i| (i as f64 * 0.3).sin() + rng.gen_range(-0.1..0.1)).collect();
    PreparedSignal::new(&GridSignal::scalar(vec![12, 10], "f", data)?, arch)
}

fn small_arch(arch: Arch) -> ArchConfig {
    match arch {
        Arch::Siren => ArchConfig::Siren(SirenConfig {
            hidden_width: 16,
            hidden_layers: 2,
            ..SirenConfig::default()
        }),
        Arch::Hashgrid => ArchConfig::Hashgrid(HashGridConfig {
            levels: 3,
            table_size_log2: 6,
            max_resolution: 16,
            mlp_width: 8,
            ..HashGridConfig::default()
        }),
        Arch::Kplanes => ArchConfig::Kplanes(KPlanesConfig {
            resolution: 8,
            feature_dim: 4,
            mlp_width: 8,
            ..KPlanesConfig::default()
        }),
    }
}

fn criterion_8() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut m1, mut resume, mut partition) = (0, 0, 0);
    let cases = 12;
    for case in 0..cases {
        let arch = Arch::ALL[case % 3];
        let cfg = small_arch(arch);
        let sig = small_signal(rng.gen(), arch)?;
        let train = TrainConfig {
            lr: 1e-3,
            iters: 20,
            batch: 32,
            eval_every: 3,
            seed: rng.gen(),
            ..TrainConfig::default()
        };

        let a = pretrain_joint(std::slice::from_ref(&sig), &cfg, &train)?;
        let b = fit_new(&sig, None, &cfg, &train)?;
        let same_bits = |x: &[(usize, f64)], y: &[(usize, f64)]| {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.0 == q.0 && p.1.to_bits() == q.1.to_bits())
        };
        if same_bits(&a.loss_trace, &b.loss_trace) && same_bits(&a.psnr_trace(), &b.psnr_trace()) && a.encoder == b.encoder {
            m1 += 1;
        }

        let split = rng.gen_range(1..train.iters);
        let signals = std::slice::from_ref(&sig);
        let mut first = SharedTrainer::new(cfg.clone(), 2, 1, 1, None, train.clone())?;
        let mut run = first.new_run();
        first.train_until(signals, split, &mut run)?;
        let bytes = first.to_checkpoint()?.to_bytes();
        let mut second = SharedTrainer::from_checkpoint(&Checkpoint::from_bytes(&bytes)?)?;
        second.train_until(signals, train.iters, &mut run)?;
        if same_bits(&run.loss_trace, &a.loss_trace) && run.encoder == a.encoder && run.decoders == a.decoders {
            resume += 1;
        }

        let in_dim = 2 + case % 4;
        let m = FieldModel::<f32>::init(cfg.clone(), in_dim, 1 + case % 3, rng.gen())?;
        let (enc, dec) = m.split();
        let disjoint = enc.names().all(|n| dec.names().all(|d| d != n));
        if disjoint && enc.count() + dec.count() == cfg.param_count(in_dim, 1 + case % 3) {
            partition += 1;
        }
    }
    Ok(outcome(
        m1 == cases && resume == cases && partition == cases,
        format!("M=1 pretrain equals random fit {m1}/{cases}; resume determinism {resume}/{cases}; partition totality {partition}/{cases}"),
    ))
}

// ---------------------------------------------------------------------------
// Criterion 9: two simulation instances with the instance index as a coordinate.

const C9_SEEDS: u64 = 5;
const C9_THRESHOLD: f64 = 30.0;

fn criterion_9() -> Result<Outcome> {
    let sim = |alpha_end: f64| -> Result<GridSignal> {
        let mut cfg = ToySequenceConfig::new(Transform::Warp).with_grid(64, 64).with_timesteps(4);
        cfg.schedules.alpha.end = alpha_end;
        generate_sequence(&cfg)?.to_grid()
    };
    let stacked = GridSignal::stack(&[sim(30.0)?, sim(15.0)?], "sim")?;
    let a = PreparedSignal::slice_of(&stacked, Arch::Siren, Some((0, 0)))?;
    let b = PreparedSignal::slice_of(&stacked, Arch::Siren, Some((0, 1)))?;
    let arch = siren_at(4, a.n_points(), 2.0)?;
    let fit = TrainConfig {
        iters: 4000,
        batch: 16384,
        eval_every: 5,
        thresholds: vec![C9_THRESHOLD],
        stop_at_psnr: Some(C9_THRESHOLD),
        ..TrainConfig::default()
    };
    let pre = pretrain_joint(
        std::slice::from_ref(&a),
        &arch,
        &TrainConfig {
            iters: 1000,
            eval_every: 1000,
            stop_at_psnr: None,
            ..fit.clone()
        },
    )?;
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..C9_SEEDS {
        let cfg = TrainConfig { seed, ..fit.clone() };
        let r = fit_new(&b, None, &arch, &cfg)?.crossing(C9_THRESHOLD);
        let p = fit_new(&b, Some(&pre.encoder), &arch, &cfg)?.crossing(C9_THRESHOLD);
        if p.map_or(false, |p| r.map_or(true, |r| p <= r)) {
            wins += 1;
        }
        parts.push(format!("{}/{}", fmt_iters(p), fmt_iters(r)));
    }
    Ok(outcome(
        wins >= 4,
        format!(
            "pretrained <= random iterations to {C9_THRESHOLD} dB in {wins}/{C9_SEEDS} seeds (need 4); pretrained/random per seed {}; input dims {}",
            parts.join(" "),
            b.in_dim()
        ),
    ))
}

// ---------------------------------------------------------------------------

fn report(id: usize, name: &str, result: Result<Outcome>, failures: &mut Vec<usize>, started: Instant) {
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(o) => {
            println!("criterion {id} [{name}]: {} ({secs:.0}s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            if !o.pass {
                failures.push(id);
            }
        }
        Err(e) => {
            println!("criterion {id} [{name}]: FAIL ({secs:.0}s) error: {e}");
            failures.push(id);
        }
    }
}

fn main() -> ExitCode {
    let selected: Option<Vec<usize>> = std::env::var("XFNF_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let wants = |id: usize| selected.as_ref().map_or(true, |s| s.contains(&id));
    let mut failures = Vec::new();

    type Check = fn() -> Result<Outcome>;
    let quick: [(usize, &str, Check); 5] = [
        (4, "autodiff correctness", criterion_4),
        (5, "analytic gradient oracle", criterion_5),
        (6, "vector calculus identities", criterion_6),
        (7, "metric oracles", criterion_7),
        (8, "protocol invariants", criterion_8),
    ];
    for (id, name, f) in quick {
        if wants(id) {
            let t = Instant::now();
            report(id, name, f(), &mut failures, t);
        }
    }
    if wants(2) {
        let t = Instant::now();
        report(2, "gradient fidelity ordering", criterion_2(), &mut failures, t);
    }
    if wants(9) {
        let t = Instant::now();
        report(9, "two-instance transfer", criterion_9(), &mut failures, t);
    }
    if wants(1) || wants(3) {
        let t = Instant::now();
        match transfer_runs() {
            Ok(runs) => {
                if wants(1) {
                    report(1, "transfer speedup", Ok(criterion_1(&runs)), &mut failures, t);
                }
                if wants(3) {
                    report(3, "early PSNR gain", Ok(criterion_3(&runs)), &mut failures, t);
                }
            }
            Err(e) => {
                for id in [1, 3].into_iter().filter(|&i| wants(i)) {
                    println!("criterion {id} [transfer runs]: FAIL error: {e}");
                    failures.push(id);
                }
            }
        }
    }

    if failures.is_empty() {
        println!("acceptance: all selected criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failures:?}");
        if std::env::var("XFNF_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            ExitCode::FAILURE
        } else {
            ExitCode::SUCCESS
        }
    }
}
