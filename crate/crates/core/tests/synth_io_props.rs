use std::collections::BTreeMap;

use proptest::collection::vec;
use proptest::prelude::*;
use xfnf_core::fields::{Arch, FieldModel};
use xfnf_core::io::{
    load_volume, read_trace_csv, save_volume, write_results, Checkpoint, GridSignal, RunRecord, TraceRow,
};
use xfnf_core::metrics::fd_axis;
use xfnf_core::synth::{
    generate_sequence, rotate_coords, schwefel, schwefel_grad, warp_coords, ToySequenceConfig, Transform,
};
use xfnf_core::transfer::{denormalize_outputs, normalize_outputs};

fn rel2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let num = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    num / (b.0 * b.0 + b.1 * b.1).sqrt().max(1e-300)
}

fn central(f: impl Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> (f64, f64) {
    (
        (f(x + h, y) - f(x - h, y)) / (2.0 * h),
        (f(x, y + h) - f(x, y - h)) / (2.0 * h),
    )
}

#[test]
fn sequence_gradients_match_field_differences() {
    for tr in Transform::ALL {
        let cfg = ToySequenceConfig::new(tr).with_grid(9, 9);
        let seq = generate_sequence(&cfg).unwrap();
        let xs = cfg.axis_coords(9);
        for t in 0..cfg.timesteps {
            for (i, &x1) in xs.iter().enumerate() {
                for (j, &x2) in xs.iter().enumerate() {
                    let g = seq.grads(t);
                    let k = (i * 9 + j) * 2;
                    let fd = central(|a, b| cfg.eval(t, a, b).0, x1 + 0.37, x2 - 0.21, 1e-5);
                    let an = cfg.eval(t, x1 + 0.37, x2 - 0.21).1;
                    assert!(rel2(an, fd) < 1e-6, "{tr} t={t}");
                    assert_eq!((g[k], g[k + 1]), cfg.eval(t, x1, x2).1);
                }
            }
        }
    }
}

#[test]
fn fd_gradient_agrees_with_schwefel_grad() {
    // Halving the spacing shrinks the interior error by about 2^4.
    let err = |n: usize| {
        let (lo, hi) = (100.0, 200.0);
        let h = (hi - lo) / (n - 1) as f64;
        let f: Vec<f64> = (0..n).map(|i| schwefel(lo + i as f64 * h, 7.0)).collect();
        let d = fd_axis(&f, &[n], 0, h).unwrap();
        (2..n - 2)
            .map(|i| (d[i] - schwefel_grad(lo + i as f64 * h, 7.0).0).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(201) / err(401);
    assert!((ratio - 16.0).abs() < 2.0, "{ratio}");
}

#[test]
fn volume_files_store_f32() {
    let dir = tempfile::tempdir().unwrap();
    let seq = generate_sequence(&ToySequenceConfig::new(Transform::Wave).with_grid(8, 6)).unwrap();
    let g = seq.grad_grid(3).unwrap();
    save_volume(&g, &dir.path().join("g")).unwrap();
    let back = load_volume(&dir.path().join("g.json")).unwrap();
    for (a, b) in back.variables().iter().zip(g.variables()) {
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schwefel_grad_matches_differences(pts in vec((-500.0f64..500.0, -500.0f64..500.0), 160)) {
        for (x, y) in pts {
            let fd = central(schwefel, x, y, 1e-5);
            prop_assert!(rel2(schwefel_grad(x, y), fd) < 1e-5, "({x}, {y})");
        }
    }

    #[test]
    fn geometric_gradients_follow_the_chain_rule(x in -500.0f64..500.0, y in -500.0f64..500.0, theta in -1.0f64..1.0, alpha in 0.0f64..40.0) {
        let mut cfg = ToySequenceConfig::new(Transform::Rotation);
        cfg.schedules.theta.end = theta;
        let (_, g) = cfg.eval(cfg.timesteps - 1, x, y);
        let (u, v) = rotate_coords(x, y, theta);
        let (gu, gv) = schwefel_grad(u, v);
        // d(u, v)/d(x, y) = [[cos, -sin], [sin, cos]].
        let j = [[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let expect = (j[0][0] * gu + j[1][0] * gv, j[0][1] * gu + j[1][1] * gv);
        prop_assert!(rel2(g, expect) < 1e-12);

        let mut cfg = ToySequenceConfig::new(Transform::Warp);
        cfg.schedules.alpha.end = alpha;
        let (_, g) = cfg.eval(cfg.timesteps - 1, x, y);
        let (u, v) = warp_coords(x, y, alpha);
        let (gu, gv) = schwefel_grad(u, v);
        let j = [[1.0, alpha * 0.01 * (0.01 * y).cos()], [alpha * 0.01 * (0.01 * x).cos(), 1.0]];
        let expect = (j[0][0] * gu + j[1][0] * gv, j[0][1] * gu + j[1][1] * gv);
        prop_assert!(rel2(g, expect) < 1e-12);
    }

    #[test]
    fn volumes_round_trip_bit_exact(dims in vec(1usize..5, 1..5), seed in any::<u32>()) {
        let n: usize = dims.iter().product();
        let data: Vec<f64> = (0..n).map(|i| (((i as u32).wrapping_mul(2654435761) ^ seed) as f64 * 1e-6) as f32 as f64).collect();
        let g = GridSignal::scalar(dims, "f", data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v");
        save_volume(&g, &p).unwrap();
        prop_assert_eq!(load_volume(&p).unwrap(), g);
    }

    #[test]
    fn checkpoints_round_trip_bitwise(arch_ix in 0usize..3, in_dim in 2usize..5, seed in any::<u64>()) {
        let m = FieldModel::<f32>::init(Arch::ALL[arch_ix].default_config(), in_dim, 2, seed).unwrap();
        let mut c = Checkpoint::new();
        c.put_model(&m).unwrap();
        let back: FieldModel<f32> = Checkpoint::from_bytes(&c.to_bytes()).unwrap().model().unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn csv_values_survive_to_six_digits(vals in vec((0.0f64..1e3, -1e6f64..1e6), 1..30)) {
        let rows: Vec<TraceRow> = vals.iter().enumerate().map(|(i, (l, p))| TraceRow {
            iteration: i,
            loss: Some(*l),
            psnr: Some(*p),
            ssim: None,
            grad_rmse: Some(l / 7.0),
        }).collect();
        let run = RunRecord {
            model: "kplanes".into(), init: "random".into(), dataset: "gaussian".into(), seed: 1,
            rows: rows.clone(), crossings: BTreeMap::new(), final_metrics: BTreeMap::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let (csv_path, _) = write_results(&[run], dir.path(), "x").unwrap();
        let parsed = read_trace_csv(&csv_path).unwrap();
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-6 * b.abs().max(1e-300),
            (None, None) => true,
            _ => false,
        };
        for ((_, r), o) in parsed.iter().zip(&rows) {
            prop_assert!(close(r.loss, o.loss) && close(r.psnr, o.psnr) && close(r.grad_rmse, o.grad_rmse));
            prop_assert_eq!(r.ssim, None);
        }
    }

    #[test]
    fn normalization_round_trips(data in vec(-1e4f64..1e4, 2..50)) {
        let g = GridSignal::scalar(vec![data.len()], "f", data.clone()).unwrap();
        let (n, _) = normalize_outputs(&g).unwrap();
        prop_assert!(n.variables()[0].data.iter().all(|v| (-1.0..=1.0).contains(v)));
        let back = denormalize_outputs(&n).unwrap();
        for (a, b) in back.variables()[0].data.iter().zip(&data) {
            prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn stack_and_select_invert(t in 1usize..5, h in 1usize..5, w in 1usize..5) {
        let frames: Vec<GridSignal> = (0..t)
            .map(|k| GridSignal::scalar(vec![h, w], "f", (0..h * w).map(|i| (k * 100 + i) as f64).collect()).unwrap())
            .collect();
        let s = GridSignal::stack(&frames, "t").unwrap();
        for (k, f) in frames.iter().enumerate() {
            let sel = s.select(0, k).unwrap();
            prop_assert_eq!(sel.variables(), f.variables());
        }
    }
}
