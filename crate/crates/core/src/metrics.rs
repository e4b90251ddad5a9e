//! Reconstruction and derivative-fidelity metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Channel, GridSignal};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            op,
            shapes: vec![vec![a], vec![b]],
        });
    }
    Ok(())
}

pub fn value_range(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len("mse", pred.len(), truth.len())?;
    if truth.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / truth.len() as f64)
}

/// `10 log10(peak^2 / mse)` with `peak` the range of `truth`; exact match gives `+inf`.
pub fn psnr(pred: &[f64], truth: &[f64]) -> Result<f64> {
    psnr_with_peak(pred, truth, value_range(truth))
}

pub fn psnr_with_peak(pred: &[f64], truth: &[f64], peak: f64) -> Result<f64> {
    let m = mse(pred, truth)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Separable "valid" correlation of a `rows x cols` image with `taps x taps`.
fn filter_valid(img: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (or, oc) = (rows - k + 1, cols - k + 1);
    let mut tmp = vec![0.0; rows * oc];
    for r in 0..rows {
        let row = &img[r * cols..(r + 1) * cols];
        for c in 0..oc {
            tmp[r * oc + c] = taps.iter().zip(&row[c..c + k]).map(|(w, x)| w * x).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for r in 0..or {
        for c in 0..oc {
            out[r * oc + c] = (0..k).map(|i| taps[i] * tmp[(r + i) * oc + c]).sum();
        }
    }
    out
}

/// Mean SSIM of one 2-D image pair over every window position fully inside the image.
pub fn ssim_2d(pred: &[f64], truth: &[f64], rows: usize, cols: usize, peak: f64) -> Result<f64> {
    check_len("ssim", pred.len(), truth.len())?;
    check_len("ssim", rows * cols, truth.len())?;
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            rows,
            cols,
            window: SSIM_WINDOW,
        });
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { pred.iter().zip(truth).map(|(&a, &b)| f(a, b)).collect() };
    let mx = filter_valid(pred, rows, cols, &taps);
    let my = filter_valid(truth, rows, cols, &taps);
    let mxx = filter_valid(&prod(|a, _| a * a), rows, cols, &taps);
    let myy = filter_valid(&prod(|_, b| b * b), rows, cols, &taps);
    let mxy = filter_valid(&prod(|a, b| a * b), rows, cols, &taps);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = mxx[i] - ux * ux;
            let vy = myy[i] - uy * uy;
            let cxy = mxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// SSIM over the last two axes of `dims`, averaged over all leading slices.
/// `peak` defaults to the range of `truth`.
pub fn ssim(pred: &[f64], truth: &[f64], dims: &[usize], peak: Option<f64>) -> Result<f64> {
    if dims.len() < 2 {
        return Err(Error::DimensionMismatch(format!("SSIM needs >= 2 axes, got {dims:?}")));
    }
    check_len("ssim", pred.len(), truth.len())?;
    check_len("ssim", dims.iter().product(), truth.len())?;
    let peak = peak.unwrap_or_else(|| value_range(truth));
    let (rows, cols) = (dims[dims.len() - 2], dims[dims.len() - 1]);
    let frame = rows * cols;
    let slices = truth.len() / frame;
    let mut acc = 0.0;
    for s in 0..slices {
        let r = s * frame..(s + 1) * frame;
        acc += ssim_2d(&pred[r.clone()], &truth[r], rows, cols, peak)?;
    }
    Ok(acc / slices as f64)
}

/// First iteration whose value reaches `threshold`; later dips do not re-arm.
pub fn iterations_to_threshold(trace: &[(usize, f64)], threshold: f64) -> Result<Option<usize>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(trace.iter().find(|(_, v)| *v >= threshold).map(|(i, _)| *i))
}

/// Root mean square of componentwise differences.
pub fn gradient_rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    Ok(mse(pred, truth)?.sqrt())
}

/// Derivative along `axis` of a row-major field.
///
/// Fourth-order central stencil where two neighbours exist on each side,
/// second-order central one step from the edge, second-order one-sided at the edge.
pub fn fd_axis(data: &[f64], dims: &[usize], axis: usize, h: f64) -> Result<Vec<f64>> {
    if axis >= dims.len() {
        return Err(Error::AxisOutOfRange(format!("axis {axis} of {dims:?}")));
    }
    check_len("fd_gradient", dims.iter().product(), data.len())?;
    let n = dims[axis];
    if n < 5 {
        return Err(Error::DimensionMismatch(format!(
            "axis {axis} has {n} samples; finite differences need >= 5"
        )));
    }
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            let f = |i: usize| data[base + i * stride];
            for i in 0..n {
                let d = if i == 0 {
                    (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * h)
                } else if i == n - 1 {
                    (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * h)
                } else if i == 1 || i == n - 2 {
                    (f(i + 1) - f(i - 1)) / (2.0 * h)
                } else {
                    (-f(i + 2) + 8.0 * f(i + 1) - 8.0 * f(i - 1) + f(i - 2)) / (12.0 * h)
                };
                out[base + i * stride] = d;
            }
        }
    }
    Ok(out)
}

/// Gradient of `variable` along every axis, as channels `d<var>_d<axis>`.
pub fn fd_gradient(grid: &GridSignal, variable: &str) -> Result<GridSignal> {
    let v = grid
        .variable(variable)
        .ok_or_else(|| Error::AxisOutOfRange(format!("no variable `{variable}`")))?;
    let channels = (0..grid.n_axes())
        .map(|k| {
            Ok(Channel {
                name: format!("d{}_d{}", variable, grid.axes()[k]),
                data: fd_axis(&v.data, grid.dims(), k, grid.spacing()[k])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GridSignal::new(grid.dims().to_vec(), grid.axes().to_vec(), grid.spacing().to_vec(), channels)
}

fn last_three(grid: &GridSignal) -> Result<(usize, [usize; 3])> {
    let n = grid.n_axes();
    if n < 3 {
        return Err(Error::DimensionMismatch(format!("need a 3-D spatial grid, got {:?}", grid.dims())));
    }
    if grid.n_vars() != 3 {
        return Err(Error::DimensionMismatch(format!(
            "vector field needs 3 channels, got {}",
            grid.n_vars()
        )));
    }
    Ok((n, [n - 3, n - 2, n - 1]))
}

/// Vorticity of a 3-channel field over the last three axes, as `(wx, wy, wz)`.
pub fn curl(v: &GridSignal) -> Result<GridSignal> {
    let (_, ax) = last_three(v)?;
    let d = |c: usize, k: usize| fd_axis(&v.variables()[c].data, v.dims(), ax[k], v.spacing()[ax[k]]);
    let sub = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<f64>>();
    let wx = sub(d(2, 1)?, d(1, 2)?);
    let wy = sub(d(0, 2)?, d(2, 0)?);
    let wz = sub(d(1, 0)?, d(0, 1)?);
    let ch = |name: &str, data| Channel {
        name: name.into(),
        data,
    };
    GridSignal::new(
        v.dims().to_vec(),
        v.axes().to_vec(),
        v.spacing().to_vec(),
        vec![ch("wx", wx), ch("wy", wy), ch("wz", wz)],
    )
}

/// Divergence of a 3-channel field over the last three axes.
pub fn divergence(v: &GridSignal) -> Result<Vec<f64>> {
    let (_, ax) = last_three(v)?;
    let mut out = vec![0.0; v.n_points()];
    for (c, &a) in ax.iter().enumerate() {
        let g = fd_axis(&v.variables()[c].data, v.dims(), a, v.spacing()[a])?;
        out.iter_mut().zip(g).for_each(|(o, x)| *o += x);
    }
    Ok(out)
}

/// Metrics of one evaluation, in normalized units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub iteration: usize,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub rmse: Vec<f64>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub grad_rmse: Option<f64>,
    pub curl_rmse: Option<f64>,
}

impl MetricReport {
    /// Per-variable PSNR/SSIM/RMSE of point-major `[N, C]` buffers over `dims`.
    pub fn evaluate(iteration: usize, pred: &[f64], truth: &[f64], dims: &[usize], channels: usize) -> Result<Self> {
        check_len("metrics", pred.len(), truth.len())?;
        let n: usize = dims.iter().product();
        check_len("metrics", n * channels, truth.len())?;
        let column = |buf: &[f64], c: usize| buf.iter().skip(c).step_by(channels).copied().collect::<Vec<_>>();
        let ssim_dims: Vec<usize> = dims.iter().copied().filter(|&d| d > 1).collect();
        let mut r = MetricReport {
            iteration,
            ..Default::default()
        };
        for c in 0..channels {
            let (p, t) = (column(pred, c), column(truth, c));
            r.psnr.push(psnr(&p, &t)?);
            r.rmse.push(mse(&p, &t)?.sqrt());
            let fits = ssim_dims.len() >= 2 && ssim_dims[ssim_dims.len() - 2..].iter().all(|&d| d >= SSIM_WINDOW);
            if fits {
                r.ssim.push(ssim(&p, &t, &ssim_dims, None)?);
            }
        }
        r.mean_psnr = mean(&r.psnr);
        r.mean_ssim = if r.ssim.is_empty() { f64::NAN } else { mean(&r.ssim) };
        Ok(r)
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
