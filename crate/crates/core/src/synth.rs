//! Time-evolving Schwefel testbed.
//!
//! The base field is `f(x1, x2) = sum_d (418.9829 - d * sin(sqrt|d|))`. A
//! sequence applies progressively stronger transforms: geometric ones
//! (rotation, warp) evaluate `f` at transformed coordinates, local ones
//! (gaussian, wave) add a windowed perturbation. Gradients are closed form.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Channel, GridSignal};

pub const SCHWEFEL_OFFSET: f64 = 418.9829;

/// Schwefel function in two dimensions.
pub fn schwefel(x1: f64, x2: f64) -> f64 {
    schwefel_term(x1) + schwefel_term(x2)
}

fn schwefel_term(d: f64) -> f64 {
    SCHWEFEL_OFFSET - d * d.abs().sqrt().sin()
}

/// `d/dd (418.9829 - d sin sqrt|d|) = -sin(s) - (s/2) cos(s)` with `s = sqrt|d|`.
pub fn schwefel_term_grad(d: f64) -> f64 {
    let s = d.abs().sqrt();
    -s.sin() - 0.5 * s * s.cos()
}

pub fn schwefel_grad(x1: f64, x2: f64) -> (f64, f64) {
    (schwefel_term_grad(x1), schwefel_term_grad(x2))
}

pub fn rotate_coords(x1: f64, x2: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (c * x1 - s * x2, s * x1 + c * x2)
}

pub fn warp_coords(x1: f64, x2: f64, alpha: f64) -> (f64, f64) {
    (x1 + alpha * (0.01 * x2).sin(), x2 + alpha * (0.01 * x1).sin())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub amplitude: f64,
    /// Divides the squared distance directly (not `2 sigma^2`).
    pub sigma: f64,
    pub c2: f64,
}

impl Default for GaussianParams {
    fn default() -> Self {
        Self {
            amplitude: 100.0,
            sigma: 5000.0,
            c2: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub amplitude: f64,
    pub center: (f64, f64),
    pub sigma: f64,
}

impl Default for WaveParams {
    fn default() -> Self {
        Self {
            amplitude: 100.0,
            center: (0.0, 0.0),
            sigma: 20_000.0,
        }
    }
}

/// `A exp(-((x1 - c1)^2 + (x2 - c2)^2) / sigma)` and its gradient.
pub fn gaussian_perturb(x1: f64, x2: f64, c1: f64, p: &GaussianParams) -> (f64, (f64, f64)) {
    let (dx, dy) = (x1 - c1, x2 - p.c2);
    let v = p.amplitude * (-(dx * dx + dy * dy) / p.sigma).exp();
    (v, (-2.0 * dx / p.sigma * v, -2.0 * dy / p.sigma * v))
}

/// `A w(x) sin(0.05 x1 + 0.05 x2 + phase)` with a unit Gaussian window `w`.
pub fn wave_perturb(x1: f64, x2: f64, phase: f64, p: &WaveParams) -> (f64, (f64, f64)) {
    let window = GaussianParams {
        amplitude: 1.0,
        sigma: p.sigma,
        c2: p.center.1,
    };
    let (w, (wx, wy)) = gaussian_perturb(x1, x2, p.center.0, &window);
    let arg = 0.05 * x1 + 0.05 * x2 + phase;
    let (s, c) = arg.sin_cos();
    let a = p.amplitude;
    (a * w * s, (a * (wx * s + w * 0.05 * c), a * (wy * s + w * 0.05 * c)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Rotation,
    Warp,
    Gaussian,
    Wave,
}

impl Transform {
    pub const ALL: [Transform; 4] = [Transform::Warp, Transform::Gaussian, Transform::Rotation, Transform::Wave];

    pub fn is_geometric(self) -> bool {
        matches!(self, Transform::Rotation | Transform::Warp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::Rotation => "rotation",
            Transform::Warp => "warp",
            Transform::Gaussian => "gaussian",
            Transform::Wave => "wave",
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rotation" | "rotate" => Ok(Transform::Rotation),
            "warp" => Ok(Transform::Warp),
            "gaussian" | "gauss" => Ok(Transform::Gaussian),
            "wave" => Ok(Transform::Wave),
            other => Err(Error::UnknownTransform(other.to_string())),
        }
    }
}

/// Linear ramp over `t = 0..T-1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: f64,
    pub end: f64,
}

impl Ramp {
    pub fn at(&self, t: usize, timesteps: usize) -> f64 {
        if timesteps < 2 {
            return self.start;
        }
        self.start + (self.end - self.start) * t as f64 / (timesteps - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    /// Rotation angle, radians.
    pub theta: Ramp,
    pub alpha: Ramp,
    pub c1: Ramp,
    pub phase: Ramp,
}

impl Default for Schedules {
    fn default() -> Self {
        Self {
            theta: Ramp {
                start: 0.0,
                end: PI / 6.0,
            },
            alpha: Ramp { start: 0.0, end: 30.0 },
            c1: Ramp {
                start: -250.0,
                end: 250.0,
            },
            phase: Ramp { start: 0.0, end: PI },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySequenceConfig {
    /// `(H, W)` samples along `(x1, x2)`.
    pub grid: (usize, usize),
    pub timesteps: usize,
    pub transform: Transform,
    /// Inclusive coordinate extent shared by both axes.
    pub domain: (f64, f64),
    #[serde(default)]
    pub schedules: Schedules,
    #[serde(default)]
    pub gaussian: GaussianParams,
    #[serde(default)]
    pub wave: WaveParams,
}

impl ToySequenceConfig {
    pub fn new(transform: Transform) -> Self {
        Self {
            grid: (500, 500),
            timesteps: 6,
            transform,
            domain: (-500.0, 500.0),
            schedules: Schedules::default(),
            gaussian: GaussianParams::default(),
            wave: WaveParams::default(),
        }
    }

    pub fn with_grid(mut self, h: usize, w: usize) -> Self {
        self.grid = (h, w);
        self
    }

    pub fn with_timesteps(mut self, t: usize) -> Self {
        self.timesteps = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps < 2 {
            return Err(Error::InvalidConfig(format!("need T >= 2 timesteps, got {}", self.timesteps)));
        }
        if self.grid.0 < 2 || self.grid.1 < 2 {
            return Err(Error::InvalidConfig(format!("grid {:?} too small", self.grid)));
        }
        if !(self.domain.1 > self.domain.0) {
            return Err(Error::InvalidConfig(format!("empty domain {:?}", self.domain)));
        }
        if !(self.gaussian.sigma > 0.0) || !(self.wave.sigma > 0.0) {
            return Err(Error::InvalidConfig("perturbation sigma must be positive".into()));
        }
        Ok(())
    }

    pub fn axis_coords(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.domain;
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn spacing(&self) -> (f64, f64) {
        let span = self.domain.1 - self.domain.0;
        (span / (self.grid.0 - 1) as f64, span / (self.grid.1 - 1) as f64)
    }

    /// Field value and gradient at one point of timestep `t`.
    pub fn eval(&self, t: usize, x1: f64, x2: f64) -> (f64, (f64, f64)) {
        let s = &self.schedules;
        let tt = self.timesteps;
        match self.transform {
            Transform::Rotation => {
                let theta = s.theta.at(t, tt);
                let (y1, y2) = rotate_coords(x1, x2, theta);
                let (g1, g2) = schwefel_grad(y1, y2);
                let (sn, c) = theta.sin_cos();
                // J = [[c, -s], [s, c]]; gradient = J^T grad f.
                (schwefel(y1, y2), (c * g1 + sn * g2, -sn * g1 + c * g2))
            }
            Transform::Warp => {
                let alpha = s.alpha.at(t, tt);
                let (y1, y2) = warp_coords(x1, x2, alpha);
                let (g1, g2) = schwefel_grad(y1, y2);
                let j12 = alpha * 0.01 * (0.01 * x2).cos();
                let j21 = alpha * 0.01 * (0.01 * x1).cos();
                (schwefel(y1, y2), (g1 + j21 * g2, j12 * g1 + g2))
            }
            Transform::Gaussian => {
                let (p, (p1, p2)) = gaussian_perturb(x1, x2, s.c1.at(t, tt), &self.gaussian);
                let (g1, g2) = schwefel_grad(x1, x2);
                (schwefel(x1, x2) + p, (g1 + p1, g2 + p2))
            }
            Transform::Wave => {
                let (p, (p1, p2)) = wave_perturb(x1, x2, s.phase.at(t, tt), &self.wave);
                let (g1, g2) = schwefel_grad(x1, x2);
                (schwefel(x1, x2) + p, (g1 + p1, g2 + p2))
            }
        }
    }
}

/// `T` transformed fields with analytic gradients in domain units.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySequence {
    pub config: ToySequenceConfig,
    /// `T x H x W`, row-major.
    pub fields: Vec<f64>,
    /// `T x H x W x 2`: `(df/dx1, df/dx2)`.
    pub analytic_grads: Vec<f64>,
}

pub fn generate_sequence(config: &ToySequenceConfig) -> Result<ToySequence> {
    config.validate()?;
    let (h, w) = config.grid;
    let xs1 = config.axis_coords(h);
    let xs2 = config.axis_coords(w);
    let frame = h * w;
    let mut fields = Vec::with_capacity(config.timesteps * frame);
    let mut grads = Vec::with_capacity(config.timesteps * frame * 2);
    for t in 0..config.timesteps {
        for &x1 in &xs1 {
            for &x2 in &xs2 {
                let (v, (g1, g2)) = config.eval(t, x1, x2);
                fields.push(v);
                grads.push(g1);
                grads.push(g2);
            }
        }
    }
    Ok(ToySequence {
        config: config.clone(),
        fields,
        analytic_grads: grads,
    })
}

impl ToySequence {
    pub fn frame_len(&self) -> usize {
        self.config.grid.0 * self.config.grid.1
    }

    pub fn field(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.fields[t * n..(t + 1) * n]
    }

    pub fn grads(&self, t: usize) -> &[f64] {
        let n = self.frame_len() * 2;
        &self.analytic_grads[t * n..(t + 1) * n]
    }

    /// Whole sequence as a `[T, H, W]` grid with variable `f`.
    pub fn to_grid(&self) -> Result<GridSignal> {
        let (h, w) = self.config.grid;
        let (s1, s2) = self.config.spacing();
        GridSignal::new(
            vec![self.config.timesteps, h, w],
            vec!["t".into(), "x1".into(), "x2".into()],
            vec![1.0, s1, s2],
            vec![Channel {
                name: "f".into(),
                data: self.fields.clone(),
            }],
        )
    }

    /// Analytic gradient of timestep `t` as a `[H, W]` grid with variables `df_dx1`, `df_dx2`.
    pub fn grad_grid(&self, t: usize) -> Result<GridSignal> {
        let (h, w) = self.config.grid;
        let (s1, s2) = self.config.spacing();
        let g = self.grads(t);
        let (a, b): (Vec<f64>, Vec<f64>) = g.chunks(2).map(|p| (p[0], p[1])).unzip();
        GridSignal::new(
            vec![h, w],
            vec!["x1".into(), "x2".into()],
            vec![s1, s2],
            vec![
                Channel {
                    name: "df_dx1".into(),
                    data: a,
                },
                Channel {
                    name: "df_dx2".into(),
                    data: b,
                },
            ],
        )
    }
}
