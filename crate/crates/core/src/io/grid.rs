use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_AXES: usize = 5;

/// Per-variable min-max normalization record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormMeta {
    pub min: f64,
    pub max: f64,
    /// Set when `max == min`; such variables normalize to all zeros.
    pub constant: bool,
}

impl NormMeta {
    pub fn normalize(&self, v: f64) -> f64 {
        if self.constant {
            0.0
        } else {
            2.0 * (v - self.min) / (self.max - self.min) - 1.0
        }
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if self.constant {
            self.min
        } else {
            (v + 1.0) * 0.5 * (self.max - self.min) + self.min
        }
    }
}

/// One named channel of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub name: String,
    pub data: Vec<f64>,
}

/// Dense sampled field: up to five axes ordered `[sim?, t?, x1, x2, x3?]`,
/// one or more variables stored variable-major, each row-major over the axes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSignal {
    dims: Vec<usize>,
    axes: Vec<String>,
    spacing: Vec<f64>,
    variables: Vec<Channel>,
    norm: Option<Vec<NormMeta>>,
}

impl GridSignal {
    pub fn new(dims: Vec<usize>, axes: Vec<String>, spacing: Vec<f64>, variables: Vec<Channel>) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_AXES {
            return Err(Error::DimensionMismatch(format!("grids have 1..=5 axes, got {}", dims.len())));
        }
        if axes.len() != dims.len() || spacing.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} dims but {} axis names and {} spacings",
                dims.len(),
                axes.len(),
                spacing.len()
            )));
        }
        if let Some(s) = spacing.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(format!("spacing must be positive, got {s}")));
        }
        if variables.is_empty() {
            return Err(Error::DimensionMismatch("grid needs at least one variable".into()));
        }
        let n: usize = dims.iter().product();
        for v in &variables {
            if v.data.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "variable `{}` has {} values, dims {:?} need {n}",
                    v.name,
                    v.data.len(),
                    dims
                )));
            }
        }
        Ok(Self {
            dims,
            axes,
            spacing,
            variables,
            norm: None,
        })
    }

    /// Single-variable grid with unit spacing and default axis names.
    pub fn scalar(dims: Vec<usize>, name: &str, data: Vec<f64>) -> Result<Self> {
        let axes = default_axes(dims.len());
        let spacing = vec![1.0; dims.len()];
        Self::new(
            dims,
            axes,
            spacing,
            vec![Channel {
                name: name.to_string(),
                data,
            }],
        )
    }

    pub fn with_spacing(mut self, spacing: Vec<f64>) -> Result<Self> {
        if spacing.len() != self.dims.len() || spacing.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig(format!("bad spacing {spacing:?}")));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn with_axes(mut self, axes: Vec<String>) -> Result<Self> {
        if axes.len() != self.dims.len() {
            return Err(Error::DimensionMismatch("axis name count".into()));
        }
        self.axes = axes;
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn axes(&self) -> &[String] {
        &self.axes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn variables(&self) -> &[Channel] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Option<&Channel> {
        self.variables.iter().find(|c| c.name == name)
    }

    pub fn variables_mut(&mut self) -> &mut [Channel] {
        &mut self.variables
    }

    pub fn norm(&self) -> Option<&[NormMeta]> {
        self.norm.as_deref()
    }

    pub fn set_norm(&mut self, norm: Option<Vec<NormMeta>>) {
        self.norm = norm;
    }

    pub fn n_points(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_axes(&self) -> usize {
        self.dims.len()
    }

    /// Row-major strides of the axes.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    /// Targets as a point-major `[N, C]` buffer.
    pub fn point_major(&self) -> Vec<f64> {
        let (n, c) = (self.n_points(), self.n_vars());
        let mut out = vec![0.0; n * c];
        for (j, v) in self.variables.iter().enumerate() {
            for (i, &x) in v.data.iter().enumerate() {
                out[i * c + j] = x;
            }
        }
        out
    }

    /// Fix `axis` at `index`, dropping the axis.
    pub fn select(&self, axis: usize, index: usize) -> Result<Self> {
        if axis >= self.dims.len() || index >= self.dims[axis] {
            return Err(Error::AxisOutOfRange(format!(
                "axis {axis} index {index} for dims {:?}",
                self.dims
            )));
        }
        if self.dims.len() == 1 {
            return Err(Error::AxisOutOfRange("cannot drop the only axis".into()));
        }
        let outer: usize = self.dims[..axis].iter().product();
        let inner: usize = self.dims[axis + 1..].iter().product();
        let len = self.dims[axis];
        let variables = self
            .variables
            .iter()
            .map(|v| {
                let mut data = Vec::with_capacity(outer * inner);
                for o in 0..outer {
                    let start = (o * len + index) * inner;
                    data.extend_from_slice(&v.data[start..start + inner]);
                }
                Channel {
                    name: v.name.clone(),
                    data,
                }
            })
            .collect();
        let mut dims = self.dims.clone();
        let mut axes = self.axes.clone();
        let mut spacing = self.spacing.clone();
        dims.remove(axis);
        axes.remove(axis);
        spacing.remove(axis);
        let mut g = Self::new(dims, axes, spacing, variables)?;
        g.norm = self.norm.clone();
        Ok(g)
    }

    /// Keep indices `range` of `axis` (the axis stays, possibly with size 1).
    pub fn slice_axis(&self, axis: usize, range: std::ops::Range<usize>) -> Result<Self> {
        if axis >= self.dims.len() || range.start >= range.end || range.end > self.dims[axis] {
            return Err(Error::AxisOutOfRange(format!(
                "axis {axis} range {range:?} for dims {:?}",
                self.dims
            )));
        }
        let outer: usize = self.dims[..axis].iter().product();
        let inner: usize = self.dims[axis + 1..].iter().product();
        let len = self.dims[axis];
        let variables = self
            .variables
            .iter()
            .map(|v| {
                let mut data = Vec::with_capacity(outer * range.len() * inner);
                for o in 0..outer {
                    let start = (o * len + range.start) * inner;
                    data.extend_from_slice(&v.data[start..start + range.len() * inner]);
                }
                Channel {
                    name: v.name.clone(),
                    data,
                }
            })
            .collect();
        let mut dims = self.dims.clone();
        dims[axis] = range.len();
        let mut g = Self::new(dims, self.axes.clone(), self.spacing.clone(), variables)?;
        g.norm = self.norm.clone();
        Ok(g)
    }

    /// Stack equally shaped grids along a new leading axis.
    pub fn stack(parts: &[GridSignal], axis_name: &str) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyGrid)?;
        if first.dims.len() + 1 > MAX_AXES {
            return Err(Error::DimensionMismatch("stacking would exceed five axes".into()));
        }
        for p in parts {
            if p.dims != first.dims || p.n_vars() != first.n_vars() {
                return Err(Error::DimensionMismatch(format!(
                    "cannot stack dims {:?} with {:?}",
                    p.dims, first.dims
                )));
            }
        }
        let variables = (0..first.n_vars())
            .map(|j| Channel {
                name: first.variables[j].name.clone(),
                data: parts.iter().flat_map(|p| p.variables[j].data.iter().copied()).collect(),
            })
            .collect();
        let mut dims = vec![parts.len()];
        dims.extend_from_slice(&first.dims);
        let mut axes = vec![axis_name.to_string()];
        axes.extend(first.axes.iter().cloned());
        let mut spacing = vec![1.0];
        spacing.extend_from_slice(&first.spacing);
        Self::new(dims, axes, spacing, variables)
    }
}

pub(crate) fn default_axes(n: usize) -> Vec<String> {
    let names: &[&str] = match n {
        1 => &["x1"],
        2 => &["x1", "x2"],
        3 => &["x1", "x2", "x3"],
        4 => &["t", "x1", "x2", "x3"],
        _ => &["sim", "t", "x1", "x2", "x3"],
    };
    names.iter().take(n).map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSignal {
        GridSignal::scalar(vec![2, 3], "f", vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap()
    }

    #[test]
    fn rejects_wrong_length() {
        assert!(GridSignal::scalar(vec![2, 2], "f", vec![0.0; 3]).is_err());
        assert!(GridSignal::scalar(vec![1; 6], "f", vec![0.0]).is_err());
    }

    #[test]
    fn select_drops_axis() {
        let g = grid();
        assert_eq!(g.select(0, 1).unwrap().variables()[0].data, vec![3.0, 4.0, 5.0]);
        assert_eq!(g.select(1, 2).unwrap().variables()[0].data, vec![2.0, 5.0]);
        assert!(g.select(1, 3).is_err());
    }

    #[test]
    fn stack_then_select_round_trips() {
        let g = grid();
        let s = GridSignal::stack(&[g.clone(), g.clone()], "sim").unwrap();
        assert_eq!(s.dims(), &[2, 2, 3]);
        let mut back = s.select(0, 1).unwrap();
        back.set_norm(None);
        assert_eq!(back.variables(), g.variables());
    }

    #[test]
    fn slice_keeps_axis() {
        let g = grid();
        let s = g.slice_axis(1, 1..2).unwrap();
        assert_eq!(s.dims(), &[2, 1]);
        assert_eq!(s.variables()[0].data, vec![1.0, 4.0]);
    }

    #[test]
    fn norm_meta_inverts() {
        let m = NormMeta {
            min: 0.0,
            max: 10.0,
            constant: false,
        };
        assert_eq!(m.normalize(5.0), 0.0);
        assert_eq!(m.denormalize(m.normalize(7.5)), 7.5);
    }
}
