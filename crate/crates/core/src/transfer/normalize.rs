use crate::autodiff::DenseArray;
use crate::error::{Error, Result};
use crate::fields::Arch;
use crate::io::{GridSignal, NormMeta};

/// Affine map of each axis index onto the architecture's coordinate range.
/// Single-sample axes map to the midpoint.
pub fn axis_coords(n: usize, range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = range;
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Row-major `[N, d]` coordinates of every grid point.
pub fn normalize_coords(grid: &GridSignal, arch: Arch) -> DenseArray<f64> {
    let dims = grid.dims();
    let d = dims.len();
    let per_axis: Vec<Vec<f64>> = dims.iter().map(|&n| axis_coords(n, arch.coord_range())).collect();
    let n = grid.n_points();
    let mut out = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; d];
    for _ in 0..n {
        out.extend(idx.iter().enumerate().map(|(k, &i)| per_axis[k][i]));
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    DenseArray::new(vec![n, d], out).expect("coordinate buffer matches its shape")
}

/// Scale each variable to `[-1, 1]` by its own min and max.
pub fn normalize_outputs(grid: &GridSignal) -> Result<(GridSignal, Vec<NormMeta>)> {
    let mut metas = Vec::with_capacity(grid.n_vars());
    let mut out = grid.clone();
    for ch in out.variables_mut() {
        if let Some(index) = ch.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("variable `{}`", ch.name),
                index,
            });
        }
        let (min, max) = ch
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let meta = NormMeta {
            min,
            max,
            constant: !(max > min),
        };
        ch.data.iter_mut().for_each(|v| *v = meta.normalize(*v));
        metas.push(meta);
    }
    out.set_norm(Some(metas.clone()));
    Ok((out, metas))
}

/// Invert [`normalize_outputs`] using the grid's recorded metadata.
pub fn denormalize_outputs(grid: &GridSignal) -> Result<GridSignal> {
    let metas = grid
        .norm()
        .ok_or_else(|| Error::InvalidConfig("grid carries no normalization record".into()))?
        .to_vec();
    let mut out = grid.clone();
    for (ch, m) in out.variables_mut().iter_mut().zip(&metas) {
        ch.data.iter_mut().for_each(|v| *v = m.denormalize(*v));
    }
    out.set_norm(None);
    Ok(out)
}
