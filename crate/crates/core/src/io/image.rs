//! 8-bit grayscale PGM export of 2-D slices.

use std::fs;
use std::path::Path;

use super::grid::GridSignal;
use crate::autodiff::{DenseArray, Real};
use crate::error::{Error, Result};
use crate::fields::FieldModel;

/// Row-major 2-D image of floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice2 {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Map `v` from `[lo, hi]` to `0..=255`; a degenerate range maps to 127.
pub fn quantize(v: f64, lo: f64, hi: f64) -> u8 {
    if !(hi > lo) {
        return 127;
    }
    (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
}

pub fn pgm_bytes(slice: &Slice2, lo: f64, hi: f64) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", slice.cols, slice.rows).into_bytes();
    out.extend(slice.values.iter().map(|&v| quantize(v, lo, hi)));
    out
}

pub fn write_pgm(path: &Path, slice: &Slice2, lo: f64, hi: f64) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, pgm_bytes(slice, lo, hi))?;
    Ok(())
}

/// Parse a binary PGM written by [`write_pgm`] into `(cols, rows, pixels)`.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM field `{s}`")));
    if fields[0] != "P5" {
        return Err(Error::Format("not a P5 PGM".into()));
    }
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let pixels = bytes.get(pos..pos + w * h).ok_or_else(|| Error::Format("truncated PGM data".into()))?;
    Ok((w, h, pixels.to_vec()))
}

/// Fix every axis except two by `picks` (`(axis, index)` pairs) and return the
/// remaining 2-D slice of `variable` together with that variable's global range.
pub fn grid_slice(grid: &GridSignal, variable: &str, picks: &[(usize, usize)]) -> Result<(Slice2, f64, f64)> {
    let var = grid
        .variables()
        .iter()
        .position(|c| c.name == variable)
        .ok_or_else(|| Error::AxisOutOfRange(format!("no variable `{variable}`")))?;
    let data = &grid.variables()[var].data;
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut picks = picks.to_vec();
    picks.sort_by(|a, b| b.0.cmp(&a.0));
    for w in picks.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::AxisOutOfRange(format!("axis {} picked twice", w[0].0)));
        }
    }
    if grid.n_axes() != picks.len() + 2 {
        return Err(Error::AxisOutOfRange(format!(
            "{} picks leave {} axes of {:?}; need exactly two",
            picks.len(),
            grid.n_axes() as isize - picks.len() as isize,
            grid.dims()
        )));
    }
    // Drop the highest axes first so lower indices stay valid.
    let mut g = grid.clone();
    for (axis, index) in picks {
        g = g.select(axis, index)?;
    }
    let v = &g.variables()[var];
    Ok((
        Slice2 {
            rows: g.dims()[0],
            cols: g.dims()[1],
            values: v.data.clone(),
        },
        lo,
        hi,
    ))
}

/// Sample `model` on a `rows x cols` lattice spanning its coordinate range
/// along `axes`, with every other input fixed to `fixed[k]` (normalized units).
pub fn model_slice<T: Real>(
    model: &FieldModel<T>,
    axes: (usize, usize),
    fixed: &[f64],
    rows: usize,
    cols: usize,
    channel: usize,
) -> Result<Slice2> {
    let d = model.in_dim;
    if fixed.len() != d || axes.0 >= d || axes.1 >= d || axes.0 == axes.1 {
        return Err(Error::AxisOutOfRange(format!(
            "slice axes {axes:?} with {} fixed values for in_dim {d}",
            fixed.len()
        )));
    }
    if channel >= model.out_dim || rows < 2 || cols < 2 {
        return Err(Error::AxisOutOfRange(format!("channel {channel} or lattice {rows}x{cols}")));
    }
    let (lo, hi) = model.arch().coord_range();
    let mut coords = Vec::with_capacity(rows * cols * d);
    for i in 0..rows {
        for j in 0..cols {
            let mut p = fixed.to_vec();
            p[axes.0] = lo + (hi - lo) * i as f64 / (rows - 1) as f64;
            p[axes.1] = lo + (hi - lo) * j as f64 / (cols - 1) as f64;
            coords.extend(p);
        }
    }
    let out = model.forward(&DenseArray::<T>::from_f64(vec![rows * cols, d], &coords)?)?;
    let c = model.out_dim;
    Ok(Slice2 {
        rows,
        cols,
        values: out.data().iter().skip(channel).step_by(c).map(|v| v.to_f64_lossy()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Arch;

    #[test]
    fn constant_field_is_mid_gray() {
        let g = GridSignal::scalar(vec![3, 4], "f", vec![2.5; 12]).unwrap();
        let (s, lo, hi) = grid_slice(&g, "f", &[]).unwrap();
        let (w, h, px) = read_pgm(&pgm_bytes(&s, lo, hi)).unwrap();
        assert_eq!((w, h), (4, 3));
        assert!(px.iter().all(|&p| p == 127));
    }

    #[test]
    fn extremes_map_to_black_and_white() {
        let g = GridSignal::scalar(vec![2, 3, 2], "f", (0..12).map(|i| i as f64).collect()).unwrap();
        let (s, lo, hi) = grid_slice(&g, "f", &[(1, 0)]).unwrap();
        assert_eq!((s.rows, s.cols), (2, 2));
        assert_eq!(s.values, vec![0.0, 1.0, 6.0, 7.0]);
        assert_eq!((quantize(lo, lo, hi), quantize(hi, lo, hi)), (0, 255));
        let full = grid_slice(&g, "f", &[(0, 1)]).unwrap().0;
        assert_eq!(quantize(*full.values.last().unwrap(), lo, hi), 255);
    }

    #[test]
    fn bad_picks() {
        let g = GridSignal::scalar(vec![2, 3, 2], "f", vec![0.0; 12]).unwrap();
        assert!(grid_slice(&g, "f", &[]).is_err());
        assert!(grid_slice(&g, "f", &[(1, 5)]).is_err());
        assert!(grid_slice(&g, "f", &[(3, 0)]).is_err());
        assert!(grid_slice(&g, "g", &[(0, 0)]).is_err());
    }

    #[test]
    fn model_export_at_double_resolution() {
        let m = FieldModel::<f32>::init(Arch::Siren.default_config(), 3, 1, 0).unwrap();
        let s = model_slice(&m, (1, 2), &[0.0, 0.0, 0.0], 2 * 16, 2 * 12, 0).unwrap();
        let (w, h, _) = read_pgm(&pgm_bytes(&s, -1.0, 1.0)).unwrap();
        assert_eq!((w, h), (24, 32));
    }
}
