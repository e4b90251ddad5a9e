//! Fit a config to a parameter budget derived from a compression ratio.
//!
//! The free knob is the SIREN hidden width, the hash-table size (with the
//! level count as the fine adjustment, since table sizes are powers of two),
//! or the K-Planes plane resolution (with the head width as fine adjustment).

use super::{ArchConfig, HashGridConfig, KPlanesConfig, SirenConfig};
use crate::error::{Error, Result};

/// Accepted relative deviation from the target parameter count.
pub const BUDGET_TOLERANCE: f64 = 0.05;

fn within(count: usize, target: usize) -> bool {
    let t = target as f64;
    (count as f64) >= t * (1.0 - BUDGET_TOLERANCE) && (count as f64) <= t * (1.0 + BUDGET_TOLERANCE)
}

/// Smallest `k` in `lo..=hi` with `f(k) >= target`, assuming `f` is non-decreasing.
fn bisect(lo: usize, hi: usize, target: usize, f: impl Fn(usize) -> usize) -> usize {
    let (mut lo, mut hi) = (lo, hi);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Config with roughly `signal_scalar_count / ratio` parameters.
pub fn size_to_budget(
    template: &ArchConfig,
    in_dim: usize,
    out_dim: usize,
    signal_scalar_count: usize,
    ratio: f64,
) -> Result<ArchConfig> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidConfig(format!("compression ratio must be > 0, got {ratio}")));
    }
    let target = (signal_scalar_count as f64 / ratio).round() as usize;
    match template {
        ArchConfig::Siren(c) => size_siren(c, in_dim, out_dim, target).map(ArchConfig::Siren),
        ArchConfig::Hashgrid(c) => size_hashgrid(c, out_dim, target).map(ArchConfig::Hashgrid),
        ArchConfig::Kplanes(c) => size_kplanes(c, in_dim, out_dim, target).map(ArchConfig::Kplanes),
    }
}

fn size_siren(base: &SirenConfig, in_dim: usize, out_dim: usize, target: usize) -> Result<SirenConfig> {
    const MAX_WIDTH: usize = 1 << 16;
    let count = |w: usize| {
        SirenConfig {
            hidden_width: w,
            ..base.clone()
        }
        .param_count(in_dim, out_dim)
    };
    let w = bisect(1, MAX_WIDTH, target, count);
    let best = [w.saturating_sub(1).max(1), w]
        .into_iter()
        .min_by_key(|&w| count(w).abs_diff(target))
        .unwrap();
    if !within(count(best), target) {
        return Err(Error::BudgetInfeasible {
            target,
            min: count(1),
            max: count(MAX_WIDTH),
        });
    }
    Ok(SirenConfig {
        hidden_width: best,
        ..base.clone()
    })
}

fn size_hashgrid(base: &HashGridConfig, out_dim: usize, target: usize) -> Result<HashGridConfig> {
    let mut best: Option<(usize, usize, HashGridConfig)> = None;
    let (mut min, mut max) = (usize::MAX, 0);
    for log2 in 1..=24u32 {
        for levels in 1..=64usize {
            let cand = HashGridConfig {
                table_size_log2: log2,
                levels,
                ..base.clone()
            };
            let n = cand.param_count(out_dim);
            min = min.min(n);
            max = max.max(n);
            if !within(n, target) {
                continue;
            }
            let key = (levels.abs_diff(base.levels), n.abs_diff(target));
            if best.as_ref().map(|(a, b, _)| key < (*a, *b)).unwrap_or(true) {
                best = Some((key.0, key.1, cand));
            }
        }
    }
    best.map(|(_, _, c)| c).ok_or(Error::BudgetInfeasible { target, min, max })
}

fn size_kplanes(base: &KPlanesConfig, in_dim: usize, out_dim: usize, target: usize) -> Result<KPlanesConfig> {
    const MAX_RES: usize = 1 << 14;
    let with = |r: usize, w: usize| KPlanesConfig {
        resolution: r,
        axis_resolutions: None,
        mlp_width: w,
        ..base.clone()
    };
    let count = |r: usize, w: usize| with(r, w).param_count(in_dim, out_dim);
    let min = count(2, base.mlp_width.min(1));
    let max = count(MAX_RES, base.mlp_width);
    // Largest resolution not exceeding the budget with the template head.
    let r_ge = bisect(2, MAX_RES, target, |r| count(r, base.mlp_width));
    for r in [r_ge, r_ge.saturating_sub(1).max(2)] {
        if within(count(r, base.mlp_width), target) {
            return Ok(with(r, base.mlp_width));
        }
    }
    let r = if count(r_ge, base.mlp_width) > target {
        r_ge.saturating_sub(1).max(2)
    } else {
        r_ge
    };
    let width_cap = 4096;
    let w = bisect(1, width_cap, target, |w| count(r, w));
    let best = [w.saturating_sub(1).max(1), w]
        .into_iter()
        .min_by_key(|&w| count(r, w).abs_diff(target))
        .unwrap();
    if within(count(r, best), target) {
        Ok(with(r, best))
    } else {
        Err(Error::BudgetInfeasible { target, min, max })
    }
}
