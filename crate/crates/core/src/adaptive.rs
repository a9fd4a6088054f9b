//! Adaptive modulation: switch between constituent constellations as the load
//! moves, always using the one with the lowest conditional error.
//!
//! Thresholds sit where the conditional error curves cross. They are located
//! on a construction grid and refined by bisection, then expressed both as
//! load values and as equivalent resistances `h(r)`, which is what the
//! transmitter and receiver actually observe.

use crate::circuit::{thevenin, SystemConfig};
use crate::constellation::Constellation;
use crate::detection::{ser_from_outputs, SER_ABS_TOL};
use crate::error::{Error, Result};
use crate::numeric;

/// Conditional error `P(ε|r)` of every constellation on a shared load grid.
pub fn error_curves(constellations: &[Constellation], cfg: &SystemConfig, r_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    let sigma = cfg.sampling.sigma();
    let states = r_grid
        .iter()
        .map(|&r| cfg.state_at(r))
        .collect::<Result<Vec<_>>>()?;
    Ok(constellations
        .iter()
        .map(|c| states.iter().map(|&st| ser_from_outputs(&c.outputs(st), sigma)).collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyInterval {
    pub r_low: f64,
    pub r_high: f64,
    pub h_low: f64,
    pub h_high: f64,
    /// Index into the policy's constituents.
    pub constellation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptivePolicy {
    pub constituents: Vec<Constellation>,
    /// Interior switching loads, strictly increasing.
    pub thresholds_r: Vec<f64>,
    /// `h(r)` at each switching load.
    pub thresholds_h: Vec<f64>,
    /// Partition of the load support, one more entry than thresholds.
    pub intervals: Vec<PolicyInterval>,
    /// Constituents that no interval selects.
    pub unused: Vec<usize>,
}

impl AdaptivePolicy {
    /// Constituent in use at load `r`; a load exactly on a threshold belongs
    /// to the lower interval.
    pub fn select_by_r(&self, r: f64) -> usize {
        let idx = self.thresholds_r.partition_point(|&t| t < r);
        self.intervals[idx].constellation
    }

    /// Same selection indexed by the equivalent resistance.
    pub fn select_by_h(&self, h: f64) -> usize {
        let idx = self.thresholds_h.partition_point(|&t| t < h);
        self.intervals[idx].constellation
    }

    pub fn conditional_ser(&self, cfg: &SystemConfig, r: f64) -> Result<f64> {
        let c = &self.constituents[self.select_by_r(r)];
        Ok(ser_from_outputs(&c.outputs(cfg.state_at(r)?), cfg.sampling.sigma()))
    }
}

pub const DEFAULT_POLICY_RESOLUTION: usize = 2001;

/// Index of the constituent with the smallest conditional error at `r`;
/// exact ties go to the lowest index.
fn best_at(constituents: &[Constellation], cfg: &SystemConfig, r: f64) -> usize {
    let sigma = cfg.sampling.sigma();
    let state = thevenin(cfg.receiver, r).expect("load support validated");
    let mut best = 0;
    let mut best_p = f64::INFINITY;
    for (i, c) in constituents.iter().enumerate() {
        let p = ser_from_outputs(&c.outputs(state), sigma);
        if p < best_p {
            best = i;
            best_p = p;
        }
    }
    best
}

/// Builds the minimum-error switching policy over `constituents`.
pub fn build_policy(constituents: Vec<Constellation>, cfg: &SystemConfig, resolution: usize) -> Result<AdaptivePolicy> {
    if constituents.is_empty() {
        return Err(Error::Input("adaptive policy needs at least one constituent".into()));
    }
    if resolution < 2 {
        return Err(Error::Input(format!("policy grid needs >= 2 points, got {resolution}")));
    }
    let (r_min, r_max) = (cfg.load.r_min, cfg.load.r_max);
    let grid = if r_min == r_max {
        vec![r_min]
    } else {
        numeric::linspace(r_min, r_max, resolution)
    };
    let picks: Vec<usize> = grid.iter().map(|&r| best_at(&constituents, cfg, r)).collect();

    let mut thresholds_r = Vec::new();
    let mut selections = vec![picks[0]];
    for k in 0..grid.len().saturating_sub(1) {
        let mut current = *selections.last().expect("non-empty");
        let mut lo = grid[k];
        let hi = grid[k + 1];
        while current != picks[k + 1] {
            // narrow [a, b] so that `current` wins at a and loses at b
            let (mut a, mut b) = (lo, hi);
            loop {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if best_at(&constituents, cfg, mid) == current {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let next = best_at(&constituents, cfg, b);
            thresholds_r.push(0.5 * (a + b));
            selections.push(next);
            current = next;
            lo = b;
            if lo >= hi {
                break;
            }
        }
    }

    let h_of = |r: f64| thevenin(cfg.receiver, r).map(|s| s.h);
    let thresholds_h = thresholds_r.iter().map(|&r| h_of(r)).collect::<Result<Vec<_>>>()?;
    let mut bounds = vec![r_min];
    bounds.extend(&thresholds_r);
    bounds.push(r_max);
    let intervals = bounds
        .windows(2)
        .zip(&selections)
        .map(|(w, &constellation)| {
            Ok(PolicyInterval {
                r_low: w[0],
                r_high: w[1],
                h_low: h_of(w[0])?,
                h_high: h_of(w[1])?,
                constellation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let unused = (0..constituents.len())
        .filter(|i| !selections.contains(i))
        .collect();
    Ok(AdaptivePolicy {
        constituents,
        thresholds_r,
        thresholds_h,
        intervals,
        unused,
    })
}

/// Average symbol error of the switching scheme over the load distribution.
pub fn policy_average_ser(p: &AdaptivePolicy, cfg: &SystemConfig) -> Result<f64> {
    let sigma = cfg.sampling.sigma();
    let mut total = 0.0;
    for iv in &p.intervals {
        let c = &p.constituents[iv.constellation];
        total += cfg.load.partial_expectation_tol(iv.r_low, iv.r_high, SER_ABS_TOL, |r| {
            let state = thevenin(cfg.receiver, r).expect("load support validated");
            ser_from_outputs(&c.outputs(state), sigma)
        })?;
    }
    Ok(total.clamp(0.0, 1.0))
}
