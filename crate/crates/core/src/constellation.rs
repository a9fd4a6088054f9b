//! M-ary power-talk constellations and their image in the detection space.
//!
//! Three families are built under the power-deviation budget: varying only
//! the virtual resistance (`FixedVa`), varying only the reference voltage
//! (`FixedRda`), and the `Diagonal` family where each symbol's voltage
//! minimises the deviation for its resistance. The outermost symbols sit on
//! the budget; interior symbols are spaced uniformly in the varied parameter.

use std::fmt;
use std::str::FromStr;

use crate::circuit::{channel_output, SystemConfig, TheveninState, VscParams};
use crate::detection::DetectedLine;
use crate::error::{Error, Result};
use crate::numeric;
use crate::signaling::{is_feasible, power_deviation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    FixedVa,
    FixedRda,
    Diagonal,
    Custom,
}

impl Family {
    pub const DESIGNED: [Family; 3] = [Family::FixedVa, Family::FixedRda, Family::Diagonal];

    pub fn name(self) -> &'static str {
        match self {
            Family::FixedVa => "fixed-va",
            Family::FixedRda => "fixed-rda",
            Family::Diagonal => "diagonal",
            Family::Custom => "custom",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fixed-va" | "fixedva" | "fixed_va" => Ok(Family::FixedVa),
            "fixed-rda" | "fixedrda" | "fixed_rda" => Ok(Family::FixedRda),
            "diagonal" | "diag" => Ok(Family::Diagonal),
            "custom" => Ok(Family::Custom),
            other => Err(Error::Input(format!("unknown constellation family '{other}'"))),
        }
    }
}

/// Ordered symbol set; index 0 has the highest bus voltage at the reference
/// load.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub family: Family,
    pub symbols: Vec<VscParams>,
    pub pilot: VscParams,
    pub gamma: f64,
}

impl Constellation {
    pub fn design(family: Family, m: usize, cfg: &SystemConfig) -> Result<Self> {
        if m < 2 {
            return Err(Error::Input(format!("constellation order must be >= 2, got {m}")));
        }
        if !(cfg.gamma > 0.0) {
            return Err(Error::Input(format!("gamma must be positive, got {}", cfg.gamma)));
        }
        let pilot = cfg.pilot;
        let symbols: Vec<VscParams> = match family {
            Family::FixedRda => {
                let f = |v: f64| power_deviation(VscParams { v, r_d: pilot.r_d }, cfg).map(|d| d - cfg.gamma);
                let lo = budget_root(f, pilot.v, -1.0, 0.0)?;
                let hi = budget_root(f, pilot.v, 1.0, f64::INFINITY)?;
                numeric::linspace(lo, hi, m)
                    .into_iter()
                    .map(|v| VscParams { v, r_d: pilot.r_d })
                    .collect()
            }
            Family::FixedVa => {
                let f = |r_d: f64| power_deviation(VscParams { v: pilot.v, r_d }, cfg).map(|d| d - cfg.gamma);
                let lo = budget_root(f, pilot.r_d, -1.0, 0.0)?;
                let hi = budget_root(f, pilot.r_d, 1.0, f64::INFINITY)?;
                numeric::linspace(lo, hi, m)
                    .into_iter()
                    .map(|r_d| VscParams { v: pilot.v, r_d })
                    .collect()
            }
            Family::Diagonal => {
                let f = |r_d: f64| diagonal_point(r_d, cfg).map(|(_, d)| d - cfg.gamma);
                let lo = budget_root(f, pilot.r_d, -1.0, 0.0)?;
                let hi = budget_root(f, pilot.r_d, 1.0, f64::INFINITY)?;
                numeric::linspace(lo, hi, m)
                    .into_iter()
                    .map(|r_d| diagonal_point(r_d, cfg).map(|(v, _)| VscParams { v, r_d }))
                    .collect::<Result<_>>()?
            }
            Family::Custom => {
                return Err(Error::Input(
                    "custom constellations are built with Constellation::custom".into(),
                ))
            }
        };
        for (i, s) in symbols.iter().enumerate() {
            if !is_feasible(*s, cfg) {
                return Err(Error::DesignInfeasible(format!(
                    "{family} symbol {} ({:.6} V, {:.6} Ω) violates the constraint set",
                    i + 1,
                    s.v,
                    s.r_d
                )));
            }
        }
        Self::ordered(family, symbols, cfg)
    }

    /// Arbitrary symbol set, e.g. alternative interior spacings. Symbols are
    /// reordered by bus voltage at the reference load; the deviation budget is
    /// not enforced.
    pub fn custom(symbols: Vec<VscParams>, cfg: &SystemConfig) -> Result<Self> {
        if symbols.len() < 2 {
            return Err(Error::Input(format!(
                "constellation order must be >= 2, got {}",
                symbols.len()
            )));
        }
        for s in &symbols {
            s.validate()?;
        }
        Self::ordered(Family::Custom, symbols, cfg)
    }

    fn ordered(family: Family, symbols: Vec<VscParams>, cfg: &SystemConfig) -> Result<Self> {
        let state = cfg.state_at(cfg.load.reference_load())?;
        let mut keyed: Vec<(f64, VscParams)> = symbols.into_iter().map(|s| (channel_output(s, state), s)).collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
        for w in keyed.windows(2) {
            if !(w[0].0 > w[1].0) {
                return Err(Error::DegenerateDesign(format!(
                    "two symbols share the reference-load bus voltage {:.9} V",
                    w[0].0
                )));
            }
        }
        Ok(Self {
            family,
            symbols: keyed.into_iter().map(|(_, s)| s).collect(),
            pilot: cfg.pilot,
            gamma: cfg.gamma,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Bus voltage of every symbol in `state`, in constellation order.
    pub fn outputs(&self, state: TheveninState) -> Vec<f64> {
        self.symbols.iter().map(|&s| channel_output(s, state)).collect()
    }
}

/// Walks from `x0` in direction `dir` with doubling steps until `f` turns
/// non-negative, then bisects. `bound` is an exclusive limit for the walk.
fn budget_root<F: Fn(f64) -> Result<f64>>(f: F, x0: f64, dir: f64, bound: f64) -> Result<f64> {
    let mut prev = x0;
    let mut step = 1e-4 * x0.abs().max(1e-3);
    for _ in 0..200 {
        let mut x = x0 + dir * step;
        if (dir < 0.0 && x <= bound) || (dir > 0.0 && x >= bound) {
            x = 0.5 * (prev + bound);
        }
        if x == prev {
            break;
        }
        if f(x)? >= 0.0 {
            let mut failure = None;
            let root = numeric::bisect(
                |y| match f(y) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                },
                prev,
                x,
                0.0,
            )?;
            return match failure {
                Some(e) => Err(e),
                None => Ok(root),
            };
        }
        prev = x;
        step *= 2.0;
    }
    Err(Error::DesignInfeasible(format!(
        "power deviation never reaches the budget walking {} from {x0}",
        if dir < 0.0 { "down" } else { "up" }
    )))
}

const UNIMODALITY_PROBES: usize = 17;

/// Reference voltage minimising the power deviation at virtual resistance
/// `r_d`, and that minimal deviation.
///
/// The search interval is the set of `v_a` that keep the reference-load bus
/// voltage inside `[V_min, V_max]`.
pub fn diagonal_point(r_d: f64, cfg: &SystemConfig) -> Result<(f64, f64)> {
    if !(r_d > 0.0) {
        return Err(Error::Domain(format!("virtual resistance must be positive, got {r_d}")));
    }
    let state = cfg.state_at(cfg.load.reference_load())?;
    let invert = |v_star: f64| (v_star * (state.h + r_d) - state.g * r_d) / state.h;
    let lo = invert(cfg.constraints.v_min).max(f64::MIN_POSITIVE);
    let hi = invert(cfg.constraints.v_max);
    let objective = |v: f64| power_deviation(VscParams { v, r_d }, cfg).unwrap_or(f64::INFINITY);

    let probes: Vec<f64> = numeric::linspace(lo, hi, UNIMODALITY_PROBES)
        .into_iter()
        .map(objective)
        .collect();
    let mut turned = false;
    for w in probes.windows(2) {
        if w[1] > w[0] {
            turned = true;
        } else if turned && w[1] < w[0] {
            return Err(Error::Numerical(format!(
                "power deviation is not unimodal in v_a on [{lo:.6}, {hi:.6}] at r_da = {r_d}"
            )));
        }
    }

    let (v, d) = numeric::golden_section(objective, lo, hi, 1e-9);
    let edge = 1e-6 * (hi - lo);
    if v - lo < edge || hi - v < edge {
        return Err(Error::Numerical(format!(
            "deviation minimiser at r_da = {r_d} sits on the voltage-band edge"
        )));
    }
    Ok((v, d))
}

/// A symbol's track through the detection space as the load sweeps its
/// support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub index: usize,
    pub symbol: VscParams,
    pub at_r_min: DetectedLine,
    pub at_r_max: DetectedLine,
}

pub fn to_segments(c: &Constellation, cfg: &SystemConfig) -> Result<Vec<Segment>> {
    let s_min = cfg.state_at(cfg.load.r_min)?;
    let s_max = cfg.state_at(cfg.load.r_max)?;
    Ok(c.symbols
        .iter()
        .enumerate()
        .map(|(index, &symbol)| Segment {
            index,
            symbol,
            at_r_min: DetectedLine::of(symbol, s_min),
            at_r_max: DetectedLine::of(symbol, s_max),
        })
        .collect())
}

/// Load at which symbols `i` and `j` produce the same bus voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intersection {
    pub i: usize,
    pub j: usize,
    pub r_star: f64,
}

pub const INTERSECTION_SCAN: usize = 1024;

/// All pairwise output coincidences on the load support, found by a
/// sign-change scan refined with bisection.
pub fn segments_intersect(c: &Constellation, cfg: &SystemConfig) -> Result<Vec<Intersection>> {
    let rx = cfg.receiver;
    let grid = numeric::linspace(cfg.load.r_min, cfg.load.r_max, INTERSECTION_SCAN + 1);
    let grid = if cfg.load.r_min == cfg.load.r_max { vec![cfg.load.r_min] } else { grid };
    let outputs: Vec<Vec<f64>> = grid
        .iter()
        .map(|&r| cfg.state_at(r).map(|st| c.outputs(st)))
        .collect::<Result<_>>()?;
    let mut found = Vec::new();
    for i in 0..c.len() {
        for j in (i + 1)..c.len() {
            let (si, sj) = (c.symbols[i], c.symbols[j]);
            let diff = |r: f64| {
                let st = crate::circuit::thevenin(rx, r).expect("load support validated");
                channel_output(si, st) - channel_output(sj, st)
            };
            let d: Vec<f64> = outputs.iter().map(|o| o[i] - o[j]).collect();
            for k in 0..d.len() {
                if d[k] == 0.0 {
                    found.push(Intersection { i, j, r_star: grid[k] });
                } else if k + 1 < d.len() && d[k] * d[k + 1] < 0.0 {
                    let r_star = numeric::bisect(diff, grid[k], grid[k + 1], 0.0)?;
                    found.push(Intersection { i, j, r_star });
                }
            }
        }
    }
    Ok(found)
}
