//! The signaling space: which transmitter operating points respect the grid
//! constraints, what each one costs in relative power deviation, and whether
//! the channel can fully attenuate it.

use rayon::prelude::*;

use crate::circuit::{channel_output, thevenin, LoadDistribution, SystemConfig, TheveninState, VscParams};
use crate::error::{Error, Result};
use crate::numeric;

/// Operational limits on the bus voltage and the transmitter current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSet {
    pub v_min: f64,
    pub v_max: f64,
    pub i_a_max: f64,
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min < self.v_max) {
            return Err(Error::Domain(format!(
                "v_min ({}) must be below v_max ({})",
                self.v_min, self.v_max
            )));
        }
        if !(self.i_a_max > 0.0) {
            return Err(Error::Domain(format!("i_a_max must be positive, got {}", self.i_a_max)));
        }
        Ok(())
    }
}

/// Number of interior loads checked on top of the support endpoints.
pub const FEASIBILITY_GRID: usize = 256;

/// True when `sym` keeps the bus voltage and its own output current inside the
/// constraint set for every admissible load.
pub fn is_feasible(sym: VscParams, cfg: &SystemConfig) -> bool {
    if sym.validate().is_err() {
        return false;
    }
    let c = &cfg.constraints;
    let loads = numeric::linspace(cfg.load.r_min, cfg.load.r_max, FEASIBILITY_GRID + 2);
    loads.into_iter().all(|r| {
        let Ok(state) = thevenin(cfg.receiver, r) else {
            return false;
        };
        let v = channel_output(sym, state);
        let i_a = (sym.v - v) / sym.r_d;
        c.v_min <= v && v <= c.v_max && 0.0 <= i_a && i_a <= c.i_a_max
    })
}

/// Relative power deviation of `sym` with respect to the pilot:
/// the RMS load-power difference over the load distribution, normalised by
/// the mean pilot power.
pub fn power_deviation(sym: VscParams, cfg: &SystemConfig) -> Result<f64> {
    sym.validate()?;
    let pilot = cfg.pilot;
    let rx = cfg.receiver;
    let mean_pilot = cfg.load.expectation(|r| {
        let v = channel_output(pilot, thevenin(rx, r).expect("load support validated"));
        v * v / r
    })?;
    if !(mean_pilot > 0.0) {
        return Err(Error::Numerical(format!("mean pilot power is {mean_pilot}")));
    }
    let (dv_a, dr_d) = (sym.v - pilot.v, sym.r_d - pilot.r_d);
    let mean_sq = cfg.load.partial_expectation_tol(
        cfg.load.r_min,
        cfg.load.r_max,
        (1e-14 * mean_pilot).powi(2),
        |r| {
            let TheveninState { g, h } = thevenin(rx, r).expect("load support validated");
            // v* - g = (v_a - g) h / (h + r_da); differencing against the pilot
            // term by term keeps small deviations free of cancellation
            let w = h / (h + sym.r_d);
            let w0 = h / (h + pilot.r_d);
            let dw = -h * dr_d / ((h + sym.r_d) * (h + pilot.r_d));
            let dv = dv_a * w + (pilot.v - g) * dw;
            let v0 = g + (pilot.v - g) * w0;
            let dp = dv * (2.0 * v0 + dv) / r;
            dp * dp
        },
    )?;
    Ok(mean_sq.max(0.0).sqrt() / mean_pilot)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullPoint {
    /// Ray angle (radians) in pilot-normalised `(v_a, r_da)` coordinates.
    pub angle: f64,
    pub point: VscParams,
    pub delta: f64,
    /// The ray left the feasible region before reaching the budget; `point`
    /// is the last feasible point along it.
    pub clipped: bool,
}

/// Locus of operating points whose power deviation equals the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaHull {
    pub pilot: VscParams,
    pub gamma: f64,
    pub points: Vec<HullPoint>,
}

pub const DEFAULT_HULL_RAYS: usize = 360;

/// Traces the γ-hull along `n_rays` rays from the pilot, ordered by angle.
///
/// Ray `θ` moves through `(v_a0 (1 + t cos θ), r_da0 (1 + t sin θ))`; each
/// radius is bracketed by doubling `t` and refined by bisection.
pub fn gamma_hull(cfg: &SystemConfig, n_rays: usize) -> Result<GammaHull> {
    if n_rays == 0 {
        return Err(Error::Input("gamma_hull needs at least one ray".into()));
    }
    let pilot = cfg.pilot;
    let points = (0..n_rays)
        .into_par_iter()
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / n_rays as f64;
            trace_ray(cfg, angle)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaHull {
        pilot,
        gamma: cfg.gamma,
        points,
    })
}

fn trace_ray(cfg: &SystemConfig, angle: f64) -> Result<HullPoint> {
    let pilot = cfg.pilot;
    let (s, c) = angle.sin_cos();
    let at = |t: f64| VscParams {
        v: pilot.v * (1.0 + t * c),
        r_d: pilot.r_d * (1.0 + t * s),
    };
    // beyond t_lim one of the coordinates would be non-positive
    let mut t_lim = f64::INFINITY;
    if s < 0.0 {
        t_lim = t_lim.min(-1.0 / s);
    }
    if c < 0.0 {
        t_lim = t_lim.min(-1.0 / c);
    }
    let excess = |t: f64| power_deviation(at(t), cfg).map(|d| d - cfg.gamma);

    if cfg.gamma <= 0.0 {
        return Ok(HullPoint {
            angle,
            point: pilot,
            delta: 0.0,
            clipped: false,
        });
    }

    let mut prev = 0.0;
    let mut t = 1e-6;
    for _ in 0..2000 {
        if t >= t_lim {
            t = prev + 0.5 * (t_lim - prev);
            if t <= prev {
                break;
            }
        }
        if !is_feasible(at(t), cfg) {
            return clip(cfg, angle, &at, prev, t);
        }
        if excess(t)? >= 0.0 {
            let mut err = None;
            let root = numeric::bisect(
                |x| match excess(x) {
                    Ok(v) => v,
                    Err(e) => {
                        err = Some(e);
                        f64::NAN
                    }
                },
                prev,
                t,
                0.0,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            let point = at(root);
            if !is_feasible(point, cfg) {
                return clip(cfg, angle, &at, prev, root);
            }
            return Ok(HullPoint {
                angle,
                point,
                delta: power_deviation(point, cfg)?,
                clipped: false,
            });
        }
        prev = t;
        t *= 2.0;
    }
    Err(Error::Numerical(format!(
        "ray at angle {angle} never reached gamma = {} (last t = {prev})",
        cfg.gamma
    )))
}

fn clip(
    cfg: &SystemConfig,
    angle: f64,
    at: &dyn Fn(f64) -> VscParams,
    feasible_t: f64,
    infeasible_t: f64,
) -> Result<HullPoint> {
    let edge = numeric::bisect(
        |t| if is_feasible(at(t), cfg) { -1.0 } else { 1.0 },
        feasible_t,
        infeasible_t,
        0.0,
    )?;
    // bisect returns the bracket midpoint; step back onto the feasible side
    let mut t = edge;
    while t > feasible_t && !is_feasible(at(t), cfg) {
        t = feasible_t + 0.5 * (t - feasible_t);
    }
    let point = at(t);
    Ok(HullPoint {
        angle,
        point,
        delta: power_deviation(point, cfg)?,
        clipped: true,
    })
}

/// Channel behaviour for a symbol: in the attenuation region some admissible
/// load makes its output identical to the pilot's; otherwise the channel acts
/// as state-dependent additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    AttC,
    Anc,
}

impl Region {
    pub fn tag(self) -> &'static str {
        match self {
            Region::AttC => "AttC",
            Region::Anc => "ANC",
        }
    }
}

const REGION_SCAN: usize = 256;

/// Load strictly inside the support at which `sym` and the pilot produce the
/// same bus voltage, if any.
pub fn attenuation_load(sym: VscParams, cfg: &SystemConfig) -> Result<Option<f64>> {
    sym.validate()?;
    if cfg.load.distribution == LoadDistribution::PointMass || cfg.load.r_min == cfg.load.r_max {
        return Ok(None);
    }
    let diff = |r: f64| -> f64 {
        let state = thevenin(cfg.receiver, r).expect("load support validated");
        channel_output(sym, state) - channel_output(cfg.pilot, state)
    };
    let grid = numeric::linspace(cfg.load.r_min, cfg.load.r_max, REGION_SCAN + 1);
    let values: Vec<f64> = grid.iter().map(|&r| diff(r)).collect();
    let last = grid.len() - 1;
    for i in 0..last {
        if i > 0 && values[i] == 0.0 {
            return Ok(Some(grid[i]));
        }
        if values[i] * values[i + 1] < 0.0 {
            return numeric::bisect(diff, grid[i], grid[i + 1], 0.0).map(Some);
        }
    }
    Ok(None)
}

/// Roots exactly on the support boundary count as additive-noise.
pub fn classify_region(sym: VscParams, cfg: &SystemConfig) -> Result<Region> {
    if sym == cfg.pilot {
        return Ok(Region::AttC);
    }
    Ok(match attenuation_load(sym, cfg)? {
        Some(_) => Region::AttC,
        None => Region::Anc,
    })
}

/// Rectangular grid over the `(v_a, r_da)` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub v_a_center: f64,
    pub v_a_half_width: f64,
    pub r_da_center: f64,
    pub r_da_half_width: f64,
    /// Points per axis; forced odd so the center is a grid node.
    pub resolution: usize,
}

impl GridSpec {
    /// Grid centred on the pilot spanning the voltage band width in `v_a` and
    /// ±95 % of the pilot resistance in `r_da`.
    pub fn around_pilot(cfg: &SystemConfig, resolution: usize) -> Self {
        Self {
            v_a_center: cfg.pilot.v,
            v_a_half_width: cfg.constraints.v_max - cfg.constraints.v_min,
            r_da_center: cfg.pilot.r_d,
            r_da_half_width: 0.95 * cfg.pilot.r_d,
            resolution,
        }
    }

    fn axis(center: f64, half: f64, n: usize) -> Vec<f64> {
        let n = if n.is_multiple_of(2) { n + 1 } else { n.max(1) };
        let mid = (n / 2) as i64;
        let step = if n > 1 { half / mid as f64 } else { 0.0 };
        (0..n as i64).map(|i| center + (i - mid) as f64 * step).collect()
    }
}

/// Feasibility, power deviation and region tag sampled on a grid.
///
/// Maps are row-major with one row per `r_da` value.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalingSpaceGrid {
    pub v_a: Vec<f64>,
    pub r_da: Vec<f64>,
    pub feasible: Vec<bool>,
    pub delta: Vec<f64>,
    pub region: Vec<Region>,
}

impl SignalingSpaceGrid {
    pub fn index(&self, i_v: usize, i_r: usize) -> usize {
        i_r * self.v_a.len() + i_v
    }
}

pub fn render_grid(cfg: &SystemConfig, spec: GridSpec) -> Result<SignalingSpaceGrid> {
    let v_a = GridSpec::axis(spec.v_a_center, spec.v_a_half_width, spec.resolution);
    let r_da = GridSpec::axis(spec.r_da_center, spec.r_da_half_width, spec.resolution);
    if r_da.first().is_some_and(|&r| r <= 0.0) || v_a.first().is_some_and(|&v| v <= 0.0) {
        return Err(Error::Domain("grid extends to non-positive v_a or r_da".into()));
    }
    let rows = r_da
        .par_iter()
        .map(|&rd| {
            v_a.iter()
                .map(|&va| {
                    let sym = VscParams { v: va, r_d: rd };
                    Ok((is_feasible(sym, cfg), power_deviation(sym, cfg)?, classify_region(sym, cfg)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<_> = rows.into_iter().flatten().collect();
    Ok(SignalingSpaceGrid {
        feasible: cells.iter().map(|c| c.0).collect(),
        delta: cells.iter().map(|c| c.1).collect(),
        region: cells.iter().map(|c| c.2).collect(),
        v_a,
        r_da,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::LoadModel;

    fn hand_cfg() -> SystemConfig {
        SystemConfig {
            receiver: VscParams { v: 400.0, r_d: 2.0 },
            pilot: VscParams { v: 400.0, r_d: 2.0 },
            load: LoadModel::point(10.0).unwrap(),
            ..SystemConfig::default()
        }
    }

    #[test]
    fn pilot_is_feasible_and_costless() {
        let cfg = SystemConfig::default();
        assert!(is_feasible(cfg.pilot, &cfg));
        assert_eq!(power_deviation(cfg.pilot, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_deviation_matches_hand_value() {
        let cfg = hand_cfg();
        let d = power_deviation(VscParams { v: 398.0, r_d: 2.0 }, &cfg).unwrap();
        // v* scales by 399/400 against the pilot, so delta = 1 - (399/400)^2
        assert!((d - 0.004_993_75).abs() < 1e-12, "{d}");
    }

    #[test]
    fn overvoltage_symbol_is_infeasible() {
        let cfg = SystemConfig::default();
        let state = cfg.state_at(cfg.load.r_max).unwrap();
        let r_da = cfg.pilot.r_d;
        // invert the channel output for v* = V_max at r_max, then push 1 V above
        let v_a = cfg.constraints.v_max * (1.0 + r_da / state.h) - state.g * r_da / state.h + 1.0;
        let sym = VscParams { v: v_a, r_d: r_da };
        assert!(cfg.v_star(sym, cfg.load.r_max).unwrap() > cfg.constraints.v_max);
        assert!(!is_feasible(sym, &cfg));
    }

    #[test]
    fn zero_current_fixed_point_is_feasible_at_point_load() {
        let mut cfg = SystemConfig::default();
        cfg.load = LoadModel::point(60.0).unwrap();
        let g = cfg.state_at(60.0).unwrap().g;
        let sym = VscParams { v: g, r_d: 1.3 };
        assert!((cfg.v_star(sym, 60.0).unwrap() - g).abs() < 1e-12);
        assert!(is_feasible(sym, &cfg));
    }

    #[test]
    fn negative_current_is_infeasible() {
        let cfg = SystemConfig::default();
        // v_a below the equivalent voltage at r_max makes the converter sink current
        let g_max = cfg.state_at(cfg.load.r_max).unwrap().g;
        assert!(!is_feasible(VscParams { v: g_max - 1.0, r_d: 0.5 }, &cfg));
    }

    #[test]
    fn classify_identity_and_fixed_resistance() {
        let cfg = SystemConfig::default();
        assert_eq!(classify_region(cfg.pilot, &cfg).unwrap(), Region::AttC);
        for dv in [-3.0, -0.5, 0.2, 4.0] {
            let sym = VscParams { v: cfg.pilot.v + dv, r_d: cfg.pilot.r_d };
            assert_eq!(classify_region(sym, &cfg).unwrap(), Region::Anc);
        }
    }

    #[test]
    fn gamma_hull_zero_budget_collapses() {
        let mut cfg = SystemConfig::default();
        cfg.gamma = 0.0;
        let hull = gamma_hull(&cfg, 8).unwrap();
        assert!(hull.points.iter().all(|p| p.point == cfg.pilot));
        cfg.gamma = 1e-9;
        let hull = gamma_hull(&cfg, 8).unwrap();
        for p in &hull.points {
            assert!((p.point.v - cfg.pilot.v).abs() < 1e-3);
        }
    }

    #[test]
    fn grid_centre_is_pilot() {
        let cfg = SystemConfig::default();
        let grid = render_grid(&cfg, GridSpec::around_pilot(&cfg, 6)).unwrap();
        assert_eq!(grid.v_a.len(), 7);
        let c = grid.index(3, 3);
        assert_eq!(grid.v_a[3], cfg.pilot.v);
        assert_eq!(grid.r_da[3], cfg.pilot.r_d);
        assert!(grid.feasible[c]);
        assert!(grid.delta[c] < 1e-12);
        assert_eq!(grid.region[c], Region::AttC);
    }
}
