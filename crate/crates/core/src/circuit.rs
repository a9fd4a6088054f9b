//! Steady-state model of a single-bus DC microgrid with two droop-controlled
//! converters and one resistive load.
//!
//! The transmitting converter A sees the rest of the grid (the receiver B in
//! parallel with the load) as a Thevenin source `g` behind a resistance `h`.
//! That pair is the channel state.

use rand::Rng;

use crate::detection::SamplingConfig;
use crate::error::{require_positive, Error, Result};
use crate::numeric;
use crate::signaling::{self, ConstraintSet};

/// Droop-control operating point: reference voltage and virtual resistance.
///
/// Also used as a power-talk input symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VscParams {
    /// Reference voltage (V).
    pub v: f64,
    /// Virtual (droop) resistance (Ω).
    pub r_d: f64,
}

impl VscParams {
    pub fn new(v: f64, r_d: f64) -> Result<Self> {
        let p = Self { v, r_d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("reference voltage", self.v)?;
        require_positive("virtual resistance", self.r_d)
    }
}

/// Thevenin equivalent of the grid as seen from the transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheveninState {
    /// Equivalent source voltage (V).
    pub g: f64,
    /// Equivalent resistance (Ω).
    pub h: f64,
}

impl TheveninState {
    pub fn new(g: f64, h: f64) -> Result<Self> {
        require_positive("equivalent voltage g", g)?;
        require_positive("equivalent resistance h", h)?;
        Ok(Self { g, h })
    }
}

/// A bus load: either a finite resistance or an open circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    Ohms(f64),
    Open,
}

impl Load {
    fn conductance(self) -> Result<f64> {
        match self {
            Load::Ohms(r) => {
                require_positive("load resistance", r)?;
                Ok(1.0 / r)
            }
            Load::Open => Ok(0.0),
        }
    }
}

impl From<f64> for Load {
    fn from(r: f64) -> Self {
        Load::Ohms(r)
    }
}

/// Bus voltage for transmitter `tx`, receiver `rx` and load `r`.
pub fn bus_voltage(tx: VscParams, rx: VscParams, load: impl Into<Load>) -> Result<f64> {
    tx.validate()?;
    rx.validate()?;
    let gl = load.into().conductance()?;
    Ok((tx.v / tx.r_d + rx.v / rx.r_d) / (1.0 / tx.r_d + 1.0 / rx.r_d + gl))
}

/// Thevenin reduction of the receiver in parallel with the load.
pub fn thevenin(rx: VscParams, load: impl Into<Load>) -> Result<TheveninState> {
    rx.validate()?;
    let gl = load.into().conductance()?;
    // g = v_b r / (r + r_db), h = r r_db / (r + r_db), written in conductance
    // form so the open-load limit is exact.
    let denom = 1.0 + rx.r_d * gl;
    Ok(TheveninState {
        g: rx.v / denom,
        h: rx.r_d / denom,
    })
}

/// Bus voltage seen by the transmitter through the channel state.
pub fn bus_voltage_thevenin(tx: VscParams, state: TheveninState) -> Result<f64> {
    tx.validate()?;
    require_positive("equivalent resistance h", state.h)?;
    Ok(channel_output(tx, state))
}

/// Unchecked form of [`bus_voltage_thevenin`] for hot loops over
/// already-validated values.
#[inline]
pub(crate) fn channel_output(tx: VscParams, state: TheveninState) -> f64 {
    (tx.v * state.h + state.g * tx.r_d) / (state.h + tx.r_d)
}

/// Droop output current of `tx` at bus voltage `v_star`.
pub fn output_current(tx: VscParams, v_star: f64) -> Result<f64> {
    tx.validate()?;
    Ok((tx.v - v_star) / tx.r_d)
}

/// Power delivered to the load, `(v*)² / r`.
pub fn output_power(tx: VscParams, rx: VscParams, load: impl Into<Load>) -> Result<f64> {
    let load = load.into();
    let v = bus_voltage(tx, rx, load)?;
    Ok(v * v * load.conductance()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadDistribution {
    Uniform,
    PointMass,
}

/// Load support and distribution. A point mass has `r_min == r_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadModel {
    pub r_min: f64,
    pub r_max: f64,
    pub distribution: LoadDistribution,
}

pub(crate) const QUAD_REL_TOL: f64 = 1e-12;

impl LoadModel {
    pub fn uniform(r_min: f64, r_max: f64) -> Result<Self> {
        let m = Self {
            r_min,
            r_max,
            distribution: LoadDistribution::Uniform,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn point(r: f64) -> Result<Self> {
        let m = Self {
            r_min: r,
            r_max: r,
            distribution: LoadDistribution::PointMass,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("r_min", self.r_min)?;
        require_positive("r_max", self.r_max)?;
        if self.r_min > self.r_max {
            return Err(Error::Domain(format!(
                "r_min ({}) exceeds r_max ({})",
                self.r_min, self.r_max
            )));
        }
        if self.distribution == LoadDistribution::PointMass && self.r_min != self.r_max {
            return Err(Error::Domain("point-mass load needs r_min == r_max".into()));
        }
        Ok(())
    }

    /// Load used to order constellation symbols: the middle of the support.
    pub fn reference_load(&self) -> f64 {
        0.5 * (self.r_min + self.r_max)
    }

    /// `E_R[f(R)]`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        self.partial_expectation(self.r_min, self.r_max, f)
    }

    /// `E_R[f(R) 1{lo <= R <= hi}]`, with `[lo, hi]` clamped to the support.
    pub fn partial_expectation<F: Fn(f64) -> f64>(&self, lo: f64, hi: f64, f: F) -> Result<f64> {
        self.partial_expectation_tol(lo, hi, 0.0, f)
    }

    /// As [`Self::partial_expectation`] with an absolute error floor for
    /// integrands that may vanish identically.
    pub fn partial_expectation_tol<F: Fn(f64) -> f64>(&self, lo: f64, hi: f64, abs_tol: f64, f: F) -> Result<f64> {
        match self.distribution {
            LoadDistribution::PointMass => {
                let r = self.r_min;
                Ok(if lo <= r && r <= hi { f(r) } else { 0.0 })
            }
            LoadDistribution::Uniform => {
                let a = lo.max(self.r_min);
                let b = hi.min(self.r_max);
                if b <= a {
                    return Ok(0.0);
                }
                let width = self.r_max - self.r_min;
                numeric::integrate(f, a, b, QUAD_REL_TOL, abs_tol * width).map(|v| v / width)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.distribution {
            LoadDistribution::PointMass => self.r_min,
            LoadDistribution::Uniform => rng.gen_range(self.r_min..=self.r_max),
        }
    }
}

/// A complete power-talk scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Receiver operating point (v_b, r_db), held fixed while listening.
    pub receiver: VscParams,
    /// Nominal transmitter operating point.
    pub pilot: VscParams,
    pub load: LoadModel,
    pub constraints: ConstraintSet,
    pub sampling: SamplingConfig,
    /// Relative power-deviation budget.
    pub gamma: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            receiver: VscParams { v: 400.0, r_d: 1.0 },
            pilot: VscParams { v: 400.0, r_d: 0.5 },
            load: LoadModel {
                r_min: 10.0,
                r_max: 100.0,
                distribution: LoadDistribution::Uniform,
            },
            constraints: ConstraintSet {
                v_min: 385.0,
                v_max: 410.0,
                i_a_max: 30.0,
            },
            sampling: SamplingConfig::from_sigma(0.1, 100),
            gamma: 0.004,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.receiver.validate()?;
        self.pilot.validate()?;
        self.load.validate()?;
        self.constraints.validate()?;
        self.sampling.validate()?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !signaling::is_feasible(self.pilot, self) {
            return Err(Error::Config(
                "pilot violates the constraint set somewhere on [r_min, r_max]".into(),
            ));
        }
        Ok(())
    }

    pub fn state_at(&self, r: f64) -> Result<TheveninState> {
        thevenin(self.receiver, r)
    }

    /// Bus voltage produced by `sym` at load `r`.
    pub fn v_star(&self, sym: VscParams, r: f64) -> Result<f64> {
        bus_voltage_thevenin(sym, self.state_at(r)?)
    }

    /// Load power produced by `sym` at load `r`.
    pub fn power(&self, sym: VscParams, r: f64) -> Result<f64> {
        output_power(sym, self.receiver, r)
    }
}
