//! Receiver side: sampling model, line estimation, maximum-likelihood
//! detection with known channel state, closed-form symbol error rates and
//! least-squares channel-state estimation from training symbols.

use crate::circuit::{channel_output, SystemConfig, TheveninState, VscParams};
use crate::constellation::Constellation;
use crate::error::{Error, Result};

/// Bus-voltage sampling within one signaling slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    /// Per-sample measurement noise standard deviation (V).
    pub sigma_m: f64,
    /// Samples per slot; split into two halves for the line estimate.
    pub n_samples: usize,
    /// Sampling rate (Hz), informational.
    pub f_s: Option<f64>,
    /// Slot duration (s), informational.
    pub t_slot: Option<f64>,
}

impl SamplingConfig {
    pub fn new(sigma_m: f64, n_samples: usize) -> Self {
        Self {
            sigma_m,
            n_samples,
            f_s: None,
            t_slot: None,
        }
    }

    /// Sampling that yields an effective line noise `sigma` with `n_samples`
    /// samples per slot.
    pub fn from_sigma(sigma: f64, n_samples: usize) -> Self {
        Self::new(sigma * (n_samples as f64 / 2.0).sqrt(), n_samples)
    }

    /// Effective noise of each half-slot voltage estimate, `σ² = 2σ_m²/N`.
    pub fn sigma(&self) -> f64 {
        (2.0 * self.sigma_m * self.sigma_m / self.n_samples as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_m >= 0.0 && self.sigma_m.is_finite()) {
            return Err(Error::Domain(format!("sigma_m must be >= 0, got {}", self.sigma_m)));
        }
        if self.n_samples < 2 || !self.n_samples.is_multiple_of(2) {
            return Err(Error::Domain(format!(
                "samples per slot must be even and >= 2, got {}",
                self.n_samples
            )));
        }
        if let (Some(fs), Some(ts)) = (self.f_s, self.t_slot) {
            if (fs * ts).round() as usize != self.n_samples {
                return Err(Error::Domain(format!(
                    "f_s * T_S = {} does not match N = {}",
                    fs * ts,
                    self.n_samples
                )));
            }
        }
        Ok(())
    }
}

/// Standard normal tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// A point `(k, n)` of the detection space: slope and intercept of the line
/// of operating points consistent with an observed bus voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedLine {
    pub k: f64,
    pub n: f64,
}

impl DetectedLine {
    /// Noiseless line produced by `sym` in `state`.
    pub fn of(sym: VscParams, state: TheveninState) -> Self {
        let v = channel_output(sym, state);
        Self {
            k: (v - state.g) / state.h,
            n: v,
        }
    }
}

/// Gaussian law of the estimated line given the transmitted symbol's output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineDistribution {
    pub mean_k: f64,
    pub mean_n: f64,
    pub var_k: f64,
    pub var_n: f64,
}

impl LineDistribution {
    pub fn new(v_star: f64, state: TheveninState, sigma: f64) -> Self {
        let var = sigma * sigma;
        Self {
            mean_k: (v_star - state.g) / state.h,
            mean_n: v_star,
            var_k: var / (state.h * state.h),
            var_n: var,
        }
    }

    pub fn log_density(&self, line: DetectedLine) -> f64 {
        let dk = line.k - self.mean_k;
        let dn = line.n - self.mean_n;
        -0.5 * (dk * dk / self.var_k + dn * dn / self.var_n)
            - 0.5 * (self.var_k * self.var_n).ln()
            - std::f64::consts::LN_2
            - std::f64::consts::PI.ln()
    }
}

/// ML line estimate from one slot of bus-voltage samples: the intercept comes
/// from the first half, the slope from the second.
pub fn estimate_line(samples: &[f64], state: TheveninState) -> Result<DetectedLine> {
    if samples.is_empty() || !samples.len().is_multiple_of(2) {
        return Err(Error::Input(format!(
            "need a non-empty even number of samples, got {}",
            samples.len()
        )));
    }
    let half = samples.len() / 2;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let v1 = mean(&samples[..half]);
    let v2 = mean(&samples[half..]);
    Ok(DetectedLine {
        k: (v2 - state.g) / state.h,
        n: v1,
    })
}

/// Sufficient statistic `n + h k + g`; noiseless value is `2 v*`.
#[inline]
pub fn decision_statistic(line: DetectedLine, state: TheveninState) -> f64 {
    line.n + state.h * line.k + state.g
}

/// Interval detector for one constellation in one channel state.
#[derive(Debug, Clone)]
pub struct Detector {
    /// Symbol indices sorted by decreasing bus voltage.
    order: Vec<usize>,
    /// `v*_i + v*_{i+1}` in sorted order (decreasing).
    thresholds: Vec<f64>,
    state: TheveninState,
}

impl Detector {
    pub fn new(c: &Constellation, state: TheveninState) -> Self {
        let outputs: Vec<f64> = c.symbols.iter().map(|&s| channel_output(s, state)).collect();
        let order = descending_order(&outputs);
        let thresholds = order
            .windows(2)
            .map(|w| outputs[w[0]] + outputs[w[1]])
            .collect();
        Self {
            order,
            thresholds,
            state,
        }
    }

    /// Decides the constellation index of the transmitted symbol. A statistic
    /// exactly on a boundary goes to the higher-voltage symbol.
    pub fn decide(&self, line: DetectedLine) -> usize {
        let t = decision_statistic(line, self.state);
        // thresholds decrease, so the first one not above t fixes the rank
        let rank = self.thresholds.partition_point(|&tau| tau > t);
        self.order[rank]
    }
}

/// Indices sorted by decreasing value; ties keep the lower index first.
pub(crate) fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Maximum-likelihood decision for a single estimated line.
pub fn mld_decide(line: DetectedLine, c: &Constellation, state: TheveninState) -> usize {
    Detector::new(c, state).decide(line)
}

/// Error probability of either symbol of a binary constellation with outputs
/// `v1 > v2`. The lower symbol's `1 - Q((v2 - v1)/(σ√2))` is the same number.
///
/// With `sigma == 0` the limit is 0 for distinct outputs and 1/2 otherwise.
pub fn binary_error_prob(v1: f64, v2: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return if v1 != v2 { 0.0 } else { 0.5 };
    }
    q_function((v1 - v2) / (sigma * std::f64::consts::SQRT_2))
}

/// Symbol error probability given the load from sorted output voltages.
pub fn ser_from_outputs(outputs: &[f64], sigma: f64) -> f64 {
    let m = outputs.len();
    let order = descending_order(outputs);
    let sum: f64 = order
        .windows(2)
        .map(|w| binary_error_prob(outputs[w[0]], outputs[w[1]], sigma))
        .sum();
    2.0 / m as f64 * sum
}

/// Symbol error probability of `c` at load `r`, equally likely symbols.
pub fn conditional_ser(c: &Constellation, cfg: &SystemConfig, r: f64, sigma: f64) -> Result<f64> {
    let state = cfg.state_at(r)?;
    Ok(ser_from_outputs(&c.outputs(state), sigma))
}

/// Absolute accuracy of load-averaged error probabilities. Output gaps are
/// differences of ~1e2 V voltages, so the conditional error carries round-off
/// near 1e-13 and a tighter or purely relative target is unreachable.
pub const SER_ABS_TOL: f64 = 1e-11;

/// Symbol error probability averaged over the load distribution.
pub fn average_ser(c: &Constellation, cfg: &SystemConfig) -> Result<f64> {
    let sigma = cfg.sampling.sigma();
    let rx = cfg.receiver;
    let p = cfg.load.partial_expectation_tol(cfg.load.r_min, cfg.load.r_max, SER_ABS_TOL, |r| {
        let state = crate::circuit::thevenin(rx, r).expect("load support validated");
        ser_from_outputs(&c.outputs(state), sigma)
    })?;
    Ok(p.clamp(0.0, 1.0))
}

/// Least-squares channel-state estimate from `(symbol, measured bus voltage)`
/// training pairs.
///
/// Each pair gives `w - v̂ u = (v̂ - v_a)/r_da` with `u = 1/h`, `w = g/h`; the
/// fit is a centred linear regression of the right-hand side on `v̂`.
pub fn estimate_channel_state(training: &[(VscParams, f64)]) -> Result<TheveninState> {
    if training.len() < 2 {
        return Err(Error::DegenerateTraining(format!(
            "need at least two training pairs, got {}",
            training.len()
        )));
    }
    for (sym, v) in training {
        sym.validate()?;
        if !v.is_finite() {
            return Err(Error::Input(format!("non-finite measured voltage {v}")));
        }
    }
    let n = training.len() as f64;
    let rhs: Vec<f64> = training.iter().map(|(s, v)| (v - s.v) / s.r_d).collect();
    let v_mean = training.iter().map(|(_, v)| v).sum::<f64>() / n;
    let b_mean = rhs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((_, v), b) in training.iter().zip(&rhs) {
        let dv = v - v_mean;
        sxx += dv * dv;
        sxy += dv * (b - b_mean);
    }
    if !(sxx > (1e-13 * v_mean.abs()).powi(2) * n) {
        return Err(Error::DegenerateTraining(
            "training outputs are identical; the system is singular".into(),
        ));
    }
    let u = -sxy / sxx;
    let w = b_mean + u * v_mean;
    if !(u > 0.0) {
        return Err(Error::NonPhysicalEstimate(format!("1/h estimate {u} is not positive")));
    }
    let h = 1.0 / u;
    let g = w / u;
    if !(g > 0.0) {
        return Err(Error::NonPhysicalEstimate(format!("g estimate {g} is not positive")));
    }
    Ok(TheveninState { g, h })
}
