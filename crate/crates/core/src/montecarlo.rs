//! End-to-end simulation of the receive chain.
//!
//! The load is redrawn once per block of symbols. Each block runs on its own
//! random substream, and blocks are tallied with integer counters, so a run is
//! reproducible from its seed whatever the number of worker threads.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::adaptive::{policy_average_ser, AdaptivePolicy};
use crate::circuit::{channel_output, SystemConfig, TheveninState, VscParams};
use crate::constellation::{Constellation, Family};
use crate::detection::{average_ser, estimate_channel_state, estimate_line, DetectedLine, Detector};
use crate::error::{Error, Result};
use crate::rng::{substream, with_workers, Domain};

/// What the transmitter sends: one constellation, or a policy that switches
/// constellations with the channel state.
#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Constellation(Constellation),
    Policy(AdaptivePolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Synthesize every bus-voltage sample of the slot.
    Raw,
    /// Draw the two half-slot means directly from their Gaussian law.
    Direct,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Mode::Raw),
            "direct" => Ok(Mode::Direct),
            _ => Err(Error::Input(format!("unknown simulation mode '{s}' (raw|direct)"))),
        }
    }
}

/// Channel-state information available to the receiver.
#[derive(Debug, Clone, PartialEq)]
pub enum Csi {
    Perfect,
    /// Estimated once per block from these training symbols, each observed
    /// for one slot.
    Estimated { training: Vec<VscParams> },
}

/// Simulation knobs shared by single runs and sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub trials: u64,
    /// Symbols per load realization.
    pub block_length: u64,
    pub seed: u64,
    pub mode: Mode,
    pub csi: Csi,
    /// Number of equal-width load bins for the conditional histogram; 0 disables it.
    pub r_bins: usize,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            trials: 1_000_000,
            block_length: 100,
            seed: 0,
            mode: Mode::Direct,
            csi: Csi::Perfect,
            r_bins: 0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub cfg: SystemConfig,
    pub scheme: Scheme,
    pub settings: McSettings,
}

impl SimulationSpec {
    pub fn new(cfg: SystemConfig, scheme: Scheme, settings: McSettings) -> Self {
        Self { cfg, scheme, settings }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        if s.trials == 0 {
            return Err(Error::Input("trials must be >= 1".into()));
        }
        if s.block_length == 0 {
            return Err(Error::Input("block_length must be >= 1".into()));
        }
        if s.workers == Some(0) {
            return Err(Error::Input("workers must be >= 1".into()));
        }
        self.cfg.sampling.validate()?;
        self.cfg.load.validate()?;
        self.cfg.receiver.validate()?;
        match &self.scheme {
            Scheme::Constellation(c) if c.is_empty() => Err(Error::Input("empty constellation".into())),
            Scheme::Policy(p) if p.constituents.is_empty() => Err(Error::Input("empty policy".into())),
            _ => Ok(()),
        }
    }
}

/// Errors and trials for loads falling in `[r_low, r_high)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinStat {
    pub r_low: f64,
    pub r_high: f64,
    pub errors: u64,
    pub trials: u64,
}

impl BinStat {
    pub fn ser(&self) -> f64 {
        if self.trials == 0 {
            f64::NAN
        } else {
            self.errors as f64 / self.trials as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub errors: u64,
    pub trials: u64,
    pub ser: f64,
    /// Binomial standard error `sqrt(ser (1 - ser) / trials)`.
    pub std_error: f64,
    pub bins: Vec<BinStat>,
    pub elapsed: Duration,
}

struct Tally {
    errors: u64,
    bins: Vec<(u64, u64)>,
}

impl Tally {
    fn empty(n_bins: usize) -> Self {
        Self {
            errors: 0,
            bins: vec![(0, 0); n_bins],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.errors += other.errors;
        for (a, b) in self.bins.iter_mut().zip(other.bins) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Mean of `n` noisy samples of a constant voltage, drawn sample by sample.
fn slot_mean(v: f64, sigma_m: f64, n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut acc = 0.0;
    for _ in 0..n {
        acc += v + sigma_m * gauss(rng);
    }
    acc / n as f64
}

fn receiver_state(
    csi: &Csi,
    truth: TheveninState,
    cfg: &SystemConfig,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<TheveninState> {
    match csi {
        Csi::Perfect => Ok(truth),
        Csi::Estimated { training } => {
            let n = cfg.sampling.n_samples;
            let sd = cfg.sampling.sigma_m / (n as f64).sqrt();
            let pairs: Vec<(VscParams, f64)> = training
                .iter()
                .map(|&s| {
                    let v = channel_output(s, truth);
                    let m = match mode {
                        Mode::Raw => slot_mean(v, cfg.sampling.sigma_m, n, rng),
                        Mode::Direct => v + sd * gauss(rng),
                    };
                    (s, m)
                })
                .collect();
            estimate_channel_state(&pairs)
        }
    }
}

fn run_block(spec: &SimulationSpec, block: u64, n_trials: u64) -> Result<Tally> {
    let cfg = &spec.cfg;
    let s = &spec.settings;
    let mut rng = substream(s.seed, Domain::Block, block);
    let r = cfg.load.sample(&mut rng);
    let truth = cfg.state_at(r)?;
    let rx = receiver_state(&s.csi, truth, cfg, s.mode, &mut rng)?;
    let c = match &spec.scheme {
        Scheme::Constellation(c) => c,
        Scheme::Policy(p) => match s.csi {
            Csi::Perfect => &p.constituents[p.select_by_r(r)],
            Csi::Estimated { .. } => &p.constituents[p.select_by_h(rx.h)],
        },
    };
    let detector = Detector::new(c, rx);
    let outputs: Vec<f64> = c.symbols.iter().map(|&x| channel_output(x, truth)).collect();

    let n = cfg.sampling.n_samples;
    let sigma_m = cfg.sampling.sigma_m;
    let sigma = cfg.sampling.sigma();
    let mut samples = vec![0.0; n];
    let mut errors = 0;
    for _ in 0..n_trials {
        let sent = rng.gen_range(0..c.len());
        let v = outputs[sent];
        let line = match s.mode {
            Mode::Raw => {
                for x in samples.iter_mut() {
                    *x = v + sigma_m * gauss(&mut rng);
                }
                estimate_line(&samples, rx)?
            }
            Mode::Direct => {
                let v1 = v + sigma * gauss(&mut rng);
                let v2 = v + sigma * gauss(&mut rng);
                DetectedLine {
                    k: (v2 - rx.g) / rx.h,
                    n: v1,
                }
            }
        };
        if detector.decide(line) != sent {
            errors += 1;
        }
    }

    let mut tally = Tally::empty(s.r_bins);
    tally.errors = errors;
    if s.r_bins > 0 {
        let b = bin_of(r, cfg, s.r_bins);
        tally.bins[b] = (errors, n_trials);
    }
    Ok(tally)
}

fn bin_of(r: f64, cfg: &SystemConfig, n_bins: usize) -> usize {
    let (lo, hi) = (cfg.load.r_min, cfg.load.r_max);
    if hi <= lo {
        return 0;
    }
    (((r - lo) / (hi - lo) * n_bins as f64) as usize).min(n_bins - 1)
}

/// Simulates `spec.settings.trials` equally likely symbols through the full
/// receive chain and counts detection errors.
pub fn run(spec: &SimulationSpec) -> Result<SimulationResult> {
    spec.validate()?;
    let start = Instant::now();
    let s = &spec.settings;
    let n_blocks = s.trials.div_ceil(s.block_length);
    let tally = with_workers(s.workers, || {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let len = s.block_length.min(s.trials - b * s.block_length);
                run_block(spec, b, len)
            })
            .try_reduce(|| Tally::empty(s.r_bins), |a, b| Ok(a.merge(b)))
    })?;

    let ser = tally.errors as f64 / s.trials as f64;
    let (lo, hi) = (spec.cfg.load.r_min, spec.cfg.load.r_max);
    let width = (hi - lo) / s.r_bins.max(1) as f64;
    let bins = tally
        .bins
        .iter()
        .enumerate()
        .map(|(i, &(errors, trials))| BinStat {
            r_low: lo + width * i as f64,
            r_high: if i + 1 == s.r_bins { hi } else { lo + width * (i + 1) as f64 },
            errors,
            trials,
        })
        .collect();
    Ok(SimulationResult {
        errors: tally.errors,
        trials: s.trials,
        ser,
        std_error: (ser * (1.0 - ser) / s.trials as f64).sqrt(),
        bins,
        elapsed: start.elapsed(),
    })
}

/// One row of an order sweep. Empirical columns are `None` when Monte Carlo
/// was not requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRow {
    pub m: usize,
    pub analytic: f64,
    pub empirical: Option<f64>,
    pub std_error: Option<f64>,
}

/// What to sweep over the constellation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    Family(Family),
    /// Switching policy over the three designed families of each order.
    Adaptive { resolution: usize },
}

/// Analytic and optionally simulated error rate for each order in `m_list`.
pub fn sweep_order(
    target: SweepTarget,
    m_list: &[usize],
    cfg: &SystemConfig,
    mc: Option<&McSettings>,
) -> Result<Vec<OrderRow>> {
    m_list
        .iter()
        .map(|&m| {
            let (scheme, analytic) = match target {
                SweepTarget::Family(f) => {
                    let c = Constellation::design(f, m, cfg)?;
                    let p = average_ser(&c, cfg)?;
                    (Scheme::Constellation(c), p)
                }
                SweepTarget::Adaptive { resolution } => {
                    let cs = Family::DESIGNED
                        .iter()
                        .map(|&f| Constellation::design(f, m, cfg))
                        .collect::<Result<Vec<_>>>()?;
                    let p = crate::adaptive::build_policy(cs, cfg, resolution)?;
                    let pe = policy_average_ser(&p, cfg)?;
                    (Scheme::Policy(p), pe)
                }
            };
            let (empirical, std_error) = match mc {
                Some(settings) => {
                    let res = run(&SimulationSpec::new(cfg.clone(), scheme, settings.clone()))?;
                    (Some(res.ser), Some(res.std_error))
                }
                None => (None, None),
            };
            Ok(OrderRow {
                m,
                analytic,
                empirical,
                std_error,
            })
        })
        .collect()
}

/// Repeated training exchanges at a fixed load, for each slot length.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSettings {
    pub symbols: Vec<VscParams>,
    pub load: f64,
    pub n_list: Vec<usize>,
    pub reps: u64,
    pub seed: u64,
    pub workers: Option<usize>,
}

/// Statistics of the channel-state estimate for one slot length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRow {
    pub n_samples: usize,
    pub g_true: f64,
    pub h_true: f64,
    pub g_mean: f64,
    pub h_mean: f64,
    pub g_std: f64,
    pub h_std: f64,
    /// Repetitions whose estimate was non-physical and left out.
    pub failures: u64,
}

/// Simulates `reps` training exchanges per slot length, each training symbol
/// observed through `N` raw noisy samples, and summarizes the estimates.
pub fn training_experiment(cfg: &SystemConfig, t: &TrainingSettings) -> Result<Vec<EstimateRow>> {
    if t.reps < 2 {
        return Err(Error::Input("training needs at least two repetitions".into()));
    }
    let truth = cfg.state_at(t.load)?;
    // reject degenerate training up front with noiseless measurements
    let exact: Vec<_> = t.symbols.iter().map(|&s| (s, channel_output(s, truth))).collect();
    estimate_channel_state(&exact)?;
    let sigma_m = cfg.sampling.sigma_m;
    with_workers(t.workers, || {
        t.n_list
            .iter()
            .enumerate()
            .map(|(ni, &n)| {
                if n == 0 {
                    return Err(Error::Input("slot length must be >= 1".into()));
                }
                let estimates: Vec<Option<TheveninState>> = (0..t.reps)
                    .into_par_iter()
                    .map(|rep| {
                        let mut rng = substream(t.seed, Domain::Training, ni as u64 * t.reps + rep);
                        let pairs: Vec<_> = exact
                            .iter()
                            .map(|&(s, v)| (s, slot_mean(v, sigma_m, n, &mut rng)))
                            .collect();
                        estimate_channel_state(&pairs).ok()
                    })
                    .collect();
                let ok: Vec<TheveninState> = estimates.iter().flatten().copied().collect();
                if ok.len() < 2 {
                    return Err(Error::NonPhysicalEstimate(format!(
                        "only {} of {} repetitions gave a physical estimate at N = {n}",
                        ok.len(),
                        t.reps
                    )));
                }
                let (g_mean, g_std) = mean_std(ok.iter().map(|s| s.g));
                let (h_mean, h_std) = mean_std(ok.iter().map(|s| s.h));
                Ok(EstimateRow {
                    n_samples: n,
                    g_true: truth.g,
                    h_true: truth.h,
                    g_mean,
                    h_mean,
                    g_std,
                    h_std,
                    failures: t.reps - ok.len() as u64,
                })
            })
            .collect()
    })
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
