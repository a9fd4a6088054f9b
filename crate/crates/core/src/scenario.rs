//! Scenario files: line-oriented `key = value` text.
//!
//! `#` starts a comment. Unknown keys and repeated keys are rejected. The
//! system keys are required; experiment keys fall back to defaults.
//!
//! | key | unit | meaning |
//! |-----|------|---------|
//! | `v_b`, `r_db` | V, Ω | receiver reference voltage and virtual resistance |
//! | `v_a0`, `r_da0` | V, Ω | transmitter pilot |
//! | `v_min`, `v_max` | V | admissible bus-voltage band |
//! | `i_a_max` | A | transmitter current limit |
//! | `load_distribution` | | `uniform` (default) or `point` |
//! | `r_min`, `r_max` | Ω | uniform load support |
//! | `load_point` | Ω | point-mass load |
//! | `sigma` or `sigma_m` | V | half-slot estimate noise, or per-sample noise |
//! | `n_samples` | | samples per slot (even) |
//! | `f_s`, `t_slot` | Hz, s | optional; must satisfy `f_s * t_slot = n_samples` |
//! | `gamma` | | power-deviation budget |
//! | `seed` | | master seed |
//! | `trials`, `block_length` | | Monte Carlo size and symbols per load draw |
//! | `mc_mode` | | `direct` or `raw` |
//! | `csi` | | `perfect` or `estimated` (uses the training symbols) |
//! | `r_bins` | | conditional-histogram bins |
//! | `grid_resolution`, `hull_rays` | | signaling-space grid and hull sizes |
//! | `family`, `m`, `m_list` | | constellation selection |
//! | `policy_grid` | | construction grid for adaptive thresholds |
//! | `curve_points` | | load points of conditional-error curves |
//! | `training_symbols` | V:Ω | e.g. `400:0.5, 398:0.5` |
//! | `training_reps`, `training_n_list`, `training_load` | , , Ω | training experiment |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::circuit::{LoadDistribution, LoadModel, SystemConfig, VscParams};
use crate::constellation::Family;
use crate::detection::SamplingConfig;
use crate::error::{Error, Result};
use crate::montecarlo::Mode;
use crate::signaling::{ConstraintSet, DEFAULT_HULL_RAYS};

const SYSTEM_KEYS: &[&str] = &[
    "v_b", "r_db", "v_a0", "r_da0", "v_min", "v_max", "i_a_max", "n_samples", "gamma",
];

const OPTIONAL_KEYS: &[&str] = &[
    "load_distribution",
    "r_min",
    "r_max",
    "load_point",
    "sigma",
    "sigma_m",
    "f_s",
    "t_slot",
    "seed",
    "trials",
    "block_length",
    "mc_mode",
    "csi",
    "r_bins",
    "grid_resolution",
    "hull_rays",
    "family",
    "m",
    "m_list",
    "policy_grid",
    "curve_points",
    "training_symbols",
    "training_reps",
    "training_n_list",
    "training_load",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemConfig,
    pub seed: u64,
    pub trials: u64,
    pub block_length: u64,
    pub mc_mode: Mode,
    pub estimated_csi: bool,
    pub r_bins: usize,
    pub grid_resolution: usize,
    pub hull_rays: usize,
    pub family: Family,
    pub m: usize,
    pub m_list: Vec<usize>,
    pub policy_grid: usize,
    pub curve_points: usize,
    pub training_symbols: Vec<VscParams>,
    pub training_reps: u64,
    pub training_n_list: Vec<usize>,
    pub training_load: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        let system = SystemConfig::default();
        let training_load = system.load.reference_load();
        Self {
            system,
            seed: 1,
            trials: 100_000,
            block_length: 100,
            mc_mode: Mode::Direct,
            estimated_csi: false,
            r_bins: 0,
            grid_resolution: 61,
            hull_rays: DEFAULT_HULL_RAYS,
            family: Family::Diagonal,
            m: 4,
            m_list: vec![2, 4, 8, 16],
            policy_grid: crate::adaptive::DEFAULT_POLICY_RESOLUTION,
            curve_points: 201,
            training_symbols: vec![
                VscParams { v: 400.0, r_d: 0.5 },
                VscParams { v: 398.0, r_d: 0.5 },
                VscParams { v: 402.0, r_d: 0.6 },
            ],
            training_reps: 1000,
            training_n_list: vec![100, 1000, 10_000],
            training_load,
        }
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse {key} = '{v}'"))),
        }
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => items(v)
                .map(|x| {
                    x.parse()
                        .map_err(|_| Error::Config(format!("line {line}: bad entry '{x}' in {key}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }
}

fn items(v: &str) -> impl Iterator<Item = &str> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty())
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value")))?;
        let key = key.trim().to_string();
        if !SYSTEM_KEYS.contains(&key.as_str()) && !OPTIONAL_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {line_no}: unknown key '{key}'")));
        }
        if map.insert(key.clone(), (line_no, value.trim().to_string())).is_some() {
            return Err(Error::Config(format!("line {line_no}: duplicate key '{key}'")));
        }
    }
    Ok(Entries { map })
}

fn parse_symbol(s: &str) -> Result<VscParams> {
    let (v, r) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("training symbol '{s}' must be v:r_d")))?;
    let parse = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number in training symbol '{s}'")))
    };
    VscParams::new(parse(v)?, parse(r)?)
}

impl Scenario {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let e = tokenize(text)?;
        let d = Scenario::default();

        let receiver = VscParams::new(e.required("v_b")?, e.required("r_db")?)?;
        let pilot = VscParams::new(e.required("v_a0")?, e.required("r_da0")?)?;
        let constraints = ConstraintSet {
            v_min: e.required("v_min")?,
            v_max: e.required("v_max")?,
            i_a_max: e.required("i_a_max")?,
        };
        let dist = e.parse::<String>("load_distribution")?.unwrap_or_else(|| "uniform".into());
        let load = match dist.as_str() {
            "uniform" => LoadModel::uniform(e.required("r_min")?, e.required("r_max")?)?,
            "point" => LoadModel::point(e.required("load_point")?)?,
            other => return Err(Error::Config(format!("unknown load_distribution '{other}'"))),
        };
        let n_samples: usize = e.required("n_samples")?;
        let mut sampling = match (e.parse::<f64>("sigma")?, e.parse::<f64>("sigma_m")?) {
            (Some(s), None) => SamplingConfig::from_sigma(s, n_samples),
            (None, Some(sm)) => SamplingConfig::new(sm, n_samples),
            (Some(_), Some(_)) => return Err(Error::Config("give either sigma or sigma_m, not both".into())),
            (None, None) => return Err(Error::Config("missing required key 'sigma' (or 'sigma_m')".into())),
        };
        sampling.f_s = e.parse("f_s")?;
        sampling.t_slot = e.parse("t_slot")?;
        let system = SystemConfig {
            receiver,
            pilot,
            load,
            constraints,
            sampling,
            gamma: e.required("gamma")?,
        };
        system.validate()?;

        let csi = e.parse::<String>("csi")?.unwrap_or_else(|| "perfect".into());
        let estimated_csi = match csi.as_str() {
            "perfect" => false,
            "estimated" => true,
            other => return Err(Error::Config(format!("unknown csi '{other}' (perfect|estimated)"))),
        };
        let mc_mode = match e.raw("mc_mode") {
            Some((_, v)) => v.parse().map_err(|err: Error| Error::Config(err.to_string()))?,
            None => d.mc_mode,
        };
        let family = match e.raw("family") {
            Some((_, v)) => v.parse().map_err(|err: Error| Error::Config(err.to_string()))?,
            None => d.family,
        };
        let training_symbols = match e.raw("training_symbols") {
            Some((_, v)) => items(v).map(parse_symbol).collect::<Result<Vec<_>>>()?,
            None => d.training_symbols,
        };

        let s = Scenario {
            training_load: e.parse("training_load")?.unwrap_or(system.load.reference_load()),
            system,
            seed: e.parse("seed")?.unwrap_or(d.seed),
            trials: e.parse("trials")?.unwrap_or(d.trials),
            block_length: e.parse("block_length")?.unwrap_or(d.block_length),
            mc_mode,
            estimated_csi,
            r_bins: e.parse("r_bins")?.unwrap_or(d.r_bins),
            grid_resolution: e.parse("grid_resolution")?.unwrap_or(d.grid_resolution),
            hull_rays: e.parse("hull_rays")?.unwrap_or(d.hull_rays),
            family,
            m: e.parse("m")?.unwrap_or(d.m),
            m_list: e.list("m_list")?.unwrap_or(d.m_list),
            policy_grid: e.parse("policy_grid")?.unwrap_or(d.policy_grid),
            curve_points: e.parse("curve_points")?.unwrap_or(d.curve_points),
            training_symbols,
            training_reps: e.parse("training_reps")?.unwrap_or(d.training_reps),
            training_n_list: e.list("training_n_list")?.unwrap_or(d.training_n_list),
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("trials", self.trials as usize),
            ("block_length", self.block_length as usize),
            ("grid_resolution", self.grid_resolution),
            ("hull_rays", self.hull_rays),
            ("m", self.m),
            ("curve_points", self.curve_points),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be >= 1")));
            }
        }
        if self.policy_grid < 2 {
            return Err(Error::Config("policy_grid must be >= 2".into()));
        }
        if self.m_list.is_empty() {
            return Err(Error::Config("m_list is empty".into()));
        }
        if !(self.training_load > 0.0) {
            return Err(Error::Config("training_load must be positive".into()));
        }
        Ok(())
    }

    /// Renders the scenario back to the file format.
    pub fn to_text(&self) -> String {
        let c = &self.system;
        let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("v_b", c.receiver.v.to_string());
        kv("r_db", c.receiver.r_d.to_string());
        kv("v_a0", c.pilot.v.to_string());
        kv("r_da0", c.pilot.r_d.to_string());
        kv("v_min", c.constraints.v_min.to_string());
        kv("v_max", c.constraints.v_max.to_string());
        kv("i_a_max", c.constraints.i_a_max.to_string());
        match c.load.distribution {
            LoadDistribution::Uniform => {
                kv("load_distribution", "uniform".into());
                kv("r_min", c.load.r_min.to_string());
                kv("r_max", c.load.r_max.to_string());
            }
            LoadDistribution::PointMass => {
                kv("load_distribution", "point".into());
                kv("load_point", c.load.r_min.to_string());
            }
        }
        kv("sigma_m", c.sampling.sigma_m.to_string());
        kv("n_samples", c.sampling.n_samples.to_string());
        if let Some(f) = c.sampling.f_s {
            kv("f_s", f.to_string());
        }
        if let Some(t) = c.sampling.t_slot {
            kv("t_slot", t.to_string());
        }
        kv("gamma", c.gamma.to_string());
        kv("seed", self.seed.to_string());
        kv("trials", self.trials.to_string());
        kv("block_length", self.block_length.to_string());
        kv("mc_mode", if self.mc_mode == Mode::Raw { "raw" } else { "direct" }.into());
        kv("csi", if self.estimated_csi { "estimated" } else { "perfect" }.into());
        kv("r_bins", self.r_bins.to_string());
        kv("grid_resolution", self.grid_resolution.to_string());
        kv("hull_rays", self.hull_rays.to_string());
        kv("family", self.family.name().into());
        kv("m", self.m.to_string());
        kv("m_list", join(&self.m_list));
        kv("policy_grid", self.policy_grid.to_string());
        kv("curve_points", self.curve_points.to_string());
        kv(
            "training_symbols",
            self.training_symbols
                .iter()
                .map(|s| format!("{}:{}", s.v, s.r_d))
                .collect::<Vec<_>>()
                .join(", "),
        );
        kv("training_reps", self.training_reps.to_string());
        kv("training_n_list", join(&self.training_n_list));
        kv("training_load", self.training_load.to_string());
        out
    }
}
