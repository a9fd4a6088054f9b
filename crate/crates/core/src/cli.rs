//! Command-line experiment runner. Every command reads a scenario file and
//! writes CSV tables into the output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::adaptive::{build_policy, error_curves, AdaptivePolicy};
use crate::constellation::{segments_intersect, to_segments, Constellation, Family};
use crate::error::{Error, Result};
use crate::montecarlo::{self, Csi, McSettings, SweepTarget, TrainingSettings};
use crate::numeric::linspace;
use crate::rng::with_workers;
use crate::scenario::Scenario;
use crate::signaling::{gamma_hull, power_deviation, render_grid, GridSpec};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "POWERTALK_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "powertalk", version, about = "Power talk over DC microgrid buses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (key = value lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Constellation family: fixed-va, fixed-rda, diagonal (or adaptive for `ser`).
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Constellation order; overrides the scenario's m / m_list.
    #[arg(long = "M", global = true)]
    pub m: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = SerMode::Analytic)]
    pub mode: SerMode,
    /// Master seed; overrides the scenario's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Signaling-space grid and γ-hull.
    Space,
    /// Constellation symbols, detection-space segments and their intersections.
    Design,
    /// Conditional error curves and error rate against constellation order.
    Ser,
    /// Adaptive switching thresholds.
    Thresholds,
    /// Channel-state estimation from training symbols.
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SerMode {
    Analytic,
    Mc,
    Both,
}

fn num(x: f64) -> String {
    format!("{x:.8e}")
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[&str]) -> Result<Self> {
        let path = dir.join(name);
        let mut writer = csv::Writer::from_path(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        writer.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
        Ok(Self { path, writer })
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) -> Result<()> {
        self.writer
            .write_record(cells.into_iter().collect::<Vec<_>>())
            .map_err(|e| Error::Io(format!("{}: {e}", self.path.display())))
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

struct Context {
    scenario: Scenario,
    out: PathBuf,
    family: Option<String>,
    m: Option<usize>,
    mode: SerMode,
}

impl Context {
    fn family(&self) -> Result<Family> {
        match &self.family {
            Some(f) => f.parse(),
            None => Ok(self.scenario.family),
        }
    }

    fn m_list(&self) -> Vec<usize> {
        match self.m {
            Some(m) => vec![m],
            None => self.scenario.m_list.clone(),
        }
    }

    fn mc_settings(&self) -> McSettings {
        let s = &self.scenario;
        McSettings {
            trials: s.trials,
            block_length: s.block_length,
            seed: s.seed,
            mode: s.mc_mode,
            csi: if s.estimated_csi {
                Csi::Estimated {
                    training: s.training_symbols.clone(),
                }
            } else {
                Csi::Perfect
            },
            r_bins: s.r_bins,
            workers: None,
        }
    }

    fn load_grid(&self) -> Vec<f64> {
        let load = &self.scenario.system.load;
        if load.r_min == load.r_max {
            vec![load.r_min]
        } else {
            linspace(load.r_min, load.r_max, self.scenario.curve_points.max(2))
        }
    }
}

fn designed(m: usize, ctx: &Context) -> Result<Vec<Constellation>> {
    Family::DESIGNED
        .iter()
        .map(|&f| Constellation::design(f, m, &ctx.scenario.system))
        .collect()
}

fn cmd_space(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.scenario.system;
    let grid = render_grid(cfg, GridSpec::around_pilot(cfg, ctx.scenario.grid_resolution))?;
    let mut t = Table::create(&ctx.out, "grid.csv", &["v_a", "r_da", "feasible", "delta", "region"])?;
    for (i_r, &r_da) in grid.r_da.iter().enumerate() {
        for (i_v, &v_a) in grid.v_a.iter().enumerate() {
            let k = grid.index(i_v, i_r);
            t.row([
                num(v_a),
                num(r_da),
                u8::from(grid.feasible[k]).to_string(),
                num(grid.delta[k]),
                grid.region[k].tag().to_string(),
            ])?;
        }
    }
    let grid_path = t.finish()?;

    let hull = gamma_hull(cfg, ctx.scenario.hull_rays)?;
    let mut t = Table::create(&ctx.out, "hull.csv", &["angle", "v_a", "r_da", "delta", "clipped"])?;
    for p in &hull.points {
        t.row([
            num(p.angle),
            num(p.point.v),
            num(p.point.r_d),
            num(p.delta),
            u8::from(p.clipped).to_string(),
        ])?;
    }
    Ok(vec![grid_path, t.finish()?])
}

fn cmd_design(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.scenario.system;
    let m = ctx.m.unwrap_or(ctx.scenario.m);
    let c = Constellation::design(ctx.family()?, m, cfg)?;

    let mut t = Table::create(&ctx.out, "symbols.csv", &["i", "v_a", "r_da", "delta"])?;
    for (i, s) in c.symbols.iter().enumerate() {
        t.row([i.to_string(), num(s.v), num(s.r_d), num(power_deviation(*s, cfg)?)])?;
    }
    let symbols = t.finish()?;

    let mut t = Table::create(&ctx.out, "segments.csv", &["i", "k_rmin", "n_rmin", "k_rmax", "n_rmax"])?;
    for s in to_segments(&c, cfg)? {
        t.row([
            s.index.to_string(),
            num(s.at_r_min.k),
            num(s.at_r_min.n),
            num(s.at_r_max.k),
            num(s.at_r_max.n),
        ])?;
    }
    let segments = t.finish()?;

    let mut t = Table::create(&ctx.out, "intersections.csv", &["i", "j", "r_star"])?;
    for x in segments_intersect(&c, cfg)? {
        t.row([x.i.to_string(), x.j.to_string(), num(x.r_star)])?;
    }
    Ok(vec![symbols, segments, t.finish()?])
}

fn cmd_ser(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.scenario.system;
    let adaptive = matches!(ctx.family.as_deref(), Some("adaptive") | Some("policy"));
    let (target, name) = if adaptive {
        (
            SweepTarget::Adaptive {
                resolution: ctx.scenario.policy_grid,
            },
            "adaptive".to_string(),
        )
    } else {
        let f = ctx.family()?;
        (SweepTarget::Family(f), f.name().to_string())
    };
    let m_list = ctx.m_list();
    let mut written = Vec::new();

    if ctx.mode != SerMode::Mc {
        let r_grid = ctx.load_grid();
        for &m in &m_list {
            let curve = if adaptive {
                let p = build_policy(designed(m, ctx)?, cfg, ctx.scenario.policy_grid)?;
                warn_unused(&p);
                r_grid
                    .iter()
                    .map(|&r| p.conditional_ser(cfg, r))
                    .collect::<Result<Vec<_>>>()?
            } else {
                let f = ctx.family()?;
                let c = Constellation::design(f, m, cfg)?;
                error_curves(std::slice::from_ref(&c), cfg, &r_grid)?.remove(0)
            };
            let mut t = Table::create(&ctx.out, &format!("curve_{name}_M{m}.csv"), &["r", "p_cond"])?;
            for (r, p) in r_grid.iter().zip(curve) {
                t.row([num(*r), num(p)])?;
            }
            written.push(t.finish()?);
        }
    }

    let mc = (ctx.mode != SerMode::Analytic).then(|| ctx.mc_settings());
    let rows = montecarlo::sweep_order(target, &m_list, cfg, mc.as_ref())?;
    let mut t = Table::create(
        &ctx.out,
        &format!("order_{name}.csv"),
        &["M", "pe_analytic", "pe_mc", "stderr"],
    )?;
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    for row in rows {
        let analytic = if ctx.mode == SerMode::Mc { String::new() } else { num(row.analytic) };
        t.row([row.m.to_string(), analytic, opt(row.empirical), opt(row.std_error)])?;
    }
    written.push(t.finish()?);
    Ok(written)
}

fn warn_unused(p: &AdaptivePolicy) {
    for &i in &p.unused {
        eprintln!(
            "warning: constituent {i} ({}) is never selected",
            p.constituents[i].family
        );
    }
}

fn cmd_thresholds(ctx: &Context) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.scenario.system;
    let m = ctx.m.unwrap_or(ctx.scenario.m);
    let p = build_policy(designed(m, ctx)?, cfg, ctx.scenario.policy_grid)?;
    warn_unused(&p);
    let mut t = Table::create(
        &ctx.out,
        "thresholds.csv",
        &["r_low", "r_high", "h_low", "h_high", "constellation_index"],
    )?;
    for iv in &p.intervals {
        t.row([
            num(iv.r_low),
            num(iv.r_high),
            num(iv.h_low),
            num(iv.h_high),
            iv.constellation.to_string(),
        ])?;
    }
    Ok(vec![t.finish()?])
}

fn cmd_estimate(ctx: &Context) -> Result<Vec<PathBuf>> {
    let s = &ctx.scenario;
    let settings = TrainingSettings {
        symbols: s.training_symbols.clone(),
        load: s.training_load,
        n_list: s.training_n_list.clone(),
        reps: s.training_reps,
        seed: s.seed,
        workers: None,
    };
    let rows = montecarlo::training_experiment(&s.system, &settings)?;
    let mut t = Table::create(
        &ctx.out,
        "estimate.csv",
        &["n_samples", "g_true", "h_true", "g_mean", "h_mean", "g_std", "h_std", "failures"],
    )?;
    for r in &rows {
        t.row([
            r.n_samples.to_string(),
            num(r.g_true),
            num(r.h_true),
            num(r.g_mean),
            num(r.h_mean),
            num(r.g_std),
            num(r.h_std),
            r.failures.to_string(),
        ])?;
    }
    let mut written = vec![t.finish()?];
    if rows.len() >= 2 {
        let n: Vec<f64> = rows.iter().map(|r| r.n_samples as f64).collect();
        let g: Vec<f64> = rows.iter().map(|r| r.g_std).collect();
        let h: Vec<f64> = rows.iter().map(|r| r.h_std).collect();
        let (gs, hs) = (montecarlo::loglog_slope(&n, &g), montecarlo::loglog_slope(&n, &h));
        println!("log-log slope of estimate std vs N: g {gs:.4}, h {hs:.4}");
        let mut t = Table::create(&ctx.out, "estimate_slope.csv", &["g_slope", "h_slope"])?;
        t.row([num(gs), num(hs)])?;
        written.push(t.finish()?);
    }
    Ok(written)
}

fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

/// Runs one parsed command; returns the files written.
pub fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let config = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let out = cli
        .out
        .clone()
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    let mut scenario = Scenario::from_file(config)?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
    let ctx = Context {
        scenario,
        out,
        family: cli.family.clone(),
        m: cli.m,
        mode: cli.mode,
    };
    let workers = workers_from_env()?;
    with_workers(workers, || match cli.command {
        Command::Space => cmd_space(&ctx),
        Command::Design => cmd_design(&ctx),
        Command::Ser => cmd_ser(&ctx),
        Command::Thresholds => cmd_thresholds(&ctx),
        Command::Estimate => cmd_estimate(&ctx),
    })
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("powertalk: {e}");
            ExitCode::FAILURE
        }
    }
}
