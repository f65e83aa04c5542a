//! Command-line front end: `gravwell <subcommand> [flags]`.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use gravwell::absorption::{direct_rate_with_f, f0, f1, f1_quadrature, f_full, kinematic_factor};
use gravwell::count::{count_direct, count_transport, default_h_grid, uniform_grid, CountCurve, CountParams, Preset};
use gravwell::eigen::solve_finite_well;
use gravwell::roughness::{RateSystem, RoughnessSpec};
use gravwell::scales::{make_scales, Geometry, PhysicalScales, WellConfig};
use gravwell::transport::{evolve_sampled, InitialDistribution, TransportOptions};

use config::{parse_config_text, FieldError, GeometryChoice, Grid, RunConfig};

pub const THREADS_ENV: &str = "GRAVWELL_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
    Config(Vec<FieldError>),
    #[error(transparent)]
    Core(#[from] gravwell::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "gravwell", version, about = "Gravitational quantum states of neutrons in a rough absorbing slit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// key = value settings file; flags override it
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Slit height in units of l0
    #[arg(long, global = true, value_name = "X", allow_hyphen_values = true)]
    h: Option<String>,
    /// Grid A:B:STEP (slit heights, or x for fnplot)
    #[arg(long, global = true, value_name = "A:B:STEP", allow_hyphen_values = true)]
    grid: Option<String>,
    /// Barrier over total energy, uc/e
    #[arg(long, global = true, value_name = "X", allow_hyphen_values = true)]
    chi: Option<String>,
    /// Roughness amplitude in units of l0
    #[arg(long, global = true, value_name = "X", allow_hyphen_values = true)]
    eta: Option<String>,
    /// Correlation length in units of l0
    #[arg(long, global = true, value_name = "X", allow_hyphen_values = true)]
    r: Option<String>,
    #[arg(long, global = true, value_name = "direct|inverse|both")]
    geometry: Option<String>,
    /// Correlation exponent; default picks suppressed for eta/r >= 10
    #[arg(long, global = true, value_name = "full|suppressed")]
    mode: Option<String>,
    /// Number of levels
    #[arg(long, visible_alias = "n", global = true, value_name = "N", allow_hyphen_values = true)]
    levels: Option<String>,
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Output CSV (stdout when absent)
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<String>,
    /// Worker threads (falls back to GRAVWELL_THREADS)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bound levels of the slit at one height
    Levels,
    /// Interstate scattering rates at one height
    Rates,
    /// Direct absorption per level at one height
    Absorb,
    /// Exit count n(h) over a height grid
    Count {
        #[arg(long, value_enum, default_value = "direct")]
        method: Method,
        /// uniform | equilibrium (transport method)
        #[arg(long)]
        init: Option<String>,
    },
    /// Population evolution at one height
    Transport {
        #[arg(long)]
        init: Option<String>,
        /// End time in s (default: flight time)
        #[arg(long = "t-final")]
        t_final: Option<String>,
        /// Number of output times including t = 0
        #[arg(long)]
        samples: Option<String>,
    },
    /// Levels, wall coefficients and lifetimes over a height grid
    Scan,
    /// Tables of the kinematic functions
    Fnplot {
        #[arg(long, value_enum)]
        which: Which,
        /// Second argument of F (default sqrt(uc)*r)
        #[arg(long)]
        y: Option<f64>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Direct,
    Transport,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Which {
    F0,
    F1,
    #[value(name = "f1fit")]
    F1Fit,
    #[value(name = "F")]
    Full,
}

/// Fixed scientific notation with 15 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.14e}")
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        // reader closed early, e.g. `| head`
        Err(CliError::Io { ref source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn settings(cli: &Cli) -> Result<RunConfig> {
    let mut map = BTreeMap::new();
    if let Some(path) = &cli.common.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        map = parse_config_text(&text).map_err(CliError::Config)?;
    }
    let c = &cli.common;
    let flags = [
        ("h", &c.h),
        ("grid", &c.grid),
        ("chi", &c.chi),
        ("eta", &c.eta),
        ("r", &c.r),
        ("geometry", &c.geometry),
        ("mode", &c.mode),
        ("levels", &c.levels),
        ("preset", &c.preset),
        ("out", &c.out),
        ("threads", &c.threads),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            map.insert(k.to_string(), v.clone());
        }
    }
    match &cli.command {
        Command::Count { init: Some(v), .. } => {
            map.insert("init".into(), v.clone());
        }
        Command::Transport { init, t_final, samples } => {
            for (k, v) in [("init", init), ("t_final", t_final), ("samples", samples)] {
                if let Some(v) = v {
                    map.insert(k.into(), v.clone());
                }
            }
        }
        _ => {}
    }
    if !map.contains_key("threads") {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            if v.parse::<usize>().map_or(true, |n| n == 0) {
                return Err(CliError::Config(vec![FieldError {
                    key: THREADS_ENV.into(),
                    value: v,
                    expected: "integer >= 1".into(),
                }]));
            }
            map.insert("threads".into(), v);
        }
    }
    RunConfig::from_map(&map).map_err(CliError::Config)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = settings(&cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| {
        CliError::Core(gravwell::Error::Convergence {
            what: format!("thread pool: {e}"),
            iterations: 0,
        })
    })?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    let scales = make_scales(cfg.scales)?;
    match cmd {
        Command::Levels => levels(cfg, &scales),
        Command::Rates => rates(cfg, &scales),
        Command::Absorb => absorb(cfg, &scales),
        Command::Count { method, .. } => count(cfg, &scales, *method),
        Command::Transport { .. } => transport(cfg, &scales),
        Command::Scan => scan(cfg, &scales),
        Command::Fnplot { which, y } => fnplot(cfg, &scales, *which, *y),
    }
}

fn single_geometry(cfg: &RunConfig) -> Geometry {
    match cfg.geometry {
        GeometryChoice::One(g) => g,
        GeometryChoice::Both => Geometry::Direct,
    }
}

fn well(cfg: &RunConfig, scales: &PhysicalScales, h: f64) -> Result<WellConfig> {
    Ok(WellConfig::new(h, scales.uc, cfg.chi, single_geometry(cfg))?)
}

fn roughness(cfg: &RunConfig) -> Result<RoughnessSpec> {
    let spec = RoughnessSpec::new(cfg.eta, cfg.r)?;
    Ok(match cfg.mode {
        Some(m) => spec.with_mode(m),
        None => spec,
    })
}

fn h_grid(cfg: &RunConfig) -> Result<Vec<f64>> {
    match cfg.grid {
        Some(Grid { start, stop, step }) => Ok(uniform_grid(start, stop, step)?),
        None => Ok(default_h_grid()),
    }
}

struct Csv {
    out: Box<dyn Write>,
    path: String,
}

impl Csv {
    fn create(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => {
                let f = File::create(p).map_err(|source| CliError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                info!("writing {}", p.display());
                Ok(Csv {
                    out: Box::new(BufWriter::new(f)),
                    path: p.display().to_string(),
                })
            }
            None => Ok(Csv {
                out: Box::new(BufWriter::new(io::stdout())),
                path: "<stdout>".into(),
            }),
        }
    }

    fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        let line = fields.iter().map(|s| s.as_ref()).collect::<Vec<_>>().join(",");
        writeln!(self.out, "{line}").map_err(|source| CliError::Io {
            path: self.path.clone(),
            source,
        })
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|source| CliError::Io { path: self.path, source })
    }
}

fn levels(cfg: &RunConfig, scales: &PhysicalScales) -> Result<()> {
    let lad = solve_finite_well(&well(cfg, scales, cfg.h)?, cfg.levels)?;
    let mut csv = Csv::create(cfg.out.as_deref())?;
    csv.row(&["n", "kind", "lambda", "beta", "s", "a", "log10_b", "log10_c"])?;
    for s in &lad.states {
        csv.row(&[
            s.n.to_string(),
            s.kind.to_string(),
            num(s.lambda),
            num(s.beta),
            num(s.s),
            num(s.a),
            num(s.log_b / std::f64::consts::LN_10),
            num(s.log_c / std::f64::consts::LN_10),
        ])?;
    }
    csv.finish()
}

fn rates(cfg: &RunConfig, scales: &PhysicalScales) -> Result<()> {
    let lad = solve_finite_well(&well(cfg, scales, cfg.h)?, cfg.levels)?;
    let sys = RateSystem::build(&lad, &roughness(cfg)?, scales)?;
    let mut csv = Csv::create(cfg.out.as_deref())?;
    csv.row(&["j", "k", "W_jk_per_s", "inv_tau_jk_per_s"])?;
    for j in 0..sys.len() {
        for k in 0..sys.len() {
            if j != k {
                let w = sys.interstate[j][k];
                csv.row(&[(j + 1).to_string(), (k + 1).to_string(), num(w), num(w / sys.betas[k])])?;
            }
        }
    }
    csv.finish()
}

fn absorb(cfg: &RunConfig, scales: &PhysicalScales) -> Result<()> {
    let wc = well(cfg, scales, cfg.h)?;
    let lad = solve_finite_well(&wc, cfg.levels)?;
    let spec = roughness(cfg)?;
    let f = kinematic_factor(&spec, &wc)?;
    let mut csv = Csv::create(cfg.out.as_deref())?;
    csv.row(&["n", "kind", "log10_b_or_c", "F_value", "t_over_tau0j"])?;
    for s in &lad.states {
        let d = direct_rate_with_f(s, &spec, scales, &wc, f)?;
        csv.row(&[
            s.n.to_string(),
            s.kind.to_string(),
            num(s.log_wall(wc.geometry) / std::f64::consts::LN_10),
            num(d.f_value),
            num(d.t_over_tau),
        ])?;
    }
    csv.finish()
}

fn write_curve(path: Option<&Path>, curve: &CountCurve) -> Result<()> {
    let mut csv = Csv::create(path)?;
    let mut header = vec!["h".to_string(), "n_total".to_string()];
    header.extend((1..=curve.per_level.len()).map(|j| format!("n_{j}")));
    csv.row(&header)?;
    for (i, h) in curve.h_grid.iter().enumerate() {
        let mut row = vec![num(*h), num(curve.total[i])];
        row.extend(curve.per_level.iter().map(|l| num(l[i])));
        csv.row(&row)?;
    }
    csv.finish()
}

/// `dir/stem_suffix.ext` next to `base`.
fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("count");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{suffix}.{ext}"),
        None => format!("{stem}_{suffix}"),
    };
    base.with_file_name(name)
}

fn count(cfg: &RunConfig, scales: &PhysicalScales, method: Method) -> Result<()> {
    let grid = h_grid(cfg)?;
    let (sets, geometries) = match cfg.preset {
        Some(p) => {
            let mut sets = p.params(*scales)?;
            if let Some(m) = cfg.mode {
                for (_, s) in sets.iter_mut() {
                    s.spec = s.spec.with_mode(m);
                }
            }
            let geoms = if p == Preset::Fig14 {
                vec![Geometry::Direct, Geometry::Inverse]
            } else {
                cfg.geometry.list()
            };
            (sets, geoms)
        }
        None => {
            let p = CountParams::new(*scales, cfg.chi, roughness(cfg)?, Geometry::Direct)?;
            (vec![("custom".to_string(), p)], cfg.geometry.list())
        }
    };
    let many = sets.len() * geometries.len() > 1;
    let base = cfg.out.clone().unwrap_or_else(|| PathBuf::from("count.csv"));
    for (label, params) in &sets {
        for &g in &geometries {
            let p = params.with_geometry(g);
            let curve = match method {
                Method::Direct => count_direct(&p, &grid, cfg.levels)?,
                Method::Transport => count_transport(&p, &grid, cfg.levels, cfg.init, &TransportOptions::default())?,
            };
            if many {
                let suffix = if sets.len() > 1 { format!("{label}_{g}") } else { g.to_string() };
                write_curve(Some(&sibling(&base, &suffix)), &curve)?;
            } else {
                write_curve(cfg.out.as_deref(), &curve)?;
            }
        }
    }
    Ok(())
}

fn transport(cfg: &RunConfig, scales: &PhysicalScales) -> Result<()> {
    let lad = solve_finite_well(&well(cfg, scales, cfg.h)?, cfg.levels)?;
    let sys = RateSystem::build(&lad, &roughness(cfg)?, scales)?;
    let t_end = cfg.t_final.unwrap_or(scales.flight_time);
    let times: Vec<f64> = (0..cfg.samples)
        .map(|i| t_end * i as f64 / (cfg.samples - 1) as f64)
        .collect();
    let init = InitialDistribution {
        kind: cfg.init,
        total: sys.len() as f64,
    };
    let traj = evolve_sampled(&sys, init, &times, &TransportOptions::default())?;
    let mut csv = Csv::create(cfg.out.as_deref())?;
    let mut header = vec!["t_s".to_string()];
    header.extend((1..=sys.len()).map(|j| format!("N_{j}")));
    header.push("N_total".into());
    csv.row(&header)?;
    for p in &traj {
        let mut row = vec![num(p.t)];
        row.extend(p.n.iter().map(|x| num(*x)));
        row.push(num(p.total()));
        csv.row(&row)?;
    }
    csv.finish()
}

fn scan(cfg: &RunConfig, scales: &PhysicalScales) -> Result<()> {
    let grid = h_grid(cfg)?;
    let spec = roughness(cfg)?;
    let f = kinematic_factor(&spec, &well(cfg, scales, grid[0])?)?;
    let blocks = grid
        .par_iter()
        .map(|&h| -> Result<Vec<Vec<String>>> {
            let wc = well(cfg, scales, h)?;
            let lad = solve_finite_well(&wc, cfg.levels)?;
            lad.states
                .iter()
                .map(|s| {
                    let d = direct_rate_with_f(s, &spec, scales, &wc, f)?;
                    Ok(vec![
                        num(h),
                        s.n.to_string(),
                        s.kind.to_string(),
                        num(s.lambda),
                        num(s.log_b / std::f64::consts::LN_10),
                        num(s.log_c / std::f64::consts::LN_10),
                        num(d.t_over_tau),
                    ])
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = Csv::create(cfg.out.as_deref())?;
    csv.row(&["h", "n", "kind", "lambda", "log10_b", "log10_c", "t_over_tau0j"])?;
    for row in blocks.iter().flatten() {
        csv.row(row)?;
    }
    csv.finish()
}

type KinematicFn = dyn Fn(f64) -> gravwell::Result<f64> + Sync;

fn fnplot(cfg: &RunConfig, scales: &PhysicalScales, which: Which, y: Option<f64>) -> Result<()> {
    let grid = match cfg.grid {
        Some(g) => uniform_grid(g.start, g.stop, g.step)?,
        None if which == Which::F0 => uniform_grid(0.05, 1.0, 0.01)?,
        None => uniform_grid(0.05, 0.99, 0.01)?,
    };
    let y = y.unwrap_or(scales.uc.sqrt() * cfg.r);
    let (name, f): (&str, Box<KinematicFn>) = match which {
        Which::F0 => ("F0", Box::new(f0)),
        Which::F1 => ("F1", Box::new(f1_quadrature)),
        Which::F1Fit => ("F1_fit", Box::new(f1)),
        Which::Full => ("F", Box::new(move |x| f_full(x, y))),
    };
    let values = grid.par_iter().map(|&x| f(x)).collect::<gravwell::Result<Vec<_>>>()?;
    let mut csv = Csv::create(cfg.out.as_deref())?;
    csv.row(&["x", name])?;
    for (x, v) in grid.iter().zip(&values) {
        csv.row(&[num(*x), num(*v)])?;
    }
    csv.finish()
}
