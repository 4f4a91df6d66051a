//! `dyadflow`: build fields, run verification suites, render figures.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error.

mod config;

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dyadflow_core::field::{defect_bound, manifest_hash, read_manifest, write_manifest, Half};
use dyadflow_core::flow::{integrate, obstruction_demo, pushforward, PushforwardHistogram};
use dyadflow_core::render::{
    cells_raster, cells_svg, compare_blocks, contour_raster, contour_svg, evolution_snapshot, histogram_raster,
    predicted_evolution, RgbImage,
};
use dyadflow_core::streamfn::{TravelTable, SHARED_TABLE_MIN_EPS};
use dyadflow_core::verify::{report, run_suite, Suite, VerifyOptions};
use dyadflow_core::{Direction, Field, FieldParams, Mode, StepPolicy, TorusPoint};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "dyadflow", version, about = "Divergence-free flows realising a two-to-one dyadic digit map")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags mirroring the config keys; each overrides the config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` config file (keys as the flags below, with underscores).
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Field variant: hoelder or bounded [default: hoelder].
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Smoothness index k [default: 0].
    #[arg(long, global = true)]
    k: Option<u32>,
    /// Hölder exponent alpha in (0, 1) [default: 0.5].
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Defect budget delta in (0, 1/4) [default: 0.2].
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// Number of stages kept in the truncated field [default: 4].
    #[arg(long, global = true)]
    n_stages: Option<u32>,
    /// Monte Carlo sample count [default: 10000].
    #[arg(long, global = true)]
    sample_count: Option<usize>,
    /// Dyadic depth of histograms [default: 4].
    #[arg(long, global = true)]
    depth: Option<u32>,
    /// Random seed [default: 1].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for manifests, reports and images [default: dyadflow-out].
    #[arg(long, global = true)]
    output_dir: Option<std::path::PathBuf>,
    /// RK4 substeps per stage length [default: 4096].
    #[arg(long, global = true)]
    base_steps: Option<usize>,
    /// Raster side in pixels, a multiple of 8 [default: 128].
    #[arg(long, global = true)]
    resolution: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the field manifest and travel-time table.
    Build,
    /// Run a verification suite and write a report; exit 1 if any check fails.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
    },
    /// Render PPM and SVG snapshots.
    Render {
        #[arg(long, value_enum)]
        what: What,
        /// Comma-separated times for evolution: numbers or `tauN` [default: tau0,tau1,tau2,tau3].
        #[arg(long)]
        times: Option<String>,
    },
    /// Write one trajectory as CSV.
    Trace {
        #[arg(long)]
        x1: f64,
        #[arg(long)]
        x2: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// End time [default: end of the truncated field].
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long, value_enum, default_value_t = DirectionArg::Forward)]
        direction: DirectionArg,
    },
    /// Print derived parameters.
    Params,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SuiteArg {
    Dyadic,
    Stream,
    Field,
    Flow,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Dyadic => Suite::Dyadic,
            SuiteArg::Stream => Suite::Stream,
            SuiteArg::Field => Suite::Field,
            SuiteArg::Flow => Suite::Flow,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum What {
    Evolution,
    Contours,
    Cells,
    Histogram,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DirectionArg {
    Forward,
    Backward,
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_file(&text).with_context(|| format!("in config {}", path.display()))?;
    }
    let pairs: [(&str, Option<String>); 11] = [
        ("mode", common.mode.clone()),
        ("k", common.k.map(|v| v.to_string())),
        ("alpha", common.alpha.map(|v| v.to_string())),
        ("delta", common.delta.map(|v| v.to_string())),
        ("n_stages", common.n_stages.map(|v| v.to_string())),
        ("sample_count", common.sample_count.map(|v| v.to_string())),
        ("depth", common.depth.map(|v| v.to_string())),
        ("seed", common.seed.map(|v| v.to_string())),
        ("output_dir", common.output_dir.as_ref().map(|p| p.display().to_string())),
        ("base_steps", common.base_steps.map(|v| v.to_string())),
        ("resolution", common.resolution.map(|v| v.to_string())),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Failures that should exit with status 1 rather than 2.
#[derive(Debug)]
struct VerificationFailed(String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

fn load_manifest(cfg: &RunConfig) -> Result<(FieldParams, String)> {
    let path = cfg.manifest_path();
    if !path.exists() {
        bail!("no field manifest at {}; run `dyadflow build` first", path.display());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let params = read_manifest(&text).with_context(|| format!("in {}", path.display()))?;
    if params.mode == Mode::Hoelder {
        load_table(cfg)?;
    }
    Ok((params, manifest_hash(&text)))
}

/// Reuses the travel-time table written by `build` instead of recomputing it.
fn load_table(cfg: &RunConfig) -> Result<()> {
    let path = cfg.output_dir.join("travel_table.csv");
    if !path.exists() {
        return Ok(());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let table = TravelTable::from_csv(&text).with_context(|| format!("in {}", path.display()))?;
    if table.r_lo() > SHARED_TABLE_MIN_EPS / 4.0 * (1.0 + 1e-9) {
        bail!("{} starts at r = {:e}, above the range the fields need", path.display(), table.r_lo());
    }
    TravelTable::install_shared(table);
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_image(dir: &Path, stem: &str, img: &RgbImage) -> Result<()> {
    let mut ppm = Vec::new();
    img.write_ppm(&mut ppm)?;
    write_file(&dir.join(format!("{stem}.ppm")), &ppm)?;
    write_file(&dir.join(format!("{stem}.svg")), img.to_svg().as_bytes())
}

fn cmd_build(cfg: &RunConfig) -> Result<()> {
    let params = cfg.params()?;
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let text = write_manifest(&params);
    write_file(&cfg.manifest_path(), text.as_bytes())?;
    if params.mode == Mode::Hoelder {
        let mut csv = Vec::new();
        TravelTable::shared().write_csv(&mut csv)?;
        write_file(&cfg.output_dir.join("travel_table.csv"), &csv)?;
    }
    println!("manifest hash {}", manifest_hash(&text));
    Ok(())
}

fn cmd_params(cfg: &RunConfig) -> Result<()> {
    let p = cfg.params()?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "mode = {}", p.mode)?;
    writeln!(out, "tau = {:.6}", p.tau)?;
    writeln!(out, "kappa = {:.6}", p.kappa)?;
    writeln!(out, "eps_star = {:.6e}", p.eps_star)?;
    writeln!(out, "defect_bound = {:.6}", defect_bound(&p))?;
    writeln!(out, "horizon = {:.6}", p.horizon())?;
    writeln!(out, "t_end = {:.6}", p.truncated_horizon())?;
    for n in 1..=p.n_stages {
        writeln!(out, "stage.{n}.tau = {:.6}  eps = {:.6e}", p.tau_partial(n), p.stage_eps(n))?;
    }
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, suite: Suite) -> Result<()> {
    let loaded = if suite.needs_field() { Some(load_manifest(cfg)?) } else { None };
    if loaded.is_none() {
        load_table(cfg)?;
    }
    let field = loaded.as_ref().map(|(p, _)| Field::build(p.clone())).transpose()?;
    let opts = VerifyOptions {
        sample_count: cfg.sample_count,
        depth: cfg.depth,
        seed: cfg.seed,
        policy: cfg.policy(),
        ..VerifyOptions::default()
    };
    let checks = run_suite(suite, field.as_ref(), &opts)?;
    let header = [
        ("manifest_hash", loaded.as_ref().map_or_else(|| "none".to_string(), |(_, h)| h.clone())),
        ("seed", cfg.seed.to_string()),
        ("sample_count", cfg.sample_count.to_string()),
        ("policy.base_steps_per_stage", opts.policy.base_steps_per_stage.to_string()),
        ("policy.bulk_base_steps_per_stage", opts.bulk_policy.base_steps_per_stage.to_string()),
    ];
    let text = report(suite, &checks, &header);
    fs::create_dir_all(&cfg.output_dir)?;
    write_file(&cfg.output_dir.join(format!("verify_{suite}.txt")), text.as_bytes())?;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(VerificationFailed(failed.join(", ")).into());
    }
    Ok(())
}

/// Parses `0.5`, `tau2`, ... into times.
fn parse_times(list: &str, p: &FieldParams) -> Result<Vec<f64>> {
    list.split(',')
        .map(|s| {
            let s = s.trim();
            if let Some(n) = s.strip_prefix("tau") {
                let n: u32 = n.parse().with_context(|| format!("bad time `{s}`"))?;
                if n > p.n_stages {
                    bail!("`{s}` is beyond the {} built stages", p.n_stages);
                }
                Ok(p.tau_partial(n))
            } else {
                s.parse().with_context(|| format!("bad time `{s}`"))
            }
        })
        .collect()
}

fn cmd_render(cfg: &RunConfig, what: What, times: Option<&str>) -> Result<()> {
    let (params, hash) = load_manifest(cfg)?;
    let dir = &cfg.output_dir;
    let res = cfg.resolution;
    println!("manifest hash {hash}");
    match what {
        What::Evolution => {
            let field = Field::build(params.clone())?;
            let default = (0..=params.n_stages.min(3)).map(|n| format!("tau{n}")).collect::<Vec<_>>().join(",");
            let times = parse_times(times.unwrap_or(&default), &params)?;
            for (i, &t) in times.iter().enumerate() {
                let img = evolution_snapshot(&field, t, res, &StepPolicy::coarse())?;
                write_image(dir, &format!("evolution_{i}"), &img.to_rgb(0.0, 1.0))?;
                // whole-stage times have a symbolic prediction to compare with
                if let Some(n) = (0..=params.n_stages).find(|&n| (params.tau_partial(n) - t).abs() < 1e-12) {
                    let pred = predicted_evolution(n, res)?;
                    for depth in [2, 3] {
                        let c = compare_blocks(&img, &pred, depth)?;
                        println!(
                            "t = tau{n}: depth {depth} blocks on palette {}/{}, max mean error {:.2e}",
                            c.palette_hits, c.blocks, c.max_error
                        );
                    }
                }
            }
        }
        What::Contours => {
            write_image(dir, "contours_raster", &contour_raster(res, 10))?;
            write_file(&dir.join("contours.svg"), contour_svg(10, 128)?.as_bytes())?;
        }
        What::Cells => {
            for n in 1..=params.n_stages.min(4) {
                for half in [Half::First, Half::Second] {
                    let tag = if half == Half::First { "first" } else { "second" };
                    let stem = format!("cells_stage{n}_{tag}");
                    let mut ppm = Vec::new();
                    cells_raster(n, half, res).write_ppm(&mut ppm)?;
                    write_file(&dir.join(format!("{stem}.ppm")), &ppm)?;
                    write_file(&dir.join(format!("{stem}.svg")), cells_svg(n, half).as_bytes())?;
                }
            }
        }
        What::Histogram => {
            let field = Field::build(params)?;
            let policy = StepPolicy::coarse();
            let back = obstruction_demo(&field, cfg.sample_count, cfg.depth, cfg.seed, &policy)?;
            let fwd = pushforward(&field, Direction::Forward, 0.0, field.t_end(), cfg.sample_count, cfg.depth, cfg.seed, &policy)?;
            for (name, h) in [("histogram_backward", &back), ("histogram_forward", &fwd)] {
                write_histogram(dir, name, h, res)?;
                println!("{name}: coverage {:.4}, chi-square p {:.3e}", h.coverage_fraction, h.p_value);
            }
        }
    }
    Ok(())
}

fn write_histogram(dir: &Path, name: &str, h: &PushforwardHistogram, res: usize) -> Result<()> {
    let scale = (res >> h.depth).max(1);
    write_image(dir, name, &histogram_raster(h, scale)?)?;
    let mut csv = Vec::new();
    h.write_csv(&mut csv)?;
    write_file(&dir.join(format!("{name}.csv")), &csv)
}

fn cmd_trace(cfg: &RunConfig, x1: f64, x2: f64, t0: f64, t1: Option<f64>, dir: DirectionArg) -> Result<()> {
    let (params, hash) = load_manifest(cfg)?;
    let field = Field::build(params)?;
    let t1 = t1.unwrap_or(field.t_end());
    let direction = match dir {
        DirectionArg::Forward => Direction::Forward,
        DirectionArg::Backward => Direction::Backward,
    };
    let tr = integrate(&field, direction, TorusPoint::new(x1, x2), t0, t1, &cfg.policy())?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut csv = Vec::new();
    tr.write_csv(&mut csv)?;
    write_file(&cfg.output_dir.join("trace.csv"), &csv)?;
    let end = tr.end().expect("trajectories hold their start point");
    println!("manifest hash {hash}");
    println!("end ({:.12}, {:.12}) at t = {t1} after {} points", end.x1, end.x2, tr.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Build => cmd_build(&cfg),
        Command::Params => cmd_params(&cfg),
        Command::Verify { suite } => cmd_verify(&cfg, suite.into()),
        Command::Render { what, times } => cmd_render(&cfg, what, times.as_deref()),
        Command::Trace { x1, x2, t0, t1, direction } => cmd_trace(&cfg, x1, x2, t0, t1, direction),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<VerificationFailed>() => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
