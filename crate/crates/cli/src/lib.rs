//! The `pl` command line.
//!
//! ```text
//! pl run <name|file> [--check] [--format text|json] [--lives N] [--order t1,t2,..]
//! pl bell --mode mermin|chsh --rounds M --seed S [--workers W] [--format text|json]
//! pl list
//! pl serve --port P [--origin URL]...
//! pl profile square-well|eraser [--bins N] [--modes 1,2] [--output FILE]
//! ```
//!
//! Exit codes: 0 success, 1 check failure, 2 load or usage error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use plives::campaign::{self, BellMode, CampaignConfig, CampaignResult};
use plives::continuum::{self, DensityProfile, EraserConfig};
use plives::engine::{EventKind, EventTable};
use plives::qmath::{Basis, C64};
use plives::scenarios::{self, RunReport, ScenarioSpec, CATALOG};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Extra scenario directories, separated like `PATH`.
pub const SCENARIO_PATH_VAR: &str = "PL_SCENARIO_PATH";

#[derive(Debug, Parser)]
#[command(name = "pl", version, about = "Parallel lives simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    SquareWell,
    Eraser,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a catalog scenario or a scenario file and print its tables.
    Run {
        scenario: String,
        /// Compare against golden tables; exit 1 on any failed check.
        #[arg(long)]
        check: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Allocate this many lives per system and print integer counts.
        #[arg(long)]
        lives: Option<u64>,
        /// Comma-separated event tags in execution order.
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<String>>,
    },
    /// Sample Bell rounds with random settings through the engine.
    Bell {
        #[arg(long, default_value = "mermin")]
        mode: BellMode,
        #[arg(long, default_value_t = 100_000)]
        rounds: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = campaign::DEFAULT_WORKERS)]
        workers: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// List catalog scenarios.
    List,
    /// Serve the classroom exercise over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Allowed browser origin; repeatable. Any origin when omitted.
        #[arg(long)]
        origin: Vec<String>,
    },
    /// Export continuum density profiles as CSV.
    Profile {
        #[arg(value_enum)]
        kind: ProfileKind,
        #[arg(long, default_value_t = continuum::DEFAULT_BINS)]
        bins: usize,
        /// Square-well modes in equal superposition.
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        modes: Vec<u32>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Parse `args` (including the program name) and run. Diagnostics go to
/// `err`, results to `out`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { scenario, check, format, lives, order } => {
            cmd_run(&scenario, check, format, lives, order.as_deref(), out)
        }
        Command::Bell { mode, rounds, seed, workers, format } => {
            cmd_bell(&CampaignConfig { mode, rounds, seed, workers }, format, out)
        }
        Command::List => cmd_list(out),
        Command::Serve { port, origin } => cmd_serve(port, origin, out),
        Command::Profile { kind, bins, modes, output } => cmd_profile(kind, bins, &modes, output.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
    }
}

type CmdResult = Result<i32, String>;

fn io(e: std::io::Error) -> String {
    e.to_string()
}

/// Catalog name, file path, or `<name>` / `<name>.json` under
/// `PL_SCENARIO_PATH`.
pub fn resolve_scenario(name: &str) -> Result<ScenarioSpec, String> {
    if CATALOG.contains(&name) {
        return scenarios::builtin(name).map_err(|e| e.to_string());
    }
    let path = Path::new(name);
    if path.is_file() {
        return load_file(path);
    }
    if let Some(dirs) = std::env::var_os(SCENARIO_PATH_VAR) {
        for dir in std::env::split_paths(&dirs) {
            for candidate in [dir.join(name), dir.join(format!("{name}.json"))] {
                if candidate.is_file() {
                    return load_file(&candidate);
                }
            }
        }
    }
    Err(format!("unknown scenario `{name}` (not in the catalog, not a file, not under ${SCENARIO_PATH_VAR})"))
}

fn load_file(path: &Path) -> Result<ScenarioSpec, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    ScenarioSpec::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn cmd_run(
    name: &str,
    check: bool,
    format: Format,
    lives: Option<u64>,
    order: Option<&[String]>,
    out: &mut dyn Write,
) -> CmdResult {
    let mut spec = resolve_scenario(name)?;
    if lives.is_some() {
        spec.lives = lives;
    }
    let scenario = spec.compile().map_err(|e| e.to_string())?;
    let mut report = match order {
        Some(tags) => {
            let tags: Vec<&str> = tags.iter().map(String::as_str).collect();
            scenarios::run_with_order(&scenario, &tags)
        }
        None => scenarios::run(&scenario),
    }
    .map_err(|e| e.to_string())?;
    if let Some(bad) = report.censuses.iter().find(|c| c.error.is_some()) {
        return Err(format!("event `{}`: {}", bad.event, bad.error.as_deref().unwrap_or_default()));
    }
    if check && CATALOG.contains(&name) {
        let golden = scenarios::expected_tables(name).map_err(|e| e.to_string())?;
        report.checks.extend(scenarios::check_golden(&report, &golden));
    }
    match format {
        Format::Json => writeln!(out, "{}", report.to_json()).map_err(io)?,
        Format::Text => print_report(&report, check, out).map_err(io)?,
    }
    Ok(if check && !report.passed() { EXIT_CHECK_FAILED } else { EXIT_OK })
}

/// Decimal with 12 digits, plus `p/q` when the value is within 1e-14 of a
/// fraction with denominator at most 10^6.
pub fn format_proportion(x: f64) -> String {
    match as_fraction(x, 1_000_000, 1e-14) {
        Some((p, 1)) => format!("{x:.12} = {p}"),
        Some((p, q)) => format!("{x:.12} = {p}/{q}"),
        None => format!("{x:.12}"),
    }
}

/// Closest fraction by continued-fraction convergents.
pub fn as_fraction(x: f64, max_den: u64, tol: f64) -> Option<(i64, u64)> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            return None;
        }
        let a = a as i128;
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        if k2 > max_den as i128 {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (x - h1 as f64 / k1 as f64).abs() <= tol {
            return Some((h1 as i64, k1 as u64));
        }
        let frac = r - a as f64;
        if frac == 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn relative_world(t: &EventTable, outcomes: &[String]) -> String {
    t.systems.iter().zip(outcomes).map(|(s, o)| format!("{s}={o}")).collect::<Vec<_>>().join(" ")
}

fn history_cell(priors: &[String]) -> String {
    let parts: Vec<&str> = priors.iter().map(String::as_str).filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        "(start)".into()
    } else {
        parts.join(" ; ")
    }
}

fn kind_name(k: EventKind) -> &'static str {
    match k {
        EventKind::Prepare => "prepare",
        EventKind::Couple => "couple",
        EventKind::Measure => "measure",
        EventKind::Meet => "meet",
    }
}

fn print_report(report: &RunReport, check: bool, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "scenario: {}", report.scenario)?;
    writeln!(out, "order: {}", report.order.join(" "))?;
    for t in &report.tables {
        let systems: Vec<String> = t.systems.iter().map(ToString::to_string).collect();
        writeln!(out)?;
        writeln!(out, "{} {} ({})", t.event.tag, kind_name(t.kind), systems.join(", "))?;
        let rows: Vec<[String; 3]> = t
            .rows
            .iter()
            .map(|r| [format_proportion(r.mass), relative_world(t, &r.outcomes), history_cell(&r.priors)])
            .collect();
        let header = ["Proportion".to_string(), "Relative World".into(), "History".into()];
        let widths: Vec<usize> =
            (0..2).map(|i| rows.iter().chain([&header]).map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
        for r in std::iter::once(&header).chain(&rows) {
            writeln!(out, "{:<w0$} | {:<w1$} | {}", r[0], r[1], r[2], w0 = widths[0], w1 = widths[1])?;
        }
        if let Some(c) = report.censuses.iter().find(|c| c.event == t.event.tag) {
            if let Some(counts) = &c.counts {
                let cells: Vec<String> = if t.kind == EventKind::Meet {
                    counts.iter().map(|(k, n)| format!("({k}) {n}")).collect()
                } else {
                    t.rows.iter().map(|r| counts.get(&r.history).copied().unwrap_or(0).to_string()).collect()
                };
                writeln!(out, "lives of {}: {}", c.lives, cells.join(", "))?;
            }
        }
    }
    for n in &report.notes {
        writeln!(out)?;
        writeln!(out, "note: {n}")?;
    }
    writeln!(out)?;
    let enforced = report.checks.iter().filter(|c| c.enforced).count();
    let failed = report.failures();
    writeln!(
        out,
        "checks: {} of {} passed, {} informational",
        enforced - failed.len(),
        enforced,
        report.checks.len() - enforced
    )?;
    if check {
        for c in &failed {
            writeln!(out, "FAILED {} deviation {:e} > {:e}", c.name, c.deviation, c.tolerance)?;
        }
    }
    Ok(())
}

fn cmd_bell(cfg: &CampaignConfig, format: Format, out: &mut dyn Write) -> CmdResult {
    let result = campaign::run_campaign(cfg).map_err(|e| e.to_string())?;
    match format {
        Format::Json => {
            writeln!(out, "{}", serde_json::to_string_pretty(&result).expect("result serializes")).map_err(io)?
        }
        Format::Text => print_campaign(&result, out).map_err(io)?,
    }
    Ok(EXIT_OK)
}

fn opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.6}"))
}

fn print_campaign(r: &CampaignResult, out: &mut dyn Write) -> std::io::Result<()> {
    let mode = match r.mode {
        BellMode::Mermin => "mermin",
        BellMode::Chsh => "chsh",
    };
    writeln!(out, "mode: {mode}")?;
    writeln!(out, "rounds: {}  seed: {}  workers: {}", r.rounds, r.seed, r.workers)?;
    writeln!(out, "settings  same  different")?;
    for t in &r.tallies {
        writeln!(out, "{},{}  {:>8}  {:>9}", t.setting_a, t.setting_b, t.same, t.different)?;
    }
    match r.mode {
        BellMode::Mermin => {
            writeln!(out, "p_same_given_different: {}", opt(r.statistic))?;
            writeln!(out, "p_opposite_given_same: {}", opt(r.p_opposite_given_same))?;
        }
        BellMode::Chsh => writeln!(out, "S: {}", opt(r.statistic))?,
    }
    writeln!(out, "quantum: {:.6}", r.quantum)?;
    writeln!(out, "lhv_bound: {:.6}", r.lhv_bound)
}

fn cmd_list(out: &mut dyn Write) -> CmdResult {
    for (name, description) in scenarios::catalog_descriptions() {
        writeln!(out, "{name:<28} {description}").map_err(io)?;
    }
    Ok(EXIT_OK)
}

fn cmd_serve(port: u16, origins: Vec<String>, out: &mut dyn Write) -> CmdResult {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(io)?;
    rt.block_on(async {
        let (listener, addr) = plives_server::bind(port).await.map_err(|e| format!("port {port}: {e}"))?;
        writeln!(out, "listening on http://{addr}").map_err(io)?;
        out.flush().map_err(io)?;
        let config = plives_server::ServerConfig { allow_origins: origins };
        let router = plives_server::router_with(Arc::new(plives_server::AppState::default()), &config);
        plives_server::serve(listener, router).await.map_err(io)?;
        Ok(EXIT_OK)
    })
}

fn cmd_profile(kind: ProfileKind, bins: usize, modes: &[u32], output: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let err = |e: continuum::ContinuumError| e.to_string();
    let csv = match kind {
        ProfileKind::SquareWell => {
            if modes.is_empty() {
                return Err("at least one mode is needed".into());
            }
            let c = C64::new(1.0 / (modes.len() as f64).sqrt(), 0.0);
            let sup: Vec<(u32, C64)> = modes.iter().map(|&n| (n, c)).collect();
            let (before, after) = continuum::square_well_profiles(1.0, &sup, bins).map_err(err)?;
            continuum::profiles_to_csv(&[("before", &before), ("after", &after)]).map_err(err)?
        }
        ProfileKind::Eraser => {
            let base = EraserConfig::default();
            let grid = continuum::Grid::new(base.grid.x_min, base.grid.x_max, bins).map_err(err)?;
            let cfg = EraserConfig::new(base.sigma, base.k, grid).map_err(err)?;
            let pm = continuum::eraser_distributions(&cfg, &Basis::plus_minus("w")).map_err(err)?;
            let comp = continuum::eraser_distributions(&cfg, &Basis::computational("w", 2)).map_err(err)?;
            let unconditional = continuum::eraser_unconditional(&cfg).map_err(err)?;
            let mut cols: Vec<(String, &DensityProfile)> = Vec::new();
            for (l, p) in &pm.conditional {
                cols.push((format!("w={l}"), p));
            }
            for (l, p) in &comp.conditional {
                cols.push((format!("w={l}"), p));
            }
            cols.push(("unconditional".into(), &unconditional));
            let cols: Vec<(&str, &DensityProfile)> = cols.iter().map(|(n, p)| (n.as_str(), *p)).collect();
            continuum::profiles_to_csv(&cols).map_err(err)?
        }
    };
    match output {
        Some(path) => std::fs::write(path, csv).map_err(|e| format!("{}: {e}", path.display()))?,
        None => out.write_all(csv.as_bytes()).map_err(io)?,
    }
    Ok(EXIT_OK)
}
