//! Subcommands and their execution. Every command returns a JSON report.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use multiscale::critical_values::{
    builtin, cached_brownian_quantiles, grid_of_kind, simulate_brownian_tables, BootstrapConfig,
    DEFAULT_ALPHAS,
};
use multiscale::inference::{
    changepoint_pipeline, gof_test, signal_test, signal_test_nonstationary, CandidateSet, GofNull,
    NoiseConfig, PipelineConfig,
};
use multiscale::simulation::{
    blocks_signal, detection_table, realized_exponent, type1_table, write_harness_output,
    DetectionConfig, ExponentConfig, NoiseModel, ThresholdRule, Type1Config, VarianceRule,
};
use multiscale::statistics::multiscale_statistic;
use multiscale::variance::{default_window, variance_profile};
use multiscale::{CriticalValueTable, Error, GridKind, Modulus, PartialSumProcess, SignalSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::ingest::{ingest_csv, rocof_ingested, Ingested};

type AnyResult<T> = anyhow::Result<T>;

/// Desk-scale simulation settings used when a table must be simulated.
const DEFAULT_MC_REPS: usize = 20_000;
const DEFAULT_POINTS: usize = 2000;
const DEFAULT_BOOT_REPS: usize = 1000;
/// Resolution of the shipped dyadic tables used as asymptotic quantiles.
const ASYMPTOTIC_DYADIC_N: usize = 1_000_000;

#[derive(Parser, Debug)]
#[command(
    name = "multiscale",
    version,
    about = "Multiscale tests, goodness-of-fit and changepoint intervals with multiplicative weights"
)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Quantiles of the Brownian seminorm: shipped, cached or simulated.
    Quantiles(QuantilesArgs),
    /// Test for the presence of any signal.
    Detect(DetectArgs),
    /// Goodness-of-fit test against a fixed mean or the constant class.
    Gof(GofArgs),
    /// Disjoint intervals each containing a change in mean with the stated confidence.
    Changepoints(ChangepointArgs),
    /// Simulation studies: type-I error, realized exponents, detection tables.
    #[command(subcommand)]
    Harness(HarnessCommand),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Headed CSV file.
    #[arg(long)]
    pub input: PathBuf,
    /// Value column.
    #[arg(long, default_value = "value")]
    pub column: String,
    /// Timestamp column carried into reports.
    #[arg(long)]
    pub time_column: Option<String>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
}

impl InputArgs {
    fn read(&self) -> AnyResult<Ingested> {
        Ok(ingest_csv(
            &self.input,
            &self.column,
            self.time_column.as_deref(),
            delimiter(self.delimiter)?,
        )?)
    }
}

fn delimiter(c: char) -> AnyResult<u8> {
    if !c.is_ascii() {
        bail!(Error::InvalidInput(format!("delimiter '{c}' is not ASCII")));
    }
    Ok(c as u8)
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for plot-ready CSV files.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TableArgs {
    /// Quantile table JSON; defaults to the shipped table for the modulus and grid.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Simulate the table with this many Brownian paths.
    #[arg(long)]
    pub mc_reps: Option<usize>,
    /// Grid points per simulated path.
    #[arg(long)]
    pub points: Option<usize>,
    /// Cache simulated tables here.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl TableArgs {
    fn is_default(&self) -> bool {
        self.table.is_none() && self.mc_reps.is_none() && self.points.is_none()
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseArg {
    Iid,
    Nonstationary,
}

#[derive(Args, Debug, Clone, Default)]
pub struct NoiseArgs {
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Variance profile window; default ceil(log10(n)^2).
    #[arg(long)]
    pub window_b: Option<usize>,
    /// Bootstrap length cutoff c_n = n^(-exponent).
    #[arg(long)]
    pub cn_exponent: Option<f64>,
    /// Bootstrap replicates.
    #[arg(long)]
    pub boot_reps: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridArg {
    Full,
    Dyadic,
    Rw,
}

impl From<GridArg> for GridKind {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Full => GridKind::Full,
            GridArg::Dyadic => GridKind::Dyadic,
            GridArg::Rw => GridKind::Rw,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum CandidatesArg {
    DyadicRw,
    Dyadic,
    Rw,
    Full,
}

impl From<CandidatesArg> for CandidateSet {
    fn from(c: CandidatesArg) -> Self {
        match c {
            CandidatesArg::DyadicRw => CandidateSet::DyadicRw,
            CandidatesArg::Dyadic => CandidateSet::Dyadic,
            CandidatesArg::Rw => CandidateSet::Rw,
            CandidatesArg::Full => CandidateSet::Full,
        }
    }
}

#[derive(Args, Debug)]
pub struct QuantilesArgs {
    /// Modulus, e.g. rho2a:0 or rho_alpha:2; repeat to share paths across moduli.
    #[arg(long = "modulus", required = true)]
    pub moduli: Vec<Modulus>,
    #[arg(long, value_enum, default_value_t = GridArg::Full)]
    pub grid: GridArg,
    /// Report the quantile at this level.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    pub table: TableArgs,
    /// Write each table here under its canonical file name.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "rho2a:0")]
    pub modulus: Modulus,
    #[arg(long, value_enum, default_value_t = GridArg::Full)]
    pub grid: GridArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub table: TableArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum NullArg {
    Constant,
    Zero,
}

#[derive(Args, Debug)]
pub struct GofArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Composite null; ignored when --null-column is given.
    #[arg(long, value_enum, default_value_t = NullArg::Constant)]
    pub null: NullArg,
    /// Column of the input holding a fixed null mean.
    #[arg(long)]
    pub null_column: Option<String>,
    #[arg(long, default_value = "rho2a:0")]
    pub modulus: Modulus,
    #[arg(long, value_enum, default_value_t = GridArg::Full)]
    pub grid: GridArg,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub table: TableArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// RoCoF of a 100 ms frequency record: rho2a:50, alpha 1%, bootstrap with
    /// b = 3 ceil(log10(n)^2) and c_n = n^(-0.33).
    Rocof,
}

#[derive(Args, Debug)]
pub struct ChangepointArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Analyse |f_t - f_(t-1)| instead of the column itself.
    #[arg(long)]
    pub rocof: bool,
    #[arg(long)]
    pub modulus: Option<Modulus>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub candidates: Option<CandidatesArg>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub table: TableArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand, Debug)]
pub enum HarnessCommand {
    /// Rejection rates of the signal test under pure noise.
    Type1(Type1Args),
    /// Realized exponents against boxes of given lengths.
    Exponent(ExponentArgs),
    /// Detection and isolation of the BLOCKS changes.
    Detection(DetectionArgs),
}

#[derive(Args, Debug)]
pub struct Type1Args {
    /// gauss, uniform, mixture[:p], ar1[:a] or tvar1.
    #[arg(long, default_value = "gauss", value_parser = parse_noise_model)]
    pub noise_model: NoiseModel,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = GridArg::Dyadic)]
    pub grid: GridArg,
    #[arg(long, default_value = "rho2a:0")]
    pub modulus: Modulus,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.01, 0.001])]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// difference, long-run, known:<sigma> or bootstrap.
    #[arg(long, default_value = "difference")]
    pub variance: String,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub table: TableArgs,
    /// CSV output; a JSON sidecar with the configuration is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExponentArgs {
    /// scan, ds, or a modulus such as rho2a:50.
    #[arg(long, default_value = "rho2a:0", value_parser = parse_rule)]
    pub rule: ThresholdRule,
    #[arg(long, value_enum, default_value_t = GridArg::Dyadic)]
    pub grid: GridArg,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 15, 50, 100, 500, 1000])]
    pub lengths: Vec<usize>,
    /// Power simulations per amplitude; 2000 on the full grid, 10^4 otherwise.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub null_reps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DetectionArgs {
    #[arg(long, default_value = "mixture", value_parser = parse_noise_model)]
    pub noise_model: NoiseModel,
    #[arg(long, default_value_t = 5.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 2048)]
    pub n: usize,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value = "rho2a:1000")]
    pub modulus: Modulus,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = CandidatesArg::DyadicRw)]
    pub candidates: CandidatesArg,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    pub table: TableArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_noise_model(s: &str) -> Result<NoiseModel, String> {
    let (name, param) = match s.split_once(':') {
        Some((n, p)) => (
            n,
            Some(
                p.parse::<f64>()
                    .map_err(|_| format!("bad parameter in '{s}'"))?,
            ),
        ),
        None => (s, None),
    };
    let model = match name {
        "gauss" => NoiseModel::gauss(),
        "uniform" => NoiseModel::uniform(),
        "mixture" => NoiseModel::mixture(param.unwrap_or(0.5)),
        "ar1" => NoiseModel::ar1(param.unwrap_or(0.3)),
        "tvar1" => NoiseModel::tvar1(),
        _ => return Err(format!("unknown noise model '{name}'")),
    };
    model.validate().map_err(|e| e.to_string())?;
    Ok(model)
}

fn parse_rule(s: &str) -> Result<ThresholdRule, String> {
    match s {
        "scan" => Ok(ThresholdRule::Scan),
        "ds" => Ok(ThresholdRule::Ds),
        m => m
            .parse()
            .map(|modulus| ThresholdRule::Multiscale { modulus })
            .map_err(|e: Error| e.to_string()),
    }
}

/// Where a critical value table came from.
#[derive(Serialize)]
struct TableSource {
    source: String,
    hash: String,
    grid: GridKind,
    n_ref: usize,
    mc_reps: usize,
}

impl TableSource {
    fn new(source: impl Into<String>, t: &CriticalValueTable) -> Self {
        Self {
            source: source.into(),
            hash: t.hash.clone(),
            grid: t.grid.kind,
            n_ref: t.grid.n_ref,
            mc_reps: t.mc_reps,
        }
    }
}

fn alphas_with(alpha: Option<f64>) -> Vec<f64> {
    let mut v = DEFAULT_ALPHAS.to_vec();
    if let Some(a) = alpha {
        if !v.iter().any(|x| (x - a).abs() < 1e-12) {
            v.push(a);
        }
    }
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Tables for `moduli` on `kind` grids, sharing Brownian paths when simulated.
fn resolve_tables(
    args: &TableArgs,
    moduli: &[Modulus],
    kind: GridKind,
    alpha: Option<f64>,
    seed: u64,
) -> AnyResult<Vec<(CriticalValueTable, TableSource)>> {
    if let Some(path) = &args.table {
        if moduli.len() != 1 {
            bail!(Error::InvalidInput(
                "--table applies to a single modulus".into()
            ));
        }
        let t = CriticalValueTable::load(path)
            .with_context(|| format!("loading {}", path.display()))?;
        t.validate()?;
        if t.modulus()? != moduli[0] {
            bail!(Error::InvalidInput(format!(
                "table {} is for {}, not {}",
                path.display(),
                t.modulus()?,
                moduli[0]
            )));
        }
        let src = TableSource::new(path.display().to_string(), &t);
        return Ok(vec![(t, src)]);
    }
    let simulate = args.mc_reps.is_some() || args.points.is_some();
    if !simulate {
        let shipped: Option<Vec<CriticalValueTable>> =
            moduli.iter().map(|m| builtin::table(m, kind)).collect();
        if let Some(ts) = shipped {
            return Ok(ts
                .into_iter()
                .map(|t| {
                    let src = TableSource::new("builtin", &t);
                    (t, src)
                })
                .collect());
        }
    }
    let reps = args.mc_reps.unwrap_or(DEFAULT_MC_REPS);
    let points = args.points.unwrap_or(DEFAULT_POINTS);
    let alphas = alphas_with(alpha);
    if kind == GridKind::Custom {
        bail!(Error::InvalidInput(
            "custom grids need an explicit --table".into()
        ));
    }
    let tables = match &args.cache_dir {
        Some(dir) => moduli
            .iter()
            .map(|m| cached_brownian_quantiles(dir, m, kind, &alphas, reps, points, seed))
            .collect::<multiscale::Result<Vec<_>>>()?,
        None => simulate_brownian_tables(
            moduli,
            &grid_of_kind(kind, points)?,
            &alphas,
            reps,
            points,
            seed,
        )?,
    };
    let label = if args.cache_dir.is_some() {
        "cache"
    } else {
        "simulated"
    };
    Ok(tables
        .into_iter()
        .map(|t| {
            let src = TableSource::new(label, &t);
            (t, src)
        })
        .collect())
}

fn resolve_table(
    args: &TableArgs,
    m: &Modulus,
    kind: GridKind,
    alpha: f64,
    seed: u64,
) -> AnyResult<(CriticalValueTable, TableSource)> {
    Ok(resolve_tables(args, &[*m], kind, Some(alpha), seed)?.remove(0))
}

fn c_n(n: usize, exponent: f64) -> AnyResult<f64> {
    if !(exponent > 0.0 && exponent.is_finite()) {
        bail!(Error::Domain(format!(
            "c_n exponent must be positive, got {exponent}"
        )));
    }
    Ok((n as f64).powf(-exponent))
}

fn check_alpha(alpha: f64) -> AnyResult<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!(Error::Domain(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// Runs one parsed command line.
pub fn dispatch(cli: &Cli) -> AnyResult<Value> {
    let seed = cli.seed;
    match &cli.command {
        Command::Quantiles(a) => quantiles(a, seed),
        Command::Detect(a) => detect(a, seed),
        Command::Gof(a) => gof(a, seed),
        Command::Changepoints(a) => changepoints(a, seed),
        Command::Harness(h) => harness(h, seed),
    }
}

fn quantiles(a: &QuantilesArgs, seed: u64) -> AnyResult<Value> {
    if let Some(alpha) = a.alpha {
        check_alpha(alpha)?;
    }
    let tables = resolve_tables(&a.table, &a.moduli, a.grid.into(), a.alpha, seed)?;
    let mut results = Vec::new();
    for (t, src) in &tables {
        let mut entry =
            json!({ "modulus": t.modulus()?.to_string(), "source": src.source, "table": t });
        if let Some(alpha) = a.alpha {
            entry["alpha"] = json!(alpha);
            entry["quantile"] = json!(t.quantile(alpha)?);
        }
        if let Some(dir) = &a.out_dir {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(builtin::file_name(t));
            t.save(&path)?;
            entry["path"] = json!(path.display().to_string());
        }
        results.push(entry);
    }
    Ok(json!({ "command": "quantiles", "results": results }))
}

fn emit(output: &OutputArgs, report: &Value) -> AnyResult<()> {
    if let Some(path) = &output.out {
        std::fs::write(path, serde_json::to_string_pretty(report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_series_csv(dir: &Path, data: &Ingested) -> AnyResult<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("series.csv"))?);
    match &data.times {
        Some(times) => {
            writeln!(w, "index,time,value")?;
            for (k, (t, v)) in times.iter().zip(data.series.values()).enumerate() {
                writeln!(w, "{},{},{}", k + 1, t, v)?;
            }
        }
        None => {
            writeln!(w, "index,value")?;
            for (k, v) in data.series.values().iter().enumerate() {
                writeln!(w, "{},{}", k + 1, v)?;
            }
        }
    }
    Ok(())
}

fn detect(a: &DetectArgs, seed: u64) -> AnyResult<Value> {
    check_alpha(a.alpha)?;
    let data = a.input.read()?;
    let s = &data.series;
    let n = s.len();
    let g = grid_of_kind(a.grid.into(), n)?;
    let (decision, table) = match a.noise.noise.unwrap_or(NoiseArg::Iid) {
        NoiseArg::Iid => {
            let (t, src) = resolve_table(&a.table, &a.modulus, a.grid.into(), a.alpha, seed)?;
            (signal_test(s, &a.modulus, &g, &t, a.alpha)?, Some(src))
        }
        NoiseArg::Nonstationary => {
            let boot = BootstrapConfig {
                c_n: c_n(n, a.noise.cn_exponent.unwrap_or(0.33))?,
                reps: a.noise.boot_reps.unwrap_or(DEFAULT_BOOT_REPS),
                alpha: a.alpha,
                seed,
            };
            let b = a.noise.window_b.unwrap_or_else(|| default_window(n));
            (
                signal_test_nonstationary(s, &a.modulus, &g, b, &boot)?,
                None,
            )
        }
    };
    let arg = multiscale_statistic(&PartialSumProcess::new(s), &a.modulus, &g)?.argmax_pair;
    let report = json!({
        "command": "detect",
        "n": n,
        "modulus": a.modulus.to_string(),
        "grid": GridKind::from(a.grid),
        "decision": decision,
        "argmax": { "start": arg.0 + 1, "end": arg.1,
                    "start_time": data.time(arg.0 + 1), "end_time": data.time(arg.1) },
        "table": table,
    });
    if let Some(dir) = &a.output.csv_dir {
        std::fs::create_dir_all(dir)?;
        write_series_csv(dir, &data)?;
    }
    emit(&a.output, &report)?;
    Ok(report)
}

fn gof(a: &GofArgs, seed: u64) -> AnyResult<Value> {
    check_alpha(a.alpha)?;
    let data = a.input.read()?;
    let s = &data.series;
    let n = s.len();
    let null = match &a.null_column {
        Some(col) => {
            let f0 = ingest_csv(&a.input.input, col, None, delimiter(a.input.delimiter)?)?;
            GofNull::Signal(SignalSpec::Singleton(f0.series.into_values()))
        }
        None => match a.null {
            NullArg::Constant => GofNull::Constant,
            NullArg::Zero => GofNull::Signal(SignalSpec::Zero),
        },
    };
    let g = grid_of_kind(a.grid.into(), n)?;
    let (t, src) = resolve_table(&a.table, &a.modulus, a.grid.into(), a.alpha, seed)?;
    let decision = gof_test(s, &null, &a.modulus, &g, &t, a.alpha)?;
    let null_label = match (&a.null_column, a.null) {
        (Some(c), _) => format!("column:{c}"),
        (None, NullArg::Constant) => "constant".into(),
        (None, NullArg::Zero) => "zero".into(),
    };
    let report = json!({
        "command": "gof",
        "n": n,
        "null": null_label,
        "modulus": a.modulus.to_string(),
        "grid": GridKind::from(a.grid),
        "decision": decision,
        "table": src,
    });
    if let Some(dir) = &a.output.csv_dir {
        std::fs::create_dir_all(dir)?;
        write_series_csv(dir, &data)?;
    }
    emit(&a.output, &report)?;
    Ok(report)
}

/// Changepoint settings after applying the preset and explicit flags.
struct Resolved {
    rocof: bool,
    modulus: Modulus,
    alpha: f64,
    candidates: CandidateSet,
    noise: NoiseArg,
    window_b: Option<usize>,
    cn_exponent: f64,
    boot_reps: usize,
}

fn resolve_changepoints(a: &ChangepointArgs) -> AnyResult<Resolved> {
    let rocof_preset = a.preset == Some(Preset::Rocof);
    let default_modulus = Modulus::rho2a(50.0)?;
    Ok(Resolved {
        rocof: a.rocof || rocof_preset,
        modulus: a.modulus.unwrap_or(default_modulus),
        alpha: a.alpha.unwrap_or(if rocof_preset { 0.01 } else { 0.05 }),
        candidates: a.candidates.unwrap_or(CandidatesArg::DyadicRw).into(),
        noise: a.noise.noise.unwrap_or(if rocof_preset {
            NoiseArg::Nonstationary
        } else {
            NoiseArg::Iid
        }),
        window_b: a.noise.window_b,
        cn_exponent: a.noise.cn_exponent.unwrap_or(0.33),
        boot_reps: a.noise.boot_reps.unwrap_or(DEFAULT_BOOT_REPS),
    })
}

fn changepoints(a: &ChangepointArgs, seed: u64) -> AnyResult<Value> {
    let r = resolve_changepoints(a)?;
    check_alpha(r.alpha)?;
    let raw = a.input.read()?;
    let data = if r.rocof { rocof_ingested(&raw)? } else { raw };
    let s = &data.series;
    let n = s.len();
    let rocof_preset = a.preset == Some(Preset::Rocof);
    let window_b = r.window_b.unwrap_or_else(|| {
        let base = default_window(n);
        if rocof_preset {
            3 * base
        } else {
            base
        }
    });
    let mut table_src = None;
    let noise = match r.noise {
        NoiseArg::Iid => {
            // Local tests use every inner pair, so the full-grid table applies.
            let (t, src) = resolve_table(&a.table, &r.modulus, GridKind::Full, r.alpha, seed)?;
            table_src = Some(src);
            NoiseConfig::Iid { table: t }
        }
        NoiseArg::Nonstationary => NoiseConfig::Nonstationary {
            window_b,
            c_n: c_n(n, r.cn_exponent)?,
            reps: r.boot_reps,
            seed,
        },
    };
    let cfg = PipelineConfig {
        modulus: r.modulus,
        alpha: r.alpha,
        candidates: r.candidates,
        noise,
    };
    let report = changepoint_pipeline(s, &cfg)?;
    let mut out = serde_json::to_value(&report)?;
    out["command"] = json!("changepoints");
    out["n"] = json!(n);
    out["rocof"] = json!(r.rocof);
    if let Some(p) = a.preset {
        out["preset"] = json!(format!("{p:?}").to_lowercase());
    }
    if let Some(src) = table_src {
        out["table"] = serde_json::to_value(src)?;
    }
    if data.times.is_some() {
        for (k, iv) in report.intervals.iter().enumerate() {
            out["intervals"][k]["start_time"] = json!(data.time(iv.start));
            out["intervals"][k]["end_time"] = json!(data.time(iv.end));
        }
    }
    if let Some(dir) = &a.output.csv_dir {
        std::fs::create_dir_all(dir)?;
        write_series_csv(dir, &data)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("intervals.csv"))?);
        writeln!(w, "start,end,start_time,end_time,stat,critical")?;
        for iv in &report.intervals {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                iv.start,
                iv.end,
                data.time(iv.start).unwrap_or_default(),
                data.time(iv.end).unwrap_or_default(),
                iv.stat,
                report.critical
            )?;
        }
        if r.noise == NoiseArg::Nonstationary {
            let profile = variance_profile(s, window_b)?;
            profile.write_csv(std::io::BufWriter::new(std::fs::File::create(
                dir.join("profile.csv"),
            )?))?;
        }
    }
    emit(&a.output, &out)?;
    Ok(out)
}

fn harness(h: &HarnessCommand, seed: u64) -> AnyResult<Value> {
    match h {
        HarnessCommand::Type1(a) => harness_type1(a, seed),
        HarnessCommand::Exponent(a) => harness_exponent(a, seed),
        HarnessCommand::Detection(a) => harness_detection(a, seed),
    }
}

fn variance_rule(a: &Type1Args) -> AnyResult<VarianceRule> {
    let b = a.noise.window_b.unwrap_or_else(|| default_window(a.n));
    Ok(match a.variance.as_str() {
        "difference" => VarianceRule::Difference,
        "long-run" => VarianceRule::LongRun { window_b: b },
        "bootstrap" => VarianceRule::Bootstrap {
            window_b: b,
            c_n: c_n(a.n, a.noise.cn_exponent.unwrap_or(0.33))?,
            reps: a.noise.boot_reps.unwrap_or(DEFAULT_BOOT_REPS),
        },
        other => match other.strip_prefix("known:").map(str::parse::<f64>) {
            Some(Ok(sigma)) if sigma > 0.0 => VarianceRule::Known { sigma },
            _ => bail!(Error::InvalidInput(format!(
                "variance rule '{other}' must be difference, long-run, known:<sigma> or bootstrap"
            ))),
        },
    })
}

fn harness_type1(a: &Type1Args, seed: u64) -> AnyResult<Value> {
    let model = a.noise_model.scaled(a.scale);
    let rule = variance_rule(a)?;
    let cfg = Type1Config {
        grid: a.grid.into(),
        modulus: a.modulus,
        alphas: a.alphas.clone(),
        reps: a.reps,
        rule,
        seed,
    };
    let table = match rule {
        VarianceRule::Bootstrap { .. } => None,
        _ if cfg.grid == GridKind::Dyadic && a.table.is_default() => {
            // Large-n dyadic quantiles stand in for the asymptotic ones.
            match builtin::table_at(&a.modulus, GridKind::Dyadic, ASYMPTOTIC_DYADIC_N) {
                Some(t) => {
                    let src = TableSource::new("builtin", &t);
                    Some((t, src))
                }
                None => Some(
                    resolve_tables(
                        &a.table,
                        &[a.modulus],
                        GridKind::Dyadic,
                        a.alphas.first().copied(),
                        seed,
                    )?
                    .remove(0),
                ),
            }
        }
        _ => {
            let alpha = a.alphas.first().copied();
            let mut ts = resolve_tables(&a.table, &[a.modulus], a.grid.into(), alpha, seed)?;
            Some(ts.remove(0))
        }
    };
    let result = type1_table(&model, a.n, &cfg, table.as_ref().map(|(t, _)| t))?;
    let config = json!({
        "experiment": "type1",
        "noise_model": model,
        "n": a.n,
        "config": cfg,
        "table": table.as_ref().map(|(_, s)| s),
    });
    write_harness_output(&a.out, &result.to_csv(), &config)?;
    Ok(json!({ "command": "harness type1", "result": result, "config": config }))
}

fn harness_exponent(a: &ExponentArgs, seed: u64) -> AnyResult<Value> {
    let mut cfg = ExponentConfig::new(a.grid.into(), a.rule);
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    cfg.null_reps = a.null_reps.unwrap_or(cfg.reps);
    cfg.seed = seed;
    let mut csv = String::from("rule,grid,n,l,mu_min,exponent,reps,alpha\n");
    let mut rows = Vec::new();
    for &l in &a.lengths {
        let r = realized_exponent(l, a.n, &cfg)?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            a.rule, cfg.grid, a.n, r.l, r.mu_min, r.exponent, r.reps, r.alpha
        ));
        rows.push(r);
    }
    let config = json!({ "experiment": "realized_exponent", "n": a.n, "config": cfg });
    write_harness_output(&a.out, &csv, &config)?;
    Ok(json!({ "command": "harness exponent", "results": rows, "config": config }))
}

fn harness_detection(a: &DetectionArgs, seed: u64) -> AnyResult<Value> {
    check_alpha(a.alpha)?;
    let model = a.noise_model.scaled(a.scale);
    let mut table_src = None;
    let noise = match a.noise.noise.unwrap_or(NoiseArg::Iid) {
        NoiseArg::Iid => {
            let (t, src) = resolve_table(&a.table, &a.modulus, GridKind::Full, a.alpha, seed)?;
            table_src = Some(src);
            NoiseConfig::Iid { table: t }
        }
        NoiseArg::Nonstationary => NoiseConfig::Nonstationary {
            window_b: a.noise.window_b.unwrap_or_else(|| default_window(a.n)),
            c_n: c_n(a.n, a.noise.cn_exponent.unwrap_or(0.45))?,
            reps: a.noise.boot_reps.unwrap_or(DEFAULT_BOOT_REPS),
            seed,
        },
    };
    let cfg = DetectionConfig {
        pipeline: PipelineConfig {
            modulus: a.modulus,
            alpha: a.alpha,
            candidates: a.candidates.into(),
            noise,
        },
        reps: a.reps,
        seed,
    };
    let result = detection_table(&blocks_signal(a.n)?, a.n, &model, &cfg)?;
    let mut pipeline = serde_json::to_value(&cfg.pipeline)?;
    if let Some(noise) = pipeline.get_mut("noise") {
        if let Some(obj) = noise.as_object_mut() {
            obj.remove("table");
        }
    }
    let config = json!({
        "experiment": "detection",
        "signal": "blocks",
        "n": a.n,
        "noise_model": model,
        "reps": a.reps,
        "seed": seed,
        "pipeline": pipeline,
        "table": table_src,
        "false_discovery": result.false_discovery,
    });
    write_harness_output(&a.out, &result.to_csv(), &config)?;
    Ok(json!({ "command": "harness detection", "result": result, "config": config }))
}
