//! `agrishade` command-line interface.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration, 4 weather ingest,
//! 5 simulation, 6 output.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use agrishade::config::{
    ConfigError, DiffuseMode, LayoutSpec, ResolvedConfig, RunConfig, SiteSpec,
};
use agrishade::ingest::{ingest_weather, Cadence, GapReport, IngestSpec, ParUnit};
use agrishade::par::{LhiMode, WeatherRecord};
use agrishade::report::{
    self, sha256_file, write_comparison_csv, write_json, write_run, write_series_csv,
    write_table_csv, MetricsReport, Provenance, RunManifest, WeatherInput,
};
use agrishade::simulate::{compare, representative_days, Simulator};
use agrishade::skydiffuse::{diffuse_factor, TableStore};
use agrishade::synthetic::clear_sky_year;
use agrishade::tracking::{SecondAxisMode, TrackerAngles};
use chrono::{NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "agrishade",
    version,
    about = "Ground shading and PAR maps for agrivoltaic layouts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration (and optionally a weather file) without simulating.
    Validate(ValidateArgs),
    /// Run a full simulation and write the PAR map, metrics and manifest.
    Simulate(SimulateArgs),
    /// Run several layouts on one weather input and tabulate their metrics.
    Compare(CompareArgs),
    /// Hourly beam and diffuse shading factors for whole days.
    ShadingSeries(SeriesArgs),
    /// Sky-dome shading table for one pose.
    ShadingTable(TableArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    weather: WeatherArgs,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Repeat the run recorded in a manifest.
    #[arg(long, conflicts_with_all = ["config", "weather", "weather_spec", "synthetic_year"])]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    weather: WeatherArgs,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct CompareArgs {
    /// At least two configurations; labels are the file stems.
    #[arg(long, num_args = 1.., required = true)]
    config: Vec<PathBuf>,
    #[command(flatten)]
    weather: WeatherArgs,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SeriesArgs {
    #[arg(long)]
    config: PathBuf,
    /// Days to evaluate (YYYY-MM-DD); defaults to the equinoxes and solstices of `--year`.
    #[arg(long = "date", num_args = 1..)]
    dates: Vec<NaiveDate>,
    #[arg(long, default_value_t = 2018)]
    year: i32,
    /// Weather file whose time range the dates must lie in.
    #[arg(long)]
    weather: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cache: CacheArgs,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    config: PathBuf,
    /// Interval start (UTC, `YYYY-MM-DDTHH:MM`) whose tracker pose is used.
    #[arg(long, conflicts_with_all = ["omega", "beta"])]
    time: Option<NaiveDateTime>,
    /// First-axis tilt [deg].
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    /// Second-axis tilt [deg].
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cache: CacheArgs,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct WeatherArgs {
    /// Weather CSV with the default column names.
    #[arg(long, conflicts_with_all = ["weather_spec", "synthetic_year"])]
    weather: Option<PathBuf>,
    /// JSON ingest specification (path, column map, units, cadence).
    #[arg(long, conflicts_with = "synthetic_year")]
    weather_spec: Option<PathBuf>,
    /// Use a synthetic clear-sky year instead of measured weather.
    #[arg(long)]
    synthetic_year: Option<i32>,
    /// Unit of the PAR column of `--weather`.
    #[arg(long, value_enum, default_value_t = ParUnitArg::Wm2)]
    par_unit: ParUnitArg,
    /// Average half-hourly rows of `--weather` to hourly means.
    #[arg(long)]
    half_hourly: bool,
}

#[derive(Args)]
struct CacheArgs {
    /// Directory of persisted shading tables [default: <out>/cache].
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Do not read or write persisted shading tables.
    #[arg(long)]
    no_persist: bool,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    workers: Option<usize>,
    /// Ground grid cell size [m].
    #[arg(long)]
    grid_res: Option<f64>,
    /// Sky dome step [deg].
    #[arg(long)]
    dome_step: Option<f64>,
    #[arg(long)]
    pose_bucket: Option<f64>,
    #[arg(long, value_enum)]
    tracking_mode: Option<TrackingModeArg>,
    #[arg(long)]
    lhi_mode: Option<LhiMode>,
    #[arg(long, value_enum)]
    diffuse_mode: Option<DiffuseModeArg>,
    /// Intercept of the logistic diffuse-fraction model.
    #[arg(long, allow_hyphen_values = true)]
    beta0: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrackingModeArg {
    SunPointing,
    PaperLiteral,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiffuseModeArg {
    PerCell,
    AggregateUniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParUnitArg {
    Wm2,
    Umol,
}

enum Failure {
    Config(String),
    Ingest(String),
    Simulation(String),
    Output(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 3,
            Failure::Ingest(_) => 4,
            Failure::Simulation(_) => 5,
            Failure::Output(_) => 6,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Ingest(m) => write!(f, "weather error: {m}"),
            Failure::Simulation(m) => write!(f, "simulation error: {m}"),
            Failure::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

fn config_err(e: ConfigError) -> Failure {
    Failure::Config(e.to_string())
}

fn sim_err(e: impl fmt::Display) -> Failure {
    Failure::Simulation(e.to_string())
}

fn out_err(e: impl fmt::Display) -> Failure {
    Failure::Output(e.to_string())
}

impl Overrides {
    fn apply(&self, mut cfg: ResolvedConfig) -> Result<ResolvedConfig, Failure> {
        if let Some(v) = self.grid_res {
            cfg.layout.grid_resolution = v;
        }
        let o = &mut cfg.options;
        if let Some(v) = self.workers {
            o.workers = Some(v);
        }
        if let Some(v) = self.dome_step {
            o.dome_step = v;
        }
        if let Some(v) = self.pose_bucket {
            o.pose_bucket = v;
        }
        if let Some(v) = self.tracking_mode {
            o.tracking_mode = match v {
                TrackingModeArg::SunPointing => SecondAxisMode::SunPointing,
                TrackingModeArg::PaperLiteral => SecondAxisMode::PaperLiteral,
            };
        }
        if let Some(v) = self.lhi_mode {
            o.lhi_mode = v;
        }
        if let Some(v) = self.diffuse_mode {
            o.diffuse_mode = match v {
                DiffuseModeArg::PerCell => DiffuseMode::PerCell,
                DiffuseModeArg::AggregateUniform => DiffuseMode::AggregateUniform,
            };
        }
        if let Some(v) = self.beta0 {
            o.coefficients = o.coefficients.with_beta0(v);
        }
        RunConfig {
            site: SiteSpec::Explicit(cfg.site),
            layout: LayoutSpec::Explicit(cfg.layout),
            options: cfg.options,
        }
        .resolve()
        .map_err(config_err)
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<ResolvedConfig, Failure> {
    let cfg = RunConfig::load(path)
        .and_then(|c| c.resolve())
        .map_err(config_err)?;
    overrides.apply(cfg)
}

/// Weather records plus what the report and manifest need to describe them.
struct Weather {
    records: Vec<WeatherRecord>,
    input: Option<WeatherInput>,
    synthetic_year: Option<i32>,
    gaps: Option<GapReport>,
    provenance: Provenance,
}

impl WeatherArgs {
    fn spec(&self) -> Result<Option<IngestSpec>, Failure> {
        if let Some(p) = &self.weather_spec {
            let spec: IngestSpec =
                report::read_json(p).map_err(|e| Failure::Ingest(e.to_string()))?;
            return Ok(Some(spec));
        }
        Ok(self.weather.as_ref().map(|p| IngestSpec {
            par_unit: match self.par_unit {
                ParUnitArg::Wm2 => ParUnit::WattsPerSquareMetre,
                ParUnitArg::Umol => ParUnit::MicromolPerSquareMetreSecond,
            },
            cadence: if self.half_hourly {
                Cadence::HalfHourly
            } else {
                Cadence::Hourly
            },
            ..IngestSpec::new(p)
        }))
    }

    fn load(&self, cfg: &ResolvedConfig) -> Result<Weather, Failure> {
        match (self.spec()?, self.synthetic_year) {
            (Some(spec), _) => load_measured(spec),
            (None, Some(year)) => Ok(synthetic(cfg, year)),
            (None, None) => Err(Failure::Ingest(
                "no weather input: pass --weather, --weather-spec or --synthetic-year".into(),
            )),
        }
    }
}

fn load_measured(spec: IngestSpec) -> Result<Weather, Failure> {
    let series = ingest_weather(&spec).map_err(|e| Failure::Ingest(e.to_string()))?;
    let sha256 = sha256_file(&spec.path).map_err(|e| Failure::Ingest(e.to_string()))?;
    Ok(Weather {
        records: series.records,
        provenance: Provenance::from_ingest(&spec),
        input: Some(WeatherInput { spec, sha256 }),
        synthetic_year: None,
        gaps: Some(series.gaps),
    })
}

fn synthetic(cfg: &ResolvedConfig, year: i32) -> Weather {
    Weather {
        records: clear_sky_year(&cfg.site, year),
        input: None,
        synthetic_year: Some(year),
        gaps: None,
        provenance: Provenance::synthetic(),
    }
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config, &args.overrides)?;
    println!(
        "config ok: {} layout, {} panels in {} rows, crop {} m² at {} m, site {}",
        cfg.layout.system_kind,
        cfg.layout.n_panels,
        cfg.layout.n_rows,
        cfg.layout.crop_area,
        cfg.layout.grid_resolution,
        cfg.site.name.as_deref().unwrap_or("unnamed"),
    );
    if let Some(spec) = args.weather.spec()? {
        let w = load_measured(spec)?;
        let gaps = w.gaps.unwrap_or_default();
        println!(
            "weather ok: {} records, {} missing hours, {} rows with missing values",
            w.records.len(),
            gaps.missing_hours,
            gaps.missing_value_rows
        );
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), Failure> {
    let (cfg, weather) = match &args.manifest {
        Some(path) => {
            let m: RunManifest =
                report::read_json(path).map_err(|e| Failure::Config(e.to_string()))?;
            m.verify_inputs()
                .map_err(|e| Failure::Ingest(e.to_string()))?;
            let cfg = args.overrides.apply(m.config)?;
            let weather = match (m.weather, m.synthetic_year) {
                (Some(w), _) => load_measured(w.spec)?,
                (None, Some(year)) => synthetic(&cfg, year),
                (None, None) => {
                    return Err(Failure::Config("manifest names no weather input".into()))
                }
            };
            (cfg, weather)
        }
        None => {
            let cfg = load_config(
                args.config.as_deref().expect("required by clap"),
                &args.overrides,
            )?;
            let weather = args.weather.load(&cfg)?;
            (cfg, weather)
        }
    };
    let out = Simulator::new(cfg.clone())
        .map_err(sim_err)?
        .run(&weather.records)
        .map_err(sim_err)?;
    let manifest = RunManifest::new(
        cfg.clone(),
        weather.input,
        weather.synthetic_year,
        out.stats.year,
    );
    let report = MetricsReport {
        metrics: out.metrics,
        stats: out.stats.clone(),
        config: cfg,
        provenance: weather.provenance,
        gaps: weather.gaps,
    };
    write_run(&args.out, &out.map, &report, &manifest).map_err(out_err)?;
    println!(
        "PAR reduction {:.2} %, LHI {:.2} %, mean PAR {:.1} kWh/m², {} records, {} poses",
        out.metrics.par_reduction,
        out.metrics.lhi,
        out.metrics.mean_par,
        out.stats.records,
        out.stats.pose_keys
    );
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> Result<(), Failure> {
    let mut configs = Vec::new();
    for p in &args.config {
        let label = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string());
        configs.push((label, load_config(p, &args.overrides)?));
    }
    let first = configs
        .first()
        .map(|(_, c)| c.clone())
        .ok_or_else(|| Failure::Config("no configuration given".into()))?;
    let weather = args.weather.load(&first)?;
    let rows = compare(&configs, &weather.records).map_err(sim_err)?;
    fs::create_dir_all(&args.out).map_err(out_err)?;
    let csv_path = args.out.join("comparison.csv");
    let f = fs::File::create(&csv_path).map_err(out_err)?;
    write_comparison_csv(BufWriter::new(f), &rows).map_err(out_err)?;
    write_json(&args.out.join("comparison.json"), &rows).map_err(out_err)?;
    for r in &rows {
        println!(
            "{:<16} {:<9} reduction {:>6.2} %  LHI {:>6.2} %",
            r.label, r.system_kind, r.metrics.par_reduction, r.metrics.lhi
        );
    }
    Ok(())
}

fn simulator_with_cache(
    cfg: ResolvedConfig,
    out: &Path,
    cache: &CacheArgs,
) -> Result<Simulator, Failure> {
    let sim = Simulator::new(cfg).map_err(sim_err)?;
    if cache.no_persist {
        return Ok(sim);
    }
    let dir = cache.cache_dir.clone().unwrap_or_else(|| out.join("cache"));
    fs::create_dir_all(&dir).map_err(out_err)?;
    Ok(sim.with_table_store(TableStore::new(dir)))
}

fn shading_series(args: SeriesArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let range = match &args.weather {
        Some(p) => {
            let w = load_measured(IngestSpec::new(p))?;
            let lo = w.records.first().map(|r| r.timestamp);
            let hi = w.records.last().map(|r| r.timestamp);
            lo.zip(hi)
        }
        None => None,
    };
    let dates = if args.dates.is_empty() {
        representative_days(args.year).to_vec()
    } else {
        args.dates.clone()
    };
    fs::create_dir_all(&args.out).map_err(out_err)?;
    let sim = simulator_with_cache(cfg, &args.out, &args.cache)?;
    let rows = sim.shading_series(&dates, range).map_err(sim_err)?;
    let path = args.out.join("shading_series.csv");
    let f = fs::File::create(&path).map_err(out_err)?;
    write_series_csv(BufWriter::new(f), &rows).map_err(out_err)?;
    println!("{} hourly rows written to {}", rows.len(), path.display());
    Ok(())
}

fn shading_table(args: TableArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config, &args.overrides)?;
    fs::create_dir_all(&args.out).map_err(out_err)?;
    let sim = simulator_with_cache(cfg, &args.out, &args.cache)?;
    let angles = match args.time {
        Some(t) => sim.step(&t).map_err(sim_err)?.angles,
        None => {
            let omega = args
                .omega
                .unwrap_or_else(|| sim.config.layout.fixed_tilt.unwrap_or(0.0));
            TrackerAngles {
                beta_it: args.beta.unwrap_or(0.0),
                beta_itc: args.beta.unwrap_or(0.0),
                ..TrackerAngles::fixed(omega)
            }
        }
    };
    let table = sim.table_for(sim.fingerprint(&angles));
    let path = args.out.join("shading_table.csv");
    let f = fs::File::create(&path).map_err(out_err)?;
    write_table_csv(BufWriter::new(f), &table).map_err(out_err)?;
    println!(
        "omega {:.2}°, beta {:.2}°: f_d = {:.6}",
        angles.omega_itc,
        angles.beta_itc,
        diffuse_factor(&table)
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare_cmd(a),
        Command::ShadingSeries(a) => shading_series(a),
        Command::ShadingTable(a) => shading_table(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agrishade: {e}");
            ExitCode::from(e.code())
        }
    }
}
