mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gpsched::alert::{replay, AlertConfig, DEFAULT_LOOKAHEAD_SECONDS, DEFAULT_TICK_SECONDS};
use gpsched::cluster::{radii_range, SweepOptions, DEFAULT_KNEE_FACTOR, DEFAULT_SMOOTHING_WINDOW};
use gpsched::formats;
use gpsched::ingest::{emit_csv, parse_csv, parse_nmea, Track};
use gpsched::pipeline::{learn, LearnOptions};
use gpsched::schedule::FixedOffset;
use gpsched::synth::{generate, write_truth_csv, RoutineSpec};
use gpsched::travel::{TravelModel, DEFAULT_DETOUR_FACTOR};
use gpsched::viz::{export_geojson, render_schedule};

use crate::config::Config;

const DEFAULT_OUT_DIR: &str = "models";
const DEFAULT_RADII: &str = "50:1000:25";
const DEFAULT_SEGMENT_MINUTES: u32 = 30;

/// Learn places, travel times and a weekly schedule from GPS tracks, and
/// replay tracks against a calendar to predict lateness.
///
/// Exit status: 0 success, 1 usage error, 2 data error, 3 untrained model.
#[derive(Debug, Parser)]
#[command(name = "gpsched", version)]
struct Cli {
    /// TOML file with [ingest], [learn], [replay] and [render] sections
    /// whose keys set flag defaults (flags and environment win)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse an NMEA log or track CSV into the canonical track CSV
    Ingest(IngestArgs),
    /// Learn locations, travel edges and the weekly schedule from a track
    Learn(LearnArgs),
    /// Replay a track against a calendar and log lateness alerts
    Replay(ReplayArgs),
    /// Render a schedule chart and export locations as GeoJSON
    Render(RenderArgs),
    /// Generate a synthetic track and ground truth from a routine spec
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    /// Pick by content: NMEA when the first non-blank line starts with '$'
    Auto,
    Nmea,
    Csv,
}

#[derive(Debug, clap::Args)]
struct IngestArgs {
    /// NMEA 0183 log or track CSV
    #[arg(long)]
    input: PathBuf,
    /// Input format [default: auto]
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Canonical track CSV to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct LearnArgs {
    /// Canonical track CSV
    #[arg(long)]
    track: PathBuf,
    /// Minimum data gap, in minutes, that marks a place [default: 10]
    #[arg(long)]
    gap_minutes: Option<f64>,
    /// Fixes slower than this (mph) count as stationary [default: 1.0]
    #[arg(long)]
    speed_threshold: Option<f64>,
    /// Clustering radius sweep in meters, as min:max:step [default: 50:1000:25]
    #[arg(long)]
    radii: Option<String>,
    /// Clustering seed [default: 0]
    #[arg(long, env = "GPSCHED_SEED")]
    seed: Option<u64>,
    /// Output directory for locations.csv, edges.csv, schedule.csv and sweep.csv [default: models]
    #[arg(long, env = "GPSCHED_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Fixed local time offset for the schedule, e.g. -05:00 [default: +00:00]
    #[arg(long, allow_hyphen_values = true)]
    utc_offset: Option<String>,
    /// Moving-average window over the sweep curve [default: 5]
    #[arg(long)]
    smoothing_window: Option<usize>,
    /// Knee threshold as a multiple of the flat-tail slope [default: 3.0]
    #[arg(long)]
    knee_factor: Option<f64>,
}

#[derive(Debug, clap::Args)]
struct ReplayArgs {
    /// Canonical track CSV to replay
    #[arg(long)]
    track: PathBuf,
    /// Appointments CSV (start_iso8601,location_id,title,recurs_weekly)
    #[arg(long)]
    calendar: PathBuf,
    /// Directory holding locations.csv and edges.csv [default: models]
    #[arg(long, env = "GPSCHED_OUT_DIR")]
    models_dir: Option<PathBuf>,
    /// Seconds between checks [default: 15]
    #[arg(long)]
    tick: Option<i64>,
    /// Only appointments starting within this many seconds are checked [default: 7200]
    #[arg(long)]
    lookahead: Option<i64>,
    /// Alert when slack drops below this many seconds [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    buffer: Option<f64>,
    /// Detour bound for on-the-fly routes, as a multiple of the direct distance [default: 1.5]
    #[arg(long)]
    detour_factor: Option<f64>,
    /// Alert log to write [default: <models-dir>/alerts.csv]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct RenderArgs {
    /// Schedule CSV written by `learn`
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Minutes per chart row; must divide 1440 [default: 30]
    #[arg(long)]
    segment_minutes: Option<u32>,
    /// SVG chart to write
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Text chart to write; printed to stdout when no output is given
    #[arg(long)]
    ascii: Option<PathBuf>,
    /// GeoJSON to write; needs --locations
    #[arg(long, requires = "locations")]
    geojson: Option<PathBuf>,
    /// Locations CSV written by `learn`
    #[arg(long)]
    locations: Option<PathBuf>,
    /// Track CSV to include in the GeoJSON as a line
    #[arg(long, requires = "geojson")]
    track: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    /// Routine spec (TOML)
    #[arg(long)]
    spec: PathBuf,
    /// Canonical track CSV to write
    #[arg(long)]
    out_track: PathBuf,
    /// Ground-truth CSV to write
    #[arg(long)]
    out_truth: Option<PathBuf>,
}

/// Bad flag values and config files; exits with status 1.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        1
    } else if matches!(
        err.downcast_ref::<gpsched::Error>(),
        Some(gpsched::Error::UntrainedTravelModel)
    ) {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref()).map_err(usage)?;
    match cli.command {
        Command::Ingest(a) => ingest(a, &cfg),
        Command::Learn(a) => learn_cmd(a, &cfg),
        Command::Replay(a) => replay_cmd(a, &cfg),
        Command::Render(a) => render_cmd(a, &cfg),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn read_track(path: &Path) -> Result<Track> {
    parse_csv(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn parse_offset(s: &str) -> Result<FixedOffset> {
    match s.trim() {
        "Z" | "UTC" | "utc" => Ok(FixedOffset::east_opt(0).expect("zero offset")),
        other => other.parse().map_err(|_| {
            usage(format!(
                "invalid UTC offset {other:?}, expected e.g. +02:00"
            ))
        }),
    }
}

fn parse_radii(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, step] = parts[..] else {
        return Err(usage(format!("invalid radii {s:?}, expected min:max:step")));
    };
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .map_err(|_| usage(format!("invalid radii {s:?}")))
    };
    radii_range(num(min)?, num(max)?, num(step)?).map_err(|e| usage(e.to_string()))
}

fn ingest(a: IngestArgs, cfg: &Config) -> Result<()> {
    let format = match (a.format, &cfg.ingest.format) {
        (Some(f), _) => f,
        (None, Some(name)) => InputFormat::from_str(name, true)
            .map_err(|_| usage(format!("unknown format {name:?}")))?,
        (None, None) => InputFormat::Auto,
    };
    let mut raw = Vec::new();
    open(&a.input)?.read_to_end(&mut raw)?;
    let format = match format {
        InputFormat::Auto => {
            let first = raw.iter().copied().find(|b| !b.is_ascii_whitespace());
            if first == Some(b'$') {
                InputFormat::Nmea
            } else {
                InputFormat::Csv
            }
        }
        f => f,
    };
    let track = match format {
        InputFormat::Nmea => {
            let report =
                parse_nmea(&raw[..]).with_context(|| format!("reading {}", a.input.display()))?;
            eprintln!(
                "fixes: {}, skipped: {} (bad checksum {}, inactive {}, malformed {}), duplicates: {}, ignored: {}",
                report.track.len(),
                report.skipped(),
                report.bad_checksum,
                report.inactive,
                report.malformed,
                report.duplicates,
                report.ignored
            );
            report.track
        }
        _ => {
            let track =
                parse_csv(&raw[..]).with_context(|| format!("reading {}", a.input.display()))?;
            eprintln!("fixes: {}, skipped: 0", track.len());
            track
        }
    };
    write_file(&a.out, &emit_csv(&track))
}

fn learn_cmd(a: LearnArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.learn;
    let gap_minutes = a.gap_minutes.or(c.gap_minutes).unwrap_or(10.0);
    if !(gap_minutes > 0.0) {
        return Err(usage("--gap-minutes must be positive"));
    }
    let speed_threshold = a.speed_threshold.or(c.speed_threshold).unwrap_or(1.0);
    if !(speed_threshold >= 0.0) {
        return Err(usage("--speed-threshold must be non-negative"));
    }
    let radii = parse_radii(
        a.radii
            .as_deref()
            .or(c.radii.as_deref())
            .unwrap_or(DEFAULT_RADII),
    )?;
    let smoothing_window = a
        .smoothing_window
        .or(c.smoothing_window)
        .unwrap_or(DEFAULT_SMOOTHING_WINDOW);
    if smoothing_window == 0 {
        return Err(usage("--smoothing-window must be at least 1"));
    }
    let knee_factor = a
        .knee_factor
        .or(c.knee_factor)
        .unwrap_or(DEFAULT_KNEE_FACTOR);
    if !(knee_factor > 0.0) {
        return Err(usage("--knee-factor must be positive"));
    }
    let utc_offset = parse_offset(
        a.utc_offset
            .as_deref()
            .or(c.utc_offset.as_deref())
            .unwrap_or("+00:00"),
    )?;
    let out_dir = a
        .out_dir
        .or_else(|| c.out_dir.clone())
        .unwrap_or_else(|| DEFAULT_OUT_DIR.into());

    let opts = LearnOptions {
        gap_seconds: (gap_minutes * 60.0).round() as i64,
        speed_threshold_mph: speed_threshold,
        sweep: SweepOptions {
            radii,
            seed: a.seed.or(c.seed).unwrap_or(0),
            smoothing_window,
            knee_factor,
        },
        utc_offset,
    };
    let track = read_track(&a.track)?;
    let learned = learn(&track, &opts)?;

    let mut buf = Vec::new();
    formats::write_locations(&learned.locations, &mut buf)?;
    write_file(&out_dir.join("locations.csv"), &buf)?;
    buf.clear();
    formats::write_edges(&learned.edges, &mut buf)?;
    write_file(&out_dir.join("edges.csv"), &buf)?;
    buf.clear();
    formats::write_schedule(&learned.schedule, &mut buf)?;
    write_file(&out_dir.join("schedule.csv"), &buf)?;
    buf.clear();
    formats::write_sweep(&learned.sweep, &mut buf)?;
    write_file(&out_dir.join("sweep.csv"), &buf)?;

    let flagged = learned.events.iter().filter(|e| e.flagged).count();
    eprintln!(
        "places: {}, radius: {} m{}, locations: {}, edges: {}, trips rejected: {}, events: {} ({} flagged)",
        learned.places.len(),
        learned.sweep.chosen_radius(),
        if learned.sweep.knee.found { "" } else { " (no knee, median radius)" },
        learned.locations.len(),
        learned.edges.len(),
        learned.rejected_trips,
        learned.events.len(),
        flagged
    );
    Ok(())
}

fn replay_cmd(a: ReplayArgs, cfg: &Config) -> Result<()> {
    let c = &cfg.replay;
    let models_dir = a
        .models_dir
        .or_else(|| c.models_dir.clone())
        .or_else(|| cfg.learn.out_dir.clone())
        .unwrap_or_else(|| DEFAULT_OUT_DIR.into());
    let alert_cfg = AlertConfig {
        tick_seconds: a.tick.or(c.tick).unwrap_or(DEFAULT_TICK_SECONDS),
        lookahead_seconds: a
            .lookahead
            .or(c.lookahead)
            .unwrap_or(DEFAULT_LOOKAHEAD_SECONDS),
        buffer_seconds: a.buffer.or(c.buffer).unwrap_or(0.0),
    };
    if alert_cfg.tick_seconds <= 0
        || alert_cfg.lookahead_seconds <= 0
        || !alert_cfg.buffer_seconds.is_finite()
    {
        return Err(usage("--tick and --lookahead must be positive"));
    }
    let detour = a
        .detour_factor
        .or(c.detour_factor)
        .unwrap_or(DEFAULT_DETOUR_FACTOR);
    if !(detour >= 1.0) {
        return Err(usage("--detour-factor must be at least 1"));
    }

    let loc_path = models_dir.join("locations.csv");
    let locations = formats::read_locations(open(&loc_path)?)
        .with_context(|| format!("reading {}", loc_path.display()))?;
    let edge_path = models_dir.join("edges.csv");
    let edges = formats::read_edges(open(&edge_path)?)
        .with_context(|| format!("reading {}", edge_path.display()))?;
    let model = TravelModel::new(locations, edges).with_detour_factor(detour);
    let calendar = formats::read_calendar(open(&a.calendar)?)
        .with_context(|| format!("reading {}", a.calendar.display()))?;
    let track = read_track(&a.track)?;

    let alerts = replay(&track, &calendar, &model, &alert_cfg)?;
    let mut buf = Vec::new();
    formats::write_alerts(&alerts, &mut buf)?;
    let out = a.out.unwrap_or_else(|| models_dir.join("alerts.csv"));
    write_file(&out, &buf)?;
    eprintln!("alerts: {}", alerts.len());
    Ok(())
}

fn render_cmd(a: RenderArgs, cfg: &Config) -> Result<()> {
    let segment = a
        .segment_minutes
        .or(cfg.render.segment_minutes)
        .unwrap_or(DEFAULT_SEGMENT_MINUTES);
    if segment == 0 || 1440 % segment != 0 {
        return Err(usage("--segment-minutes must divide 1440"));
    }
    if a.schedule.is_none() && a.geojson.is_none() {
        return Err(usage("nothing to render: give --schedule and/or --geojson"));
    }
    if a.schedule.is_none() && (a.svg.is_some() || a.ascii.is_some()) {
        return Err(usage("--svg and --ascii need --schedule"));
    }

    if let Some(path) = &a.schedule {
        let model = formats::read_schedule(open(path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        let chart = render_schedule(&model.segment_averages(segment)?);
        if let Some(svg) = &a.svg {
            write_file(svg, chart.svg.as_bytes())?;
        }
        if let Some(ascii) = &a.ascii {
            write_file(ascii, chart.ascii.as_bytes())?;
        }
        if a.svg.is_none() && a.ascii.is_none() && a.geojson.is_none() {
            print!("{}", chart.ascii);
        }
    }
    if let (Some(out), Some(loc_path)) = (&a.geojson, &a.locations) {
        let locations = formats::read_locations(open(loc_path)?)
            .with_context(|| format!("reading {}", loc_path.display()))?;
        let track = a.track.as_deref().map(read_track).transpose()?;
        write_file(out, export_geojson(&locations, track.as_ref()).as_bytes())?;
    }
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let text =
        fs::read_to_string(&a.spec).with_context(|| format!("cannot read {}", a.spec.display()))?;
    let spec =
        RoutineSpec::from_toml(&text).with_context(|| format!("reading {}", a.spec.display()))?;
    let (track, truth) = generate(&spec)?;
    write_file(&a.out_track, &emit_csv(&track))?;
    if let Some(path) = &a.out_truth {
        let mut buf = Vec::new();
        write_truth_csv(&truth, &mut buf)?;
        write_file(path, &buf)?;
    }
    let attended = truth.attendance.iter().filter(|x| x.attended).count();
    eprintln!(
        "fixes: {}, stays: {}, legs: {}, entries attended: {}/{}",
        track.len(),
        truth.stays.len(),
        truth.legs.len(),
        attended,
        truth.attendance.len()
    );
    Ok(())
}
