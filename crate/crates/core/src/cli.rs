//! Command-line surface.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::attack::{run_scenario, AttackConfig, ScenarioId, Strategy, DEFAULT_N_MAX};
use crate::dataset::{locations, AddressUniverse, ExternalDataset, LinkedDatasets, Record};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect, StudyArea};
use crate::io::{
    atomic_write, file_digest, histogram_svg, read_json, read_points, read_report_json,
    render_text, to_canonical_json, write_json, write_points_csv, write_report_json,
    ReportEnvelope, RunMetadata,
};
use crate::masking::{mask_dataset, MaskMethod, MaskRun, MethodDescriptor};
use crate::metrics::compute_report;
use crate::synth::{generate_universe, sample_targets, AttributeGenerator, Pattern, SynthSpec};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "GEOMASK_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "geomask",
    version,
    about = "Geomasking, anonymity metrics and attack simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic address universe and a target sample.
    Generate(GenerateArgs),
    /// Mask a point file.
    Mask(MaskArgs),
    /// Compute per-record anonymity metrics.
    Metrics(MetricsArgs),
    /// Simulate re-identification attacks.
    Attack(AttackArgs),
    /// Summarise a JSON report as text and optional SVG histograms.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    /// Study area as minx,miny,maxx,maxy (meters).
    #[arg(long, allow_hyphen_values = true)]
    area: String,
    #[arg(long)]
    universe_size: usize,
    #[arg(long)]
    sample_size: usize,
    /// `uniform` or `clustered:K,SIGMA`.
    #[arg(long, default_value = "uniform")]
    pattern: String,
    /// Categorical attribute, e.g. `group=A:0.5,B:0.5`; repeatable.
    #[arg(long = "attr")]
    attributes: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    universe_out: PathBuf,
    #[arg(long)]
    targets_out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct AreaArgs {
    /// Study area as minx,miny,maxx,maxy; defaults to run metadata or the
    /// bounding box of the data.
    #[arg(long, allow_hyphen_values = true)]
    area: Option<String>,
    /// Accept coordinates that look like longitude/latitude degrees.
    #[arg(long)]
    planar: bool,
}

#[derive(Debug, Args, Serialize)]
struct MaskArgs {
    #[arg(long)]
    input: PathBuf,
    /// `uniform:R`, `donut:RMIN,RMAX` or `gridsnap:CELL[,OX,OY]`.
    #[arg(long)]
    method: String,
    #[arg(long)]
    seed: u64,
    /// Keep masked points inside the study area.
    #[arg(long)]
    clip: bool,
    #[command(flatten)]
    area: AreaArgs,
    #[arg(long)]
    output: PathBuf,
    /// Run metadata path; defaults to OUTPUT.meta.json.
    #[arg(long)]
    metadata: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct LinkedArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    masked: PathBuf,
    #[arg(long)]
    universe: PathBuf,
    /// Run metadata written by `mask`; supplies the generating method.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Method descriptor assumed by the evaluation; defaults to the one in
    /// the metadata.
    #[arg(long)]
    method: Option<String>,
    /// With --method: the masking was clipped to the study area.
    #[arg(long)]
    clip: bool,
    #[command(flatten)]
    area: AreaArgs,
}

#[derive(Debug, Args, Serialize)]
struct MetricsArgs {
    #[command(flatten)]
    linked: LinkedArgs,
    /// Check every metric against this minimum k.
    #[arg(long)]
    min_k: Option<u64>,
    /// Print the minimum k in the report (hidden by default).
    #[arg(long)]
    disclose_threshold: bool,
    /// Add wall-clock timings (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Defaults to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AttackArgs {
    #[command(flatten)]
    linked: LinkedArgs,
    /// Scenario 1.1 .. 2.4 or `all`; repeatable.
    #[arg(long = "scenario", required = true)]
    scenarios: Vec<String>,
    /// `nn`, `cross-match` or `reversal`.
    #[arg(long, default_value = "nn")]
    strategy: String,
    /// Addresses known to the intruder (perspective 2).
    #[arg(long)]
    external: Option<PathBuf>,
    /// The external addresses are known participants.
    #[arg(long)]
    participation_known: bool,
    /// Attributes the intruder matches on before the spatial step.
    #[arg(long, value_delimiter = ',')]
    quasi_identifiers: Vec<String>,
    /// Attributes checked for trivial disclosure.
    #[arg(long = "sensitive", value_delimiter = ',')]
    sensitive_attributes: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: usize,
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    /// Write one SVG histogram per metric into this directory.
    #[arg(long)]
    svg_dir: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("geomask: {e}");
        return e.exit_code();
    }
    let result = match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Mask(a) => mask(&a),
        Command::Metrics(a) => metrics(&a),
        Command::Attack(a) => attack(&a),
        Command::Report(a) => report(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("geomask: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV}='{raw}' is not a thread count")))?;
    // a pool configured earlier in the same process is fine
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn parse_area(raw: &str) -> Result<StudyArea> {
    let v: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad --area '{raw}'")))?;
    if v.len() != 4 || v[0] >= v[2] || v[1] >= v[3] {
        return Err(Error::Config(format!(
            "--area must be minx,miny,maxx,maxy with min < max, got '{raw}'"
        )));
    }
    StudyArea::new(Rect::new(v[0], v[1], v[2], v[3])).map_err(|e| Error::Config(e.to_string()))
}

fn parse_pattern(raw: &str) -> Result<Pattern> {
    let bad = || Error::Config(format!("bad --pattern '{raw}'"));
    match raw.split_once(':') {
        None if raw == "uniform" => Ok(Pattern::Uniform),
        Some(("clustered", rest)) => {
            let (k, sigma) = rest.split_once(',').ok_or_else(bad)?;
            Ok(Pattern::Clustered {
                clusters: k.trim().parse().map_err(|_| bad())?,
                sigma: sigma.trim().parse().map_err(|_| bad())?,
            })
        }
        _ => Err(bad()),
    }
}

/// Rejects data that look like geographic degrees unless `--planar` is set.
fn check_planar(points: &[Point], planar: bool) -> Result<()> {
    let degrees = !points.is_empty()
        && points
            .iter()
            .all(|p| p.x.abs() <= 180.0 && p.y.abs() <= 90.0);
    if degrees && !planar {
        return Err(Error::Config(
            "coordinates look like longitude/latitude degrees; project them to meters or pass --planar".into(),
        ));
    }
    Ok(())
}

fn config_value<T: Serialize>(command: &str, args: &T) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(args)?;
    if let serde_json::Value::Object(m) = &mut v {
        m.insert("command".into(), command.into());
    }
    Ok(v)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => atomic_write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_envelope(output: Option<&Path>, env: &ReportEnvelope) -> Result<()> {
    match output {
        Some(p) => write_report_json(env, p),
        None => emit(None, &to_canonical_json(env)?),
    }
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = SynthSpec {
        area: parse_area(&a.area)?,
        universe_size: a.universe_size,
        pattern: parse_pattern(&a.pattern)?,
        sample_size: a.sample_size,
        attributes: a
            .attributes
            .iter()
            .map(|s| AttributeGenerator::parse(s))
            .collect::<Result<_>>()?,
        seed: a.seed,
    };
    spec.validate()?;
    let universe = generate_universe(&spec)?;
    // the sample stream must not coincide with the universe stream
    let targets = sample_targets(
        &universe,
        spec.sample_size,
        &spec.attributes,
        spec.seed.wrapping_add(1),
    )?;
    write_points_csv(&a.universe_out, &universe.records)?;
    write_points_csv(&a.targets_out, &targets)
}

fn default_metadata_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn mask(a: &MaskArgs) -> Result<()> {
    let method: MaskMethod = a.method.parse()?;
    let original = read_points(&a.input)?;
    let pts = locations(&original);
    check_planar(&pts, a.area.planar)?;
    let area = match &a.area.area {
        Some(raw) => parse_area(raw)?,
        None => StudyArea::enclosing(&pts, 0.0)?,
    };
    let run = MaskRun::new(method, a.seed).clipped(a.clip);
    let linked = mask_dataset(&original, &run, &area)?;
    write_points_csv(&a.output, &linked.masked)?;
    let mut meta = RunMetadata::new(run.descriptor(), a.seed, area);
    meta.digests
        .insert("original".into(), file_digest(&a.input)?);
    meta.digests
        .insert("masked".into(), file_digest(&a.output)?);
    let meta_path = a
        .metadata
        .clone()
        .unwrap_or_else(|| default_metadata_path(&a.output));
    write_json(&meta_path, &meta)
}

struct Loaded {
    linked: LinkedDatasets,
    universe: AddressUniverse,
    /// Descriptor the evaluation assumes (may differ from the recorded one).
    method: Option<MethodDescriptor>,
    digests: BTreeMap<String, String>,
}

fn load(a: &LinkedArgs) -> Result<Loaded> {
    let original = read_points(&a.original)?;
    let masked = read_points(&a.masked)?;
    let universe_records: Vec<Record> = read_points(&a.universe)?;
    let meta: Option<RunMetadata> = a.metadata.as_deref().map(read_json).transpose()?;

    let mut all = locations(&universe_records);
    all.extend(locations(&original));
    all.extend(locations(&masked));
    check_planar(&all, a.area.planar)?;

    let area = match (&a.area.area, &meta) {
        (Some(raw), _) => parse_area(raw)?,
        (None, Some(m)) => m.area.clone(),
        (None, None) => StudyArea::enclosing(&locations(&universe_records), 0.0)?,
    };
    let assumed = match &a.method {
        Some(raw) => Some(MethodDescriptor::new(raw.parse()?, a.clip)),
        None => meta.as_ref().map(|m| m.method),
    };

    let mut digests = BTreeMap::new();
    digests.insert("original".into(), file_digest(&a.original)?);
    digests.insert("masked".into(), file_digest(&a.masked)?);
    digests.insert("universe".into(), file_digest(&a.universe)?);
    if let Some(p) = &a.metadata {
        digests.insert("metadata".into(), file_digest(p)?);
    }

    let universe = AddressUniverse::new(universe_records, area);
    let mut linked = LinkedDatasets::new(original, masked).with_universe(universe.clone());
    if let Some(m) = &meta {
        linked = linked.with_method(m.method);
    }
    Ok(Loaded {
        linked,
        universe,
        method: assumed,
        digests,
    })
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let start = Instant::now();
    let loaded = load(&a.linked)?;
    let mut report = compute_report(&loaded.linked, &loaded.universe, loaded.method.as_ref())?;
    if let Some(k) = a.min_k {
        report.apply_policy(k, a.disclose_threshold);
    }
    let mut config = config_value("metrics", a)?;
    if a.min_k.is_some() && !a.disclose_threshold {
        // the echo must not leak what the report withholds
        config["min_k"] = "withheld".into();
    }
    let mut env = ReportEnvelope::new(config);
    env.digests = loaded.digests;
    env.metrics = Some(report);
    if a.timing {
        env.timing = Some([("metrics_seconds".to_string(), start.elapsed().as_secs_f64())].into());
    }
    emit_envelope(a.output.as_deref(), &env)
}

fn parse_scenarios(raw: &[String]) -> Result<Vec<ScenarioId>> {
    let mut out = Vec::new();
    for r in raw {
        if r == "all" {
            out.extend(ScenarioId::all());
        } else {
            out.push(r.parse()?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn attack(a: &AttackArgs) -> Result<()> {
    let start = Instant::now();
    let scenarios = parse_scenarios(&a.scenarios)?;
    let strategy: Strategy = a.strategy.parse()?;
    let loaded = load(&a.linked)?;
    let external = match &a.external {
        Some(p) => {
            let recs = read_points(p)?;
            Some(
                ExternalDataset::new(recs, a.participation_known)
                    .with_quasi_identifiers(a.quasi_identifiers.clone()),
            )
        }
        None if !a.quasi_identifiers.is_empty() => {
            return Err(Error::Config("--quasi-identifiers needs --external".into()))
        }
        None => None,
    };
    let config = AttackConfig {
        strategy,
        method: loaded.method,
        n_max: a.n_max,
        sensitive_attributes: a.sensitive_attributes.clone(),
    };
    let mut env = ReportEnvelope::new(config_value("attack", a)?);
    env.digests = loaded.digests;
    if let Some(p) = &a.external {
        env.digests.insert("external".into(), file_digest(p)?);
    }
    for s in scenarios {
        let ext = if s.perspective == 2 {
            external.as_ref()
        } else {
            None
        };
        env.attack.push(run_scenario(
            s,
            &loaded.linked,
            &loaded.universe,
            ext,
            &config,
        )?);
    }
    if a.timing {
        env.timing = Some([("attack_seconds".to_string(), start.elapsed().as_secs_f64())].into());
    }
    emit_envelope(a.output.as_deref(), &env)
}

fn report(a: &ReportArgs) -> Result<()> {
    let env = read_report_json(&a.input)?;
    if let Some(dir) = &a.svg_dir {
        std::fs::create_dir_all(dir)?;
        if let Some(m) = &env.metrics {
            for (name, summary) in &m.summary {
                let svg = histogram_svg(&format!("{name} histogram"), &summary.histogram);
                atomic_write(&dir.join(format!("{name}.svg")), svg.as_bytes())?;
            }
        }
    }
    emit(a.output.as_deref(), &render_text(&env))
}
