//! File formats: point CSV, GeoJSON import, canonical JSON reports and SVG
//! histograms.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::AttackOutcome;
use crate::dataset::{AttrValue, Record};
use crate::error::{Error, Result};
use crate::geometry::{Point, StudyArea};
use crate::masking::{MethodDescriptor, RNG_ALGORITHM};
use crate::metrics::MetricReport;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: line as usize,
        message: message.into(),
    }
}

/// Reads `id,x,y[,attr...]`. Empty attribute cells are left out of the
/// record's attribute map.
pub fn read_points_csv(path: &Path) -> Result<Vec<Record>> {
    let bytes = fs::read(path)?;
    parse_points_csv(&bytes, path)
}

fn parse_points_csv(bytes: &[u8], path: &Path) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let names: Vec<String> = headers.iter().map(str::to_string).collect();
    let expected = ["id", "x", "y"];
    if names.len() < 3
        || names[..3]
            .iter()
            .zip(expected)
            .any(|(h, e)| !h.eq_ignore_ascii_case(e))
    {
        return Err(parse_err(path, 1, "header must start with id,x,y"));
    }
    let mut attr_names = HashSet::new();
    for n in &names[3..] {
        if n.is_empty() || !attr_names.insert(n) {
            return Err(parse_err(
                path,
                1,
                format!("empty or repeated column name '{n}'"),
            ));
        }
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let coord = |i: usize| -> Result<f64> {
            let raw = &row[i];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(
                    path,
                    line,
                    format!("{} = '{raw}' is not a finite number", expected[i]),
                )),
            }
        };
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty id"));
        }
        let location = Point::new(coord(1)?, coord(2)?);
        if !seen.insert(id.clone()) {
            return Err(parse_err(path, line, format!("duplicate id '{id}'")));
        }
        let mut record = Record::new(id, location);
        for (name, value) in names[3..].iter().zip(row.iter().skip(3)) {
            if !value.is_empty() {
                record
                    .attributes
                    .insert(name.clone(), AttrValue::parse(value));
            }
        }
        out.push(record);
    }
    Ok(out)
}

/// Reads a GeoJSON FeatureCollection of Point features. The id comes from the
/// feature id, else an `id` property, else the feature's position.
pub fn read_points_geojson(path: &Path) -> Result<Vec<Record>> {
    let value: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
    let bad = |i: usize, m: &str| parse_err(path, i as u64 + 1, format!("feature {i}: {m}"));
    let features = value
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| parse_err(path, 0, "expected a FeatureCollection"))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let geometry = f
            .get("geometry")
            .ok_or_else(|| bad(i, "missing geometry"))?;
        let kind = geometry.get("type").and_then(|t| t.as_str()).unwrap_or("");
        if kind != "Point" {
            return Err(bad(i, &format!("geometry type '{kind}' is not Point")));
        }
        let coords: Vec<f64> = geometry
            .get("coordinates")
            .and_then(|c| c.as_array())
            .map(|c| c.iter().filter_map(|v| v.as_f64()).collect())
            .unwrap_or_default();
        if coords.len() < 2 {
            return Err(bad(i, "point needs two numeric coordinates"));
        }
        let location =
            Point::try_new(coords[0], coords[1]).map_err(|_| bad(i, "non-finite coordinate"))?;
        let props = f.get("properties").and_then(|p| p.as_object());
        let json_id = |v: &serde_json::Value| match v {
            serde_json::Value::String(s) => Some(s.clone()),
            serde_json::Value::Number(n) => Some(n.to_string()),
            _ => None,
        };
        let id = f
            .get("id")
            .and_then(json_id)
            .or_else(|| props.and_then(|p| p.get("id")).and_then(json_id))
            .unwrap_or_else(|| i.to_string());
        if !seen.insert(id.clone()) {
            return Err(bad(i, &format!("duplicate id '{id}'")));
        }
        let mut record = Record::new(id, location);
        for (k, v) in props.into_iter().flatten() {
            let value = match v {
                serde_json::Value::Number(n) => n.as_f64().map(AttrValue::Number),
                serde_json::Value::String(s) => Some(AttrValue::Text(s.clone())),
                serde_json::Value::Bool(b) => Some(AttrValue::Text(b.to_string())),
                _ => None,
            };
            if let (Some(value), true) = (value, k != "id") {
                record.attributes.insert(k.clone(), value);
            }
        }
        out.push(record);
    }
    Ok(out)
}

/// CSV unless the extension says GeoJSON.
pub fn read_points(path: &Path) -> Result<Vec<Record>> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("geojson") | Some("json") => read_points_geojson(path),
        _ => read_points_csv(path),
    }
}

/// Writes `id,x,y` plus the union of attribute names in sorted order.
/// Coordinates use the shortest representation that reads back exactly.
pub fn write_points_csv(path: &Path, records: &[Record]) -> Result<()> {
    let attrs: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.attributes.keys().map(String::as_str))
        .collect();
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id", "x", "y"];
    header.extend(attrs.iter().copied());
    writer.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.id.clone(),
            r.location.x.to_string(),
            r.location.y.to_string(),
        ];
        row.extend(attrs.iter().map(|a| {
            r.attributes
                .get(*a)
                .map(|v| v.to_string())
                .unwrap_or_default()
        }));
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    atomic_write(path, &bytes)
}

/// Writes through a temporary sibling and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Sorted keys, two-space indentation, shortest round-trip floats, trailing
/// newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // going through Value sorts object keys
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, to_canonical_json(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Sidecar written next to a masked file: enough to rebuild forward and
/// backward areas and to re-run the masking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema_version: u32,
    pub tool_version: String,
    pub method: MethodDescriptor,
    pub seed: u64,
    pub rng: String,
    pub area: StudyArea,
    pub digests: BTreeMap<String, String>,
}

impl RunMetadata {
    pub fn new(method: MethodDescriptor, seed: u64, area: StudyArea) -> Self {
        RunMetadata {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            method,
            seed,
            rng: RNG_ALGORITHM.to_string(),
            area,
            digests: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub schema_version: u32,
    pub tool_version: String,
    /// Echo of the invocation: everything needed to re-run it.
    pub config: serde_json::Value,
    /// Role (`universe`, `original`, ...) → sha256 of the input file.
    pub digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attack: Vec<AttackOutcome>,
    /// Wall-clock seconds per stage; omitted unless requested so that
    /// reports stay byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<BTreeMap<String, f64>>,
}

impl ReportEnvelope {
    pub fn new(config: serde_json::Value) -> Self {
        ReportEnvelope {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION.to_string(),
            config,
            digests: BTreeMap::new(),
            metrics: None,
            attack: Vec::new(),
            timing: None,
        }
    }
}

pub fn write_report_json(envelope: &ReportEnvelope, path: &Path) -> Result<()> {
    write_json(path, envelope)
}

pub fn read_report_json(path: &Path) -> Result<ReportEnvelope> {
    let env: ReportEnvelope = read_json(path)?;
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "report schema version {} is not supported (expected {SCHEMA_VERSION})",
            env.schema_version
        )));
    }
    Ok(env)
}

/// Bar chart of a k histogram.
pub fn histogram_svg(title: &str, histogram: &BTreeMap<u64, u64>) -> String {
    let (w, h, pad) = (640.0, 320.0, 40.0);
    let max_count = histogram.values().copied().max().unwrap_or(0).max(1) as f64;
    let bars = histogram.len().max(1) as f64;
    let bar_w = (w - 2.0 * pad) / bars;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        w / 2.0,
        xml_escape(title)
    );
    for (i, (k, count)) in histogram.iter().enumerate() {
        let bh = (h - 2.0 * pad) * (*count as f64) / max_count;
        let x = pad + i as f64 * bar_w;
        let y = h - pad - bh;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{bh:.2}" fill="steelblue"><title>k={k}: {count}</title></rect>"#,
            (bar_w - 1.0).max(0.5)
        );
        if histogram.len() <= 30 || i % (histogram.len() / 15).max(1) == 0 {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{k}</text>"#,
                x + bar_w / 2.0,
                h - pad + 14.0
            );
        }
    }
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Plain-text summary of a report envelope.
pub fn render_text(envelope: &ReportEnvelope) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "geomask {} report (schema {})",
        envelope.tool_version, envelope.schema_version
    );
    for (role, digest) in &envelope.digests {
        let _ = writeln!(s, "  {role:<10} sha256 {}", &digest[..digest.len().min(16)]);
    }
    if let Some(m) = &envelope.metrics {
        let _ = writeln!(s, "\nmetrics over {} records", m.per_record.len());
        if let Some(desc) = &m.method {
            let _ = writeln!(
                s,
                "  method {} (clipped: {}), soundness {:?}",
                desc.method, desc.clip_to_area, m.method_soundness
            );
        }
        let _ = writeln!(
            s,
            "  {:<22} {:>6} {:>6} {:>9} {:>6} {:>6} {:>6}",
            "metric", "min", "max", "mean", "p05", "p50", "p95"
        );
        for name in &m.metrics_computed {
            if let Some(sm) = m.summary.get(name) {
                let opt = |v: Option<u64>| v.map_or("-".to_string(), |v| v.to_string());
                let _ = writeln!(
                    s,
                    "  {:<22} {:>6} {:>6} {:>9} {:>6} {:>6} {:>6}",
                    name,
                    opt(sm.min),
                    opt(sm.max),
                    sm.mean.map_or("-".to_string(), |v| format!("{v:.3}")),
                    opt(sm.quantiles.get("p05").copied()),
                    opt(sm.quantiles.get("p50").copied()),
                    opt(sm.quantiles.get("p95").copied()),
                );
            }
        }
        if let Some(policy) = &m.policy {
            let threshold = policy
                .min_k
                .map_or("undisclosed".to_string(), |k| k.to_string());
            let _ = writeln!(s, "  policy (min k {threshold}):");
            for (name, ok) in &policy.passed {
                let _ = writeln!(s, "    {name:<22} {}", if *ok { "pass" } else { "FAIL" });
            }
        }
        for w in &m.warnings {
            let _ = writeln!(s, "  warning [{}] {}", w.code, w.message);
        }
    }
    for a in &envelope.attack {
        let g = &a.aggregate;
        let _ = writeln!(
            s,
            "\nattack {} ({:?}, pool {}): {} queries, success {:.4} ± {:.4}",
            a.scenario,
            a.strategy,
            a.candidate_pool,
            g.queries,
            g.success_rate,
            g.success_standard_error
        );
        let _ = writeln!(
            s,
            "  structural misses {}, mean candidate set {}, mean 1/k {}",
            g.structural_misses,
            g.mean_candidate_set_size
                .map_or("-".into(), |v| format!("{v:.3}")),
            g.mean_inverse_k.map_or("-".into(), |v| format!("{v:.4}")),
        );
        for w in &a.warnings {
            let _ = writeln!(s, "  warning [{}] {}", w.code, w.message);
        }
    }
    s
}
