//! Long-format CSV input, result files and run manifests.
//!
//! Input is two files. The events file has columns `id,time,status,z`; the
//! treatment file has `id,t_start,d`, one row per change, with `d` in force
//! from `t_start` until the next row for that id. Lines starting with `#`
//! are manifest comments and are ignored on read.

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::inference::InferenceResult;
use crate::mc::{report_csv, report_markdown, StudyReport};
use crate::model::{Dataset, Subject, TreatmentPath};
use crate::simulation::TruthMetadata;

pub const EVENTS_HEADER: [&str; 4] = ["id", "time", "status", "z"];
pub const TREATMENT_HEADER: [&str; 3] = ["id", "t_start", "d"];
pub const CURVE_HEADER: [&str; 9] = ["t", "B_D", "se_D", "lo_D", "hi_D", "B_Z", "se_Z", "lo_Z", "hi_Z"];

/// Provenance block written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical JSON of the run configuration.
    pub config_hash: String,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config_hash: config_hash(config)?,
        })
    }

    pub fn comment_lines(&self, prefix: &str) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "{prefix} tool: {} {}\n{prefix} command: {}\n{prefix} seed: {seed}\n{prefix} config_sha256: {}\n",
            self.tool, self.version, self.command, self.config_hash
        )
    }
}

pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let json = serde_json::to_vec(config).map_err(|e| Error::invalid(format!("config serialization: {e}")))?;
    Ok(hex::encode(Sha256::digest(&json)))
}

fn schema(file: &str, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        file: file.to_string(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

struct Table {
    name: String,
    /// `(line number, fields)` per data record.
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(name: &str, input: impl Read, header: &[&str]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let found = reader
        .headers()
        .map_err(|e| schema(name, 1, "", e.to_string()))?
        .clone();
    let found: Vec<&str> = found.iter().collect();
    if found != header {
        return Err(schema(
            name,
            1,
            "",
            format!("expected header {} but found {}", header.join(","), found.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            schema(name, row, "", e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        rows.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(Table {
        name: name.to_string(),
        rows,
    })
}

impl Table {
    fn number(&self, row: usize, fields: &[String], column: usize, header: &[&str]) -> Result<f64> {
        let raw = &fields[column];
        let x: f64 = raw
            .parse()
            .map_err(|_| schema(&self.name, row, header[column], format!("'{raw}' is not a number")))?;
        if !x.is_finite() {
            return Err(schema(
                &self.name,
                row,
                header[column],
                format!("'{raw}' is not finite"),
            ));
        }
        Ok(x)
    }

    fn binary(&self, row: usize, fields: &[String], column: usize, header: &[&str]) -> Result<bool> {
        match fields[column].as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            raw => Err(schema(
                &self.name,
                row,
                header[column],
                format!("'{raw}' must be 0 or 1"),
            )),
        }
    }
}

/// Parses a dataset from events and treatment CSV streams. `tau` defaults to
/// the largest follow-up time.
pub fn read_dataset(events: impl Read, treatment: impl Read, tau: Option<f64>) -> Result<Dataset> {
    read_dataset_named(events, "events", treatment, "treatment", tau)
}

fn read_dataset_named(
    events: impl Read,
    events_name: &str,
    treatment: impl Read,
    treatment_name: &str,
    tau: Option<f64>,
) -> Result<Dataset> {
    let ev = read_table(events_name, events, &EVENTS_HEADER)?;
    let tr = read_table(treatment_name, treatment, &TREATMENT_HEADER)?;

    let mut changes: HashMap<&str, Vec<(usize, f64, bool)>> = HashMap::new();
    for (row, fields) in &tr.rows {
        let t = tr.number(*row, fields, 1, &TREATMENT_HEADER)?;
        let d = tr.binary(*row, fields, 2, &TREATMENT_HEADER)?;
        if t < 0.0 {
            return Err(schema(&tr.name, *row, "t_start", format!("t_start {t} is negative")));
        }
        let list = changes.entry(fields[0].as_str()).or_default();
        if let Some(&(_, prev, _)) = list.last() {
            if t == prev {
                return Err(schema(
                    &tr.name,
                    *row,
                    "t_start",
                    format!("duplicate t_start {t} for id {}", fields[0]),
                ));
            }
            if t < prev {
                return Err(schema(
                    &tr.name,
                    *row,
                    "t_start",
                    format!("t_start {t} for id {} is not increasing (previous {prev})", fields[0]),
                ));
            }
        } else if t != 0.0 {
            return Err(schema(
                &tr.name,
                *row,
                "t_start",
                format!("first row for id {} must have t_start = 0", fields[0]),
            ));
        }
        list.push((*row, t, d));
    }

    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut subjects = Vec::with_capacity(ev.rows.len());
    for (row, fields) in &ev.rows {
        let id = fields[0].as_str();
        if id.is_empty() {
            return Err(schema(&ev.name, *row, "id", "empty id"));
        }
        if let Some(first) = seen.insert(id, *row) {
            return Err(schema(
                &ev.name,
                *row,
                "id",
                format!("id {id} already appears on row {first}"),
            ));
        }
        let time = ev.number(*row, fields, 1, &EVENTS_HEADER)?;
        if time <= 0.0 {
            return Err(schema(&ev.name, *row, "time", format!("time {time} must be positive")));
        }
        let status = ev.binary(*row, fields, 2, &EVENTS_HEADER)?;
        let z = ev.binary(*row, fields, 3, &EVENTS_HEADER)?;
        let list = changes.get(id).ok_or_else(|| {
            schema(
                &ev.name,
                *row,
                "id",
                format!("id {id} has no rows in the treatment file"),
            )
        })?;
        let initial = list[0].2;
        let mut switches = Vec::new();
        let mut current = initial;
        for &(_, t, d) in &list[1..] {
            if d != current {
                switches.push((t, d));
                current = d;
            }
        }
        let path =
            TreatmentPath::new(initial, switches).map_err(|e| schema(&tr.name, list[0].0, "t_start", e.to_string()))?;
        subjects.push(Subject::new(id, time, status, z, path)?);
    }
    for (row, fields) in &tr.rows {
        if !seen.contains_key(fields[0].as_str()) {
            return Err(schema(
                &tr.name,
                *row,
                "id",
                format!("id {} does not appear in the events file", fields[0]),
            ));
        }
    }
    match tau {
        Some(t) => Dataset::new(subjects, t),
        None => Dataset::with_default_tau(subjects),
    }
}

pub fn load_dataset(
    events_path: impl AsRef<Path>,
    treatment_path: impl AsRef<Path>,
    tau: Option<f64>,
) -> Result<Dataset> {
    let (ep, tp) = (events_path.as_ref(), treatment_path.as_ref());
    let events = fs::File::open(ep).map_err(|e| Error::io(ep, e))?;
    let treatment = fs::File::open(tp).map_err(|e| Error::io(tp, e))?;
    read_dataset_named(
        events,
        &ep.display().to_string(),
        treatment,
        &tp.display().to_string(),
        tau,
    )
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// `(events, treatment)` CSV text. Times use the shortest representation that
/// parses back to the same `f64`.
pub fn dataset_csv(data: &Dataset, manifest: Option<&Manifest>) -> (String, String) {
    let head = manifest.map(|m| m.comment_lines("#")).unwrap_or_default();
    let mut events = head.clone();
    let mut treatment = head;
    events.push_str(&EVENTS_HEADER.join(","));
    events.push('\n');
    treatment.push_str(&TREATMENT_HEADER.join(","));
    treatment.push('\n');
    for s in data.subjects() {
        events.push_str(&format!("{},{},{},{}\n", s.id, s.followup, bit(s.event), bit(s.arm)));
        treatment.push_str(&format!("{},0,{}\n", s.id, bit(s.path.initial())));
        for &(t, d) in s.path.switches() {
            treatment.push_str(&format!("{},{t},{}\n", s.id, bit(d)));
        }
    }
    (events, treatment)
}

pub fn write_dataset(
    data: &Dataset,
    events_path: impl AsRef<Path>,
    treatment_path: impl AsRef<Path>,
    manifest: Option<&Manifest>,
) -> Result<()> {
    let (events, treatment) = dataset_csv(data, manifest);
    write_file(events_path.as_ref(), &events)?;
    write_file(treatment_path.as_ref(), &treatment)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Formats floats with 17 significant digits.
#[derive(Debug, Clone, Copy, Default)]
pub struct Precise17;

impl serde_json::ser::Formatter for Precise17 {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Pretty-printed JSON with 17-significant-digit floats.
pub fn to_json_17<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    {
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Precise17);
        value
            .serialize(&mut ser)
            .map_err(|e| Error::invalid(format!("json: {e}")))?;
    }
    out.push(b'\n');
    String::from_utf8(out).map_err(|e| Error::invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub estimate: f64,
    pub se: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Two-sided Wald p-value of a zero constant effect.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDiagnostics {
    pub no_events: bool,
    pub pinv_rtol: f64,
    pub centering: String,
    pub rank_deficient_jumps: usize,
    pub jumps: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub manifest: Manifest,
    pub estimator: String,
    pub n: usize,
    pub tau: f64,
    pub se_method: Option<String>,
    pub level: Option<f64>,
    #[serde(rename = "beta_D")]
    pub beta_d: EffectSummary,
    #[serde(rename = "beta_Z")]
    pub beta_z: Option<EffectSummary>,
    #[serde(rename = "p_null_D")]
    pub p_null_d: Option<f64>,
    #[serde(rename = "p_null_Z")]
    pub p_null_z: Option<f64>,
    pub p_gof: Option<f64>,
    pub multiplier_replicates: Option<usize>,
    pub bootstrap_failures: Option<usize>,
    pub diagnostics: SummaryDiagnostics,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn wald_p(estimate: f64, se: f64) -> Option<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    if !(se > 0.0) {
        return None;
    }
    let normal = Normal::standard();
    finite(2.0 * normal.sf((estimate / se).abs()))
}

pub fn fit_summary(fit: &FitResult, inference: Option<&InferenceResult>, manifest: Manifest) -> FitSummary {
    let effect = |c: usize| EffectSummary {
        estimate: fit.beta[c],
        se: inference.and_then(|i| finite(i.se_beta[c])),
        lower: inference.and_then(|i| finite(i.beta_lower[c])),
        upper: inference.and_then(|i| finite(i.beta_upper[c])),
        p_value: inference.and_then(|i| wald_p(fit.beta[c], i.se_beta[c])),
    };
    let robust = fit.kind.dimension() == 2;
    let mut warnings = fit.diagnostics.warnings();
    if let Some(i) = inference {
        warnings.extend(i.warnings.iter().cloned());
    }
    FitSummary {
        manifest,
        estimator: fit.kind.to_string(),
        n: fit.n,
        tau: fit.tau,
        se_method: inference.map(|i| i.method.to_string()),
        level: inference.map(|i| i.level),
        beta_d: effect(0),
        beta_z: robust.then(|| effect(1)),
        p_null_d: inference.map(|i| i.tests.p_null_d),
        p_null_z: inference.filter(|_| robust).map(|i| i.tests.p_null_z),
        p_gof: inference.map(|i| i.tests.p_gof),
        multiplier_replicates: inference.map(|i| i.tests.replicates),
        bootstrap_failures: inference.map(|i| i.bootstrap_failures),
        diagnostics: SummaryDiagnostics {
            no_events: fit.diagnostics.no_events,
            pinv_rtol: fit.diagnostics.pinv_rtol,
            centering: fit.diagnostics.centering.to_string(),
            rank_deficient_jumps: fit.diagnostics.rank_deficient_jumps,
            jumps: fit.diagnostics.jumps.len(),
            warnings,
        },
    }
}

/// Curve table at each jump; standard-error and band columns are empty
/// without inference, and the direct-effect columns are empty for a
/// one-dimensional fit.
pub fn curve_csv(fit: &FitResult, inference: Option<&InferenceResult>, manifest: &Manifest) -> Result<String> {
    let mut out = manifest.comment_lines("#");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let f17 = crate::mc::float17;
    let dims = fit.kind.dimension();
    for (k, (&t, b)) in fit.curve.jump_times().iter().zip(fit.curve.values()).enumerate() {
        let mut rec = vec![f17(t)];
        for (c, &value) in b.iter().enumerate() {
            if c >= dims {
                rec.extend(std::iter::repeat(String::new()).take(4));
                continue;
            }
            rec.push(f17(value));
            match inference {
                Some(i) => {
                    rec.push(f17(i.se_curve[k][c]));
                    rec.push(f17(i.bands[k].lower[c]));
                    rec.push(f17(i.bands[k].upper[c]));
                }
                None => rec.extend(std::iter::repeat(String::new()).take(3)),
            }
        }
        w.write_record(&rec).map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))?);
    Ok(out)
}

/// Writes `<prefix>.curve.csv` and `<prefix>.summary.json`.
pub fn write_results(
    fit: &FitResult,
    inference: Option<&InferenceResult>,
    prefix: impl AsRef<Path>,
    manifest: &Manifest,
) -> Result<(PathBuf, PathBuf)> {
    let curve_path = with_suffix(prefix.as_ref(), ".curve.csv");
    let summary_path = with_suffix(prefix.as_ref(), ".summary.json");
    write_file(&curve_path, &curve_csv(fit, inference, manifest)?)?;
    let summary = fit_summary(fit, inference, manifest.clone());
    write_file(&summary_path, &to_json_17(&summary)?)?;
    Ok((curve_path, summary_path))
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<FitSummary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct TruthSidecar<'a> {
    manifest: &'a Manifest,
    truth: &'a TruthMetadata,
}

/// Writes `<prefix>.events.csv`, `<prefix>.treatment.csv` and `<prefix>.truth.json`.
pub fn write_simulation(
    data: &Dataset,
    truth: &TruthMetadata,
    prefix: impl AsRef<Path>,
    manifest: &Manifest,
) -> Result<[PathBuf; 3]> {
    let prefix = prefix.as_ref();
    let paths = [".events.csv", ".treatment.csv", ".truth.json"].map(|s| with_suffix(prefix, s));
    write_dataset(data, &paths[0], &paths[1], Some(manifest))?;
    write_file(&paths[2], &to_json_17(&TruthSidecar { manifest, truth })?)?;
    Ok(paths)
}

/// Writes `<prefix>.csv` (metrics) and `<prefix>.md` (tables plus run notes).
pub fn write_study(report: &StudyReport, prefix: impl AsRef<Path>, manifest: &Manifest) -> Result<[PathBuf; 2]> {
    let prefix = prefix.as_ref();
    let paths = [".csv", ".md"].map(|s| with_suffix(prefix, s));
    let mut csv = manifest.comment_lines("#");
    csv.push_str(&report_csv(&report.rows)?);
    write_file(&paths[0], &csv)?;
    write_file(&paths[1], &study_markdown(report, manifest))?;
    Ok(paths)
}

pub fn study_markdown(report: &StudyReport, manifest: &Manifest) -> String {
    let cfg = &report.config;
    let mut md = String::new();
    md.push_str(&format!(
        "# Simulation study: {} variant, N = {}, R = {}\n\n",
        cfg.dgm.variant, cfg.dgm.n, cfg.replicates
    ));
    md.push_str(&manifest.comment_lines("-"));
    md.push_str(&format!(
        "- truth: B_D(t) = {} t, B_Z(t) = {} t\n- standard errors: {}\n- censoring hazard: {}\n- mean censoring fraction: {:.4}\n- mean switching fraction: {:.4}\n",
        report.truth.slope_d,
        report.truth.slope_z,
        cfg.se_method,
        report.censor_hazard,
        report.mean_censoring_fraction,
        report.mean_switching_fraction
    ));
    for kind in &cfg.estimators {
        md.push_str(&format!("- {kind} failures: {}\n", report.failures(*kind)));
    }
    md.push('\n');
    md.push_str(&report_markdown(&report.rows));
    if !report.rejection.is_empty() {
        md.push_str("\n| estimator | reject B_D = 0 | reject B_Z = 0 | reject constant B_D |\n|---|---:|---:|---:|\n");
        for r in &report.rejection {
            md.push_str(&format!(
                "| {} | {:.4} | {:.4} | {:.4} |\n",
                r.estimator, r.at_5pct[0], r.at_5pct[1], r.at_5pct[2]
            ));
        }
    }
    if !report.warnings.is_empty() {
        md.push_str("\nWarnings:\n\n");
        for w in &report.warnings {
            md.push_str(&format!("- {w}\n"));
        }
    }
    md
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}
