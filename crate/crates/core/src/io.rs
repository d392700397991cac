//! File formats: geometry, scenario, transform and model configs (TOML),
//! timestamped streams (CSV), and run manifests (JSON).
//!
//! Stream files carry a header row and one sample per line:
//!
//! | kind       | columns                          |
//! |------------|----------------------------------|
//! | wavelength | `timestamp,w1,...,wm`            |
//! | tracker    | `timestamp,x,y,z`                |
//! | aligned    | `timestamp,w1,...,wm,x,y,z`      |
//!
//! Timestamps are seconds and must be strictly increasing. Numbers are
//! written in the shortest form that parses back to the same `f64`, so
//! reading and rewriting a canonical file reproduces it byte for byte.
//! Every file is written to a temporary sibling and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frames::{AlignedPair, Registration, RigidTransform, TipSample, TrackedPoint};
use crate::geometry::{GeometryFile, SensorGeometry};
use crate::regression::{NodeSelection, Preprocessing, RegressionModel};
use crate::sensor::WavelengthFrame;
use crate::simulator::BendingScenario;

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write via a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn parse_toml<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.message().to_string(),
        }
    })
}

fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("config types serialize to TOML")
}

// ---- geometry ------------------------------------------------------------

pub fn parse_geometry(path: &Path, text: &str) -> Result<SensorGeometry> {
    let file: GeometryFile = parse_toml(path, text)?;
    let geom = SensorGeometry::from(file);
    geom.validate()?;
    Ok(geom)
}

pub fn load_geometry(path: &Path) -> Result<SensorGeometry> {
    parse_geometry(path, &read_text(path)?)
}

pub fn save_geometry(path: &Path, geom: &SensorGeometry) -> Result<()> {
    write_atomic(path, geom.to_toml_string().as_bytes())
}

// ---- scenario ------------------------------------------------------------

pub fn load_scenario(path: &Path) -> Result<BendingScenario> {
    let text = read_text(path)?;
    let scenario: BendingScenario = parse_toml(path, &text)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn scenario_to_toml(scenario: &BendingScenario) -> String {
    to_toml(scenario)
}

// ---- transforms ----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformEntry {
    /// Row-major 3×3.
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TransformEntry {
    fn from_transform(t: &RigidTransform) -> Self {
        let r = t.rotation();
        let mut rotation = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                rotation[3 * i + j] = r[(i, j)];
            }
        }
        let p = t.translation();
        TransformEntry {
            rotation,
            translation: [p.x, p.y, p.z],
        }
    }

    fn to_transform(&self) -> Result<RigidTransform> {
        RigidTransform::from_loaded(Matrix3::from_row_slice(&self.rotation), Vector3::from(self.translation))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformsFile {
    tracker_to_straight_pose: TransformEntry,
    tracker_to_reference: TransformEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tracker_to_reference_current: Option<TransformEntry>,
}

/// Registration transforms; `tracker_to_reference_current` defaults to the
/// registration-time reference pose.
pub fn load_registration(path: &Path) -> Result<Registration> {
    let file: TransformsFile = parse_toml(path, &read_text(path)?)?;
    let reference = file.tracker_to_reference.to_transform()?;
    Ok(Registration {
        tracker_to_straight_pose: file.tracker_to_straight_pose.to_transform()?,
        tracker_to_reference: reference,
        tracker_to_reference_current: match &file.tracker_to_reference_current {
            Some(t) => t.to_transform()?,
            None => reference,
        },
    })
}

pub fn registration_to_toml(reg: &Registration) -> String {
    to_toml(&TransformsFile {
        tracker_to_straight_pose: TransformEntry::from_transform(&reg.tracker_to_straight_pose),
        tracker_to_reference: TransformEntry::from_transform(&reg.tracker_to_reference),
        tracker_to_reference_current: Some(TransformEntry::from_transform(&reg.tracker_to_reference_current)),
    })
}

// ---- models --------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    label: String,
    total_nodes: usize,
    selection: Vec<usize>,
    bias: bool,
    /// `raw` or `delta`.
    preprocessing: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference_wavelengths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometry_fingerprint: Option<String>,
    training_residual: f64,
    condition_estimate: f64,
    rank: usize,
    samples: usize,
    #[serde(default)]
    warnings: Vec<String>,
    /// One row per design column, bias last.
    coefficients: Vec<[f64; 3]>,
}

pub fn model_to_toml(model: &RegressionModel) -> String {
    let (preprocessing, reference_wavelengths) = match &model.preprocessing {
        Preprocessing::Raw => ("raw", None),
        Preprocessing::DeltaFromBase(base) => ("delta", Some(base.clone())),
    };
    let coefficients = model.parameters.row_iter().map(|r| [r[0], r[1], r[2]]).collect();
    to_toml(&ModelFile {
        label: model.selection.label.clone(),
        total_nodes: model.selection.total_nodes,
        selection: model.selection.indices.clone(),
        bias: model.bias,
        preprocessing: preprocessing.into(),
        reference_wavelengths,
        geometry_fingerprint: model.geometry_fingerprint.clone(),
        training_residual: model.training_residual,
        condition_estimate: model.condition_estimate,
        rank: model.rank,
        samples: model.samples,
        warnings: model.warnings.clone(),
        coefficients,
    })
}

pub fn parse_model(path: &Path, text: &str) -> Result<RegressionModel> {
    let f: ModelFile = parse_toml(path, text)?;
    let selection = NodeSelection::new(f.total_nodes, f.selection, f.label)?;
    let preprocessing = match (f.preprocessing.as_str(), f.reference_wavelengths) {
        ("raw", _) => Preprocessing::Raw,
        ("delta", Some(base)) if base.len() == f.total_nodes => Preprocessing::DeltaFromBase(base),
        ("delta", _) => {
            return Err(Error::InvalidArgument(format!(
                "{}: delta preprocessing needs {} reference_wavelengths",
                path.display(),
                f.total_nodes
            )))
        }
        (other, _) => {
            return Err(Error::InvalidArgument(format!(
                "{}: unknown preprocessing '{other}'",
                path.display()
            )))
        }
    };
    let expected = selection.len() + f.bias as usize;
    if f.coefficients.len() != expected {
        return Err(Error::DimensionMismatch {
            what: "model coefficients",
            expected,
            found: f.coefficients.len(),
        });
    }
    let parameters = DMatrix::from_fn(expected, 3, |i, j| f.coefficients[i][j]);
    Ok(RegressionModel {
        parameters,
        selection,
        bias: f.bias,
        preprocessing,
        training_residual: f.training_residual,
        condition_estimate: f.condition_estimate,
        rank: f.rank,
        samples: f.samples,
        warnings: f.warnings,
        geometry_fingerprint: f.geometry_fingerprint,
    })
}

pub fn load_model(path: &Path) -> Result<RegressionModel> {
    parse_model(path, &read_text(path)?)
}

// ---- streams -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Wavelength,
    Tracker,
    Aligned,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stream {
    Wavelength(Vec<WavelengthFrame>),
    Tracker(Vec<TrackedPoint>),
    Aligned(Vec<AlignedPair>),
}

fn wavelength_header(m: usize) -> Vec<String> {
    std::iter::once("timestamp".to_string())
        .chain((1..=m).map(|i| format!("w{i}")))
        .collect()
}

fn expected_header(kind: StreamKind, nodes: usize) -> Vec<String> {
    let mut h = match kind {
        StreamKind::Tracker => vec!["timestamp".to_string()],
        _ => wavelength_header(nodes),
    };
    if kind != StreamKind::Wavelength {
        h.extend(["x", "y", "z"].map(String::from));
    }
    h
}

/// Node count implied by a header, if it has the right shape for `kind`.
fn header_nodes(kind: StreamKind, header: &[String]) -> Option<usize> {
    let m = match kind {
        StreamKind::Wavelength => header.len().checked_sub(1)?,
        StreamKind::Tracker => 0,
        StreamKind::Aligned => header.len().checked_sub(4)?,
    };
    (header == expected_header(kind, m).as_slice()).then_some(m)
}

/// Parse a stream CSV. `nodes`, when given, is the wavelength count the
/// geometry expects.
pub fn parse_stream(path: &Path, text: &str, kind: StreamKind, nodes: Option<usize>) -> Result<Stream> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let m = header_nodes(kind, &header).ok_or_else(|| {
        parse_err(
            1,
            format!("unexpected header '{}' for a {kind:?} stream", header.join(",")),
        )
    })?;
    if let Some(n) = nodes {
        if kind != StreamKind::Tracker && m != n {
            return Err(parse_err(1, format!("{m} wavelength columns, geometry has {n} nodes")));
        }
    }

    let width = header.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} columns, found {}", record.len()),
            ));
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(
                    line,
                    format!("column {} ('{}'): invalid number '{field}'", c + 1, header[c]),
                )),
            })
            .collect::<Result<Vec<f64>>>()?;
        if values[0] <= prev {
            return Err(parse_err(
                line,
                format!("timestamp {} is not after the previous row ({prev})", values[0]),
            ));
        }
        prev = values[0];
        rows.push(values);
    }

    let tip = |r: &[f64]| Vector3::new(r[width - 3], r[width - 2], r[width - 1]);
    Ok(match kind {
        StreamKind::Wavelength => Stream::Wavelength(
            rows.into_iter()
                .map(|r| WavelengthFrame::new(r[0], r[1..].to_vec()))
                .collect(),
        ),
        StreamKind::Tracker => Stream::Tracker(
            rows.iter()
                .map(|r| TrackedPoint {
                    timestamp: r[0],
                    position: tip(r),
                })
                .collect(),
        ),
        StreamKind::Aligned => Stream::Aligned(
            rows.iter()
                .map(|r| AlignedPair {
                    timestamp: r[0],
                    wavelengths: r[1..=m].to_vec(),
                    tip: tip(r),
                })
                .collect(),
        ),
    })
}

pub fn read_stream(path: &Path, kind: StreamKind, nodes: Option<usize>) -> Result<Stream> {
    parse_stream(path, &read_text(path)?, kind, nodes)
}

pub fn read_wavelengths(path: &Path, nodes: Option<usize>) -> Result<Vec<WavelengthFrame>> {
    match read_stream(path, StreamKind::Wavelength, nodes)? {
        Stream::Wavelength(v) => Ok(v),
        _ => unreachable!("parse_stream returns the requested kind"),
    }
}

pub fn read_tracker(path: &Path) -> Result<Vec<TrackedPoint>> {
    match read_stream(path, StreamKind::Tracker, None)? {
        Stream::Tracker(v) => Ok(v),
        _ => unreachable!("parse_stream returns the requested kind"),
    }
}

/// Tip files share the tracker layout; positions are in the base frame.
pub fn read_tips(path: &Path) -> Result<Vec<TipSample>> {
    Ok(read_tracker(path)?
        .into_iter()
        .map(|p| TipSample {
            timestamp: p.timestamp,
            position: p.position,
        })
        .collect())
}

pub fn read_aligned(path: &Path, nodes: Option<usize>) -> Result<Vec<AlignedPair>> {
    match read_stream(path, StreamKind::Aligned, nodes)? {
        Stream::Aligned(v) => Ok(v),
        _ => unreachable!("parse_stream returns the requested kind"),
    }
}

fn push_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn wavelengths_to_csv(frames: &[WavelengthFrame]) -> String {
    let m = frames.first().map_or(0, |f| f.wavelengths.len());
    let mut out = wavelength_header(m).join(",");
    out.push('\n');
    for f in frames {
        push_row(
            &mut out,
            std::iter::once(f.timestamp).chain(f.wavelengths.iter().copied()),
        );
    }
    out
}

pub fn points_to_csv(points: impl IntoIterator<Item = (f64, Vector3<f64>)>) -> String {
    let mut out = String::from("timestamp,x,y,z\n");
    for (t, p) in points {
        push_row(&mut out, [t, p.x, p.y, p.z]);
    }
    out
}

pub fn tracker_to_csv(points: &[TrackedPoint]) -> String {
    points_to_csv(points.iter().map(|p| (p.timestamp, p.position)))
}

pub fn tips_to_csv(tips: &[TipSample]) -> String {
    points_to_csv(tips.iter().map(|p| (p.timestamp, p.position)))
}

pub fn aligned_to_csv(pairs: &[AlignedPair]) -> String {
    let m = pairs.first().map_or(0, |p| p.wavelengths.len());
    let mut out = expected_header(StreamKind::Aligned, m).join(",");
    out.push('\n');
    for p in pairs {
        push_row(
            &mut out,
            std::iter::once(p.timestamp)
                .chain(p.wavelengths.iter().copied())
                .chain([p.tip.x, p.tip.y, p.tip.z]),
        );
    }
    out
}

/// `frame_index,point_index,x,y,z` for a batch of polylines.
pub fn polylines_to_csv<'a>(shapes: impl IntoIterator<Item = &'a [Vector3<f64>]>) -> String {
    let mut out = String::from("frame_index,point_index,x,y,z\n");
    for (f, points) in shapes.into_iter().enumerate() {
        for (i, p) in points.iter().enumerate() {
            let _ = writeln!(out, "{f},{i},{},{},{}", p.x, p.y, p.z);
        }
    }
    out
}

// ---- manifests -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, recorded_as: impl Into<String>) -> Result<Self> {
        Ok(FileDigest {
            path: recorded_as.into(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    pub name: String,
    pub value: String,
}

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// Effective options, in a fixed order.
    pub arguments: Vec<Argument>,
    pub seeds: Vec<u64>,
    pub geometry_fingerprint: Option<String>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            arguments: Vec::new(),
            seeds: Vec::new(),
            geometry_fingerprint: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn arg(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.arguments.push(Argument {
            name: name.to_string(),
            value: value.to_string(),
        });
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(FileDigest::of(path, path.display().to_string())?);
        Ok(self)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Check every recorded output against the files under `dir`.
    pub fn verify_outputs(&self, dir: &Path) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for f in &self.outputs {
            if sha256_file(&dir.join(&f.path))? != f.sha256 {
                changed.push(f.path.clone());
            }
        }
        Ok(changed)
    }
}

/// Collects outputs for one run directory and writes them atomically.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    pub manifest: RunManifest,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl OutputDir {
    pub fn create(dir: &Path, manifest: RunManifest) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.path(name);
        write_atomic(&path, contents.as_bytes())?;
        self.manifest.outputs.push(FileDigest {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
        });
        Ok(path)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let path = self.path(MANIFEST_FILE);
        write_atomic(&path, self.manifest.to_json().as_bytes())?;
        Ok(path)
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}
