//! Evaluation protocol: random train/test splits, repeated trials, fiber
//! ablations and side-by-side comparison of tip estimators.
//!
//! Errors are Euclidean distances between estimated and reference tips.
//! Samples are stratified by tip deflection, the lateral distance of the
//! reference tip from the manipulator axis, at [`DEFLECTION_THRESHOLD`].

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::{align_streams, AlignedPair, Interpolation};
use crate::geometry::{FiberSet, SensorGeometry};
use crate::regression::{assemble, train, NodeSelection, Preprocessing};
use crate::sensor::WavelengthFrame;
use crate::shape::{reconstruct, ConventionalOptions};
use crate::simulator::Simulation;

/// mm
pub const DEFLECTION_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
}

impl ErrorStats {
    /// `None` for an empty sample.
    pub fn from_errors(errors: &[f64]) -> Option<ErrorStats> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        let max = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(ErrorStats {
            count: errors.len(),
            mean,
            std: var.sqrt(),
            max,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub label: String,
    /// Dataset index of each evaluated sample.
    pub samples: Vec<usize>,
    /// mm
    pub errors: Vec<f64>,
    /// mm
    pub deflections: Vec<f64>,
    pub stats: ErrorStats,
    pub small_deflection: Option<ErrorStats>,
    pub large_deflection: Option<ErrorStats>,
}

impl ErrorReport {
    pub fn new(label: impl Into<String>, samples: Vec<usize>, errors: Vec<f64>, deflections: Vec<f64>) -> Result<Self> {
        if errors.len() != deflections.len() || errors.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                what: "error report",
                expected: errors.len(),
                found: deflections.len().min(samples.len()),
            });
        }
        let stats =
            ErrorStats::from_errors(&errors).ok_or_else(|| Error::InvalidArgument("no samples to evaluate".into()))?;
        let (small, large): (Vec<(f64, f64)>, Vec<(f64, f64)>) = errors
            .iter()
            .zip(&deflections)
            .map(|(&e, &d)| (e, d))
            .partition(|&(_, d)| d <= DEFLECTION_THRESHOLD);
        let errs = |v: &[(f64, f64)]| v.iter().map(|p| p.0).collect::<Vec<_>>();
        Ok(ErrorReport {
            label: label.into(),
            samples,
            stats,
            small_deflection: ErrorStats::from_errors(&errs(&small)),
            large_deflection: ErrorStats::from_errors(&errs(&large)),
            errors,
            deflections,
        })
    }

    /// Large-deflection mean over small-deflection mean, when both strata exist.
    pub fn deflection_ratio(&self) -> Option<f64> {
        Some(self.large_deflection?.mean / self.small_deflection?.mean)
    }
}

/// Indices of a uniform random split without replacement. The training share
/// is `round(fraction · n)`, clamped so both parts are non-empty. Both index
/// lists are returned in ascending order.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("cannot split {n} samples")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (train, test) = split_indices(items.len(), train_fraction, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&train), pick(&test)))
}

/// Which tips errors are measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    /// Exact simulator tips when available.
    #[default]
    Exact,
    /// The tracker-derived tips stored in the pairs.
    Tracker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Aligned observations; tips come from the tracker chain.
    pub pairs: Vec<AlignedPair>,
    /// Exact tip for each pair, if known.
    pub truth: Option<Vec<Vector3<f64>>>,
    /// Geometry available to estimators.
    pub geometry: SensorGeometry,
}

impl Dataset {
    pub fn new(pairs: Vec<AlignedPair>, truth: Option<Vec<Vector3<f64>>>, geometry: SensorGeometry) -> Result<Self> {
        if let Some(t) = &truth {
            if t.len() != pairs.len() {
                return Err(Error::DimensionMismatch {
                    what: "ground truth",
                    expected: pairs.len(),
                    found: t.len(),
                });
            }
        }
        Ok(Dataset { pairs, truth, geometry })
    }

    /// Map the tracker stream through the registration chain, align it with
    /// the FBG stream, and attach the exact tips.
    pub fn from_simulation(sim: &Simulation, mode: Interpolation) -> Result<Self> {
        let tips = sim.registration.to_base(&sim.tracker, &sim.estimator_geometry)?;
        let alignment = align_streams(&sim.fbg, &tips, mode)?;
        let truth = alignment.tip_indices.iter().map(|&i| sim.truth[i].position).collect();
        Dataset::new(alignment.pairs, Some(truth), sim.estimator_geometry.clone())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn reference(&self, index: usize, against: GroundTruth) -> Vector3<f64> {
        match (&self.truth, against) {
            (Some(truth), GroundTruth::Exact) => truth[index],
            _ => self.pairs[index].tip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Conventional,
    Regression(FiberSet),
}

impl Method {
    pub fn regression(fibers: usize) -> Method {
        Method::Regression(FiberSet::first(fibers))
    }

    pub fn label(&self) -> String {
        match self {
            Method::Conventional => "conventional".into(),
            Method::Regression(set) if *set == FiberSet::first(set.len()) => format!("regression-{}f", set.len()),
            Method::Regression(set) => format!("regression-{set}"),
        }
    }

    /// Accepts `conventional`, `regression-Nf`, or `regression-<fiber letters>`.
    pub fn parse(text: &str) -> Result<Method> {
        let text = text.trim();
        if text == "conventional" {
            return Ok(Method::Conventional);
        }
        let rest = text
            .strip_prefix("regression-")
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{text}'")))?;
        if let Some(n) = rest.strip_suffix('f').and_then(|n| n.parse::<usize>().ok()) {
            if n == 0 {
                return Err(Error::InvalidArgument("regression needs at least one fiber".into()));
            }
            return Ok(Method::regression(n));
        }
        Ok(Method::Regression(FiberSet::parse(rest)?))
    }

    /// The four methods of the standard comparison.
    pub fn standard() -> Vec<Method> {
        vec![
            Method::Conventional,
            Method::regression(1),
            Method::regression(2),
            Method::regression(3),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub train_fraction: f64,
    pub repeats: usize,
    /// Repeat `i` splits with seed `base_seed + i`.
    pub base_seed: u64,
    pub bias: bool,
    pub preprocessing: Preprocessing,
    pub conventional: ConventionalOptions,
    pub ground_truth: GroundTruth,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            train_fraction: 0.7,
            repeats: 10,
            base_seed: 0,
            bias: true,
            preprocessing: Preprocessing::Raw,
            conventional: ConventionalOptions::default(),
            ground_truth: GroundTruth::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedEval {
    pub label: String,
    /// One report per repeat, in repeat order.
    pub reports: Vec<ErrorReport>,
    pub mean_of_means: f64,
    /// Population std of the per-repeat means.
    pub std_of_means: f64,
    /// All test samples of all repeats together.
    pub pooled: ErrorReport,
}

impl RepeatedEval {
    fn from_reports(label: String, reports: Vec<ErrorReport>) -> Result<Self> {
        let means: Vec<f64> = reports.iter().map(|r| r.stats.mean).collect();
        let summary = ErrorStats::from_errors(&means).ok_or_else(|| Error::InvalidArgument("no repeats".into()))?;
        let mut samples = Vec::new();
        let mut errors = Vec::new();
        let mut deflections = Vec::new();
        for r in &reports {
            samples.extend_from_slice(&r.samples);
            errors.extend_from_slice(&r.errors);
            deflections.extend_from_slice(&r.deflections);
        }
        let pooled = ErrorReport::new(label.clone(), samples, errors, deflections)?;
        Ok(RepeatedEval {
            label,
            reports,
            mean_of_means: summary.mean,
            std_of_means: summary.std,
            pooled,
        })
    }
}

/// Conventional estimates for every pair of the dataset.
pub fn conventional_estimates(dataset: &Dataset, opts: &ConventionalOptions) -> Result<Vec<Vector3<f64>>> {
    dataset
        .pairs
        .iter()
        .map(|p| {
            let frame = WavelengthFrame::new(p.timestamp, p.wavelengths.clone());
            Ok(reconstruct(&frame, &dataset.geometry, opts)?.tip())
        })
        .collect()
}

fn report_for(
    label: &str,
    dataset: &Dataset,
    against: GroundTruth,
    test: &[usize],
    estimate: impl Fn(usize) -> Result<Vector3<f64>>,
) -> Result<ErrorReport> {
    let mut errors = Vec::with_capacity(test.len());
    let mut deflections = Vec::with_capacity(test.len());
    for &i in test {
        let reference = dataset.reference(i, against);
        errors.push((estimate(i)? - reference).norm());
        deflections.push(reference.x.hypot(reference.y));
    }
    ErrorReport::new(label, test.to_vec(), errors, deflections)
}

/// Train-and-test cycles for one method, one per repeat.
pub fn repeated_eval(dataset: &Dataset, method: &Method, protocol: &Protocol) -> Result<RepeatedEval> {
    if protocol.repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let label = method.label();
    let conventional = match method {
        Method::Conventional => Some(conventional_estimates(dataset, &protocol.conventional)?),
        Method::Regression(_) => None,
    };
    let mut reports = Vec::with_capacity(protocol.repeats);
    for repeat in 0..protocol.repeats {
        let seed = protocol.base_seed.wrapping_add(repeat as u64);
        let (train_idx, test_idx) = split_indices(dataset.len(), protocol.train_fraction, seed)?;
        let report = match (method, &conventional) {
            (Method::Conventional, Some(est)) => {
                report_for(&label, dataset, protocol.ground_truth, &test_idx, |i| Ok(est[i]))?
            }
            (Method::Regression(fibers), _) => {
                let selection = NodeSelection::from_fibers(&dataset.geometry, fibers)?;
                let train_pairs: Vec<AlignedPair> = train_idx.iter().map(|&i| dataset.pairs[i].clone()).collect();
                let ts = assemble(&train_pairs, &selection, protocol.bias, &protocol.preprocessing)?;
                let model = train(&ts)?;
                report_for(&label, dataset, protocol.ground_truth, &test_idx, |i| {
                    model.predict_wavelengths(&dataset.pairs[i].wavelengths)
                })?
            }
            (Method::Conventional, None) => unreachable!("conventional estimates computed above"),
        };
        reports.push(report);
    }
    RepeatedEval::from_reports(label, reports)
}

#[derive(Debug)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: Result<RepeatedEval>,
}

#[derive(Debug)]
pub struct ComparisonTable {
    pub protocol: Protocol,
    pub outcomes: Vec<MethodOutcome>,
}

/// Evaluate every method on identical splits. A failing method is recorded
/// and does not stop the others.
pub fn compare(dataset: &Dataset, methods: &[Method], protocol: &Protocol) -> ComparisonTable {
    let outcomes = methods
        .iter()
        .map(|m| MethodOutcome {
            method: m.clone(),
            result: repeated_eval(dataset, m, protocol),
        })
        .collect();
    ComparisonTable {
        protocol: protocol.clone(),
        outcomes,
    }
}

#[derive(Serialize)]
struct JsonTable<'a> {
    train_fraction: f64,
    repeats: usize,
    base_seed: u64,
    bias: bool,
    ground_truth: GroundTruth,
    deflection_threshold_mm: f64,
    methods: Vec<JsonMethod<'a>>,
}

#[derive(Serialize)]
struct JsonMethod<'a> {
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    summary: Option<JsonSummary<'a>>,
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    mean_of_means: f64,
    std_of_means: f64,
    pooled: &'a ErrorStats,
    small_deflection: &'a Option<ErrorStats>,
    large_deflection: &'a Option<ErrorStats>,
    repeats: Vec<JsonRepeat<'a>>,
}

#[derive(Serialize)]
struct JsonRepeat<'a> {
    repeat: usize,
    seed: u64,
    stats: &'a ErrorStats,
    small_deflection: &'a Option<ErrorStats>,
    large_deflection: &'a Option<ErrorStats>,
}

fn fmt_opt(s: &Option<ErrorStats>) -> String {
    s.map_or_else(|| "-".into(), |s| format!("{:.4}", s.mean))
}

impl ComparisonTable {
    pub fn get(&self, label: &str) -> Option<&RepeatedEval> {
        self.outcomes
            .iter()
            .find(|o| o.method.label() == label)
            .and_then(|o| o.result.as_ref().ok())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>9} {:>9} {:>7} {:>9} {:>9} {:>9}",
            "method", "mean", "std", "max", "n", "<=10mm", ">10mm", "rep.std"
        );
        for o in &self.outcomes {
            let label = o.method.label();
            match &o.result {
                Ok(r) => {
                    let s = &r.pooled.stats;
                    let _ = writeln!(
                        out,
                        "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>7} {:>9} {:>9} {:>9.4}",
                        label,
                        r.mean_of_means,
                        s.std,
                        s.max,
                        s.count,
                        fmt_opt(&r.pooled.small_deflection),
                        fmt_opt(&r.pooled.large_deflection),
                        r.std_of_means
                    );
                }
                Err(e) => {
                    let _ = writeln!(out, "{label:<16} failed: {e}");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let p = &self.protocol;
        let methods = self
            .outcomes
            .iter()
            .map(|o| match &o.result {
                Ok(r) => JsonMethod {
                    label: o.method.label(),
                    error: None,
                    summary: Some(JsonSummary {
                        mean_of_means: r.mean_of_means,
                        std_of_means: r.std_of_means,
                        pooled: &r.pooled.stats,
                        small_deflection: &r.pooled.small_deflection,
                        large_deflection: &r.pooled.large_deflection,
                        repeats: r
                            .reports
                            .iter()
                            .enumerate()
                            .map(|(i, rep)| JsonRepeat {
                                repeat: i,
                                seed: p.base_seed.wrapping_add(i as u64),
                                stats: &rep.stats,
                                small_deflection: &rep.small_deflection,
                                large_deflection: &rep.large_deflection,
                            })
                            .collect(),
                    }),
                },
                Err(e) => JsonMethod {
                    label: o.method.label(),
                    error: Some(e.to_string()),
                    summary: None,
                },
            })
            .collect();
        let table = JsonTable {
            train_fraction: p.train_fraction,
            repeats: p.repeats,
            base_seed: p.base_seed,
            bias: p.bias,
            ground_truth: p.ground_truth,
            deflection_threshold_mm: DEFLECTION_THRESHOLD,
            methods,
        };
        let mut text = serde_json::to_string_pretty(&table).expect("report serializes");
        text.push('\n');
        text
    }

    /// `method,repeat,sample,timestamp,deflection,error`, one row per test sample.
    pub fn samples_csv(&self, dataset: &Dataset) -> String {
        let mut out = String::from("method,repeat,sample,timestamp,deflection,error\n");
        for o in &self.outcomes {
            let Ok(r) = &o.result else { continue };
            for (repeat, rep) in r.reports.iter().enumerate() {
                for ((&i, &d), &e) in rep.samples.iter().zip(&rep.deflections).zip(&rep.errors) {
                    let _ = writeln!(out, "{},{repeat},{i},{},{d},{e}", r.label, dataset.pairs[i].timestamp);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_by_hand() {
        let s = ErrorStats::from_errors(&[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(s.count, 4);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.max, 6.0);
        assert!((s.std - 3.5f64.sqrt()).abs() < 1e-15);
        assert!(ErrorStats::from_errors(&[]).is_none());
    }

    #[test]
    fn strata_partition_samples() {
        let r = ErrorReport::new("x", vec![0, 1, 2], vec![1.0, 2.0, 4.0], vec![5.0, 10.0, 12.0]).unwrap();
        assert_eq!(r.small_deflection.unwrap().count, 2);
        assert_eq!(r.large_deflection.unwrap().count, 1);
        assert_eq!(r.deflection_ratio(), Some(4.0 / 1.5));
    }

    #[test]
    fn split_counts_and_determinism() {
        let (tr, te) = split_indices(10, 0.7, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        assert_eq!(split_indices(10, 0.7, 3).unwrap(), (tr.clone(), te.clone()));
        let mut all: Vec<_> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_ne!(split_indices(10, 0.7, 4).unwrap().0, tr);
        assert!(split_indices(1, 0.5, 0).is_err());
        assert!(split_indices(10, 1.0, 0).is_err());
        assert!(split_indices(10, 0.0, 0).is_err());
        assert_eq!(split_indices(2, 0.99, 0).unwrap().0.len(), 1);
    }

    #[test]
    fn method_labels_round_trip() {
        for m in Method::standard() {
            assert_eq!(Method::parse(&m.label()).unwrap(), m);
        }
        assert_eq!(Method::regression(3).label(), "regression-3f");
        let bc = Method::parse("regression-bc").unwrap();
        assert_eq!(bc.label(), "regression-bc");
        assert!(Method::parse("ridge").is_err());
        assert!(Method::parse("regression-0f").is_err());
    }
}
