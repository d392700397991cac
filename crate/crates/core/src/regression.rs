//! Data-driven tip estimation: a linear map from node wavelengths to the tip.
//!
//! Training stacks `N` aligned observations into a design matrix `Λ` (one row
//! per pair, optionally augmented with a trailing column of ones) and solves
//! `min ‖Λ B − P‖` for the coefficient matrix `B`. The solve is a thin QR of
//! `Λ` followed by an SVD of the small triangular factor, which yields the
//! minimum-norm least-squares solution without forming `ΛᵀΛ`.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::frames::AlignedPair;
use crate::geometry::{FiberSet, SensorGeometry};
use crate::sensor::WavelengthFrame;

/// Condition estimates above this are recorded as a model warning. Raw
/// wavelengths near 1550 nm with a bias column typically sit around 1e8–1e9.
pub const CONDITION_WARNING: f64 = 1e10;

/// Ordered subset of sensor nodes used as regression inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSelection {
    /// Width of the full wavelength frame.
    pub total_nodes: usize,
    /// Column order of the design matrix.
    pub indices: Vec<usize>,
    pub label: String,
}

impl NodeSelection {
    pub fn new(total_nodes: usize, indices: Vec<usize>, label: impl Into<String>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Selection("empty node selection".into()));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= total_nodes) {
            return Err(Error::Selection(format!(
                "node {i} is absent from a {total_nodes}-node frame"
            )));
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Selection("node selected twice".into()));
        }
        Ok(NodeSelection {
            total_nodes,
            indices,
            label: label.into(),
        })
    }

    pub fn all(geom: &SensorGeometry) -> Self {
        Self::from_fibers(geom, &FiberSet::first(geom.fiber_count)).expect("every fiber exists")
    }

    /// All nodes of the given fibers, fiber-major.
    pub fn from_fibers(geom: &SensorGeometry, fibers: &FiberSet) -> Result<Self> {
        if let Some(&f) = fibers.fibers().iter().find(|&&f| f >= geom.fiber_count) {
            return Err(Error::Selection(format!(
                "fiber {f} is absent from a {}-fiber sensor",
                geom.fiber_count
            )));
        }
        let indices = fibers
            .fibers()
            .iter()
            .flat_map(|&f| (0..geom.nodes_per_fiber).map(move |j| geom.node_index(f, j)))
            .collect();
        Self::new(geom.node_count(), indices, fibers.to_string())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Input transformation applied before the design matrix is formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Preprocessing {
    /// Raw wavelengths in nm.
    #[default]
    Raw,
    /// Wavelength minus a per-node reference (usually the straight-pose
    /// reading), indexed over the full frame.
    DeltaFromBase(Vec<f64>),
}

impl Preprocessing {
    pub fn delta_from_geometry(geom: &SensorGeometry) -> Self {
        Preprocessing::DeltaFromBase(geom.base_wavelengths.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    /// N × (selected nodes [+ 1]).
    pub design: DMatrix<f64>,
    /// N × 3, mm.
    pub targets: DMatrix<f64>,
    pub selection: NodeSelection,
    pub bias: bool,
    pub preprocessing: Preprocessing,
}

impl TrainingSet {
    pub fn rows(&self) -> usize {
        self.design.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    /// Columns × 3 coefficients; the bias row, if any, is last.
    pub parameters: DMatrix<f64>,
    pub selection: NodeSelection,
    pub bias: bool,
    pub preprocessing: Preprocessing,
    /// RMS over training samples of the Euclidean tip error, mm.
    pub training_residual: f64,
    /// σ_max / σ_min of the design matrix.
    pub condition_estimate: f64,
    pub rank: usize,
    pub samples: usize,
    pub warnings: Vec<String>,
    /// Fingerprint of the geometry the training data came from, if known.
    pub geometry_fingerprint: Option<String>,
}

fn input_row(
    wavelengths: &[f64],
    selection: &NodeSelection,
    bias: bool,
    preprocessing: &Preprocessing,
) -> Result<Vec<f64>> {
    if wavelengths.len() != selection.total_nodes {
        return Err(Error::DimensionMismatch {
            what: "wavelength frame",
            expected: selection.total_nodes,
            found: wavelengths.len(),
        });
    }
    let mut row = Vec::with_capacity(selection.len() + bias as usize);
    for &i in &selection.indices {
        let w = wavelengths[i];
        if !w.is_finite() {
            return Err(Error::InvalidValue {
                what: "wavelength frame",
                index: i,
            });
        }
        row.push(match preprocessing {
            Preprocessing::Raw => w,
            Preprocessing::DeltaFromBase(base) => w - base[i],
        });
    }
    if bias {
        row.push(1.0);
    }
    Ok(row)
}

/// Stack aligned pairs into a design matrix and target matrix.
pub fn assemble(
    pairs: &[AlignedPair],
    selection: &NodeSelection,
    bias: bool,
    preprocessing: &Preprocessing,
) -> Result<TrainingSet> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    if let Preprocessing::DeltaFromBase(base) = preprocessing {
        if base.len() != selection.total_nodes {
            return Err(Error::DimensionMismatch {
                what: "preprocessing reference",
                expected: selection.total_nodes,
                found: base.len(),
            });
        }
    }
    let cols = selection.len() + bias as usize;
    let mut design = DMatrix::zeros(pairs.len(), cols);
    let mut targets = DMatrix::zeros(pairs.len(), 3);
    for (r, pair) in pairs.iter().enumerate() {
        let row = input_row(&pair.wavelengths, selection, bias, preprocessing)?;
        for (c, v) in row.into_iter().enumerate() {
            design[(r, c)] = v;
        }
        if !pair.tip.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidValue {
                what: "training tip",
                index: r,
            });
        }
        for k in 0..3 {
            targets[(r, k)] = pair.tip[k];
        }
    }
    Ok(TrainingSet {
        design,
        targets,
        selection: selection.clone(),
        bias,
        preprocessing: preprocessing.clone(),
    })
}

/// Minimum-norm least-squares solution of `A X = B` with its rank and
/// condition estimate. Requires `A` to have at least as many rows as columns.
pub fn min_norm_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, usize, f64) {
    let (rows, cols) = a.shape();
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let qtb = q.transpose() * b;
    let svd = r.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let s_max = sigma.max();
    let tol = rows.max(cols) as f64 * f64::EPSILON * s_max;
    let mut rank = 0;
    let mut inv = DVector::zeros(sigma.len());
    for (i, &s) in sigma.iter().enumerate() {
        if s > tol {
            inv[i] = 1.0 / s;
            rank += 1;
        }
    }
    let x = v_t.transpose() * DMatrix::from_diagonal(&inv) * (u.transpose() * qtb);
    let smallest = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smallest > 0.0 {
        s_max / smallest
    } else {
        f64::INFINITY
    };
    (x, rank, condition)
}

pub fn train(ts: &TrainingSet) -> Result<RegressionModel> {
    let (rows, cols) = ts.design.shape();
    if rows < cols {
        return Err(Error::Underdetermined { rows, cols });
    }
    let (parameters, rank, condition) = min_norm_solve(&ts.design, &ts.targets);
    let mut warnings = Vec::new();
    if rank < cols {
        warnings.push(format!("design matrix is rank deficient ({rank} of {cols} columns)"));
    }
    if condition > CONDITION_WARNING {
        warnings.push(format!("design matrix is ill-conditioned (condition {condition:.3e})"));
    }
    let residual = rms_error(&(&ts.design * &parameters - &ts.targets));
    Ok(RegressionModel {
        parameters,
        selection: ts.selection.clone(),
        bias: ts.bias,
        preprocessing: ts.preprocessing.clone(),
        training_residual: residual,
        condition_estimate: condition,
        rank,
        samples: rows,
        warnings,
        geometry_fingerprint: None,
    })
}

/// Root mean square of the row norms.
fn rms_error(residuals: &DMatrix<f64>) -> f64 {
    if residuals.nrows() == 0 {
        return 0.0;
    }
    (residuals.norm_squared() / residuals.nrows() as f64).sqrt()
}

impl RegressionModel {
    pub fn columns(&self) -> usize {
        self.parameters.nrows()
    }

    pub fn predict_wavelengths(&self, wavelengths: &[f64]) -> Result<Vector3<f64>> {
        let row = input_row(wavelengths, &self.selection, self.bias, &self.preprocessing)?;
        let x = DVector::from_vec(row);
        let p = self.parameters.tr_mul(&x);
        Ok(Vector3::new(p[0], p[1], p[2]))
    }
}

/// `p̂ = Bᵀ λ'`.
pub fn predict(model: &RegressionModel, frame: &WavelengthFrame) -> Result<Vector3<f64>> {
    model.predict_wavelengths(&frame.wavelengths)
}

/// Assemble and train on a fiber subset with raw wavelengths.
pub fn ablate(pairs: &[AlignedPair], geom: &SensorGeometry, fibers: &FiberSet, bias: bool) -> Result<RegressionModel> {
    let selection = NodeSelection::from_fibers(geom, fibers)?;
    let ts = assemble(pairs, &selection, bias, &Preprocessing::Raw)?;
    let mut model = train(&ts)?;
    model.geometry_fingerprint = Some(geom.fingerprint());
    Ok(model)
}
