//! Conventional, model-dependent shape reconstruction.
//!
//! Curvature and bend-plane angle are solved at each active cross section,
//! extrapolated along the sensor with low-order polynomials `κ = f(s)`,
//! `φ = g(s)`, and integrated segment by segment from base to tip.
//!
//! Frame convention: `z` runs along the straight manipulator, a bend with
//! `φ = 0` curves toward `+x`, and `φ` rotates the bend plane about the local
//! tangent. Each segment is an exact circular arc of length `Δs` and
//! curvature `κ(s_mid)`, expressed as a rigid transform and composed onto the
//! running frame.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::frames::RigidTransform;
use crate::geometry::SensorGeometry;
use crate::sensor::{self, CrossSectionState, WavelengthFrame};

/// Below this curvature (1/mm) the arc is replaced by its second-order series.
pub const SMALL_CURVATURE: f64 = 1e-9;

/// Polynomial in arc length (mm), coefficients in ascending powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Polynomial { coeffs: vec![c] }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Least-squares fit of the given order.
    pub fn fit(xs: &[f64], ys: &[f64], order: usize) -> Result<Polynomial> {
        let cols = order + 1;
        if xs.len() < cols {
            return Err(Error::ProfileFit(format!(
                "{} sections cannot determine {cols} coefficients",
                xs.len()
            )));
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::ProfileFit("duplicate arc positions".into()));
        }
        let a = DMatrix::from_fn(xs.len(), cols, |i, j| xs[i].powi(j as i32));
        let b = DVector::from_column_slice(ys);
        let svd = a.svd(true, true);
        let tol = svd.singular_values.max() * xs.len().max(cols) as f64 * f64::EPSILON;
        let x = svd.solve(&b, tol).map_err(|e| Error::ProfileFit(e.to_string()))?;
        Ok(Polynomial::new(x.iter().copied().collect()))
    }
}

/// κ = f(s) in 1/m and φ = g(s) in rad over the sensor arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    pub kappa: Polynomial,
    pub phi: Polynomial,
    /// mm
    pub domain: (f64, f64),
    pub source_sections: Vec<CrossSectionState>,
}

impl CurvatureProfile {
    pub fn new(kappa: Polynomial, phi: Polynomial, domain_end: f64) -> Self {
        CurvatureProfile {
            kappa,
            phi,
            domain: (0.0, domain_end),
            source_sections: Vec::new(),
        }
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        self.kappa.eval(s)
    }

    pub fn bend_angle_at(&self, s: f64) -> f64 {
        self.phi.eval(s)
    }
}

/// Fit curvature and bend-angle polynomials of `model_order` to the solved
/// cross sections. Bend angles are unwrapped along the sensor before fitting;
/// sections with an undefined bend plane do not contribute to `g`, whose
/// order drops when too few defined sections remain.
pub fn fit_profiles(
    sections: &[CrossSectionState],
    model_order: usize,
    sensor_length: f64,
) -> Result<CurvatureProfile> {
    let mut sorted = sections.to_vec();
    sorted.sort_by(|a, b| a.arc_position.total_cmp(&b.arc_position));
    let s: Vec<f64> = sorted.iter().map(|c| c.arc_position).collect();
    let k: Vec<f64> = sorted.iter().map(|c| c.curvature).collect();
    let kappa = Polynomial::fit(&s, &k, model_order)?;

    let defined: Vec<&CrossSectionState> = sorted.iter().filter(|c| !c.bend_plane_undefined).collect();
    let phi = if defined.is_empty() {
        Polynomial::constant(0.0)
    } else {
        let ds: Vec<f64> = defined.iter().map(|c| c.arc_position).collect();
        let raw: Vec<f64> = defined.iter().map(|c| c.bend_angle).collect();
        let order = model_order.min(defined.len() - 1);
        Polynomial::fit(&ds, &unwrap_angles(&raw), order)?
    };

    if !(sensor_length.is_finite() && sensor_length > 0.0) {
        return Err(Error::ProfileFit("sensor length must be positive".into()));
    }
    Ok(CurvatureProfile {
        kappa,
        phi,
        domain: (0.0, sensor_length),
        source_sections: sorted,
    })
}

/// Remove 2π jumps so consecutive angles differ by at most π.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    for &a in angles {
        match out.last() {
            None => out.push(a),
            Some(&prev) => {
                let turns = ((prev - a) / TAU).round();
                out.push(a + turns * TAU);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedShape {
    /// n + 1 sensor points in the base frame, mm; `points[0]` is the origin.
    pub points: Vec<Vector3<f64>>,
    /// Frame orientation at each point.
    pub rotations: Vec<Matrix3<f64>>,
    /// Δs, mm.
    pub segment_length: f64,
}

impl ReconstructedShape {
    pub fn tip(&self) -> Vector3<f64> {
        *self.points.last().expect("shape has at least two points")
    }

    pub fn arc_position(&self, index: usize) -> f64 {
        index as f64 * self.segment_length
    }
}

/// Circular arc of curvature `kappa` (1/mm) and length `ds` in the x-z plane,
/// rotated about z by `phi`.
pub fn segment_transform(kappa: f64, phi: f64, ds: f64) -> RigidTransform {
    let theta = kappa * ds;
    let (lateral, axial) = if kappa.abs() < SMALL_CURVATURE {
        (0.5 * kappa * ds * ds, ds)
    } else {
        (2.0 * (0.5 * theta).sin().powi(2) / kappa, theta.sin() / kappa)
    };
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    // Rz(φ) Ry(θ) Rz(−φ)
    let rz = Matrix3::new(cp, -sp, 0.0, sp, cp, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct);
    let rotation = rz * ry * rz.transpose();
    let translation = Vector3::new(cp * lateral, sp * lateral, axial);
    RigidTransform::from_parts_unchecked(rotation, translation)
}

/// Integrate the profile over `[0, cdm_length]` in `n_segments` arcs, each
/// evaluated at its midpoint.
pub fn integrate_shape(
    profile: &CurvatureProfile,
    geom: &SensorGeometry,
    n_segments: usize,
) -> Result<ReconstructedShape> {
    if n_segments == 0 {
        return Err(Error::Integration("n_segments must be at least 1".into()));
    }
    let length = geom.cdm_length;
    if profile.domain.0 > 0.0 || profile.domain.1 < length {
        return Err(Error::Integration(format!(
            "profile domain [{}, {}] does not cover [0, {length}]",
            profile.domain.0, profile.domain.1
        )));
    }
    let ds = length / n_segments as f64;
    let mut frame = RigidTransform::identity();
    let mut points = Vec::with_capacity(n_segments + 1);
    let mut rotations = Vec::with_capacity(n_segments + 1);
    points.push(Vector3::zeros());
    rotations.push(Matrix3::identity());
    for i in 0..n_segments {
        let s_mid = (i as f64 + 0.5) * ds;
        let kappa = profile.curvature_at(s_mid) * 1e-3;
        let phi = profile.bend_angle_at(s_mid);
        if !(kappa.is_finite() && phi.is_finite()) {
            return Err(Error::Integration(format!("non-finite profile at s = {s_mid} mm")));
        }
        frame = frame.compose(&segment_transform(kappa, phi, ds));
        points.push(*frame.translation());
        rotations.push(*frame.rotation());
    }
    Ok(ReconstructedShape {
        points,
        rotations,
        segment_length: ds,
    })
}

/// How the sensor curve is moved onto the manipulator center-line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CenterlineShift {
    /// Offset fixed in the cross section at `center_offset_angle`.
    #[default]
    SensorChannel,
    /// Offset along the local bend direction `φ(s)`.
    BendPlane,
}

/// Center-line points: `p_i + (R_i − I) v_i`, where `v_i` is the
/// sensor-to-center offset in the local frame. The straight pose is left
/// unchanged, so the base frame sits on the manipulator axis.
pub fn centerline(
    shape: &ReconstructedShape,
    profile: &CurvatureProfile,
    geom: &SensorGeometry,
    mode: CenterlineShift,
) -> Vec<Vector3<f64>> {
    let offset = |i: usize| {
        let angle = match mode {
            CenterlineShift::SensorChannel => geom.center_offset_angle,
            CenterlineShift::BendPlane => profile.bend_angle_at(shape.arc_position(i)),
        };
        geom.center_offset * Vector3::new(angle.cos(), angle.sin(), 0.0)
    };
    shape
        .points
        .iter()
        .zip(&shape.rotations)
        .enumerate()
        .map(|(i, (p, r))| {
            let v = offset(i);
            p + r * v - v
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConventionalOptions {
    pub n_segments: usize,
    pub model_order: usize,
    pub shift: CenterlineShift,
}

impl Default for ConventionalOptions {
    fn default() -> Self {
        ConventionalOptions {
            n_segments: 1000,
            model_order: 1,
            shift: CenterlineShift::SensorChannel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub sections: Vec<CrossSectionState>,
    pub profile: CurvatureProfile,
    pub shape: ReconstructedShape,
    /// Manipulator center-line, base frame, mm.
    pub centerline: Vec<Vector3<f64>>,
}

impl Reconstruction {
    pub fn tip(&self) -> Vector3<f64> {
        *self.centerline.last().expect("non-empty center-line")
    }
}

/// Full conventional pipeline for one frame.
pub fn reconstruct(
    frame: &WavelengthFrame,
    geom: &SensorGeometry,
    opts: &ConventionalOptions,
) -> Result<Reconstruction> {
    let m = frame.wavelengths.len();
    if m < geom.node_count() && m % geom.nodes_per_fiber == 0 {
        return Err(Error::InsufficientNodes {
            available: m / geom.nodes_per_fiber,
            required: 3,
        }
        .in_stage("strain conversion"));
    }
    if geom.fiber_count < 3 {
        return Err(Error::InsufficientNodes {
            available: geom.fiber_count,
            required: 3,
        }
        .in_stage("cross-section solve"));
    }
    let strains = sensor::wavelength_to_strain(frame, geom).map_err(|e| e.in_stage("strain conversion"))?;
    let sections = sensor::solve_all_sections(&strains, geom).map_err(|e| e.in_stage("cross-section solve"))?;
    let profile =
        fit_profiles(&sections, opts.model_order, geom.sensor_length).map_err(|e| e.in_stage("profile fit"))?;
    let shape = integrate_shape(&profile, geom, opts.n_segments).map_err(|e| e.in_stage("shape integration"))?;
    let centerline = centerline(&shape, &profile, geom, opts.shift);
    Ok(Reconstruction {
        sections,
        profile,
        shape,
        centerline,
    })
}

pub fn tip_estimate(frame: &WavelengthFrame, geom: &SensorGeometry, n_segments: usize) -> Result<Vector3<f64>> {
    let opts = ConventionalOptions {
        n_segments,
        ..ConventionalOptions::default()
    };
    Ok(reconstruct(frame, geom, &opts)?.tip())
}
