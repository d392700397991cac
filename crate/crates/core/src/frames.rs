//! Rigid transforms, the optical-tracker ground-truth chain, and time
//! alignment of the FBG and tracker streams.
//!
//! Frame names follow the tracking setup: `o` is the optical tracker, `r` a
//! reference body fixed to the actuation unit, `s` a frame at the manipulator
//! tip established once in the straight pose, and `b` the manipulator base.
//! `T_ij` maps coordinates in frame `j` to frame `i`.
//!
//! A tracked marker `P_o` is brought to the base frame by
//!
//! ```text
//! T_sr⁰ = (T_os⁰)⁻¹ T_or⁰
//! P_b   = T_bs T_sr⁰ (T_or^c)⁻¹ P_o,      T_bs = [I | (0, 0, L_cdm)]
//! ```
//!
//! Because `T_or^c` is re-measured whenever the tracker moves, `P_b` does not
//! depend on where the tracker stands.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::geometry::SensorGeometry;
use crate::sensor::WavelengthFrame;

/// Orthonormality tolerance for transforms built in memory.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;
/// Drift above which a loaded rotation is re-orthonormalized.
pub const REORTHONORMALIZE_DRIFT: f64 = 1e-8;
/// Drift above which a loaded rotation is rejected outright.
pub const MAX_LOAD_DRIFT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    /// mm
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validated constructor; rejects rotations that are not proper and
    /// orthonormal to [`ORTHONORMAL_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        let drift = orthonormality_drift(&rotation);
        if !(drift <= ORTHONORMAL_TOLERANCE) {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (drift {drift:.3e})"
            )));
        }
        Ok(RigidTransform { rotation, translation })
    }

    /// Constructor for rotations read from files: small numerical drift is
    /// projected back onto SO(3), larger deviations are rejected.
    pub fn from_loaded(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let drift = orthonormality_drift(&rotation);
        if !(drift <= MAX_LOAD_DRIFT) {
            return Err(Error::InvalidTransform(format!(
                "rotation is not orthonormal (drift {drift:.3e})"
            )));
        }
        let rotation = if drift > REORTHONORMALIZE_DRIFT {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        RigidTransform::new(rotation, translation)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` about `axis` followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = if axis.norm() == 0.0 || angle == 0.0 {
            Matrix3::identity()
        } else {
            *Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle).matrix()
        };
        RigidTransform { rotation, translation }
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// Largest absolute entry difference, for tests and tolerance checks.
    pub fn max_difference(&self, other: &RigidTransform) -> f64 {
        let dr = (self.rotation - other.rotation).abs().max();
        let dt = (self.translation - other.translation).abs().max();
        dr.max(dt)
    }

    pub fn is_valid(&self) -> bool {
        orthonormality_drift(&self.rotation) <= ORTHONORMAL_TOLERANCE
    }
}

/// max(|RᵀR − I|, |det R − 1|), NaN-propagating.
fn orthonormality_drift(r: &Matrix3<f64>) -> f64 {
    if !r.iter().all(|x| x.is_finite()) {
        return f64::NAN;
    }
    let gram = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = (r.determinant() - 1.0).abs();
    gram.max(det)
}

fn nearest_rotation(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    u * fix * v_t
}

/// A marker position in the tracker frame `o`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    pub timestamp: f64,
    /// mm, frame `o`.
    pub position: Vector3<f64>,
}

/// A tip position in the manipulator base frame `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipSample {
    pub timestamp: f64,
    /// mm, frame `b`.
    pub position: Vector3<f64>,
}

/// Time-aligned regression observation.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub timestamp: f64,
    /// Interpolated node wavelengths, nm.
    pub wavelengths: Vec<f64>,
    /// Tip in frame `b`, mm.
    pub tip: Vector3<f64>,
}

/// `T_sr⁰ = (T_os⁰)⁻¹ T_or⁰`, from measurements taken at the same instant.
pub fn register_straight_pose(t_os0: &RigidTransform, t_or0: &RigidTransform) -> Result<RigidTransform> {
    for (name, t) in [("T_os0", t_os0), ("T_or0", t_or0)] {
        if !t.is_valid() {
            return Err(Error::InvalidTransform(format!("{name} is not a rigid transform")));
        }
    }
    Ok(t_os0.inverse().compose(t_or0))
}

/// `T_bs`: the straight-pose tip frame seen from the manipulator base.
pub fn base_from_straight_pose(geom: &SensorGeometry) -> RigidTransform {
    RigidTransform::from_translation(Vector3::new(0.0, 0.0, geom.cdm_length))
}

pub fn tracker_to_base(
    p_o: &TrackedPoint,
    t_or_current: &RigidTransform,
    t_sr0: &RigidTransform,
    geom: &SensorGeometry,
) -> Result<Vector3<f64>> {
    for (name, t) in [("T_or_current", t_or_current), ("T_sr0", t_sr0)] {
        if !t.is_valid() {
            return Err(Error::InvalidTransform(format!("{name} is not a rigid transform")));
        }
    }
    if !p_o.position.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidValue {
            what: "tracked point",
            index: 0,
        });
    }
    let chain = base_from_straight_pose(geom)
        .compose(t_sr0)
        .compose(&t_or_current.inverse());
    Ok(chain.apply(&p_o.position))
}

/// The three transforms measured for one recording session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    /// `T_os⁰`: straight-pose tip body seen by the tracker at registration.
    pub tracker_to_straight_pose: RigidTransform,
    /// `T_or⁰`: reference body seen by the tracker at registration.
    pub tracker_to_reference: RigidTransform,
    /// `T_or^c`: reference body seen by the tracker during recording.
    pub tracker_to_reference_current: RigidTransform,
}

impl Registration {
    pub fn straight_pose(&self) -> Result<RigidTransform> {
        register_straight_pose(&self.tracker_to_straight_pose, &self.tracker_to_reference)
    }

    /// Map a whole tracker stream into the base frame.
    pub fn to_base(&self, points: &[TrackedPoint], geom: &SensorGeometry) -> Result<Vec<TipSample>> {
        let t_sr0 = self.straight_pose()?;
        points
            .iter()
            .map(|p| {
                Ok(TipSample {
                    timestamp: p.timestamp,
                    position: tracker_to_base(p, &self.tracker_to_reference_current, &t_sr0, geom)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Interpolation {
    #[default]
    Linear,
    Nearest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub pairs: Vec<AlignedPair>,
    /// Index into the tip stream of each output pair.
    pub tip_indices: Vec<usize>,
    /// Tip samples outside the FBG stream's time span.
    pub dropped: usize,
}

pub fn align_streams(fbg: &[WavelengthFrame], tips: &[TipSample], mode: Interpolation) -> Result<Alignment> {
    check_increasing("fbg", fbg.iter().map(|f| f.timestamp))?;
    check_increasing("tracker", tips.iter().map(|t| t.timestamp))?;
    let (Some(first), Some(last)) = (fbg.first(), fbg.last()) else {
        return Err(Error::NoOverlap);
    };
    let width = first.wavelengths.len();
    if let Some(f) = fbg.iter().find(|f| f.wavelengths.len() != width) {
        return Err(Error::DimensionMismatch {
            what: "fbg stream frame",
            expected: width,
            found: f.wavelengths.len(),
        });
    }

    let mut pairs = Vec::new();
    let mut tip_indices = Vec::new();
    let mut dropped = 0;
    for (index, tip) in tips.iter().enumerate() {
        let t = tip.timestamp;
        if t < first.timestamp || t > last.timestamp {
            dropped += 1;
            continue;
        }
        // last frame with timestamp <= t
        let i = fbg.partition_point(|f| f.timestamp <= t) - 1;
        let lo = &fbg[i];
        let wavelengths = if lo.timestamp == t || i + 1 == fbg.len() {
            lo.wavelengths.clone()
        } else {
            let hi = &fbg[i + 1];
            let w = (t - lo.timestamp) / (hi.timestamp - lo.timestamp);
            match mode {
                Interpolation::Linear => lo
                    .wavelengths
                    .iter()
                    .zip(&hi.wavelengths)
                    .map(|(&a, &b)| (a + w * (b - a)).clamp(a.min(b), a.max(b)))
                    .collect(),
                Interpolation::Nearest if w <= 0.5 => lo.wavelengths.clone(),
                Interpolation::Nearest => hi.wavelengths.clone(),
            }
        };
        pairs.push(AlignedPair {
            timestamp: t,
            wavelengths,
            tip: tip.position,
        });
        tip_indices.push(index);
    }
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(Alignment {
        pairs,
        tip_indices,
        dropped,
    })
}

pub(crate) fn check_increasing(stream: &'static str, times: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (index, t) in times.enumerate() {
        if !(t.is_finite() && t > prev) {
            return Err(Error::Unsorted { stream, index });
        }
        prev = t;
    }
    Ok(())
}
