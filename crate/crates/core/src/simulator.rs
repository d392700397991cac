//! Synthetic bending experiments.
//!
//! A [`BendingScenario`] drives the manipulator through a time-varying
//! curvature profile
//!
//! ```text
//! κ(s, t) = κ_peak · [ a(t) q(s/L) + h(t) (s/L − ½) ]
//! h(t)    = hysteresis · sin(π a(t)) · direction(t)
//! φ(t)    = φ_mean + φ_amp · sin(2π t / T_φ)
//! ```
//!
//! where `a(t) ∈ [0, 1]` is the actuation level, `q` a shape polynomial
//! normalized to a peak of one, and `direction` is +1 while loading and −1
//! while unloading. Node strains follow the cross-section model with a
//! common-mode term per section, wavelengths follow from the Bragg relation,
//! and the ground-truth tip comes from exact arc integration of `κ` at high
//! resolution. Gaussian noise is added after the exact values are formed.
//!
//! Model mismatch only alters the geometry handed to estimators (and, with
//! `profile_order_mismatch`, keeps the quadratic term of `q` that a linear
//! estimator cannot represent); the truth always uses the true geometry.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{register_straight_pose, Registration, RigidTransform, TipSample, TrackedPoint};
use crate::geometry::SensorGeometry;
use crate::sensor::{fiber_strain, strain_to_wavelength, WavelengthFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BendingScenario {
    /// s
    pub duration: f64,
    /// Hz
    pub fbg_rate: f64,
    /// Hz
    pub tracker_rate: f64,
    /// Time of the first tracker sample, s.
    pub tracker_phase: f64,
    /// Added to every reported tracker timestamp, s.
    pub clock_offset: f64,
    pub seed: u64,
    /// 1/m
    pub curvature_bound: f64,
    /// Segments used for the ground-truth integration.
    pub truth_segments: usize,
    pub trajectory: Trajectory,
    pub common_strain: CommonStrain,
    pub noise: Noise,
    pub mismatch: Mismatch,
    pub scene: Scene,
}

impl Default for BendingScenario {
    fn default() -> Self {
        BendingScenario {
            duration: 60.0,
            fbg_rate: 100.0,
            tracker_rate: 20.0,
            tracker_phase: 0.013,
            clock_offset: 0.0,
            seed: 0,
            curvature_bound: 50.0,
            truth_segments: 10_000,
            trajectory: Trajectory::default(),
            common_strain: CommonStrain::default(),
            noise: Noise::default(),
            mismatch: Mismatch::default(),
            scene: Scene::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Trajectory {
    /// 1/m
    pub peak_curvature: f64,
    /// Coefficients of `q(x)`, ascending powers of `x = s / L`.
    pub profile_shape: [f64; 3],
    pub hysteresis: f64,
    pub actuation: Actuation,
    pub bend_plane: BendPlaneMotion,
}

impl Default for Trajectory {
    fn default() -> Self {
        Trajectory {
            peak_curvature: 50.0,
            profile_shape: [0.5, 2.0, -2.0],
            hysteresis: 0.1,
            actuation: Actuation::Triangle { cycles: 2.0 },
            bend_plane: BendPlaneMotion::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Actuation {
    /// Straight → peak → straight, `cycles` times over the duration.
    Triangle { cycles: f64 },
    /// Fixed level in [0, 1].
    Constant { level: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BendPlaneMotion {
    /// rad
    pub mean: f64,
    /// rad
    pub amplitude: f64,
    /// s
    pub period: f64,
}

impl Default for BendPlaneMotion {
    fn default() -> Self {
        BendPlaneMotion {
            mean: 0.9,
            amplitude: 0.8,
            period: 23.0,
        }
    }
}

/// `ε₀_j(t) = per_actuation · a(t) + drift_amplitude · sin(2π t / drift_period + j · drift_phase_step)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommonStrain {
    pub per_actuation: f64,
    pub drift_amplitude: f64,
    pub drift_period: f64,
    pub drift_phase_step: f64,
}

impl Default for CommonStrain {
    fn default() -> Self {
        CommonStrain {
            per_actuation: -2e-4,
            drift_amplitude: 5e-5,
            drift_period: 37.0,
            drift_phase_step: 2.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Noise {
    /// nm
    pub wavelength_std: f64,
    /// mm
    pub tracker_std: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Noise {
            wavelength_std: 0.02,
            tracker_std: 0.3,
        }
    }
}

impl Noise {
    pub fn none() -> Self {
        Noise {
            wavelength_std: 0.0,
            tracker_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Mismatch {
    /// Multiplies every radial offset of the estimator geometry.
    pub radial_offset_scale: f64,
    /// Added to every angular gap, rad.
    pub angular_error: f64,
    /// Added to every node arc position, mm.
    pub node_position_error: f64,
    /// Keep the quadratic term of the true profile shape.
    pub profile_order_mismatch: bool,
}

impl Default for Mismatch {
    fn default() -> Self {
        Mismatch {
            radial_offset_scale: 0.95,
            angular_error: 0.0,
            node_position_error: 0.0,
            profile_order_mismatch: true,
        }
    }
}

impl Mismatch {
    pub fn none() -> Self {
        Mismatch {
            radial_offset_scale: 1.0,
            angular_error: 0.0,
            node_position_error: 0.0,
            profile_order_mismatch: false,
        }
    }

    pub fn apply(&self, geom: &SensorGeometry) -> Result<SensorGeometry> {
        let mut g = geom.clone();
        g.radial_offsets.iter_mut().for_each(|r| *r *= self.radial_offset_scale);
        g.angular_gaps.iter_mut().for_each(|a| *a += self.angular_error);
        g.node_arc_positions
            .iter_mut()
            .for_each(|s| *s += self.node_position_error);
        g.validate()?;
        Ok(g)
    }
}

/// Axis-angle pose, translation in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub axis: [f64; 3],
    pub angle: f64,
    pub translation: [f64; 3],
}

impl Pose {
    pub fn transform(&self) -> RigidTransform {
        RigidTransform::from_axis_angle(Vector3::from(self.axis), self.angle, Vector3::from(self.translation))
    }
}

/// Placement of the tracker relative to the bench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scene {
    /// `T_or⁰`: reference body in the tracker frame at registration.
    pub reference: Pose,
    /// Straight-pose tip frame in the reference body frame.
    pub straight_pose: Pose,
    /// `T_or^c` during recording; defaults to `reference`.
    pub reference_current: Option<Pose>,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            reference: Pose {
                axis: [1.0, 2.0, 3.0],
                angle: 0.7,
                translation: [120.0, -40.0, 300.0],
            },
            straight_pose: Pose {
                axis: [0.0, 1.0, 0.2],
                angle: 0.3,
                translation: [10.0, 5.0, -20.0],
            },
            reference_current: None,
        }
    }
}

impl BendingScenario {
    /// Constant, uniform curvature with no noise or mismatch.
    pub fn constant_curvature(curvature: f64, bend_angle: f64) -> Self {
        BendingScenario {
            duration: 1.0,
            trajectory: Trajectory {
                peak_curvature: curvature,
                profile_shape: [1.0, 0.0, 0.0],
                hysteresis: 0.0,
                actuation: Actuation::Constant { level: 1.0 },
                bend_plane: BendPlaneMotion {
                    mean: bend_angle,
                    amplitude: 0.0,
                    period: 1.0,
                },
            },
            common_strain: CommonStrain {
                per_actuation: 0.0,
                drift_amplitude: 0.0,
                drift_period: 1.0,
                drift_phase_step: 0.0,
            },
            noise: Noise::none(),
            mismatch: Mismatch::none(),
            ..BendingScenario::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        positive("duration", self.duration)?;
        positive("fbg_rate", self.fbg_rate)?;
        positive("tracker_rate", self.tracker_rate)?;
        positive("curvature_bound", self.curvature_bound)?;
        positive("mismatch.radial_offset_scale", self.mismatch.radial_offset_scale)?;
        for (name, v) in [
            ("noise.wavelength_std", self.noise.wavelength_std),
            ("noise.tracker_std", self.noise.tracker_std),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.truth_segments == 0 {
            return Err(Error::InvalidArgument("truth_segments must be at least 1".into()));
        }
        match self.trajectory.actuation {
            Actuation::Triangle { cycles } => positive("actuation.cycles", cycles)?,
            Actuation::Constant { level } if !level.is_finite() => {
                return Err(Error::InvalidArgument("actuation.level must be finite".into()))
            }
            Actuation::Constant { .. } => {}
        }
        let periodic = [
            ("bend_plane.period", self.trajectory.bend_plane.period),
            ("common_strain.drift_period", self.common_strain.drift_period),
        ];
        for (name, v) in periodic {
            positive(name, v)?;
        }
        if !self.tracker_phase.is_finite() || !self.clock_offset.is_finite() {
            return Err(Error::InvalidArgument(
                "tracker_phase and clock_offset must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Evaluates the scenario's ground-truth functions of time.
struct Model<'a> {
    scenario: &'a BendingScenario,
    length: f64,
    /// Normalized shape polynomial in `x = s / L`.
    shape: [f64; 3],
}

impl<'a> Model<'a> {
    fn new(scenario: &'a BendingScenario, geom: &SensorGeometry) -> Result<Self> {
        let mut c = scenario.trajectory.profile_shape;
        if !scenario.mismatch.profile_order_mismatch {
            c[2] = 0.0;
        }
        let q = |x: f64| c[0] + c[1] * x + c[2] * x * x;
        let mut peak = q(0.0).max(q(1.0));
        if c[2] != 0.0 {
            let vertex = -c[1] / (2.0 * c[2]);
            if (0.0..=1.0).contains(&vertex) {
                peak = peak.max(q(vertex));
            }
        }
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::InvalidArgument(
                "profile_shape must be positive somewhere on [0, 1]".into(),
            ));
        }
        Ok(Model {
            scenario,
            length: geom.cdm_length,
            shape: [c[0] / peak, c[1] / peak, c[2] / peak],
        })
    }

    /// Actuation level and loading direction.
    fn actuation(&self, t: f64) -> (f64, f64) {
        match self.scenario.trajectory.actuation {
            Actuation::Constant { level } => (level, 0.0),
            Actuation::Triangle { cycles } => {
                let period = self.scenario.duration / cycles;
                let c = (t / period).rem_euclid(1.0);
                if c < 0.5 {
                    (2.0 * c, 1.0)
                } else {
                    (2.0 - 2.0 * c, -1.0)
                }
            }
        }
    }

    fn bend_angle(&self, t: f64) -> f64 {
        let b = &self.scenario.trajectory.bend_plane;
        b.mean + b.amplitude * (TAU * t / b.period).sin()
    }

    /// Curvature polynomial in `s` (mm), 1/m, ascending powers.
    fn curvature_coeffs(&self, t: f64) -> [f64; 3] {
        let tr = &self.scenario.trajectory;
        let (a, dir) = self.actuation(t);
        let h = tr.hysteresis * (PI * a).sin() * dir;
        let l = self.length;
        let [q0, q1, q2] = self.shape;
        [
            tr.peak_curvature * (a * q0 - 0.5 * h),
            tr.peak_curvature * (a * q1 + h) / l,
            tr.peak_curvature * a * q2 / (l * l),
        ]
    }

    fn common_strain(&self, t: f64, section: usize) -> f64 {
        let c = &self.scenario.common_strain;
        let (a, _) = self.actuation(t);
        c.per_actuation * a + c.drift_amplitude * (TAU * t / c.drift_period + c.drift_phase_step * section as f64).sin()
    }

    fn max_curvature(&self, t: f64) -> f64 {
        let k = self.curvature_coeffs(t);
        (0..=100)
            .map(|i| {
                let s = self.length * i as f64 / 100.0;
                (k[0] + s * (k[1] + s * k[2])).abs()
            })
            .fold(0.0, f64::max)
    }
}

fn eval_quadratic(c: &[f64; 3], s: f64) -> f64 {
    c[0] + s * (c[1] + s * c[2])
}

/// `sin(x) / x` with its removable singularity filled.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Exact tip of the manipulator center-line for a planar bend with curvature
/// polynomial `coeffs` (1/m, in s mm) in the plane at `bend_angle`. Each of the
/// `segments` pieces is a circular arc with midpoint curvature.
pub fn planar_tip(coeffs: &[f64; 3], bend_angle: f64, geom: &SensorGeometry, segments: usize) -> Vector3<f64> {
    let ds = geom.cdm_length / segments as f64;
    // tangent angle θ measured from +z toward the bend direction
    let (mut lateral, mut axial, mut theta) = (0.0, 0.0, 0.0);
    for i in 0..segments {
        let k = eval_quadratic(coeffs, (i as f64 + 0.5) * ds) * 1e-3;
        let dtheta = k * ds;
        let mid = theta + 0.5 * dtheta;
        let chord = ds * sinc(0.5 * dtheta);
        lateral += chord * mid.sin();
        axial += chord * mid.cos();
        theta += dtheta;
    }
    let (sp, cp) = bend_angle.sin_cos();
    let (st, ct) = theta.sin_cos();
    let rz = Matrix3::new(cp, -sp, 0.0, sp, cp, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct);
    let rotation = rz * ry * rz.transpose();
    let sensor_tip = Vector3::new(cp * lateral, sp * lateral, axial);
    let psi = geom.center_offset_angle;
    let v = geom.center_offset * Vector3::new(psi.cos(), psi.sin(), 0.0);
    sensor_tip + rotation * v - v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// FBG interrogator stream, true clock.
    pub fbg: Vec<WavelengthFrame>,
    /// Noisy marker positions in the tracker frame.
    pub tracker: Vec<TrackedPoint>,
    /// Exact tip in the base frame at each tracker sample.
    pub truth: Vec<TipSample>,
    pub true_geometry: SensorGeometry,
    /// Geometry handed to estimators, after mismatch.
    pub estimator_geometry: SensorGeometry,
    pub registration: Registration,
}

impl Simulation {
    /// Curvature at the arc position (mm) of a node, at time `t`; exposed for tests.
    pub fn truth_curvature(scenario: &BendingScenario, geom: &SensorGeometry, s: f64, t: f64) -> Result<f64> {
        let model = Model::new(scenario, geom)?;
        Ok(eval_quadratic(&model.curvature_coeffs(t), s))
    }
}

pub fn simulate(scenario: &BendingScenario, true_geom: &SensorGeometry) -> Result<Simulation> {
    scenario.validate()?;
    true_geom.validate()?;
    let estimator_geometry = scenario.mismatch.apply(true_geom)?;
    let model = Model::new(scenario, true_geom)?;

    let fbg_times = sample_times(0.0, scenario.fbg_rate, scenario.duration);
    let tracker_times = sample_times(scenario.tracker_phase, scenario.tracker_rate, scenario.duration);
    if tracker_times.is_empty() {
        return Err(Error::InvalidArgument("tracker_phase leaves no tracker samples".into()));
    }
    let worst = fbg_times
        .iter()
        .chain(&tracker_times)
        .map(|&t| model.max_curvature(t))
        .fold(0.0, f64::max);
    if worst > scenario.curvature_bound * (1.0 + 1e-12) {
        return Err(Error::CurvatureBound {
            max: worst,
            bound: scenario.curvature_bound,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let wl_noise = Normal::new(0.0, scenario.noise.wavelength_std).expect("validated std");
    let tr_noise = Normal::new(0.0, scenario.noise.tracker_std).expect("validated std");

    let mut fbg = Vec::with_capacity(fbg_times.len());
    let mut strains = vec![0.0; true_geom.node_count()];
    for &t in &fbg_times {
        let coeffs = model.curvature_coeffs(t);
        let phi = model.bend_angle(t);
        for (j, &s) in true_geom.node_arc_positions.iter().enumerate() {
            let kappa = eval_quadratic(&coeffs, s);
            let eps0 = model.common_strain(t, j);
            for f in 0..true_geom.fiber_count {
                strains[true_geom.node_index(f, j)] = fiber_strain(true_geom, f, kappa, phi, eps0);
            }
        }
        let mut wavelengths = strain_to_wavelength(&strains, true_geom);
        for w in &mut wavelengths {
            *w += wl_noise.sample(&mut rng);
        }
        fbg.push(WavelengthFrame::new(t, wavelengths));
    }

    let t_or0 = scenario.scene.reference.transform();
    let t_rs = scenario.scene.straight_pose.transform();
    let t_or_current = scenario.scene.reference_current.map_or(t_or0, |p| p.transform());
    let t_os0 = t_or0.compose(&t_rs);
    // tracker frame ← base frame at the current reference placement
    let o_from_b = t_or_current
        .compose(&t_rs)
        .compose(&RigidTransform::from_translation(Vector3::new(
            0.0,
            0.0,
            -true_geom.cdm_length,
        )));

    let mut tracker = Vec::with_capacity(tracker_times.len());
    let mut truth = Vec::with_capacity(tracker_times.len());
    for &t in &tracker_times {
        let tip = planar_tip(
            &model.curvature_coeffs(t),
            model.bend_angle(t),
            true_geom,
            scenario.truth_segments,
        );
        let noise = Vector3::new(
            tr_noise.sample(&mut rng),
            tr_noise.sample(&mut rng),
            tr_noise.sample(&mut rng),
        );
        let stamp = t + scenario.clock_offset;
        tracker.push(TrackedPoint {
            timestamp: stamp,
            position: o_from_b.apply(&tip) + noise,
        });
        truth.push(TipSample {
            timestamp: stamp,
            position: tip,
        });
    }

    let registration = Registration {
        tracker_to_straight_pose: t_os0,
        tracker_to_reference: t_or0,
        tracker_to_reference_current: t_or_current,
    };
    register_straight_pose(&t_os0, &t_or0)?;
    Ok(Simulation {
        fbg,
        tracker,
        truth,
        true_geometry: true_geom.clone(),
        estimator_geometry,
        registration,
    })
}

/// `start + k / rate` for every k with the time inside `[0, duration]`.
fn sample_times(start: f64, rate: f64, duration: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut k = 0u64;
    loop {
        let t = start + k as f64 / rate;
        if t > duration + 1e-9 {
            break;
        }
        times.push(t);
        k += 1;
    }
    times
}
