//! Sensor and manipulator geometry.
//!
//! A [`SensorGeometry`] describes a multi-fiber FBG shape sensor: how many
//! fibers run along the substrate, where they sit in the cross section, the
//! arc positions of the active areas (nodes), and the zero-strain Bragg
//! wavelength of every node. It also carries the two manipulator lengths the
//! pipelines need: the distance between the sensor and manipulator
//! center-lines and the manipulator length.
//!
//! Lengths are millimeters, angles radians, wavelengths nanometers.
//!
//! Node ordering everywhere in the crate is fiber-major: node `k` belongs to
//! fiber `k / nodes_per_fiber` and sits at cross section `k % nodes_per_fiber`
//! (counted from the base).
//!
//! # Config file
//!
//! Geometry is stored as TOML with two sections:
//!
//! ```toml
//! [sensor]
//! fiber_count = 3
//! nodes_per_fiber = 3
//! radial_offsets = [0.2, 0.2, 0.2]          # mm, one per fiber
//! angular_gaps = [2.0943951023931953, 2.0943951023931953]  # rad, fiber_count - 1
//! node_arc_positions = [10.0, 20.0, 30.0]   # mm from sensor base
//! base_wavelengths = [1530.0, 1540.0, 1550.0, 1532.0, 1542.0, 1552.0, 1534.0, 1544.0, 1554.0]  # nm
//! strain_optic_coefficient = 0.22           # optional, default 0.22
//! sensor_length = 35.5                      # mm
//!
//! [cdm]
//! length = 35.5                             # mm
//! center_offset = 2.5                       # mm, sensor to manipulator center-line
//! center_offset_angle = 0.0                 # rad, optional, direction in the cross section
//! ```

use std::f64::consts::TAU;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Default strain-optic coefficient of silica fiber.
pub const DEFAULT_STRAIN_OPTIC_COEFFICIENT: f64 = 0.22;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorGeometry {
    pub fiber_count: usize,
    pub nodes_per_fiber: usize,
    /// Radial distance of each fiber from the sensor center, mm.
    pub radial_offsets: Vec<f64>,
    /// Angle from fiber `f` to fiber `f + 1`, rad.
    pub angular_gaps: Vec<f64>,
    /// Arc position of each cross section from the sensor base, mm.
    pub node_arc_positions: Vec<f64>,
    /// Zero-strain Bragg wavelength per node (fiber-major), nm.
    pub base_wavelengths: Vec<f64>,
    pub strain_optic_coefficient: f64,
    pub sensor_length: f64,
    /// Distance between sensor and manipulator center-lines, mm.
    pub center_offset: f64,
    /// Direction of the sensor-to-center offset in the sensor's local
    /// cross-section frame, rad from local +x.
    pub center_offset_angle: f64,
    pub cdm_length: f64,
}

impl SensorGeometry {
    /// Three fibers at 120°, three nodes each, on a 35.5 mm manipulator.
    pub fn nominal() -> Self {
        let gap = TAU / 3.0;
        SensorGeometry {
            fiber_count: 3,
            nodes_per_fiber: 3,
            radial_offsets: vec![0.2; 3],
            angular_gaps: vec![gap, gap],
            node_arc_positions: vec![10.0, 20.0, 30.0],
            base_wavelengths: vec![1530.0, 1540.0, 1550.0, 1532.0, 1542.0, 1552.0, 1534.0, 1544.0, 1554.0],
            strain_optic_coefficient: DEFAULT_STRAIN_OPTIC_COEFFICIENT,
            sensor_length: 35.5,
            center_offset: 2.5,
            center_offset_angle: 0.0,
            cdm_length: 35.5,
        }
    }

    pub fn node_count(&self) -> usize {
        self.fiber_count * self.nodes_per_fiber
    }

    pub fn node_index(&self, fiber: usize, section: usize) -> usize {
        fiber * self.nodes_per_fiber + section
    }

    /// Cumulative angular placement of `fiber` relative to fiber a.
    pub fn fiber_angle(&self, fiber: usize) -> f64 {
        self.angular_gaps[..fiber].iter().sum()
    }

    /// Equal radial offsets and equal gaps of 2π/fiber_count.
    pub fn is_symmetric(&self) -> bool {
        let r0 = self.radial_offsets[0];
        let gap = TAU / self.fiber_count as f64;
        self.radial_offsets.iter().all(|r| (r - r0).abs() <= 1e-12 * r0)
            && self.angular_gaps.iter().all(|g| (g - gap).abs() <= 1e-12)
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::InvalidGeometry {
                field,
                reason: reason.into(),
            })
        }
        if self.fiber_count < 1 {
            return bad("fiber_count", "must be at least 1");
        }
        if self.nodes_per_fiber < 1 {
            return bad("nodes_per_fiber", "must be at least 1");
        }
        if self.radial_offsets.len() != self.fiber_count {
            return bad(
                "radial_offsets",
                format!(
                    "expected {} values, found {}",
                    self.fiber_count,
                    self.radial_offsets.len()
                ),
            );
        }
        if !self.radial_offsets.iter().all(|r| r.is_finite() && *r > 0.0) {
            return bad("radial_offsets", "all values must be finite and > 0");
        }
        if self.angular_gaps.len() != self.fiber_count - 1 {
            return bad(
                "angular_gaps",
                format!(
                    "expected {} values, found {}",
                    self.fiber_count - 1,
                    self.angular_gaps.len()
                ),
            );
        }
        if !self.angular_gaps.iter().all(|g| g.is_finite() && *g > 0.0 && *g < TAU) {
            return bad("angular_gaps", "each gap must lie in (0, 2π)");
        }
        let p_e = self.strain_optic_coefficient;
        if !(p_e > 0.0 && p_e < 1.0) {
            return bad("strain_optic_coefficient", format!("out of range (0, 1): {p_e}"));
        }
        if !(self.sensor_length.is_finite() && self.sensor_length > 0.0) {
            return bad("sensor_length", "must be finite and > 0");
        }
        if self.node_arc_positions.len() != self.nodes_per_fiber {
            return bad(
                "node_arc_positions",
                format!(
                    "expected {} values, found {}",
                    self.nodes_per_fiber,
                    self.node_arc_positions.len()
                ),
            );
        }
        if !self
            .node_arc_positions
            .iter()
            .all(|s| s.is_finite() && *s > 0.0 && *s <= self.sensor_length)
        {
            return bad("node_arc_positions", "all positions must lie in (0, sensor_length]");
        }
        if self.node_arc_positions.windows(2).any(|w| w[1] <= w[0]) {
            return bad("node_arc_positions", "positions must be strictly increasing");
        }
        if self.base_wavelengths.len() != self.node_count() {
            return bad(
                "base_wavelengths",
                format!(
                    "expected {} values, found {}",
                    self.node_count(),
                    self.base_wavelengths.len()
                ),
            );
        }
        if !self.base_wavelengths.iter().all(|w| w.is_finite() && *w > 0.0) {
            return bad("base_wavelengths", "all values must be finite and > 0");
        }
        if !(self.center_offset.is_finite() && self.center_offset >= 0.0) {
            return bad("center_offset", "must be finite and >= 0");
        }
        if !self.center_offset_angle.is_finite() {
            return bad("center_offset_angle", "must be finite");
        }
        if !(self.cdm_length.is_finite() && self.cdm_length > 0.0) {
            return bad("cdm_length", "must be finite and > 0");
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: GeometryFile = toml::from_str(text).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let geom = SensorGeometry::from(file);
        geom.validate()?;
        Ok(geom)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&GeometryFile::from(self)).expect("geometry serializes to TOML")
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(digest)
    }
}

/// On-disk layout of a geometry config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub sensor: SensorSection,
    pub cdm: CdmSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    pub fiber_count: usize,
    pub nodes_per_fiber: usize,
    pub radial_offsets: Vec<f64>,
    pub angular_gaps: Vec<f64>,
    pub node_arc_positions: Vec<f64>,
    pub base_wavelengths: Vec<f64>,
    #[serde(default = "default_p_e")]
    pub strain_optic_coefficient: f64,
    pub sensor_length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdmSection {
    pub length: f64,
    pub center_offset: f64,
    #[serde(default)]
    pub center_offset_angle: f64,
}

fn default_p_e() -> f64 {
    DEFAULT_STRAIN_OPTIC_COEFFICIENT
}

impl From<GeometryFile> for SensorGeometry {
    fn from(f: GeometryFile) -> Self {
        SensorGeometry {
            fiber_count: f.sensor.fiber_count,
            nodes_per_fiber: f.sensor.nodes_per_fiber,
            radial_offsets: f.sensor.radial_offsets,
            angular_gaps: f.sensor.angular_gaps,
            node_arc_positions: f.sensor.node_arc_positions,
            base_wavelengths: f.sensor.base_wavelengths,
            strain_optic_coefficient: f.sensor.strain_optic_coefficient,
            sensor_length: f.sensor.sensor_length,
            center_offset: f.cdm.center_offset,
            center_offset_angle: f.cdm.center_offset_angle,
            cdm_length: f.cdm.length,
        }
    }
}

impl From<&SensorGeometry> for GeometryFile {
    fn from(g: &SensorGeometry) -> Self {
        GeometryFile {
            sensor: SensorSection {
                fiber_count: g.fiber_count,
                nodes_per_fiber: g.nodes_per_fiber,
                radial_offsets: g.radial_offsets.clone(),
                angular_gaps: g.angular_gaps.clone(),
                node_arc_positions: g.node_arc_positions.clone(),
                base_wavelengths: g.base_wavelengths.clone(),
                strain_optic_coefficient: g.strain_optic_coefficient,
                sensor_length: g.sensor_length,
            },
            cdm: CdmSection {
                length: g.cdm_length,
                center_offset: g.center_offset,
                center_offset_angle: g.center_offset_angle,
            },
        }
    }
}

/// A subset of fibers, identified by letter (`a` is fiber 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiberSet(Vec<usize>);

impl FiberSet {
    pub fn new(mut fibers: Vec<usize>) -> Result<Self> {
        fibers.sort_unstable();
        fibers.dedup();
        if fibers.is_empty() {
            return Err(Error::Selection("fiber set is empty".into()));
        }
        Ok(FiberSet(fibers))
    }

    /// The first `n` fibers: `a`, `ab`, `abc`, ...
    pub fn first(n: usize) -> Self {
        FiberSet((0..n.max(1)).collect())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let fibers = text
            .trim()
            .chars()
            .map(|c| match c.to_ascii_lowercase() {
                c @ 'a'..='z' => Ok(c as usize - 'a' as usize),
                other => Err(Error::Selection(format!("invalid fiber letter '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        FiberSet::new(fibers)
    }

    pub fn fibers(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for FiberSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &i in &self.0 {
            write!(f, "{}", (b'a' + i as u8) as char)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_is_valid_and_symmetric() {
        let g = SensorGeometry::nominal();
        g.validate().unwrap();
        assert!(g.is_symmetric());
        assert_eq!(g.node_count(), 9);
        assert_eq!(g.node_index(2, 1), 7);
        assert!((g.fiber_angle(2) - 2.0 * TAU / 3.0).abs() < 1e-15);
    }

    #[test]
    fn toml_round_trip_and_fingerprint() {
        let g = SensorGeometry::nominal();
        let text = g.to_toml_string();
        let back = SensorGeometry::from_toml_str(&text).unwrap();
        assert_eq!(g, back);
        assert_eq!(g.fingerprint(), back.fingerprint());
        let mut other = g.clone();
        other.radial_offsets[1] = 0.21;
        assert_ne!(g.fingerprint(), other.fingerprint());
    }

    #[test]
    fn p_e_out_of_range_is_rejected() {
        let mut g = SensorGeometry::nominal();
        g.strain_optic_coefficient = 1.3;
        let err = g.validate().unwrap_err().to_string();
        assert!(err.contains("strain_optic_coefficient out of range"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let text = SensorGeometry::nominal().to_toml_string();
        let stripped: String = text
            .lines()
            .filter(|l| !l.starts_with("base_wavelengths"))
            .map(|l| format!("{l}\n"))
            .collect();
        let err = SensorGeometry::from_toml_str(&stripped).unwrap_err().to_string();
        assert!(err.contains("base_wavelengths"), "{err}");
    }

    #[test]
    fn p_e_defaults_when_omitted() {
        let text = SensorGeometry::nominal().to_toml_string();
        let stripped: String = text
            .lines()
            .filter(|l| !l.starts_with("strain_optic_coefficient"))
            .map(|l| format!("{l}\n"))
            .collect();
        let g = SensorGeometry::from_toml_str(&stripped).unwrap();
        assert_eq!(g.strain_optic_coefficient, DEFAULT_STRAIN_OPTIC_COEFFICIENT);
    }

    #[test]
    fn arc_positions_must_increase() {
        let mut g = SensorGeometry::nominal();
        g.node_arc_positions = vec![10.0, 10.0, 30.0];
        assert!(g.validate().is_err());
        g.node_arc_positions = vec![10.0, 20.0, 40.0];
        assert!(g.validate().is_err());
    }

    #[test]
    fn fiber_set_parsing() {
        assert_eq!(FiberSet::parse("abc").unwrap().fibers(), &[0, 1, 2]);
        assert_eq!(FiberSet::parse("ba").unwrap().to_string(), "ab");
        assert!(FiberSet::parse("").is_err());
        assert!(FiberSet::parse("a1").is_err());
        assert_eq!(FiberSet::first(2).to_string(), "ab");
    }
}
