//! Wavelength-to-strain conversion and the per-cross-section curvature solve.
//!
//! Each fiber `f` sits at radial offset `r_f` and angular placement `Γ_f`
//! (cumulative gaps from fiber a). Under a bend of curvature `κ` in the plane
//! at angle `φ`, with common-mode strain `ε₀`, the node strain is
//!
//! ```text
//! ε_f = −κ r_f sin(φ + Γ_f) + ε₀
//! ```
//!
//! Compression is negative. Writing `u = κ sin φ` and `v = κ cos φ` makes the
//! system linear in `(ε₀, u, v)`, which is how it is solved here: in closed
//! form for the symmetric layout, by a 3×3 factorization otherwise.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::SensorGeometry;

/// One timestamped reading of every node wavelength, fiber-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct WavelengthFrame {
    /// Seconds on the stream clock.
    pub timestamp: f64,
    /// Nanometers.
    pub wavelengths: Vec<f64>,
}

impl WavelengthFrame {
    pub fn new(timestamp: f64, wavelengths: Vec<f64>) -> Self {
        WavelengthFrame { timestamp, wavelengths }
    }

    pub fn check(&self, geom: &SensorGeometry) -> Result<()> {
        if self.wavelengths.len() != geom.node_count() {
            return Err(Error::DimensionMismatch {
                what: "wavelength frame",
                expected: geom.node_count(),
                found: self.wavelengths.len(),
            });
        }
        check_positive("wavelength frame", &self.wavelengths)
    }
}

pub(crate) fn check_positive(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        Some(index) => Err(Error::InvalidValue { what, index }),
        None => Ok(()),
    }
}

/// Curvature state at one active cross section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossSectionState {
    /// 1/m, never negative.
    pub curvature: f64,
    /// Bend-plane angle in [0, 2π).
    pub bend_angle: f64,
    pub common_strain: f64,
    /// mm from the sensor base.
    pub arc_position: f64,
    /// Set when the curvature is zero and the bend plane carries no information.
    pub bend_plane_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Maximum accepted residual norm of the forward model, strain units.
    pub tolerance: f64,
    /// Largest condition number of the fiber-placement matrix accepted.
    pub max_condition: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-10,
            max_condition: 1e10,
        }
    }
}

/// Per-node strain from the Bragg shift, `Δλ / (λ_B (1 − p_e))`.
pub fn wavelength_to_strain(frame: &WavelengthFrame, geom: &SensorGeometry) -> Result<Vec<f64>> {
    frame.check(geom)?;
    let scale = 1.0 - geom.strain_optic_coefficient;
    Ok(frame
        .wavelengths
        .iter()
        .zip(&geom.base_wavelengths)
        .map(|(lambda, base)| (lambda - base) / (base * scale))
        .collect())
}

/// Inverse of [`wavelength_to_strain`].
pub fn strain_to_wavelength(strains: &[f64], geom: &SensorGeometry) -> Vec<f64> {
    let scale = 1.0 - geom.strain_optic_coefficient;
    strains
        .iter()
        .zip(&geom.base_wavelengths)
        .map(|(eps, base)| base * (1.0 + scale * eps))
        .collect()
}

/// Strain seen by `fiber` for a bend of `curvature` (1/m) at `bend_angle`.
pub fn fiber_strain(geom: &SensorGeometry, fiber: usize, curvature: f64, bend_angle: f64, common_strain: f64) -> f64 {
    let kappa_per_mm = curvature * 1e-3;
    -kappa_per_mm * geom.radial_offsets[fiber] * (bend_angle + geom.fiber_angle(fiber)).sin() + common_strain
}

/// Strains of every fiber at one cross section, fiber order.
pub fn section_strains(geom: &SensorGeometry, curvature: f64, bend_angle: f64, common_strain: f64) -> Vec<f64> {
    (0..geom.fiber_count)
        .map(|f| fiber_strain(geom, f, curvature, bend_angle, common_strain))
        .collect()
}

/// Strains of fiber a, b, c at `section`, pulled out of a fiber-major vector.
pub fn strains_at_section(strains: &[f64], geom: &SensorGeometry, section: usize) -> Vec<f64> {
    (0..geom.fiber_count)
        .map(|f| strains[geom.node_index(f, section)])
        .collect()
}

pub fn solve_cross_section(strains: &[f64], geom: &SensorGeometry, section_index: usize) -> Result<CrossSectionState> {
    solve_cross_section_with(strains, geom, section_index, &SolverOptions::default())
}

pub fn solve_cross_section_with(
    strains: &[f64],
    geom: &SensorGeometry,
    section_index: usize,
    opts: &SolverOptions,
) -> Result<CrossSectionState> {
    if geom.fiber_count < 3 {
        return Err(Error::InsufficientNodes {
            available: geom.fiber_count,
            required: 3,
        });
    }
    if geom.fiber_count != 3 || strains.len() != 3 {
        return Err(Error::DimensionMismatch {
            what: "cross-section strains",
            expected: 3,
            found: strains.len(),
        });
    }
    if section_index >= geom.nodes_per_fiber {
        return Err(Error::InvalidArgument(format!(
            "section index {section_index} out of range ({} sections)",
            geom.nodes_per_fiber
        )));
    }
    if let Some(i) = strains.iter().position(|e| !e.is_finite()) {
        return Err(Error::InvalidValue {
            what: "cross-section strains",
            index: i,
        });
    }
    let arc_position = geom.node_arc_positions[section_index];

    let spread = strains.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - strains.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 10.0 * opts.tolerance {
        let mean = strains.iter().sum::<f64>() / 3.0;
        return Ok(CrossSectionState {
            curvature: 0.0,
            bend_angle: 0.0,
            common_strain: mean,
            arc_position,
            bend_plane_undefined: true,
        });
    }

    let (eps0, u, v) = if geom.is_symmetric() {
        symmetric_closed_form(strains, geom.radial_offsets[0])
    } else {
        general_linear_solve(strains, geom, opts)?
    };

    // u, v are in 1/mm
    let curvature = 1e3 * u.hypot(v);
    let bend_angle = if curvature > 0.0 {
        u.atan2(v).rem_euclid(TAU)
    } else {
        0.0
    };
    let state = CrossSectionState {
        curvature,
        bend_angle: if bend_angle >= TAU { 0.0 } else { bend_angle },
        common_strain: eps0,
        arc_position,
        bend_plane_undefined: curvature == 0.0,
    };

    let residual = section_strains(geom, state.curvature, state.bend_angle, state.common_strain)
        .iter()
        .zip(strains)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if residual > opts.tolerance {
        return Err(Error::SolverResidual {
            residual,
            tolerance: opts.tolerance,
        });
    }
    Ok(state)
}

/// Equal offsets at 0°, 120°, 240°: the sines sum to zero, so the mean strain
/// is ε₀ and the first Fourier components give u and v.
fn symmetric_closed_form(strains: &[f64], radius: f64) -> (f64, f64, f64) {
    let eps0 = strains.iter().sum::<f64>() / 3.0;
    let mut c = 0.0;
    let mut s = 0.0;
    for (f, eps) in strains.iter().enumerate() {
        let gamma = f as f64 * TAU / 3.0;
        c += eps * gamma.cos();
        s += eps * gamma.sin();
    }
    let k = -2.0 / (3.0 * radius);
    (eps0, k * c, k * s)
}

fn general_linear_solve(strains: &[f64], geom: &SensorGeometry, opts: &SolverOptions) -> Result<(f64, f64, f64)> {
    let mut m = Matrix3::zeros();
    for f in 0..3 {
        let r = geom.radial_offsets[f];
        let gamma = geom.fiber_angle(f);
        m[(f, 0)] = 1.0;
        m[(f, 1)] = -r * gamma.cos();
        m[(f, 2)] = -r * gamma.sin();
    }
    let sv = m.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition.is_finite() && condition <= opts.max_condition) {
        return Err(Error::DegenerateGeometry { condition });
    }
    let rhs = Vector3::new(strains[0], strains[1], strains[2]);
    let x = m.lu().solve(&rhs).ok_or(Error::DegenerateGeometry { condition })?;
    Ok((x[0], x[1], x[2]))
}

/// Solve every cross section of a fiber-major strain vector.
pub fn solve_all_sections(strains: &[f64], geom: &SensorGeometry) -> Result<Vec<CrossSectionState>> {
    (0..geom.nodes_per_fiber)
        .map(|j| solve_cross_section(&strains_at_section(strains, geom, j), geom, j))
        .collect()
}
