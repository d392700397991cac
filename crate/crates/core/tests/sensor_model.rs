use std::f64::consts::{PI, TAU};

use fbg_tpe::sensor::{
    section_strains, solve_cross_section, strain_to_wavelength, wavelength_to_strain, WavelengthFrame,
};
use fbg_tpe::{Error, SensorGeometry};
use proptest::prelude::*;

/// Strains of the three fibers written out from the bending model, κ in 1/m.
fn oracle_strains(r: [f64; 3], placement: [f64; 3], kappa: f64, phi: f64, eps0: f64) -> Vec<f64> {
    (0..3)
        .map(|f| -(kappa / 1000.0) * r[f] * (phi + placement[f]).sin() + eps0)
        .collect()
}

fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[test]
fn bragg_shift_to_strain_by_hand() {
    let g = SensorGeometry::nominal();
    let mut w = g.base_wavelengths.clone();
    w[0] += 1.2; // λ_B = 1530
    let eps = wavelength_to_strain(&WavelengthFrame::new(0.0, w), &g).unwrap();
    assert!((eps[0] - 1.2 / (1530.0 * 0.78)).abs() < 1e-15);
    assert!(eps[1..].iter().all(|&e| e == 0.0));
}

#[test]
fn symmetric_layout_hand_case() {
    // κ = 20 1/m along φ = 0: fiber a sits on the neutral axis, b and c are
    // ∓ κ r sin(120°) = ∓ 0.02 · 0.2 · 0.866…
    let g = SensorGeometry::nominal();
    let s = 0.02 * 0.2 * (TAU / 3.0).sin();
    let st = solve_cross_section(&[0.0, -s, s], &g, 1).unwrap();
    assert!((st.curvature - 20.0).abs() < 1e-9);
    assert!(angle_distance(st.bend_angle, 0.0) < 1e-9);
    assert!(st.common_strain.abs() < 1e-15);
    assert_eq!(st.arc_position, 20.0);
}

#[test]
fn wavelength_rejects_bad_frames() {
    let g = SensorGeometry::nominal();
    let short = WavelengthFrame::new(0.0, vec![1550.0; 8]);
    assert!(matches!(
        wavelength_to_strain(&short, &g),
        Err(Error::DimensionMismatch { .. })
    ));
    let mut w = g.base_wavelengths.clone();
    w[3] = f64::NAN;
    assert!(wavelength_to_strain(&WavelengthFrame::new(0.0, w), &g).is_err());
}

#[test]
fn collinear_fibers_are_degenerate() {
    let mut g = SensorGeometry::nominal();
    g.angular_gaps = vec![PI, PI];
    let err = solve_cross_section(&[1e-4, -1e-4, 1e-4], &g, 0).unwrap_err();
    assert!(matches!(err, Error::DegenerateGeometry { .. }), "{err}");
}

#[test]
fn two_fibers_are_insufficient() {
    let mut g = SensorGeometry::nominal();
    g.fiber_count = 2;
    g.radial_offsets.truncate(2);
    g.angular_gaps.truncate(1);
    g.base_wavelengths.truncate(6);
    let err = solve_cross_section(&[0.0, 0.0], &g, 0).unwrap_err();
    assert!(err.to_string().contains("insufficient nodes per cross section"));
}

#[test]
fn straight_section_has_undefined_bend_plane() {
    let g = SensorGeometry::nominal();
    let st = solve_cross_section(&[3e-4, 3e-4, 3e-4], &g, 0).unwrap();
    assert_eq!(st.curvature, 0.0);
    assert!(st.bend_plane_undefined);
    assert!((st.common_strain - 3e-4).abs() < 1e-15);
}

proptest! {
    #[test]
    fn forward_then_solve_symmetric(
        kappa in 1e-3f64..50.0,
        phi in 0.0f64..TAU,
        eps0 in -1e-3f64..1e-3,
    ) {
        let g = SensorGeometry::nominal();
        let placement = [0.0, TAU / 3.0, 2.0 * TAU / 3.0];
        let strains = oracle_strains([0.2; 3], placement, kappa, phi, eps0);
        let st = solve_cross_section(&strains, &g, 0).unwrap();
        prop_assert!((st.curvature - kappa).abs() <= 1e-6 * kappa);
        prop_assert!((st.common_strain - eps0).abs() <= 1e-6 * eps0.abs().max(1e-9));
        prop_assert!(angle_distance(st.bend_angle, phi) < 1e-6);
        prop_assert!((0.0..TAU).contains(&st.bend_angle));
    }

    #[test]
    fn forward_then_solve_general_layout(
        kappa in 1e-2f64..50.0,
        phi in 0.0f64..TAU,
        eps0 in -1e-3f64..1e-3,
        r in prop::array::uniform3(0.1f64..0.5),
        gap1 in 1.2f64..2.6,
        gap2 in 1.2f64..2.6,
    ) {
        let mut g = SensorGeometry::nominal();
        g.radial_offsets = r.to_vec();
        g.angular_gaps = vec![gap1, gap2];
        let strains = oracle_strains(r, [0.0, gap1, gap1 + gap2], kappa, phi, eps0);
        let st = solve_cross_section(&strains, &g, 2).unwrap();
        prop_assert!((st.curvature - kappa).abs() <= 1e-6 * kappa);
        prop_assert!(angle_distance(st.bend_angle, phi) < 1e-6);
        prop_assert!((st.common_strain - eps0).abs() < 1e-12);
    }

    #[test]
    fn common_mode_strain_is_rejected(
        kappa in 0.5f64..50.0,
        phi in 0.0f64..TAU,
        shift in -1e-3f64..1e-3,
    ) {
        let g = SensorGeometry::nominal();
        let base = section_strains(&g, kappa, phi, 0.0);
        let shifted: Vec<f64> = base.iter().map(|e| e + shift).collect();
        let a = solve_cross_section(&base, &g, 0).unwrap();
        let b = solve_cross_section(&shifted, &g, 0).unwrap();
        prop_assert!((a.curvature - b.curvature).abs() < 1e-9);
        prop_assert!(angle_distance(a.bend_angle, b.bend_angle) < 1e-9);
        prop_assert!((b.common_strain - a.common_strain - shift).abs() < 1e-15);
    }

    #[test]
    fn wavelength_strain_round_trip(eps in prop::collection::vec(-5e-3f64..5e-3, 9)) {
        let g = SensorGeometry::nominal();
        let w = strain_to_wavelength(&eps, &g);
        let back = wavelength_to_strain(&WavelengthFrame::new(0.0, w), &g).unwrap();
        for (a, b) in eps.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn rotating_the_bend_plane_rotates_the_solution(
        kappa in 1.0f64..50.0,
        phi in 0.0f64..TAU,
    ) {
        // advancing φ by one fiber gap cycles the strains by one fiber
        let g = SensorGeometry::nominal();
        let s = section_strains(&g, kappa, phi, 0.0);
        let s2 = section_strains(&g, kappa, phi + TAU / 3.0, 0.0);
        prop_assert!((s2[0] - s[1]).abs() < 1e-15 && (s2[1] - s[2]).abs() < 1e-15);
    }
}
