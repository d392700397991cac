use std::f64::consts::TAU;

use fbg_tpe::frames::{base_from_straight_pose, MAX_LOAD_DRIFT};
use fbg_tpe::{
    align_streams, register_straight_pose, tracker_to_base, Error, Interpolation, RigidTransform, SensorGeometry,
    TipSample, TrackedPoint, WavelengthFrame,
};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn arb_transform() -> impl Strategy<Value = RigidTransform> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..TAU,
        prop::array::uniform3(-100.0f64..100.0),
    )
        .prop_filter("nonzero axis", |(a, _, _)| Vector3::from(*a).norm() > 1e-3)
        .prop_map(|(a, angle, t)| RigidTransform::from_axis_angle(Vector3::from(a), angle, Vector3::from(t)))
}

proptest! {
    #[test]
    fn composition_is_associative(a in arb_transform(), b in arb_transform(), c in arb_transform()) {
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        prop_assert!(left.max_difference(&right) < 1e-10);
    }

    #[test]
    fn inverse_undoes_and_reverses(a in arb_transform(), b in arb_transform(), p in prop::array::uniform3(-50.0f64..50.0)) {
        let id = RigidTransform::identity();
        prop_assert!(a.compose(&a.inverse()).max_difference(&id) < 1e-12);
        prop_assert!(a.compose(&b).inverse().max_difference(&b.inverse().compose(&a.inverse())) < 1e-10);
        let p = Vector3::from(p);
        prop_assert!((a.inverse().apply(&a.apply(&p)) - p).norm() < 1e-10);
        prop_assert!(a.is_valid());
    }

    #[test]
    fn apply_preserves_distances(a in arb_transform(), p in prop::array::uniform3(-50.0f64..50.0), q in prop::array::uniform3(-50.0f64..50.0)) {
        let (p, q) = (Vector3::from(p), Vector3::from(q));
        prop_assert!(((a.apply(&p) - a.apply(&q)).norm() - (p - q).norm()).abs() < 1e-10);
    }

    #[test]
    fn relocating_the_tracker_changes_nothing(
        g_move in arb_transform(),
        t_or0 in arb_transform(),
        t_sr0 in arb_transform(),
        t_orc in arb_transform(),
        p in prop::array::uniform3(-30.0f64..30.0),
    ) {
        // T_os0 consistent with the chosen T_sr0
        let geom = SensorGeometry::nominal();
        let t_os0 = t_or0.compose(&t_sr0.inverse());
        let point = TrackedPoint { timestamp: 0.0, position: Vector3::from(p) };
        let sr = register_straight_pose(&t_os0, &t_or0).unwrap();
        prop_assert!(sr.max_difference(&t_sr0) < 1e-10);
        let here = tracker_to_base(&point, &t_orc, &sr, &geom).unwrap();

        // the same scene observed from a tracker placed elsewhere
        let moved = TrackedPoint { timestamp: 0.0, position: g_move.apply(&point.position) };
        let sr_moved = register_straight_pose(&g_move.compose(&t_os0), &g_move.compose(&t_or0)).unwrap();
        let there = tracker_to_base(&moved, &g_move.compose(&t_orc), &sr_moved, &geom).unwrap();
        prop_assert!((here - there).norm() < 1e-10, "{}", (here - there).norm());
    }

    #[test]
    fn alignment_is_monotone_bounded_and_counted(
        n_fbg in 2usize..60,
        n_trk in 1usize..60,
        phase in -1.0f64..1.0,
        rate in 0.1f64..3.0,
    ) {
        let fbg: Vec<WavelengthFrame> = (0..n_fbg)
            .map(|i| WavelengthFrame::new(i as f64, vec![(i as f64).sin(), (i as f64 * 0.3).cos()]))
            .collect();
        let tips: Vec<TipSample> = (0..n_trk)
            .map(|i| TipSample { timestamp: phase + i as f64 * rate, position: Vector3::new(i as f64, 0.0, 0.0) })
            .collect();
        match align_streams(&fbg, &tips, Interpolation::Linear) {
            Ok(al) => {
                prop_assert!(al.pairs.len() <= n_fbg.max(n_trk));
                prop_assert_eq!(al.pairs.len() + al.dropped, n_trk);
                prop_assert!(al.pairs.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
                for (pair, &k) in al.pairs.iter().zip(&al.tip_indices) {
                    prop_assert_eq!(pair.tip, tips[k].position);
                    let i = (pair.timestamp.floor() as usize).min(n_fbg - 1);
                    let j = (i + 1).min(n_fbg - 1);
                    for (c, w) in pair.wavelengths.iter().enumerate() {
                        let (a, b) = (fbg[i].wavelengths[c], fbg[j].wavelengths[c]);
                        prop_assert!(*w >= a.min(b) && *w <= a.max(b));
                    }
                }
            }
            Err(e) => prop_assert!(matches!(e, Error::NoOverlap)),
        }
    }
}

#[test]
fn linear_interpolation_error_is_within_the_second_derivative_bound() {
    // f(t) = sin(ω t), |f''| ≤ ω²
    let omega = 2.0;
    let dt = 0.01;
    let fbg: Vec<WavelengthFrame> = (0..=500)
        .map(|i| {
            let t = i as f64 * dt;
            WavelengthFrame::new(t, vec![(omega * t).sin()])
        })
        .collect();
    let tips: Vec<TipSample> = (0..997)
        .map(|i| TipSample {
            timestamp: 0.0037 + i as f64 * 0.005,
            position: Vector3::zeros(),
        })
        .collect();
    let al = align_streams(&fbg, &tips, Interpolation::Linear).unwrap();
    let bound = dt * dt / 8.0 * omega * omega;
    let worst = al
        .pairs
        .iter()
        .map(|p| (p.wavelengths[0] - (omega * p.timestamp).sin()).abs())
        .fold(0.0, f64::max);
    assert!(worst <= bound, "{worst} > {bound}");
    assert!(worst > bound / 10.0);
}

#[test]
fn unsorted_streams_are_rejected() {
    let fbg = vec![
        WavelengthFrame::new(0.0, vec![1.0]),
        WavelengthFrame::new(2.0, vec![1.0]),
        WavelengthFrame::new(1.0, vec![1.0]),
    ];
    let tips = vec![TipSample {
        timestamp: 0.5,
        position: Vector3::zeros(),
    }];
    let err = align_streams(&fbg, &tips, Interpolation::Linear).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Unsorted {
                stream: "fbg",
                index: 2
            }
        ),
        "{err}"
    );

    let fbg = &fbg[..2];
    let dup = vec![tips[0], tips[0]];
    let err = align_streams(fbg, &dup, Interpolation::Nearest).unwrap_err();
    assert!(
        matches!(
            err,
            Error::Unsorted {
                stream: "tracker",
                index: 1
            }
        ),
        "{err}"
    );
}

#[test]
fn nearest_mode_copies_a_frame() {
    let fbg = vec![
        WavelengthFrame::new(0.0, vec![1.0]),
        WavelengthFrame::new(1.0, vec![3.0]),
    ];
    let tips = [0.2, 0.7, 1.0].map(|t| TipSample {
        timestamp: t,
        position: Vector3::zeros(),
    });
    let al = align_streams(&fbg, &tips, Interpolation::Nearest).unwrap();
    let w: Vec<f64> = al.pairs.iter().map(|p| p.wavelengths[0]).collect();
    assert_eq!(w, vec![1.0, 3.0, 3.0]);
}

#[test]
fn loaded_rotations_tolerate_only_small_drift() {
    let r = *RigidTransform::from_axis_angle(Vector3::new(1.0, 1.0, 0.0), 0.4, Vector3::zeros()).rotation();
    let slightly = r + Matrix3::new(1e-12, 0.0, 0.0, 0.0, -1e-12, 0.0, 0.0, 0.0, 0.0);
    assert!(RigidTransform::new(slightly, Vector3::zeros()).is_ok());
    let drifted = r + Matrix3::from_element(MAX_LOAD_DRIFT / 10.0);
    assert!(RigidTransform::new(drifted, Vector3::zeros()).is_err());
    let repaired = RigidTransform::from_loaded(drifted, Vector3::zeros()).unwrap();
    assert!((repaired.rotation() - r).abs().max() < MAX_LOAD_DRIFT);
    assert!(RigidTransform::from_loaded(r + Matrix3::from_element(0.01), Vector3::zeros()).is_err());
}

#[test]
fn straight_tip_maps_to_the_cdm_tip() {
    // a tracker point at the straight-pose tip body origin lands at (0, 0, L)
    let geom = SensorGeometry::nominal();
    let t_or0 = RigidTransform::from_axis_angle(Vector3::new(0.2, 1.0, -0.3), 0.9, Vector3::new(100.0, 20.0, -5.0));
    let t_sr0 = RigidTransform::from_axis_angle(Vector3::z(), 0.3, Vector3::new(4.0, 2.0, 1.0));
    let t_os0 = t_or0.compose(&t_sr0.inverse());
    let p = TrackedPoint {
        timestamp: 0.0,
        position: *t_os0.translation(),
    };
    let base = tracker_to_base(&p, &t_or0, &register_straight_pose(&t_os0, &t_or0).unwrap(), &geom).unwrap();
    let expected = base_from_straight_pose(&geom).apply(&Vector3::zeros());
    assert!((base - expected).norm() < 1e-10);
    assert!((expected.z - geom.cdm_length).abs() < 1e-15);
}
