mod common;

use common::{algebraic, planted, rng, TwoView};
use loopclose::geometry::{
    eight_point, ransac_verify, sampson_error, Correspondence, RansacParams, Rejection,
};
use nalgebra::{Matrix3, Point2, Point3, Vector3};

fn scaled_residual(f: &Matrix3<f64>, c: &Correspondence) -> f64 {
    // x'ᵀFx with F at unit Frobenius norm and pixel coordinates
    algebraic(&(f / f.norm()), c)
}

#[test]
fn eight_exact_correspondences_satisfy_constraint() {
    let view = TwoView::standard();
    let mut r = rng(11);
    for _ in 0..20 {
        let pts = view.exact(&mut r, 8);
        let f = eight_point(&pts).unwrap();
        assert!((f.matrix.norm() - 1.0).abs() < 1e-12);
        for c in &pts {
            assert!(
                scaled_residual(&f.matrix, c).abs() < 1e-8,
                "{}",
                algebraic(&f.matrix, c)
            );
        }
    }
}

#[test]
fn recovered_matrix_is_rank_two_and_matches_truth() {
    let view = TwoView::standard();
    let pts = view.exact(&mut rng(12), 40);
    let f = eight_point(&pts).unwrap().matrix;
    let sv = f.svd(false, false).singular_values;
    let smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(smallest < 1e-12, "{sv}");

    let mut truth = view.fundamental();
    truth /= truth.norm();
    if (truth - f).norm() > (truth + f).norm() {
        truth = -truth;
    }
    assert!((truth - f).norm() < 1e-6, "{f} vs {truth}");
}

#[test]
fn planar_scene_still_yields_consistent_model() {
    let view = TwoView::standard();
    let mut r = rng(13);
    // points on the plane z = 6 + 0.2x
    let pts: Vec<Correspondence> = (0..30)
        .map(|_| {
            let x = rand::Rng::random_range(&mut r, -2.0..2.0);
            let y = rand::Rng::random_range(&mut r, -1.5..1.5);
            view.correspondence(&Point3::new(x, y, 6.0 + 0.2 * x))
        })
        .collect();
    let f = eight_point(&pts).expect("planar scenes are not rejected");
    for c in &pts {
        assert!(sampson_error(&f.matrix, c) < 1e-6);
    }
}

#[test]
fn sampson_of_exact_correspondence_is_zero() {
    let view = TwoView::standard();
    let f = view.fundamental();
    for c in view.exact(&mut rng(14), 50) {
        assert!(sampson_error(&f, &c) < 1e-12);
    }
}

#[test]
fn two_pixel_perpendicular_offset() {
    let view = TwoView::standard();
    let f = view.fundamental();
    for c in view.exact(&mut rng(15), 50) {
        // move the right point 2px along the normal of its epipolar line
        let l = f * Vector3::new(c.left.x, c.left.y, 1.0);
        let n = Vector3::new(l.x, l.y, 0.0).normalize();
        let moved = Correspondence::new(
            c.left,
            Point2::new(c.right.x + 2.0 * n.x, c.right.y + 2.0 * n.y),
        );

        // the point-to-line distance in the right image is exactly 2
        let lr = f * Vector3::new(moved.left.x, moved.left.y, 1.0);
        let dist = algebraic(&f, &moved).abs() / (lr.x * lr.x + lr.y * lr.y).sqrt();
        assert!((dist - 2.0).abs() < 1e-9);

        // first-order error splits that offset between both images:
        // d²·|l'|² / (|l'|² + |l|²) with l = Fᵀx'
        let ll = f.transpose() * Vector3::new(moved.right.x, moved.right.y, 1.0);
        let (a, b) = (lr.x * lr.x + lr.y * lr.y, ll.x * ll.x + ll.y * ll.y);
        let expected = 4.0 * a / (a + b);
        let e = sampson_error(&f, &moved);
        assert!((e - expected).abs() < 1e-9 * expected, "{e} vs {expected}");
        assert!(e > 1.0 && e <= 4.0, "{e}");
    }
}

#[test]
fn noise_free_matches_are_all_inliers() {
    let view = TwoView::standard();
    let pts = view.exact(&mut rng(16), 50);
    let v = ransac_verify(&pts, &RansacParams::default()).unwrap();
    assert_eq!(v.model.inlier_count, 50);
    assert_eq!(v.inliers, (0..50).collect::<Vec<_>>());
}

#[test]
fn seven_matches_are_rejected() {
    let view = TwoView::standard();
    let pts = view.exact(&mut rng(17), 7);
    assert_eq!(
        ransac_verify(&pts, &RansacParams::default()),
        Err(Rejection::TooFewMatches(7))
    );
}

#[test]
fn too_few_inliers_is_a_rejection() {
    let view = TwoView::standard();
    let mut r = rng(18);
    let pts = planted(&mut r, &view, 12, 40, 0.3);
    match ransac_verify(&pts, &RansacParams::default()) {
        Err(Rejection::TooFewInliers {
            found,
            required: 20,
        }) => assert!(found < 20),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn accepted_models_respect_threshold_and_are_deterministic() {
    let view = TwoView::standard();
    let params = RansacParams {
        rng_seed: 99,
        ..Default::default()
    };
    for seed in 0..5 {
        let pts = planted(&mut rng(100 + seed), &view, 70, 30, 0.5);
        let a = ransac_verify(&pts, &params).unwrap();
        let b = ransac_verify(&pts, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.model.inlier_count >= params.min_inliers);
        assert_eq!(a.inliers.len(), a.model.inlier_count);
        for &i in &a.inliers {
            assert!(sampson_error(&a.model.matrix, &pts[i]) <= 1.0);
        }
    }
}

#[test]
fn doubling_coordinates_and_threshold_preserves_inliers() {
    let view = TwoView::standard();
    let params = RansacParams {
        rng_seed: 5,
        ..Default::default()
    };
    for seed in 0..5 {
        let pts = planted(&mut rng(200 + seed), &view, 70, 30, 0.5);
        let doubled: Vec<Correspondence> = pts
            .iter()
            .map(|c| Correspondence::new(c.left * 2.0, c.right * 2.0))
            .collect();
        let a = ransac_verify(&pts, &params).unwrap();
        let b = ransac_verify(
            &doubled,
            &RansacParams {
                epipolar_threshold: 2.0,
                ..params
            },
        )
        .unwrap();
        assert_eq!(a.inliers, b.inliers);
    }
}

#[test]
fn adaptive_exit_recovers_clean_model() {
    let view = TwoView::standard();
    let pts = planted(&mut rng(300), &view, 90, 10, 0.3);
    let params = RansacParams {
        adaptive_confidence: Some(0.99),
        ..Default::default()
    };
    let v = ransac_verify(&pts, &params).unwrap();
    assert!(v.inliers.iter().filter(|&&i| i < 90).count() >= 80);
}
