use proptest::prelude::*;
use rlnd_core::geo::{distance_matrix, haversine, GeoPoint, DEFAULT_EARTH_RADIUS_KM};

const R: f64 = DEFAULT_EARTH_RADIUS_KM;

fn point() -> impl Strategy<Value = GeoPoint> {
    (-90.0f64..=90.0, -179.999f64..=180.0).prop_map(|(lat, lon)| GeoPoint::new(lat, lon))
}

/// Chord length through the sphere turned back into an arc.
fn chord_oracle(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let xyz = |p: &GeoPoint| {
        let (la, lo) = (p.lat.to_radians(), p.lon.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (u, v) = (xyz(a), xyz(b));
    let chord = ((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2) + (u[2] - v[2]).powi(2)).sqrt();
    2.0 * R * (chord / 2.0).min(1.0).asin()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metric_properties(a in point(), b in point(), c in point()) {
        let ab = haversine(&a, &b, R).unwrap();
        let ba = haversine(&b, &a, R).unwrap();
        let bc = haversine(&b, &c, R).unwrap();
        let ac = haversine(&a, &c, R).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9);
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!(ab >= 0.0 && ab <= std::f64::consts::PI * R + 1e-9);
        prop_assert!((ab - chord_oracle(&a, &b)).abs() <= 0.1);
    }

    #[test]
    fn matrix_is_transposed_when_swapped(pts in prop::collection::vec(point(), 1..5), qts in prop::collection::vec(point(), 1..5)) {
        let m = distance_matrix(&pts, &qts, R).unwrap();
        let t = distance_matrix(&qts, &pts, R).unwrap();
        for i in 0..pts.len() {
            for j in 0..qts.len() {
                prop_assert!((m[i][j] - t[j][i]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn distance_scales_with_radius(a in point(), b in point(), k in 0.1f64..10.0) {
        let d = haversine(&a, &b, R).unwrap();
        prop_assert!((haversine(&a, &b, k * R).unwrap() - k * d).abs() <= 1e-9 * k * R);
    }
}
