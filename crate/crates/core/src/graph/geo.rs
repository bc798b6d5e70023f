use serde::{Deserialize, Serialize};

/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    latitude: f64,
    longitude: f64,
}

impl GeoPoint {
    /// `None` unless `|lat| <= 90` and `|lon| <= 180`.
    pub fn new(latitude: f64, longitude: f64) -> Option<Self> {
        (latitude.abs() <= 90.0 && longitude.abs() <= 180.0).then_some(Self {
            latitude,
            longitude,
        })
    }

    pub fn latitude(self) -> f64 {
        self.latitude
    }

    pub fn longitude(self) -> f64 {
        self.longitude
    }
}

/// Great-circle distance in km (haversine form).
pub fn haversine_km(p: GeoPoint, q: GeoPoint) -> f64 {
    let (phi1, phi2) = (p.latitude.to_radians(), q.latitude.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (q.longitude - p.longitude).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Spherical law of cosines, written independently of the haversine path.
    fn law_of_cosines_km(p: GeoPoint, q: GeoPoint) -> f64 {
        let (a, b) = (p.latitude().to_radians(), q.latitude().to_radians());
        let dl = (q.longitude() - p.longitude()).to_radians();
        let c = (a.sin() * b.sin() + a.cos() * b.cos() * dl.cos()).clamp(-1.0, 1.0);
        EARTH_RADIUS_KM * c.acos()
    }

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identical_points_are_zero() {
        assert_eq!(haversine_km(pt(47.6, -122.3), pt(47.6, -122.3)), 0.0);
    }

    #[test]
    fn antipodal_on_equator_is_half_circumference() {
        let d = haversine_km(pt(0.0, 0.0), pt(0.0, 180.0));
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-6);
        assert!((d - 20015.115).abs() < 1e-3);
    }

    #[test]
    fn seattle_spokane_matches_second_formula() {
        let (a, b) = (pt(47.6062, -122.3321), pt(47.6588, -117.4260));
        let d = haversine_km(a, b);
        let oracle = law_of_cosines_km(a, b);
        assert!((d - oracle).abs() / oracle < 0.005, "{d} vs {oracle}");
        assert!((360.0..375.0).contains(&d));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoPoint::new(90.1, 0.0).is_none());
        assert!(GeoPoint::new(0.0, -180.5).is_none());
    }

    proptest! {
        #[test]
        fn symmetric_and_non_negative(la in -90.0f64..90.0, lo in -180.0f64..180.0, lb in -90.0f64..90.0, lob in -180.0f64..180.0) {
            let (p, q) = (pt(la, lo), pt(lb, lob));
            let d = haversine_km(p, q);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, haversine_km(q, p));
            prop_assert!(d <= std::f64::consts::PI * EARTH_RADIUS_KM + 1e-9);
            if p != q {
                prop_assert!(d > 0.0);
            }
        }
    }
}
