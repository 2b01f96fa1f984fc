//! Transverse Mercator forward/inverse on WGS84 using the Krüger n-series
//! carried to sixth order (sub-millimetre inside a zone).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WGS84_A: f64 = 6_378_137.0;
const WGS84_F: f64 = 1.0 / 298.257_223_563;
const K0: f64 = 0.9996;
const FALSE_EASTING: f64 = 500_000.0;
const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;

/// Maximum absolute latitude accepted by [`to_utm`].
pub const MAX_ABS_LAT: f64 = 84.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtmZone {
    pub number: u8,
    pub north: bool,
}

impl UtmZone {
    pub fn new(number: u8, north: bool) -> Self {
        Self { number, north }
    }

    /// Standard zone for a location, including the Norway and Svalbard exceptions.
    pub fn for_location(lat: f64, lon: f64) -> Self {
        let lon = normalize_lon(lon);
        let mut number = (((lon + 180.0) / 6.0).floor() as i32 + 1).clamp(1, 60) as u8;
        if (56.0..64.0).contains(&lat) && (3.0..12.0).contains(&lon) {
            number = 32;
        }
        if (72.0..=84.0).contains(&lat) {
            number = match lon {
                l if (0.0..9.0).contains(&l) => 31,
                l if (9.0..21.0).contains(&l) => 33,
                l if (21.0..33.0).contains(&l) => 35,
                l if (33.0..42.0).contains(&l) => 37,
                _ => number,
            };
        }
        Self { number, north: lat >= 0.0 }
    }

    pub fn central_meridian(&self) -> f64 {
        f64::from(self.number) * 6.0 - 183.0
    }
}

impl std::fmt::Display for UtmZone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.number, if self.north { 'N' } else { 'S' })
    }
}

fn normalize_lon(lon: f64) -> f64 {
    let mut l = (lon + 180.0) % 360.0;
    if l < 0.0 {
        l += 360.0;
    }
    l - 180.0
}

struct Series {
    e: f64,
    scale: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

fn series() -> &'static Series {
    static SERIES: std::sync::OnceLock<Series> = std::sync::OnceLock::new();
    SERIES.get_or_init(|| {
        let f = WGS84_F;
        let n = f / (2.0 - f);
        let (n2, n3) = (n * n, n * n * n);
        let (n4, n5, n6) = (n3 * n, n3 * n2, n3 * n3);
        let rect = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
                + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1_983_433.0 * n6 / 1_935_360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
                + 167_603.0 * n6 / 181_440.0,
            49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
            34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
            212_378_941.0 * n6 / 319_334_400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
                + 96199.0 * n6 / 604_800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
                - 1_118_711.0 * n6 / 3_870_720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
            4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
            20_648_693.0 * n6 / 638_668_800.0,
        ];
        Series { e: (f * (2.0 - f)).sqrt(), scale: K0 * rect, alpha, beta }
    })
}

/// Projects `(lat, lon)` in degrees into its standard zone.
pub fn to_utm(lat: f64, lon: f64) -> Result<(f64, f64, UtmZone)> {
    let zone = UtmZone::for_location(lat, lon);
    let (x, y) = to_utm_in_zone(lat, lon, zone)?;
    Ok((x, y, zone))
}

/// Projects into a caller-chosen zone, so points on both sides of a seam share
/// one metric frame.
pub fn to_utm_in_zone(lat: f64, lon: f64, zone: UtmZone) -> Result<(f64, f64)> {
    if !lat.is_finite() || lat.abs() > MAX_ABS_LAT || !lon.is_finite() {
        return Err(Error::OutsideUtmBand(lat));
    }
    let s = series();
    let phi = lat.to_radians();
    let lam = normalize_lon(lon - zone.central_meridian()).to_radians();

    let sin_phi = phi.sin();
    let t = (sin_phi.atanh() - s.e * (s.e * sin_phi).atanh()).sinh();
    let xi_p = t.atan2(lam.cos());
    let eta_p = (lam.sin() / (1.0 + t * t).sqrt()).atanh();

    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    let x = FALSE_EASTING + s.scale * eta;
    let mut y = s.scale * xi;
    if !zone.north {
        y += FALSE_NORTHING_SOUTH;
    }
    Ok((x, y))
}

/// Inverse projection back to `(lat, lon)` degrees.
pub fn from_utm(x: f64, y: f64, zone: UtmZone) -> (f64, f64) {
    let s = series();
    let y = if zone.north { y } else { y - FALSE_NORTHING_SOUTH };
    let xi = y / s.scale;
    let eta = (x - FALSE_EASTING) / s.scale;

    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j as f64 + 1.0);
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let tau_p = xi_p.sin() / (eta_p.sinh().powi(2) + xi_p.cos().powi(2)).sqrt();
    let lam = eta_p.sinh().atan2(xi_p.cos());

    // conformal -> geodetic latitude via Newton on tau = tan(phi)
    let e2 = s.e * s.e;
    let mut tau = tau_p;
    for _ in 0..8 {
        let sigma = (s.e * (s.e * tau / (1.0 + tau * tau).sqrt()).atanh()).sinh();
        let tau_i = tau * (1.0 + sigma * sigma).sqrt() - sigma * (1.0 + tau * tau).sqrt();
        let delta = (tau_p - tau_i) / (1.0 + tau_i * tau_i).sqrt() * (1.0 + (1.0 - e2) * tau * tau)
            / ((1.0 - e2) * (1.0 + tau * tau).sqrt());
        tau += delta;
        if delta.abs() < 1e-14 {
            break;
        }
    }
    let lat = tau.atan() * 180.0 / PI;
    let lon = normalize_lon(zone.central_meridian() + lam * 180.0 / PI);
    (lat, lon)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from an independent mpmath evaluation of Snyder's USGS series.
    const SNYDER: &[(f64, f64, u8, f64, f64)] = &[
        (28.033870, -96.974543, 14, 699_109.0561, 3_102_608.8465),
        (30.010361, -90.726282, 15, 719_301.0290, 3_322_110.5176),
        (30.708593, -88.039977, 16, 400_414.2315, 3_397_769.0200),
        (45.0, 3.0, 31, 500_000.0, 4_982_950.4005),
        (-33.9, 18.4, 34, 259_583.2216, 6_245_888.0454),
    ];

    #[test]
    fn matches_reference_series() {
        for &(lat, lon, zn, ex, ey) in SNYDER {
            let (x, y, zone) = to_utm(lat, lon).unwrap();
            assert_eq!(zone.number, zn);
            assert!((x - ex).abs() < 5e-3, "{lat},{lon}: x {x} vs {ex}");
            assert!((y - ey).abs() < 5e-3, "{lat},{lon}: y {y} vs {ey}");
        }
    }

    #[test]
    fn central_meridian_has_false_easting() {
        for lat in [-60.0, -10.0, 0.0, 28.5, 70.0] {
            let (x, _, _) = to_utm(lat, -93.0).unwrap();
            assert!((x - 500_000.0).abs() < 1e-6);
        }
    }

    #[test]
    fn round_trip_within_micro_degree() {
        for i in 0..200 {
            let lat = -80.0 + 160.0 * ((i * 37) % 200) as f64 / 200.0;
            let lon = -179.0 + 358.0 * ((i * 91) % 200) as f64 / 200.0;
            let (x, y, zone) = to_utm(lat, lon).unwrap();
            let (lat2, lon2) = from_utm(x, y, zone);
            assert!((lat - lat2).abs() < 1e-6, "{lat} {lat2}");
            assert!((lon - lon2).abs() < 1e-6, "{lon} {lon2}");
        }
    }

    #[test]
    fn rejects_polar_latitudes() {
        assert!(matches!(to_utm(84.5, 0.0), Err(Error::OutsideUtmBand(_))));
        assert!(to_utm(-85.0, 10.0).is_err());
        assert!(to_utm(84.0, 10.0).is_ok());
    }

    #[test]
    fn zone_numbers() {
        assert_eq!(UtmZone::for_location(28.0, -96.97).number, 14);
        assert_eq!(UtmZone::for_location(60.0, 5.0).number, 32);
        assert_eq!(UtmZone::for_location(75.0, 10.0).number, 33);
        assert_eq!(UtmZone::for_location(0.0, 180.0).number, 1);
    }
}
