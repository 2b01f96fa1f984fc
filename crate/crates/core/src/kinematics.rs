//! Posit types, course wrapping, the along/cross-track frame and the
//! continuous-time projection models (CV, CTRV, tangential acceleration).

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utm::{self, UtmZone};

pub const KNOTS_TO_MPS: f64 = 0.514_444;

/// Below this turn rate (rad/s) CTRV is evaluated with the CV closed form.
pub const CTRV_EPSILON: f64 = 1e-9;

/// One AIS report as it appears in the input CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub point_id: u64,
    pub track_id: Option<u64>,
    /// Seconds since the stream epoch (day index * 86400 + time of day).
    pub time: f64,
    pub lat: f64,
    pub lon: f64,
    /// Speed over ground, knots.
    pub sog: f64,
    /// Course over ground, degrees clockwise from north.
    pub cog: f64,
}

impl RawRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidRecord(format!("point {}: {what}", self.point_id)));
        if !self.time.is_finite() {
            return bad("non-finite time");
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return bad("latitude out of range");
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return bad("longitude out of range");
        }
        if !(self.sog >= 0.0 && self.sog.is_finite()) {
            return bad("negative or non-finite speed");
        }
        if !(0.0..360.0).contains(&self.cog) {
            return bad("course outside [0, 360)");
        }
        Ok(())
    }
}

/// Kinematic state in metric coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posit {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Speed, m/s.
    pub v: f64,
    /// Course in radians from the +x (east) axis, counter-clockwise, in (-pi, pi].
    pub psi: f64,
    pub zone: UtmZone,
    pub source_id: u64,
}

impl Posit {
    /// Converts a record into the metric frame of `zone`.
    pub fn from_record(rec: &RawRecord, zone: UtmZone) -> Result<Self> {
        rec.validate()?;
        let (x, y) = utm::to_utm_in_zone(rec.lat, rec.lon, zone)?;
        Ok(Self {
            t: rec.time,
            x,
            y,
            v: rec.sog * KNOTS_TO_MPS,
            psi: cog_to_psi(rec.cog),
            zone,
            source_id: rec.point_id,
        })
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x, self.y)
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.v * self.psi.cos(), self.v * self.psi.sin())
    }
}

/// Compass course (deg clockwise from north) to math angle (rad from +x).
pub fn cog_to_psi(cog_deg: f64) -> f64 {
    wrap_course(FRAC_PI_2 - cog_deg.to_radians())
}

/// Inverse of [`cog_to_psi`], in [0, 360).
pub fn psi_to_cog(psi: f64) -> f64 {
    let c = (FRAC_PI_2 - psi).to_degrees().rem_euclid(360.0);
    if c >= 360.0 {
        0.0
    } else {
        c
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_course(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = a.sin().atan2(a.cos());
    // atan2 may return exactly -pi; the half-open range keeps +pi
    if w <= -PI {
        PI
    } else {
        w
    }
}

/// Along-track / cross-track residual of a link hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalResidual {
    pub e_par: f64,
    pub e_perp: f64,
    pub delta_c: f64,
}

/// Rotates a global displacement into the frame aligned with heading `psi`
/// (applies R(psi)^T).
pub fn to_local_frame(dx: f64, dy: f64, psi: f64) -> (f64, f64) {
    let (s, c) = psi.sin_cos();
    (c * dx + s * dy, -s * dx + c * dy)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub enum ProjectionModel {
    #[default]
    Cv,
    Ctrv { omega: f64 },
    TangentialAccel { accel: f64 },
}

/// Projects `p` by `dt` seconds (negative = backward).
pub fn project(p: &Posit, dt: f64, model: ProjectionModel) -> Posit {
    if dt == 0.0 {
        return *p;
    }
    let (s, c) = p.psi.sin_cos();
    let mut out = *p;
    out.t = p.t + dt;
    match model {
        ProjectionModel::Cv => {
            let d = p.v * dt;
            out.x = p.x + d * c;
            out.y = p.y + d * s;
        }
        ProjectionModel::Ctrv { omega } if omega.abs() < CTRV_EPSILON => {
            let d = p.v * dt;
            out.x = p.x + d * c;
            out.y = p.y + d * s;
        }
        ProjectionModel::Ctrv { omega } => {
            let r = p.v / omega;
            let psi_end = p.psi + omega * dt;
            out.x = p.x + r * (psi_end.sin() - s);
            out.y = p.y + r * (c - psi_end.cos());
            out.psi = wrap_course(psi_end);
        }
        ProjectionModel::TangentialAccel { accel } => {
            let mut tau = dt;
            let mut v_end = p.v + accel * dt;
            if v_end < 0.0 {
                // vessel comes to rest at -v/a and stays there
                tau = -p.v / accel;
                v_end = 0.0;
            }
            let d = p.v * tau + 0.5 * accel * tau * tau;
            out.x = p.x + d * c;
            out.y = p.y + d * s;
            out.v = v_end;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn posit(x: f64, y: f64, v: f64, psi: f64) -> Posit {
        Posit { t: 0.0, x, y, v, psi, zone: UtmZone::new(15, true), source_id: 0 }
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_course(0.0), 0.0);
        assert!((wrap_course(340f64.to_radians()) - (-20f64).to_radians()).abs() < 1e-12);
        assert_eq!(wrap_course(PI), PI);
        assert_eq!(wrap_course(-PI), PI);
    }

    #[test]
    fn wrap_matches_atan2_on_pairs() {
        let mut a = 0.123_f64;
        for _ in 0..1000 {
            a = (a * 7919.0 + 0.377).fract();
            let pj = a * 20.0 - 10.0;
            let pi_ = (a * 13.0).fract() * 20.0 - 10.0;
            let d = pj - pi_;
            let oracle = d.sin().atan2(d.cos());
            let w = wrap_course(d);
            assert!((w - oracle).abs() < 1e-12 || (w - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn course_conversion() {
        assert!((cog_to_psi(0.0) - FRAC_PI_2).abs() < 1e-12);
        assert!(cog_to_psi(90.0).abs() < 1e-12);
        assert!((cog_to_psi(270.0) - PI).abs() < 1e-12);
        for cog in [0.0, 12.5, 90.0, 180.0, 271.3, 359.9] {
            assert!((psi_to_cog(cog_to_psi(cog)) - cog).abs() < 1e-9);
        }
    }

    #[test]
    fn local_frame_examples() {
        let (a, b) = to_local_frame(3.0, 4.0, 0.0);
        assert_eq!((a, b), (3.0, 4.0));
        let (a, b) = to_local_frame(0.0, 1.0, FRAC_PI_2);
        assert!((a - 1.0).abs() < 1e-15 && b.abs() < 1e-15);
    }

    #[test]
    fn cv_straight_line() {
        let p = project(&posit(0.0, 0.0, 10.0, 0.0), 60.0, ProjectionModel::Cv);
        assert_eq!((p.x, p.y, p.v, p.psi, p.t), (600.0, 0.0, 10.0, 0.0, 60.0));
    }

    #[test]
    fn zero_dt_is_identity() {
        let p = posit(12.0, -3.0, 4.0, 1.0);
        for m in [
            ProjectionModel::Cv,
            ProjectionModel::Ctrv { omega: 0.01 },
            ProjectionModel::TangentialAccel { accel: -0.3 },
        ] {
            assert_eq!(project(&p, 0.0, m), p);
        }
    }

    #[test]
    fn ctrv_quarter_turn() {
        let omega = 0.01;
        let dt = FRAC_PI_2 / omega;
        let p = project(&posit(0.0, 0.0, 10.0, 0.0), dt, ProjectionModel::Ctrv { omega });
        assert!((p.x - 10.0 / omega).abs() < 1e-9);
        assert!((p.y - 10.0 / omega).abs() < 1e-9);
        assert!((p.psi - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn ctrv_tiny_omega_is_cv() {
        let p = posit(400_000.0, 3_300_000.0, 9.0, 0.7);
        for dt in [-3600.0, -60.0, 1.0, 1800.0, 21600.0] {
            let a = project(&p, dt, ProjectionModel::Ctrv { omega: 1e-12 });
            let b = project(&p, dt, ProjectionModel::Cv);
            assert!(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() < 1e-6);
        }
    }

    #[test]
    fn decel_clamps_at_rest() {
        let p = posit(0.0, 0.0, 4.0, 0.0);
        let q = project(&p, 100.0, ProjectionModel::TangentialAccel { accel: -0.1 });
        assert_eq!(q.v, 0.0);
        assert!((q.x - 80.0).abs() < 1e-12); // v^2 / 2|a|
        let q = project(&p, -100.0, ProjectionModel::TangentialAccel { accel: 0.1 });
        assert_eq!(q.v, 0.0);
        assert!((q.x + 80.0).abs() < 1e-12);
    }

    #[test]
    fn record_validation() {
        let mut r = RawRecord {
            point_id: 0,
            track_id: Some(338214987),
            time: 0.0,
            lat: 28.033870,
            lon: -96.974543,
            sog: 6.5,
            cog: 56.1,
        };
        assert!(r.validate().is_ok());
        r.lat = 95.0;
        assert!(r.validate().is_err());
        r.lat = 28.0;
        r.cog = 360.0;
        assert!(r.validate().is_err());
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(a in -1e4f64..1e4) {
            let w = wrap_course(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_course(w), w);
        }

        #[test]
        fn local_frame_is_isometry(dx in -1e6f64..1e6, dy in -1e6f64..1e6, psi in -PI..PI) {
            let (a, b) = to_local_frame(dx, dy, psi);
            let n0 = dx.hypot(dy);
            let n1 = a.hypot(b);
            prop_assert!((n0 - n1).abs() <= 1e-9 * n0.max(1e-300));
        }

        #[test]
        fn cv_time_reversible(x in 0.0f64..1e6, y in 0.0f64..1e7, v in 0.0f64..30.0,
                              psi in -PI..PI, dt in -1e5f64..1e5) {
            let p = posit(x, y, v, psi);
            let back = project(&project(&p, dt, ProjectionModel::Cv), -dt, ProjectionModel::Cv);
            prop_assert!((back.x - p.x).abs() <= 4.0 * f64::EPSILON * x.abs().max(v * dt.abs()));
            prop_assert!((back.y - p.y).abs() <= 4.0 * f64::EPSILON * y.abs().max(v * dt.abs()));
            prop_assert_eq!(back.v, p.v);
            prop_assert_eq!(back.psi, p.psi);
        }

        #[test]
        fn ctrv_chord_within_arc(v in 0.0f64..30.0, psi in -PI..PI, omega in -0.05f64..0.05,
                                 dt in -1e4f64..1e4) {
            let p = posit(0.0, 0.0, v, psi);
            let q = project(&p, dt, ProjectionModel::Ctrv { omega });
            prop_assert!(q.x.hypot(q.y) <= v * dt.abs() * (1.0 + 1e-12) + 1e-9);
        }

        #[test]
        fn zero_accel_equals_cv(x in -1e6f64..1e6, v in 0.0f64..30.0, psi in -PI..PI,
                                dt in -1e5f64..1e5) {
            let p = posit(x, 2.0 * x, v, psi);
            prop_assert_eq!(
                project(&p, dt, ProjectionModel::TangentialAccel { accel: 0.0 }),
                project(&p, dt, ProjectionModel::Cv)
            );
        }
    }
}
