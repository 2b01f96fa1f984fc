//! Challenge baseline: a triangular speed profile (accelerate to `v*`, then
//! decelerate to the end speed) fitted to each candidate link, scored by the
//! mismatch between the fitted and the mean acceleration plus course-change
//! rate terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::TrackId;
use crate::kinematics::{wrap_course, Posit};
use crate::tracker::{check_sorted, LabeledStream};

use super::stream_from_labels;

/// Course change and duration of the previous segment of a track.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AtdSegmentState {
    pub prev: Option<(f64, f64)>,
}

/// Fitted speed profile for one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtdFit {
    /// Acceleration magnitude of both phases, m/s^2.
    pub m: f64,
    /// Absolute time at which the peak speed is reached.
    pub t_star: f64,
    pub v_star: f64,
    /// The unconstrained fit needed a peak below `max(v1, v2)`; the closest
    /// feasible profile (a single ramp) was used instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtdDistance {
    pub value: f64,
    pub terms: [f64; 3],
    pub delta_c: f64,
    pub fit: AtdFit,
}

/// Solves `T^2 m^2 + (2 T (v1 + v2) - 4 D) m - (v2 - v1)^2 = 0` for the
/// acceleration whose triangular profile covers distance `d` in `dt`.
pub fn fit_profile(v1: f64, v2: f64, d: f64, t1: f64, dt: f64) -> AtdFit {
    let delta = v2 - v1;
    let a = dt * dt;
    let b = 2.0 * dt * (v1 + v2) - 4.0 * d;
    let c = -delta * delta;
    let m = if delta == 0.0 {
        -b / a
    } else {
        // the roots have opposite signs; take the positive one in a
        // cancellation-free form
        let disc = (b * b - 4.0 * a * c).sqrt();
        if b >= 0.0 {
            -2.0 * c / (b + disc)
        } else {
            (-b + disc) / (2.0 * a)
        }
    };
    let m_min = delta.abs() / dt;
    let (m, fallback) = if m < m_min { (m_min, true) } else { (m, false) };
    let rise = if m == 0.0 { dt / 2.0 } else { (dt + delta / m) / 2.0 };
    AtdFit { m, t_star: t1 + rise, v_star: (v1 + v2 + m * dt) / 2.0, fallback }
}

/// Distance of linking endpoint `p1` (with its track's previous segment) to
/// the later posit `p2`.
pub fn atd_distance(p1: &Posit, p2: &Posit, prev: &AtdSegmentState) -> Result<AtdDistance> {
    let dt = p2.t - p1.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidPair(dt));
    }
    let d = (p2.x - p1.x).hypot(p2.y - p1.y);
    let fit = fit_profile(p1.v, p2.v, d, p1.t, dt);
    let delta_c = wrap_course(p2.psi - p1.psi);
    let rate = delta_c / dt;
    let t1 = ((fit.m - (p2.v - p1.v) / dt) * (fit.t_star - p1.t)).abs();
    let t2 = rate.abs();
    let t3 = match prev.prev {
        Some((dc_prev, dt_prev)) => ((dc_prev / dt_prev - rate) / dt_prev).abs(),
        None => 0.0,
    };
    Ok(AtdDistance { value: t1 + t2 + t3, terms: [t1, t2, t3], delta_c, fit })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtdConfig {
    /// Endpoints older than this are not linked, seconds.
    pub window: f64,
    /// Links implying a faster straight-line speed are rejected, m/s.
    pub v_max: f64,
    /// Links scoring above this start a new track. Unbounded by default: on
    /// validation data every finite cut-off lowered accuracy.
    pub max_distance: f64,
}

impl Default for AtdConfig {
    fn default() -> Self {
        Self { window: 6.0 * 3600.0, v_max: 25.0, max_distance: f64::INFINITY }
    }
}

impl AtdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0 && self.v_max > 0.0 && self.max_distance >= 0.0) {
            return Err(Error::Config("atd window, v_max and max_distance must be positive".into()));
        }
        Ok(())
    }
}

struct AtdTrack {
    id: TrackId,
    end: usize,
    seg: AtdSegmentState,
}

/// Chronological greedy linking by smallest baseline distance.
pub fn atd_link(posits: &[Posit], cfg: &AtdConfig) -> Result<(LabeledStream, usize)> {
    cfg.validate()?;
    check_sorted(posits)?;
    let mut labels = Vec::with_capacity(posits.len());
    let mut tracks: Vec<AtdTrack> = Vec::new();
    let mut n_tracks: TrackId = 0;
    let mut fallbacks = 0;
    for (j, q) in posits.iter().enumerate() {
        tracks.retain(|tr| q.t - posits[tr.end].t <= cfg.window);
        let mut best: Option<(f64, usize, usize, bool)> = None;
        for (slot, tr) in tracks.iter().enumerate() {
            let p = &posits[tr.end];
            let dt = q.t - p.t;
            if !(dt > 0.0) || (q.x - p.x).hypot(q.y - p.y) > cfg.v_max * dt {
                continue;
            }
            let d = atd_distance(p, q, &tr.seg)?;
            let better = match best {
                None => true,
                Some((bd, bend, _, _)) => d.value < bd || (d.value == bd && tr.end < bend),
            };
            if better {
                best = Some((d.value, tr.end, slot, d.fit.fallback));
            }
        }
        let track = match best {
            Some((d, _, slot, fb)) if d <= cfg.max_distance => {
                fallbacks += usize::from(fb);
                let tr = &mut tracks[slot];
                let p = &posits[tr.end];
                tr.seg.prev = Some((wrap_course(q.psi - p.psi), q.t - p.t));
                tr.end = j;
                tr.id
            }
            _ => {
                n_tracks += 1;
                tracks.push(AtdTrack { id: n_tracks - 1, end: j, seg: AtdSegmentState::default() });
                n_tracks - 1
            }
        };
        labels.push(track);
    }
    Ok((stream_from_labels(labels, n_tracks as usize), fallbacks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utm::UtmZone;

    fn posit(t: f64, x: f64, y: f64, v: f64, psi: f64) -> Posit {
        Posit { t, x, y, v, psi, zone: UtmZone::new(16, true), source_id: t as u64 }
    }

    #[test]
    fn uniform_motion_is_zero() {
        let a = posit(0.0, 0.0, 0.0, 6.0, 0.4);
        let b = posit(1800.0, 6.0 * 1800.0 * 0.4f64.cos(), 6.0 * 1800.0 * 0.4f64.sin(), 6.0, 0.4);
        let d = atd_distance(&a, &b, &AtdSegmentState::default()).unwrap();
        assert!(d.value.abs() < 1e-12, "{d:?}");
        assert!(d.fit.m.abs() < 1e-12 && (d.fit.v_star - 6.0).abs() < 1e-9);
    }

    #[test]
    fn course_change_term() {
        let a = posit(0.0, 0.0, 0.0, 6.0, 0.0);
        let b = posit(1800.0, 10_800.0, 0.0, 6.0, 10f64.to_radians());
        let d = atd_distance(&a, &b, &AtdSegmentState::default()).unwrap();
        assert!((d.terms[1] - 10f64.to_radians() / 1800.0).abs() < 1e-15);
    }

    #[test]
    fn fit_covers_the_displacement() {
        for &(v1, v2, d, dt) in &[(2.0, 5.0, 9000.0, 1800.0), (5.0, 2.0, 9000.0, 1800.0), (0.0, 0.0, 500.0, 600.0)] {
            let f = fit_profile(v1, v2, d, 0.0, dt);
            assert!(!f.fallback);
            let a = f.t_star;
            let covered = (v1 + f.v_star) / 2.0 * a + (f.v_star + v2) / 2.0 * (dt - a);
            assert!((covered - d).abs() < 1e-6 * d, "{covered} vs {d}");
            assert!((f.v_star - v1 - f.m * a).abs() < 1e-9);
            assert!((f.v_star - v2 - f.m * (dt - a)).abs() < 1e-9);
        }
    }

    #[test]
    fn short_displacement_falls_back() {
        let f = fit_profile(5.0, 5.0, 100.0, 0.0, 1800.0);
        assert!(f.fallback);
        assert_eq!(f.m, 0.0);
        assert_eq!(f.v_star, 5.0);
    }

    #[test]
    fn non_positive_dt_rejected() {
        let a = posit(10.0, 0.0, 0.0, 1.0, 0.0);
        assert!(atd_distance(&a, &a, &AtdSegmentState::default()).is_err());
    }
}
