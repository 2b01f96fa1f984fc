//! Kalman filter trackers with nearest-neighbour association: a linear
//! constant-velocity filter and an extended filter on the CTRV model.
//!
//! Each report measures position, speed and course. Posits are associated
//! one at a time, in stream order, to the track whose predicted measurement
//! has the smallest innovation Mahalanobis distance inside the gate.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::TrackId;
use crate::kinematics::{wrap_course, Posit, CTRV_EPSILON};
use crate::tracker::{check_sorted, LabeledStream};

use super::stream_from_labels;

type Vec4 = SVector<f64, 4>;
type Mat4 = SMatrix<f64, 4, 4>;
type Vec5 = SVector<f64, 5>;
type Mat5 = SMatrix<f64, 5, 5>;
type Mat45 = SMatrix<f64, 4, 5>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KfModel {
    Cv,
    Ctrv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KfConfig {
    /// Position measurement std, metres.
    pub pos_std: f64,
    /// Speed measurement std, m/s.
    pub speed_std: f64,
    /// Course measurement std, radians.
    pub course_std: f64,
    /// Below this reported speed the course is treated as uninformative, m/s.
    pub course_min_speed: f64,
    /// White-noise acceleration std (spectral density is its square).
    pub accel_std: f64,
    /// White-noise yaw acceleration std for the CTRV filter, rad/s^2.
    pub yaw_accel_std: f64,
    /// Initial turn-rate std, rad/s.
    pub omega_std: f64,
    /// Chi-square gate on the 4-dof innovation.
    pub gate: f64,
    /// Tracks not updated for this long are dropped, seconds.
    pub window: f64,
}

impl Default for KfConfig {
    fn default() -> Self {
        Self {
            pos_std: 30.0,
            speed_std: 0.5,
            course_std: 5f64.to_radians(),
            course_min_speed: 1.0,
            accel_std: 0.1,
            yaw_accel_std: 1e-4,
            omega_std: 2e-3,
            // 99.9 % quantile of chi-square with 4 degrees of freedom
            gate: 18.467,
            window: 6.0 * 3600.0,
        }
    }
}

impl KfConfig {
    pub fn validate(&self) -> Result<()> {
        let stds = [self.pos_std, self.speed_std, self.course_std, self.accel_std, self.yaw_accel_std, self.omega_std];
        if stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("kf noise stds must be > 0".into()));
        }
        if !(self.gate > 0.0 && self.window > 0.0) {
            return Err(Error::Config("kf gate and window must be > 0".into()));
        }
        Ok(())
    }

    fn course_std_at(&self, v: f64) -> f64 {
        if v < self.course_min_speed {
            std::f64::consts::PI
        } else {
            self.course_std
        }
    }
}

fn symmetrize<const N: usize>(p: &mut SMatrix<f64, N, N>) {
    *p = (*p + p.transpose()) * 0.5;
}

/// Linear filter on `[x, y, vx, vy]` measuring `[x, y, vx, vy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvFilter {
    pub x: Vec4,
    pub p: Mat4,
    pub t: f64,
}

/// Extended filter on `[x, y, v, psi, omega]` measuring `[x, y, v, psi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtrvFilter {
    pub x: Vec5,
    pub p: Mat5,
    pub t: f64,
}

fn cv_measurement(q: &Posit, cfg: &KfConfig) -> (Vec4, Mat4) {
    let (vx, vy) = q.velocity();
    // velocity noise from speed and course noise, rotated into x/y
    let (s, c) = q.psi.sin_cos();
    let along = cfg.speed_std.powi(2);
    let cross = (q.v * cfg.course_std_at(q.v)).powi(2).min(1e4) + 1e-6;
    let rot = SMatrix::<f64, 2, 2>::new(c, -s, s, c);
    let cov = rot * SMatrix::<f64, 2, 2>::new(along, 0.0, 0.0, cross) * rot.transpose();
    let mut r = Mat4::zeros();
    r[(0, 0)] = cfg.pos_std.powi(2);
    r[(1, 1)] = cfg.pos_std.powi(2);
    r.fixed_view_mut::<2, 2>(2, 2).copy_from(&cov);
    (Vec4::new(q.x, q.y, vx, vy), r)
}

impl CvFilter {
    pub fn new(q: &Posit, cfg: &KfConfig) -> Self {
        let (z, r) = cv_measurement(q, cfg);
        Self { x: z, p: r, t: q.t }
    }

    fn transition(dt: f64, cfg: &KfConfig) -> (Mat4, Mat4) {
        let mut f = Mat4::identity();
        f[(0, 2)] = dt;
        f[(1, 3)] = dt;
        let qd = cfg.accel_std.powi(2);
        let (a, b, c) = (dt.powi(3) / 3.0 * qd, dt.powi(2) / 2.0 * qd, dt * qd);
        let q = Mat4::new(a, 0.0, b, 0.0, 0.0, a, 0.0, b, b, 0.0, c, 0.0, 0.0, b, 0.0, c);
        (f, q)
    }

    pub fn predicted(&self, t: f64, cfg: &KfConfig) -> Self {
        let (f, q) = Self::transition(t - self.t, cfg);
        let mut p = f * self.p * f.transpose() + q;
        symmetrize(&mut p);
        Self { x: f * self.x, p, t }
    }

    /// Innovation and its covariance for measurement `q` at the filter time.
    pub fn innovation(&self, q: &Posit, cfg: &KfConfig) -> (Vec4, Mat4) {
        let (z, r) = cv_measurement(q, cfg);
        (z - self.x, self.p + r)
    }

    /// Joseph-form update. Returns false when the innovation covariance is not
    /// positive definite.
    pub fn update(&mut self, q: &Posit, cfg: &KfConfig) -> bool {
        let (z, r) = cv_measurement(q, cfg);
        let y = z - self.x;
        let s = self.p + r;
        let Some(chol) = s.cholesky() else { return false };
        let k = self.p * chol.inverse();
        let i_k = Mat4::identity() - k;
        self.x += k * y;
        self.p = i_k * self.p * i_k.transpose() + k * r * k.transpose();
        symmetrize(&mut self.p);
        self.t = q.t;
        true
    }
}

fn ctrv_measurement(q: &Posit, cfg: &KfConfig) -> (SVector<f64, 4>, Mat4) {
    let r = Mat4::from_diagonal(&Vec4::new(
        cfg.pos_std.powi(2),
        cfg.pos_std.powi(2),
        cfg.speed_std.powi(2),
        cfg.course_std_at(q.v).powi(2),
    ));
    (Vec4::new(q.x, q.y, q.v, q.psi), r)
}

impl CtrvFilter {
    pub fn new(q: &Posit, cfg: &KfConfig) -> Self {
        let (_, r) = ctrv_measurement(q, cfg);
        let mut p = Mat5::zeros();
        p.fixed_view_mut::<4, 4>(0, 0).copy_from(&r);
        p[(4, 4)] = cfg.omega_std.powi(2);
        Self { x: Vec5::new(q.x, q.y, q.v, q.psi, 0.0), p, t: q.t }
    }

    /// State transition and its Jacobian.
    pub fn transition(x: &Vec5, dt: f64) -> (Vec5, Mat5) {
        let (px, py, v, psi, w) = (x[0], x[1], x[2], x[3], x[4]);
        let (s0, c0) = psi.sin_cos();
        let mut j = Mat5::identity();
        let next;
        if w.abs() < CTRV_EPSILON {
            next = Vec5::new(px + v * dt * c0, py + v * dt * s0, v, psi, w);
            j[(0, 2)] = dt * c0;
            j[(0, 3)] = -v * dt * s0;
            j[(0, 4)] = -v * dt * dt * s0 / 2.0;
            j[(1, 2)] = dt * s0;
            j[(1, 3)] = v * dt * c0;
            j[(1, 4)] = v * dt * dt * c0 / 2.0;
        } else {
            let psi1 = psi + w * dt;
            let (s1, c1) = psi1.sin_cos();
            next = Vec5::new(px + v / w * (s1 - s0), py + v / w * (c0 - c1), v, psi1, w);
            j[(0, 2)] = (s1 - s0) / w;
            j[(0, 3)] = v / w * (c1 - c0);
            j[(0, 4)] = v / (w * w) * (s0 - s1) + v * dt * c1 / w;
            j[(1, 2)] = (c0 - c1) / w;
            j[(1, 3)] = v / w * (s1 - s0);
            j[(1, 4)] = -v / (w * w) * (c0 - c1) + v * dt * s1 / w;
        }
        j[(3, 4)] = dt;
        (next, j)
    }

    fn process_noise(x: &Vec5, dt: f64, cfg: &KfConfig) -> Mat5 {
        let qa = cfg.accel_std.powi(2);
        let qw = cfg.yaw_accel_std.powi(2);
        let (s, c) = x[3].sin_cos();
        let mut q = Mat5::zeros();
        let pos = dt.powi(3) / 3.0 * qa;
        q[(0, 0)] = pos;
        q[(1, 1)] = pos;
        q[(0, 2)] = dt * dt / 2.0 * qa * c;
        q[(1, 2)] = dt * dt / 2.0 * qa * s;
        q[(2, 0)] = q[(0, 2)];
        q[(2, 1)] = q[(1, 2)];
        q[(2, 2)] = dt * qa;
        q[(3, 3)] = dt.powi(3) / 3.0 * qw;
        q[(3, 4)] = dt * dt / 2.0 * qw;
        q[(4, 3)] = q[(3, 4)];
        q[(4, 4)] = dt * qw;
        q
    }

    pub fn predicted(&self, t: f64, cfg: &KfConfig) -> Self {
        let dt = t - self.t;
        let (mut x, j) = Self::transition(&self.x, dt);
        x[3] = wrap_course(x[3]);
        let mut p = j * self.p * j.transpose() + Self::process_noise(&self.x, dt, cfg);
        symmetrize(&mut p);
        Self { x, p, t }
    }

    fn h() -> Mat45 {
        let mut h = Mat45::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0;
        }
        h
    }

    pub fn innovation(&self, q: &Posit, cfg: &KfConfig) -> (Vec4, Mat4) {
        let (z, r) = ctrv_measurement(q, cfg);
        let h = Self::h();
        let mut y = z - h * self.x;
        y[3] = wrap_course(y[3]);
        (y, h * self.p * h.transpose() + r)
    }

    pub fn update(&mut self, q: &Posit, cfg: &KfConfig) -> bool {
        let (_, r) = ctrv_measurement(q, cfg);
        let (y, s) = self.innovation(q, cfg);
        let Some(chol) = s.cholesky() else { return false };
        let h = Self::h();
        let k = self.p * h.transpose() * chol.inverse();
        let i_kh = Mat5::identity() - k * h;
        self.x += k * y;
        self.x[3] = wrap_course(self.x[3]);
        self.p = i_kh * self.p * i_kh.transpose() + k * r * k.transpose();
        symmetrize(&mut self.p);
        self.t = q.t;
        true
    }
}

/// Squared innovation Mahalanobis distance, `None` when `s` is not SPD.
pub fn innovation_distance(y: &Vec4, s: &Mat4) -> Option<f64> {
    let chol = s.clone_owned().cholesky()?;
    Some(y.dot(&chol.solve(y)))
}

#[derive(Debug, Clone)]
enum Filter {
    Cv(CvFilter),
    Ctrv(CtrvFilter),
}

impl Filter {
    fn new(model: KfModel, q: &Posit, cfg: &KfConfig) -> Self {
        match model {
            KfModel::Cv => Filter::Cv(CvFilter::new(q, cfg)),
            KfModel::Ctrv => Filter::Ctrv(CtrvFilter::new(q, cfg)),
        }
    }

    fn t(&self) -> f64 {
        match self {
            Filter::Cv(f) => f.t,
            Filter::Ctrv(f) => f.t,
        }
    }

    fn predicted(&self, t: f64, cfg: &KfConfig) -> Self {
        match self {
            Filter::Cv(f) => Filter::Cv(f.predicted(t, cfg)),
            Filter::Ctrv(f) => Filter::Ctrv(f.predicted(t, cfg)),
        }
    }

    fn distance(&self, q: &Posit, cfg: &KfConfig) -> Option<f64> {
        let (y, s) = match self {
            Filter::Cv(f) => f.innovation(q, cfg),
            Filter::Ctrv(f) => f.innovation(q, cfg),
        };
        innovation_distance(&y, &s)
    }

    fn update(&mut self, q: &Posit, cfg: &KfConfig) -> bool {
        match self {
            Filter::Cv(f) => f.update(q, cfg),
            Filter::Ctrv(f) => f.update(q, cfg),
        }
    }

    fn covariance_ok(&self) -> bool {
        match self {
            Filter::Cv(f) => f.p.clone_owned().cholesky().is_some(),
            Filter::Ctrv(f) => f.p.clone_owned().cholesky().is_some(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KfReport {
    /// Tracks whose covariance lost positive definiteness and was reset.
    pub reinitialized: usize,
}

/// Tracks the stream with one filter per active track.
pub fn kf_nn_track(posits: &[Posit], model: KfModel, cfg: &KfConfig) -> Result<(LabeledStream, KfReport)> {
    cfg.validate()?;
    check_sorted(posits)?;
    let mut report = KfReport::default();
    let mut tracks: Vec<(TrackId, Filter)> = Vec::new();
    let mut labels = Vec::with_capacity(posits.len());
    let mut n_tracks: TrackId = 0;
    for q in posits {
        tracks.retain(|(_, f)| q.t - f.t() <= cfg.window);
        let mut best: Option<(f64, usize, Filter)> = None;
        for (slot, (_, f)) in tracks.iter().enumerate() {
            if !(q.t > f.t()) {
                continue;
            }
            let pred = f.predicted(q.t, cfg);
            let Some(d2) = pred.distance(q, cfg) else { continue };
            // candidates are visited in creation order, so strict `<` keeps
            // the oldest track on ties
            if d2 <= cfg.gate && best.as_ref().is_none_or(|b| d2 < b.0) {
                best = Some((d2, slot, pred));
            }
        }
        let track = match best {
            Some((_, slot, mut pred)) => {
                if !pred.update(q, cfg) || !pred.covariance_ok() {
                    report.reinitialized += 1;
                    pred = Filter::new(model, q, cfg);
                }
                tracks[slot].1 = pred;
                tracks[slot].0
            }
            None => {
                n_tracks += 1;
                tracks.push((n_tracks - 1, Filter::new(model, q, cfg)));
                n_tracks - 1
            }
        };
        labels.push(track);
    }
    Ok((stream_from_labels(labels, n_tracks as usize), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{project, ProjectionModel};
    use crate::utm::UtmZone;

    fn posit(id: u64, t: f64, x: f64, y: f64, v: f64, psi: f64) -> Posit {
        Posit { t, x, y, v, psi, zone: UtmZone::new(16, true), source_id: id }
    }

    #[test]
    fn measurement_at_prediction_has_zero_distance() {
        let cfg = KfConfig::default();
        let p0 = posit(0, 0.0, 0.0, 0.0, 5.0, 0.3);
        let p1 = project(&p0, 600.0, ProjectionModel::Cv);
        let f = CvFilter::new(&p0, &cfg).predicted(600.0, &cfg);
        let (y, s) = f.innovation(&p1, &cfg);
        assert!(innovation_distance(&y, &s).unwrap() < 1e-18);
        let g = CtrvFilter::new(&p0, &cfg).predicted(600.0, &cfg);
        let (y, s) = g.innovation(&p1, &cfg);
        assert!(innovation_distance(&y, &s).unwrap() < 1e-18);
    }

    #[test]
    fn ctrv_jacobian_matches_finite_differences() {
        for x in [Vec5::new(10.0, -5.0, 6.0, 0.7, 3e-3), Vec5::new(0.0, 0.0, 4.0, -2.0, 0.0)] {
            let (_, j) = CtrvFilter::transition(&x, 300.0);
            for k in 0..5 {
                let h = if k == 4 { 1e-7 } else { 1e-5 };
                let mut a = x;
                let mut b = x;
                a[k] += h;
                b[k] -= h;
                let d = (CtrvFilter::transition(&a, 300.0).0 - CtrvFilter::transition(&b, 300.0).0) / (2.0 * h);
                for r in 0..5 {
                    let tol = 1e-4 * (1.0 + j[(r, k)].abs());
                    assert!((d[r] - j[(r, k)]).abs() < tol, "d{r}/d{k}: {} vs {}", d[r], j[(r, k)]);
                }
            }
        }
    }
}
