//! Anisotropic displacement covariance, ellipsoidal and angular gates, and
//! the approximate-MAP link / new-vessel scores used for screening.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{project, to_local_frame, wrap_course, Posit, ProjectionModel};

pub type TrackId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Baseline position std, m.
    pub sigma0: f64,
    /// Along-track std growth, m/s.
    pub alpha_par: f64,
    /// Cross-track std growth, m/s.
    pub alpha_perp: f64,
    /// Mahalanobis gate threshold (unitless, compared against M^2 <= tau^2).
    pub tau: f64,
    /// Angular gate, radians.
    pub theta: f64,
    /// Largest admissible time gap, s.
    pub max_dt: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            sigma0: 30.0,
            alpha_par: 0.6,
            alpha_perp: 0.25,
            tau: 4.0,
            theta: 85f64.to_radians(),
            max_dt: 6.0 * 3600.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0 > 0.0) {
            return Err(Error::Config("gate.sigma0 must be positive".into()));
        }
        if !(self.alpha_par > self.alpha_perp && self.alpha_perp >= 0.0) {
            return Err(Error::Config("gate requires alpha_par > alpha_perp >= 0".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config("gate.tau must be positive".into()));
        }
        let (lo, hi) = (60f64.to_radians(), 90f64.to_radians());
        if !(self.theta >= lo - 1e-12 && self.theta <= hi + 1e-12) {
            return Err(Error::Config("gate.theta must lie in [60, 90] degrees".into()));
        }
        if !(self.max_dt > 0.0) {
            return Err(Error::Config("gate.max_dt must be positive".into()));
        }
        Ok(())
    }
}

/// Parameters of the continuation and birth priors.
///
/// `pi_cont(i) = exp(-dt / t_half) / (1 + rho(i))` and
/// `pi_birth(q) = beta / (beta + rho(q))`, where `rho` counts active
/// endpoints within `r_loc` metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorModel {
    pub t_half: f64,
    pub beta: f64,
    pub r_loc: f64,
}

impl Default for PriorModel {
    fn default() -> Self {
        Self { t_half: 7200.0, beta: 1e-3, r_loc: 50_000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub lambda_psi: f64,
    pub lambda_v: f64,
    pub prior: PriorModel,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { lambda_psi: 50.0, lambda_v: 0.5, prior: PriorModel::default() }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_psi >= 0.0 && self.lambda_v >= 0.0) {
            return Err(Error::Config("score lambdas must be non-negative".into()));
        }
        let p = &self.prior;
        if !(p.t_half > 0.0 && p.beta > 0.0 && p.r_loc > 0.0) {
            return Err(Error::Config("prior parameters must be positive".into()));
        }
        Ok(())
    }
}

/// One screened hypothesis "endpoint precedes query".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub track: TrackId,
    pub endpoint: Posit,
    pub dt: f64,
    pub e_par: f64,
    pub e_perp: f64,
    pub delta_c: f64,
    pub v_req: f64,
    pub mahal_sq: f64,
    pub angle: f64,
    /// Active endpoints near the candidate endpoint (prior input).
    pub density: usize,
    pub score: f64,
    pub passed_gates: bool,
}

/// Diagonal of the along/cross-track covariance at gap `dt`.
pub fn covariance(dt: f64, cfg: &GateConfig) -> (f64, f64) {
    let s0 = cfg.sigma0 * cfg.sigma0;
    let dt2 = dt * dt;
    (s0 + cfg.alpha_par * cfg.alpha_par * dt2, s0 + cfg.alpha_perp * cfg.alpha_perp * dt2)
}

pub fn mahalanobis_sq(dx: f64, dy: f64, psi: f64, dt: f64, cfg: &GateConfig) -> f64 {
    let (e_par, e_perp) = to_local_frame(dx, dy, psi);
    let (s_par, s_perp) = covariance(dt, cfg);
    e_par * e_par / s_par + e_perp * e_perp / s_perp
}

/// Unsigned angle between two vectors in [0, pi]. `None` when either is zero-length.
pub fn angle_between(a: (f64, f64), b: (f64, f64)) -> Option<f64> {
    if (a.0 == 0.0 && a.1 == 0.0) || (b.0 == 0.0 && b.1 == 0.0) {
        return None;
    }
    let cross = a.0 * b.1 - a.1 * b.0;
    let dot = a.0 * b.0 + a.1 * b.1;
    Some(cross.abs().atan2(dot))
}

/// Turn-feasibility gate. A zero-length step on either side passes.
pub fn angle_gate(actual: (f64, f64), projected: (f64, f64), theta: f64) -> bool {
    angle_between(actual, projected).is_none_or(|a| a <= theta)
}

pub fn implied_speed(actual: (f64, f64), dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidPair(dt));
    }
    Ok(actual.0.hypot(actual.1) / dt)
}

/// `-ln pi_cont` for an endpoint `dt` seconds old with `density` neighbours.
pub fn continuation_cost(dt: f64, density: usize, prior: &PriorModel) -> f64 {
    dt / prior.t_half + (1.0 + density as f64).ln()
}

pub fn birth_prior(density: usize, prior: &PriorModel) -> f64 {
    prior.beta / (prior.beta + density as f64)
}

/// New-vessel score `-ln pi_birth`.
pub fn score_new(density: usize, scfg: &ScoreConfig) -> f64 {
    // subtracting from +0 keeps an empty neighbourhood at +0 rather than -0
    0.0 - birth_prior(density, &scfg.prior).ln()
}

/// The closed-form link score from its ingredients.
pub fn map_score(
    mahal_sq: f64,
    delta_c: f64,
    v_req: f64,
    v_query: f64,
    continuation_cost: f64,
    scfg: &ScoreConfig,
) -> f64 {
    let dv = v_req - v_query;
    mahal_sq + scfg.lambda_psi * delta_c * delta_c + scfg.lambda_v * dv * dv + continuation_cost
}

/// Scores the hypothesis that `query` continues the track ending at `endpoint`.
///
/// Residuals are taken in the frame of the projected endpoint, which for CV is
/// the endpoint's own heading. Any failed gate yields `score = +inf`.
pub fn score_link(
    query: &Posit,
    endpoint: &Posit,
    track: TrackId,
    model: ProjectionModel,
    density: usize,
    gate: &GateConfig,
    scfg: &ScoreConfig,
) -> Result<CandidateScore> {
    let dt = query.t - endpoint.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidPair(dt));
    }
    let pred = project(endpoint, dt, model);
    let (dx, dy) = (query.x - pred.x, query.y - pred.y);
    let (e_par, e_perp) = to_local_frame(dx, dy, pred.psi);
    let (s_par, s_perp) = covariance(dt, gate);
    let mahal_sq = e_par * e_par / s_par + e_perp * e_perp / s_perp;
    let delta_c = wrap_course(query.psi - pred.psi);

    let actual = (query.x - endpoint.x, query.y - endpoint.y);
    let step = (pred.x - endpoint.x, pred.y - endpoint.y);
    let v_req = implied_speed(actual, dt)?;
    let angle = angle_between(actual, step).unwrap_or(0.0);

    let passed_gates = dt <= gate.max_dt
        && mahal_sq <= gate.tau * gate.tau
        && (endpoint.v == 0.0 || angle <= gate.theta);
    let score = if passed_gates {
        map_score(
            mahal_sq,
            delta_c,
            v_req,
            query.v,
            continuation_cost(dt, density, &scfg.prior),
            scfg,
        )
    } else {
        f64::INFINITY
    };

    Ok(CandidateScore {
        track,
        endpoint: *endpoint,
        dt,
        e_par,
        e_perp,
        delta_c,
        v_req,
        mahal_sq,
        angle,
        density,
        score,
        passed_gates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utm::UtmZone;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn posit(t: f64, x: f64, y: f64, v: f64, psi: f64) -> Posit {
        Posit { t, x, y, v, psi, zone: UtmZone::new(16, true), source_id: 0 }
    }

    #[test]
    fn covariance_examples() {
        let cfg = GateConfig { sigma0: 25.0, alpha_par: 0.5, ..GateConfig::default() };
        assert_eq!(covariance(0.0, &cfg), (625.0, 625.0));
        assert_eq!(covariance(100.0, &cfg).0, 3125.0);
        let cfg = GateConfig::default();
        let mut dt = 0.0;
        while dt <= cfg.max_dt {
            let (a, b) = covariance(dt, &cfg);
            assert!(a >= b);
            dt += 37.0;
        }
    }

    #[test]
    fn mahalanobis_examples() {
        let iso = GateConfig { sigma0: 1.0, alpha_par: 0.0, alpha_perp: 0.0, ..GateConfig::default() };
        for psi in [-2.0, 0.0, 0.3, 3.0] {
            assert!((mahalanobis_sq(3.0, 4.0, psi, 500.0, &iso) - 25.0).abs() < 1e-12);
        }
        let cfg = GateConfig::default();
        let (s_par, _) = covariance(600.0, &cfg);
        assert!((mahalanobis_sq(900.0, 0.0, 0.0, 600.0, &cfg) - 810_000.0 / s_par).abs() < 1e-12);
    }

    #[test]
    fn angle_gate_examples() {
        let theta = 85f64.to_radians();
        assert!(angle_gate((1.0, 0.0), (1.0, 0.0), theta));
        assert!(!angle_gate((1.0, 0.0), (0.0, 1.0), theta));
        assert!(angle_gate((1.0, 0.0), (0.0, 0.0), theta));
    }

    #[test]
    fn implied_speed_examples() {
        assert_eq!(implied_speed((1800.0, 0.0), 600.0).unwrap(), 3.0);
        assert_eq!(implied_speed((0.0, 0.0), 600.0).unwrap(), 0.0);
        assert!(implied_speed((1.0, 1.0), 0.0).is_err());
        assert!(implied_speed((1.0, 1.0), -5.0).is_err());
    }

    #[test]
    fn new_vessel_score() {
        let scfg = ScoreConfig {
            prior: PriorModel { beta: 1.0, ..PriorModel::default() },
            ..ScoreConfig::default()
        };
        assert!((score_new(9, &scfg) - 10f64.ln()).abs() < 1e-6);
        assert_eq!(score_new(0, &scfg), 0.0);
        let mut last = -1.0;
        for rho in 0..50 {
            let s = score_new(rho, &scfg);
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn perfect_continuation_costs_only_prior() {
        let gate = GateConfig::default();
        let scfg = ScoreConfig::default();
        let ep = posit(0.0, 1000.0, 2000.0, 5.0, 0.4);
        let q = posit(600.0, 1000.0 + 3000.0 * 0.4f64.cos(), 2000.0 + 3000.0 * 0.4f64.sin(), 5.0, 0.4);
        let c = score_link(&q, &ep, 1, ProjectionModel::Cv, 3, &gate, &scfg).unwrap();
        assert!(c.passed_gates);
        let prior = continuation_cost(600.0, 3, &scfg.prior);
        assert!((c.score - prior).abs() < 1e-9, "{} vs {}", c.score, prior);
    }

    #[test]
    fn gate_failures_are_infinite() {
        let gate = GateConfig::default();
        let scfg = ScoreConfig::default();
        let ep = posit(0.0, 0.0, 0.0, 5.0, 0.0);
        // far off track
        let q = posit(600.0, 3000.0, 20_000.0, 5.0, 0.0);
        let c = score_link(&q, &ep, 0, ProjectionModel::Cv, 0, &gate, &scfg).unwrap();
        assert!(!c.passed_gates && c.score.is_infinite());
        // behind the vessel: small M^2 is impossible here but the angle fails
        let gate_wide = GateConfig { sigma0: 1e6, ..gate };
        let q = posit(600.0, -3000.0, 0.0, 5.0, PI);
        let c = score_link(&q, &ep, 0, ProjectionModel::Cv, 0, &gate_wide, &scfg).unwrap();
        assert!(c.mahal_sq <= 16.0);
        assert!(!c.passed_gates && c.score.is_infinite());
        // too old
        let q = posit(gate.max_dt + 1.0, 5.0 * (gate.max_dt + 1.0), 0.0, 5.0, 0.0);
        let c = score_link(&q, &ep, 0, ProjectionModel::Cv, 0, &gate, &scfg).unwrap();
        assert!(!c.passed_gates);
        // non-positive gap
        assert!(score_link(&ep, &ep, 0, ProjectionModel::Cv, 0, &gate, &scfg).is_err());
    }

    #[test]
    fn stationary_endpoint_skips_angle_gate() {
        let gate = GateConfig::default();
        let scfg = ScoreConfig::default();
        let ep = posit(0.0, 0.0, 0.0, 0.0, 0.0);
        let q = posit(1800.0, -100.0, 50.0, 0.0, FRAC_PI_2);
        let c = score_link(&q, &ep, 0, ProjectionModel::Cv, 0, &gate, &scfg).unwrap();
        assert!(c.passed_gates);
    }

    #[test]
    fn term_by_term_assembly() {
        let gate = GateConfig::default();
        let scfg = ScoreConfig::default();
        let ep = posit(1000.0, 500_000.0, 3_300_000.0, 6.0, 0.3);
        let q = posit(2800.0, 510_100.0, 3_303_500.0, 5.5, 0.42);
        let c = score_link(&q, &ep, 7, ProjectionModel::Cv, 4, &gate, &scfg).unwrap();

        // hand assembly
        let dt = 1800.0;
        let px = 500_000.0 + 6.0 * dt * 0.3f64.cos();
        let py = 3_300_000.0 + 6.0 * dt * 0.3f64.sin();
        let (dx, dy) = (510_100.0 - px, 3_303_500.0 - py);
        let e_par = dx * 0.3f64.cos() + dy * 0.3f64.sin();
        let e_perp = -dx * 0.3f64.sin() + dy * 0.3f64.cos();
        let s_par = 900.0 + 0.36 * dt * dt;
        let s_perp = 900.0 + 0.0625 * dt * dt;
        let m2 = e_par * e_par / s_par + e_perp * e_perp / s_perp;
        let dc: f64 = 0.42 - 0.3;
        let v_req = (10_100.0f64).hypot(3500.0) / dt;
        let expected = m2 + 50.0 * dc * dc + 0.5 * (v_req - 5.5).powi(2) + dt / 7200.0 + 5f64.ln();
        assert!(c.passed_gates);
        assert!((c.score - expected).abs() < 1e-9 * expected.abs());
        assert_eq!(c.track, 7);
    }
}
