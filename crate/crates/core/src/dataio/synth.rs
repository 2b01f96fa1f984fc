//! Synthetic labeled traffic: offshore transits, vessels running buoyed
//! channels into ports, and harbor craft shuttling between docks.
//!
//! Motion is simulated in a UTM frame one report interval at a time. Each
//! step is exactly one kinematic model (CV, CTRV or tangential acceleration)
//! applied with [`project`], so consecutive states can be checked against it.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{project, psi_to_cog, wrap_course, Posit, ProjectionModel, RawRecord, KNOTS_TO_MPS};
use crate::utm::{from_utm, to_utm_in_zone, UtmZone};

use super::csv_io::quantize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Mixed,
    Open,
    Channel,
    Port,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionMode {
    /// Routes follow the fixed channel/dock graph where the scenario has one.
    WaypointGraph,
    /// Every vessel wanders between random offshore waypoints.
    RandomMotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub vessels: usize,
    /// Seconds.
    pub duration: f64,
    /// Seconds between raw reports.
    pub report_interval: f64,
    pub mode: MotionMode,
    pub scenario: Scenario,
    /// Transit speed range, knots.
    pub speed_kn: (f64, f64),
    /// Maximum turn rate range, degrees per second.
    pub turn_rate_deg_s: (f64, f64),
    /// South-west corner of the simulated area.
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Extent of the area, metres (east, north).
    pub width: f64,
    pub height: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vessels: 200,
            duration: 3.0 * 86_400.0,
            report_interval: 60.0,
            mode: MotionMode::WaypointGraph,
            scenario: Scenario::Mixed,
            speed_kn: (8.0, 18.0),
            turn_rate_deg_s: (0.2, 1.0),
            origin_lat: 27.0,
            origin_lon: -89.5,
            width: 400_000.0,
            height: 300_000.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if !(self.duration > 0.0 && self.report_interval > 0.0) {
            return bad("duration and report interval must be > 0");
        }
        if !(self.speed_kn.0 > 0.0 && self.speed_kn.1 >= self.speed_kn.0) {
            return bad("speed range must be positive and ordered");
        }
        if !(self.turn_rate_deg_s.0 > 0.0 && self.turn_rate_deg_s.1 >= self.turn_rate_deg_s.0) {
            return bad("turn rate range must be positive and ordered");
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("area must be non-empty");
        }
        if self.origin_lat.abs() > 80.0 {
            return bad("origin latitude must be within 80 degrees of the equator");
        }
        Ok(())
    }

    pub fn zone(&self) -> UtmZone {
        UtmZone::for_location(self.origin_lat, self.origin_lon + 1.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VesselKind {
    Open,
    Channel,
    Port,
}

/// Ground-truth simulation of one vessel. `models[i]` carries `states[i]`
/// to `states[i + 1]`.
#[derive(Debug, Clone)]
pub struct VesselTrace {
    pub track_id: u64,
    pub kind: VesselKind,
    pub states: Vec<Posit>,
    pub models: Vec<ProjectionModel>,
}

#[derive(Debug, Clone)]
struct Harbor {
    docks: Vec<(f64, f64)>,
    entrance: (f64, f64),
    /// Centerline from the entrance out to the open-water mouth.
    channel: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
struct Layout {
    x0: f64,
    y0: f64,
    width: f64,
    offshore_top: f64,
    harbors: Vec<Harbor>,
}

impl Layout {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (x0, y0) = to_utm_in_zone(cfg.origin_lat, cfg.origin_lon, cfg.zone())?;
        let coast = y0 + cfg.height;
        let channel_len = (0.3 * cfg.height).min(90_000.0);
        let mut harbors = Vec::new();
        for frac in [0.2, 0.5, 0.8] {
            let cx = x0 + frac * cfg.width;
            let cy = coast - 5_000.0;
            let mut docks = Vec::new();
            for row in 0..3 {
                for col in 0..4 {
                    docks.push((cx + (f64::from(col) - 1.5) * 500.0, cy + (f64::from(row) - 1.0) * 500.0));
                }
            }
            let entrance = (cx, cy - 4_000.0);
            let mut channel = vec![entrance];
            for j in 1..=3 {
                let bend = rng.random_range(-12_000.0..12_000.0) * f64::from(j) / 3.0;
                channel.push((cx + bend, entrance.1 - channel_len * f64::from(j) / 3.0));
            }
            harbors.push(Harbor { docks, entrance, channel });
        }
        let offshore_top = y0 + cfg.height - channel_len - 10_000.0;
        Ok(Self { x0, y0, width: cfg.width, offshore_top, harbors })
    }

    fn offshore_point(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        (
            self.x0 + rng.random_range(0.0..self.width),
            self.y0 + rng.random_range(0.0..(self.offshore_top - self.y0)),
        )
    }
}

#[derive(Debug, Clone, Copy)]
enum Leg {
    Goto { x: f64, y: f64, speed: f64 },
    Dwell { duration: f64 },
}

/// Channel centerline shifted to the starboard side for the travel direction.
fn lane(points: &[(f64, f64)], offset: f64) -> Vec<(f64, f64)> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (a, b) = if i + 1 < n { (points[i], points[i + 1]) } else { (points[i - 1], points[i]) };
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len = dx.hypot(dy).max(1e-9);
            // right-hand normal of the direction of travel
            (points[i].0 + offset * dy / len, points[i].1 - offset * dx / len)
        })
        .collect()
}

fn jitter(p: (f64, f64), std: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = Normal::new(0.0, std).expect("positive std");
    (p.0 + n.sample(rng), p.1 + n.sample(rng))
}

struct Plan {
    kind: VesselKind,
    start: f64,
    end: f64,
    pos: (f64, f64),
    legs: Vec<Leg>,
}

fn transit_speed(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(cfg.speed_kn.0..=cfg.speed_kn.1) * KNOTS_TO_MPS
}

fn plan_open(cfg: &SynthConfig, layout: &Layout, rng: &mut ChaCha8Rng) -> Plan {
    let start = rng.random_range(0.0..0.8 * cfg.duration);
    let pos = layout.offshore_point(rng);
    let speed = transit_speed(cfg, rng);
    let legs = (0..rng.random_range(2..=6))
        .map(|_| {
            let (x, y) = layout.offshore_point(rng);
            Leg::Goto { x, y, speed: speed * rng.random_range(0.9..1.1) }
        })
        .collect();
    Plan { kind: VesselKind::Open, start, end: cfg.duration, pos, legs }
}

fn plan_channel(cfg: &SynthConfig, layout: &Layout, rng: &mut ChaCha8Rng) -> Plan {
    let start = rng.random_range(0.0..0.5 * cfg.duration);
    let end = (start + rng.random_range(1.0..3.0) * 86_400.0).min(cfg.duration);
    let lane_offset = 250.0 + rng.random_range(-80.0..80.0);
    let speed = transit_speed(cfg, rng).min(12.0 * KNOTS_TO_MPS);
    let harbor_speed = 4.0 * KNOTS_TO_MPS;
    let mut h = rng.random_range(0..layout.harbors.len());
    let inbound_first = rng.random_bool(0.5);
    let mut legs = Vec::new();
    let pos;
    if inbound_first {
        let inbound: Vec<_> = layout.harbors[h].channel.iter().rev().copied().collect();
        let path = lane(&inbound, lane_offset);
        pos = jitter(layout.offshore_point(rng), 1.0, rng);
        legs.extend(path.iter().map(|p| Leg::Goto { x: p.0, y: p.1, speed }));
    } else {
        let d = layout.harbors[h].docks[rng.random_range(0..12)];
        pos = jitter(d, 40.0, rng);
        legs.push(Leg::Dwell { duration: rng.random_range(0.5..6.0) * 3600.0 });
    }
    for _ in 0..12 {
        let hb = &layout.harbors[h];
        if !matches!(legs.last(), Some(Leg::Dwell { .. })) {
            let d = jitter(hb.docks[rng.random_range(0..hb.docks.len())], 40.0, rng);
            legs.push(Leg::Goto { x: d.0, y: d.1, speed: harbor_speed });
            legs.push(Leg::Dwell { duration: rng.random_range(2.0..10.0) * 3600.0 });
        }
        legs.push(Leg::Goto { x: hb.entrance.0, y: hb.entrance.1, speed: harbor_speed });
        legs.extend(lane(&hb.channel, lane_offset).iter().map(|p| Leg::Goto { x: p.0, y: p.1, speed }));
        let (x, y) = layout.offshore_point(rng);
        legs.push(Leg::Goto { x, y, speed });
        h = rng.random_range(0..layout.harbors.len());
        let inbound: Vec<_> = layout.harbors[h].channel.iter().rev().copied().collect();
        legs.extend(lane(&inbound, lane_offset).iter().map(|p| Leg::Goto { x: p.0, y: p.1, speed }));
    }
    Plan { kind: VesselKind::Channel, start, end, pos, legs }
}

fn plan_port(cfg: &SynthConfig, layout: &Layout, rng: &mut ChaCha8Rng) -> Plan {
    let start = rng.random_range(0.0..0.2 * cfg.duration);
    let hb = &layout.harbors[rng.random_range(0..layout.harbors.len())];
    let pos = jitter(hb.docks[rng.random_range(0..hb.docks.len())], 40.0, rng);
    let mut legs = Vec::new();
    for _ in 0..60 {
        legs.push(Leg::Dwell { duration: rng.random_range(1.0..6.0) * 3600.0 });
        let speed = rng.random_range(2.0..4.0);
        if rng.random_bool(0.2) {
            legs.push(Leg::Goto { x: hb.entrance.0, y: hb.entrance.1, speed });
        }
        let d = jitter(hb.docks[rng.random_range(0..hb.docks.len())], 40.0, rng);
        legs.push(Leg::Goto { x: d.0, y: d.1, speed });
    }
    Plan { kind: VesselKind::Port, start, end: cfg.duration, pos, legs }
}

const MAX_ACCEL: f64 = 0.05;
const HEADING_TOL: f64 = 1e-3;
const SPEED_TOL: f64 = 1e-3;

fn simulate(plan: &Plan, track_id: u64, turn_rate: f64, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> VesselTrace {
    let h = cfg.report_interval;
    let zone = cfg.zone();
    let first_heading = match plan.legs.first() {
        Some(Leg::Goto { x, y, .. }) => (y - plan.pos.1).atan2(x - plan.pos.0),
        _ => rng.random_range(-PI..PI),
    };
    let first_speed = match plan.legs.first() {
        Some(Leg::Goto { speed, .. }) => *speed,
        _ => 0.0,
    };
    // align the start to the report clock
    let t0 = (plan.start / h).ceil() * h;
    let mut state = Posit {
        t: t0,
        x: plan.pos.0,
        y: plan.pos.1,
        v: first_speed,
        psi: wrap_course(first_heading),
        zone,
        source_id: 0,
    };
    let mut states = vec![state];
    let mut models = Vec::new();
    let mut leg = 0;
    let mut leg_started = t0;
    while state.t + h <= plan.end && leg < plan.legs.len() {
        let (target_speed, target) = match plan.legs[leg] {
            Leg::Goto { x, y, speed } => (speed, Some((x, y))),
            Leg::Dwell { duration } => {
                if state.t - leg_started >= duration {
                    leg += 1;
                    leg_started = state.t;
                    continue;
                }
                (0.0, None)
            }
        };
        let mut model = ProjectionModel::Cv;
        if let Some((tx, ty)) = target {
            let dist = (tx - state.x).hypot(ty - state.y);
            let err = wrap_course((ty - state.y).atan2(tx - state.x) - state.psi);
            let circling = dist < 2.0 * state.v / turn_rate && err.abs() > PI / 2.0;
            if dist < (state.v * h).max(50.0) || circling {
                leg += 1;
                leg_started = state.t;
                continue;
            }
            if err.abs() > HEADING_TOL {
                model = ProjectionModel::Ctrv { omega: (err / h).clamp(-turn_rate, turn_rate) };
            }
        }
        if model == ProjectionModel::Cv && (target_speed - state.v).abs() > SPEED_TOL {
            model = ProjectionModel::TangentialAccel { accel: ((target_speed - state.v) / h).clamp(-MAX_ACCEL, MAX_ACCEL) };
        }
        state = project(&state, h, model);
        if state.v.abs() < 1e-9 {
            state.v = 0.0;
        }
        states.push(state);
        models.push(model);
    }
    VesselTrace { track_id, kind: plan.kind, states, models }
}

fn vessel_kind(cfg: &SynthConfig, i: usize) -> VesselKind {
    if cfg.mode == MotionMode::RandomMotion {
        return VesselKind::Open;
    }
    match cfg.scenario {
        Scenario::Open => VesselKind::Open,
        Scenario::Channel => VesselKind::Channel,
        Scenario::Port => VesselKind::Port,
        Scenario::Mixed => {
            let n = cfg.vessels as f64;
            let n_open = (0.45 * n).round() as usize;
            let n_channel = (0.30 * n).round() as usize;
            if i < n_open {
                VesselKind::Open
            } else if i < n_open + n_channel {
                VesselKind::Channel
            } else {
                VesselKind::Port
            }
        }
    }
}

pub const TRACK_ID_BASE: u64 = 300_000_000;

fn vessel_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ground-truth state sequences for every vessel.
pub fn vessel_traces(cfg: &SynthConfig) -> Result<Vec<VesselTrace>> {
    cfg.validate()?;
    let layout = Layout::new(cfg, &mut vessel_rng(cfg.seed, 0))?;
    Ok((0..cfg.vessels)
        .into_par_iter()
        .map(|i| {
            let mut rng = vessel_rng(cfg.seed, i as u64 + 1);
            let plan = match vessel_kind(cfg, i) {
                VesselKind::Open => plan_open(cfg, &layout, &mut rng),
                VesselKind::Channel => plan_channel(cfg, &layout, &mut rng),
                VesselKind::Port => plan_port(cfg, &layout, &mut rng),
            };
            let turn = rng.random_range(cfg.turn_rate_deg_s.0..=cfg.turn_rate_deg_s.1).to_radians();
            simulate(&plan, TRACK_ID_BASE + i as u64, turn, cfg, &mut rng)
        })
        .collect())
}

fn report(state: &Posit, track_id: u64, rng: &mut ChaCha8Rng) -> RawRecord {
    let (lat, lon) = from_utm(state.x, state.y, state.zone);
    let speed_noise = Normal::new(0.0, 0.1).expect("positive std");
    let sog = (state.v / KNOTS_TO_MPS + speed_noise.sample(rng)).max(0.0);
    // a vessel at rest reports a course that wanders
    let course_std = if state.v < 0.2 { 30.0 } else { 1.0 };
    let cog = psi_to_cog(state.psi) + Normal::new(0.0, course_std).expect("positive std").sample(rng);
    let mut r = RawRecord { point_id: 0, track_id: Some(track_id), time: state.t, lat, lon, sog, cog: cog.rem_euclid(360.0) };
    quantize(&mut r);
    r
}

/// Labeled raw reports, sorted by `(time, track_id)` with point ids in that
/// order.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<RawRecord>> {
    let traces = vessel_traces(cfg)?;
    Ok(records_from_traces(&traces, cfg.seed))
}

pub fn records_from_traces(traces: &[VesselTrace], seed: u64) -> Vec<RawRecord> {
    let mut out: Vec<RawRecord> = traces
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, tr)| {
            let mut rng = vessel_rng(seed ^ 0x5eed_5eed, i as u64 + 1);
            tr.states.iter().map(|s| report(s, tr.track_id, &mut rng)).collect::<Vec<_>>()
        })
        .collect();
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.track_id.cmp(&b.track_id)));
    for (i, r) in out.iter_mut().enumerate() {
        r.point_id = i as u64;
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;

    fn small(n: usize) -> SynthConfig {
        SynthConfig { vessels: n, duration: 86_400.0, seed: 4, ..Default::default() }
    }

    #[test]
    fn five_vessels_five_ids() {
        let recs = generate_synthetic(&small(5)).unwrap();
        let ids: BTreeSet<_> = recs.iter().map(|r| r.track_id.unwrap()).collect();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_synthetic(&small(8)).unwrap(), generate_synthetic(&small(8)).unwrap());
    }

    #[test]
    fn records_pass_validation() {
        for r in generate_synthetic(&small(12)).unwrap() {
            r.validate().unwrap();
        }
    }

    #[test]
    fn steps_follow_their_model() {
        for tr in vessel_traces(&small(12)).unwrap() {
            for (w, m) in tr.states.windows(2).zip(&tr.models) {
                let p = project(&w[0], w[1].t - w[0].t, *m);
                assert!((p.x - w[1].x).abs() < 1e-6 && (p.y - w[1].y).abs() < 1e-6, "{:?}", tr.kind);
                assert!((p.v - w[1].v).abs() < 1e-9);
                assert!(wrap_course(p.psi - w[1].psi).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn all_kinds_present_in_mixed() {
        let traces = vessel_traces(&small(20)).unwrap();
        for k in [VesselKind::Open, VesselKind::Channel, VesselKind::Port] {
            assert!(traces.iter().any(|t| t.kind == k));
        }
    }
}
