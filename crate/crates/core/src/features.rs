//! Per-slot feature vectors for (query, candidate) pairs and the assembled
//! classifier input over `k` candidate slots plus the New Vessel slot.
//!
//! Slot layout (raw units before normalization):
//!
//! | idx | name            | unit   | New Vessel slot            |
//! |-----|-----------------|--------|----------------------------|
//! | 0   | score           | nats   | s_new                      |
//! | 1   | mahal_sq        | -      | 0                          |
//! | 2   | e_par           | m      | 0                          |
//! | 3   | e_perp          | m      | 0                          |
//! | 4   | dt              | s      | 0                          |
//! | 5   | v_req           | m/s    | 0                          |
//! | 6   | turn_rate       | rad/s  | 0                          |
//! | 7   | fwd_err         | m      | 0                          |
//! | 8   | bwd_err         | m      | 0                          |
//! | 9   | sym_err         | m      | 0                          |
//! | 10  | log_sym_err     | ln m   | 0                          |
//! | 11  | delta_c         | rad    | 0                          |
//! | 12  | abs_delta_c     | rad    | 0                          |
//! | 13  | v_req_minus_vq  | m/s    | 0                          |
//! | 14  | vc_minus_vq     | m/s    | 0                          |
//! | 15  | course_jitter   | rad    | 0                          |
//! | 16  | speed_jitter    | m/s    | 0                          |
//! | 17  | log_track_len   | -      | 0                          |
//! | 18  | cand_density    | count  | 0                          |
//! | 19  | query_density   | count  | query_density              |
//! | 20  | tod_sin         | -      | tod_sin                    |
//! | 21  | tod_cos         | -      | tod_cos                    |
//! | 22  | v_query         | m/s    | v_query                    |
//! | 23  | is_new          | -      | 1                          |
//! | 24  | score_gap       | nats   | s_new - best candidate     |

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gating::CandidateScore;
use crate::kinematics::{project, wrap_course, Posit, ProjectionModel};
use crate::screening::{EndpointStore, ScreenResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const SLOT_WIDTH: usize = 25;
pub const CLAMP: f64 = 10.0;

const NAMES: [(&str, &str); SLOT_WIDTH] = [
    ("score", "nats"),
    ("mahal_sq", "-"),
    ("e_par", "m"),
    ("e_perp", "m"),
    ("dt", "s"),
    ("v_req", "m/s"),
    ("turn_rate", "rad/s"),
    ("fwd_err", "m"),
    ("bwd_err", "m"),
    ("sym_err", "m"),
    ("log_sym_err", "ln m"),
    ("delta_c", "rad"),
    ("abs_delta_c", "rad"),
    ("v_req_minus_vq", "m/s"),
    ("vc_minus_vq", "m/s"),
    ("course_jitter", "rad"),
    ("speed_jitter", "m/s"),
    ("log_track_len", "-"),
    ("cand_density", "count"),
    ("query_density", "count"),
    ("tod_sin", "-"),
    ("tod_cos", "-"),
    ("v_query", "m/s"),
    ("is_new", "-"),
    ("score_gap", "nats"),
];

pub mod idx {
    pub const SCORE: usize = 0;
    pub const E_PAR: usize = 2;
    pub const E_PERP: usize = 3;
    pub const DT: usize = 4;
    pub const FWD_ERR: usize = 7;
    pub const BWD_ERR: usize = 8;
    pub const SYM_ERR: usize = 9;
    pub const QUERY_DENSITY: usize = 19;
    pub const IS_NEW: usize = 23;
}

pub type RawSlot = [f64; SLOT_WIDTH];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
    pub shift: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub k: usize,
    pub features: Vec<FeatureSpec>,
}

/// Normalized values of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub mask: bool,
}

impl FeatureVector {
    pub fn empty(width: usize) -> Self {
        Self { values: vec![0.0; width], mask: false }
    }
}

/// Flattened `(k + 1) * width` classifier input with its slot mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierInput {
    pub values: Vec<f32>,
    pub mask: Vec<bool>,
}

impl FeatureSchema {
    /// Identity normalization for `k` slots.
    pub fn identity(k: usize) -> Self {
        Self {
            k,
            features: NAMES
                .iter()
                .map(|(n, u)| FeatureSpec { name: n.to_string(), unit: u.to_string(), shift: 0.0, scale: 1.0 })
                .collect(),
        }
    }

    /// Fits shift/scale (mean/std) over occupied slots of training inputs.
    pub fn fit<'a>(k: usize, slots: impl IntoIterator<Item = &'a RawSlot>) -> Self {
        let mut n = 0usize;
        let mut sum = [0.0f64; SLOT_WIDTH];
        let mut sq = [0.0f64; SLOT_WIDTH];
        for s in slots {
            n += 1;
            for i in 0..SLOT_WIDTH {
                sum[i] += s[i];
                sq[i] += s[i] * s[i];
            }
        }
        let mut schema = Self::identity(k);
        if n > 0 {
            for (i, f) in schema.features.iter_mut().enumerate() {
                let mean = sum[i] / n as f64;
                let var = (sq[i] / n as f64 - mean * mean).max(0.0);
                let std = var.sqrt();
                f.shift = mean;
                f.scale = if std > 1e-9 { std } else { 1.0 };
            }
        }
        schema
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn input_width(&self) -> usize {
        (self.k + 1) * self.width()
    }

    pub fn normalize(&self, raw: &RawSlot) -> FeatureVector {
        let values = raw
            .iter()
            .zip(&self.features)
            .map(|(v, f)| {
                let z = (v - f.shift) / f.scale;
                let z = if z.is_finite() { z.clamp(-CLAMP, CLAMP) } else { 0.0 };
                z as f32
            })
            .collect();
        FeatureVector { values, mask: true }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ais-relabel feature schema v{SCHEMA_VERSION}");
        let _ = writeln!(s, "k {}", self.k);
        let _ = writeln!(s, "width {}", self.width());
        for (i, f) in self.features.iter().enumerate() {
            let _ = writeln!(s, "{i} {} {} {:?} {:?}", f.name, f.unit.replace(' ', "_"), f.shift, f.scale);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("schema: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        if header.trim() != format!("ais-relabel feature schema v{SCHEMA_VERSION}") {
            return Err(bad("unsupported header"));
        }
        let mut field = |key: &str| -> Result<usize> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(&format!("expected {key}")));
            }
            it.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(&format!("bad {key}")))
        };
        let k = field("k")?;
        let width = field("width")?;
        let mut features = Vec::with_capacity(width);
        for (i, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 || parts[0].parse::<usize>().ok() != Some(i) {
                return Err(bad(&format!("bad feature line {line:?}")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}")));
            features.push(FeatureSpec {
                name: parts[1].to_string(),
                unit: parts[2].replace('_', " "),
                shift: num(parts[3])?,
                scale: num(parts[4])?,
            });
        }
        if features.len() != width {
            return Err(bad("width does not match feature count"));
        }
        let schema = Self { k, features };
        schema.check_layout()?;
        Ok(schema)
    }

    /// Rejects schemas whose feature order differs from this build.
    pub fn check_layout(&self) -> Result<()> {
        let same = self.features.len() == SLOT_WIDTH
            && self.features.iter().zip(NAMES.iter()).all(|(f, (n, _))| f.name == *n);
        if same {
            Ok(())
        } else {
            Err(Error::Config("feature schema layout differs from this build".into()))
        }
    }

    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.to_text().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
}

/// Jitter of the course changes and speeds over a track's recent posits.
pub fn jitter(context: &[Posit]) -> (f64, f64) {
    let turns = context.windows(2).map(|w| wrap_course(w[1].psi - w[0].psi));
    let speeds = context.iter().map(|p| p.v);
    (std_dev(turns), std_dev(speeds))
}

fn time_of_day(t: f64) -> (f64, f64) {
    let phase = t.rem_euclid(86_400.0) / 86_400.0 * std::f64::consts::TAU;
    phase.sin_cos()
}

/// Raw features of one (query, candidate) pair.
pub fn candidate_features(
    query: &Posit,
    cand: &CandidateScore,
    track_context: &[Posit],
    track_len: usize,
    query_density: usize,
    best_score: f64,
) -> RawSlot {
    let ep = &cand.endpoint;
    let dt = cand.dt;
    let fwd = project(ep, dt, ProjectionModel::Cv);
    let bwd = project(query, -dt, ProjectionModel::Cv);
    let fwd_err = (fwd.x - query.x).hypot(fwd.y - query.y);
    let bwd_err = (bwd.x - ep.x).hypot(bwd.y - ep.y);
    let sym = 0.5 * (fwd_err + bwd_err);
    let (course_jitter, speed_jitter) = jitter(track_context);
    let (tod_sin, tod_cos) = time_of_day(query.t);
    [
        cand.score,
        cand.mahal_sq,
        cand.e_par,
        cand.e_perp,
        dt,
        cand.v_req,
        cand.delta_c / dt,
        fwd_err,
        bwd_err,
        sym,
        sym.ln_1p(),
        cand.delta_c,
        cand.delta_c.abs(),
        cand.v_req - query.v,
        ep.v - query.v,
        course_jitter,
        speed_jitter,
        (track_len as f64).ln(),
        cand.density as f64,
        query_density as f64,
        tod_sin,
        tod_cos,
        query.v,
        0.0,
        cand.score - best_score,
    ]
}

/// Raw features of the New Vessel slot.
pub fn new_vessel_features(query: &Posit, result: &ScreenResult) -> RawSlot {
    let (tod_sin, tod_cos) = time_of_day(query.t);
    let gap = result.candidates.first().map_or(0.0, |c| result.new_vessel_score - c.score);
    let mut s = [0.0; SLOT_WIDTH];
    s[idx::SCORE] = result.new_vessel_score;
    s[idx::QUERY_DENSITY] = result.query_density as f64;
    s[20] = tod_sin;
    s[21] = tod_cos;
    s[22] = query.v;
    s[idx::IS_NEW] = 1.0;
    s[24] = gap;
    s
}

/// Raw slots for a screened query: candidates in screen order, then New Vessel.
pub fn raw_slots(query: &Posit, result: &ScreenResult, store: &EndpointStore) -> Vec<RawSlot> {
    let best = result.candidates.first().map_or(0.0, |c| c.score);
    let mut out: Vec<RawSlot> = result
        .candidates
        .iter()
        .map(|c| {
            let (ctx, len) = store
                .get(c.track)
                .map(|e| (e.history.iter().copied().collect::<Vec<_>>(), e.len))
                .unwrap_or_else(|| (vec![c.endpoint], 1));
            candidate_features(query, c, &ctx, len, result.query_density, best)
        })
        .collect();
    out.push(new_vessel_features(query, result));
    out
}

/// Places normalized candidate slots first, pads to `k`, and puts the New
/// Vessel slot last.
pub fn assemble_input(schema: &FeatureSchema, slots: &[RawSlot]) -> ClassifierInput {
    let k = schema.k;
    let width = schema.width();
    let (new_slot, cands) = slots.split_last().expect("New Vessel slot is always present");
    debug_assert!(cands.len() <= k);
    let mut values = Vec::with_capacity((k + 1) * width);
    let mut mask = Vec::with_capacity(k + 1);
    for i in 0..k {
        let fv = match cands.get(i) {
            Some(raw) => schema.normalize(raw),
            None => FeatureVector::empty(width),
        };
        values.extend_from_slice(&fv.values);
        mask.push(fv.mask);
    }
    values.extend(schema.normalize(new_slot).values);
    mask.push(true);
    ClassifierInput { values, mask }
}

pub fn encode_query(
    query: &Posit,
    result: &ScreenResult,
    store: &EndpointStore,
    schema: &FeatureSchema,
) -> ClassifierInput {
    assemble_input(schema, &raw_slots(query, result, store))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gating::{GateConfig, ScoreConfig};
    use crate::screening::{screen, ScreenConfig};
    use crate::utm::UtmZone;

    fn posit(t: f64, x: f64, y: f64, v: f64, psi: f64, id: u64) -> Posit {
        Posit { t, x, y, v, psi, zone: UtmZone::new(16, true), source_id: id }
    }

    fn fixture() -> (EndpointStore, Posit) {
        let mut store = EndpointStore::new(ScreenConfig::default());
        for i in 0..6 {
            let p = posit(0.0, 1000.0 * i as f64, 0.0, 5.0 + i as f64 * 0.1, 0.05 * i as f64, i);
            store.insert_new(p);
        }
        (store, posit(1800.0, 11_000.0, 500.0, 5.2, 0.1, 100))
    }

    #[test]
    fn dt_and_residuals_match_screen() {
        let (store, q) = fixture();
        let r = screen(&q, &store, 16, &GateConfig::default(), &ScoreConfig::default());
        assert!(!r.candidates.is_empty());
        let slots = raw_slots(&q, &r, &store);
        assert_eq!(slots.len(), r.candidates.len() + 1);
        for (c, s) in r.candidates.iter().zip(&slots) {
            assert_eq!(s[idx::DT], q.t - c.endpoint.t);
            assert_eq!(s[idx::E_PAR], c.e_par);
            assert_eq!(s[idx::E_PERP], c.e_perp);
            assert_eq!(s[idx::SYM_ERR], 0.5 * (s[idx::FWD_ERR] + s[idx::BWD_ERR]));
        }
        assert_eq!(slots.last().unwrap()[idx::IS_NEW], 1.0);
    }

    #[test]
    fn empty_screen_has_only_new_slot() {
        let store = EndpointStore::new(ScreenConfig::default());
        let q = posit(10.0, 0.0, 0.0, 1.0, 0.0, 1);
        let r = screen(&q, &store, 4, &GateConfig::default(), &ScoreConfig::default());
        let schema = FeatureSchema::identity(4);
        let input = encode_query(&q, &r, &store, &schema);
        assert_eq!(input.mask, vec![false, false, false, false, true]);
        assert_eq!(input.values.len(), 5 * SLOT_WIDTH);
        assert!(input.values[..4 * SLOT_WIDTH].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn normalization_clamps_and_stays_finite() {
        let schema = FeatureSchema::identity(1);
        let mut raw = [0.0; SLOT_WIDTH];
        raw[0] = 1e9;
        raw[1] = f64::NAN;
        raw[2] = -55.0;
        let fv = schema.normalize(&raw);
        assert_eq!(fv.values[0], 10.0);
        assert_eq!(fv.values[1], 0.0);
        assert_eq!(fv.values[2], -10.0);
    }

    #[test]
    fn schema_text_round_trip() {
        let (store, q) = fixture();
        let r = screen(&q, &store, 16, &GateConfig::default(), &ScoreConfig::default());
        let slots = raw_slots(&q, &r, &store);
        let schema = FeatureSchema::fit(16, slots.iter());
        let back = FeatureSchema::from_text(&schema.to_text()).unwrap();
        assert_eq!(back, schema);
        assert_eq!(back.fingerprint(), schema.fingerprint());
        assert_ne!(FeatureSchema::identity(16).fingerprint(), schema.fingerprint());
    }

    #[test]
    fn insertion_order_does_not_change_input() {
        let ps: Vec<Posit> = (0..40)
            .map(|i| {
                let f = i as f64;
                posit((i % 7) as f64 * 60.0, 5000.0 + (f * 733.0) % 9000.0, (f * 377.0) % 4000.0, 4.0 + (f * 0.37) % 3.0, ((f * 0.61) % 1.0) - 0.5, i)
            })
            .collect();
        let q = posit(1800.0, 12_000.0, 2000.0, 5.0, 0.1, 999);
        let schema = FeatureSchema::identity(16);
        let mut a = EndpointStore::new(ScreenConfig::default());
        ps.iter().for_each(|p| {
            a.insert_new(*p);
        });
        let mut b = EndpointStore::new(ScreenConfig::default());
        ps.iter().rev().for_each(|p| {
            b.insert_new(*p);
        });
        let (g, s) = (GateConfig::default(), ScoreConfig::default());
        let ia = encode_query(&q, &screen(&q, &a, 16, &g, &s), &a, &schema);
        let ib = encode_query(&q, &screen(&q, &b, 16, &g, &s), &b, &schema);
        assert_eq!(ia, ib);
    }
}
