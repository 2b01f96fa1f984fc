//! Active endpoint store and top-k candidate screening.
//!
//! Endpoints are bucketed by last-update time (slabs) and position (grid
//! cells). For a slab whose oldest possible gap is `dt`, an endpoint farther
//! than `v_max * dt + tau * sigma_max(dt)` from the query cannot pass the
//! ellipsoidal gate, so the index only removes endpoints the gates would
//! reject anyway. Endpoints faster than `v_max` are always scanned.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{self, CandidateScore, GateConfig, ScoreConfig, TrackId};
use crate::kinematics::{wrap_course, Posit, ProjectionModel};

/// Posits retained per track for turn-rate and jitter estimates.
pub const HISTORY_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenConfig {
    pub k: usize,
    /// Speed bound used by the spatial prune, m/s.
    pub v_max: f64,
    pub cell_size: f64,
    pub slab_len: f64,
    /// Project with CTRV when a track supplies a turn-rate estimate.
    pub use_ctrv: bool,
    /// Clamp on estimated turn rates, rad/s.
    pub omega_max: f64,
    /// Disable to scan every endpoint (reference path for tests).
    pub use_index: bool,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            k: 16,
            v_max: 25.0,
            cell_size: 20_000.0,
            slab_len: 1800.0,
            use_ctrv: true,
            omega_max: 2e-3,
            use_index: true,
        }
    }
}

impl ScreenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("screen.k must be at least 1".into()));
        }
        if !(self.v_max > 0.0 && self.cell_size > 0.0 && self.slab_len > 0.0) {
            return Err(Error::Config("screen sizes must be positive".into()));
        }
        if !(self.omega_max >= 0.0) {
            return Err(Error::Config("screen.omega_max must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Continue(TrackId),
    NewVessel,
}

#[derive(Debug, Clone)]
pub struct TrackEntry {
    /// Most recent posit last.
    pub history: VecDeque<Posit>,
    pub len: usize,
    slab: i64,
    cell: (i64, i64),
}

impl TrackEntry {
    pub fn endpoint(&self) -> &Posit {
        self.history.back().expect("track entries are never empty")
    }
}

#[derive(Debug, Clone)]
pub struct EndpointStore {
    cfg: ScreenConfig,
    tracks: BTreeMap<TrackId, TrackEntry>,
    slabs: BTreeMap<i64, HashMap<(i64, i64), Vec<TrackId>>>,
    fast: BTreeSet<TrackId>,
    next_id: TrackId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub query_id: u64,
    /// Ascending by (score, track id); at most `k` entries, all gated.
    pub candidates: Vec<CandidateScore>,
    pub new_vessel_score: f64,
    /// Active endpoints within the prior radius of the query.
    pub query_density: usize,
    /// Gated endpoints before truncation to `k`.
    pub gated: usize,
}

impl EndpointStore {
    pub fn new(cfg: ScreenConfig) -> Self {
        Self {
            cfg,
            tracks: BTreeMap::new(),
            slabs: BTreeMap::new(),
            fast: BTreeSet::new(),
            next_id: 0,
        }
    }

    pub fn config(&self) -> &ScreenConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Number of tracks ever created.
    pub fn tracks_created(&self) -> TrackId {
        self.next_id
    }

    pub fn get(&self, id: TrackId) -> Option<&TrackEntry> {
        self.tracks.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TrackId, &TrackEntry)> {
        self.tracks.iter().map(|(k, v)| (*k, v))
    }

    fn slab_of(&self, t: f64) -> i64 {
        (t / self.cfg.slab_len).floor() as i64
    }

    fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cfg.cell_size).floor() as i64, (y / self.cfg.cell_size).floor() as i64)
    }

    fn index_insert(&mut self, id: TrackId, p: &Posit) -> (i64, (i64, i64)) {
        let slab = self.slab_of(p.t);
        let cell = self.cell_of(p.x, p.y);
        self.slabs.entry(slab).or_default().entry(cell).or_default().push(id);
        if p.v > self.cfg.v_max {
            self.fast.insert(id);
        }
        (slab, cell)
    }

    fn index_remove(&mut self, id: TrackId, slab: i64, cell: (i64, i64)) {
        if let Some(cells) = self.slabs.get_mut(&slab) {
            if let Some(ids) = cells.get_mut(&cell) {
                if let Some(pos) = ids.iter().position(|&x| x == id) {
                    ids.swap_remove(pos);
                }
                if ids.is_empty() {
                    cells.remove(&cell);
                }
            }
            if cells.is_empty() {
                self.slabs.remove(&slab);
            }
        }
        self.fast.remove(&id);
    }

    /// Starts a new track at `p` and returns its id.
    pub fn insert_new(&mut self, p: Posit) -> TrackId {
        let id = self.next_id;
        self.next_id += 1;
        let (slab, cell) = self.index_insert(id, &p);
        let mut history = VecDeque::with_capacity(HISTORY_LEN);
        history.push_back(p);
        self.tracks.insert(id, TrackEntry { history, len: 1, slab, cell });
        id
    }

    /// Applies a decision for `query`, returning the track it joined.
    pub fn commit(&mut self, decision: Decision, query: Posit) -> Result<TrackId> {
        match decision {
            Decision::NewVessel => Ok(self.insert_new(query)),
            Decision::Continue(id) => {
                let (slab, cell) = match self.tracks.get(&id) {
                    Some(e) => (e.slab, e.cell),
                    None => return Err(Error::UnknownTrack(id)),
                };
                self.index_remove(id, slab, cell);
                let (slab, cell) = self.index_insert(id, &query);
                let entry = self.tracks.get_mut(&id).expect("checked above");
                if entry.history.len() == HISTORY_LEN {
                    entry.history.pop_front();
                }
                entry.history.push_back(query);
                entry.len += 1;
                entry.slab = slab;
                entry.cell = cell;
                Ok(id)
            }
        }
    }

    /// Drops endpoints last updated before `cutoff`.
    pub fn retire_before(&mut self, cutoff: f64) {
        let last = self.slab_of(cutoff);
        let stale: Vec<(TrackId, i64, (i64, i64))> = self
            .slabs
            .range(..=last)
            .flat_map(|(_, cells)| cells.values().flatten())
            .filter_map(|id| {
                let e = &self.tracks[id];
                (e.endpoint().t < cutoff).then_some((*id, e.slab, e.cell))
            })
            .collect();
        for (id, slab, cell) in stale {
            self.index_remove(id, slab, cell);
            self.tracks.remove(&id);
        }
    }

    /// Turn-rate-aware projection model for a track.
    pub fn model_for(&self, entry: &TrackEntry) -> ProjectionModel {
        if !self.cfg.use_ctrv || entry.history.len() < 2 {
            return ProjectionModel::Cv;
        }
        let n = entry.history.len();
        let (a, b) = (&entry.history[n - 2], &entry.history[n - 1]);
        let dt = b.t - a.t;
        if !(dt > 0.0) || a.v == 0.0 || b.v == 0.0 {
            return ProjectionModel::Cv;
        }
        let omega = (wrap_course(b.psi - a.psi) / dt).clamp(-self.cfg.omega_max, self.cfg.omega_max);
        ProjectionModel::Ctrv { omega }
    }

    /// Ids in slab/cell ranges reachable from `(x, y)` within `radius(slab_start)`.
    fn collect_near(
        &self,
        x: f64,
        y: f64,
        slabs: impl Iterator<Item = (i64, f64)>,
        out: &mut Vec<TrackId>,
    ) {
        let c = self.cfg.cell_size;
        for (slab, radius) in slabs {
            let Some(cells) = self.slabs.get(&slab) else { continue };
            let (x0, x1) = (((x - radius) / c).floor() as i64, ((x + radius) / c).floor() as i64);
            let (y0, y1) = (((y - radius) / c).floor() as i64, ((y + radius) / c).floor() as i64);
            let span = (x1 - x0 + 1).saturating_mul(y1 - y0 + 1);
            if span as usize > cells.len() {
                for (&(cx, cy), ids) in cells {
                    if (x0..=x1).contains(&cx) && (y0..=y1).contains(&cy) {
                        out.extend_from_slice(ids);
                    }
                }
            } else {
                for cx in x0..=x1 {
                    for cy in y0..=y1 {
                        if let Some(ids) = cells.get(&(cx, cy)) {
                            out.extend_from_slice(ids);
                        }
                    }
                }
            }
        }
    }

    /// Count of endpoints with age in `[0, max_age]` at `t` within `r` of `(x, y)`.
    pub fn density(&self, x: f64, y: f64, t: f64, r: f64, max_age: f64, exclude: Option<TrackId>) -> usize {
        let r2 = r * r;
        let counts = |id: &TrackId| {
            if Some(*id) == exclude {
                return false;
            }
            let p = self.tracks[id].endpoint();
            let age = t - p.t;
            age >= 0.0 && age <= max_age && (p.x - x).powi(2) + (p.y - y).powi(2) <= r2
        };
        if !self.cfg.use_index {
            return self.tracks.keys().filter(|id| counts(id)).count();
        }
        let lo = self.slab_of(t - max_age);
        let hi = self.slab_of(t);
        let mut ids = Vec::new();
        self.collect_near(x, y, (lo..=hi).map(|s| (s, r)), &mut ids);
        ids.iter().filter(|id| counts(id)).count()
    }

    fn gate_candidates(&self, query: &Posit, gate: &GateConfig) -> Vec<TrackId> {
        if !self.cfg.use_index {
            return self.tracks.keys().copied().collect();
        }
        let lo = self.slab_of(query.t - gate.max_dt);
        let hi = self.slab_of(query.t);
        let mut ids = Vec::new();
        let slab_len = self.cfg.slab_len;
        let v_max = self.cfg.v_max;
        let radii = (lo..=hi).map(|s| {
            let dt = (query.t - s as f64 * slab_len).clamp(0.0, gate.max_dt);
            let (sp, sc) = gating::covariance(dt, gate);
            (s, v_max * dt + gate.tau * sp.max(sc).sqrt() + 1.0)
        });
        self.collect_near(query.x, query.y, radii, &mut ids);
        ids.extend(self.fast.iter().copied());
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Scores every reachable endpoint against `query` and keeps the best `k`.
pub fn screen(
    query: &Posit,
    store: &EndpointStore,
    k: usize,
    gate: &GateConfig,
    scfg: &ScoreConfig,
) -> ScreenResult {
    let r_loc = scfg.prior.r_loc;
    let mut gated: Vec<CandidateScore> = store
        .gate_candidates(query, gate)
        .into_iter()
        .filter_map(|id| {
            let entry = store.get(id)?;
            let ep = entry.endpoint();
            if ep.t >= query.t {
                return None;
            }
            let model = store.model_for(entry);
            let c = gating::score_link(query, ep, id, model, 0, gate, scfg).ok()?;
            if !c.passed_gates {
                return None;
            }
            let rho = store.density(ep.x, ep.y, query.t, r_loc, gate.max_dt, Some(id));
            gating::score_link(query, ep, id, model, rho, gate, scfg).ok()
        })
        .collect();
    let n_gated = gated.len();
    gated.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.track.cmp(&b.track)));
    gated.truncate(k);

    let query_density = store.density(query.x, query.y, query.t, r_loc, gate.max_dt, None);
    ScreenResult {
        query_id: query.source_id,
        candidates: gated,
        new_vessel_score: gating::score_new(query_density, scfg),
        query_density,
        gated: n_gated,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::utm::UtmZone;

    fn posit(t: f64, x: f64, y: f64, v: f64, psi: f64) -> Posit {
        Posit { t, x, y, v, psi, zone: UtmZone::new(16, true), source_id: t as u64 }
    }

    #[test]
    fn empty_store_yields_new_vessel_only() {
        let store = EndpointStore::new(ScreenConfig::default());
        let r = screen(&posit(10.0, 0.0, 0.0, 3.0, 0.0), &store, 16, &GateConfig::default(), &ScoreConfig::default());
        assert!(r.candidates.is_empty());
        assert_eq!(r.new_vessel_score, 0.0);
    }

    #[test]
    fn fewer_than_k_returns_all_sorted() {
        let mut store = EndpointStore::new(ScreenConfig::default());
        for i in 0..5 {
            store.insert_new(posit(0.0, 100.0 * i as f64, 0.0, 5.0, 0.0));
        }
        let q = posit(600.0, 3050.0, 20.0, 5.0, 0.0);
        let r = screen(&q, &store, 16, &GateConfig::default(), &ScoreConfig::default());
        assert_eq!(r.candidates.len(), 5);
        assert!(r.candidates.windows(2).all(|w| w[0].score <= w[1].score));
        assert!(r.candidates.iter().all(|c| c.passed_gates && c.score.is_finite()));
    }

    #[test]
    fn commit_semantics() {
        let mut store = EndpointStore::new(ScreenConfig::default());
        let a = store.commit(Decision::NewVessel, posit(0.0, 0.0, 0.0, 1.0, 0.0)).unwrap();
        assert_eq!(store.len(), 1);
        let q = posit(60.0, 60.0, 0.0, 1.0, 0.0);
        assert_eq!(store.commit(Decision::Continue(a), q).unwrap(), a);
        assert_eq!(store.len(), 1);
        assert_eq!(store.get(a).unwrap().endpoint(), &q);
        assert_eq!(store.get(a).unwrap().len, 2);
        assert!(matches!(store.commit(Decision::Continue(9), q), Err(Error::UnknownTrack(9))));
    }

    #[test]
    fn retirement_drops_old_endpoints() {
        let mut store = EndpointStore::new(ScreenConfig::default());
        store.insert_new(posit(0.0, 0.0, 0.0, 1.0, 0.0));
        store.insert_new(posit(5000.0, 0.0, 0.0, 1.0, 0.0));
        store.retire_before(1000.0);
        assert_eq!(store.len(), 1);
        assert_eq!(store.tracks_created(), 2);
    }

    #[test]
    fn turn_rate_model_from_history() {
        let mut store = EndpointStore::new(ScreenConfig::default());
        let id = store.insert_new(posit(0.0, 0.0, 0.0, 5.0, 0.0));
        assert_eq!(store.model_for(store.get(id).unwrap()), ProjectionModel::Cv);
        store.commit(Decision::Continue(id), posit(1000.0, 5000.0, 0.0, 5.0, 0.5)).unwrap();
        match store.model_for(store.get(id).unwrap()) {
            ProjectionModel::Ctrv { omega } => assert!((omega - 5e-4).abs() < 1e-15),
            m => panic!("unexpected {m:?}"),
        }
    }
}
