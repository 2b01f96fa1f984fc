//! The online relabeling loop: screen each posit against the active
//! endpoints, let a decider pick an ancestor or New Vessel, commit, repeat.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::evaluation::{self, PositKey, ScoreOptions};
use crate::features::{self, RawSlot};
use crate::gating::{GateConfig, ScoreConfig, TrackId};
use crate::kinematics::Posit;
use crate::screening::{screen, Decision, EndpointStore, ScreenConfig, ScreenResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub gate: GateConfig,
    pub score: ScoreConfig,
    pub screen: ScreenConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.score.validate()?;
        self.screen.validate()
    }

    pub fn k(&self) -> usize {
        self.screen.k
    }
}

/// True predecessor of each posit, by point id.
#[derive(Debug, Clone)]
pub struct TruthIndex {
    pub predecessor: Vec<Option<u64>>,
}

impl TruthIndex {
    pub fn new(posits: &[Posit], truth: &[u64]) -> Self {
        let keys: Vec<PositKey> = posits.iter().map(PositKey::from).collect();
        let predecessor = evaluation::neighbors(&keys, truth).into_iter().map(|(p, _)| p).collect();
        Self { predecessor }
    }

    /// Candidate index holding the true predecessor, if screened.
    pub fn slot_in(&self, i: usize, result: &ScreenResult) -> Option<usize> {
        let pred = self.predecessor[i]?;
        result.candidates.iter().position(|c| c.endpoint.source_id == pred)
    }
}

pub enum Decider<'a> {
    Classifier(&'a Classifier),
    /// Picks the true ancestor whenever screened, otherwise New Vessel.
    Oracle(&'a TruthIndex),
    /// Lowest score among candidates and New Vessel.
    Greedy,
    /// Oracle choice with probability `p`, else a uniformly drawn other option.
    Simulated { truth: &'a TruthIndex, p: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCandidate {
    pub track: TrackId,
    pub endpoint_point_id: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub point_id: u64,
    pub t: f64,
    pub candidates: Vec<AuditCandidate>,
    pub new_vessel_score: f64,
    /// Candidate index, or `None` for New Vessel.
    pub chosen: Option<usize>,
    pub track: TrackId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_screened: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledStream {
    /// Track id per input posit; ids are dense in creation order.
    pub labels: Vec<TrackId>,
    pub audit: Vec<DecisionRecord>,
    pub n_tracks: usize,
}

pub fn check_sorted(posits: &[Posit]) -> Result<()> {
    match posits
        .windows(2)
        .position(|w| w[1].t < w[0].t || (w[1].t == w[0].t && w[1].source_id <= w[0].source_id))
    {
        Some(i) => Err(Error::Unsorted(i + 1)),
        None => Ok(()),
    }
}

/// Sorts posits by `(t, point_id)`, the processing order of [`run`].
pub fn sort_posits(posits: &mut [Posit]) {
    posits.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.source_id.cmp(&b.source_id)));
}

pub fn run(posits: &[Posit], decider: &Decider<'_>, cfg: &PipelineConfig) -> Result<LabeledStream> {
    cfg.validate()?;
    check_sorted(posits)?;
    let k = cfg.k();
    if let Decider::Classifier(c) = decider {
        if c.k() != k {
            return Err(Error::Config(format!("model expects k = {}, pipeline uses k = {k}", c.k())));
        }
    }
    let mut rng = match decider {
        Decider::Simulated { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
        _ => None,
    };
    let truth = match decider {
        Decider::Oracle(t) | Decider::Simulated { truth: t, .. } => Some(*t),
        _ => None,
    };

    let mut store = EndpointStore::new(cfg.screen);
    let mut labels = Vec::with_capacity(posits.len());
    let mut audit = Vec::with_capacity(posits.len());
    for (i, q) in posits.iter().enumerate() {
        store.retire_before(q.t - cfg.gate.max_dt);
        let result = screen(q, &store, k, &cfg.gate, &cfg.score);
        let true_choice = truth.map(|t| t.slot_in(i, &result));
        let mut probabilities = None;
        let chosen = match decider {
            Decider::Greedy => result
                .candidates
                .first()
                .filter(|c| c.score < result.new_vessel_score)
                .map(|_| 0),
            Decider::Oracle(_) => true_choice.flatten(),
            Decider::Simulated { p, .. } => {
                let rng = rng.as_mut().expect("seeded above");
                let u: f64 = rng.random();
                let r: u64 = rng.random();
                let right = true_choice.flatten();
                let wrong: Vec<Option<usize>> = (0..result.candidates.len())
                    .map(Some)
                    .chain(std::iter::once(None))
                    .filter(|o| *o != right)
                    .collect();
                if u < *p || wrong.is_empty() {
                    right
                } else {
                    wrong[(r % wrong.len() as u64) as usize]
                }
            }
            Decider::Classifier(c) => {
                if result.candidates.is_empty() {
                    None
                } else {
                    let input = features::encode_query(q, &result, &store, &c.schema);
                    let a = c.classify(&input)?;
                    probabilities = Some(a.probabilities);
                    (!a.is_new).then_some(a.slot)
                }
            }
        };
        let decision = match chosen {
            Some(s) => Decision::Continue(result.candidates[s].track),
            None => Decision::NewVessel,
        };
        let track = store.commit(decision, *q)?;
        labels.push(track);
        let truth_screened = truth.and_then(|t| t.predecessor[i].map(|_| true_choice.flatten().is_some()));
        audit.push(DecisionRecord {
            point_id: q.source_id,
            t: q.t,
            candidates: result
                .candidates
                .iter()
                .map(|c| AuditCandidate { track: c.track, endpoint_point_id: c.endpoint.source_id, score: c.score })
                .collect(),
            new_vessel_score: result.new_vessel_score,
            chosen,
            track,
            probabilities,
            truth_screened,
        });
    }
    Ok(LabeledStream { labels, audit, n_tracks: store.tracks_created() as usize })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeilingReport {
    pub k: usize,
    pub accuracy: f64,
    /// Posits with a true predecessor.
    pub linked: usize,
    /// Of those, how many had it among the screened candidates.
    pub recalled: usize,
    pub recall: f64,
}

/// Posit accuracy of the oracle decider: the ceiling reachable by any
/// decider over this screen.
pub fn oracle_ceiling(posits: &[Posit], truth: &[u64], cfg: &PipelineConfig) -> Result<(CeilingReport, LabeledStream)> {
    let index = TruthIndex::new(posits, truth);
    let out = run(posits, &Decider::Oracle(&index), cfg)?;
    let keys: Vec<PositKey> = posits.iter().map(PositKey::from).collect();
    let score = evaluation::posit_accuracy(&keys, &out.labels, truth, ScoreOptions::default())?;
    let linked = out.audit.iter().filter(|r| r.truth_screened.is_some()).count();
    let recalled = out.audit.iter().filter(|r| r.truth_screened == Some(true)).count();
    Ok((
        CeilingReport {
            k: cfg.k(),
            accuracy: score.accuracy,
            linked,
            recalled,
            recall: if linked == 0 { 1.0 } else { recalled as f64 / linked as f64 },
        },
        out,
    ))
}

/// One classifier training row before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawQuery {
    pub point_id: u64,
    /// Candidate slots in screen order followed by the New Vessel slot.
    pub slots: Vec<RawSlot>,
    /// Candidate index of the true ancestor, or `k` for New Vessel.
    pub label: usize,
}

/// Replays a labeled stream committing the true decisions and records the
/// screen of every posit that had at least one candidate.
pub fn teacher_forced(posits: &[Posit], truth: &[u64], cfg: &PipelineConfig) -> Result<Vec<RawQuery>> {
    cfg.validate()?;
    check_sorted(posits)?;
    let index = TruthIndex::new(posits, truth);
    let k = cfg.k();
    let mut store = EndpointStore::new(cfg.screen);
    let mut track_of: HashMap<u64, TrackId> = HashMap::new();
    let mut out = Vec::new();
    for (i, q) in posits.iter().enumerate() {
        store.retire_before(q.t - cfg.gate.max_dt);
        let result = screen(q, &store, k, &cfg.gate, &cfg.score);
        if !result.candidates.is_empty() {
            out.push(RawQuery {
                point_id: q.source_id,
                slots: features::raw_slots(q, &result, &store),
                label: index.slot_in(i, &result).unwrap_or(k),
            });
        }
        let decision = match track_of.get(&truth[i]) {
            Some(id) if store.get(*id).is_some() => Decision::Continue(*id),
            _ => Decision::NewVessel,
        };
        let id = store.commit(decision, *q)?;
        track_of.insert(truth[i], id);
    }
    Ok(out)
}
