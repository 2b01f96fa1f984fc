//! Posit accuracy, classification reports, density strata and the simulated
//! classifier-accuracy curve.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Posit;
use crate::tracker::{self, Decider, PipelineConfig, TruthIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositKey {
    pub point_id: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl From<&Posit> for PositKey {
    fn from(p: &Posit) -> Self {
        Self { point_id: p.source_id, t: p.t, x: p.x, y: p.y }
    }
}

/// Predecessor and successor point ids of every posit under a labeling.
/// Within a track posits are ordered by `(t, point_id)`.
pub fn neighbors<L: Eq + Hash + Copy>(keys: &[PositKey], labels: &[L]) -> Vec<(Option<u64>, Option<u64>)> {
    let mut groups: HashMap<L, Vec<usize>> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(*l).or_default().push(i);
    }
    let mut out = vec![(None, None); keys.len()];
    for members in groups.values_mut() {
        members.sort_by(|a, b| keys[*a].t.total_cmp(&keys[*b].t).then(keys[*a].point_id.cmp(&keys[*b].point_id)));
        for w in members.windows(2) {
            out[w[1]].0 = Some(keys[w[0]].point_id);
            out[w[0]].1 = Some(keys[w[1]].point_id);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Drop the points for a missing true neighbour instead of awarding
    /// them when the prediction also has none.
    pub exclude_endpoints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositScore {
    /// `None` when the point is not available under the options.
    pub predecessor_ok: Vec<Option<bool>>,
    pub successor_ok: Vec<Option<bool>>,
    pub earned: usize,
    pub available: usize,
    pub accuracy: f64,
}

impl PositScore {
    pub fn posit_points(&self, i: usize) -> (usize, usize) {
        let mut earned = 0;
        let mut avail = 0;
        for ok in [self.predecessor_ok[i], self.successor_ok[i]].into_iter().flatten() {
            avail += 1;
            earned += usize::from(ok);
        }
        (earned, avail)
    }
}

/// One point for the right predecessor and one for the right successor of
/// every posit; "none" matches "none" at track ends unless excluded.
pub fn posit_accuracy<A: Eq + Hash + Copy, B: Eq + Hash + Copy>(
    keys: &[PositKey],
    predicted: &[A],
    truth: &[B],
    opts: ScoreOptions,
) -> Result<PositScore> {
    if predicted.len() != keys.len() || truth.len() != keys.len() {
        return Err(Error::PositMismatch(format!(
            "{} keys, {} predicted labels, {} true labels",
            keys.len(),
            predicted.len(),
            truth.len()
        )));
    }
    let pn = neighbors(keys, predicted);
    let tn = neighbors(keys, truth);
    let mut predecessor_ok = Vec::with_capacity(keys.len());
    let mut successor_ok = Vec::with_capacity(keys.len());
    let (mut earned, mut available) = (0, 0);
    for (p, t) in pn.iter().zip(&tn) {
        for (pv, tv, out) in [(p.0, t.0, &mut predecessor_ok), (p.1, t.1, &mut successor_ok)] {
            if opts.exclude_endpoints && tv.is_none() {
                out.push(None);
            } else {
                let ok = pv == tv;
                available += 1;
                earned += usize::from(ok);
                out.push(Some(ok));
            }
        }
    }
    let accuracy = if available == 0 { 1.0 } else { earned as f64 / available as f64 };
    Ok(PositScore { predecessor_ok, successor_ok, earned, available, accuracy })
}

/// Class names: `1..=k` for candidate slots, `New` for slot `k`.
pub fn class_name(class: usize, k: usize) -> String {
    if class == k {
        "New".to_string()
    } else {
        (class + 1).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: usize,
    pub name: String,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub rows: Vec<ClassRow>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl ClassReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>9} {:>7} {:>6} {:>8}", "Class", "Precision", "Recall", "F1", "Support");
        for r in &self.rows {
            let _ = writeln!(s, "{:<8} {:>9.2} {:>7.2} {:>6.2} {:>8}", r.name, r.precision, r.recall, r.f1, r.support);
        }
        let _ = writeln!(
            s,
            "{:<8} {:>9.2} {:>7.2} {:>6.2}",
            "Average", self.macro_precision, self.macro_recall, self.macro_f1
        );
        let _ = writeln!(s, "Overall classification accuracy is {:.4}.", self.accuracy);
        s
    }
}

/// Per-class precision/recall/F1 over classes `0..=k`. Classes absent from
/// both truth and predictions are left out of the table and the macro average;
/// an undefined ratio counts as 0.
pub fn classification_report(predicted: &[usize], truth: &[usize], k: usize) -> ClassReport {
    let n = k + 1;
    let mut tp = vec![0usize; n];
    let mut pred_count = vec![0usize; n];
    let mut true_count = vec![0usize; n];
    for (p, t) in predicted.iter().zip(truth) {
        pred_count[*p] += 1;
        true_count[*t] += 1;
        if p == t {
            tp[*p] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let rows: Vec<ClassRow> = (0..n)
        .filter(|c| pred_count[*c] + true_count[*c] > 0)
        .map(|c| {
            let precision = ratio(tp[c], pred_count[c]);
            let recall = ratio(tp[c], true_count[c]);
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassRow { class: c, name: class_name(c, k), support: true_count[c], precision, recall, f1 }
        })
        .collect();
    let m = rows.len().max(1) as f64;
    ClassReport {
        macro_precision: rows.iter().map(|r| r.precision).sum::<f64>() / m,
        macro_recall: rows.iter().map(|r| r.recall).sum::<f64>() / m,
        macro_f1: rows.iter().map(|r| r.f1).sum::<f64>() / m,
        accuracy: ratio(tp.iter().sum(), predicted.len().min(truth.len())),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Open,
    Coastal,
    Port,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Open, Stratum::Coastal, Stratum::Port];

    pub fn name(&self) -> &'static str {
        match self {
            Stratum::Open => "open",
            Stratum::Coastal => "coastal",
            Stratum::Port => "port",
        }
    }
}

/// Density-based region model: neighbours are other posits within `radius`
/// metres and `window` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionModel {
    pub radius: f64,
    pub window: f64,
    /// At or above this many neighbours a posit is in the port stratum.
    pub port_min: usize,
    /// At or above this many (and below `port_min`) it is coastal.
    pub coastal_min: usize,
}

impl Default for RegionModel {
    fn default() -> Self {
        Self { radius: 5000.0, window: 3600.0, port_min: 8, coastal_min: 2 }
    }
}

pub fn local_neighbor_counts(keys: &[PositKey], radius: f64, window: f64) -> Vec<usize> {
    let cell = |x: f64, y: f64| ((x / radius).floor() as i64, (y / radius).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|a, b| keys[*a].t.total_cmp(&keys[*b].t));
    for i in &order {
        grid.entry(cell(keys[*i].x, keys[*i].y)).or_default().push(*i);
    }
    let r2 = radius * radius;
    keys.par_iter()
        .enumerate()
        .map(|(i, k)| {
            let (cx, cy) = cell(k.x, k.y);
            let mut n = 0;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(ids) = grid.get(&(cx + dx, cy + dy)) else { continue };
                    let start = ids.partition_point(|j| keys[*j].t < k.t - window);
                    for j in &ids[start..] {
                        let o = &keys[*j];
                        if o.t > k.t + window {
                            break;
                        }
                        if *j != i && (o.x - k.x).powi(2) + (o.y - k.y).powi(2) <= r2 {
                            n += 1;
                        }
                    }
                }
            }
            n
        })
        .collect()
}

pub fn assign_strata(keys: &[PositKey], model: &RegionModel) -> Vec<Stratum> {
    local_neighbor_counts(keys, model.radius, model.window)
        .into_iter()
        .map(|n| {
            if n >= model.port_min {
                Stratum::Port
            } else if n >= model.coastal_min {
                Stratum::Coastal
            } else {
                Stratum::Open
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumScore {
    pub stratum: Stratum,
    pub posits: usize,
    pub earned: usize,
    pub available: usize,
    pub accuracy: f64,
}

/// Splits a score by stratum; strata without posits are omitted.
pub fn stratify(score: &PositScore, strata: &[Stratum]) -> Vec<StratumScore> {
    Stratum::ALL
        .iter()
        .filter_map(|s| {
            let mut posits = 0;
            let (mut earned, mut available) = (0, 0);
            for (i, st) in strata.iter().enumerate() {
                if st == s {
                    posits += 1;
                    let (e, a) = score.posit_points(i);
                    earned += e;
                    available += a;
                }
            }
            (posits > 0).then(|| StratumScore {
                stratum: *s,
                posits,
                earned,
                available,
                accuracy: if available == 0 { 1.0 } else { earned as f64 / available as f64 },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub p: f64,
    pub per_seed: Vec<f64>,
    pub mean: f64,
}

/// Replays the tracker with a decider that takes the true option with
/// probability `p` and a uniformly drawn wrong option otherwise.
pub fn simulate_posit_curve(
    posits: &[Posit],
    truth: &[u64],
    accuracies: &[f64],
    seeds: &[u64],
    cfg: &PipelineConfig,
) -> Result<Vec<CurvePoint>> {
    let index = TruthIndex::new(posits, truth);
    let keys: Vec<PositKey> = posits.iter().map(PositKey::from).collect();
    accuracies
        .iter()
        .map(|&p| {
            let per_seed = seeds
                .par_iter()
                .map(|&seed| {
                    let out = tracker::run(posits, &Decider::Simulated { truth: &index, p, seed }, cfg)?;
                    Ok(posit_accuracy(&keys, &out.labels, truth, ScoreOptions::default())?.accuracy)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = per_seed.iter().sum::<f64>() / per_seed.len().max(1) as f64;
            Ok(CurvePoint { p, per_seed, mean })
        })
        .collect()
}
