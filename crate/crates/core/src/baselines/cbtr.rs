//! Forward/backward projection distance with an angle gate, then
//! chronological greedy linking to the nearest compatible endpoint.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{angle_gate, TrackId};
use crate::kinematics::{project, Posit, ProjectionModel};
use crate::tracker::{check_sorted, LabeledStream};

use super::stream_from_labels;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbtrConfig {
    /// Maximum angle between projected and actual displacement, radians.
    pub theta: f64,
    /// Pairs further apart in time are never linked, seconds.
    pub window: f64,
    /// Weights of the forward and backward projection errors.
    pub w_forward: f64,
    pub w_backward: f64,
    /// Links farther than this start a new track. Unbounded by default, so a
    /// posit starts a track only when no endpoint is compatible.
    pub max_distance: f64,
}

impl Default for CbtrConfig {
    fn default() -> Self {
        Self { theta: 85f64.to_radians(), window: 6.0 * 3600.0, w_forward: 0.5, w_backward: 0.5, max_distance: f64::INFINITY }
    }
}

impl CbtrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) {
            return Err(Error::Config("cbtr window must be > 0".into()));
        }
        if !(self.theta > 0.0 && self.w_forward >= 0.0 && self.w_backward >= 0.0 && self.max_distance > 0.0) {
            return Err(Error::Config("cbtr theta and weights must be positive".into()));
        }
        Ok(())
    }
}

/// Distance of linking earlier posit `a` to later posit `b`; infinite when
/// they are not strictly ordered in time, outside the window, or turn too hard.
pub fn pair_distance(a: &Posit, b: &Posit, cfg: &CbtrConfig) -> f64 {
    let dt = b.t - a.t;
    if !(dt > 0.0 && dt <= cfg.window) {
        return f64::INFINITY;
    }
    let fwd = project(a, dt, ProjectionModel::Cv);
    let bwd = project(b, -dt, ProjectionModel::Cv);
    let actual = (b.x - a.x, b.y - a.y);
    let projected = (fwd.x - a.x, fwd.y - a.y);
    if !angle_gate(actual, projected, cfg.theta) {
        return f64::INFINITY;
    }
    let d_f = (fwd.x - b.x).hypot(fwd.y - b.y);
    let d_b = (bwd.x - a.x).hypot(bwd.y - a.y);
    cfg.w_forward * d_f + cfg.w_backward * d_b
}

/// Lookup of `D[i, j]` for `i < j` in stream order.
pub trait DistanceSource {
    fn distance(&self, i: usize, j: usize) -> f64;
}

/// Finite entries of the upper-triangular distance matrix, row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDistances {
    pub n: usize,
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl SparseDistances {
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Writes `i j d` lines for every finite entry.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for (j, d) in row {
                writeln!(out, "{i} {j} {d:.6}")?;
            }
        }
        Ok(())
    }
}

impl DistanceSource for SparseDistances {
    fn distance(&self, i: usize, j: usize) -> f64 {
        if i >= j || i >= self.n {
            return f64::INFINITY;
        }
        let row = &self.rows[i];
        match row.binary_search_by_key(&(j as u32), |e| e.0) {
            Ok(k) => row[k].1,
            Err(_) => f64::INFINITY,
        }
    }
}

/// Computes distances on demand; identical values to [`cbtr_distances`]
/// without holding the matrix.
pub struct CbtrLazy<'a> {
    pub posits: &'a [Posit],
    pub cfg: CbtrConfig,
}

impl DistanceSource for CbtrLazy<'_> {
    fn distance(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            return f64::INFINITY;
        }
        pair_distance(&self.posits[i], &self.posits[j], &self.cfg)
    }
}

/// All finite pair distances within the time window. Posits must be sorted.
pub fn cbtr_distances(posits: &[Posit], cfg: &CbtrConfig) -> Result<SparseDistances> {
    cfg.validate()?;
    check_sorted(posits)?;
    let rows = (0..posits.len())
        .into_par_iter()
        .map(|i| {
            let a = &posits[i];
            posits[i + 1..]
                .iter()
                .take_while(|b| b.t - a.t <= cfg.window)
                .enumerate()
                .filter_map(|(o, b)| {
                    let d = pair_distance(a, b, cfg);
                    d.is_finite().then_some(((i + 1 + o) as u32, d))
                })
                .collect()
        })
        .collect();
    Ok(SparseDistances { n: posits.len(), rows })
}

/// Chronological greedy linking: each posit extends the track whose current
/// endpoint has the smallest finite distance to it (ties to the earlier
/// endpoint), otherwise starts a new track.
pub fn cbtr_link<D: DistanceSource>(dist: &D, posits: &[Posit], cfg: &CbtrConfig) -> Result<LabeledStream> {
    check_sorted(posits)?;
    let mut labels: Vec<TrackId> = Vec::with_capacity(posits.len());
    // (endpoint posit index, track) in order of endpoint index
    let mut endpoints: Vec<(usize, TrackId)> = Vec::new();
    let mut n_tracks: TrackId = 0;
    for j in 0..posits.len() {
        let t = posits[j].t;
        endpoints.retain(|(i, _)| t - posits[*i].t <= cfg.window);
        let best = endpoints
            .iter()
            .enumerate()
            .map(|(slot, (i, _))| (dist.distance(*i, j), *i, slot))
            .filter(|(d, _, _)| d.is_finite() && *d <= cfg.max_distance)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let track = match best {
            Some((_, _, slot)) => {
                let (_, track) = endpoints.remove(slot);
                track
            }
            None => {
                n_tracks += 1;
                n_tracks - 1
            }
        };
        endpoints.push((j, track));
        labels.push(track);
    }
    Ok(stream_from_labels(labels, n_tracks as usize))
}
