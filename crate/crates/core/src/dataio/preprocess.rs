//! Turns clean, densely reported tracks into sparse noisy ones: one report
//! per vessel per interval bucket, Gaussian position and time noise, and
//! removal of most stopped-vessel reports.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::RawRecord;

use super::csv_io::quantize;

const METERS_PER_DEG_LAT: f64 = 111_320.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub interval: f64,
    pub position_noise: f64,
    pub time_jitter: f64,
    pub stop_speed_kn: f64,
    pub stop_keep_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            interval: 1800.0,
            position_noise: 30.0,
            time_jitter: 15.0,
            stop_speed_kn: 0.5,
            stop_keep_fraction: 0.05,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval > 0.0) {
            return Err(Error::Config("preprocess interval must be > 0".into()));
        }
        if !(self.position_noise >= 0.0 && self.time_jitter >= 0.0) {
            return Err(Error::Config("noise std must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.stop_keep_fraction) {
            return Err(Error::Config("stop keep fraction must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Applies the pipeline. Records must carry track ids. Output is sorted by
/// time and point ids are renumbered from 0 in that order.
pub fn preprocess(records: &[RawRecord], cfg: &PreprocessConfig, seed: u64) -> Result<Vec<RawRecord>> {
    cfg.validate()?;
    let mut by_vessel: BTreeMap<u64, Vec<&RawRecord>> = BTreeMap::new();
    for r in records {
        let id = r
            .track_id
            .ok_or_else(|| Error::InvalidRecord(format!("point {} has no track id", r.point_id)))?;
        by_vessel.entry(id).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos_noise = Normal::new(0.0, cfg.position_noise).expect("std validated");
    let time_noise = Normal::new(0.0, cfg.time_jitter).expect("std validated");
    let mut out = Vec::new();
    for (_, mut recs) in by_vessel {
        recs.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.point_id.cmp(&b.point_id)));
        // buckets start at the vessel's first report
        let phase = recs[0].time;
        let mut last_bucket = None;
        for r in recs {
            let bucket = ((r.time - phase) / cfg.interval).floor() as i64;
            if last_bucket == Some(bucket) {
                continue;
            }
            last_bucket = Some(bucket);
            // draw every variate for every kept bucket so the stream of random
            // numbers does not depend on the stop filter
            let keep_draw: f64 = rng.random();
            let (dn, de, dt) = (pos_noise.sample(&mut rng), pos_noise.sample(&mut rng), time_noise.sample(&mut rng));
            if r.sog < cfg.stop_speed_kn && keep_draw >= cfg.stop_keep_fraction {
                continue;
            }
            let mut n = r.clone();
            n.lat += dn / METERS_PER_DEG_LAT;
            n.lon += de / (METERS_PER_DEG_LAT * r.lat.to_radians().cos().max(1e-6));
            n.lat = n.lat.clamp(-90.0, 90.0);
            n.lon = ((n.lon + 180.0).rem_euclid(360.0)) - 180.0;
            n.time = (r.time + dt).max(0.0);
            quantize(&mut n);
            out.push(n);
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.point_id.cmp(&b.point_id)));
    for (i, r) in out.iter_mut().enumerate() {
        r.point_id = i as u64;
    }
    Ok(out)
}
