use std::collections::HashSet;
use std::f64::consts::PI;

use ais_relabel::baselines::cbtr::pair_distance;
use ais_relabel::baselines::kf::{CtrvFilter, CvFilter};
use ais_relabel::baselines::{atd_distance, cbtr_distances, cbtr_link, AtdSegmentState, CbtrConfig, KfConfig};
use ais_relabel::dataio::csv_io::{parse_str, quantize};
use ais_relabel::dataio::geojson::{score_geojson, tracks_geojson};
use ais_relabel::dataio::{self, generate_synthetic, preprocess, write_csv, PreprocessConfig, SynthConfig};
use ais_relabel::evaluation::{posit_accuracy, PositKey, ScoreOptions};
use ais_relabel::kinematics::{Posit, RawRecord};
use ais_relabel::screening::{Decision, EndpointStore, ScreenConfig};
use ais_relabel::utm::UtmZone;
use proptest::prelude::*;
use serde_json::Value;

const ZONE: UtmZone = UtmZone { number: 16, north: true };

fn record() -> impl Strategy<Value = RawRecord> {
    (0u64..1_000_000, 0.0f64..86_399.0, 20.0f64..35.0, -95.0f64..-80.0, 0.0f64..40.0, 0.0f64..359.9, 1u64..50).prop_map(
        |(id, time, lat, lon, sog, cog, track)| {
            let mut r = RawRecord { point_id: id, track_id: Some(track), time, lat, lon, sog, cog };
            quantize(&mut r);
            r
        },
    )
}

fn posit_strategy() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-2e4f64..2e4, -2e4f64..2e4, 0.0f64..15.0, -PI..PI)
}

/// Sorted posits with distinct ids from unsorted draws.
fn stream(raw: Vec<(f64, (f64, f64, f64, f64))>) -> Vec<Posit> {
    let mut ps: Vec<Posit> = raw
        .into_iter()
        .enumerate()
        .map(|(i, (t, (x, y, v, psi)))| Posit { t, x, y, v, psi, zone: ZONE, source_id: i as u64 })
        .collect();
    ps.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.source_id.cmp(&b.source_id)));
    ps
}

/// Structural check of a FeatureCollection: members, geometry types and
/// position arrays of finite longitude/latitude pairs.
fn geojson_errors(doc: &Value) -> Vec<String> {
    let mut errs = Vec::new();
    if doc["type"] != "FeatureCollection" {
        errs.push("root type".into());
    }
    let Some(features) = doc["features"].as_array() else {
        errs.push("features is not an array".into());
        return errs;
    };
    let position_ok = |p: &Value| {
        p.as_array().is_some_and(|c| {
            c.len() >= 2
                && c.iter().all(|v| v.as_f64().is_some_and(f64::is_finite))
                && (-180.0..=180.0).contains(&c[0].as_f64().unwrap_or(f64::NAN))
                && (-90.0..=90.0).contains(&c[1].as_f64().unwrap_or(f64::NAN))
        })
    };
    for (i, f) in features.iter().enumerate() {
        if f["type"] != "Feature" {
            errs.push(format!("feature {i}: type"));
        }
        if !(f["properties"].is_object() || f["properties"].is_null()) {
            errs.push(format!("feature {i}: properties"));
        }
        let g = &f["geometry"];
        let coords = &g["coordinates"];
        let ok = match g["type"].as_str() {
            Some("Point") => position_ok(coords),
            Some("LineString") => coords.as_array().is_some_and(|c| c.len() >= 2 && c.iter().all(position_ok)),
            _ => false,
        };
        if !ok {
            errs.push(format!("feature {i}: geometry"));
        }
    }
    errs
}

fn spd(m: &[f64], n: usize) -> bool {
    let mat = nalgebra::DMatrix::from_column_slice(n, n, m);
    (0..n).all(|i| (0..n).all(|j| mat[(i, j)] == mat[(j, i)])) && mat.cholesky().is_some()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(records in prop::collection::vec(record(), 1..40)) {
        let mut seen = HashSet::new();
        let records: Vec<RawRecord> = records.into_iter().filter(|r| seen.insert(r.point_id)).collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &records, None).unwrap();
        let parsed = parse_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert!(parsed.errors.is_empty());
        prop_assert_eq!(parsed.records, records);
    }

    #[test]
    fn zero_noise_preprocess_keeps_a_subset(seed in 0u64..1000, interval in 60.0f64..3600.0) {
        let synth = SynthConfig { vessels: 3, duration: 4.0 * 3600.0, seed, ..SynthConfig::default() };
        let raw = generate_synthetic(&synth).unwrap();
        let cfg = PreprocessConfig { interval, position_noise: 0.0, time_jitter: 0.0, ..PreprocessConfig::default() };
        let out = preprocess(&raw, &cfg, seed).unwrap();
        prop_assert!(out.len() <= raw.len());
        let key = |r: &RawRecord| (r.track_id, r.time.to_bits(), (r.lat * 1e6).round() as i64, (r.lon * 1e6).round() as i64);
        let input: HashSet<_> = raw.iter().map(key).collect();
        for r in &out {
            prop_assert!(input.contains(&key(r)), "record {:?} not in input", r);
        }
    }

    #[test]
    fn generated_records_validate(seed in 0u64..10_000, vessels in 1usize..6) {
        let synth = SynthConfig { vessels, duration: 6.0 * 3600.0, seed, ..SynthConfig::default() };
        let raw = generate_synthetic(&synth).unwrap();
        prop_assert!(!raw.is_empty());
        for r in &raw {
            prop_assert!(r.validate().is_ok(), "{:?}", r);
        }
        let ids: HashSet<u64> = raw.iter().map(|r| r.point_id).collect();
        prop_assert_eq!(ids.len(), raw.len());
    }

    #[test]
    fn cbtr_greedy_matches_replay(raw in prop::collection::vec((0.0f64..7200.0, posit_strategy()), 10)) {
        let ps = stream(raw);
        let cfg = CbtrConfig::default();
        let out = cbtr_link(&cbtr_distances(&ps, &cfg).unwrap(), &ps, &cfg).unwrap();
        // replay: tracks as member lists, endpoint = last member
        let mut tracks: Vec<Vec<usize>> = Vec::new();
        let mut labels = Vec::new();
        for j in 0..ps.len() {
            let mut best: Option<(f64, usize, usize)> = None;
            for (ti, members) in tracks.iter().enumerate() {
                let i = *members.last().unwrap();
                if ps[j].t - ps[i].t > cfg.window {
                    continue;
                }
                let d = pair_distance(&ps[i], &ps[j], &cfg);
                if d.is_finite() && d <= cfg.max_distance && best.is_none_or(|(bd, bi, _)| d < bd || (d == bd && i < bi)) {
                    best = Some((d, i, ti));
                }
            }
            let ti = match best {
                Some((_, _, ti)) => ti,
                None => {
                    tracks.push(Vec::new());
                    tracks.len() - 1
                }
            };
            tracks[ti].push(j);
            labels.push(ti as u32);
        }
        prop_assert_eq!(out.labels, labels);
    }

    #[test]
    fn atd_distance_is_non_negative(a in posit_strategy(), b in posit_strategy(), dt in 1.0f64..20_000.0, prev in prop::option::of((-PI..PI, 1.0f64..7200.0))) {
        let p1 = Posit { t: 0.0, x: a.0, y: a.1, v: a.2, psi: a.3, zone: ZONE, source_id: 0 };
        let p2 = Posit { t: dt, x: b.0, y: b.1, v: b.2, psi: b.3, zone: ZONE, source_id: 1 };
        let d = atd_distance(&p1, &p2, &AtdSegmentState { prev }).unwrap();
        prop_assert!(d.value >= 0.0 && d.value.is_finite());
        prop_assert!(d.terms.iter().all(|t| *t >= 0.0));
        prop_assert!(d.fit.m >= (p2.v - p1.v).abs() / dt * (1.0 - 1e-12));
    }

    #[test]
    fn store_commit_counts(decisions in prop::collection::vec(prop::option::of(0usize..64), 1..200)) {
        let mut store = EndpointStore::new(ScreenConfig::default());
        let mut created = 0;
        for (n, d) in decisions.iter().enumerate() {
            let q = Posit { t: n as f64 * 10.0, x: n as f64, y: 0.0, v: 3.0, psi: 0.0, zone: ZONE, source_id: n as u64 };
            let decision = match d {
                Some(i) if !store.is_empty() => Decision::Continue((*i % store.len()) as u32),
                _ => Decision::NewVessel,
            };
            if decision == Decision::NewVessel {
                created += 1;
            }
            let id = store.commit(decision, q).unwrap();
            prop_assert_eq!(store.get(id).unwrap().endpoint(), &q);
        }
        prop_assert_eq!(store.len(), created);
        prop_assert_eq!(store.tracks_created() as usize, created);
        prop_assert_eq!(store.iter().map(|(_, e)| e.len).sum::<usize>(), decisions.len());
        prop_assert!(store.commit(Decision::Continue(created as u32), decisions_posit()).is_err());
    }

    #[test]
    fn geojson_documents_are_well_formed(raw in prop::collection::vec((0.0f64..7200.0, posit_strategy()), 1..60), tracks in 1u64..6) {
        let mut ps = stream(raw);
        for p in &mut ps {
            p.x += 500_000.0;
            p.y += 3_200_000.0;
        }
        let labels: Vec<u64> = ps.iter().map(|p| p.source_id % tracks).collect();
        let doc = tracks_geojson(&ps, &labels);
        prop_assert_eq!(geojson_errors(&doc), Vec::<String>::new());
        prop_assert_eq!(doc["features"].as_array().unwrap().len() as u64, tracks.min(ps.len() as u64));

        let keys: Vec<PositKey> = ps.iter().map(PositKey::from).collect();
        let score = posit_accuracy(&keys, &labels, &labels, ScoreOptions::default()).unwrap();
        let doc = score_geojson(&ps, &score);
        prop_assert_eq!(geojson_errors(&doc), Vec::<String>::new());
        let text = serde_json::to_string(&doc).unwrap();
        prop_assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), doc);
    }
}

fn decisions_posit() -> Posit {
    Posit { t: 1e9, x: 0.0, y: 0.0, v: 0.0, psi: 0.0, zone: ZONE, source_id: u64::MAX }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn kalman_covariances_stay_positive_definite(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cfg = KfConfig::default();
        let mut truth = Posit { t: 0.0, x: 0.0, y: 0.0, v: 6.0, psi: 0.3, zone: ZONE, source_id: 0 };
        let mut cv = CvFilter::new(&truth, &cfg);
        let mut ctrv = CtrvFilter::new(&truth, &cfg);
        for i in 1..=10_000u64 {
            let dt = rng.random_range(1.0..1800.0);
            truth.psi = ais_relabel::kinematics::wrap_course(truth.psi + rng.random_range(-0.2..0.2));
            truth.v = (truth.v + rng.random_range(-0.5..0.5)).clamp(0.0, 15.0);
            truth.x += truth.v * dt * truth.psi.cos();
            truth.y += truth.v * dt * truth.psi.sin();
            truth.t += dt;
            let mut meas = truth;
            meas.x += rng.random_range(-30.0..30.0);
            meas.y += rng.random_range(-30.0..30.0);
            meas.source_id = i;

            cv = cv.predicted(meas.t, &cfg);
            prop_assert!(spd(cv.p.as_slice(), 4), "cv predict {}", i);
            if !cv.update(&meas, &cfg) {
                cv = CvFilter::new(&meas, &cfg);
            }
            prop_assert!(spd(cv.p.as_slice(), 4), "cv update {}", i);

            ctrv = ctrv.predicted(meas.t, &cfg);
            prop_assert!(spd(ctrv.p.as_slice(), 5), "ctrv predict {}", i);
            if !ctrv.update(&meas, &cfg) {
                ctrv = CtrvFilter::new(&meas, &cfg);
            }
            prop_assert!(spd(ctrv.p.as_slice(), 5), "ctrv update {}", i);
        }
    }
}

#[test]
fn to_posits_orders_by_time_then_id() {
    let recs = vec![
        RawRecord { point_id: 5, track_id: None, time: 10.0, lat: 28.0, lon: -90.0, sog: 5.0, cog: 10.0 },
        RawRecord { point_id: 2, track_id: None, time: 10.0, lat: 28.0, lon: -90.0, sog: 5.0, cog: 10.0 },
        RawRecord { point_id: 9, track_id: None, time: 0.0, lat: 28.0, lon: -90.0, sog: 5.0, cog: 10.0 },
    ];
    let (ps, order) = dataio::to_posits(&recs, dataio::anchor_zone(&recs)).unwrap();
    assert_eq!(ps.iter().map(|p| p.source_id).collect::<Vec<_>>(), vec![9, 2, 5]);
    assert_eq!(order, vec![2, 1, 0]);
}
