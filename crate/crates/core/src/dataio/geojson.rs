//! GeoJSON (RFC 7946) maps: tracks colored by identity, or posits colored by
//! how many of their two links were right.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use crate::evaluation::PositScore;
use crate::kinematics::Posit;
use crate::utm::from_utm;

pub const COLOR_BOTH: &str = "#fde725";
pub const COLOR_ONE: &str = "#21918c";
pub const COLOR_NEITHER: &str = "#440154";
pub const COLOR_UNSCORED: &str = "#9e9e9e";

fn lon_lat(p: &Posit) -> [f64; 2] {
    let (lat, lon) = from_utm(p.x, p.y, p.zone);
    [(lon * 1e6).round() / 1e6, (lat * 1e6).round() / 1e6]
}

/// Stable pseudo-random color for a track id.
pub fn identity_color(id: u64) -> String {
    let mut h = id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= h >> 29;
    let hue = (h % 360) as f64;
    let (s, l) = (0.75, 0.5);
    let c = (1.0 - (2.0 * l - 1.0f64).abs()) * s;
    let x = c * (1.0 - ((hue / 60.0) % 2.0 - 1.0).abs());
    let (r, g, b) = match (hue / 60.0) as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to8 = |v: f64| ((v + m) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", to8(r), to8(g), to8(b))
}

/// One line string per track, posits in stream order. A single-posit track
/// repeats its position so the line string stays valid.
pub fn tracks_geojson(posits: &[Posit], labels: &[u64]) -> Value {
    let mut tracks: BTreeMap<u64, Vec<[f64; 2]>> = BTreeMap::new();
    for (p, l) in posits.iter().zip(labels) {
        tracks.entry(*l).or_default().push(lon_lat(p));
    }
    let features: Vec<Value> = tracks
        .into_iter()
        .map(|(id, mut coords)| {
            if coords.len() == 1 {
                coords.push(coords[0]);
            }
            json!({
                "type": "Feature",
                "properties": {"track_id": id, "posits": coords.len(), "stroke": identity_color(id)},
                "geometry": {"type": "LineString", "coordinates": coords},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// One point per posit colored by its earned points out of those available.
pub fn score_geojson(posits: &[Posit], score: &PositScore) -> Value {
    let features: Vec<Value> = posits
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (earned, available) = score.posit_points(i);
            let color = match (earned, available) {
                (_, 0) => COLOR_UNSCORED,
                (e, a) if e == a => COLOR_BOTH,
                (0, _) => COLOR_NEITHER,
                _ => COLOR_ONE,
            };
            json!({
                "type": "Feature",
                "properties": {"point_id": p.source_id, "earned": earned, "available": available, "marker-color": color},
                "geometry": {"type": "Point", "coordinates": lon_lat(p)},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}
