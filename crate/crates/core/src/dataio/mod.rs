//! Input/output formats, the corruption pipeline applied to clean tracks,
//! and the synthetic traffic generator.

pub mod csv_io;
pub mod geojson;
pub mod preprocess;
pub mod synth;

pub use csv_io::{parse_csv, parse_files, write_csv, ParseReport, RowError};
pub use preprocess::{preprocess, PreprocessConfig};
pub use synth::{generate_synthetic, SynthConfig};

use crate::error::Result;
use crate::kinematics::{Posit, RawRecord};
use crate::utm::UtmZone;

/// Anchor zone for a run: the standard zone of the mean longitude and latitude.
pub fn anchor_zone(records: &[RawRecord]) -> UtmZone {
    if records.is_empty() {
        return UtmZone::new(31, true);
    }
    let n = records.len() as f64;
    let lat = records.iter().map(|r| r.lat).sum::<f64>() / n;
    let lon = records.iter().map(|r| r.lon).sum::<f64>() / n;
    UtmZone::for_location(lat, lon)
}

/// Converts records into one metric frame, sorted by `(t, point_id)`.
/// Returns posits and the record index each came from.
pub fn to_posits(records: &[RawRecord], zone: UtmZone) -> Result<(Vec<Posit>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.sort_by(|a, b| {
        records[*a].time.total_cmp(&records[*b].time).then(records[*a].point_id.cmp(&records[*b].point_id))
    });
    let posits = idx.iter().map(|i| Posit::from_record(&records[*i], zone)).collect::<Result<Vec<_>>>()?;
    Ok((posits, idx))
}
