//! Comparison methods run on the same preprocessed stream as the hybrid
//! tracker: CBTR greedy linking, the challenge baseline distance, and Kalman
//! filter nearest-neighbour trackers.

pub mod atd;
pub mod cbtr;
pub mod kf;

pub use atd::{atd_distance, atd_link, AtdConfig, AtdFit, AtdSegmentState};
pub use cbtr::{cbtr_distances, cbtr_link, CbtrConfig, CbtrLazy, DistanceSource, SparseDistances};
pub use kf::{kf_nn_track, KfConfig, KfModel, KfReport};

use crate::gating::TrackId;
use crate::tracker::LabeledStream;

/// Labels from a per-posit track assignment, with ids already dense.
pub(crate) fn stream_from_labels(labels: Vec<TrackId>, n_tracks: usize) -> LabeledStream {
    LabeledStream { labels, audit: Vec::new(), n_tracks }
}
