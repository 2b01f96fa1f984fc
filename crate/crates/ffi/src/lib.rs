//! C interface to the relabeling engine.
//!
//! Every fallible function returns an [`AisStatus`]. On failure a message is
//! stored per thread and can be copied out with [`ais_last_error`]. Engines are
//! opaque handles created by [`ais_engine_new`] and released with
//! [`ais_engine_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ais_relabel::classifier::Classifier;
use ais_relabel::config::RunConfig;
use ais_relabel::evaluation::ScoreOptions;
use ais_relabel::kinematics::{wrap_course, RawRecord};
use ais_relabel::workflow::{self, Method, Stream};
use ais_relabel::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AisStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Model = 4,
    Data = 5,
    Failed = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AisMethod {
    Hybrid = 0,
    Greedy = 1,
    Oracle = 2,
    Cbtr = 3,
    Atd = 4,
    KfCv = 5,
    KfCtrv = 6,
}

impl From<AisMethod> for Method {
    fn from(m: AisMethod) -> Self {
        match m {
            AisMethod::Hybrid => Method::Hybrid,
            AisMethod::Greedy => Method::Greedy,
            AisMethod::Oracle => Method::Oracle,
            AisMethod::Cbtr => Method::Cbtr,
            AisMethod::Atd => Method::Atd,
            AisMethod::KfCv => Method::KfCv,
            AisMethod::KfCtrv => Method::KfCtrv,
        }
    }
}

/// One AIS report. `time` is seconds since the stream epoch, `sog` knots,
/// `cog` degrees clockwise from north.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AisRecord {
    pub point_id: u64,
    pub track_id: u64,
    /// Whether `track_id` holds a ground-truth identity.
    pub has_track_id: bool,
    pub time: f64,
    pub lat: f64,
    pub lon: f64,
    pub sog: f64,
    pub cog: f64,
}

impl From<&AisRecord> for RawRecord {
    fn from(r: &AisRecord) -> Self {
        RawRecord {
            point_id: r.point_id,
            track_id: r.has_track_id.then_some(r.track_id),
            time: r.time,
            lat: r.lat,
            lon: r.lon,
            sog: r.sog,
            cog: r.cog,
        }
    }
}

/// Run configuration plus an optional trained classifier.
pub struct AisEngine {
    config: RunConfig,
    classifier: Option<Classifier>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(AisStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => AisStatus::Io,
            Error::ModelFormat { .. } => AisStatus::Model,
            Error::Config(_) => AisStatus::InvalidArgument,
            Error::InvalidRecord(_)
            | Error::InvalidPair(_)
            | Error::Unsorted(_)
            | Error::OutsideUtmBand(_)
            | Error::PositMismatch(_) => AisStatus::Data,
            _ => AisStatus::Failed,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, records any error or panic and converts it into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AisStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AisStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            AisStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(AisStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(AisStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn records_arg(records: *const AisRecord, n: usize) -> Result<Vec<RawRecord>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if records.is_null() {
        return Err(null("records"));
    }
    Ok(std::slice::from_raw_parts(records, n).iter().map(RawRecord::from).collect())
}

/// Creates an engine. `config_toml` may be null for the defaults.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be a
/// valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ais_engine_new(config_toml: *const c_char, out: *mut *mut AisEngine) -> AisStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = if config_toml.is_null() {
            RunConfig::default()
        } else {
            RunConfig::from_toml(str_arg(config_toml, "config_toml")?)?
        };
        *out = Box::into_raw(Box::new(AisEngine { config, classifier: None }));
        Ok(())
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must be null or a handle from [`ais_engine_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ais_engine_free(engine: *mut AisEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Loads a trained model file into the engine, replacing any previous one.
///
/// # Safety
/// `engine` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ais_engine_load_model(engine: *mut AisEngine, path: *const c_char) -> AisStatus {
    guard(|| {
        let engine = engine.as_mut().ok_or_else(|| null("engine"))?;
        let path = str_arg(path, "path")?;
        engine.classifier = Some(Classifier::load(Path::new(path))?);
        Ok(())
    })
}

/// Number of candidate slots the engine screens, or 0 for a null handle.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ais_engine_k(engine: *const AisEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.config.screen.k)
}

/// Relabels `n` records and writes one track id per record, in input order,
/// to `out_labels`. The hybrid method needs a loaded model; the oracle needs
/// ground truth on every record.
///
/// # Safety
/// `engine` must be a live handle; `records` and `out_labels` must each
/// point to `n` elements.
#[no_mangle]
pub unsafe extern "C" fn ais_engine_relabel(
    engine: *const AisEngine,
    records: *const AisRecord,
    n: usize,
    method: AisMethod,
    out_labels: *mut u64,
) -> AisStatus {
    guard(|| {
        let engine = engine.as_ref().ok_or_else(|| null("engine"))?;
        let recs = records_arg(records, n)?;
        if n > 0 && out_labels.is_null() {
            return Err(null("out_labels"));
        }
        let stream = Stream::from_records(&recs, None)?;
        let out = workflow::relabel(
            &stream,
            method.into(),
            engine.classifier.as_ref(),
            &engine.config.pipeline(),
            &engine.config.baselines(),
        )?;
        let labels = stream.labels_in_record_order(&out.labels);
        if n > 0 {
            std::slice::from_raw_parts_mut(out_labels, n).copy_from_slice(&labels);
        }
        Ok(())
    })
}

/// Posit accuracy of `predicted` (one track id per record) against the
/// records' ground-truth ids.
///
/// # Safety
/// `records` and `predicted` must each point to `n` elements; `out_accuracy`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ais_posit_accuracy(
    records: *const AisRecord,
    predicted: *const u64,
    n: usize,
    exclude_endpoints: bool,
    out_accuracy: *mut f64,
) -> AisStatus {
    guard(|| {
        if out_accuracy.is_null() {
            return Err(null("out_accuracy"));
        }
        let recs = records_arg(records, n)?;
        let pred: &[u64] = if n == 0 {
            &[]
        } else if predicted.is_null() {
            return Err(null("predicted"));
        } else {
            std::slice::from_raw_parts(predicted, n)
        };
        let stream = Stream::from_records(&recs, None)?;
        let pred_sorted: Vec<u64> = stream.order.iter().map(|i| pred[*i]).collect();
        let truth = stream.require_truth()?;
        let score = ais_relabel::evaluation::posit_accuracy(
            &stream.keys(),
            &pred_sorted,
            truth,
            ScoreOptions { exclude_endpoints },
        )?;
        *out_accuracy = score.accuracy;
        Ok(())
    })
}

/// Projects a geodetic position into its standard UTM zone.
///
/// # Safety
/// All output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn ais_to_utm(
    lat: f64,
    lon: f64,
    out_x: *mut f64,
    out_y: *mut f64,
    out_zone: *mut u8,
    out_north: *mut bool,
) -> AisStatus {
    guard(|| {
        if out_x.is_null() || out_y.is_null() || out_zone.is_null() || out_north.is_null() {
            return Err(null("output pointer"));
        }
        let (x, y, zone) = ais_relabel::utm::to_utm(lat, lon)?;
        *out_x = x;
        *out_y = y;
        *out_zone = zone.number;
        *out_north = zone.north;
        Ok(())
    })
}

/// Wraps an angle in radians into (-pi, pi].
#[no_mangle]
pub extern "C" fn ais_wrap_course(angle: f64) -> f64 {
    wrap_course(angle)
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the full message length excluding the NUL.
/// Returns 0 when the last call succeeded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ais_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ais_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
