use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use ais_relabel::dataio::parse_csv;
use ais_relabel_ffi::*;

fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn records() -> Vec<AisRecord> {
    parse_csv(&core_fixture("fixture100.csv"))
        .unwrap()
        .records
        .iter()
        .map(|r| AisRecord {
            point_id: r.point_id,
            track_id: r.track_id.unwrap_or(0),
            has_track_id: r.track_id.is_some(),
            time: r.time,
            lat: r.lat,
            lon: r.lon,
            sog: r.sog,
            cog: r.cog,
        })
        .collect()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { ais_last_error(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned();
    assert!(n == 0 || !s.is_empty());
    s
}

struct Engine(*mut AisEngine);

impl Engine {
    fn new(config: Option<&str>) -> Result<Self, (AisStatus, String)> {
        let c = config.map(|s| CString::new(s).unwrap());
        let mut e = ptr::null_mut();
        let status = unsafe { ais_engine_new(c.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut e) };
        if status == AisStatus::Ok {
            Ok(Engine(e))
        } else {
            Err((status, last_error()))
        }
    }

    fn relabel(&self, recs: &[AisRecord], method: AisMethod) -> Result<Vec<u64>, AisStatus> {
        let mut out = vec![0u64; recs.len()];
        match unsafe { ais_engine_relabel(self.0, recs.as_ptr(), recs.len(), method, out.as_mut_ptr()) } {
            AisStatus::Ok => Ok(out),
            s => Err(s),
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        unsafe { ais_engine_free(self.0) };
    }
}

fn accuracy(recs: &[AisRecord], labels: &[u64]) -> f64 {
    let mut acc = f64::NAN;
    assert_eq!(unsafe { ais_posit_accuracy(recs.as_ptr(), labels.as_ptr(), recs.len(), false, &mut acc) }, AisStatus::Ok);
    acc
}

#[test]
fn hybrid_relabel_through_the_c_interface() {
    let recs = records();
    let engine = Engine::new(None).unwrap();
    assert_eq!(unsafe { ais_engine_k(engine.0) }, 16);
    assert_eq!(engine.relabel(&recs, AisMethod::Hybrid), Err(AisStatus::InvalidArgument));
    assert!(last_error().contains("model"));

    let model = CString::new(core_fixture("model.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ais_engine_load_model(engine.0, model.as_ptr()) }, AisStatus::Ok);
    let labels = engine.relabel(&recs, AisMethod::Hybrid).unwrap();
    assert_eq!(labels, engine.relabel(&recs, AisMethod::Hybrid).unwrap());
    assert!((accuracy(&recs, &labels) - 0.875).abs() < 1e-12);
}

#[test]
fn baselines_and_oracle() {
    let recs = records();
    let engine = Engine::new(None).unwrap();
    let cbtr = engine.relabel(&recs, AisMethod::Cbtr).unwrap();
    assert!((accuracy(&recs, &cbtr) - 0.4).abs() < 1e-12);
    let oracle = accuracy(&recs, &engine.relabel(&recs, AisMethod::Oracle).unwrap());
    let greedy = accuracy(&recs, &engine.relabel(&recs, AisMethod::Greedy).unwrap());
    assert!(oracle >= greedy);
    for m in [AisMethod::Atd, AisMethod::KfCv, AisMethod::KfCtrv] {
        assert_eq!(engine.relabel(&recs, m).unwrap().len(), recs.len());
    }
    let truth: Vec<u64> = recs.iter().map(|r| r.track_id).collect();
    assert_eq!(accuracy(&recs, &truth), 1.0);
}

#[test]
fn oracle_without_truth_is_a_data_error() {
    let mut recs = records();
    recs[3].has_track_id = false;
    let engine = Engine::new(None).unwrap();
    assert_eq!(engine.relabel(&recs, AisMethod::Oracle), Err(AisStatus::Data));
    assert!(last_error().contains("ground-truth"));
}

#[test]
fn bad_config_and_missing_model() {
    let (status, msg) = Engine::new(Some("[screen]\nk = 0\n")).err().unwrap();
    assert_eq!(status, AisStatus::InvalidArgument);
    assert!(!msg.is_empty());
    assert_eq!(Engine::new(Some("nonsense = [")).err().unwrap().0, AisStatus::InvalidArgument);

    let engine = Engine::new(Some("[screen]\nk = 8\n")).unwrap();
    assert_eq!(unsafe { ais_engine_k(engine.0) }, 8);
    let missing = CString::new("/nonexistent/model.bin").unwrap();
    assert_eq!(unsafe { ais_engine_load_model(engine.0, missing.as_ptr()) }, AisStatus::Io);
}

#[test]
fn null_pointers_are_rejected() {
    assert_eq!(unsafe { ais_engine_new(ptr::null(), ptr::null_mut()) }, AisStatus::NullPointer);
    let recs = records();
    let mut out = vec![0u64; recs.len()];
    assert_eq!(
        unsafe { ais_engine_relabel(ptr::null(), recs.as_ptr(), recs.len(), AisMethod::Greedy, out.as_mut_ptr()) },
        AisStatus::NullPointer
    );
    assert_eq!(unsafe { ais_engine_k(ptr::null()) }, 0);
    unsafe { ais_engine_free(ptr::null_mut()) };
}

#[test]
fn last_error_truncates_and_clears() {
    assert_eq!(unsafe { ais_engine_new(ptr::null(), ptr::null_mut()) }, AisStatus::NullPointer);
    let full = unsafe { ais_last_error(ptr::null_mut(), 0) };
    assert!(full > 4);
    let mut small = [0 as c_char; 4];
    assert_eq!(unsafe { ais_last_error(small.as_mut_ptr(), small.len()) }, full);
    assert_eq!(unsafe { CStr::from_ptr(small.as_ptr()) }.to_bytes().len(), 3);

    let engine = Engine::new(None).unwrap();
    drop(engine);
    assert_eq!(unsafe { ais_last_error(ptr::null_mut(), 0) }, 0);
}

#[test]
fn geometry_helpers() {
    let (mut x, mut y, mut zone, mut north) = (0.0, 0.0, 0u8, false);
    assert_eq!(unsafe { ais_to_utm(28.03387, -96.974543, &mut x, &mut y, &mut zone, &mut north) }, AisStatus::Ok);
    assert_eq!((zone, north), (14, true));
    assert!((400_000.0..800_000.0).contains(&x) && (3.0e6..3.2e6).contains(&y));
    assert_eq!(unsafe { ais_to_utm(85.0, 0.0, &mut x, &mut y, &mut zone, &mut north) }, AisStatus::Data);

    assert_eq!(ais_wrap_course(std::f64::consts::PI), std::f64::consts::PI);
    assert!((ais_wrap_course(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
    let v = unsafe { CStr::from_ptr(ais_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ais_relabel.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["ais_engine_new", "ais_engine_relabel", "ais_posit_accuracy", "ais_last_error", "AIS_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"ais_relabel.h\"\nint main(void) { AisEngine *e = 0; return ais_engine_new(0, &e) == AIS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("skipping C syntax check, {cc} unavailable: {e}"),
    }
}
