use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use binbrain::data::{render_synthetic, ChannelStats};
use binbrain::model::{build_mini_resnet18, save_checkpoint};
use binbrain_ffi::*;

fn last_error() -> String {
    let p = bb_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn saved_model(dir: &Path, classes: usize) -> CString {
    let mut model = build_mini_resnet18(4, 32, classes, 5).unwrap();
    model.channel_stats = Some(ChannelStats::new([0.5; 3], [0.25; 3]).unwrap());
    let path = dir.join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn load_predict_route() {
    let dir = tempfile::tempdir().unwrap();
    let path = saved_model(dir.path(), 4);
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { bb_model_load(path.as_ptr(), &mut handle) }, BbStatus::Ok);
    assert!(bb_last_error().is_null());
    assert_eq!(unsafe { bb_model_num_classes(handle) }, 4);
    assert_eq!(unsafe { bb_model_input_size(handle) }, 32);

    let image = render_synthetic(2, 0, 48, 1);
    let rgb: Vec<u8> = image.pixels().iter().flatten().copied().collect();
    let mut probs = [0.0; 4];
    let status = unsafe { bb_model_predict(handle, rgb.as_ptr(), 48, 48, probs.as_mut_ptr(), probs.len()) };
    assert_eq!(status, BbStatus::Ok);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    // same image twice gives identical output
    let mut again = [0.0; 4];
    unsafe { bb_model_predict(handle, rgb.as_ptr(), 48, 48, again.as_mut_ptr(), 4) };
    assert_eq!(probs, again);

    let mut short = [0.0; 3];
    let status = unsafe { bb_model_predict(handle, rgb.as_ptr(), 48, 48, short.as_mut_ptr(), 3) };
    assert_eq!(status, BbStatus::BufferTooSmall);

    let mut d = BbDecision { label: 7, compartment: 7, confidence: 0.0, biodegradable: 7 };
    let renorm: Vec<f64> = probs.iter().map(|p| p / probs.iter().sum::<f64>()).collect();
    assert_eq!(unsafe { bb_route(renorm.as_ptr(), 4, 0.0, &mut d) }, BbStatus::Ok);
    assert!((1..=4).contains(&d.compartment));
    assert_eq!(d.compartment as i32, d.label + 1);
    unsafe { bb_model_free(handle) };
}

#[test]
fn route_decisions() {
    let mut d = BbDecision { label: 0, compartment: 0, confidence: 0.0, biodegradable: 0 };
    let paper = [0.1, 0.1, 0.7, 0.1];
    assert_eq!(unsafe { bb_route(paper.as_ptr(), 4, 0.6, &mut d) }, BbStatus::Ok);
    assert_eq!(d, BbDecision { label: 2, compartment: 3, confidence: 0.7, biodegradable: 1 });
    let flat = [0.25; 4];
    assert_eq!(unsafe { bb_route(flat.as_ptr(), 4, 0.6, &mut d) }, BbStatus::Ok);
    assert_eq!(d, BbDecision { label: -1, compartment: 0, confidence: 0.25, biodegradable: -1 });
    let bad = [0.5, 0.6, 0.0, 0.0];
    assert_eq!(unsafe { bb_route(bad.as_ptr(), 4, 0.6, &mut d) }, BbStatus::InvalidDistribution);
    assert!(last_error().contains("sum"));
    assert_eq!(unsafe { bb_route(paper.as_ptr(), 3, 0.6, &mut d) }, BbStatus::InvalidDistribution);
    assert_eq!(unsafe { bb_route(paper.as_ptr(), 4, f64::NAN, &mut d) }, BbStatus::InvalidArgument);
}

#[test]
fn error_codes() {
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { bb_model_load(ptr::null(), &mut handle) }, BbStatus::NullPointer);
    let missing = CString::new("/nonexistent/m.ckpt").unwrap();
    assert_eq!(unsafe { bb_model_load(missing.as_ptr(), &mut handle) }, BbStatus::Io);
    assert!(last_error().contains("/nonexistent/m.ckpt"));
    assert!(handle.is_null());

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint at all").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { bb_model_load(junk.as_ptr(), &mut handle) }, BbStatus::CorruptCheckpoint);

    // the router only accepts four-class models; predict still works
    let path = saved_model(dir.path(), 3);
    assert_eq!(unsafe { bb_model_load(path.as_ptr(), &mut handle) }, BbStatus::Ok);
    let rgb = [0u8; 3 * 4];
    let mut probs = [0.0; 3];
    assert_eq!(unsafe { bb_model_predict(handle, rgb.as_ptr(), 2, 2, probs.as_mut_ptr(), 3) }, BbStatus::Ok);
    assert_eq!(unsafe { bb_model_predict(handle, rgb.as_ptr(), 0, 2, probs.as_mut_ptr(), 3) }, BbStatus::InvalidArgument);
    assert_eq!(unsafe { bb_model_predict(ptr::null(), rgb.as_ptr(), 2, 2, probs.as_mut_ptr(), 3) }, BbStatus::NullPointer);
    unsafe { bb_model_free(handle) };
    unsafe { bb_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { bb_model_num_classes(ptr::null()) }, 0);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(bb_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("binbrain.h")).unwrap();
    for f in ["bb_model_load", "bb_model_free", "bb_model_predict", "bb_route", "bb_last_error", "bb_version"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"binbrain.h\"\nint main(void) { BbModel *m = 0; BbStatus s = bb_model_load(\"x\", &m); return s == BB_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc").arg("-fsyntax-only").arg("-Wall").arg("-Werror").arg("-I").arg(&include).arg(&src).output() else {
        eprintln!("no C compiler; header syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
