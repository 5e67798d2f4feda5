use std::ffi::{CStr, CString};
use std::ptr;

use faithtune::encoder::{EncoderParams, Vocab};
use faithtune_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ft_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn cosine_and_loss_match_the_library() {
    let x = [1.0, 2.0, 3.0];
    let y = [3.0, -1.0, 0.5];
    let mut out = 0.0;
    let st = unsafe { ft_cosine_sim(x.as_ptr(), y.as_ptr(), 3, 1e-12, &mut out) };
    assert_eq!(st, FtStatus::Ok);
    let naive = (3.0 - 2.0 + 1.5) / ((14.0f64).sqrt() * (10.25f64).sqrt());
    assert!((out - naive).abs() < 1e-15);

    // Equal scores for all four candidates give ln 4.
    let a = [1.0, 0.0];
    let negs = [1.0, 0.0, 2.0, 0.0, 0.5, 0.0];
    let st = unsafe { ft_infonce_loss(a.as_ptr(), a.as_ptr(), negs.as_ptr(), 3, 2, 0.05, &mut out) };
    assert_eq!(st, FtStatus::Ok);
    assert!((out - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn errors_set_status_and_message() {
    let x = [1.0, 2.0];
    let mut out = 0.0;
    let st = unsafe { ft_cosine_sim(x.as_ptr(), ptr::null(), 2, 1e-12, &mut out) };
    assert_eq!(st, FtStatus::NullPointer);
    assert!(last_error().contains("y is null"));

    let st = unsafe { ft_infonce_loss(x.as_ptr(), x.as_ptr(), x.as_ptr(), 1, 2, 0.0, &mut out) };
    assert_eq!(st, FtStatus::Config);
    assert!(last_error().contains("temperature"));

    let st = unsafe { ft_infonce_loss(x.as_ptr(), x.as_ptr(), x.as_ptr(), 0, 2, 0.1, &mut out) };
    assert_eq!(st, FtStatus::Contract);

    // A successful call clears the message.
    let st = unsafe { ft_cosine_sim(x.as_ptr(), x.as_ptr(), 2, 1e-12, &mut out) };
    assert_eq!(st, FtStatus::Ok);
    assert!(ft_last_error_message().is_null());
}

#[test]
fn memorization_ratio_reports_undefined() {
    let (mut mr, mut defined) = (0.0, -1);
    assert_eq!(unsafe { ft_memorization_ratio(39.93, 47.63, &mut mr, &mut defined) }, FtStatus::Ok);
    assert_eq!(defined, 1);
    assert!((mr - 0.544).abs() < 0.001);
    assert_eq!(unsafe { ft_memorization_ratio(0.0, 0.0, &mut mr, &mut defined) }, FtStatus::Ok);
    assert_eq!(defined, 0);
    assert!(mr.is_nan());
    assert_eq!(unsafe { ft_memorization_ratio(-1.0, 0.0, &mut mr, &mut defined) }, FtStatus::Contract);
}

#[test]
fn judge_classifies_answers() {
    let ctx = c("The bridge opened in 1932 after four years of work.");
    let q = c("When did the bridge open?");
    let (ca, pa) = (c("1932"), c("1930"));
    let mut j = FtJudgment::Other;
    let call = |ans: &CString, j: &mut FtJudgment| unsafe {
        ft_judge(ctx.as_ptr(), q.as_ptr(), ca.as_ptr(), pa.as_ptr(), ans.as_ptr(), j)
    };
    assert_eq!(call(&c("In 1932."), &mut j), FtStatus::Ok);
    assert_eq!(j, FtJudgment::Contextual);
    assert_eq!(call(&c("1930"), &mut j), FtStatus::Ok);
    assert_eq!(j, FtJudgment::Parametric);
    assert_eq!(call(&c("never"), &mut j), FtStatus::Ok);
    assert_eq!(j, FtJudgment::Other);

    let raw = [0xffu8, 0xfe, 0];
    let st = unsafe {
        ft_judge(ctx.as_ptr(), q.as_ptr(), ca.as_ptr(), pa.as_ptr(), raw.as_ptr().cast(), &mut j)
    };
    assert_eq!(st, FtStatus::InvalidUtf8);

    let st = unsafe { ft_judge(ctx.as_ptr(), q.as_ptr(), ca.as_ptr(), ca.as_ptr(), ca.as_ptr(), &mut j) };
    assert_eq!(st, FtStatus::Validation);
}

#[test]
fn encoder_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("enc.json");
    let vocab = Vocab::from_tokens(["the", "bridge", "opened", "in", "1932"].map(String::from));
    let params = EncoderParams::init(vocab, 8, 64, 3).unwrap();
    params.save(&path).unwrap();
    let expected = params.encode("the bridge opened", "when", "in 1932").unwrap();

    let mut enc: *mut FtEncoder = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { ft_encoder_load(p.as_ptr(), &mut enc) }, FtStatus::Ok);
    assert!(!enc.is_null());
    let mut dim = 0usize;
    assert_eq!(unsafe { ft_encoder_dim(enc, &mut dim) }, FtStatus::Ok);
    assert_eq!(dim, 8);

    let mut h = vec![0.0; dim];
    let (ctx, q, a) = (c("the bridge opened"), c("when"), c("in 1932"));
    let st = unsafe { ft_encoder_encode(enc, ctx.as_ptr(), q.as_ptr(), a.as_ptr(), h.as_mut_ptr(), dim) };
    assert_eq!(st, FtStatus::Ok);
    assert_eq!(h.as_slice(), expected.as_slice());

    let st = unsafe { ft_encoder_encode(enc, ctx.as_ptr(), q.as_ptr(), a.as_ptr(), h.as_mut_ptr(), dim - 1) };
    assert_eq!(st, FtStatus::Contract);
    unsafe { ft_encoder_free(enc) };
    unsafe { ft_encoder_free(ptr::null_mut()) };

    let missing = c(dir.path().join("nope.json").to_str().unwrap());
    let mut none: *mut FtEncoder = ptr::null_mut();
    assert_eq!(unsafe { ft_encoder_load(missing.as_ptr(), &mut none) }, FtStatus::Io);
    assert!(none.is_null());
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/faithtune.h")).unwrap();
    for name in [
        "ft_last_error_message",
        "ft_encoder_load",
        "ft_encoder_free",
        "ft_encoder_dim",
        "ft_encoder_encode",
        "ft_cosine_sim",
        "ft_infonce_loss",
        "ft_memorization_ratio",
        "ft_judge",
        "typedef struct FtEncoder FtEncoder",
        "FT_STATUS_TRANSPORT = 8",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
