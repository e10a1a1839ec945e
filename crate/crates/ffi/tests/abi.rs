use std::ffi::{c_char, CString};
use std::process::Command;
use std::ptr;

use spectral_ada_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let needed = unsafe { sda_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(needed > 0);
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn image(h: usize, w: usize, c: usize, data: &[f64]) -> *mut SdaImage {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { sda_image_new(h, w, c, data.as_ptr(), &mut out) }, SdaStatus::Ok);
    out
}

#[test]
fn constant_images_swap_their_dc_term() {
    let src = image(4, 4, 1, &[0.25; 16]);
    let tgt = image(4, 4, 1, &[0.75; 16]);
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(sda_fda_transfer(src, tgt, 0.25, &mut out), SdaStatus::Ok);
        let (mut h, mut w, mut c) = (0, 0, 0);
        assert_eq!(sda_image_shape(out, &mut h, &mut w, &mut c), SdaStatus::Ok);
        assert_eq!((h, w, c), (4, 4, 1));
        let mut data = [0.0; 16];
        assert_eq!(sda_image_copy_data(out, data.as_mut_ptr(), 16), SdaStatus::Ok);
        assert!(data.iter().all(|v| (v - 0.75).abs() < 1e-12));
        assert_eq!(sda_image_copy_data(out, data.as_mut_ptr(), 3), SdaStatus::BufferTooSmall);
        sda_image_free(out);
        sda_image_free(src);
        sda_image_free(tgt);
    }
}

#[test]
fn shape_mismatch_is_an_invariant_violation() {
    let src = image(4, 4, 1, &[0.0; 16]);
    let tgt = image(2, 8, 1, &[0.0; 16]);
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(sda_fda_transfer(src, tgt, 0.1, &mut out), SdaStatus::InvariantViolation);
        assert!(out.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(sda_fda_transfer(src, ptr::null(), 0.1, &mut out), SdaStatus::NullPointer);
        assert!(last_error().contains("null"));
        sda_image_free(src);
        sda_image_free(tgt);
    }
}

#[test]
fn mask_counts_bins() {
    let mut bits = vec![0u8; 16 * 16];
    let mut count = 0;
    unsafe {
        assert_eq!(sda_low_freq_mask(16, 16, 0.25, bits.as_mut_ptr(), bits.len(), &mut count), SdaStatus::Ok);
        assert_eq!(sda_low_freq_mask(16, 16, 1.0, bits.as_mut_ptr(), bits.len(), &mut count), SdaStatus::InvariantViolation);
    }
    assert_eq!(count, 81);
    assert_eq!(bits.iter().map(|&b| b as usize).sum::<usize>(), 81);
}

#[test]
fn head_round_trips_through_a_file() {
    let weights = [1.0, 0.0, 0.0, 1.0, -1.0, -1.0];
    let bias = [0.0, 0.5, 0.0];
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("h.sdmh").to_str().unwrap()).unwrap();
    let mut head = ptr::null_mut();
    let mut loaded = ptr::null_mut();
    let f = [2.0, 1.0];
    let mut z = [0.0; 3];
    unsafe {
        assert_eq!(sda_head_new(3, 2, weights.as_ptr(), bias.as_ptr(), &mut head), SdaStatus::Ok);
        assert_eq!(sda_head_save(head, path.as_ptr()), SdaStatus::Ok);
        assert_eq!(sda_head_load(path.as_ptr(), &mut loaded), SdaStatus::Ok);
        let (mut k, mut d) = (0, 0);
        assert_eq!(sda_head_shape(loaded, &mut k, &mut d), SdaStatus::Ok);
        assert_eq!((k, d), (3, 2));
        assert_eq!(sda_head_logits(loaded, f.as_ptr(), 2, z.as_mut_ptr(), 3), SdaStatus::Ok);
        assert_eq!(sda_head_logits(loaded, f.as_ptr(), 1, z.as_mut_ptr(), 3), SdaStatus::InvariantViolation);
        sda_head_free(head);
        sda_head_free(loaded);
    }
    assert_eq!(z, [2.0, 1.5, -3.0]);
}

#[test]
fn garbage_head_file_is_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.sdmh");
    std::fs::write(&file, b"NOPE\x01\x00\x00\x00").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut head = ptr::null_mut();
    assert_eq!(unsafe { sda_head_load(path.as_ptr(), &mut head) }, SdaStatus::MalformedInput);
    assert!(last_error().to_lowercase().contains("magic"));
    let missing = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { sda_head_load(missing.as_ptr(), &mut head) }, SdaStatus::Io);
}

#[test]
fn margin_and_query_scores() {
    let mut m = 0.0;
    unsafe {
        assert_eq!(sda_margin_score([0.0, 0.0].as_ptr(), 2, &mut m), SdaStatus::Ok);
        assert!((m - 1.0).abs() < 1e-12);
        assert_eq!(sda_margin_score([1.0].as_ptr(), 1, &mut m), SdaStatus::InvariantViolation);
        assert_eq!(sda_margin_score([1.0, f64::NAN].as_ptr(), 2, &mut m), SdaStatus::InvariantViolation);
    }
    let mut head = ptr::null_mut();
    let mut record = SdaQueryRecord::default();
    unsafe {
        sda_head_new(2, 2, [1.0, 0.0, 0.0, 1.0].as_ptr(), [0.0, 0.0].as_ptr(), &mut head);
        assert_eq!(sda_query_score(head, [0.3, 0.1].as_ptr(), 2, 1.0, 0.0, &mut record), SdaStatus::Ok);
        assert_eq!(record.q_value, record.margin_score);
        assert_eq!(sda_query_score(head, [0.3, 0.1].as_ptr(), 2, 0.0, 0.0, &mut record), SdaStatus::InvariantViolation);
        sda_head_free(head);
    }
}

#[test]
fn ece_matches_the_two_sample_example() {
    let mut e = 0.0;
    unsafe {
        let status = sda_ece([0.95, 0.95].as_ptr(), [1, 0].as_ptr(), [1, 1].as_ptr(), 2, 10, &mut e);
        assert_eq!(status, SdaStatus::Ok);
    }
    assert!((e - 0.45).abs() <= f64::EPSILON);
}

#[test]
fn image_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("x.pgm").to_str().unwrap()).unwrap();
    let src = image(1, 2, 1, &[-0.5, 1.0]);
    let mut back = ptr::null_mut();
    let mut data = [9.0; 2];
    unsafe {
        assert_eq!(sda_image_write(src, path.as_ptr()), SdaStatus::Ok);
        assert_eq!(sda_image_read(path.as_ptr(), &mut back), SdaStatus::Ok);
        sda_image_copy_data(back, data.as_mut_ptr(), 2);
        sda_image_free(src);
        sda_image_free(back);
    }
    assert_eq!(data, [0.0, 1.0]);
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header_path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/spectral_ada.h");
    let header = std::fs::read_to_string(header_path).unwrap();
    for name in [
        "sda_last_error_message",
        "sda_image_new",
        "sda_image_read",
        "sda_image_write",
        "sda_image_shape",
        "sda_image_copy_data",
        "sda_image_free",
        "sda_fda_transfer",
        "sda_low_freq_mask",
        "sda_head_new",
        "sda_head_load",
        "sda_head_save",
        "sda_head_shape",
        "sda_head_logits",
        "sda_head_free",
        "sda_margin_score",
        "sda_query_score",
        "sda_ece",
        "typedef struct SdaImage SdaImage",
        "SDA_STATUS_MALFORMED_INPUT = 2",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    match Command::new(&cc).args(["-fsyntax-only", "-x", "c", header_path]).status() {
        Ok(status) => assert!(status.success(), "header does not compile"),
        Err(_) => eprintln!("{cc} not available; skipped compile check"),
    }
}
