use std::ffi::{CStr, CString};
use std::ptr;

use memsd_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(memsd_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn preset(name: &str) -> *mut MemsdDevice {
    let name = CString::new(name).unwrap();
    let mut d = ptr::null_mut();
    let s = unsafe { memsd_device_from_preset(name.as_ptr(), &mut d) };
    assert_eq!(s, MemsdStatus::Ok, "{}", last_error());
    assert!(!d.is_null());
    d
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(memsd_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn preset_frequencies_and_pull_in() {
    let d = preset("beam-1MHz");
    let mut f = 0.0;
    unsafe {
        assert_eq!(memsd_device_natural_frequency(d, 1, &mut f), MemsdStatus::Ok);
        assert!((f - 1e6).abs() / 1e6 < 5e-3, "{f}");
        let mut fe = 0.0;
        assert_eq!(memsd_device_fem_frequency(d, 32, &mut fe), MemsdStatus::Ok);
        assert!((fe - f).abs() / f < 1e-3);
        let mut f2 = 0.0;
        assert_eq!(memsd_device_natural_frequency(d, 2, &mut f2), MemsdStatus::Ok);
        assert!((f2 / f - 6.267).abs() < 0.01);

        let (mut vin, mut vout) = (0.0, 0.0);
        assert_eq!(
            memsd_device_pull_in_voltage(d, MemsdPort::Input, &mut vin),
            MemsdStatus::Ok
        );
        assert_eq!(
            memsd_device_pull_in_voltage(d, MemsdPort::Output, &mut vout),
            MemsdStatus::Ok
        );
        assert!(vin > 10.0 && vout > 10.0);
        memsd_device_free(d);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut d = ptr::null_mut();
    let bad = CString::new("beam-2MHz").unwrap();
    unsafe {
        assert_eq!(
            memsd_device_from_preset(bad.as_ptr(), &mut d),
            MemsdStatus::UnknownPreset
        );
        assert!(d.is_null());
        assert!(last_error().contains("beam-2MHz"));

        assert_eq!(memsd_device_from_preset(ptr::null(), &mut d), MemsdStatus::NullPointer);
        assert_eq!(
            memsd_device_from_preset(bad.as_ptr(), ptr::null_mut()),
            MemsdStatus::NullPointer
        );

        let json = CString::new("{\"beam\": 1}").unwrap();
        assert_eq!(
            memsd_device_from_json(json.as_ptr(), &mut d),
            MemsdStatus::InvalidArgument
        );

        let not_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            memsd_device_from_preset(not_utf8.as_ptr().cast(), &mut d),
            MemsdStatus::InvalidUtf8
        );

        let mut f = 0.0;
        assert_eq!(
            memsd_device_natural_frequency(ptr::null(), 1, &mut f),
            MemsdStatus::NullPointer
        );
        let dev = preset("beam-455kHz");
        assert_eq!(
            memsd_device_natural_frequency(dev, 0, &mut f),
            MemsdStatus::InvalidArgument
        );
        assert_eq!(memsd_device_natural_frequency(dev, 1, &mut f), MemsdStatus::Ok);
        assert_eq!(last_error(), "");

        let mut r = MemsdDoublingResult::default();
        assert_eq!(
            memsd_device_double(dev, 10.0, 5.0, 0.0, 1000, &mut r),
            MemsdStatus::InvalidArgument
        );
        assert_eq!(
            memsd_device_double(dev, 10.0, 300.0, 0.0, 0, &mut r),
            MemsdStatus::Overclosure
        );
        assert!(last_error().contains("v_amp"));
        memsd_device_free(dev);
        memsd_device_free(ptr::null_mut());
        memsd_sweep_free(ptr::null_mut());
        assert_eq!(memsd_sweep_len(ptr::null()), 0);
    }
}

#[test]
fn json_device_round_trip() {
    let cfg = memsd::device::preset("beam-455kHz").unwrap();
    let json = CString::new(cfg.to_json()).unwrap();
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(
            memsd_device_from_json(json.as_ptr(), &mut d),
            MemsdStatus::Ok,
            "{}",
            last_error()
        );
        let mut f = 0.0;
        memsd_device_natural_frequency(d, 1, &mut f);
        assert!((f - 455e3).abs() / 455e3 < 5e-3);
        memsd_device_free(d);
    }
}

#[test]
fn doubling_locks_to_the_resonance() {
    let d = preset("beam-455kHz");
    let mut r = MemsdDoublingResult::default();
    unsafe {
        assert_eq!(
            memsd_device_double(d, 10.0, 5.0, 0.0, 0, &mut r),
            MemsdStatus::Ok,
            "{}",
            last_error()
        );
        let mut f1 = 0.0;
        memsd_device_natural_frequency(d, 1, &mut f1);
        assert!((r.dominant_frequency - 2.0 * r.f_in).abs() <= r.bin_width);
        assert!((r.f_in - 0.5 * f1).abs() < 1e-6);
        assert!(r.fundamental_db <= -40.0, "{}", r.fundamental_db);
        assert!(r.output_amplitude > 0.0);
        memsd_device_free(d);
    }
}

#[test]
fn sweep_handle_accessors() {
    let d = preset("beam-1MHz");
    let mut s = ptr::null_mut();
    unsafe {
        let mut f1 = 0.0;
        memsd_device_natural_frequency(d, 1, &mut f1);
        let st = memsd_device_sweep(d, 10.0, 0.5, 0.9 * f1, 1.1 * f1, 41, MemsdSpacing::Linear, &mut s);
        assert_eq!(st, MemsdStatus::Ok, "{}", last_error());
        let n = memsd_sweep_len(s);
        assert_eq!(n, 41);

        let mut freq = vec![0.0; n];
        let mut amp = vec![0.0; n];
        assert_eq!(
            memsd_sweep_copy(
                s,
                freq.as_mut_ptr(),
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
                n - 1
            ),
            MemsdStatus::BufferTooSmall
        );
        assert_eq!(
            memsd_sweep_copy(
                s,
                freq.as_mut_ptr(),
                amp.as_mut_ptr(),
                ptr::null_mut(),
                ptr::null_mut(),
                n
            ),
            MemsdStatus::Ok
        );
        assert!((freq[0] - 0.9 * f1).abs() < 1e-6 && (freq[n - 1] - 1.1 * f1).abs() < 1e-3);
        assert!(amp.iter().all(|a| *a > 0.0));
        assert_eq!(memsd_sweep_unsettled(s), 0);

        let mut fit = MemsdResonanceFit::default();
        assert_eq!(memsd_sweep_fit(s, &mut fit), MemsdStatus::Ok, "{}", last_error());
        assert!((memsd::device::quality_from_zeta(fit.zeta) / fit.q - 1.0).abs() < 1e-12);
        let step = freq[1] - freq[0];
        let imax = amp.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((fit.peak_frequency - freq[imax]).abs() <= step);
        memsd_sweep_free(s);
        memsd_device_free(d);
    }
}

#[test]
fn header_is_current_and_compiles_in_c() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/memsd.h")).unwrap();
    for f in [
        "memsd_device_from_preset",
        "memsd_device_double",
        "memsd_sweep_copy",
        "memsd_last_error_message",
        "MEMSD_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(f), "{f} missing from header");
    }

    // Link a C program against the static library when a compiler is around.
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let staticlib = lib_dir.join("libmemsd_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !staticlib.exists() || std::process::Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping C link check (no {cc} or {})", staticlib.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("probe.c");
    std::fs::write(&src, C_PROBE).unwrap();
    let bin = tmp.path().join("probe");
    let out = std::process::Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&staticlib)
        .args(["-lm", "-lpthread", "-ldl"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = std::process::Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("unknown preset"), "{stdout}");
}

const C_PROBE: &str = r#"
#include <stdio.h>
#include <math.h>
#include "memsd.h"

int main(void) {
    MemsdDevice *d = NULL;
    if (memsd_device_from_preset("beam-1MHz", &d) != MEMSD_STATUS_OK) return 1;
    double f = 0.0, vpi = 0.0;
    if (memsd_device_natural_frequency(d, 1, &f) != MEMSD_STATUS_OK) return 2;
    if (fabs(f - 1e6) > 5e3) return 3;
    if (memsd_device_pull_in_voltage(d, MEMSD_PORT_OUTPUT, &vpi) != MEMSD_STATUS_OK) return 4;
    memsd_device_free(d);

    MemsdDevice *bad = NULL;
    if (memsd_device_from_preset("nope", &bad) != MEMSD_STATUS_UNKNOWN_PRESET || bad) return 5;
    printf("%s\n", memsd_last_error_message());
    printf("f1 %.1f Hz, pull-in %.2f V, version %s\n", f, vpi, memsd_version());
    return 0;
}
"#;
