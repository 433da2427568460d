use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use volterra_heston_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe { vh_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn params() -> VhParams {
    VhParams {
        lambda: 2.0,
        nu: 0.3,
        rho: -0.7,
        s0: 1.0,
    }
}

#[test]
fn kernel_and_curve_handles() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(vh_kernel_fractional(1.0, 0.6, &mut k), VhStatus::Ok);
        let mut v = 0.0;
        assert_eq!(vh_kernel_value(k, 1.0, &mut v), VhStatus::Ok);
        assert!((v - 1.0 / gamma_at_0_6()).abs() < 1e-14);
        assert_eq!(vh_kernel_value(k, 0.0, &mut v), VhStatus::Domain);
        assert!(last_error().contains("domain"));

        let mut g = ptr::null_mut();
        assert_eq!(vh_curve_classical(0.04, 0.0, 0.3, k, &mut g), VhStatus::Ok);
        assert_eq!(vh_curve_eval(g, 0.7, &mut v), VhStatus::Ok);
        assert_eq!(v, 0.04);
        vh_curve_free(g);
        vh_kernel_free(k);
    }
}

fn gamma_at_0_6() -> f64 {
    // Γ(0.6)
    1.489_192_248_812_817
}

#[test]
fn bad_arguments_map_to_codes() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(vh_kernel_fractional(1.0, 0.4, &mut k), VhStatus::Domain);
        assert!(k.is_null());
        assert_eq!(
            vh_kernel_fractional(1.0, 0.6, ptr::null_mut()),
            VhStatus::NullPointer
        );
        assert!(last_error().contains("null"));
        assert_eq!(
            vh_kernel_expsum(ptr::null(), ptr::null(), 2, &mut k),
            VhStatus::NullPointer
        );
        let mut v = 0.0;
        assert_eq!(
            vh_curve_eval(ptr::null(), 1.0, &mut v),
            VhStatus::NullPointer
        );
        vh_kernel_free(ptr::null_mut());
        vh_curve_free(ptr::null_mut());
        vh_pricer_free(ptr::null_mut());
        vh_pathset_free(ptr::null_mut());
    }
}

#[test]
fn admissibility_through_the_abi() {
    unsafe {
        let mut k = ptr::null_mut();
        assert_eq!(vh_kernel_fractional(1.0, 0.6, &mut k), VhStatus::Ok);
        let t = [0.0, 1.0];
        let bad = [-0.01, 0.04];
        let mut g = ptr::null_mut();
        assert_eq!(
            vh_curve_tabulated(t.as_ptr(), bad.as_ptr(), 2, &mut g),
            VhStatus::Ok
        );
        let (mut pass, mut worst) = (true, 0.0);
        assert_eq!(
            vh_curve_check(g, k, 0.01, 1.0, -1.0, &mut pass, &mut worst),
            VhStatus::Ok
        );
        assert!(!pass);
        assert!(worst <= -0.01);
        vh_curve_free(g);
        vh_kernel_free(k);
    }
}

#[test]
fn charfn_parity_and_paths() {
    unsafe {
        let w = [1.0];
        let r = [0.0];
        let mut k = ptr::null_mut();
        assert_eq!(
            vh_kernel_expsum(w.as_ptr(), r.as_ptr(), 1, &mut k),
            VhStatus::Ok
        );
        let mut g = ptr::null_mut();
        assert_eq!(vh_curve_flat(0.04, &mut g), VhStatus::Ok);
        let p = params();
        let (mut re, mut im) = (0.0, 0.0);
        assert_eq!(
            vh_charfn(k, &p, g, 0.01, 1.0, 1.0, &mut re, &mut im),
            VhStatus::Ok
        );
        assert!(re * re + im * im <= 1.0);

        let strikes = [0.9, 1.0, 1.1];
        let mut pr = ptr::null_mut();
        assert_eq!(
            vh_pricer_new(k, &p, g, 0.01, 1.0, strikes.as_ptr(), 3, -1.0, &mut pr),
            VhStatus::Ok
        );
        for s in strikes {
            let (mut c, mut q) = (0.0, 0.0);
            assert_eq!(vh_pricer_call(pr, s, &mut c), VhStatus::Ok);
            assert_eq!(vh_pricer_put(pr, s, &mut q), VhStatus::Ok);
            assert!((c - q - (1.0 - s)).abs() < 1e-10);
        }
        vh_pricer_free(pr);

        let mut ps = ptr::null_mut();
        assert_eq!(
            vh_simulate(k, &p, g, 0.01, 1.0, 8, 5, &mut ps),
            VhStatus::Ok
        );
        let (mut n, mut m) = (0, 0);
        assert_eq!(vh_pathset_dims(ps, &mut n, &mut m), VhStatus::Ok);
        assert_eq!((n, m), (8, 100));
        let (mut v, mut x) = (0.0, 0.0);
        assert_eq!(vh_pathset_value(ps, 3, 0, &mut v, &mut x), VhStatus::Ok);
        assert_eq!((v, x), (0.04, 0.0));
        assert_eq!(vh_pathset_value(ps, 8, 0, &mut v, &mut x), VhStatus::Domain);
        let file = tempfile::NamedTempFile::new().unwrap();
        let path = std::ffi::CString::new(file.path().to_str().unwrap()).unwrap();
        assert_eq!(vh_pathset_write(ps, path.as_ptr()), VhStatus::Ok);
        let bytes = std::fs::read(file.path()).unwrap();
        assert_eq!(&bytes[..4], b"VHPS");
        assert_eq!(bytes.len(), 32 + 16 * 8 * 101);
        vh_pathset_free(ps);
        vh_curve_free(g);
        vh_kernel_free(k);
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(vh_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("libvolterra_heston_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!(
            "skipping: no C compiler or static library at {}",
            lib.display()
        );
        return;
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
