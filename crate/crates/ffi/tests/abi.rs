use std::ffi::{CStr, CString};
use std::ptr;

use bubbly::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bubbly_last_error_message()) }.to_string_lossy().into_owned()
}

fn small_config() -> *mut BubblyConfig {
    let toml = CString::new("deltas = [0.1, 0.05, 0.025]\n[times]\nt_end = 5.0\nsample_step = 0.1\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { bubbly_config_from_toml(toml.as_ptr(), &mut cfg) }, BubblyStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn cloud_round_trip_through_handles() {
    let cfg = small_config();
    let mut cloud = ptr::null_mut();
    unsafe {
        assert_eq!(bubbly_cloud_generate(cfg, 0.05, &mut cloud), BubblyStatus::Ok);
        let n = bubbly_cloud_len(cloud);
        assert!(n > 0);
        let mut xyz = vec![0.0; 3 * n];
        assert_eq!(bubbly_cloud_centers(cloud, xyz.as_mut_ptr(), xyz.len()), BubblyStatus::Ok);
        assert!(xyz.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(bubbly_cloud_centers(cloud, xyz.as_mut_ptr(), 2), BubblyStatus::InvalidInput);
        assert!(last_error().contains("needed"));
        bubbly_cloud_free(cloud);
        bubbly_config_free(cfg);
    }
}

#[test]
fn comparison_through_handles() {
    let cfg = small_config();
    let mut cmp = ptr::null_mut();
    unsafe {
        assert_eq!(bubbly_run_comparison(cfg, &mut cmp), BubblyStatus::Ok);
        assert_eq!(bubbly_comparison_len(cmp), 3);
        let mut e = std::mem::zeroed::<BubblyEntry>();
        assert_eq!(bubbly_comparison_entry(cmp, 0, &mut e), BubblyStatus::Ok);
        assert_eq!(e.delta, 0.1);
        assert!(e.e_max > 0.0 && e.m > 0);
        assert_eq!(bubbly_comparison_entry(cmp, 3, &mut e), BubblyStatus::InvalidInput);
        let (mut slope, mut intercept) = (0.0, 0.0);
        assert_eq!(bubbly_comparison_fit(cmp, &mut slope, &mut intercept), BubblyStatus::Ok);
        assert!(slope.is_finite());
        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(bubbly_comparison_write(cmp, path.as_ptr()), BubblyStatus::Ok);
        assert!(dir.path().join("errors.csv").exists());
        bubbly_comparison_free(cmp);
        bubbly_config_free(cfg);
    }
}

#[test]
fn trajectories_and_scattered_field() {
    let cfg = small_config();
    let mut traj = ptr::null_mut();
    unsafe {
        assert_eq!(bubbly_solve_bubbles(cfg, 0.1, &mut traj), BubblyStatus::Ok);
        assert!(bubbly_trajectories_len(traj) > 0);
        let mut y = f64::NAN;
        assert_eq!(bubbly_trajectories_y(traj, 0, 0.0, &mut y), BubblyStatus::Ok);
        assert_eq!(y, 0.0);
        let far = [3.0, 0.5, 0.5];
        let mut u = f64::NAN;
        assert_eq!(bubbly_trajectories_scattered(traj, far.as_ptr(), 4.9, &mut u), BubblyStatus::Ok);
        assert!(u.is_finite() && u != 0.0);
        let inside = [0.5, 0.5, 0.5];
        assert_ne!(bubbly_trajectories_scattered(traj, inside.as_ptr(), 4.0, &mut u), BubblyStatus::Ok);
        assert_eq!(bubbly_trajectories_y(traj, usize::MAX, 1.0, &mut y), BubblyStatus::InvalidInput);
        bubbly_trajectories_free(traj);
        bubbly_config_free(cfg);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        let bad = CString::new("deltas = [0.001, 0.002]").unwrap();
        assert_eq!(bubbly_config_from_toml(bad.as_ptr(), &mut cfg), BubblyStatus::InvalidConfig);
        assert!(cfg.is_null());
        assert!(last_error().contains("decreasing"));

        assert_eq!(bubbly_config_from_toml(ptr::null(), &mut cfg), BubblyStatus::NullPointer);
        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(bubbly_config_from_toml(invalid.as_ptr().cast(), &mut cfg), BubblyStatus::InvalidUtf8);

        let missing = CString::new("/nonexistent/bubbly.toml").unwrap();
        assert_eq!(bubbly_config_load(missing.as_ptr(), &mut cfg), BubblyStatus::Io);

        let cfg = bubbly_config_new();
        let bad_deltas = [0.1, 0.2];
        assert_eq!(bubbly_config_set_deltas(cfg, bad_deltas.as_ptr(), 2), BubblyStatus::InvalidConfig);
        assert_eq!(bubbly_config_set_t_end(cfg, -1.0), BubblyStatus::InvalidConfig);
        assert_eq!(bubbly_config_set_seed(ptr::null_mut(), 1), BubblyStatus::NullPointer);
        // Bubbles too large for their cells.
        let mut cloud = ptr::null_mut();
        assert_eq!(bubbly_cloud_generate(cfg, 0.9, &mut cloud), BubblyStatus::Infeasible);

        let mut cmp = ptr::null_mut();
        let one = [0.1];
        assert_eq!(bubbly_config_set_deltas(cfg, one.as_ptr(), 1), BubblyStatus::Ok);
        assert_eq!(bubbly_config_set_t_end(cfg, 3.0), BubblyStatus::Ok);
        assert_eq!(bubbly_run_comparison(cfg, &mut cmp), BubblyStatus::Ok);
        let (mut s, mut i) = (0.0, 0.0);
        assert_eq!(bubbly_comparison_fit(cmp, &mut s, &mut i), BubblyStatus::Unavailable);
        bubbly_comparison_free(cmp);
        bubbly_config_free(cfg);

        // Null handles are accepted by the destructors and length queries.
        bubbly_config_free(ptr::null_mut());
        bubbly_cloud_free(ptr::null_mut());
        assert_eq!(bubbly_cloud_len(ptr::null()), 0);
    }
}

#[test]
fn status_names_are_distinct() {
    let all = [
        BubblyStatus::Ok,
        BubblyStatus::NullPointer,
        BubblyStatus::InvalidUtf8,
        BubblyStatus::InvalidConfig,
        BubblyStatus::InvalidInput,
        BubblyStatus::Infeasible,
        BubblyStatus::SolverFailure,
        BubblyStatus::Io,
        BubblyStatus::Unavailable,
        BubblyStatus::Panic,
    ];
    let names: std::collections::HashSet<String> = all
        .iter()
        .map(|s| unsafe { CStr::from_ptr(bubbly_status_name(*s)) }.to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), all.len());
    assert_eq!(BubblyStatus::Ok as i32, 0);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/bubbly.h")).unwrap();
    let source = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(header.contains("typedef struct BubblyConfig BubblyConfig;"));
}

#[test]
fn c_program_links_against_static_library() {
    use std::path::PathBuf;
    use std::process::Command;
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libbubbly.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4, "{text}");
    assert!(lines[0].starts_with("0.1 "));
    assert_eq!(lines[3], "null pointer");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
